"""Initial-access procedures: exhaustive baseline and the coordinated scheme.

Both schemes advance in rounds. Every cell holds one Rx beam for a whole
round while the UE sweeps all its Tx beams, one preamble slot per beam;
the trial ends at the first slot in which any cell's PDP peak clears the
detection threshold. The exhaustive baseline walks each cell through an
independent random Rx order. The coordinated scheme spends round one
gathering per-cell measurement reports, exchanges them over the
backhaul, estimates the UE position, and reorders every cell's remaining
Rx sweep towards the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .antenna import BeamCodebook
from .channel import LinkBudgetParams, LinkState, link_bearings, noise_power, pathloss
from .estimation import (
    EstimationError,
    MeasurementReport,
    estimate_point,
    refine_location,
)
from .geometry import ClusterGeometry, Point2D, circular_distance
from .preamble import ZcSequence, dbm_to_mw, pdp_matrix, sequence_spectrum

EXHAUSTIVE = "exhaustive"
COORDINATED = "coordinated"


@dataclass(frozen=True)
class SweepSchedule:
    """Slot bookkeeping for one round."""

    t_ra_s: float
    round_index: int
    rx_beam_assignment: tuple[int, ...]  # per-cell beam index held this round
    ue_tx_order: tuple[int, ...]


@dataclass
class BackhaulBus:
    """Trial-local report exchange between the cluster's cells."""

    latency_s: float = 0.0
    pending: list[tuple[int, MeasurementReport]] = field(default_factory=list)

    def publish(self, source_cell: int, report: MeasurementReport) -> None:
        self.pending.append((source_cell, report))

    def collect(self) -> list[MeasurementReport]:
        reports = [r for _, r in sorted(self.pending, key=lambda sr: sr[0])]
        self.pending.clear()
        return reports

    def delay_rounds(self, round_duration_s: float) -> int:
        """Whole rounds that elapse before published reports are readable."""
        if self.latency_s <= 0.0:
            return 0
        return int(math.ceil(self.latency_s / round_duration_s))


@dataclass(frozen=True)
class IaTrialOutcome:
    scheme: str
    success: bool
    slots_used: int
    ia_time_s: float
    rounds: int
    detecting_cell: int | None = None
    detecting_pair: tuple[int, int] | None = None  # (tx beam, rx beam)
    estimated_ue: Point2D | None = None

    def __post_init__(self):
        if self.success and (self.detecting_cell is None or self.detecting_pair is None):
            raise ValueError("successful outcome must name its detecting cell and pair")


@dataclass(frozen=True)
class TrialSetup:
    """Everything a single IA trial needs besides its RNG stream."""

    geom: ClusterGeometry
    ue_codebook: BeamCodebook
    sc_codebook: BeamCodebook
    link_params: LinkBudgetParams
    seq: ZcSequence
    gamma_ra: float
    link_states: tuple[LinkState, ...] | None = None
    t_ra_s: float = 1e-3
    noiseless: bool = False
    backhaul_latency_s: float = 0.0
    grid_resolution_m: float = 1.0
    model_propagation_delay: bool = False  # map distance to a PDP lag

    def states(self) -> list[LinkState]:
        if self.link_states is not None:
            if len(self.link_states) != self.geom.n_sc:
                raise ValueError("one link state per cell required")
            return list(self.link_states)
        return [LinkState(False) for _ in range(self.geom.n_sc)]


def reorder_rx_beams(codebook: BeamCodebook, estimate: Point2D,
                     cell_position: Point2D) -> tuple[int, ...]:
    """Beam indices sorted by angular distance to the bearing towards the estimate."""
    bearing = cell_position.bearing_to(estimate)
    dist = circular_distance(codebook.beam_centers, bearing)
    return tuple(int(i) for i in np.argsort(dist, kind="stable"))


def ia_time_reduction(t_new: float, t_con: float) -> float:
    """Signed IA-time change in percent; negative means the new scheme is faster."""
    if t_con <= 0.0:
        raise ValueError("baseline IA time must be positive")
    return (t_new - t_con) / t_con * 100.0


SPEED_OF_LIGHT = 299_792_458.0


class _TrialEngine:
    """Shared slot machinery: per-round link budget, synthesis, detection."""

    def __init__(self, setup: TrialSetup, rng: np.random.Generator):
        self.setup = setup
        self.rng = rng
        geom = setup.geom
        self.n_sc = geom.n_sc
        self.n_tx = setup.ue_codebook.n_beams
        self.n_rx = setup.sc_codebook.n_beams
        self.states = setup.states()

        depart, arrive = zip(*(
            link_bearings(geom, i, self.states[i]) for i in range(self.n_sc)
        ))
        # clamp at the pathloss model's 1 m reference distance
        dists = np.maximum(
            [geom.ue_position.distance_to(p) for p in geom.sc_positions], 1.0)
        penalties = np.array([s.nlos_penalty_db for s in self.states])
        ue_cb, sc_cb = setup.ue_codebook, setup.sc_codebook

        # (n_tx, n_sc) dBm map for Tx beam t towards cell i, before the Rx gain
        tx_gains = ue_cb.pattern.gain(circular_distance(
            ue_cb.beam_centers[:, None], np.asarray(depart)[None, :]))
        self._base_dbm = (setup.link_params.p_ue_dbm + tx_gains
                          - pathloss(dists)[None, :] - penalties[None, :])
        # (n_rx, n_sc) Rx gain of beam b at cell i for the arrival direction
        self._rx_gain = sc_cb.pattern.gain(circular_distance(
            sc_cb.beam_centers[:, None], np.asarray(arrive)[None, :]))

        # optional distance-to-lag mapping at the sample rate = bandwidth
        self.delay_lags = np.zeros(self.n_sc, dtype=int)
        if setup.model_propagation_delay:
            t_sample = 1.0 / setup.link_params.bandwidth_hz
            self.delay_lags = (np.rint(dists / (SPEED_OF_LIGHT * t_sample))
                               .astype(int) % setup.seq.n_zc)

        self.noise_dbm = noise_power(setup.link_params)
        self._sigma = (0.0 if setup.noiseless
                       else math.sqrt(dbm_to_mw(self.noise_dbm) / 2.0))
        self._spectrum = sequence_spectrum(setup.seq)

    def rx_power_dbm(self, rx_beams) -> np.ndarray:
        """(n_tx, n_sc) received power for this round's per-cell Rx beams."""
        gains = self._rx_gain[np.asarray(rx_beams), np.arange(self.n_sc)]
        return self._base_dbm + gains[None, :]

    def round_peaks(self, schedule: SweepSchedule) -> np.ndarray:
        """(n_tx slots, n_sc) PDP peak values for one full UE sweep."""
        n_zc = self.setup.seq.n_zc
        amp = np.sqrt(10.0 ** (self.rx_power_dbm(schedule.rx_beam_assignment) / 10.0))
        amp = amp[np.asarray(schedule.ue_tx_order), :]  # slot-major rows
        base = self.setup.seq.samples
        if self.setup.model_propagation_delay and np.any(self.delay_lags):
            shifted = np.stack([np.roll(base, -lag) for lag in self.delay_lags])
            y = amp[:, :, None] * shifted[None, :, :]
        else:
            y = amp[:, :, None] * base[None, None, :]
        if self._sigma > 0.0:
            y = y + self._sigma * (
                self.rng.standard_normal((self.n_tx, self.n_sc, n_zc))
                + 1j * self.rng.standard_normal((self.n_tx, self.n_sc, n_zc)))
        values = pdp_matrix(y, self.setup.seq, self._spectrum)
        return values.max(axis=-1)

    def first_detection(self, peaks: np.ndarray):
        """Earliest (slot, cell) whose peak clears the threshold, or None."""
        hits = peaks > self.setup.gamma_ra
        for slot in range(self.n_tx):
            cells = np.nonzero(hits[slot])[0]
            if cells.size:
                return slot, int(cells[0])
        return None

    def schedule(self, round_index: int, rx_beams) -> SweepSchedule:
        return SweepSchedule(
            t_ra_s=self.setup.t_ra_s,
            round_index=round_index,
            rx_beam_assignment=tuple(int(b) for b in rx_beams),
            ue_tx_order=self.setup.ue_codebook.sweep_order,
        )


def _finish(scheme, engine, setup, schedule, slot, cell, estimate):
    slots_used = schedule.round_index * engine.n_tx + slot + 1
    return IaTrialOutcome(
        scheme=scheme,
        success=True,
        slots_used=slots_used,
        ia_time_s=slots_used * setup.t_ra_s,
        rounds=schedule.round_index + 1,
        detecting_cell=cell,
        detecting_pair=(int(schedule.ue_tx_order[slot]),
                        schedule.rx_beam_assignment[cell]),
        estimated_ue=estimate,
    )


def _fail(scheme, setup, engine, rounds, estimate=None):
    slots_used = rounds * engine.n_tx
    return IaTrialOutcome(
        scheme=scheme,
        success=False,
        slots_used=slots_used,
        ia_time_s=slots_used * setup.t_ra_s,
        rounds=rounds,
        estimated_ue=estimate,
    )


def _sweep_orders(engine: _TrialEngine) -> list[np.ndarray]:
    """One independent random Rx order per cell (drawn identically by both
    schemes so their first rounds coincide under a shared seed)."""
    return [engine.rng.permutation(engine.n_rx) for _ in range(engine.n_sc)]


def run_exhaustive(setup: TrialSetup, seed=None,
                   max_rounds: int | None = None) -> IaTrialOutcome:
    """Uncoordinated baseline: every cell walks its own random Rx order."""
    engine = _TrialEngine(setup, np.random.default_rng(seed))
    orders = _sweep_orders(engine)
    rounds = engine.n_rx if max_rounds is None else min(max_rounds, engine.n_rx)
    for r in range(rounds):
        schedule = engine.schedule(r, (orders[i][r] for i in range(engine.n_sc)))
        peaks = engine.round_peaks(schedule)
        hit = engine.first_detection(peaks)
        if hit is not None:
            return _finish(EXHAUSTIVE, engine, setup, schedule, *hit, None)
    return _fail(EXHAUSTIVE, setup, engine, rounds)


def run_coordinated(setup: TrialSetup, seed=None,
                    max_rounds: int | None = None) -> IaTrialOutcome:
    """Measurement round, backhaul exchange, estimate, reordered sweeps."""
    if setup.geom.n_sc < 3:
        raise ValueError("coordinated IA needs a cluster of at least three cells")
    engine = _TrialEngine(setup, np.random.default_rng(seed))
    orders = _sweep_orders(engine)
    if max_rounds is None:
        max_rounds = engine.n_rx + 1

    # Round 1: random Rx beams, full UE sweep, reports recorded as measured.
    schedule = engine.schedule(0, (orders[i][0] for i in range(engine.n_sc)))
    peaks = engine.round_peaks(schedule)
    hit = engine.first_detection(peaks)
    if hit is not None:
        return _finish(COORDINATED, engine, setup, schedule, *hit, None)

    bus = BackhaulBus(latency_s=setup.backhaul_latency_s)
    slot_of_beam = np.argsort(np.asarray(schedule.ue_tx_order))
    for i in range(engine.n_sc):
        bus.publish(i, MeasurementReport(
            cell_index=i,
            peak_per_tx_beam=peaks[slot_of_beam, i].copy(),  # beam-indexed
            rx_beam_used=schedule.rx_beam_assignment[i],
        ))
    reports = bus.collect()
    delay = bus.delay_rounds(engine.n_tx * setup.t_ra_s)

    estimate = None
    try:
        if engine.n_sc > 3:
            band = setup.ue_codebook.pattern.phi_ml
            estimate, _ = refine_location(reports, setup.geom, band,
                                          setup.grid_resolution_m)
        else:
            estimate, _, _ = estimate_point(reports, setup.geom)
    except EstimationError:
        estimate = None

    # Fallback keeps walking the original order (wrapping past the round-1
    # beam) so a full sweep still completes within max_rounds.
    fallback = [np.roll(orders[i], -1) for i in range(engine.n_sc)]
    reordered = None
    if estimate is not None:
        reordered = [reorder_rx_beams(setup.sc_codebook, estimate,
                                      setup.geom.sc_positions[i])
                     for i in range(engine.n_sc)]

    for r in range(1, max_rounds):
        use_reordered = reordered is not None and (r - 1) >= delay
        rx_beams = [
            int(reordered[i][(r - 1 - delay) % engine.n_rx]) if use_reordered
            else int(fallback[i][(r - 1) % engine.n_rx])
            for i in range(engine.n_sc)
        ]
        schedule = engine.schedule(r, rx_beams)
        peaks = engine.round_peaks(schedule)
        hit = engine.first_detection(peaks)
        if hit is not None:
            return _finish(COORDINATED, engine, setup, schedule, *hit, estimate)
    return _fail(COORDINATED, setup, engine, max_rounds, estimate)
