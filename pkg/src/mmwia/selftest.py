"""Built-in oracle suite: every derived expected value, checked analytically.

Each check recomputes its expectation from an independent route (hand
algebra, brute-force correlation, closed-form statistics, grid search)
and compares the implementation against it. The CLI `selftest` command
runs the whole list and prints one line per check.
"""

from __future__ import annotations

import math
import traceback

import numpy as np

from . import antenna, channel, estimation, geometry, preamble, protocol
from .config import SimConfig

D = 200.0


def _check_cluster_reproducible():
    g1 = geometry.build_cluster(12, D, layout_seed=7)
    g2 = geometry.build_cluster(12, D, layout_seed=7)
    assert g1.sc_positions == g2.sc_positions, "same seed must give same layout"
    for i in range(3):
        for j in range(i + 1, 3):
            dij = g1.sc_positions[i].distance_to(g1.sc_positions[j])
            assert abs(dij - D) < 1e-9, "first three cells must form the triangle"


def _check_ue_centroid():
    geom = geometry.build_cluster(3, D)
    rng = np.random.default_rng(123)
    pts = np.array([[p.x, p.y] for p in (geometry.place_ue(geom, rng)
                                         for _ in range(100_000))])
    c = geom.triangle_centroid()
    err = math.hypot(pts[:, 0].mean() - c.x, pts[:, 1].mean() - c.y)
    assert err < 2.0, f"empirical centroid off by {err:.2f} m"


def _check_angle_sum():
    geom = geometry.build_cluster(3, D)
    rng = np.random.default_rng(5)
    for _ in range(200):
        geom_t = geom.with_ue(geometry.place_ue(geom, rng))
        total = sum(geometry.true_angles(geom_t))
        assert abs(total - 2.0 * math.pi) < 1e-12, "angles must close to 2*pi"


def _check_pattern_constants():
    p45 = antenna.make_pattern(math.radians(45.0))
    assert abs(p45.g0 - 12.51) < 0.01, f"g0(45deg) = {p45.g0:.3f}"
    assert abs(p45.g_sl + 12.14) < 0.01, f"g_sl(45deg) = {p45.g_sl:.3f}"
    assert abs(math.degrees(p45.phi_ml) - 117.0) < 1e-9
    p225 = antenna.make_pattern(math.radians(22.5))
    assert abs(p225.g0 - 18.37) < 0.01, f"g0(22.5deg) = {p225.g0:.3f}"
    assert abs(p45.gain(p45.phi_3db / 2.0) - (p45.g0 - 3.01)) < 1e-12


def _check_link_budget():
    assert abs(channel.pathloss(200.0) - 109.7224) < 1e-3
    params = channel.LinkBudgetParams(23.0, -171.0, 1.08e6)
    assert abs(channel.noise_power(params) + 110.6658) < 1e-3
    # UE 200 m due west of cell 0: aligned beams point east (UE) / west (cell)
    geom = geometry.build_cluster(3, D).with_ue(geometry.Point2D(-D, 0.0))
    pat = antenna.make_pattern(math.radians(45.0))
    los = channel.LinkState(False)
    aligned = channel.received_power(
        channel.LinkBudgetParams(23.0, -171.0, 1.08e6), geom, los,
        ue_beam=0.0, ue_pattern=pat, sc_beam=math.pi, sc_pattern=pat,
        cell_index=0)
    expect = 23.0 + 2.0 * pat.g0 - channel.pathloss(200.0)
    assert abs(aligned - expect) < 1e-9 and abs(aligned + 61.70) < 0.02
    backlobe = channel.received_power(
        channel.LinkBudgetParams(23.0, -171.0, 1.08e6), geom, los,
        ue_beam=math.pi, ue_pattern=pat, sc_beam=math.pi, sc_pattern=pat,
        cell_index=0)
    assert abs((aligned - backlobe) - (pat.g0 - pat.g_sl)) < 1e-9


def _check_blocking_rate():
    states = channel.sample_blocking(100_000, 0.5, seed=42)
    frac = sum(s.blocked for s in states) / len(states)
    assert abs(frac - 0.5) < 0.01, f"blocked fraction {frac:.3f}"


def _check_zc_autocorrelation():
    for u, n in ((1, 11), (1, 839), (25, 839)):
        seq = preamble.generate_zc(u, n)
        pdp = preamble.compute_pdp(seq.samples, seq)
        assert pdp.peak_lag == 0
        assert abs(pdp.peak_value - n * n) < 1e-6 * n * n
        off = np.delete(pdp.values, 0)
        assert off.max() < 1e-9 * pdp.peak_value, f"off-peak leakage at (u={u}, n={n})"


def _check_brute_force_pdp():
    seq = preamble.generate_zc(1, 11)
    rng = np.random.default_rng(3)
    y = rng.standard_normal(11) + 1j * rng.standard_normal(11)
    fast = preamble.compute_pdp(y, seq).values
    slow = np.array([
        abs(np.sum(y * np.conj(np.roll(seq.samples, -l)))) ** 2
        for l in range(11)
    ])
    assert np.allclose(fast, slow, rtol=1e-9), "FFT and O(n^2) correlators differ"
    shifted = preamble.synthesize_rx(seq, 0.0, 0.0, delay_lag=5, noiseless=True)
    assert preamble.compute_pdp(shifted, seq).peak_lag == 5


def _check_processing_gain():
    seq = preamble.generate_zc(1, 839)
    rng = np.random.default_rng(11)
    spectrum = preamble.sequence_spectrum(seq)
    sigma = math.sqrt(0.5)
    peaks = np.empty(10_000)
    floors = np.empty(10_000)
    for start in range(0, 10_000, 2_000):
        m = 2_000
        noise = sigma * (rng.standard_normal((m, 839))
                         + 1j * rng.standard_normal((m, 839)))
        vals = preamble.pdp_matrix(seq.samples + noise, seq, spectrum)
        peaks[start:start + m] = vals[:, 0]
        floors[start:start + m] = np.delete(vals, 0, axis=1).mean(axis=1)
    gain_db = 10.0 * math.log10(peaks.mean() / floors.mean())
    expect = 10.0 * math.log10(839.0)
    assert abs(gain_db - expect) < 0.5, f"processing gain {gain_db:.2f} dB"


def _check_false_alarm_rate():
    seq = preamble.generate_zc(1, 839)
    spectrum = preamble.sequence_spectrum(seq)
    rng = np.random.default_rng(17)
    sigma = math.sqrt(0.5)  # noise power 0 dBm
    for p_fa, tol in ((0.1, 0.03), (0.01, 0.003)):
        gamma = preamble.false_alarm_threshold(p_fa, 0.0, 839)
        hits = 0
        total = 100_000
        for _ in range(10):
            m = total // 10
            noise = sigma * (rng.standard_normal((m, 839))
                             + 1j * rng.standard_normal((m, 839)))
            vals = preamble.pdp_matrix(noise, seq, spectrum)
            hits += int(np.sum(vals.max(axis=-1) > gamma))
        rate = hits / total
        assert abs(rate - p_fa) < tol, f"false alarm {rate:.4f} at target {p_fa}"


def _check_miss_calibration():
    seq = preamble.generate_zc(1, 839)
    noise_dbm = -110.67
    ref_dbm = -112.0
    gamma = preamble.miss_threshold(0.01, ref_dbm, noise_dbm, seq,
                                    trials=20_000, seed=23)
    spectrum = preamble.sequence_spectrum(seq)
    rng = np.random.default_rng(29)
    amp = math.sqrt(preamble.dbm_to_mw(ref_dbm))
    sigma = math.sqrt(preamble.dbm_to_mw(noise_dbm) / 2.0)
    detected = 0
    total = 20_000
    for _ in range(10):
        m = total // 10
        noise = sigma * (rng.standard_normal((m, 839))
                         + 1j * rng.standard_normal((m, 839)))
        vals = preamble.pdp_matrix(amp * seq.samples + noise, seq, spectrum)
        detected += int(np.sum(vals.max(axis=-1) > gamma))
    rate = detected / total
    assert abs(rate - 0.99) < 0.005, f"reference detection rate {rate:.4f}"


def _check_index_angles():
    r = [estimation.MeasurementReport(i, v, 0) for i, v in enumerate((
        np.eye(8)[1], np.eye(8)[3], np.eye(8)[6]))]
    est = estimation.angles_from_reports(r)
    assert abs(est.theta_tilde[0] - math.pi / 2) < 1e-12
    assert abs(estimation.wrapped_index_angle(7, 2, 8) - 3 * math.pi / 4) < 1e-12
    assert abs(sum(est.theta_tilde) - 2 * math.pi) < 1e-12


def _check_distance_solver():
    sym = estimation.AngleEstimate((2 * math.pi / 3,) * 3)
    d = estimation.solve_distances(sym, D)
    assert all(abs(x - D / math.sqrt(3)) < 1e-6 for x in d)
    mid = estimation.AngleEstimate((math.pi, math.pi / 2, math.pi / 2))
    d = estimation.solve_distances(mid, D)
    expect = (100.0, 100.0, 100.0 * math.sqrt(3.0))
    assert all(abs(a - b) < 1e-6 for a, b in zip(d, expect)), d


def _check_round_trip():
    geom = geometry.build_cluster(3, D)
    rng = np.random.default_rng(31)
    for _ in range(200):
        g = geom.with_ue(geometry.place_ue(geom, rng))
        est = estimation.AngleEstimate(geometry.true_angles(g))
        dists = estimation.solve_distances(est, D)
        p = estimation.locate_ue(dists, g.triangle())
        err = p.distance_to(g.ue_position)
        assert err < 1e-6, f"round-trip error {err:.2e} m"


def _check_trilateration_vs_grid():
    geom = geometry.build_cluster(3, D)
    truth = geom.triangle_centroid()
    d_true = truth.distance_to(geom.sc_positions[0])
    dists = [d_true + 1.0] * 3
    p = estimation.locate_ue(dists, geom.triangle())
    # brute-force oracle: 0.01 m grid around the centroid
    ax = np.arange(truth.x - 5.0, truth.x + 5.0, 0.01)
    ay = np.arange(truth.y - 5.0, truth.y + 5.0, 0.01)
    gx, gy = np.meshgrid(ax, ay)
    cost = np.zeros_like(gx)
    for sp, dd in zip(geom.triangle(), dists):
        cost += (np.hypot(gx - sp.x, gy - sp.y) - dd) ** 2
    k = np.unravel_index(np.argmin(cost), cost.shape)
    grid_best = geometry.Point2D(float(gx[k]), float(gy[k]))
    assert p.distance_to(grid_best) < 0.02, "solver disagrees with grid oracle"
    assert p.distance_to(truth) < 2.5, "perturbed estimate drifted too far"


def _check_schedule_arithmetic():
    cfg = SimConfig()
    seq = preamble.generate_zc(1, 839)
    geom = geometry.build_cluster(3, D).with_ue(geometry.Point2D(100.0, 40.0))
    ue_cb = antenna.make_codebook(4)
    sc_cb = antenna.make_codebook(8)
    params = cfg.link_params(-20.0)

    # analytic per-(tx, cell, rx) peak map; threshold just below the best pair
    n_tx, n_sc, n_rx = 4, 3, 8
    rx_dbm = np.empty((n_tx, n_sc, n_rx))
    los = channel.LinkState(False)
    for t in range(n_tx):
        for i in range(n_sc):
            for b in range(n_rx):
                rx_dbm[t, i, b] = channel.received_power(
                    params, geom, los,
                    ue_beam=float(ue_cb.beam_centers[t]), ue_pattern=ue_cb.pattern,
                    sc_beam=float(sc_cb.beam_centers[b]), sc_pattern=sc_cb.pattern,
                    cell_index=i)
    peak = 839.0 ** 2 * 10.0 ** (rx_dbm / 10.0)
    gamma = 0.95 * peak.max()

    # replay the seeded per-cell sweep orders to predict the detection slot
    rng = np.random.default_rng(9)
    orders = [rng.permutation(n_rx) for _ in range(n_sc)]
    expect = None
    for r in range(n_rx):
        for t in range(n_tx):
            for i in range(n_sc):
                if peak[t, i, orders[i][r]] > gamma:
                    expect = (r * n_tx + t + 1, i, (t, int(orders[i][r])))
                    break
            if expect:
                break
        if expect:
            break

    setup = protocol.TrialSetup(
        geom=geom, ue_codebook=ue_cb, sc_codebook=sc_cb, link_params=params,
        seq=seq, gamma_ra=gamma, noiseless=True)
    out1 = protocol.run_exhaustive(setup, seed=9)
    out2 = protocol.run_exhaustive(setup, seed=9)
    assert out1 == out2, "same seed must reproduce the outcome"
    assert expect is not None and out1.success
    assert out1.slots_used == expect[0], (out1.slots_used, expect)
    assert out1.detecting_cell == expect[1]
    assert out1.detecting_pair == expect[2]


def _check_reduction_formula():
    assert abs(protocol.ia_time_reduction(78.0, 100.0) + 22.0) < 1e-12
    assert abs(protocol.ia_time_reduction(82.0, 100.0) + 18.0) < 1e-12
    assert protocol.ia_time_reduction(100.0, 100.0) == 0.0


CHECKS = [
    ("cluster layout reproducible", _check_cluster_reproducible),
    ("uniform UE placement centroid", _check_ue_centroid),
    ("subtended angles close to 2*pi", _check_angle_sum),
    ("antenna pattern closed forms", _check_pattern_constants),
    ("link budget composition", _check_link_budget),
    ("blocking Bernoulli rate", _check_blocking_rate),
    ("ZC ideal autocorrelation", _check_zc_autocorrelation),
    ("FFT correlator vs brute force", _check_brute_force_pdp),
    ("correlation processing gain", _check_processing_gain),
    ("false-alarm threshold closed form", _check_false_alarm_rate),
    ("miss-mode calibration consistency", _check_miss_calibration),
    ("beam-index angle recovery", _check_index_angles),
    ("cosine-rule range solver", _check_distance_solver),
    ("angle->range->position round trip", _check_round_trip),
    ("trilateration vs grid oracle", _check_trilateration_vs_grid),
    ("sweep schedule arithmetic", _check_schedule_arithmetic),
    ("IA time reduction formula", _check_reduction_formula),
]


def run_selftest(verbose: bool = True) -> bool:
    """Run every oracle check; returns True when all pass."""
    all_ok = True
    for name, fn in CHECKS:
        try:
            fn()
            status = "PASS"
        except Exception:
            status = "FAIL"
            all_ok = False
            if verbose:
                traceback.print_exc()
        if verbose:
            print(f"[{status}] {name}")
    return all_ok
