"""Zadoff-Chu preambles, circular-correlation power delay profiles, detection.

The correlation convention: PDP(l) = |sum_n y(n) * conj(x_u((n+l) mod N))|^2,
a periodic correlation over all N lags. For a prime-length ZC sequence the
cyclic shifts form an orthogonal family, so the autocorrelation PDP is
N^2 at lag 0 and exactly 0 elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class ZcSequence:
    root: int
    n_zc: int
    samples: np.ndarray  # unit-modulus complex, length n_zc


def generate_zc(u: int, n_zc: int) -> ZcSequence:
    """x_u(n) = exp(-j*pi*u*n*(n+1)/n_zc) for prime n_zc and 1 <= u < n_zc."""
    if not is_prime(n_zc):
        raise ValueError(f"n_zc = {n_zc} is not prime")
    if not 1 <= u <= n_zc - 1:
        raise ValueError("root u must satisfy 1 <= u <= n_zc - 1")
    n = np.arange(n_zc, dtype=float)
    samples = np.exp(-1j * math.pi * u * n * (n + 1.0) / n_zc)
    return ZcSequence(u, n_zc, samples)


@dataclass(frozen=True)
class PdpProfile:
    """|z_u(l)|^2 over all lags of one received preamble slot."""

    values: np.ndarray
    peak_lag: int
    peak_value: float


@dataclass(frozen=True)
class DetectionConfig:
    """Exactly one of the two calibration targets is active."""

    target_p_fa: float | None = None
    target_p_miss: float | None = None

    def __post_init__(self):
        if (self.target_p_fa is None) == (self.target_p_miss is None):
            raise ValueError("set exactly one of target_p_fa / target_p_miss")
        t = self.target_p_fa if self.target_p_fa is not None else self.target_p_miss
        if not 0.0 < t < 1.0:
            raise ValueError("target probability must lie in (0, 1)")


def synthesize_rx(
    seq: ZcSequence,
    rx_power_dbm: float,
    noise_power_dbm: float,
    delay_lag: int = 0,
    seed=None,
    noiseless: bool = False,
) -> np.ndarray:
    """One received preamble slot: scaled shifted sequence plus white noise.

    delay_lag is the lag at which the PDP peak will appear. Noise is
    circularly-symmetric complex Gaussian with per-sample power equal to
    the linear noise power; ``noiseless`` drops the noise term entirely
    (instead of a -inf dBm sentinel).
    """
    if not 0 <= delay_lag < seq.n_zc:
        raise ValueError("delay_lag out of range")
    amp = math.sqrt(dbm_to_mw(rx_power_dbm))
    y = amp * np.roll(seq.samples, -delay_lag)
    if not noiseless:
        rng = np.random.default_rng(seed)
        sigma = math.sqrt(dbm_to_mw(noise_power_dbm) / 2.0)
        y = y + sigma * (rng.standard_normal(seq.n_zc)
                         + 1j * rng.standard_normal(seq.n_zc))
    return y


def sequence_spectrum(seq: ZcSequence) -> np.ndarray:
    """conj(FFT(x_u)), precomputed once for fast batched correlation."""
    return np.conj(np.fft.fft(seq.samples))


def pdp_matrix(y: np.ndarray, seq: ZcSequence,
               spectrum: np.ndarray | None = None) -> np.ndarray:
    """PDP values for a batch of received slots, shape (..., n_zc).

    Uses the identity z(l) = FFT_l{ FFT(y) * conj(FFT(x)) } / N, which
    equals the direct periodic correlation at every lag.
    """
    y = np.asarray(y)
    if y.shape[-1] != seq.n_zc:
        raise ValueError("length mismatch between received slot and sequence")
    if spectrum is None:
        spectrum = sequence_spectrum(seq)
    z = np.fft.fft(np.fft.fft(y, axis=-1) * spectrum, axis=-1) / seq.n_zc
    return np.abs(z) ** 2


def compute_pdp(y: np.ndarray, seq: ZcSequence) -> PdpProfile:
    """Full PDP of one received slot."""
    values = pdp_matrix(np.asarray(y), seq)
    if values.ndim != 1:
        raise ValueError("compute_pdp takes a single slot; use pdp_matrix for batches")
    peak_lag = int(np.argmax(values))  # lowest index on ties
    return PdpProfile(values, peak_lag, float(values[peak_lag]))


def detect(pdp: PdpProfile, gamma_ra: float) -> tuple[bool, int]:
    """Threshold test: detected iff the peak strictly exceeds gamma_ra."""
    return pdp.peak_value > gamma_ra, pdp.peak_lag


def false_alarm_threshold(p_fa: float, noise_power_dbm: float, n_zc: int) -> float:
    """Closed-form threshold for a target any-lag false-alarm probability.

    Under noise-only input each lag's PDP value is Exp(mean N*sigma^2) and
    the lags are independent, so P(max > g) = 1 - (1 - exp(-g/(N s^2)))^N.
    """
    if not 0.0 < p_fa < 1.0:
        raise ValueError("p_fa must lie in (0, 1)")
    sigma2 = dbm_to_mw(noise_power_dbm)
    return -n_zc * sigma2 * math.log(1.0 - (1.0 - p_fa) ** (1.0 / n_zc))


def miss_threshold(
    p_miss: float,
    reference_rx_dbm: float,
    noise_power_dbm: float,
    seq: ZcSequence,
    trials: int = 10_000,
    seed=None,
    batch: int = 2_000,
) -> float:
    """Monte Carlo threshold: the p_miss quantile of the aligned reference
    link's PDP peak, so that link is missed with probability p_miss."""
    if not 0.0 < p_miss < 1.0:
        raise ValueError("p_miss must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    amp = math.sqrt(dbm_to_mw(reference_rx_dbm))
    sigma = math.sqrt(dbm_to_mw(noise_power_dbm) / 2.0)
    spectrum = sequence_spectrum(seq)
    peaks = np.empty(trials)
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        noise = sigma * (rng.standard_normal((m, seq.n_zc))
                         + 1j * rng.standard_normal((m, seq.n_zc)))
        values = pdp_matrix(amp * seq.samples + noise, seq, spectrum)
        peaks[done:done + m] = values.max(axis=-1)
        done += m
    return float(np.quantile(peaks, p_miss))


def calibrate_threshold(
    cfg: DetectionConfig,
    noise_power_dbm: float,
    seq: ZcSequence,
    reference_rx_dbm: float | None = None,
    trials: int = 10_000,
    seed=None,
) -> float:
    """gamma_ra for either calibration mode.

    False-alarm mode is analytic; miss mode runs Monte Carlo against the
    supplied reference link (aligned beams at the nominal budget).
    """
    if cfg.target_p_fa is not None:
        return false_alarm_threshold(cfg.target_p_fa, noise_power_dbm, seq.n_zc)
    if reference_rx_dbm is None:
        raise ValueError("miss-mode calibration needs a reference rx power")
    return miss_threshold(cfg.target_p_miss, reference_rx_dbm, noise_power_dbm,
                          seq, trials=trials, seed=seed)
