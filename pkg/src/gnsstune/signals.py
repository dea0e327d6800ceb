"""Per-channel signal truth and semi-analytic correlator model.

Instead of generating IF samples, correlator outputs are computed directly
from the tracking-error state (code-delay, carrier-phase and frequency
offsets between signal truth and the receiver NCOs). This preserves exactly
the quantities the discriminators consume at a tiny fraction of the compute
of sample-level simulation.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import (
    BIT_PERIOD,
    CODE_LENGTH,
    CODE_RATE,
    L1_WAVELENGTH,
    SPEED_OF_LIGHT,
    TWO_PI,
)
from .constellation import GpsSatellite, gps_state_arrays, los_arrays
from .dynamics import GroundTruth

# G2 output tap pairs per PRN (1..32), from the C/A code phase assignments
CA_TAPS = {
    1: (2, 6), 2: (3, 7), 3: (4, 8), 4: (5, 9), 5: (1, 9), 6: (2, 10),
    7: (1, 8), 8: (2, 9), 9: (3, 10), 10: (2, 3), 11: (3, 4), 12: (5, 6),
    13: (6, 7), 14: (7, 8), 15: (8, 9), 16: (9, 10), 17: (1, 4), 18: (2, 5),
    19: (3, 6), 20: (4, 7), 21: (5, 8), 22: (6, 9), 23: (1, 3), 24: (4, 6),
    25: (5, 7), 26: (6, 8), 27: (7, 9), 28: (8, 10), 29: (1, 6), 30: (2, 7),
    31: (3, 8), 32: (4, 9),
}


def gen_ca_code(prn: int) -> np.ndarray:
    """Generate the 1023-chip C/A Gold code for a PRN, as +/-1 chips.

    G1 feedback x^10+x^3+1, G2 feedback x^10+x^9+x^8+x^6+x^3+x^2+1; the
    PRN-specific chip is G1 output xor two selected G2 stages.
    """
    if prn not in CA_TAPS:
        raise ValueError(f"PRN {prn} outside [1, 32]")
    t1, t2 = CA_TAPS[prn]
    g1 = [1] * 10
    g2 = [1] * 10
    chips = np.empty(CODE_LENGTH, dtype=np.int8)
    for i in range(CODE_LENGTH):
        bit = g1[9] ^ g2[t1 - 1] ^ g2[t2 - 1]
        chips[i] = 1 - 2 * bit
        g1 = [g1[2] ^ g1[9]] + g1[:9]
        g2 = [g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9]] + g2[:9]
    return chips


def ca_autocorr(delta):
    """Idealized code autocorrelation: unit triangle of half-width one chip."""
    return np.maximum(0.0, 1.0 - np.abs(delta))


class BitStream:
    """Deterministic pseudo-random navigation-bit stream at 50 bps.

    Bit edges are aligned to 20 ms boundaries of scenario time. Bits carry
    no message structure; they only exercise the data-modulation paths.
    """

    def __init__(self, seed, n_bits: int = 65536):
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.bits = (rng.integers(0, 2, n_bits) * 2 - 1).astype(np.int8)

    def bit(self, t):
        idx = np.asarray(np.floor(np.asarray(t) / BIT_PERIOD), dtype=int)
        return self.bits[idx]

    def factor(self, t_start, t_int):
        """Mean bit polarity over [t_start, t_start + t_int).

        Intervals straddling a bit edge see partial cancellation; the
        coherent sum scales by the time-weighted mean of the two bits.
        """
        t_start = np.asarray(t_start, dtype=float)
        i0 = np.floor(t_start / BIT_PERIOD).astype(int)
        i1 = np.floor((t_start + t_int - 1e-12) / BIT_PERIOD).astype(int)
        b0 = self.bits[i0].astype(float)
        b1 = self.bits[i1].astype(float)
        edge = (i0 + 1) * BIT_PERIOD
        alpha = np.clip((edge - t_start) / t_int, 0.0, 1.0)
        return alpha * b0 + (1.0 - alpha) * b1


def data_bits(t, rng_seed) -> np.ndarray:
    """Navigation bit (+/-1) at time t for a seeded stream."""
    return BitStream(rng_seed).bit(t)


@dataclass
class NcoState:
    """Replica oscillator state at the start of a coherent interval."""

    code_phase: float        # [chips]
    code_freq: float         # [chips/s]
    carrier_phase: float     # [cycles]
    carrier_freq: float      # [Hz]
    carrier_freq_rate: float = 0.0   # [Hz/s]

    @property
    def code_phase_wrapped(self):
        return self.code_phase % CODE_LENGTH

    @property
    def carrier_phase_wrapped(self):
        return self.carrier_phase % 1.0


@dataclass
class CorrelatorOutput:
    ie: float
    qe: float
    ip: float
    qp: float
    il: float
    ql: float
    t_start: float
    t_int: float


class ChannelTruth:
    """True signal parameters for one satellite channel along a trajectory.

    Exposes code delay tau [chips], carrier phase [cycles], Doppler [Hz],
    and the data-bit stream; all derived on demand from receiver truth and
    the satellite orbit, so arbitrary epoch grids can be queried.
    """

    def __init__(self, ground_truth: GroundTruth, satellite: GpsSatellite,
                 cn0: float = 45.0, bit_seed=1234, bit_sync_time: float = 2.0):
        self.gt = ground_truth
        self.sat = satellite
        self.prn = satellite.prn
        self.cn0 = float(cn0)
        self.bits = BitStream([bit_seed, satellite.prn])
        self.bit_sync_time = float(bit_sync_time)

    def _los(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rx_pos, rx_vel, _ = self.gt.sample(t)
        sat_pos, sat_vel, _ = gps_state_arrays(self.sat, t)
        return los_arrays(rx_pos, rx_vel, sat_pos, sat_vel)

    def tau(self, t):
        rng_m, _, _ = self._los(t)
        return rng_m / SPEED_OF_LIGHT * CODE_RATE

    def phi(self, t):
        rng_m, _, _ = self._los(t)
        return -rng_m / L1_WAVELENGTH

    def doppler(self, t):
        _, _, dop = self._los(t)
        return dop


def correlator_triplet(dtau, dphi, df, t_int, cn0, bit, spacing):
    """Noise-free E/P/L correlator I/Q values from tracking errors.

    dtau/dphi/df are truth-minus-NCO code [chips], carrier phase at interval
    start [cycles] and frequency [Hz]. Returns (ie, qe, ip, qp, il, ql).
    """
    amp = np.sqrt(2.0 * 10.0 ** (cn0 / 10.0) * t_int) * bit * np.sinc(df * t_int)
    theta = np.pi * df * t_int + TWO_PI * dphi
    c, s = np.cos(theta), np.sin(theta)
    re = ca_autocorr(dtau - spacing / 2.0)
    rp = ca_autocorr(dtau)
    rl = ca_autocorr(dtau + spacing / 2.0)
    return (amp * re * c, amp * re * s, amp * rp * c,
            amp * rp * s, amp * rl * c, amp * rl * s)


def correlate(
    truth: ChannelTruth,
    nco: NcoState,
    t: float,
    t_int: float,
    spacing: float = 0.5,
    noise_rng: Optional[np.random.Generator] = None,
) -> CorrelatorOutput:
    """One coherent integration over [t, t + t_int) against the NCO replica."""
    if not 0.0 < spacing <= 1.0:
        raise ValueError("correlator spacing must be in (0, 1] chips")
    t_mid = t + t_int / 2.0
    tau_true = float(truth.tau(t_mid)[0])
    phi_true = float(truth.phi(t)[0])
    dop_true = float(truth.doppler(t_mid)[0])
    code_mid = nco.code_phase + nco.code_freq * t_int / 2.0
    dtau = (tau_true - code_mid + CODE_LENGTH / 2.0) % CODE_LENGTH - CODE_LENGTH / 2.0
    dphi = phi_true - nco.carrier_phase
    df = dop_true - (nco.carrier_freq + nco.carrier_freq_rate * t_int / 2.0)
    bit = float(truth.bits.factor(t, t_int))
    vals = correlator_triplet(dtau, dphi, df, t_int, truth.cn0, bit, spacing)
    if noise_rng is not None:
        noise = noise_rng.standard_normal(6)
        vals = tuple(float(v) + n for v, n in zip(vals, noise))
    else:
        vals = tuple(float(v) for v in vals)
    return CorrelatorOutput(*vals, t_start=t, t_int=t_int)
