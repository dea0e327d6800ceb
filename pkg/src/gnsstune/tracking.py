"""FLL-assisted PLL / DLL tracking channels with configurable loop filters.

The carrier loop sums a phase branch (order = pll_order) and a frequency
branch one order lower into a single NCO frequency command; the code loop is
carrier-aided. Bandwidths switch from pull-in to narrow values at the bit
synchronization instant, where the frequency branch is disabled and the
coherent integration extends from 1 ms to the configured value.

All channels of one receiver run lock-step on a shared epoch grid, so the
implementation is vectorized across channels.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .constants import CARRIER_TO_CODE, TWO_PI
from .signals import BitStream, ChannelTruth, CorrelatorOutput, correlator_triplet
from .constellation import gps_state_arrays, los_arrays
from .dynamics import GroundTruth

PLL_NARROW_MIN = 5.0   # [Hz], bottom of the pull-in range
DLL_NARROW_MIN = 1.0   # [Hz]

# loop-filter natural-frequency mappings and damping coefficients
_OMEGA_SCALE = {1: 4.0, 2: 1.0 / 0.53, 3: 1.0 / 0.7845}
_A2 = 1.414
_A3 = 1.1
_B3 = 2.4

LOCK_THRESHOLD = 0.6
LOCK_WINDOW = 100          # epochs
LOCK_MIN_HISTORY = 20      # epochs
LOCK_CONFIRM = 100         # consecutive locked epochs to arm loss detection
LOSS_CODE_CHIPS = 1.5      # |code error| beyond any correlator support
LOSS_DROPOUT_S = 1.0       # continuous unlock, narrow phase only


class ConfigurationRejected(ValueError):
    """Loop configuration fails the discrete-time stability guard."""


def narrow_bandwidth(pull_in: float, pct: float, range_min: float) -> float:
    """Map a narrow-bandwidth percentage onto [range_min, pull_in] Hz."""
    if not 0.0 <= pct <= 100.0:
        raise ValueError("narrow percentage outside [0, 100]")
    if range_min > pull_in:
        raise ValueError("range_min exceeds pull-in bandwidth")
    return range_min + pct / 100.0 * (pull_in - range_min)


@dataclass
class LoopConfig:
    """The eight-dimensional tracking-loop settings vector."""

    t_int_ms: int = 1
    pll_bw: float = 20.0
    pll_narrow_pct: float = 50.0
    pll_order: int = 2
    dll_bw: float = 2.0
    dll_narrow_pct: float = 0.0
    dll_order: int = 1
    fll_bw: float = 10.0

    def __post_init__(self):
        if not 1 <= int(self.t_int_ms) <= 20:
            raise ValueError("integration time outside [1, 20] ms")
        if not 5.0 <= self.pll_bw <= 80.0:
            raise ValueError("PLL bandwidth outside [5, 80] Hz")
        if not 0.0 <= self.pll_narrow_pct <= 100.0:
            raise ValueError("PLL narrow percent outside [0, 100]")
        if self.pll_order not in (2, 3):
            raise ValueError("PLL order must be 2 or 3")
        if not 1.0 <= self.dll_bw <= 50.0:
            raise ValueError("DLL bandwidth outside [1, 50] Hz")
        if not 0.0 <= self.dll_narrow_pct <= 100.0:
            raise ValueError("DLL narrow percent outside [0, 100]")
        if self.dll_order not in (1, 2, 3):
            raise ValueError("DLL order must be 1, 2 or 3")
        if not 1.0 <= self.fll_bw <= 50.0:
            raise ValueError("FLL bandwidth outside [1, 50] Hz")

    @property
    def t_int(self) -> float:
        return self.t_int_ms * 1e-3

    @property
    def pll_narrow_hz(self) -> float:
        return narrow_bandwidth(self.pll_bw, self.pll_narrow_pct, PLL_NARROW_MIN)

    @property
    def dll_narrow_hz(self) -> float:
        return narrow_bandwidth(self.dll_bw, self.dll_narrow_pct, DLL_NARROW_MIN)

    def to_dict(self) -> dict:
        return {
            "t_int_ms": int(self.t_int_ms),
            "pll_bw": self.pll_bw,
            "pll_narrow_pct": self.pll_narrow_pct,
            "pll_narrow_hz": self.pll_narrow_hz,
            "pll_order": int(self.pll_order),
            "dll_bw": self.dll_bw,
            "dll_narrow_pct": self.dll_narrow_pct,
            "dll_narrow_hz": self.dll_narrow_hz,
            "dll_order": int(self.dll_order),
            "fll_bw": self.fll_bw,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LoopConfig":
        keys = ("t_int_ms", "pll_bw", "pll_narrow_pct", "pll_order",
                "dll_bw", "dll_narrow_pct", "dll_order", "fll_bw")
        return cls(**{k: d[k] for k in keys})


# --- discriminators ---

def dll_discriminator(out: CorrelatorOutput) -> float:
    """Normalized noncoherent early-minus-late envelope [chips]."""
    e = math.hypot(out.ie, out.qe)
    l = math.hypot(out.il, out.ql)
    if e + l == 0.0:
        return 0.0
    return 0.5 * (e - l) / (e + l)


def pll_discriminator(out: CorrelatorOutput) -> float:
    """Costas phase detector atan(Q/I) [rad], data-bit insensitive."""
    if out.ip == 0.0:
        return 0.0 if out.qp == 0.0 else math.pi / 2.0
    return math.atan(out.qp / out.ip)


def fll_discriminator(prev: CorrelatorOutput, curr: CorrelatorOutput,
                      t_int: float, four_quadrant: bool = False) -> float:
    """Frequency detector from consecutive prompt vectors [Hz].

    The default two-quadrant form is insensitive to data-bit sign flips
    between the two prompts, which is essential while the frequency branch
    runs before bit synchronization; a sustained four-quadrant detector
    turns every bit transition into a half-cycle outlier. The four-quadrant
    variant doubles the range to +/-1/(2 t_int) for flip-free streams.
    """
    cross = prev.ip * curr.qp - curr.ip * prev.qp
    dot = prev.ip * curr.ip + prev.qp * curr.qp
    if cross == 0.0 and dot == 0.0:
        return 0.0
    if four_quadrant:
        return math.atan2(cross, dot) / (TWO_PI * t_int)
    if dot < 0.0:
        cross, dot = -cross, -dot
    return math.atan2(cross, dot) / (TWO_PI * t_int)


def lock_detect(prompt_i, prompt_q) -> bool:
    """Narrowband power-ratio phase-lock test over a sliding window."""
    prompt_i = np.asarray(prompt_i, dtype=float)
    prompt_q = np.asarray(prompt_q, dtype=float)
    if prompt_i.size < LOCK_MIN_HISTORY:
        raise ValueError("need at least 20 epochs of prompt history")
    i2 = prompt_i[-LOCK_WINDOW:] ** 2
    q2 = prompt_q[-LOCK_WINDOW:] ** 2
    denom = i2.sum() + q2.sum()
    if denom == 0.0:
        return False
    return (i2.sum() - q2.sum()) / denom > LOCK_THRESHOLD


# --- loop filters ---

class LoopFilter:
    """Discrete loop filter of order 1-3 with trapezoidal integrators.

    The closed-loop noise bandwidth approximates the requested value via the
    standard natural-frequency mappings. State survives bandwidth changes.
    """

    def __init__(self, order: int, bandwidth: float, t_int: float):
        if order not in (1, 2, 3):
            raise ValueError("filter order must be 1, 2 or 3")
        if bandwidth * t_int >= 0.4:
            raise ConfigurationRejected(
                f"bandwidth {bandwidth:.1f} Hz at t_int {t_int*1e3:.0f} ms "
                "violates the stability guard")
        self.order = order
        self.t_int = t_int
        self.integrator_1 = 0.0
        self.integrator_2 = 0.0
        self.last_output = 0.0
        self._e_prev = 0.0
        self.set_bandwidth(bandwidth)

    def set_bandwidth(self, bandwidth: float):
        if bandwidth * self.t_int >= 0.4:
            raise ConfigurationRejected("stability guard violated")
        self.bandwidth = bandwidth
        self.omega = bandwidth * _OMEGA_SCALE[self.order]

    def bias(self, value: float):
        """Preload the rate integrator (post-acquisition hand-off)."""
        self.integrator_1 = value

    def step(self, e: float) -> float:
        t, w = self.t_int, self.omega
        if self.order == 1:
            out = w * e
        elif self.order == 2:
            self.integrator_1 += 0.5 * t * w * w * (e + self._e_prev)
            out = self.integrator_1 + _A2 * w * e
        else:
            acc = self.integrator_2 + 0.5 * t * w**3 * (e + self._e_prev)
            self.integrator_1 += (0.5 * t * (self.integrator_2 + acc)
                                  + 0.5 * t * _A3 * w * w * (e + self._e_prev))
            self.integrator_2 = acc
            out = self.integrator_1 + _B3 * w * e
        self._e_prev = e
        self.last_output = out
        return out


def design_loop_filter(order: int, bandwidth: float, t_int: float) -> LoopFilter:
    """Build a loop filter; raises ConfigurationRejected on the guard."""
    return LoopFilter(order, bandwidth, t_int)


class CarrierLoopFilter:
    """Phase branch of order p assisted by a frequency branch of order p-1.

    Both discriminator outputs are summed into one NCO frequency command;
    the frequency branch enters one integrator level above the phase
    proportional path. Inputs: phase error [cycles], frequency error [Hz];
    output [Hz].
    """

    def __init__(self, pll_order: int, pll_bw: float, fll_bw: float, t_int: float):
        if pll_order not in (2, 3):
            raise ValueError("carrier loop order must be 2 or 3")
        if pll_bw * t_int >= 0.4 or fll_bw * t_int >= 0.4:
            raise ConfigurationRejected("stability guard violated")
        self.order = pll_order
        self.t_int = t_int
        self.integrator_1 = 0.0
        self.integrator_2 = 0.0
        self._e_prev = 0.0
        self._g_prev = 0.0
        self.fll_enabled = True
        self.set_bandwidth(pll_bw, fll_bw)

    def set_bandwidth(self, pll_bw: float, fll_bw: Optional[float]):
        """Retune bandwidths; fll_bw=None disables the frequency branch."""
        if pll_bw * self.t_int >= 0.4:
            raise ConfigurationRejected("stability guard violated")
        self.pll_bw = pll_bw
        self.omega = pll_bw * _OMEGA_SCALE[self.order]
        if fll_bw is None:
            self.fll_enabled = False
            self.omega_f = 0.0
        else:
            if fll_bw * self.t_int >= 0.4:
                raise ConfigurationRejected("stability guard violated")
            self.fll_enabled = True
            self.omega_f = fll_bw * _OMEGA_SCALE[self.order - 1]

    def bias(self, f0: float):
        self.integrator_1 = f0

    def step(self, e: float, g: float) -> float:
        """e: phase error [cycles]; g: frequency error [Hz] (ignored when
        the frequency branch is off)."""
        t, w, wf = self.t_int, self.omega, self.omega_f
        if not self.fll_enabled:
            g = 0.0
            self._g_prev = 0.0
        es = e + self._e_prev
        gs = g + self._g_prev
        if self.order == 2:
            self.integrator_1 += 0.5 * t * (w * w * es + wf * gs)
            out = self.integrator_1 + _A2 * w * e
        else:
            acc = self.integrator_2 + 0.5 * t * (w**3 * es + wf * wf * gs)
            self.integrator_1 += (0.5 * t * (self.integrator_2 + acc)
                                  + 0.5 * t * (_A3 * w * w * es + _A2 * wf * gs))
            self.integrator_2 = acc
            out = self.integrator_1 + _B3 * w * e
        self._e_prev = e
        self._g_prev = g
        return out


# --- channel bank ---

@dataclass
class InitErrors:
    """Post-acquisition hand-off error magnitudes (uniform draws)."""

    code_chips: float = 0.25
    freq_hz: float = 100.0
    phase_cycles: float = 0.5


@dataclass
class BankTruth:
    """Signal truth sampled on a receiver epoch grid for several channels."""

    prns: List[int]
    t_start: np.ndarray       # (K,)
    t_int: np.ndarray         # (K,)
    sync_epoch: int           # first epoch index using narrow bandwidths
    tau_mid: np.ndarray       # (K, n) [chips]
    phi_start: np.ndarray     # (K, n) [cycles]
    dopp_mid: np.ndarray      # (K, n) [Hz]
    bitfac: np.ndarray        # (K, n)
    tau_start0: np.ndarray    # (n,) truth code delay at the first epoch
    dopp_start0: np.ndarray   # (n,)
    cn0: float
    bit_sync_time: float


def epoch_grid(span: float, t_int_ms: int, bit_sync_time: float):
    """Epoch start times and durations: 1 ms pull-in, then the configured
    integration time from the first bit edge at/after bit_sync_time."""
    from .constants import BIT_PERIOD
    t_sync = math.ceil(max(bit_sync_time, 0.0) / BIT_PERIOD - 1e-9) * BIT_PERIOD
    t_sync = min(t_sync, span)
    n_pre = int(round(t_sync / 1e-3))
    t_pre = np.arange(n_pre) * 1e-3
    t_post_int = t_int_ms * 1e-3
    n_post = int(math.floor((span - t_sync) / t_post_int + 1e-9))
    t_post = t_sync + np.arange(n_post) * t_post_int
    t_start = np.concatenate([t_pre, t_post])
    t_int = np.concatenate([np.full(n_pre, 1e-3), np.full(n_post, t_post_int)])
    return t_start, t_int, n_pre


def build_bank_truth(
    gt: GroundTruth,
    satellites: Sequence,
    cn0: float,
    t_int_ms: int,
    bit_sync_time: float,
    bit_seed=1234,
) -> BankTruth:
    """Precompute per-channel truth arrays on the shared epoch grid."""
    t_start, t_int, sync_epoch = epoch_grid(gt.span, t_int_ms, bit_sync_time)
    t_mid = t_start + t_int / 2.0
    rx_pos_m, rx_vel_m, _ = gt.sample(t_mid)
    rx_pos_s, _, _ = gt.sample(t_start)
    n = len(satellites)
    k = len(t_start)
    tau_mid = np.empty((k, n))
    phi_start = np.empty((k, n))
    dopp_mid = np.empty((k, n))
    bitfac = np.empty((k, n))
    tau_start0 = np.empty(n)
    dopp_start0 = np.empty(n)
    from .constants import CODE_RATE, L1_WAVELENGTH, SPEED_OF_LIGHT
    for j, sat in enumerate(satellites):
        sp_m, sv_m, _ = gps_state_arrays(sat, t_mid)
        rng_m, rr_m, dop_m = los_arrays(rx_pos_m, rx_vel_m, sp_m, sv_m)
        tau_mid[:, j] = rng_m / SPEED_OF_LIGHT * CODE_RATE
        dopp_mid[:, j] = dop_m
        sp_s, _, _ = gps_state_arrays(sat, t_start)
        rng_s = np.linalg.norm(sp_s - rx_pos_s, axis=1)
        phi_start[:, j] = -rng_s / L1_WAVELENGTH
        bits = BitStream([bit_seed, sat.prn])
        bitfac[:, j] = bits.factor(t_start, t_int)
        tau_start0[j] = rng_s[0] / SPEED_OF_LIGHT * CODE_RATE
        # doppler at the very first epoch start (for NCO initialization)
        p0, v0, _ = gps_state_arrays(sat, t_start[:1])
        rp0, rv0, _ = gt.sample(t_start[:1])
        _, _, d0 = los_arrays(rp0, rv0, p0, v0)
        dopp_start0[j] = d0[0]
    return BankTruth(
        prns=[s.prn for s in satellites],
        t_start=t_start, t_int=t_int, sync_epoch=sync_epoch,
        tau_mid=tau_mid, phi_start=phi_start, dopp_mid=dopp_mid,
        bitfac=bitfac, tau_start0=tau_start0, dopp_start0=dopp_start0,
        cn0=cn0, bit_sync_time=bit_sync_time,
    )


@dataclass
class BankResult:
    """Outcome of a multi-channel tracking run."""

    prns: List[int]
    locked_once: np.ndarray        # (n,) bool
    loss_time: np.ndarray          # (n,) float, nan = never lost
    rejected: bool = False
    # full-rate records (record='full')
    t: Optional[np.ndarray] = None
    code_error: Optional[np.ndarray] = None    # (K, n) [chips]
    freq_error: Optional[np.ndarray] = None    # (K, n) [Hz]
    lock: Optional[np.ndarray] = None          # (K, n) bool
    dll_disc: Optional[np.ndarray] = None
    pll_disc: Optional[np.ndarray] = None
    fll_disc: Optional[np.ndarray] = None
    # measurement-grid records (record='grid')
    grid_t: Optional[np.ndarray] = None
    grid_tau: Optional[np.ndarray] = None      # (G, n) NCO code delay [chips]
    grid_freq: Optional[np.ndarray] = None     # (G, n) NCO doppler [Hz]
    grid_lock: Optional[np.ndarray] = None     # (G, n) bool

    def held_lock(self) -> np.ndarray:
        return self.locked_once & np.isnan(self.loss_time)


def _rejected_result(bank: BankTruth, grid_times) -> BankResult:
    n = len(bank.prns)
    res = BankResult(
        prns=list(bank.prns),
        locked_once=np.zeros(n, dtype=bool),
        loss_time=np.zeros(n),
        rejected=True,
    )
    if grid_times is not None:
        g = len(grid_times)
        res.grid_t = np.asarray(grid_times, dtype=float)
        res.grid_tau = np.full((g, n), np.nan)
        res.grid_freq = np.full((g, n), np.nan)
        res.grid_lock = np.zeros((g, n), dtype=bool)
    return res


def run_bank(
    bank: BankTruth,
    cfg: LoopConfig,
    seed,
    spacing: float = 0.5,
    init: Optional[InitErrors] = None,
    record: str = "full",
    grid_times=None,
    noise: bool = True,
) -> BankResult:
    """Closed-loop tracking of all channels over the full epoch grid.

    Deterministic in (bank, cfg, seed). An unstable narrow configuration is
    not an error: it yields a result with every channel marked lost so the
    cost layer can penalize it.
    """
    if init is None:
        init = InitErrors()
    n = len(bank.prns)
    k_total = len(bank.t_start)
    t_post = cfg.t_int
    # stability guard: pull-in runs at 1 ms, narrow at the configured t_int
    try:
        guards = [
            (cfg.pll_bw, 1e-3), (cfg.dll_bw, 1e-3), (cfg.fll_bw, 1e-3),
            (cfg.pll_narrow_hz, t_post), (cfg.dll_narrow_hz, t_post),
        ]
        for bw, ti in guards:
            if bw * ti >= 0.4:
                raise ConfigurationRejected(
                    f"bandwidth {bw:.1f} Hz unstable at {ti*1e3:.0f} ms")
    except ConfigurationRejected:
        return _rejected_result(bank, grid_times)

    ss = np.random.SeedSequence(seed)
    init_rng, noise_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    dtau0 = init_rng.uniform(-init.code_chips, init.code_chips, n)
    df0 = init_rng.uniform(-init.freq_hz, init.freq_hz, n)
    dphi0 = init_rng.uniform(-init.phase_cycles, init.phase_cycles, n)

    tau_hat = bank.tau_start0 - dtau0
    phi_hat = bank.phi_start[0] - dphi0
    f_hat = bank.dopp_start0 - df0
    code_rate = -f_hat / CARRIER_TO_CODE

    # carrier filter state (vectorized over channels)
    c_int1 = f_hat.copy()
    c_int2 = np.zeros(n)
    c_eprev = np.zeros(n)
    c_gprev = np.zeros(n)
    # code filter state
    d_int1 = np.zeros(n)
    d_int2 = np.zeros(n)
    d_eprev = np.zeros(n)

    w_p = cfg.pll_bw * _OMEGA_SCALE[cfg.pll_order]
    w_f = cfg.fll_bw * _OMEGA_SCALE[cfg.pll_order - 1]
    w_d = cfg.dll_bw * _OMEGA_SCALE[cfg.dll_order]
    amp_pre = math.sqrt(2.0 * 10.0 ** (bank.cn0 / 10.0) * 1e-3)
    amp_post = math.sqrt(2.0 * 10.0 ** (bank.cn0 / 10.0) * t_post)

    ip_prev = np.zeros(n)
    qp_prev = np.zeros(n)

    # lock detector ring buffer
    i2buf = np.zeros((LOCK_WINDOW, n))
    q2buf = np.zeros((LOCK_WINDOW, n))
    s_i2 = np.zeros(n)
    s_q2 = np.zeros(n)

    locked_once = np.zeros(n, dtype=bool)
    lock_streak = np.zeros(n, dtype=int)
    lost = np.zeros(n, dtype=bool)
    loss_time = np.full(n, np.nan)
    dropout_start = np.full(n, np.nan)

    if record == "full":
        rec_code = np.empty((k_total, n))
        rec_freq = np.empty((k_total, n))
        rec_lock = np.zeros((k_total, n), dtype=bool)
        rec_dll = np.empty((k_total, n))
        rec_pll = np.empty((k_total, n))
        rec_fll = np.empty((k_total, n))
    if grid_times is not None:
        grid_times = np.asarray(grid_times, dtype=float)
        g_total = len(grid_times)
        grid_tau = np.full((g_total, n), np.nan)
        grid_freq = np.full((g_total, n), np.nan)
        grid_lock = np.zeros((g_total, n), dtype=bool)
        g_idx = 0

    half = spacing / 2.0
    noise_chunk = 4096
    noise_block = None
    span_end = bank.t_start[-1] + bank.t_int[-1]

    for k in range(k_total):
        t0 = bank.t_start[k]
        t = bank.t_int[k]
        pre = k < bank.sync_epoch
        if k % noise_chunk == 0:
            shape = (min(noise_chunk, k_total - k), n, 6)
            noise_block = noise_rng.standard_normal(shape) if noise else np.zeros(shape)

        tau_mid_hat = tau_hat + code_rate * (t / 2.0)
        dtau = bank.tau_mid[k] - tau_mid_hat
        dphi = bank.phi_start[k] - phi_hat
        df = bank.dopp_mid[k] - f_hat

        amp = (amp_pre if pre else amp_post) * bank.bitfac[k] * np.sinc(df * t)
        theta = np.pi * df * t + TWO_PI * dphi
        cth, sth = np.cos(theta), np.sin(theta)
        re = np.maximum(0.0, 1.0 - np.abs(dtau - half))
        rp = np.maximum(0.0, 1.0 - np.abs(dtau))
        rl = np.maximum(0.0, 1.0 - np.abs(dtau + half))
        z = noise_block[k % noise_chunk]
        ie = amp * re * cth + z[:, 0]
        qe = amp * re * sth + z[:, 1]
        ip = amp * rp * cth + z[:, 2]
        qp = amp * rp * sth + z[:, 3]
        il = amp * rl * cth + z[:, 4]
        ql = amp * rl * sth + z[:, 5]

        e_mag = np.hypot(ie, qe)
        l_mag = np.hypot(il, ql)
        denom = e_mag + l_mag
        e_dll = np.where(denom > 0.0, 0.5 * (e_mag - l_mag) / np.maximum(denom, 1e-30), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            e_pll = np.where(ip != 0.0, np.arctan(qp / np.where(ip == 0.0, 1.0, ip)),
                             np.where(qp != 0.0, np.pi / 2.0, 0.0)) / TWO_PI
        if pre and k > 0:
            cross = ip_prev * qp - ip * qp_prev
            dot = ip_prev * ip + qp_prev * qp
            # two-quadrant: data-bit flips between prompts cancel out
            e_fll = np.arctan2(np.where(dot < 0.0, -cross, cross),
                               np.abs(dot)) / (TWO_PI * t)
        else:
            e_fll = np.zeros(n)

        # lock detector update (100-epoch sliding window of prompt powers)
        bidx = k % LOCK_WINDOW
        s_i2 += ip * ip - i2buf[bidx]
        s_q2 += qp * qp - q2buf[bidx]
        i2buf[bidx] = ip * ip
        q2buf[bidx] = qp * qp
        if k + 1 >= LOCK_WINDOW:
            lock_now = (s_i2 - s_q2) > LOCK_THRESHOLD * (s_i2 + s_q2)
        else:
            lock_now = np.zeros(n, dtype=bool)
        lock_now &= ~lost
        lock_streak = np.where(lock_now, lock_streak + 1, 0)
        locked_once |= lock_streak >= LOCK_CONFIRM

        # loss rules: code divergence / non-finite state at any time;
        # sustained phase unlock only in the narrow phase (during pull-in
        # the frequency branch legitimately tracks without phase lock)
        diverged = (np.abs(dtau) > LOSS_CODE_CHIPS) | ~np.isfinite(f_hat)
        new_loss = diverged & ~lost
        if not pre:
            dropping = locked_once & ~lock_now & ~lost
            fresh_drop = dropping & np.isnan(dropout_start)
            dropout_start[fresh_drop] = t0
            dropout_start[lock_now] = np.nan
            timed_out = dropping & (t0 - dropout_start >= LOSS_DROPOUT_S)
            new_loss |= timed_out & ~lost
        loss_time[new_loss] = t0
        lost |= new_loss
        lock_now &= ~lost

        if record == "full":
            rec_code[k] = dtau
            rec_freq[k] = df
            rec_lock[k] = lock_now
            rec_dll[k] = e_dll
            rec_pll[k] = e_pll * TWO_PI
            rec_fll[k] = e_fll

        if grid_times is not None:
            t_end = t0 + t
            is_last = k == k_total - 1
            while g_idx < g_total and (
                grid_times[g_idx] < t_end - 1e-12
                or (is_last and grid_times[g_idx] <= span_end + 1e-9)
            ):
                dt_g = grid_times[g_idx] - t0
                grid_tau[g_idx] = tau_hat + code_rate * dt_g
                grid_freq[g_idx] = f_hat
                grid_lock[g_idx] = lock_now
                g_idx += 1

        # loop filter updates (new commands for the next epoch)
        if pre:
            es = e_pll + c_eprev
            gs = e_fll + c_gprev
            w, wf = w_p, w_f
            wd = w_d
        else:
            es = e_pll + c_eprev
            gs = np.zeros(n)
            e_fll = np.zeros(n)
            w = cfg.pll_narrow_hz * _OMEGA_SCALE[cfg.pll_order]
            wf = 0.0
            wd = cfg.dll_narrow_hz * _OMEGA_SCALE[cfg.dll_order]
        if cfg.pll_order == 2:
            c_int1 += 0.5 * t * (w * w * es + wf * gs)
            f_cmd = c_int1 + _A2 * w * e_pll
        else:
            acc = c_int2 + 0.5 * t * (w**3 * es + wf * wf * gs)
            c_int1 += 0.5 * t * (c_int2 + acc) + 0.5 * t * (_A3 * w * w * es + _A2 * wf * gs)
            c_int2 = acc
            f_cmd = c_int1 + _B3 * w * e_pll
        c_eprev = e_pll
        c_gprev = e_fll

        des = e_dll + d_eprev
        if cfg.dll_order == 1:
            d_out = wd * e_dll
        elif cfg.dll_order == 2:
            d_int1 += 0.5 * t * wd * wd * des
            d_out = d_int1 + _A2 * wd * e_dll
        else:
            dacc = d_int2 + 0.5 * t * wd**3 * des
            d_int1 += 0.5 * t * (d_int2 + dacc) + 0.5 * t * _A3 * wd * wd * des
            d_int2 = dacc
            d_out = d_int1 + _B3 * wd * e_dll
        d_eprev = e_dll

        # propagate NCOs through this epoch with the commands that were
        # active during it, then latch the new commands
        tau_hat = tau_hat + code_rate * t
        phi_hat = phi_hat + f_hat * t
        f_hat = f_cmd
        code_rate = -f_hat / CARRIER_TO_CODE + d_out
        ip_prev, qp_prev = ip, qp

    result = BankResult(
        prns=list(bank.prns),
        locked_once=locked_once,
        loss_time=loss_time,
    )
    if record == "full":
        result.t = bank.t_start.copy()
        result.code_error = rec_code
        result.freq_error = rec_freq
        result.lock = rec_lock
        result.dll_disc = rec_dll
        result.pll_disc = rec_pll
        result.fll_disc = rec_fll
    if grid_times is not None:
        result.grid_t = grid_times
        result.grid_tau = grid_tau
        result.grid_freq = grid_freq
        result.grid_lock = grid_lock
    return result


@dataclass
class ChannelTrack:
    """Full-rate tracking record of a single channel."""

    prn: int
    t: np.ndarray
    t_int: np.ndarray
    code_error: np.ndarray
    freq_error: np.ndarray
    lock: np.ndarray
    dll_disc: np.ndarray
    pll_disc: np.ndarray
    fll_disc: np.ndarray
    loss_of_lock_time: Optional[float]

    def to_csv(self, path):
        cols = np.column_stack([
            self.t, self.code_error, self.freq_error, self.lock.astype(int),
            self.dll_disc, self.pll_disc, self.fll_disc,
        ])
        np.savetxt(path, cols, delimiter=",",
                   header="t,code_error_chips,freq_error_hz,lock,dll,pll,fll",
                   comments="")


def run_channel(
    truth: ChannelTruth,
    cfg: LoopConfig,
    seed,
    spacing: float = 0.5,
    init: Optional[InitErrors] = None,
) -> ChannelTrack:
    """Closed-loop run of one channel over the full trajectory."""
    if truth.gt.span < 1.0:
        raise ValueError("trajectory span must be at least 1 s")
    bank = build_bank_truth(
        truth.gt, [truth.sat], truth.cn0, cfg.t_int_ms, truth.bit_sync_time,
        bit_seed=1234,
    )
    res = run_bank(bank, cfg, seed, spacing=spacing, init=init, record="full")
    loss = res.loss_time[0]
    return ChannelTrack(
        prn=truth.prn,
        t=res.t,
        t_int=bank.t_int,
        code_error=res.code_error[:, 0],
        freq_error=res.freq_error[:, 0],
        lock=res.lock[:, 0],
        dll_disc=res.dll_disc[:, 0],
        pll_disc=res.pll_disc[:, 0],
        fll_disc=res.fll_disc[:, 0],
        loss_of_lock_time=None if math.isnan(loss) else float(loss),
    )
