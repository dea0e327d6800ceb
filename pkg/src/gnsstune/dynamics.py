"""Ground-truth trajectory generation for the three dynamic scenarios.

Static receiver, sounding rocket (3-DOF point mass) and LEO satellite
(two-body + J2 + atmospheric drag, fixed-step RK4). All trajectories are
delivered as uniformly sampled ECEF state series.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .constants import (
    ECC2,
    J2_EARTH,
    MU_EARTH,
    OMEGA_EARTH,
    R_EARTH,
)


class InvalidStateError(ValueError):
    """Raised when a kinematic state violates a model precondition."""


class PropagationError(RuntimeError):
    """Raised when numerical integration produces a non-finite state."""


@dataclass
class EcefState:
    """Receiver state at one instant: position/velocity/acceleration in ECEF."""

    t: float
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


class GroundTruth:
    """Uniformly sampled trajectory with cubic-Hermite interpolation.

    Arrays are (N,) time and (N, 3) position [m], velocity [m/s] and
    acceleration [m/s^2], all in ECEF.
    """

    def __init__(self, t, position, velocity, acceleration, sample_rate, scenario_tag):
        self.t = np.asarray(t, dtype=float)
        self.position = np.asarray(position, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)
        self.acceleration = np.asarray(acceleration, dtype=float)
        self.sample_rate = float(sample_rate)
        self.scenario_tag = scenario_tag
        if self.t.size < 2:
            raise ValueError("ground truth needs at least two samples")
        dt = np.diff(self.t)
        if not np.allclose(dt, dt[0], rtol=0, atol=1e-9):
            raise ValueError("ground truth timestamps must be uniform")
        if dt[0] <= 0:
            raise ValueError("ground truth timestamps must be increasing")

    def __len__(self):
        return self.t.size

    @property
    def span(self):
        return float(self.t[-1] - self.t[0])

    @property
    def t_start(self):
        return float(self.t[0])

    @property
    def t_end(self):
        return float(self.t[-1])

    def state(self, i: int) -> EcefState:
        return EcefState(
            float(self.t[i]),
            self.position[i].copy(),
            self.velocity[i].copy(),
            self.acceleration[i].copy(),
        )

    def sample(self, times):
        """Interpolate (position, velocity, acceleration) at arbitrary times.

        Position uses cubic Hermite from stored position/velocity; velocity
        uses cubic Hermite from stored velocity/acceleration; acceleration
        is interpolated linearly. Times must lie within the stored span.
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        h = 1.0 / self.sample_rate
        if times.min() < self.t[0] - 1e-9 or times.max() > self.t[-1] + 1e-9:
            raise ValueError("sample times outside ground-truth span")
        idx = np.clip(((times - self.t[0]) / h).astype(int), 0, len(self) - 2)
        s = ((times - self.t[idx]) / h)[:, None]
        p0, p1 = self.position[idx], self.position[idx + 1]
        v0, v1 = self.velocity[idx], self.velocity[idx + 1]
        a0, a1 = self.acceleration[idx], self.acceleration[idx + 1]
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        pos = h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1
        vel = h00 * v0 + h10 * h * a0 + h01 * v1 + h11 * h * a1
        acc = (1 - s) * a0 + s * a1
        return pos, vel, acc

    def slice(self, t0: float, t1: float) -> "GroundTruth":
        """Return the sub-trajectory with t0 <= t <= t1 (existing samples only)."""
        m = (self.t >= t0 - 1e-9) & (self.t <= t1 + 1e-9)
        return GroundTruth(
            self.t[m], self.position[m], self.velocity[m], self.acceleration[m],
            self.sample_rate, self.scenario_tag,
        )

    def to_csv(self, path, header_lines: Sequence[str] = ()):
        cols = np.column_stack(
            [self.t, self.position, self.velocity, self.acceleration]
        )
        header = "".join(f"# {line}\n" for line in header_lines)
        header += "t,x,y,z,vx,vy,vz,ax,ay,az"
        np.savetxt(path, cols, delimiter=",", header=header, comments="")

    @classmethod
    def from_csv(cls, path, sample_rate, scenario_tag):
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("t,"):
                    continue
                rows.append([float(v) for v in line.split(",")])
        data = np.asarray(rows)
        return cls(data[:, 0], data[:, 1:4], data[:, 4:7], data[:, 7:10],
                   sample_rate, scenario_tag)


# --- geodetic conversions ---

def geodetic_to_ecef(lat_deg: float, lon_deg: float, h: float) -> np.ndarray:
    """WGS-84 geodetic coordinates to ECEF position [m]."""
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    n = R_EARTH / math.sqrt(1.0 - ECC2 * sl * sl)
    return np.array([
        (n + h) * cl * math.cos(lon),
        (n + h) * cl * math.sin(lon),
        (n * (1.0 - ECC2) + h) * sl,
    ])

def ecef_to_geodetic(pos) -> tuple:
    """ECEF position to WGS-84 (lat deg, lon deg, height m), iterative."""
    x, y, z = float(pos[0]), float(pos[1]), float(pos[2])
    lon = math.atan2(y, x)
    p = math.hypot(x, y)
    lat = math.atan2(z, p * (1.0 - ECC2))
    h = 0.0
    for _ in range(10):
        sl = math.sin(lat)
        n = R_EARTH / math.sqrt(1.0 - ECC2 * sl * sl)
        h = p / math.cos(lat) - n
        lat = math.atan2(z, p * (1.0 - ECC2 * n / (n + h)))
    return math.degrees(lat), math.degrees(lon), h


def enu_matrix(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Columns are the local East/North/Up unit vectors in ECEF."""
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    sf, cf = math.sin(lat), math.cos(lat)
    sl, cl = math.sin(lon), math.cos(lon)
    return np.array([
        [-sl, -sf * cl, cf * cl],
        [cl, -sf * sl, cf * sl],
        [0.0, cf, sf],
    ])


# --- atmosphere ---

# Piecewise exponential density model: (base altitude [m], density [kg/m^3],
# scale height [m]) per band, low altitudes through LEO.
_ATMOSPHERE_BANDS = [
    (0.0, 1.225, 7249.0),
    (25e3, 3.899e-2, 6349.0),
    (30e3, 1.774e-2, 6682.0),
    (40e3, 3.972e-3, 7554.0),
    (50e3, 1.057e-3, 8382.0),
    (60e3, 3.206e-4, 7714.0),
    (70e3, 8.770e-5, 6549.0),
    (80e3, 1.905e-5, 5799.0),
    (90e3, 3.396e-6, 5382.0),
    (100e3, 5.297e-7, 5877.0),
    (110e3, 9.661e-8, 7263.0),
    (120e3, 2.438e-8, 9473.0),
    (130e3, 8.484e-9, 12636.0),
    (140e3, 3.845e-9, 16149.0),
    (150e3, 2.070e-9, 22523.0),
    (180e3, 5.464e-10, 29740.0),
    (200e3, 2.789e-10, 37105.0),
    (250e3, 7.248e-11, 45546.0),
    (300e3, 2.418e-11, 53628.0),
    (350e3, 9.518e-12, 53298.0),
    (400e3, 3.725e-12, 58515.0),
    (450e3, 1.585e-12, 60828.0),
    (500e3, 6.967e-13, 63822.0),
    (600e3, 1.454e-13, 71835.0),
    (700e3, 3.614e-14, 88667.0),
    (800e3, 1.170e-14, 124640.0),
    (900e3, 5.245e-15, 181050.0),
    (1000e3, 3.019e-15, 268000.0),
]


def atmosphere_density(h: float) -> float:
    """Exponential-band atmospheric density [kg/m^3] at altitude h [m]."""
    if h < 0.0:
        h = 0.0
    band = _ATMOSPHERE_BANDS[0]
    for b in _ATMOSPHERE_BANDS:
        if h >= b[0]:
            band = b
        else:
            break
    h0, rho0, scale = band
    return rho0 * math.exp(-(h - h0) / scale)


def zero_density(h: float) -> float:
    return 0.0


# --- LEO satellite ---

@dataclass
class LeoElements:
    """Classical orbital elements; altitude stands in for the semi-major axis."""

    altitude: float          # mean altitude above equatorial radius [m]
    eccentricity: float
    inclination: float       # [deg]
    arg_perigee: float       # [deg]
    raan: float              # [deg]
    true_anomaly: float      # [deg]

    def __post_init__(self):
        if not 0.0 <= self.eccentricity < 1.0:
            raise ValueError("eccentricity must be in [0, 1)")
        if not 0.0 <= self.inclination <= 180.0:
            raise ValueError("inclination must be in [0, 180] deg")

    @property
    def semi_major_axis(self):
        return R_EARTH + self.altitude


@dataclass
class LeoPerturbationParams:
    """Perturbation-force coefficients for LEO propagation."""

    j2: float = J2_EARTH
    re: float = R_EARTH
    mu: float = MU_EARTH
    cd: float = 2.2
    area: float = 4.0        # cross-section [m^2]
    mass: float = 400.0      # [kg]
    atmosphere: Callable[[float], float] = atmosphere_density


def accel_j2(position_eci, params: LeoPerturbationParams) -> np.ndarray:
    """J2 oblateness perturbation [m/s^2] at an ECI position.

    Sign convention gives westward nodal regression for prograde orbits.
    """
    x, y, z = float(position_eci[0]), float(position_eci[1]), float(position_eci[2])
    r2 = x * x + y * y + z * z
    r = math.sqrt(r2)
    if r <= params.re:
        raise InvalidStateError("position inside Earth radius")
    k = -1.5 * params.j2 * params.mu * params.re ** 2 / (r2 * r2 * r)
    zz = 5.0 * z * z / r2
    return np.array([
        k * x * (1.0 - zz),
        k * y * (1.0 - zz),
        k * z * (3.0 - zz),
    ])


def accel_drag(state: EcefState, params: LeoPerturbationParams) -> np.ndarray:
    """Atmospheric drag acceleration [m/s^2] for an inertial-frame state.

    The airmass co-rotates with the Earth, so the relative velocity is the
    inertial velocity minus the rotation velocity omega x r.
    """
    x, y, z = state.position
    vx, vy, vz = state.velocity
    rx = vx + OMEGA_EARTH * y
    ry = vy - OMEGA_EARTH * x
    rz = vz
    vrel = math.sqrt(rx * rx + ry * ry + rz * rz)
    if vrel == 0.0:
        return np.zeros(3)
    h = math.sqrt(x * x + y * y + z * z) - params.re
    rho = params.atmosphere(h)
    k = -0.5 * params.cd * params.area / params.mass * rho * vrel
    return np.array([k * rx, k * ry, k * rz])


def elements_to_eci(elements: LeoElements, mu: float = MU_EARTH):
    """Classical elements to inertial position/velocity vectors."""
    a = elements.semi_major_axis
    e = elements.eccentricity
    p = a * (1.0 - e * e)
    nu = math.radians(elements.true_anomaly)
    r = p / (1.0 + e * math.cos(nu))
    r_pf = np.array([r * math.cos(nu), r * math.sin(nu), 0.0])
    v_pf = math.sqrt(mu / p) * np.array([-math.sin(nu), e + math.cos(nu), 0.0])

    def rz(th):
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def rx(th):
        c, s = math.cos(th), math.sin(th)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])

    rot = rz(math.radians(elements.raan)) @ rx(math.radians(elements.inclination)) \
        @ rz(math.radians(elements.arg_perigee))
    return rot @ r_pf, rot @ v_pf


def eci_to_ecef_arrays(t, pos_i, vel_i, acc_i):
    """Rotate inertial state arrays into the rotating ECEF frame.

    Simple rotation about z at Earth rate; frames aligned at t = 0. Velocity
    and acceleration are the apparent (rotating-frame) derivatives.
    """
    t = np.asarray(t, dtype=float)
    th = OMEGA_EARTH * t
    c, s = np.cos(th), np.sin(th)

    def rot(v):
        return np.column_stack([
            c * v[:, 0] + s * v[:, 1],
            -s * v[:, 0] + c * v[:, 1],
            v[:, 2],
        ])

    def cross_omega(u):
        # omega x u for omega = OMEGA_EARTH * z_hat
        return OMEGA_EARTH * np.column_stack([-u[:, 1], u[:, 0], np.zeros(len(u))])

    pos_e = rot(pos_i)
    vel_e = rot(vel_i) - cross_omega(pos_e)
    acc_e = rot(acc_i) - 2.0 * cross_omega(vel_e) - cross_omega(cross_omega(pos_e))
    return pos_e, vel_e, acc_e


def _leo_accel_eci(t, pos, vel, params: LeoPerturbationParams) -> np.ndarray:
    x, y, z = pos
    r2 = x * x + y * y + z * z
    r = math.sqrt(r2)
    k = -params.mu / (r2 * r)
    acc = np.array([k * x, k * y, k * z])
    if params.j2 != 0.0:
        acc = acc + accel_j2(pos, params)
    acc = acc + accel_drag(EcefState(t, pos, vel, np.zeros(3)), params)
    return acc


def propagate_leo(
    elements: LeoElements,
    params: Optional[LeoPerturbationParams] = None,
    duration: float = 600.0,
    step: float = 0.05,
    scenario_tag: str = "leo",
) -> GroundTruth:
    """Propagate a LEO orbit (two-body + J2 + drag) with fixed-step RK4.

    Integrates in the inertial frame and returns the ECEF trajectory at the
    integration rate. ``step`` must not exceed 0.1 s.
    """
    if step > 0.1 + 1e-12:
        raise ValueError("integration step must be <= 0.1 s")
    if params is None:
        params = LeoPerturbationParams()
    n = int(round(duration / step))
    r, v = elements_to_eci(elements, params.mu)
    t_arr = np.arange(n + 1) * step
    pos = np.empty((n + 1, 3))
    vel = np.empty((n + 1, 3))
    acc = np.empty((n + 1, 3))
    pos[0], vel[0] = r, v
    acc[0] = _leo_accel_eci(0.0, r, v, params)
    for k in range(n):
        t = k * step
        a1 = acc[k]
        k1r, k1v = v, a1
        r2 = r + 0.5 * step * k1r
        v2 = v + 0.5 * step * k1v
        k2v = _leo_accel_eci(t + 0.5 * step, r2, v2, params)
        r3 = r + 0.5 * step * v2
        v3 = v + 0.5 * step * k2v
        k3v = _leo_accel_eci(t + 0.5 * step, r3, v3, params)
        r4 = r + step * v3
        v4 = v + step * k3v
        k4v = _leo_accel_eci(t + step, r4, v4, params)
        r = r + step / 6.0 * (k1r + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + step / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (math.isfinite(r[0]) and math.isfinite(v[0])):
            raise PropagationError(f"integration diverged at t={t + step:.2f}s")
        pos[k + 1], vel[k + 1] = r, v
        acc[k + 1] = _leo_accel_eci(t + step, r, v, params)
    pos_e, vel_e, acc_e = eci_to_ecef_arrays(t_arr, pos, vel, acc)
    return GroundTruth(t_arr, pos_e, vel_e, acc_e, 1.0 / step, scenario_tag)


# --- sounding rocket ---

class ThrustProfile:
    """Piecewise-linear thrust curve t -> N."""

    def __init__(self, points):
        pts = sorted(points)
        self._t = np.array([p[0] for p in pts], dtype=float)
        self._f = np.array([p[1] for p in pts], dtype=float)

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self._t, self._f, left=0.0, right=0.0))

    @classmethod
    def boost(cls, thrust, ignition, burn_time, ramp_up=0.2, ramp_down=0.3):
        """Constant-thrust boost with short linear ignition/tail-off ramps."""
        return cls([
            (0.0, 0.0),
            (ignition, 0.0),
            (ignition + ramp_up, thrust),
            (ignition + burn_time - ramp_down, thrust),
            (ignition + burn_time, 0.0),
        ])


@dataclass
class RocketParams:
    """Point-mass sounding-rocket model parameters.

    Defaults are tuned so the trajectory reproduces the published flight
    envelope: apogee 5885 m, max speed 875 m/s, peak acceleration 40 g.
    """

    thrust: float = 20715.0          # constant boost thrust [N]
    burn_time: float = 2.667         # [s], includes ignition/tail ramps
    ignition_delay: float = 5.0      # pad hold before ignition [s]
    dry_mass: float = 38.0           # [kg]
    propellant_mass: float = 26.0    # [kg]
    drag_coefficient: float = 0.3518
    reference_area: float = 0.0324   # [m^2]
    launch_elevation: float = 45.0   # [deg]
    launch_azimuth: float = 190.0    # [deg] clockwise from north
    launch_lat: float = 37.097       # [deg]
    launch_lon: float = -6.738       # [deg]
    launch_height: float = 40.0      # [m]
    rail_length: float = 10.0        # launch-rail guided distance [m]
    thrust_profile: Optional[Callable[[float], float]] = None
    atmosphere: Callable[[float], float] = atmosphere_density

    def __post_init__(self):
        if self.burn_time <= 0:
            raise ValueError("burn_time must be positive")
        if self.dry_mass <= 0 or self.propellant_mass < 0:
            raise ValueError("masses must be positive")
        if self.thrust_profile is None:
            self.thrust_profile = ThrustProfile.boost(
                self.thrust, self.ignition_delay, self.burn_time
            )

    def mass(self, t: float) -> float:
        frac = min(max((t - self.ignition_delay) / self.burn_time, 0.0), 1.0)
        return self.dry_mass + self.propellant_mass * (1.0 - frac)


def _rocket_accel_enu(t, pos, vel, params: RocketParams, launch_dir, g_site):
    h = pos[2] + params.launch_height
    m = params.mass(t)
    thrust = params.thrust_profile(t)
    speed = math.sqrt(vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2)
    rho = params.atmosphere(max(h, 0.0))
    dist = math.sqrt(pos[0] ** 2 + pos[1] ** 2 + pos[2] ** 2)
    if dist < params.rail_length:
        # guided phase: motion constrained along the rail axis
        a_rail = (
            thrust / m
            - g_site * launch_dir[2]
            - 0.5 * rho * params.drag_coefficient * params.reference_area
            * speed * speed / m
        )
        if a_rail < 0.0 and speed < 0.1:
            return np.zeros(3)   # held on the pad
        return a_rail * np.asarray(launch_dir)
    if speed > 1.0:
        ux, uy, uz = vel[0] / speed, vel[1] / speed, vel[2] / speed
    else:
        ux, uy, uz = launch_dir
    drag = -0.5 * rho * params.drag_coefficient * params.reference_area * speed / m
    at = thrust / m
    return np.array([
        at * ux + drag * vel[0],
        at * uy + drag * vel[1],
        at * uz + drag * vel[2] - g_site,
    ])


def simulate_rocket(
    params: Optional[RocketParams] = None,
    duration: Optional[float] = None,
    step: float = 0.01,
    scenario_tag: str = "rocket",
) -> GroundTruth:
    """Simulate the sounding-rocket trajectory and return ECEF ground truth.

    Point-mass model: thrust along the velocity vector (launch attitude while
    still on the rail), inverse-square gravity, axial drag. The trajectory is
    truncated at ground impact if it occurs before ``duration``.
    """
    if params is None:
        params = RocketParams()
    if duration is None:
        duration = params.ignition_delay + 70.0
    if duration < params.ignition_delay + 70.0 - 1e-9:
        raise ValueError("duration must cover the 70 s flight")
    el = math.radians(params.launch_elevation)
    az = math.radians(params.launch_azimuth)
    launch_dir = (
        math.cos(el) * math.sin(az),
        math.cos(el) * math.cos(az),
        math.sin(el),
    )
    g_site = MU_EARTH / (R_EARTH + params.launch_height) ** 2
    n = int(round(duration / step))
    pos = np.zeros((n + 1, 3))
    vel = np.zeros((n + 1, 3))
    acc = np.zeros((n + 1, 3))
    r = np.zeros(3)
    v = np.zeros(3)
    acc[0] = _rocket_accel_enu(0.0, r, v, params, launch_dir, g_site)
    last = n
    for k in range(n):
        t = k * step

        def f(tt, rr, vv):
            return _rocket_accel_enu(tt, rr, vv, params, launch_dir, g_site)

        a1 = f(t, r, v)
        r2, v2 = r + 0.5 * step * v, v + 0.5 * step * a1
        a2 = f(t + 0.5 * step, r2, v2)
        r3, v3 = r + 0.5 * step * v2, v + 0.5 * step * a2
        a3 = f(t + 0.5 * step, r3, v3)
        r4, v4 = r + step * v3, v + step * a3
        a4 = f(t + step, r4, v4)
        r = r + step / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + step / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        pos[k + 1], vel[k + 1] = r, v
        acc[k + 1] = f(t + step, r, v)
        if r[2] < 0.0 and t > params.ignition_delay:
            last = k + 1
            break
    t_arr = np.arange(last + 1) * step
    pos, vel, acc = pos[: last + 1], vel[: last + 1], acc[: last + 1]
    site = geodetic_to_ecef(params.launch_lat, params.launch_lon, params.launch_height)
    rot = enu_matrix(params.launch_lat, params.launch_lon)
    return GroundTruth(
        t_arr,
        site + pos @ rot.T,
        vel @ rot.T,
        acc @ rot.T,
        1.0 / step,
        scenario_tag,
    )


# --- static receiver ---

def static_truth(
    lat: float,
    lon: float,
    h: float = 0.0,
    duration: float = 180.0,
    sample_rate: float = 20.0,
    scenario_tag: str = "static",
) -> GroundTruth:
    """Constant-position truth at a WGS-84 geodetic site; zero velocity."""
    n = int(round(duration * sample_rate))
    t = np.arange(n + 1) / sample_rate
    pos = np.tile(geodetic_to_ecef(lat, lon, h), (n + 1, 1))
    zeros = np.zeros((n + 1, 3))
    return GroundTruth(t, pos, zeros, zeros.copy(), sample_rate, scenario_tag)
