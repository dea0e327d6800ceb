"""Nominal GPS constellation and receiver-satellite line-of-sight observables.

Satellites fly circular orbits (two-body, no perturbations) and are reported
in ECEF so they combine directly with the trajectory ground truth. Geometry
fidelity at the centimeter level is irrelevant here: the tracking loops are
stressed by line-of-sight kinematics, not absolute ranges.
"""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .constants import (
    CARRIER_TO_CODE,
    GPS_INCLINATION,
    GPS_SMA,
    L1_WAVELENGTH,
    MU_EARTH,
    OMEGA_EARTH,
    R_EARTH,
)
from .dynamics import EcefState, ecef_to_geodetic, enu_matrix


class DegenerateGeometryError(ValueError):
    """Raised when receiver and satellite positions coincide."""


@dataclass(frozen=True)
class GpsSatellite:
    """Circular-orbit GPS satellite: PRN plus orbital-plane geometry."""

    prn: int
    semi_major_axis: float = GPS_SMA
    inclination: float = GPS_INCLINATION   # [deg]
    raan: float = 0.0                      # [deg]
    arg_lat_epoch: float = 0.0             # argument of latitude at t=0 [deg]


@dataclass(frozen=True)
class LosObservable:
    prn: int
    range: float            # [m]
    range_rate: float       # [m/s]
    range_accel: float      # [m/s^2]
    elevation: float        # [deg]
    azimuth: float          # [deg]
    carrier_doppler: float  # [Hz]
    code_doppler: float     # [chips/s]


def gps_state_arrays(sat: GpsSatellite, t):
    """Vectorized ECEF position/velocity/acceleration of one satellite.

    Returns three (K, 3) arrays for a (K,) array of times.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    a = sat.semi_major_axis
    n = math.sqrt(MU_EARTH / a**3)
    u = math.radians(sat.arg_lat_epoch) + n * t
    cu, su = np.cos(u), np.sin(u)
    inc = math.radians(sat.inclination)
    ci, si = math.cos(inc), math.sin(inc)
    raan = math.radians(sat.raan)
    co, so = math.cos(raan), math.sin(raan)
    # in-plane -> ECI (Rz(raan) @ Rx(inc) on the orbital-plane basis)
    px = co * cu - so * ci * su
    py = so * cu + co * ci * su
    pz = si * su
    vx = -co * su - so * ci * cu
    vy = -so * su + co * ci * cu
    vz = si * cu
    pos_i = a * np.column_stack([px, py, pz])
    vel_i = a * n * np.column_stack([vx, vy, vz])
    acc_i = -(MU_EARTH / a**3) * pos_i
    th = OMEGA_EARTH * t
    c, s = np.cos(th), np.sin(th)

    def rot(v):
        return np.column_stack(
            [c * v[:, 0] + s * v[:, 1], -s * v[:, 0] + c * v[:, 1], v[:, 2]]
        )

    def wx(v):
        return OMEGA_EARTH * np.column_stack(
            [-v[:, 1], v[:, 0], np.zeros(len(v))]
        )

    pos_e = rot(pos_i)
    vel_e = rot(vel_i) - wx(pos_e)
    acc_e = rot(acc_i) - 2.0 * wx(vel_e) - wx(wx(pos_e))
    return pos_e, vel_e, acc_e


def propagate_gps(sat: GpsSatellite, t: float) -> EcefState:
    """ECEF state of one satellite at time t."""
    pos, vel, acc = gps_state_arrays(sat, [t])
    return EcefState(float(t), pos[0], vel[0], acc[0])


def line_of_sight(rx: EcefState, sat: EcefState, prn: int = 0) -> LosObservable:
    """Receiver-to-satellite observables from two ECEF states."""
    dr = sat.position - rx.position
    rng = float(np.linalg.norm(dr))
    if rng == 0.0:
        raise DegenerateGeometryError("receiver and satellite coincide")
    u = dr / rng
    dv = sat.velocity - rx.velocity
    rr = float(dv @ u)
    da = sat.acceleration - rx.acceleration
    ra = float((da @ dr + dv @ dv - rr * rr) / rng)
    lat, lon, _ = ecef_to_geodetic(rx.position)
    enu = enu_matrix(lat, lon).T @ u
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, enu[2]))))
    azimuth = math.degrees(math.atan2(enu[0], enu[1])) % 360.0
    doppler = -rr / L1_WAVELENGTH
    return LosObservable(
        prn=prn,
        range=rng,
        range_rate=rr,
        range_accel=ra,
        elevation=elevation,
        azimuth=azimuth,
        carrier_doppler=doppler,
        code_doppler=doppler / CARRIER_TO_CODE,
    )


def los_arrays(rx_pos, rx_vel, sat_pos, sat_vel):
    """Vectorized range / range-rate / doppler over (K, 3) state arrays."""
    dr = sat_pos - rx_pos
    rng = np.linalg.norm(dr, axis=-1)
    u = dr / rng[..., None]
    rr = np.sum((sat_vel - rx_vel) * u, axis=-1)
    doppler = -rr / L1_WAVELENGTH
    return rng, rr, doppler


class Constellation:
    """A set of GPS satellites addressable by PRN."""

    def __init__(self, satellites: List[GpsSatellite]):
        prns = [s.prn for s in satellites]
        if len(set(prns)) != len(prns):
            raise ValueError("duplicate PRN in constellation")
        self.satellites = list(satellites)
        self._by_prn = {s.prn: s for s in satellites}

    def __iter__(self):
        return iter(self.satellites)

    def __len__(self):
        return len(self.satellites)

    def sat(self, prn: int) -> GpsSatellite:
        return self._by_prn[prn]

    def state(self, prn: int, t: float) -> EcefState:
        st = propagate_gps(self._by_prn[prn], t)
        return EcefState(st.t, st.position, st.velocity, st.acceleration)


def default_constellation() -> Constellation:
    """Nominal 24-slot constellation: 6 planes x 4 slots, Walker-style phasing."""
    sats = []
    for plane in range(6):
        for slot in range(4):
            sats.append(
                GpsSatellite(
                    prn=plane * 4 + slot + 1,
                    raan=60.0 * plane,
                    arg_lat_epoch=(90.0 * slot + 15.0 * plane) % 360.0,
                )
            )
    return Constellation(sats)


def limb_visible(rx_pos, sat_pos, occlusion_radius: float = R_EARTH) -> bool:
    """Geometric Earth-limb test: is the straight line rx->sat unobstructed?"""
    rx_pos = np.asarray(rx_pos, dtype=float)
    d = np.asarray(sat_pos, dtype=float) - rx_pos
    dist = np.linalg.norm(d)
    if dist == 0.0:
        raise DegenerateGeometryError("receiver and satellite coincide")
    u = d / dist
    s_min = -float(rx_pos @ u)
    if s_min <= 0.0 or s_min >= dist:
        return True
    closest2 = float(rx_pos @ rx_pos) - s_min * s_min
    return closest2 >= occlusion_radius**2


def visible_sats(
    rx: EcefState,
    constellation: Constellation,
    mask: Optional[float] = 5.0,
) -> List[LosObservable]:
    """Observables for all satellites passing the visibility rule.

    ``mask`` is an elevation mask in degrees; pass None to use geometric
    Earth-limb occlusion instead (the appropriate rule for orbital receivers).
    """
    out = []
    for sat in constellation:
        st = propagate_gps(sat, rx.t)
        obs = line_of_sight(rx, st, prn=sat.prn)
        if mask is None:
            if limb_visible(rx.position, st.position):
                out.append(obs)
        elif obs.elevation > mask:
            out.append(obs)
    return out
