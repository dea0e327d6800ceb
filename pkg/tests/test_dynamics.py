"""Tests for ground-truth trajectory generation."""

import math

import numpy as np
import pytest

from gnsstune import dynamics as dyn
from gnsstune.constants import G0, J2_EARTH, MU_EARTH, OMEGA_EARTH, R_EARTH

ISS = dyn.LeoElements(
    altitude=417e3,
    eccentricity=0.0004413,
    inclination=51.6479,
    arg_perigee=109.5258,
    raan=103.0788,
    true_anomaly=31.6858,
)


def inertial_velocity(gt):
    wxr = OMEGA_EARTH * np.column_stack(
        [-gt.position[:, 1], gt.position[:, 0], np.zeros(len(gt))]
    )
    return gt.velocity + wxr


class TestAccelJ2:
    def test_equatorial_position_has_zero_z(self):
        params = dyn.LeoPerturbationParams()
        a = dyn.accel_j2([5e6, 4.2e6, 0.0], params)
        assert a[2] == 0.0

    def test_polar_position_has_zero_xy(self):
        params = dyn.LeoPerturbationParams()
        a = dyn.accel_j2([0.0, 0.0, 7e6], params)
        assert a[0] == 0.0 and a[1] == 0.0

    def test_inside_earth_rejected(self):
        with pytest.raises(dyn.InvalidStateError):
            dyn.accel_j2([1e6, 0.0, 0.0], dyn.LeoPerturbationParams())

    def test_iss_nodal_regression_rate(self):
        # analytic secular rate: -(3/2) J2 (re/p)^2 n cos(i)
        a = ISS.semi_major_axis
        p = a * (1.0 - ISS.eccentricity**2)
        n = math.sqrt(MU_EARTH / a**3)
        rate = -1.5 * J2_EARTH * (R_EARTH / p) ** 2 * n * math.cos(
            math.radians(ISS.inclination)
        )
        assert math.degrees(rate * 86400.0) == pytest.approx(-4.9534, abs=0.001)

        params = dyn.LeoPerturbationParams(atmosphere=dyn.zero_density)
        gt = dyn.propagate_leo(ISS, params, duration=5580.0 * 4, step=0.1)
        th = OMEGA_EARTH * gt.t
        c, s = np.cos(th), np.sin(th)
        pos_i = np.column_stack(
            [c * gt.position[:, 0] - s * gt.position[:, 1],
             s * gt.position[:, 0] + c * gt.position[:, 1],
             gt.position[:, 2]]
        )
        vel_e = inertial_velocity(gt)
        vel_i = np.column_stack(
            [c * vel_e[:, 0] - s * vel_e[:, 1],
             s * vel_e[:, 0] + c * vel_e[:, 1],
             vel_e[:, 2]]
        )
        h = np.cross(pos_i, vel_i)
        raan = np.unwrap(np.arctan2(h[:, 0], -h[:, 1]))
        fit = np.polyfit(gt.t, raan, 1)[0]
        assert fit == pytest.approx(rate, rel=0.05)


class TestAccelDrag:
    def test_zero_relative_velocity(self):
        # velocity equal to the co-rotation velocity gives zero drag
        pos = np.array([6.8e6, 0.0, 0.0])
        vel = OMEGA_EARTH * np.array([0.0, 6.8e6, 0.0])
        st = dyn.EcefState(0.0, pos, vel, np.zeros(3))
        assert np.all(dyn.accel_drag(st, dyn.LeoPerturbationParams()) == 0.0)

    def test_zero_density(self):
        st = dyn.EcefState(0.0, np.array([6.8e6, 0, 0]), np.array([0, 7500.0, 0]),
                           np.zeros(3))
        params = dyn.LeoPerturbationParams(atmosphere=dyn.zero_density)
        assert np.all(dyn.accel_drag(st, params) == 0.0)

    def test_matches_scalar_formula(self):
        # independent hand evaluation of the drag magnitude
        pos = np.array([R_EARTH + 417e3, 0.0, 0.0])
        vel = np.array([0.0, 7660.0, 0.0])
        params = dyn.LeoPerturbationParams(cd=2.2, area=1.0, mass=100.0)
        a = dyn.accel_drag(dyn.EcefState(0.0, pos, vel, np.zeros(3)), params)
        vrel = vel - np.cross([0, 0, OMEGA_EARTH], pos)
        rho = dyn.atmosphere_density(417e3)
        expected = 0.5 * 2.2 * (1.0 / 100.0) * rho * np.linalg.norm(vrel) ** 2
        assert np.linalg.norm(a) == pytest.approx(expected, rel=1e-12)
        # drag opposes the relative velocity
        assert np.dot(a, vrel) < 0


class TestPropagateLeo:
    def test_circular_two_body_conserves_radius_and_energy(self):
        circ = dyn.LeoElements(417e3, 0.0, 51.6, 0.0, 0.0, 0.0)
        params = dyn.LeoPerturbationParams(j2=0.0, atmosphere=dyn.zero_density)
        period = 2 * math.pi * math.sqrt(circ.semi_major_axis**3 / MU_EARTH)
        gt = dyn.propagate_leo(circ, params, duration=math.ceil(period), step=0.1)
        r = np.linalg.norm(gt.position, axis=1)
        assert (r.max() - r.min()) / r[0] < 1e-6
        vi = inertial_velocity(gt)
        energy = 0.5 * np.sum(vi**2, axis=1) - MU_EARTH / r
        assert abs(energy.max() - energy.min()) < 1e-6 * abs(energy[0])
        hmag = np.linalg.norm(np.cross(gt.position, vi), axis=1)
        # h computed in the rotating frame differs only through the frame
        # rotation of position (norm-invariant), so magnitude is conserved
        assert (hmag.max() - hmag.min()) / hmag[0] < 1e-6

    def test_iss_speed_envelope(self):
        gt = dyn.propagate_leo(ISS, duration=600.0, step=0.05)
        speed = np.linalg.norm(gt.velocity, axis=1)
        assert speed.min() > 7000.0 and speed.max() < 8200.0
        vi = np.linalg.norm(inertial_velocity(gt), axis=1)
        assert vi.min() > 7500.0

    def test_step_halving_agreement(self):
        gt1 = dyn.propagate_leo(ISS, duration=600.0, step=0.1)
        gt2 = dyn.propagate_leo(ISS, duration=600.0, step=0.05)
        diff = np.linalg.norm(gt1.position[-1] - gt2.position[-1])
        assert diff < 1.0

    def test_step_limit_enforced(self):
        with pytest.raises(ValueError):
            dyn.propagate_leo(ISS, duration=10.0, step=0.5)

    def test_drag_decay_matches_gauss_estimate(self):
        # circular orbit: da/dt = -2 a^2 rho v (Cd A / m) / h_momentum,
        # equivalently dE/dt = -D v with E = -mu/2a
        circ = dyn.LeoElements(417e3, 0.0, 51.6, 0.0, 0.0, 0.0)
        params = dyn.LeoPerturbationParams(j2=0.0, cd=2.2, area=20.0, mass=100.0)
        gt = dyn.propagate_leo(circ, params, duration=600.0, step=0.1)
        r = np.linalg.norm(gt.position, axis=1)
        vi = inertial_velocity(gt)
        v = np.linalg.norm(vi, axis=1)
        energy = 0.5 * v**2 - MU_EARTH / r
        sma = -MU_EARTH / (2 * energy)
        decay = (sma[-1] - sma[0]) / 600.0
        rho = dyn.atmosphere_density(r[0] - R_EARTH)
        vrel = v[0] - OMEGA_EARTH * r[0] * math.cos(math.radians(51.6))
        dadt = -(2.2 * 20.0 / 100.0) * rho * vrel**2 * v[0] * sma[0] ** 2 / MU_EARTH
        assert decay == pytest.approx(dadt, rel=0.10)


class TestSimulateRocket:
    def test_ballistic_no_thrust_no_drag(self):
        p = dyn.RocketParams(
            thrust_profile=dyn.ThrustProfile([(0.0, 0.0)]),
            atmosphere=dyn.zero_density,
            launch_elevation=90.0,
            ignition_delay=0.0,
        )
        # start from rest: stays on the pad (no thrust)
        gt = dyn.simulate_rocket(p, duration=70.0)
        assert np.allclose(gt.velocity, 0.0)

    def test_flight_envelope(self):
        p = dyn.RocketParams()
        gt = dyn.simulate_rocket(p)
        site = dyn.geodetic_to_ecef(p.launch_lat, p.launch_lon, p.launch_height)
        rot = dyn.enu_matrix(p.launch_lat, p.launch_lon)
        up = (gt.position - site) @ rot[:, 2]
        speed = np.linalg.norm(gt.velocity, axis=1)
        accg = np.linalg.norm(gt.acceleration, axis=1) / G0
        assert 5710.0 <= up.max() <= 6060.0
        assert 849.0 <= speed.max() <= 901.0
        assert accg.max() == pytest.approx(40.0, rel=0.05)

    def test_mass_decreases_linearly_during_burn(self):
        p = dyn.RocketParams()
        t0, tb = p.ignition_delay, p.burn_time
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            expected = p.dry_mass + p.propellant_mass * (1.0 - frac)
            assert p.mass(t0 + frac * tb) == pytest.approx(expected)
        assert p.mass(0.0) == p.dry_mass + p.propellant_mass
        assert p.mass(t0 + tb + 1.0) == p.dry_mass

    def test_acceleration_consistent_with_velocity(self):
        gt = dyn.simulate_rocket()
        p = dyn.RocketParams()
        # central-difference velocity derivative vs stored acceleration over
        # the powered phase, away from the thrust-curve breakpoints
        i0 = int((p.ignition_delay + 0.4) * gt.sample_rate)
        i1 = int((p.ignition_delay + p.burn_time - 0.5) * gt.sample_rate)
        dt = 1.0 / gt.sample_rate
        num = (gt.velocity[i0 + 1 : i1 + 1] - gt.velocity[i0 - 1 : i1 - 1]) / (2 * dt)
        stored = gt.acceleration[i0:i1]
        err = np.linalg.norm(num - stored, axis=1) / np.linalg.norm(stored, axis=1)
        assert err.max() < 0.02


class TestStaticTruth:
    def test_zero_velocity(self):
        gt = dyn.static_truth(40.0, -3.7, 700.0, duration=10.0)
        assert np.all(gt.velocity == 0.0)
        assert np.all(gt.acceleration == 0.0)

    def test_equator_prime_meridian(self):
        gt = dyn.static_truth(0.0, 0.0, 0.0, duration=1.0)
        assert np.allclose(gt.position[0], [R_EARTH, 0.0, 0.0], atol=1e-6)

    def test_position_time_invariant(self):
        gt = dyn.static_truth(40.0, -3.7, 700.0, duration=10.0)
        assert np.all(gt.position == gt.position[0])

    def test_geodetic_round_trip(self):
        for lat, lon, h in [(40.0, -3.7, 700.0), (-33.5, 151.2, 20.0), (0.0, 0.0, 0.0),
                            (75.0, -120.0, 2500.0)]:
            pos = dyn.geodetic_to_ecef(lat, lon, h)
            lat2, lon2, h2 = dyn.ecef_to_geodetic(pos)
            assert lat2 == pytest.approx(lat, abs=1e-9)
            assert lon2 == pytest.approx(lon, abs=1e-9)
            assert h2 == pytest.approx(h, abs=1e-4)


class TestGroundTruth:
    def test_sample_matches_nodes(self):
        gt = dyn.propagate_leo(ISS, duration=60.0, step=0.05)
        pos, vel, acc = gt.sample(gt.t[10:13])
        assert np.allclose(pos, gt.position[10:13], atol=1e-9)
        assert np.allclose(vel, gt.velocity[10:13], atol=1e-9)

    def test_hermite_interpolation_accuracy(self):
        gt = dyn.propagate_leo(ISS, duration=60.0, step=0.05)
        fine = dyn.propagate_leo(ISS, duration=60.0, step=0.01)
        times = fine.t[5:-5:7]
        pos, vel, _ = gt.sample(times)
        ref_pos, ref_vel, _ = fine.sample(times)
        assert np.abs(pos - ref_pos).max() < 1e-3
        assert np.abs(vel - ref_vel).max() < 1e-3

    def test_csv_round_trip(self, tmp_path):
        gt = dyn.static_truth(40.0, -3.7, 700.0, duration=5.0)
        path = tmp_path / "truth.csv"
        gt.to_csv(path, header_lines=["manifest: abc123"])
        gt2 = dyn.GroundTruth.from_csv(path, gt.sample_rate, gt.scenario_tag)
        assert np.allclose(gt2.position, gt.position)
        assert np.allclose(gt2.t, gt.t)

    def test_nonuniform_rejected(self):
        with pytest.raises(ValueError):
            dyn.GroundTruth(
                [0.0, 0.1, 0.3], np.zeros((3, 3)), np.zeros((3, 3)),
                np.zeros((3, 3)), 10.0, "static",
            )
