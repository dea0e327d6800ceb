"""Tests for GPS constellation propagation and line-of-sight observables."""

import math

import numpy as np
import pytest

from gnsstune import constellation as con
from gnsstune import dynamics as dyn
from gnsstune.constants import GPS_SMA, L1_WAVELENGTH, MU_EARTH

ISS = dyn.LeoElements(417e3, 0.0004413, 51.6479, 109.5258, 103.0788, 31.6858)


@pytest.fixture(scope="module")
def constellation():
    return con.default_constellation()


@pytest.fixture(scope="module")
def static_rx():
    return dyn.static_truth(40.4168, -3.7038, 700.0, duration=1.0).state(0)


def at_time(rx, t):
    return dyn.EcefState(t, rx.position, rx.velocity, rx.acceleration)


class TestPropagateGps:
    def test_radius_equals_sma(self, constellation):
        for t in (0.0, 1234.5, 40000.0):
            st = con.propagate_gps(constellation.sat(1), t)
            assert np.linalg.norm(st.position) == pytest.approx(GPS_SMA, rel=1e-12)

    def test_inertial_speed_vis_viva(self, constellation):
        st = con.propagate_gps(constellation.sat(7), 300.0)
        from gnsstune.constants import OMEGA_EARTH
        wxr = OMEGA_EARTH * np.array([-st.position[1], st.position[0], 0.0])
        vi = st.velocity + wxr
        assert np.linalg.norm(vi) == pytest.approx(math.sqrt(MU_EARTH / GPS_SMA), rel=1e-12)

    def test_period_keplers_third_law(self, constellation):
        sat = constellation.sat(3)
        period = 2 * math.pi * math.sqrt(sat.semi_major_axis**3 / MU_EARTH)
        assert period == pytest.approx(43077.0, abs=1.0)
        # inertial position repeats after one period
        p0, _, _ = con.gps_state_arrays(sat, [0.0])
        p1, _, _ = con.gps_state_arrays(sat, [period])
        from gnsstune.constants import OMEGA_EARTH
        th = OMEGA_EARTH * period
        c, s = math.cos(th), math.sin(th)
        p1_i = np.array([c * p1[0, 0] - s * p1[0, 1],
                         s * p1[0, 0] + c * p1[0, 1], p1[0, 2]])
        assert np.linalg.norm(p1_i - p0[0]) < 1.0


class TestLineOfSight:
    def test_tangential_motion_zero_range_rate(self):
        rx = dyn.EcefState(0.0, np.array([6.4e6, 0, 0]), np.zeros(3), np.zeros(3))
        sat = dyn.EcefState(0.0, np.array([2.66e7, 0, 0]),
                            np.array([0.0, 3000.0, 0.0]), np.zeros(3))
        obs = con.line_of_sight(rx, sat)
        assert obs.range_rate == pytest.approx(0.0, abs=1e-9)
        assert obs.carrier_doppler == pytest.approx(0.0, abs=1e-9)

    def test_zenith_elevation(self, static_rx):
        lat, lon, _ = dyn.ecef_to_geodetic(static_rx.position)
        up = dyn.enu_matrix(lat, lon)[:, 2]
        sat = dyn.EcefState(0.0, static_rx.position + 2.0e7 * up,
                            np.zeros(3), np.zeros(3))
        obs = con.line_of_sight(static_rx, sat)
        assert obs.elevation == pytest.approx(90.0, abs=1e-6)

    def test_coincident_positions_rejected(self, static_rx):
        with pytest.raises(con.DegenerateGeometryError):
            con.line_of_sight(static_rx, static_rx)

    def test_carrier_code_doppler_ratio(self, static_rx, constellation):
        for obs in con.visible_sats(static_rx, constellation, mask=5.0):
            assert obs.carrier_doppler / obs.code_doppler == pytest.approx(1540.0, rel=1e-12)

    def test_static_doppler_bound_24h(self, static_rx, constellation):
        worst = 0.0
        for t in np.arange(0.0, 86400.0, 300.0):
            for obs in con.visible_sats(at_time(static_rx, t), constellation, mask=5.0):
                worst = max(worst, abs(obs.carrier_doppler))
        assert worst <= 5500.0

    def test_leo_doppler_bound(self, constellation):
        gt = dyn.propagate_leo(ISS, duration=600.0, step=0.1)
        worst = 0.0
        for i in range(0, len(gt), 100):
            for obs in con.visible_sats(gt.state(i), constellation, mask=None):
                worst = max(worst, abs(obs.carrier_doppler))
        assert worst > 30000.0
        assert worst < 45000.0

    def test_range_rate_matches_numeric_difference(self, constellation):
        gt = dyn.propagate_leo(ISS, duration=10.0, step=0.05)
        sat = constellation.sat(5)
        for t in (1.0, 5.0):
            dt = 1e-3
            (p0, v0, a0) = gt.sample([t])
            rx = dyn.EcefState(t, p0[0], v0[0], a0[0])
            obs = con.line_of_sight(rx, con.propagate_gps(sat, t))
            rngs = []
            for tt in (t - dt, t + dt):
                (p, v, a) = gt.sample([tt])
                st = con.propagate_gps(sat, tt)
                rngs.append(np.linalg.norm(st.position - p[0]))
            numeric = (rngs[1] - rngs[0]) / (2 * dt)
            assert obs.range_rate == pytest.approx(numeric, abs=0.01)

    def test_range_accel_matches_numeric_difference(self, constellation):
        gt = dyn.propagate_leo(ISS, duration=10.0, step=0.05)
        sat = constellation.sat(5)
        t, dt = 5.0, 1e-2
        rrs = []
        for tt in (t - dt, t, t + dt):
            (p, v, a) = gt.sample([tt])
            rx = dyn.EcefState(tt, p[0], v[0], a[0])
            rrs.append(con.line_of_sight(rx, con.propagate_gps(sat, tt)).range_rate)
        numeric = (rrs[2] - rrs[0]) / (2 * dt)
        assert rrs[1] == pytest.approx(rrs[1], abs=1e-12)
        obs = con.line_of_sight(
            dyn.EcefState(t, *[x[0] for x in gt.sample([t])]),
            con.propagate_gps(sat, t),
        )
        assert obs.range_accel == pytest.approx(numeric, abs=1e-3)


class TestVisibleSats:
    def test_full_mask_empty(self, static_rx, constellation):
        assert con.visible_sats(static_rx, constellation, mask=90.0) == []

    def test_static_window_count(self, static_rx, constellation):
        for t in np.arange(0.0, 200.0, 20.0):
            n = len(con.visible_sats(at_time(static_rx, t), constellation, mask=10.0))
            assert 6 <= n <= 12

    def test_at_least_four_for_default_scenarios(self, constellation):
        rx = dyn.static_truth(40.4168, -3.7038, 700.0, duration=180.0)
        for i in range(0, len(rx), 600):
            assert len(con.visible_sats(rx.state(i), constellation, mask=5.0)) >= 4
        rocket = dyn.simulate_rocket()
        for i in range(0, len(rocket), 1000):
            assert len(con.visible_sats(rocket.state(i), constellation, mask=5.0)) >= 4
        leo = dyn.propagate_leo(ISS, duration=600.0, step=0.1)
        for i in range(0, len(leo), 1000):
            assert len(con.visible_sats(leo.state(i), constellation, mask=None)) >= 4

    def test_leo_visibility_set_changes(self, constellation):
        leo = dyn.propagate_leo(ISS, duration=600.0, step=0.1)
        first = {o.prn for o in con.visible_sats(leo.state(0), constellation, mask=None)}
        last = {o.prn for o in con.visible_sats(leo.state(len(leo) - 1), constellation, mask=None)}
        assert first != last

    def test_limb_occlusion_blocks_behind_earth(self):
        rx_pos = np.array([6.8e6, 0.0, 0.0])
        assert not con.limb_visible(rx_pos, np.array([-2.66e7, 0.0, 0.0]))
        assert con.limb_visible(rx_pos, np.array([2.66e7, 0.0, 0.0]))
        assert con.limb_visible(rx_pos, np.array([0.0, 2.66e7, 0.0]))

    def test_duplicate_prn_rejected(self):
        with pytest.raises(ValueError):
            con.Constellation([con.GpsSatellite(prn=1), con.GpsSatellite(prn=1)])
