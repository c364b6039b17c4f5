import math

import numpy as np
import pytest

from mmwave_handover.channel import (
    ArrayGeometry,
    Subpath,
    array_response,
    array_response_many,
    build_channel_matrix,
    link_rng,
    p_los,
    p_nlos,
    pathloss_db,
    sample_channel,
)
from mmwave_handover.geometry import Point3


class TestBlockage:
    def test_short_range_is_pure_los(self):
        assert p_los(10.0) == 1.0
        assert p_los(27.0) == 1.0

    def test_all_short_distances_exact_one(self):
        for d in range(1, 28):
            assert p_los(float(d)) == 1.0

    def test_value_at_71(self):
        # scalar evaluation: (27/71 * (1 - e^-1) + e^-1)^2
        assert p_los(71.0) == pytest.approx(0.3699842611722732, abs=1e-12)

    def test_complement_identity(self):
        for d in range(1, 501):
            assert abs(p_los(float(d)) + p_nlos(float(d)) - 1.0) < 1e-12

    def test_monotone_beyond_los_knee(self):
        grid = np.linspace(27.0, 500.0, 2000)
        vals = [p_los(d) for d in grid]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_domain_error(self):
        with pytest.raises(ValueError):
            p_los(0.0)
        with pytest.raises(ValueError):
            p_los(-3.0)


class TestPathloss:
    def test_reference_distance_los(self):
        # 20 log10(4 pi * 28e9 / 3e8)
        assert pathloss_db(1.0, True, None) == pytest.approx(61.38493281289306, abs=1e-9)

    def test_ten_meters_los(self):
        assert pathloss_db(10.0, True, None) == pytest.approx(91.38493281289306, abs=1e-9)

    def test_ten_meters_nlos(self):
        assert pathloss_db(10.0, False, None) == pytest.approx(101.38493281289306, abs=1e-9)

    def test_below_reference_clamped(self, caplog):
        assert pathloss_db(0.5, True, None) == pathloss_db(1.0, True, None)

    def test_shadow_fading_statistics(self, rng):
        vals = np.array([pathloss_db(50.0, False, rng) for _ in range(4000)])
        base = pathloss_db(50.0, False, None)
        assert abs(vals.mean() - base) < 0.5
        assert abs(vals.std() - 7.8) < 0.4

    def test_los_flag_changes_exponent(self):
        d = 100.0
        gap = pathloss_db(d, False, None) - pathloss_db(d, True, None)
        assert gap == pytest.approx(10.0 * math.log10(d), abs=1e-9)


class TestArrayResponse:
    def test_boresight_all_ones(self):
        geom = ArrayGeometry(4, 4)
        u = array_response(0.0, 0.0, geom)
        assert u.shape == (16,)
        assert np.allclose(u, 1.0)

    def test_unit_modulus_everywhere(self, rng):
        geom = ArrayGeometry(8, 8)
        for _ in range(100):
            az, el = rng.uniform(-np.pi, np.pi, 2)
            u = array_response(az, el, geom)
            assert np.allclose(np.abs(u), 1.0, atol=1e-12)

    def test_first_entry_is_one(self, rng):
        geom = ArrayGeometry(4, 4)
        for _ in range(20):
            az, el = rng.uniform(-np.pi, np.pi, 2)
            assert array_response(az, el, geom)[0] == 1.0 + 0.0j

    def test_2x2_matches_direct_evaluation(self):
        # independent element-wise evaluation of the planar phase formula
        geom = ArrayGeometry(2, 2)
        az, el = np.pi / 2, np.pi / 2
        a = math.sin(az) * math.cos(el)
        b = math.sin(az) * math.sin(el)
        expected = np.array(
            [
                np.exp(1j * np.pi * (m * a + n * b))
                for m in range(2)
                for n in range(2)
            ]
        )
        u = array_response(az, el, geom)
        assert np.allclose(u, expected, atol=1e-12)

    def test_vectorized_matches_scalar(self, rng):
        geom = ArrayGeometry(3, 5)
        az = rng.uniform(-np.pi, np.pi, 17)
        el = rng.uniform(-np.pi / 2, np.pi / 2, 17)
        stack = array_response_many(az, el, geom)
        for k in range(17):
            assert np.allclose(stack[k], array_response(az[k], el[k], geom), atol=1e-13)


class TestChannelMatrix:
    def test_single_unit_subpath_outer_product(self):
        ue, bs = ArrayGeometry(4, 4), ArrayGeometry(8, 8)
        az_a, el_a, az_d, el_d = 0.3, -0.1, 1.2, 0.05
        H = build_channel_matrix(
            np.array([1.0 + 0j]), np.array([az_a]), np.array([el_a]),
            np.array([az_d]), np.array([el_d]), ue, bs, subpaths_per_cluster=1,
        )
        u = array_response(az_a, el_a, ue)
        v = array_response(az_d, el_d, bs)
        assert np.allclose(H, np.outer(u, v.conj()), atol=1e-12)
        assert np.linalg.matrix_rank(H) == 1
        assert np.linalg.norm(H) == pytest.approx(math.sqrt(16 * 64), rel=1e-12)

    def test_boresight_unit_gain(self):
        ue, bs = ArrayGeometry(4, 4), ArrayGeometry(8, 8)
        zero = np.array([0.0])
        H = build_channel_matrix(np.array([1.0 + 0j]), zero, zero, zero, zero, ue, bs, 1)
        assert np.allclose(H, np.ones((16, 64)))

    def test_sampled_channel_finite_nonzero(self, rng):
        real = sample_channel(Point3(10, 10, 1.5), Point3(40, 40, 10), rng)
        assert np.all(np.isfinite(real.H))
        assert np.linalg.norm(real.H) > 0
        assert real.H.shape == (16, 64)
        assert real.n_clusters >= 1
        assert real.n_subpaths == 10

    def test_deterministic_under_stream(self):
        a = sample_channel(Point3(5, 5, 1.5), Point3(25, 25, 10), link_rng((9, 1, 2)))
        b = sample_channel(Point3(5, 5, 1.5), Point3(25, 25, 10), link_rng((9, 1, 2)))
        assert np.array_equal(a.H, b.H)
        assert a.los == b.los and a.pathloss_db == b.pathloss_db

    def test_power_calibration_monte_carlo(self):
        """E[||H||_F^2] / (N_UE N_BS) must track the linear pathloss gain.

        d=10 m forces LoS (p_los=1); shadow fading disabled so the pathloss
        is deterministic.
        """
        ue_pos, bs_pos = Point3(0, 0, 1.5), Point3(math.sqrt(100 - 8.5**2), 0, 10)
        rng = np.random.default_rng(777)
        n = 10_000
        acc = 0.0
        for _ in range(n):
            real = sample_channel(
                ue_pos, bs_pos, rng,
                shadow_sigma_los_db=0.0, shadow_sigma_nlos_db=0.0,
            )
            acc += np.linalg.norm(real.H) ** 2
        mean_power = acc / n / (16 * 64)
        pl_lin = 10.0 ** (-pathloss_db(10.0, True, None) / 10.0)
        assert mean_power == pytest.approx(pl_lin, rel=0.10)


class TestSubpath:
    def test_angle_bounds_enforced(self):
        with pytest.raises(ValueError):
            Subpath(gain=1.0, aoa_az=4.0, aoa_el=0.0, aod_az=0.0, aod_el=0.0)

    def test_valid_construction(self):
        sp = Subpath(gain=0.5 + 0.5j, aoa_az=0.1, aoa_el=-0.2, aod_az=3.0, aod_el=0.0)
        assert sp.gain == 0.5 + 0.5j
