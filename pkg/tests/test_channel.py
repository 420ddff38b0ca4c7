import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nfbeam.channel import (ArrayGeometry, FsplMode, NoiseModel, PolarLocation, achievable_rate,
                            batch_rates, element_distance, far_field_steering, make_noise,
                            matched_filter, matched_filter_bound, near_field_channel,
                            near_field_steering, noise_power, rayleigh_distance, received_signal,
                            sinr)
from nfbeam.errors import DimensionError

GEOM = ArrayGeometry(256, 50e9)
angles = st.floats(-math.pi / 3, math.pi / 3)
ranges = st.floats(5.0, 50.0)


def _cartesian_distance(geom, loc, n):
    """Independent oracle: Euclidean distance between user and element n."""
    return math.dist(loc.cartesian, (0.0, n * geom.spacing_m))


class TestGeometry:
    def test_derived_quantities(self):
        g = ArrayGeometry(64, 50e9)
        assert g.wavelength_m == pytest.approx(2.998e8 / 50e9)
        assert g.spacing_m == pytest.approx(g.wavelength_m / 2)
        assert g.aperture_m == 63 * g.spacing_m
        assert g.wavenumber == pytest.approx(2 * math.pi / g.wavelength_m)
        assert list(g.indices[[0, -1]]) == [-32, 31]
        assert len(g.indices) == 64
        np.testing.assert_array_equal(g.positions[:, 1], g.indices * g.spacing_m)

    @pytest.mark.parametrize("n", [0, 1, 3, -2])
    def test_rejects_bad_counts(self, n):
        with pytest.raises(ValueError):
            ArrayGeometry(n, 1e9)

    def test_rejects_bad_carrier(self):
        with pytest.raises(ValueError):
            ArrayGeometry(8, 0.0)

    def test_location_validation(self):
        with pytest.raises(ValueError):
            PolarLocation(0.0, 0.0)
        with pytest.raises(ValueError):
            PolarLocation(1.0, 2.0)


class TestRayleigh:
    def test_table_values(self):
        assert rayleigh_distance(0.5, 28e9) == pytest.approx(46.7, abs=0.05)
        assert rayleigh_distance(0.5, 60e9) == pytest.approx(100.0, abs=0.1)

    def test_zero_aperture(self):
        assert rayleigh_distance(0.0, 28e9) == 0.0

    @pytest.mark.parametrize("fc", [0.0, -1e9])
    def test_bad_carrier(self, fc):
        with pytest.raises(ValueError):
            rayleigh_distance(0.5, fc)


class TestElementDistance:
    geom = ArrayGeometry(256, 50e9, spacing_m=0.003)

    def test_centre_element(self):
        loc = PolarLocation(12.3, 0.4)
        assert element_distance(self.geom, loc, 0) == 12.3

    def test_offset_angle(self):
        d = element_distance(self.geom, PolarLocation(10.0, math.pi / 6), 100)
        assert d == pytest.approx(math.sqrt(100 + 0.09 - 3.0), abs=1e-12)
        assert d == pytest.approx(9.8534, abs=5e-5)

    def test_broadside(self):
        d = element_distance(self.geom, PolarLocation(10.0, 0.0), 100)
        assert d == pytest.approx(10.0045, abs=5e-5)

    @given(ranges, angles, st.integers(-128, 127))
    def test_matches_cartesian_oracle(self, r, a, n):
        loc = PolarLocation(r, a)
        assert element_distance(self.geom, loc, n) == pytest.approx(_cartesian_distance(self.geom, loc, n), rel=1e-12)

    @pytest.mark.parametrize("n", [-129, 128, 1000])
    def test_index_outside_set(self, n):
        with pytest.raises(IndexError):
            element_distance(self.geom, PolarLocation(10.0, 0.0), n)


class TestSteering:
    @given(ranges, angles)
    def test_unit_modulus_and_reference(self, r, a):
        b = near_field_steering(GEOM, PolarLocation(r, a))
        np.testing.assert_allclose(np.abs(b), 1.0, atol=1e-12)
        assert b[GEOM.n_antennas // 2] == 1 + 0j

    @given(ranges, angles)
    def test_phases_match_cartesian_oracle(self, r, a):
        loc = PolarLocation(r, a)
        b = near_field_steering(GEOM, loc)
        expected = np.array([np.exp(-1j * GEOM.wavenumber * (_cartesian_distance(GEOM, loc, n) - r))
                             for n in GEOM.indices])
        np.testing.assert_allclose(b, expected, atol=1e-8)

    @settings(max_examples=30)
    @given(st.floats(-math.pi / 2, math.pi / 2))
    def test_far_field_limit(self, a):
        b = near_field_steering(GEOM, PolarLocation(1e6 * GEOM.aperture_m, a))
        gap = np.abs(np.angle(b * np.conj(far_field_steering(GEOM, a))))
        assert gap.max() < 1e-3

    def test_far_field_gap_shrinks_as_inverse_range(self):
        def gap(r):
            b = near_field_steering(GEOM, PolarLocation(r, 0.0))
            return np.abs(np.angle(b * np.conj(far_field_steering(GEOM, 0.0)))).max()
        d = GEOM.aperture_m
        edge = GEOM.n_antennas / 2 * GEOM.spacing_m
        # leading term M (edge offset)^2 / (2 r) at broadside, about 1e-2 rad at r = 1e4 D
        assert gap(1e4 * d) == pytest.approx(GEOM.wavenumber * edge ** 2 / (2e4 * d), rel=1e-3)
        assert gap(1e4 * d) / gap(1e5 * d) == pytest.approx(10.0, rel=1e-3)

    def test_conjugate_beam_gain(self):
        b = near_field_steering(GEOM, PolarLocation(7.0, 0.3))
        # w^H b conjugates w, so w = b is the phase-conjugate beam
        assert abs(np.vdot(b, b)) == pytest.approx(GEOM.n_antennas, rel=1e-12)

    def test_far_field_broadside(self):
        np.testing.assert_array_equal(far_field_steering(GEOM, 0.0), np.ones(256))

    def test_far_field_endfire(self):
        ff = far_field_steering(GEOM, math.pi / 2)
        np.testing.assert_allclose(ff, (-1.0) ** GEOM.indices, atol=1e-9)

    def test_far_field_thirty_degrees(self):
        ff = far_field_steering(GEOM, math.pi / 6)
        assert ff[GEOM.n_antennas // 2 + 2] == pytest.approx(-1.0, abs=1e-12)


class TestChannel:
    def test_normalized_modulus(self):
        h = near_field_channel(GEOM, PolarLocation(20.0, 0.2))
        assert h.beta == 1.0
        np.testing.assert_allclose(np.abs(h.coefficients), 1.0, atol=1e-12)
        assert h.coefficients[128].imag == 0 and h.coefficients[128].real > 0

    def test_paper_fspl_beta(self):
        h = near_field_channel(GEOM, PolarLocation(10.0, 0.0), FsplMode.PAPER_FSPL)
        lam = 2.998e8 / 50e9
        assert h.beta == pytest.approx((lam / (4 * math.pi * 10)) ** 2, rel=1e-12)
        assert h.beta == pytest.approx(2.277e-9, rel=1e-3)
        np.testing.assert_allclose(np.abs(h.coefficients), h.beta, rtol=1e-12)

    def test_deterministic(self):
        loc = PolarLocation(11.0, -0.5)
        np.testing.assert_array_equal(near_field_channel(GEOM, loc).coefficients,
                                      near_field_channel(GEOM, loc).coefficients)


class TestNoise:
    def test_n256_zero_db(self):
        assert noise_power(0.0, GEOM) == pytest.approx(65536.0)

    def test_small_array(self):
        # smallest valid array; sigma2 = N^2 * 10^(-snr/10)
        assert noise_power(10.0, ArrayGeometry(2, 1e9)) == pytest.approx(0.4)

    def test_high_snr_limit(self):
        assert noise_power(300.0, GEOM) < 1e-20

    def test_fspl_calibration(self):
        beta = (GEOM.wavelength_m / (4 * math.pi * 5.0)) ** 2
        assert noise_power(10.0, GEOM, FsplMode.PAPER_FSPL) == pytest.approx(beta**2 * 256**2 / 10)

    def test_rejects_infinite_snr(self):
        with pytest.raises(ValueError):
            noise_power(math.inf, GEOM)


class TestRates:
    def setup_method(self):
        self.h = near_field_channel(GEOM, PolarLocation(5.0, 0.1))

    def test_orthogonal_beam(self):
        w = np.ones(2, complex)
        h = np.array([1.0, -1.0], complex)
        assert sinr(w, h, [], NoiseModel(0.0, 1.0)) == 0.0

    def test_unit_sinr(self):
        w = np.ones(2, complex)
        h = np.array([1.0, 0.0], complex)
        assert sinr(w, h, [], NoiseModel(0.0, 1.0)) == 1.0
        assert achievable_rate(w, h, [], NoiseModel(0.0, 1.0)) == 1.0

    def test_rate_values(self):
        w = np.ones(2, complex)
        assert achievable_rate(w, np.array([0.0, 0.0], complex), [], NoiseModel(0.0, 1.0)) == 0.0
        assert achievable_rate(w, np.array([3 ** 0.5, 0.0], complex), [], NoiseModel(0.0, 1.0)) == pytest.approx(2.0)

    @pytest.mark.parametrize("snr", [-20.0, 0.0, 10.0, 20.0])
    def test_matched_filter_at_reference_range(self, snr):
        noise = make_noise(snr, GEOM)
        w = matched_filter(self.h)
        assert sinr(w, self.h, [], noise) == pytest.approx(10 ** (snr / 10), rel=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            sinr(np.ones(4), self.h, [], make_noise(0.0, GEOM))
        with pytest.raises(DimensionError):
            sinr(np.ones(256), self.h, [np.ones(3)], make_noise(0.0, GEOM))

    @given(st.floats(0, 2 * math.pi), st.integers(0, 2**32 - 1))
    def test_global_phase_invariance(self, phi, seed):
        rng = np.random.default_rng(seed)
        w = np.exp(1j * rng.uniform(0, 2 * np.pi, 256))
        other = near_field_channel(GEOM, PolarLocation(30.0, -0.4))
        noise = make_noise(5.0, GEOM)
        r1 = achievable_rate(w, self.h, [other], noise)
        r2 = achievable_rate(np.exp(1j * phi) * w, self.h, [other], noise)
        assert r1 == pytest.approx(r2, rel=1e-10)

    @given(ranges, angles, st.integers(0, 2**32 - 1))
    def test_matched_filter_is_optimal(self, r, a, seed):
        h = near_field_channel(GEOM, PolarLocation(r, a))
        rng = np.random.default_rng(seed)
        bound = np.abs(h.coefficients).sum()
        assert abs(np.vdot(matched_filter(h), h.coefficients)) == pytest.approx(bound, rel=1e-12)
        for _ in range(5):
            w = np.exp(1j * rng.uniform(-np.pi, np.pi, 256))
            assert abs(np.vdot(w, h.coefficients)) <= bound * (1 + 1e-12)

    def test_bound_formula(self):
        noise = make_noise(10.0, GEOM)
        assert matched_filter_bound(self.h, noise) == pytest.approx(math.log2(11.0))

    def test_batch_rates_agree_with_scalar(self):
        rng = np.random.default_rng(0)
        others = [near_field_channel(GEOM, PolarLocation(9.0, 0.5)),
                  near_field_channel(GEOM, PolarLocation(40.0, -0.9))]
        noise = make_noise(3.0, GEOM)
        w = np.exp(1j * rng.uniform(-np.pi, np.pi, (5, 256)))
        chans = np.stack([self.h.coefficients] + [o.coefficients for o in others])
        got = batch_rates(w, np.broadcast_to(chans, (5, 3, 256)), noise.sigma2)
        want = [achievable_rate(wi, self.h, others, noise) for wi in w]
        np.testing.assert_allclose(got, want, rtol=1e-12)


class TestReceivedSignal:
    def setup_method(self):
        self.h = near_field_channel(GEOM, PolarLocation(8.0, 0.3))
        self.w = matched_filter(self.h)

    def test_noiseless(self):
        noise = NoiseModel(0.0, 1e-300, tx_power=4.0)
        y = received_signal(self.w, self.h, noise, 1.0, np.random.default_rng(0))
        assert y == pytest.approx(2.0 * np.vdot(self.w, self.h.coefficients), abs=1e-100)

    def test_seeded(self):
        noise = make_noise(0.0, GEOM)
        a = received_signal(self.w, self.h, noise, 1j, np.random.default_rng(7))
        b = received_signal(self.w, self.h, noise, 1j, np.random.default_rng(7))
        assert a == b

    def test_noise_variance(self):
        noise = NoiseModel(0.0, 2.5)
        rng = np.random.default_rng(1)
        clean = np.vdot(self.w, self.h.coefficients)
        ys = np.array([received_signal(self.w, self.h, noise, 1.0, rng) for _ in range(100_000)])
        assert np.mean(np.abs(ys - clean) ** 2) == pytest.approx(2.5, rel=0.03)

    def test_rejects_non_unit_symbol(self):
        with pytest.raises(ValueError):
            received_signal(self.w, self.h, NoiseModel(0.0, 1.0), 2.0)
