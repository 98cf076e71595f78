# tests/test_privacy.py
import pytest
import os
import sys
import math
import numpy as np
from scipy.special import gammaln, logsumexp

# Añadir la ruta raíz del proyecto al sys.path para importaciones
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.privacy.rdp_accountant import (DEFAULT_ORDERS, AccountantState, MechanismEvent, PrivacyParams, RdpAccountant,
                                        compose, epsilon_curve, rdp_subsampled_gaussian, rdp_vector, to_epsilon)
from src.privacy.calibration import calibrate_sigma, composed_epsilon
from src.privacy.noise import add_gradient_noise
from src.common.exceptions import CalibrationOutOfRange, InvalidBound
from src.numerics.random_streams import StreamKey


def _grid_epsilon(sigmas: np.ndarray, q: float, steps: int, delta: float) -> np.ndarray:
    """ε(σ) sobre una grilla de σ, vectorizado, con la suma binomial escrita aparte."""
    best = np.full(len(sigmas), np.inf)
    for alpha in DEFAULT_ORDERS:
        k = np.arange(alpha + 1, dtype=np.float64)
        log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
        terms = (log_binom + k * math.log(q) + (alpha - k) * math.log1p(-q))[None, :] \
            + (k * (k - 1))[None, :] / (2.0 * sigmas[:, None] ** 2)
        rdp = steps * np.maximum(logsumexp(terms, axis=1), 0.0) / (alpha - 1)
        best = np.minimum(best, rdp + math.log(1.0 / delta) / (alpha - 1))
    return best


class TestSubsampledGaussian:
    def test_binomial_oracle_at_order_two(self):
        # Σ_k C(2,k) (1-q)^(2-k) q^k e^{k(k-1)/2σ²} con q = 0.1, σ = 1
        oracle = math.log(0.81 + 2 * 0.9 * 0.1 + 0.01 * math.e)
        assert rdp_subsampled_gaussian(0.1, 1.0, 2) == pytest.approx(oracle, rel=1e-12)

    def test_full_batch_is_plain_gaussian(self):
        assert rdp_subsampled_gaussian(1.0, 2.0, 10) == pytest.approx(10 / 8)

    def test_monotone_in_q(self):
        values = [rdp_subsampled_gaussian(q, 1.0, 8) for q in (0.001, 0.01, 0.1, 0.5, 1.0)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_non_negative(self):
        assert rdp_subsampled_gaussian(1e-6, 50.0, 2) >= 0.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            rdp_subsampled_gaussian(0.0, 1.0, 2)
        with pytest.raises(ValueError):
            rdp_subsampled_gaussian(0.1, 0.0, 2)
        with pytest.raises(ValueError):
            rdp_subsampled_gaussian(0.1, 1.0, 1)

    def test_vector_matches_scalar(self):
        orders = [2, 5, 32]
        np.testing.assert_allclose(rdp_vector(0.05, 1.1, orders),
                                   [rdp_subsampled_gaussian(0.05, 1.1, a) for a in orders])


class TestComposition:
    def test_single_full_batch_step(self):
        state = compose(AccountantState(), MechanismEvent(1.0, 1.0, 1))
        eps, order = to_epsilon(state, 1e-5)
        alphas = np.linspace(1.001, 200, 400000)
        continuous = float(np.min(alphas / 2 + math.log(1e5) / (alphas - 1)))
        assert abs(eps - continuous) < 0.01
        assert eps == pytest.approx(5.30, abs=0.01)
        assert order == 6

    def test_composition_is_additive(self):
        one = compose(AccountantState([2, 4, 8]), MechanismEvent(0.01, 1.0, 10))
        two = compose(compose(AccountantState([2, 4, 8]), MechanismEvent(0.01, 1.0, 4)),
                      MechanismEvent(0.01, 1.0, 6))
        np.testing.assert_allclose(one.rdp, two.rdp, rtol=1e-12)

    def test_order_subset_never_smaller(self):
        full = compose(AccountantState(), MechanismEvent(0.01, 1.1, 500))
        subset = compose(AccountantState([2, 3, 4]), MechanismEvent(0.01, 1.1, 500))
        assert to_epsilon(subset, 1e-5)[0] >= to_epsilon(full, 1e-5)[0]

    def test_epsilon_curve_min_is_epsilon(self):
        state = compose(AccountantState(), MechanismEvent(0.02, 1.0, 100))
        curve = epsilon_curve(state, 1e-5)
        assert min(e for _, e in curve) == pytest.approx(to_epsilon(state, 1e-5)[0])

    def test_invalid_orders(self):
        with pytest.raises(ValueError, match="integers >= 2"):
            AccountantState([1, 2])

    def test_epsilon_levels_off_as_noise_grows(self):
        # Con el registro en cero queda el piso log(1/δ)/(α_max - 1) del mayor orden
        floor = math.log(1e5) / (max(DEFAULT_ORDERS) - 1)
        eps_zero, order = to_epsilon(AccountantState(), 1e-5)
        assert eps_zero == pytest.approx(floor) and order == max(DEFAULT_ORDERS)
        eps = [to_epsilon(compose(AccountantState(), MechanismEvent(0.05, sigma, 1000)), 1e-5)[0]
               for sigma in (1.0, 10.0, 100.0, 1000.0, 1e4)]
        assert all(b <= a for a, b in zip(eps, eps[1:]))
        assert eps[0] - eps[1] > 1.0
        assert eps[3] - eps[4] < 5e-3
        assert eps[-1] == pytest.approx(floor, abs=1e-4)
        assert eps[-1] >= floor

    def test_state_roundtrip(self):
        state = compose(AccountantState([2, 4]), MechanismEvent(0.1, 1.0, 3))
        np.testing.assert_array_equal(AccountantState.from_dict(state.to_dict()).rdp, state.rdp)


class TestRdpAccountant:
    def test_record_matches_functional_compose(self):
        acc = RdpAccountant([2, 4, 8])
        for _ in range(5):
            acc.record(0.1, 1.0)
        expected = compose(AccountantState([2, 4, 8]), MechanismEvent(0.1, 1.0, 5))
        np.testing.assert_allclose(acc.state.rdp, expected.rdp, rtol=1e-12)
        assert acc.compositions == 5

    def test_zero_sigma_is_non_private(self):
        acc = RdpAccountant()
        acc.record(0.1, 0.0)
        assert acc.non_private
        assert acc.get_epsilon(1e-5) == math.inf
        assert acc.get_epsilon_and_order(1e-5)[1] is None

    def test_epsilon_grows_with_steps(self):
        acc = RdpAccountant()
        acc.record(0.01, 1.0, count=100)
        first = acc.get_epsilon(1e-5)
        acc.record(0.01, 1.0, count=100)
        assert acc.get_epsilon(1e-5) > first


class TestCalibration:
    @pytest.mark.parametrize("q,steps", [(0.01, 1000), (0.05, 200), (0.1, 50)])
    def test_round_trip_within_tolerance(self, q, steps):
        sigma = calibrate_sigma(PrivacyParams(8.0, 1e-5), q, steps)
        eps = composed_epsilon(sigma, q, steps, 1e-5)
        assert eps <= 8.0
        assert eps >= 8.0 - 2e-3

    def test_extra_mechanism_needs_more_noise(self):
        target = PrivacyParams(8.0, 1e-5)
        plain = calibrate_sigma(target, 0.01, 1000)
        extra = calibrate_sigma(target, 0.01, 1000, [MechanismEvent(0.01, 5.0, 1000, "unclipped-count")])
        assert extra > plain

    def test_matches_dense_grid_search(self):
        # q = 0.05, T = 1000, ε = 8, δ = 1e-5: primero una grilla gruesa y luego una fina
        q, steps, delta = 0.05, 1000, 1e-5
        coarse = np.arange(0.3, 5.0, 0.01)
        eps = _grid_epsilon(coarse, q, steps, delta)
        assert np.all(np.diff(eps) < 0)
        i = int(np.argmax(eps <= 8.0))
        assert i > 0 and eps[i] <= 8.0
        fine = np.arange(coarse[i - 1], coarse[i] + 1e-5, 1e-5)
        oracle = fine[int(np.argmax(_grid_epsilon(fine, q, steps, delta) <= 8.0))]
        assert calibrate_sigma(PrivacyParams(8.0, delta), q, steps) == pytest.approx(oracle, abs=1e-3)

    def test_unreachable_target(self):
        with pytest.raises(CalibrationOutOfRange):
            calibrate_sigma(PrivacyParams(1e-4, 1e-5), 1.0, 100000)


class TestGradientNoise:
    def test_zero_sigma_returns_sum(self):
        s = np.array([1.0, -2.0])
        np.testing.assert_array_equal(add_gradient_noise(s, 0.0, 1.0, StreamKey(0, "noise")), s)

    def test_noise_scale(self):
        noisy = add_gradient_noise(np.zeros(100000), 2.0, 0.5, StreamKey(0, "noise", 3, 0))
        assert noisy.std() == pytest.approx(1.0, rel=0.02)

    def test_same_key_same_noise(self):
        key = StreamKey(4, "noise", 1, 0)
        np.testing.assert_array_equal(add_gradient_noise(np.ones(5), 1.0, 1.0, key),
                                      add_gradient_noise(np.ones(5), 1.0, 1.0, key))

    def test_invalid_bound(self):
        with pytest.raises(InvalidBound):
            add_gradient_noise(np.ones(2), 1.0, 0.0, StreamKey(0, "noise"))
