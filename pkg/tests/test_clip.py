# tests/test_clip.py
import pytest
import os
import sys
import math
import numpy as np

# Añadir la ruta raíz del proyecto al sys.path para importaciones
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.clip.clipping import STRATEGIES, clip_batch, hard_clip, soft_clip, strategy_info, unclipped_indicator
from src.clip.adaptive import ClipState, noisy_unclipped_fraction, update_threshold
from src.common.exceptions import EmptyBatch, InvalidBound, NonFiniteInput, NotAdaptive
from src.common.utils import cosine_similarity
from src.numerics.random_streams import StreamKey, generator


def _with_norm(direction: np.ndarray, norm: float) -> np.ndarray:
    return direction / np.linalg.norm(direction) * norm


FUZZ_SAMPLES = 100000


def _fuzz_cases(count: int, seed: int):
    # Dimensiones 1..1000, normas log-uniformes entre 1e-8 y 1e8, C entre 1e-2 y 1e2
    rng = generator(StreamKey(seed, "fuzz"))
    dims = rng.integers(1, 1001, size=count)
    norms = 10.0 ** rng.uniform(-8.0, 8.0, size=count)
    bounds = 10.0 ** rng.uniform(-2.0, 2.0, size=count)
    for d, n, C in zip(dims, norms, bounds):
        yield _with_norm(rng.standard_normal(int(d)), n), float(C)


class TestWorkedExample:
    def test_soft_factors_for_close_norms(self):
        direction = np.array([1.0, 2.0, -2.0])
        a = soft_clip(_with_norm(direction, 1.1), 1.0)
        b = soft_clip(_with_norm(direction, 1.2), 1.0)
        assert a.alpha == pytest.approx(0.72, abs=0.01)
        assert b.alpha == pytest.approx(0.68, abs=0.01)
        assert a.clipped_norm != pytest.approx(b.clipped_norm, abs=1e-3)
        assert a.clipped_norm < b.clipped_norm < 1.0

    def test_hard_collapses_close_norms(self):
        direction = np.array([1.0, 2.0, -2.0])
        a = hard_clip(_with_norm(direction, 1.1), 1.0)
        b = hard_clip(_with_norm(direction, 1.2), 1.0)
        assert a.clipped_norm == pytest.approx(1.0)
        assert b.clipped_norm == pytest.approx(1.0)


class TestClippingRules:
    def test_hard_identity_below_bound(self):
        g = np.array([0.3, -0.4])
        res = hard_clip(g, 1.0)
        assert res.alpha == 1.0
        np.testing.assert_array_equal(res.clipped, g)
        assert res.unclipped == 1

    def test_zero_gradient(self):
        assert hard_clip(np.zeros(4), 1.0).clipped_norm == 0.0
        assert soft_clip(np.zeros(4), 1.0).clipped_norm == 0.0

    def test_indicator_uses_raw_norm(self):
        g = np.array([3.0, 4.0])
        assert unclipped_indicator(g, 5.0) == 1
        assert unclipped_indicator(g, 4.999) == 0
        assert soft_clip(g, 5.0).unclipped == 1

    def test_invalid_bound(self):
        with pytest.raises(InvalidBound):
            hard_clip(np.ones(2), 0.0)
        with pytest.raises(InvalidBound):
            soft_clip(np.ones(2), float("inf"))

    def test_nan_gradient(self):
        with pytest.raises(NonFiniteInput):
            soft_clip(np.array([np.nan, 1.0]), 1.0)

    def test_strategy_registry(self):
        assert set(STRATEGIES) == {"hard", "soft-fixed", "adaptive-hard", "softadaclip"}
        assert strategy_info("softadaclip").rule == "soft" and strategy_info("softadaclip").adaptive
        assert strategy_info("hard").rule == "hard" and not strategy_info("hard").adaptive
        with pytest.raises(ValueError, match="Unknown clipping strategy"):
            strategy_info("clip-everything")


class TestClippingProperties:
    def test_fuzzed_bounds(self):
        # Sin tolerancia: ‖hard‖ <= C y ‖soft‖ < C exactos en punto flotante
        failures = []
        for i, (g, C) in enumerate(_fuzz_cases(FUZZ_SAMPLES, 123)):
            norm = np.linalg.norm(g)
            soft, hard = soft_clip(g, C), hard_clip(g, C)
            soft_norm, hard_norm = np.linalg.norm(soft.clipped), np.linalg.norm(hard.clipped)
            ok = (hard_norm <= C and soft_norm < C and soft_norm <= hard_norm
                  and math.isclose(hard_norm, min(norm, C), rel_tol=1e-14)
                  and math.isclose(cosine_similarity(g, soft.clipped), 1.0, abs_tol=1e-12)
                  and math.isclose(cosine_similarity(g, hard.clipped), 1.0, abs_tol=1e-12))
            if not ok:
                failures.append(i)
        assert failures == []

    def test_hard_just_above_bound(self):
        # Normas a pocos ulps de C: C/n redondea a 1 o casi 1
        direction = np.array([0.36, -0.48, 0.8])
        for C in (0.1, 1.0, 3.7, 42.0):
            n = C
            for _ in range(8):
                n = np.nextafter(n, np.inf)
                res = hard_clip(_with_norm(direction, n), C)
                assert np.linalg.norm(res.clipped) <= C

    def test_soft_norm_strictly_increasing(self):
        direction = np.array([0.6, -0.8])
        norms = np.geomspace(1e-3, 1e3, 200)
        clipped = [soft_clip(_with_norm(direction, n), 1.0).clipped_norm for n in norms]
        assert all(b > a for a, b in zip(clipped, clipped[1:]))

    def test_soft_strictly_below_bound_moderate_norms(self):
        for n in (1e-3, 0.5, 1.0, 10.0, 1e3):
            assert soft_clip(np.array([n]), 1.0).clipped_norm < 1.0


class TestClipBatch:
    def test_rows_match_single_rules(self):
        G = np.array([[3.0, 4.0], [0.1, 0.0], [-6.0, 8.0]])
        for strategy, rule in (("hard", hard_clip), ("softadaclip", soft_clip)):
            clipped, alphas, bits, norms = clip_batch(G, 1.0, strategy)
            for i, row in enumerate(G):
                single = rule(row, 1.0)
                np.testing.assert_allclose(clipped[i], single.clipped, rtol=1e-14)
                assert alphas[i] == pytest.approx(single.alpha, rel=1e-14)
            np.testing.assert_array_equal(bits, [0, 1, 0])
            np.testing.assert_allclose(norms, [5.0, 0.1, 10.0])

    @pytest.mark.parametrize("strategy", ["hard", "adaptive-hard", "soft-fixed", "softadaclip"])
    def test_rows_respect_bound(self, strategy):
        rng = generator(StreamKey(7, "fuzz-batch"))
        soft = strategy_info(strategy).rule == "soft"
        for d in (1, 7, 300):
            G = rng.standard_normal((500, d)) * 10.0 ** rng.uniform(-8.0, 8.0, size=(500, 1))
            for C in (0.01, 0.37, 25.0):
                clipped, alphas, _, _ = clip_batch(G, C, strategy)
                row_norms = np.array([np.linalg.norm(row) for row in clipped])
                assert np.all(row_norms <= C)
                if soft:
                    assert np.all(row_norms < C)
                np.testing.assert_array_equal(clipped, G * alphas[:, None])


class TestAdaptiveThreshold:
    def test_fraction_at_target_keeps_bound(self):
        state = ClipState(0.1, target_quantile=0.5, eta_c=0.2, adaptive=True)
        assert update_threshold(state, 0.5).C == pytest.approx(0.1)

    def test_all_unclipped_shrinks_bound(self):
        state = ClipState(1.0, target_quantile=0.5, eta_c=0.2, adaptive=True)
        assert update_threshold(state, 1.0).C == pytest.approx(math.exp(-0.1))

    def test_none_unclipped_grows_bound(self):
        state = ClipState(1.0, target_quantile=0.5, eta_c=0.2, adaptive=True)
        assert update_threshold(state, 0.0).C == pytest.approx(math.exp(0.1))

    def test_update_keeps_other_fields(self):
        state = ClipState(1.0, 0.7, 0.3, sigma_b=2.0, adaptive=True)
        new = update_threshold(state, 0.2)
        assert (new.target_quantile, new.eta_c, new.sigma_b, new.adaptive) == (0.7, 0.3, 2.0, True)
        assert state.C == 1.0

    def test_clamp_option(self):
        state = ClipState(1.0, adaptive=True, clamp_fraction=True)
        assert update_threshold(state, 1.7).C == pytest.approx(update_threshold(state, 1.0).C)

    def test_non_adaptive_raises(self):
        with pytest.raises(NotAdaptive):
            update_threshold(ClipState(1.0), 0.5)

    def test_noiseless_fraction_is_exact(self):
        assert noisy_unclipped_fraction([1, 0, 1, 1], 4, 0.0, StreamKey(0, "quantile")) == 0.75

    def test_noisy_fraction_deterministic(self):
        key = StreamKey(5, "quantile", 2, 0)
        a = noisy_unclipped_fraction([1, 0, 1], 3, 1.5, key)
        assert a == noisy_unclipped_fraction([1, 0, 1], 3, 1.5, key)
        assert a != pytest.approx(2 / 3)

    def test_empty_batch_raises(self):
        with pytest.raises(EmptyBatch):
            noisy_unclipped_fraction([], 0, 1.0, StreamKey(0, "quantile"))

    def test_state_roundtrip(self):
        state = ClipState(0.05, 0.6, 0.25, 1.2, adaptive=True)
        assert ClipState.from_dict(state.to_dict()).to_dict() == state.to_dict()
