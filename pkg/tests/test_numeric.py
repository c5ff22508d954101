import math

import numpy as np
import pytest

from care_gnn.numeric import (AdamState, AffineParams, NumericError, adam_step, affine, bce_logit_grad, bce_loss,
                              l2_penalty, sigmoid)


class TestAffine:
    def test_identity(self):
        p = AffineParams(np.eye(2), np.zeros(2))
        assert affine(p, np.array([1.0, 2.0])).tolist() == [1.0, 2.0]

    def test_bias_only(self):
        p = AffineParams(np.zeros((1, 4)), np.array([3.0]))
        assert affine(p, np.arange(4.0)).tolist() == [3.0]

    def test_arithmetic(self):
        p = AffineParams(np.array([[1.0, 1.0]]), np.array([0.5]))
        assert affine(p, np.array([2.0, 3.0])).tolist() == [5.5]

    def test_rowwise(self):
        p = AffineParams(np.array([[1.0, -1.0]]), np.array([0.0]))
        assert affine(p, np.array([[1.0, 0.0], [0.0, 1.0]])).tolist() == [[1.0], [-1.0]]


class TestBCE:
    def test_half(self):
        assert bce_loss(0.5, 0) == pytest.approx(math.log(2))
        assert bce_loss(0.5, 1) == pytest.approx(math.log(2))

    def test_confident_correct(self):
        assert bce_loss(1 - 1e-12, 1) == pytest.approx(0.0, abs=1e-6)

    def test_confident_wrong(self):
        assert bce_loss(0.9, 0) == pytest.approx(-math.log(0.1))

    def test_clamped_is_finite(self):
        assert np.isfinite(bce_loss(0.0, 1))

    def test_logit_grad_matches_difference(self):
        z, y, h = 0.7, 1.0, 1e-6
        num = (bce_loss(sigmoid(z + h), y) - bce_loss(sigmoid(z - h), y)) / (2 * h)
        assert bce_logit_grad(sigmoid(z), y) == pytest.approx(num, rel=1e-7)

    def test_sigmoid_stable(self):
        out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        assert out.tolist() == [0.0, 0.5, 1.0]


class TestL2:
    def test_zero_weight(self):
        assert l2_penalty({"a.weight": np.ones(3)}, 0.0) == 0.0

    def test_single_weight(self):
        assert l2_penalty({"a.weight": np.array([2.0])}, 0.001) == pytest.approx(0.004)

    def test_bias_excluded(self):
        grads = {}
        assert l2_penalty({"a.bias": np.array([5.0]), "a.weight": np.array([1.0])}, 0.5, grads) == 0.5
        assert "a.bias" not in grads
        assert grads["a.weight"].tolist() == [1.0]


class TestAdam:
    def test_zero_gradient(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState.for_params(params)
        adam_step(params, {"w": np.zeros(2)}, state, 0.01)
        assert params["w"].tolist() == [1.0, -2.0]
        assert state.step == 1

    def test_first_step_is_sign(self):
        params = {"w": np.zeros(3)}
        state = AdamState.for_params(params)
        adam_step(params, {"w": np.array([0.3, -5.0, 1e-3])}, state, 0.01)
        np.testing.assert_allclose(params["w"], [-0.01, 0.01, -0.01], rtol=1e-4)

    def test_constant_gradient_monotone(self):
        params = {"w": np.array([0.0])}
        state = AdamState.for_params(params)
        seen = []
        for _ in range(20):
            adam_step(params, {"w": np.array([1.0])}, state, 0.01)
            seen.append(params["w"][0])
        assert all(b < a for a, b in zip(seen, seen[1:]))

    def test_non_finite_rejected(self):
        params = {"w": np.array([1.0])}
        state = AdamState.for_params(params)
        with pytest.raises(NumericError):
            adam_step(params, {"w": np.array([np.nan])}, state, 0.01)
        assert params["w"].tolist() == [1.0]
        assert state.step == 0
