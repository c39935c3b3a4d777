"""Tests for the differentiable tensor primitives."""

import math

import numpy as np
import pytest
import torch

from src.exceptions import ContractError, SequenceLengthError, ShapeError
from src.tensor_ops import DTYPE, backward, l2_norm, masked_softmax, matmul, softmax, temporal_conv


def _t(values):
    return torch.tensor(values, dtype=DTYPE)


class TestMatmul:
    """Tests for matmul."""

    def test_batched_product(self):
        """Test batched product against numpy."""
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 5))
        np.testing.assert_allclose(matmul(_t(a), _t(b)).numpy(), a @ b, atol=1e-12)

    def test_inner_mismatch_names_shapes(self):
        """Test that mismatched inner extents report both shapes."""
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            matmul(torch.zeros(2, 3, dtype=DTYPE), torch.zeros(4, 5, dtype=DTYPE))

    def test_leading_mismatch(self):
        """Test that incompatible batch extents are rejected."""
        with pytest.raises(ShapeError):
            matmul(torch.zeros(2, 3, 4, dtype=DTYPE), torch.zeros(3, 4, 5, dtype=DTYPE))


class TestSoftmax:
    """Tests for softmax and masked_softmax."""

    def test_rows_sum_to_one(self):
        """Test normalization of large logits."""
        out = softmax(_t([[1000.0, 1001.0, 999.0], [0.0, 0.0, 0.0]]), axis=-1)
        np.testing.assert_allclose(out.sum(dim=-1).numpy(), [1.0, 1.0], atol=1e-12)
        assert torch.isfinite(out).all()

    def test_negative_infinity_gets_zero(self):
        """Test that -inf entries receive exactly zero weight."""
        out = softmax(_t([0.0, float("-inf"), 0.0]), axis=0)
        assert out[1].item() == 0.0
        assert out[0].item() == pytest.approx(0.5)

    def test_bad_axis(self):
        """Test out-of-range axis."""
        with pytest.raises(ShapeError):
            softmax(_t([1.0, 2.0]), axis=3)

    def test_masked_entries_zero(self):
        """Test masked softmax ignores masked entries."""
        x = _t([[1.0, 5.0, 2.0]])
        mask = torch.tensor([[True, False, True]])
        out = masked_softmax(x, mask, axis=-1)
        assert out[0, 1].item() == 0.0
        expected = np.exp([1.0, 2.0]) / np.exp([1.0, 2.0]).sum()
        np.testing.assert_allclose(out[0, [0, 2]].numpy(), expected, atol=1e-12)

    def test_fully_masked_row_is_zero(self):
        """Test a row with no unmasked entry comes back as zeros."""
        out = masked_softmax(_t([[1.0, 2.0]]), torch.tensor([[False, False]]), axis=-1)
        assert torch.equal(out, torch.zeros(1, 2, dtype=DTYPE))


class TestL2Norm:
    """Tests for l2_norm."""

    def test_three_four_five(self):
        """Test the 3-4-5 triple."""
        assert l2_norm(_t([[3.0, 4.0]]), axis=1).item() == pytest.approx(5.0)

    def test_zero_vector_has_zero_gradient(self):
        """Test the zero subgradient at the origin."""
        x = torch.zeros(3, dtype=DTYPE, requires_grad=True)
        l2_norm(x, axis=0).backward()
        assert torch.equal(x.grad, torch.zeros(3, dtype=DTYPE))

    def test_gradient_is_unit_vector(self):
        """Test gradient x / |x| away from the origin."""
        x = _t([3.0, 4.0]).requires_grad_(True)
        l2_norm(x, axis=0).backward()
        np.testing.assert_allclose(x.grad.numpy(), [0.6, 0.8], atol=1e-12)


class TestTemporalConv:
    """Tests for temporal_conv."""

    def test_identity_kernel(self):
        """Test that a centered delta kernel returns the input."""
        x = torch.randn(2, 3, 7, 4, dtype=DTYPE)
        out = temporal_conv(x, _t([0.0, 1.0, 0.0]))
        assert torch.allclose(out, x, atol=1e-12)

    def test_length_preserved_with_dilation(self):
        """Test zero padding keeps T for every dilation."""
        x = torch.randn(1, 2, 9, 3, dtype=DTYPE)
        for dilation in (1, 2, 3):
            assert temporal_conv(x, _t([1.0, 2.0, 3.0, 2.0, 1.0]), dilation).shape == x.shape

    def test_matches_loop_oracle(self):
        """Test a dilated depthwise convolution against an explicit loop."""
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 2, 8, 3))
        kernel = rng.normal(size=3)
        dilation = 2
        expected = np.zeros_like(x)
        for t in range(8):
            for k in range(3):
                source = t + (k - 1) * dilation
                if 0 <= source < 8:
                    expected[:, :, t] += kernel[k] * x[:, :, source]
        out = temporal_conv(_t(x), _t(kernel), dilation)
        np.testing.assert_allclose(out.numpy(), expected, atol=1e-12)

    def test_joints_never_mix(self):
        """Test that an impulse at one joint stays at that joint."""
        x = torch.zeros(1, 1, 5, 3, dtype=DTYPE)
        x[0, 0, 2, 1] = 1.0
        out = temporal_conv(x, _t([1.0, 1.0, 1.0]))
        assert out[..., 0].abs().sum() == 0
        assert out[..., 2].abs().sum() == 0

    def test_full_weight(self):
        """Test a [C_out, C_in, K] kernel changes the channel count."""
        x = torch.randn(2, 3, 6, 4, dtype=DTYPE)
        assert temporal_conv(x, torch.randn(5, 3, 3, dtype=DTYPE)).shape == (2, 5, 6, 4)

    def test_even_kernel_rejected(self):
        """Test that even kernels are rejected."""
        with pytest.raises(ShapeError):
            temporal_conv(torch.zeros(1, 1, 4, 2, dtype=DTYPE), _t([1.0, 1.0]))

    def test_empty_sequence(self):
        """Test that a sequence without frames is rejected."""
        with pytest.raises(SequenceLengthError):
            temporal_conv(torch.zeros(1, 1, 0, 2, dtype=DTYPE), _t([1.0]))


class TestBackward:
    """Tests for backward."""

    def test_named_gradients(self):
        """Test gradients of a scalar with respect to named leaves."""
        a = _t([1.0, 2.0]).requires_grad_(True)
        b = _t([3.0]).requires_grad_(True)
        unused = _t([5.0]).requires_grad_(True)
        grads = backward((a * a).sum() * b.sum(), {"a": a, "b": b, "unused": unused})
        np.testing.assert_allclose(grads["a"].numpy(), [6.0, 12.0])
        np.testing.assert_allclose(grads["b"].numpy(), [5.0])
        assert torch.equal(grads["unused"], torch.zeros(1, dtype=DTYPE))

    def test_non_scalar_root(self):
        """Test that a vector root is rejected."""
        a = _t([1.0, 2.0]).requires_grad_(True)
        with pytest.raises(ContractError):
            backward(a * 2, {"a": a})

    def test_softmax_gradient_sums_to_zero(self):
        """Test that softmax output mass is invariant to a shift of logits."""
        x = _t([0.3, -1.2, 2.0]).requires_grad_(True)
        grads = backward(softmax(x, axis=0)[0] * math.pi, {"x": x})
        assert grads["x"].sum().item() == pytest.approx(0.0, abs=1e-12)
