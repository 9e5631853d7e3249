import numpy as np
import pytest

from lsrnet.errors import ContractViolation, NumericError
from lsrnet.tensor import Tensor, no_grad


def test_sum_gradient_is_all_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3) + 1, requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_square_gradient():
    x = Tensor([3.0], requires_grad=True)
    (x * x).sum().backward()
    assert x.grad[0] == 6.0
    y = Tensor([3.0], requires_grad=True)
    (y**2).sum().backward()
    assert y.grad[0] == pytest.approx(6.0)


def test_backward_accumulates_until_zeroed():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * 2.0).sum().backward()
    (x * 2.0).sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 4.0])
    x.zero_grad()
    assert x.grad is None


def test_backward_on_non_scalar_raises():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractViolation):
        (x * 2.0).backward()


def test_shared_subexpression_gradients_add():
    x = Tensor([2.0], requires_grad=True)
    y = x * x
    (y + y * x).sum().backward()  # x^2 + x^3
    assert x.grad[0] == pytest.approx(2 * 2.0 + 3 * 4.0)


def test_broadcast_gradient_reduces_to_operand_shape():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    (a * b).sum().backward()
    np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])


def test_non_finite_rejected_at_construction():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        Tensor([np.inf])


@pytest.mark.filterwarnings("ignore:overflow")
def test_non_finite_kernel_result_fails_fast():
    x = Tensor([1e308])
    with pytest.raises(NumericError):
        x * 10.0


def test_zero_extent_rejected():
    with pytest.raises(ContractViolation):
        Tensor(np.zeros((0, 3)))


def test_no_grad_builds_no_graph():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 3.0
    assert not y.requires_grad


def test_data_is_double_precision():
    assert Tensor(np.ones(3, dtype=np.float32)).data.dtype == np.float64


def test_grad_shape_matches_data():
    x = Tensor(np.ones((2, 2, 3)), requires_grad=True)
    x.reshape(4, 3).mean(axis=0).sum().backward()
    assert x.grad.shape == x.shape
