import math

import numpy as np
import pytest

from isaclearn import autodiff as ad
from isaclearn.autodiff import (GradBundle, Tape, Var, eval_with_grad,
                                finite_diff_check)
from isaclearn.errors import InvalidArgumentError


class Params:
    """Minimal arrays()/replace_arrays() container for the checkers."""

    def __init__(self, arrays):
        self._arrays = [np.asarray(a, dtype=np.float64) for a in arrays]

    def arrays(self):
        return self._arrays

    def replace_arrays(self, arrays):
        p = Params.__new__(Params)
        p._arrays = list(arrays)
        return p


def _grad_of(fn, *arrays):
    """Trace fn over leaf copies of the arrays; return (value, grads)."""
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    out = fn(*leaves)
    tape.backward(out)
    return float(out.value), [lv.grad for lv in leaves]


def test_add_mul_grads():
    a = np.array([1.0, 2.0])
    b = np.array([3.0, 4.0])
    val, (ga, gb) = _grad_of(lambda x, y: ad.total(ad.mul(x, y)), a, b)
    assert val == pytest.approx(11.0)
    assert np.allclose(ga, b)
    assert np.allclose(gb, a)


def test_sub_div_grads():
    a = np.array([6.0])
    b = np.array([2.0])
    val, (ga, gb) = _grad_of(lambda x, y: ad.total(ad.div(ad.sub(x, 1.0), y)), a, b)
    assert val == pytest.approx(2.5)
    assert ga[0] == pytest.approx(0.5)
    assert gb[0] == pytest.approx(-5.0 / 4.0)


def test_matmul_grad():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    x = np.array([[5.0], [6.0]])
    val, (ga, gx) = _grad_of(lambda p, q: ad.total(ad.matmul(p, q)), a, x)
    assert val == pytest.approx(17 + 39)
    assert np.allclose(ga, np.array([[5.0, 6.0], [5.0, 6.0]]))
    assert np.allclose(gx, np.array([[4.0], [6.0]]))


def test_relu_grad_and_subgradient_at_zero():
    x = np.array([-2.0, 0.0, 3.0])
    val, (g,) = _grad_of(lambda v: ad.total(ad.relu(v)), x)
    assert val == pytest.approx(3.0)
    # zero side of the kink takes the inactive branch
    assert np.allclose(g, [0.0, 0.0, 1.0])


def test_absval_grad():
    x = np.array([-2.0, 3.0])
    _, (g,) = _grad_of(lambda v: ad.total(ad.absval(v)), x)
    assert np.allclose(g, [-1.0, 1.0])


def test_powi_grad():
    x = np.array([2.0, -3.0])
    val, (g,) = _grad_of(lambda v: ad.total(ad.powi(v, 3)), x)
    assert val == pytest.approx(8.0 - 27.0)
    assert np.allclose(g, 3 * x ** 2)


def test_sqrt_grad():
    x = np.array(4.0)
    val, (g,) = _grad_of(lambda v: ad.sqrtv(v), x)
    assert val == pytest.approx(2.0)
    assert float(g) == pytest.approx(0.25)


def test_vmin_takes_lowest_index_on_ties():
    x = np.array([2.0, 1.0, 1.0, 5.0])
    val, (g,) = _grad_of(lambda v: ad.vmin(v), x)
    assert val == pytest.approx(1.0)
    assert np.allclose(g, [0.0, 1.0, 0.0, 0.0])


def test_broadcast_bias_grad_sums():
    # adding a column vector across a matrix must sum the bias gradient
    w = np.zeros((2, 3))
    b = np.array([[1.0], [2.0]])
    _, (gw, gb) = _grad_of(lambda m, v: ad.total(ad.add(m, v)), w, b)
    assert np.allclose(gw, np.ones((2, 3)))
    assert np.allclose(gb, [[3.0], [3.0]])


def test_hstack_rows_reshape_grads():
    a = np.array([[1.0, 2.0]])
    b = np.array([[3.0]])

    def fn(x, y):
        joined = ad.hstack([x, y])                    # 1x3
        return ad.total(ad.mul(joined, joined))

    val, (ga, gb) = _grad_of(fn, a, b)
    assert val == pytest.approx(1 + 4 + 9)
    assert np.allclose(ga, 2 * a)
    assert np.allclose(gb, 2 * b)

    m = np.arange(6.0).reshape(2, 3)
    _, (gm,) = _grad_of(lambda x: ad.total(ad.rows(x, 1, 2)), m)
    assert np.allclose(gm, [[0, 0, 0], [1, 1, 1]])

    _, (gr,) = _grad_of(lambda x: ad.total(ad.reshape(x, (3, 2))), m)
    assert np.allclose(gr, np.ones((2, 3)))


def test_complex_pair_matmul_matches_numpy():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    re, im = ad.cpair_matmul((a.real, a.imag), (b.real, b.imag))
    assert np.allclose(re + 1j * im, a @ b, atol=1e-12)


def test_tape_one_shot_and_scalar_guard():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    y = ad.total(ad.mul(x, x))
    tape.backward(y)
    with pytest.raises(InvalidArgumentError):
        tape.backward(y)
    tape2 = Tape()
    v = tape2.leaf(np.ones(3))
    with pytest.raises(InvalidArgumentError):
        tape2.backward(ad.mul(v, v))   # non-scalar output


def test_constants_pass_through_untraced():
    # ops on plain arrays return plain arrays
    out = ad.mul(np.ones(3), 2.0)
    assert isinstance(out, np.ndarray)
    re, im = ad.cpair_matmul((np.eye(2), np.zeros((2, 2))),
                             (np.eye(2), np.zeros((2, 2))))
    assert isinstance(re, np.ndarray)


def test_eval_with_grad_and_bundle():
    p = Params([np.array([1.0, -2.0]), np.array([[3.0]])])

    def f(params):
        a, b = params.arrays()
        return ad.add(ad.total(ad.mul(a, a)), ad.total(b))

    val, g = eval_with_grad(f, p)
    assert val == pytest.approx(1 + 4 + 3)
    assert np.allclose(g.arrays[0], [2.0, -4.0])
    assert np.allclose(g.arrays[1], [[1.0]])
    g2 = g.scaled(2.0)
    assert np.allclose(g2.arrays[0], [4.0, -8.0])
    g.add_(g2)
    assert np.allclose(g.arrays[0], [6.0, -12.0])
    assert g.norm() == pytest.approx(math.sqrt(36 + 144 + 9))


def test_finite_diff_accepts_smooth_function():
    rng = np.random.default_rng(7)
    p = Params([rng.standard_normal((3, 3)), rng.standard_normal(3)])

    def f(params):
        w, b = params.arrays()
        y = ad.add(ad.matmul(w, ad.reshape(b, (-1, 1))), 1.0)
        return ad.total(ad.mul(y, y))

    report = finite_diff_check(f, p, tolerance=1e-6)
    assert report.ok
    assert report.n_checked == 12
    assert report.max_rel_err < 1e-6


def test_finite_diff_flags_wrong_gradient():
    p = Params([np.array([0.7])])

    class Lying:
        """Forward of x^2 with a deliberately broken backward."""

        def __call__(self, params):
            (x,) = params.arrays()
            tape = x.tape
            out = ad.mul(x, x)

            def bw(g):
                x.grad = (x.grad if x.grad is not None else 0) + 3.0 * g  # wrong

            out._bw = bw
            return ad.total(out)

    report = finite_diff_check(Lying(), p, tolerance=1e-6)
    assert not report.ok
    assert len(report.failures) == 1


def test_finite_diff_excludes_kink_straddlers():
    # relu evaluated exactly at zero flips branches for any step size
    p = Params([np.array([0.0, 1.0])])

    def f(params):
        (x,) = params.arrays()
        return ad.total(ad.relu(x))

    report = finite_diff_check(f, p, tolerance=1e-6)
    assert report.n_excluded == 1
    assert report.excluded == [(0, 0)]
    assert report.n_passed == report.n_checked == 1


def test_finite_diff_subsampling_covers_every_array():
    rng = np.random.default_rng(11)
    p = Params([rng.standard_normal((6, 6)), rng.standard_normal(2)])

    def f(params):
        w, b = params.arrays()
        return ad.add(ad.total(ad.mul(w, w)), ad.total(ad.mul(b, b)))

    report = finite_diff_check(f, p, tolerance=1e-6, max_coords=10,
                               coord_rng=np.random.default_rng(0))
    assert report.ok
    assert report.n_checked == 10
