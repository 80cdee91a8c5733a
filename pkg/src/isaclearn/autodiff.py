"""Reverse-mode differentiation over a small set of array primitives.

The training loss is a scalar function of real float64 arrays (complex
quantities enter as explicit real/imaginary pairs). Forward evaluation
records a trace on a Tape; Tape.backward walks it once in reverse and
accumulates gradients on the leaves. A trace is consumed by backward and
cannot be replayed.

Every primitive the loss needs is defined here: elementwise arithmetic,
2-D matrix products, ReLU, |x|, integer powers, sqrt, full sums, min,
column concatenation, row slicing, and reshape. Anything else fails at
construction time rather than silently producing wrong gradients.

All primitives accept plain ndarrays in place of Vars; with no Var operand
they compute the plain numpy result. Forward-only code (inference) and
traced code (training) therefore share one implementation.

Subgradient conventions at kinks are fixed: ReLU'(0) = 0, d|x|/dx = 0 at 0,
and min ties route the gradient to the lowest flat index. Each kink
primitive also records its input on the tape so finite_diff_check can
detect when a perturbation crosses a kink and exclude that coordinate.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

_EPS = float(np.finfo(np.float64).eps)


class Tape:
    """Recorded forward trace plus kink probes."""

    __slots__ = ("nodes", "kinks", "consumed")

    def __init__(self):
        self.nodes = []
        self.kinks = []      # (kind, input array) pairs, kinds "zero" | "min"
        self.consumed = False

    def leaf(self, value) -> "Var":
        """Wrap a parameter array as a differentiable leaf."""
        return Var(np.asarray(value, dtype=np.float64), self)

    def backward(self, out: "Var") -> None:
        """Accumulate d(out)/d(leaf) on every leaf. One shot per tape."""
        if self.consumed:
            raise InvalidArgumentError("trace already consumed by a previous backward")
        if not isinstance(out, Var) or out.tape is not self:
            raise InvalidArgumentError("backward target must be a Var recorded on this tape")
        if out.value.shape != ():
            raise InvalidArgumentError(f"backward needs a scalar output, got shape {out.value.shape}")
        self.consumed = True
        out.grad = np.ones(())
        for node in reversed(self.nodes):
            if node.grad is not None:
                node._bw(node.grad)

    def kink_signature(self) -> np.ndarray:
        """Integer fingerprint of the branch each kink took on this trace.

        Sign kinks contribute +1 (strictly positive input) or -1 per entry,
        min probes 1 + argmin. Two evaluations with equal signatures ran the
        same smooth piece of the function end to end, so a finite difference
        between them measures that piece's true derivative; any flip means
        the quotient straddles a kink and is meaningless. A base point lying
        exactly on a kink always flips against one of its probes, which is
        what excludes kink-adjacent coordinates.
        """
        parts = []
        for kind, val in self.kinks:
            flat = val.ravel()
            if kind == "zero":
                parts.append(np.where(flat > 0, 1, -1).astype(np.int64))
            else:  # "min"
                parts.append(np.array([1 + int(np.argmin(flat))], dtype=np.int64))
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(parts)


class Var:
    """One traced array value."""

    __slots__ = ("value", "tape", "grad", "_bw")
    __array_ufunc__ = None  # keep numpy from hijacking mixed expressions

    def __init__(self, value: np.ndarray, tape: Tape):
        self.value = value
        self.tape = tape
        self.grad = None
        self._bw = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    # arithmetic sugar
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __neg__(self):
        return neg(self)


def _is_var(x) -> bool:
    return isinstance(x, Var)


def _val(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*xs) -> Tape:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise InvalidArgumentError("operands recorded on different tapes")
    return tape


def _acc(x: Var, g) -> None:
    if x.grad is None:
        x.grad = np.zeros_like(x.value)
    x.grad += g


def _record(tape: Tape, value: np.ndarray, bw) -> Var:
    out = Var(value, tape)
    out._bw = bw
    tape.nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to an operand's shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    av, bv = _val(a), _val(b)
    out_v = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        return out_v

    def bw(g):
        if _is_var(a):
            _acc(a, _unbroadcast(g, av.shape))
        if _is_var(b):
            _acc(b, _unbroadcast(g, bv.shape))

    return _record(tape, out_v, bw)


def sub(a, b):
    av, bv = _val(a), _val(b)
    out_v = av - bv
    tape = _tape_of(a, b)
    if tape is None:
        return out_v

    def bw(g):
        if _is_var(a):
            _acc(a, _unbroadcast(g, av.shape))
        if _is_var(b):
            _acc(b, _unbroadcast(-g, bv.shape))

    return _record(tape, out_v, bw)


def neg(a):
    av = _val(a)
    tape = _tape_of(a)
    if tape is None:
        return -av

    def bw(g):
        _acc(a, -g)

    return _record(tape, -av, bw)


def mul(a, b):
    av, bv = _val(a), _val(b)
    out_v = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        return out_v

    def bw(g):
        if _is_var(a):
            _acc(a, _unbroadcast(g * bv, av.shape))
        if _is_var(b):
            _acc(b, _unbroadcast(g * av, bv.shape))

    return _record(tape, out_v, bw)


def div(a, b):
    av, bv = _val(a), _val(b)
    out_v = av / bv
    tape = _tape_of(a, b)
    if tape is None:
        return out_v

    def bw(g):
        if _is_var(a):
            _acc(a, _unbroadcast(g / bv, av.shape))
        if _is_var(b):
            _acc(b, _unbroadcast(-g * out_v / bv, bv.shape))

    return _record(tape, out_v, bw)


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if not (av.ndim == 2 and bv.ndim in (1, 2)):
        raise InvalidArgumentError(
            f"matmul supports 2-D @ 2-D and 2-D @ 1-D only, got {av.ndim}-D @ {bv.ndim}-D")
    out_v = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        return out_v

    def bw(g):
        if _is_var(a):
            _acc(a, g @ bv.T if bv.ndim == 2 else np.outer(g, bv))
        if _is_var(b):
            _acc(b, av.T @ g)

    return _record(tape, out_v, bw)


def relu(a):
    av = _val(a)
    out_v = np.maximum(av, 0.0)
    tape = _tape_of(a)
    if tape is None:
        return out_v
    tape.kinks.append(("zero", av))
    mask = av > 0.0  # derivative 0 at the kink itself

    def bw(g):
        _acc(a, g * mask)

    return _record(tape, out_v, bw)


def absval(a):
    av = _val(a)
    tape = _tape_of(a)
    if tape is None:
        return np.abs(av)
    tape.kinks.append(("zero", av))
    sgn = np.sign(av)  # 0 at the kink itself

    def bw(g):
        _acc(a, g * sgn)

    return _record(tape, np.abs(av), bw)


def powi(a, k):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidArgumentError(f"powi exponent must be an integer >= 1, got {k!r}")
    av = _val(a)
    out_v = av ** k
    tape = _tape_of(a)
    if tape is None:
        return out_v

    def bw(g):
        _acc(a, g * k * av ** (k - 1))

    return _record(tape, out_v, bw)


def sqrtv(a):
    av = _val(a)
    out_v = np.sqrt(av)
    tape = _tape_of(a)
    if tape is None:
        return out_v

    def bw(g):
        _acc(a, g * 0.5 / out_v)

    return _record(tape, out_v, bw)


def total(a):
    """Sum of all entries, as a scalar."""
    av = _val(a)
    out_v = np.asarray(av.sum())
    tape = _tape_of(a)
    if tape is None:
        return out_v

    def bw(g):
        _acc(a, g)  # broadcasts over the operand

    return _record(tape, out_v, bw)


def vmin(a):
    """Minimum entry, as a scalar; gradient routes to the lowest flat index."""
    av = _val(a)
    flat = av.ravel()
    if flat.size == 0:
        raise InvalidArgumentError("vmin of an empty array")
    i = int(np.argmin(flat))  # first occurrence on ties
    out_v = np.asarray(flat[i])
    tape = _tape_of(a)
    if tape is None:
        return out_v
    tape.kinks.append(("min", av))

    def bw(g):
        z = np.zeros_like(av)
        z.flat[i] = g
        _acc(a, z)

    return _record(tape, out_v, bw)


def hstack(xs):
    """Concatenate 2-D blocks along columns."""
    vals = [_val(x) for x in xs]
    for v in vals:
        if v.ndim != 2:
            raise InvalidArgumentError("hstack expects 2-D blocks")
    out_v = np.concatenate(vals, axis=1)
    tape = _tape_of(*xs)
    if tape is None:
        return out_v
    offsets = np.cumsum([0] + [v.shape[1] for v in vals])

    def bw(g):
        for x, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
            if _is_var(x):
                _acc(x, g[:, lo:hi])

    return _record(tape, out_v, bw)


def rows(a, i0: int, i1: int):
    """Row slice [i0:i1] of a 2-D array."""
    av = _val(a)
    if av.ndim != 2:
        raise InvalidArgumentError("rows expects a 2-D array")
    if not (0 <= i0 <= i1 <= av.shape[0]):
        raise InvalidArgumentError(f"row slice [{i0}:{i1}] out of range for {av.shape}")
    out_v = av[i0:i1]
    tape = _tape_of(a)
    if tape is None:
        return out_v

    def bw(g):
        z = np.zeros_like(av)
        z[i0:i1] = g
        _acc(a, z)

    return _record(tape, out_v.copy(), bw)


def reshape(a, shape):
    av = _val(a)
    out_v = av.reshape(shape)
    tape = _tape_of(a)
    if tape is None:
        return out_v

    def bw(g):
        _acc(a, g.reshape(av.shape))

    return _record(tape, out_v.copy(), bw)


def cpair_matmul(a_pair, b_pair):
    """Complex matrix product over (real, imag) pairs of Vars/arrays."""
    ar, ai = a_pair
    br, bi = b_pair
    re = sub(matmul(ar, br), matmul(ai, bi))
    im = add(matmul(ar, bi), matmul(ai, br))
    return re, im


@dataclass
class GradBundle:
    """Gradients congruent with a parameter container's arrays() order."""

    arrays: list

    def add_(self, other: "GradBundle") -> None:
        for mine, theirs in zip(self.arrays, other.arrays):
            mine += theirs

    def scale_(self, c: float) -> None:
        for a in self.arrays:
            a *= c

    def scaled(self, c: float) -> "GradBundle":
        return GradBundle([a * c for a in self.arrays])

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(a * a)) for a in self.arrays))

    @classmethod
    def zeros_like(cls, params) -> "GradBundle":
        return cls([np.zeros_like(a) for a in params.arrays()])


def eval_with_grad(f, params, *args, **kwargs):
    """Evaluate f(params, ...) and its gradient w.r.t. every parameter array.

    `params` must expose arrays() -> list of float64 ndarrays and
    replace_arrays(list) -> same structure; f must return a scalar Var when
    handed the traced structure. Returns (float value, GradBundle).
    """
    tape = Tape()
    leaves = [tape.leaf(a) for a in params.arrays()]
    out = f(params.replace_arrays(leaves), *args, **kwargs)
    if not isinstance(out, Var):
        raise InvalidArgumentError("traced function must return a Var")
    tape.backward(out)
    grads = [lv.grad if lv.grad is not None else np.zeros_like(lv.value) for lv in leaves]
    return float(out.value), GradBundle(grads)


def _forward_signature(f, params, args, kwargs):
    tape = Tape()
    leaves = [tape.leaf(a) for a in params.arrays()]
    out = f(params.replace_arrays(leaves), *args, **kwargs)
    return float(out.value), tape.kink_signature()


def signatures_match(a: np.ndarray, b: np.ndarray) -> bool:
    """Whether two kink signatures took identical branches throughout."""
    return a.shape == b.shape and bool(np.all(a == b))


@dataclass
class FiniteDiffReport:
    """Outcome of a central-difference sweep against the analytic gradient."""

    n_checked: int = 0
    n_passed: int = 0
    n_excluded: int = 0       # coordinates straddling a kink at every step tried
    n_noise_passes: int = 0   # discrepancy under the round-off floor of the designed step
    n_refined: int = 0        # passed only after shrinking the step (truncation-limited)
    max_rel_err: float = 0.0  # worst relative error among measured passes
    failures: list = field(default_factory=list)    # (array idx, flat idx, analytic, fd, rel)
    excluded: list = field(default_factory=list)    # (array idx, flat idx)

    @property
    def ok(self) -> bool:
        return not self.failures and self.n_checked > 0


def finite_diff_check(f, params, *args, tolerance: float = 1e-6, step: float = 1e-5,
                      max_coords: int = None, refine_levels: int = 5,
                      coord_rng: np.random.Generator = None, **kwargs) -> FiniteDiffReport:
    """Compare the analytic gradient of f against central finite differences.

    Checks every scalar coordinate, or a stratified random subset of
    `max_coords` (at least one per parameter array, remainder allocated by
    size) when the full sweep is too slow.

    Per coordinate, the quotient at the designed step passes if it matches
    to `tolerance` relative error, or if the discrepancy sits below that
    step's round-off floor (eps * |f| / step scaled by a safety factor):
    central differences carry no information beneath it. Otherwise the step
    shrinks decade by decade, up to `refine_levels` times, to defeat
    truncation error on strongly curved coordinates; refined steps must pass
    the relative tolerance outright. A step whose two evaluations take any
    kink branch differently from the base trace is never compared; if every
    step tried crosses a kink, the coordinate is excluded and reported.
    """
    tape = Tape()
    leaves = [tape.leaf(a) for a in params.arrays()]
    out = f(params.replace_arrays(leaves), *args, **kwargs)
    if not isinstance(out, Var):
        raise InvalidArgumentError("traced function must return a Var")
    base_val = float(out.value)
    sig_base = tape.kink_signature()
    tape.backward(out)
    bundle = GradBundle([lv.grad if lv.grad is not None else np.zeros_like(lv.value)
                         for lv in leaves])
    arrays = params.arrays()

    coords = [(ai, fi) for ai, arr in enumerate(arrays) for fi in range(arr.size)]
    if max_coords is not None and max_coords < len(coords):
        gen = coord_rng if coord_rng is not None else np.random.default_rng(0)
        sizes = np.array([arr.size for arr in arrays], dtype=float)
        quota = np.maximum(1, np.floor(max_coords * sizes / sizes.sum()).astype(int))
        while quota.sum() > max_coords:
            quota[int(np.argmax(quota))] -= 1
        picked = []
        for ai, arr in enumerate(arrays):
            take = min(int(quota[ai]), arr.size)
            for fi in gen.choice(arr.size, size=take, replace=False):
                picked.append((ai, int(fi)))
        coords = picked

    report = FiniteDiffReport()
    for ai, fi in coords:
        bumped = arrays[ai].copy()
        trial = params.replace_arrays(
            [bumped if j == ai else a for j, a in enumerate(arrays)])
        an = float(bundle.arrays[ai].flat[fi])

        passed = rel_seen = None
        crossed_every_step = True
        for level in range(refine_levels + 1):
            h = step / 10.0 ** level
            bumped.flat[fi] = arrays[ai].flat[fi] + h
            vp, sig_p = _forward_signature(f, trial, args, kwargs)
            bumped.flat[fi] = arrays[ai].flat[fi] - h
            vm, sig_m = _forward_signature(f, trial, args, kwargs)
            if not (signatures_match(sig_p, sig_base) and signatures_match(sig_m, sig_base)):
                continue
            crossed_every_step = False

            fd = (vp - vm) / (2.0 * h)
            denom = max(abs(fd), abs(an))
            noise = 100.0 * _EPS * max(1.0, abs(base_val)) / h
            rel = abs(fd - an) / denom if denom > 0 else 0.0
            if rel <= tolerance:
                passed = ("rel", rel, level)
                break
            if level == 0 and abs(fd - an) <= noise:
                passed = ("noise", rel, level)
                break
            rel_seen = (rel, an, fd)

        if passed is not None:
            kind, rel, level = passed
            report.n_checked += 1
            report.n_passed += 1
            if kind == "noise":
                report.n_noise_passes += 1
            else:
                report.max_rel_err = max(report.max_rel_err, rel)
                if level > 0:
                    report.n_refined += 1
        elif crossed_every_step:
            report.n_excluded += 1
            report.excluded.append((ai, fi))
        else:
            rel, an_v, fd_v = rel_seen
            report.n_checked += 1
            report.failures.append((ai, fi, an_v, fd_v, rel))
    return report
