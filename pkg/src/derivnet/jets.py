"""Truncated Taylor-jet arithmetic in one or two directions, up to total degree 6.

A jet holds the Taylor coefficients of a scalar quantity at a point,

    c_alpha = (d^alpha f) / alpha!,

for every multi-index alpha with total order <= degree.  The Taylor
normalization makes multiplication a plain truncated convolution; raw
derivatives appear only at the API boundary (``derivative_of``).

Multi-indices are plain tuples: ``(a,)`` for one direction, ``(a, b)`` for
two.  Coefficients are stored in graded lexicographic order: all indices of
total order g come before order g+1, and within one order the first exponent
descends, e.g. for two directions

    (0,0) | (1,0) (0,1) | (2,0) (1,1) (0,2) | ...

so truncating to a lower degree is a prefix slice.

The module-level operations (``jet_add``, ``jet_mul``, ...) work on ``Jet``
values.  The same coefficient layout is shared by the batched kernels
(``conv_mul``, ``compose_series``, ...), which operate on ``(n_coeffs, R)``
arrays for R independent jets at once; the network and target evaluators run
on those.  All values are immutable after construction and safe to share
between concurrent tasks.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 6

# Elementary functions available to jet_compose.  Closed set; register new
# entries in _FN_DERIVS to extend.
ELEMENTARY_FUNCTIONS = ("sigmoid", "tanh", "sin", "cos", "square", "identity")

try:  # optional JIT for the truncated-convolution kernel
    if os.environ.get("DERIVNET_NO_NUMBA"):
        raise ImportError
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via DERIVNET_NO_NUMBA
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class JetSpec:
    """Shape of a jet: number of directions and maximum total order."""

    arity: int
    degree: int

    def __post_init__(self):
        if self.arity not in (1, 2):
            raise ValueError(f"jet arity must be 1 or 2, got {self.arity}")
        if not 0 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"jet degree must be in 0..{MAX_DEGREE}, got {self.degree}")

    @property
    def n_coeffs(self) -> int:
        if self.arity == 1:
            return self.degree + 1
        return (self.degree + 1) * (self.degree + 2) // 2

    def indices(self) -> tuple[tuple[int, ...], ...]:
        """All multi-indices in storage order."""
        return _indices(self.arity, self.degree)


@lru_cache(maxsize=None)
def _indices(arity: int, degree: int) -> tuple[tuple[int, ...], ...]:
    if arity == 1:
        return tuple((a,) for a in range(degree + 1))
    out = []
    for g in range(degree + 1):
        for a in range(g, -1, -1):
            out.append((a, g - a))
    return tuple(out)


@dataclass(frozen=True)
class Jet:
    """Immutable truncated Taylor expansion of a scalar quantity."""

    spec: JetSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (self.spec.n_coeffs,):
            raise ValueError(
                f"expected {self.spec.n_coeffs} coefficients for {self.spec}, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("jet coefficients must be finite")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def value(self) -> float:
        """Constant term, the value of the quantity at the expansion point."""
        return float(self.coeffs[0])


class JetAlgebra:
    """Precomputed index tables for one (arity, degree) coefficient layout.

    Holds the COO triple list of the truncated convolution (c_k += a_i * b_j),
    sorted two ways so that the forward product and its adjoint both reduce
    over contiguous segments in a fixed, documented order.  Shared by the
    scalar Jet API and the batched kernels.
    """

    def __init__(self, arity: int, degree: int):
        self.spec = JetSpec(arity, degree)
        idx = self.spec.indices()
        self.index_of = {a: i for i, a in enumerate(idx)}
        self.n = len(idx)
        self.orders = np.array([sum(a) for a in idx], dtype=np.int64)
        self.factorials = np.array(
            [math.prod(math.factorial(e) for e in a) for a in idx], dtype=np.float64
        )

        triples = []
        for i, a in enumerate(idx):
            for j, b in enumerate(idx):
                merged = tuple(x + y for x, y in zip(a, b))
                if sum(merged) <= degree:
                    triples.append((i, j, self.index_of[merged]))
        tri = np.array(triples, dtype=np.int32)

        # forward grouping: out[k] += a[i] * b[j], segments contiguous in k
        order_f = np.lexsort((tri[:, 1], tri[:, 0], tri[:, 2]))
        self.fwd_i = np.ascontiguousarray(tri[order_f, 0])
        self.fwd_j = np.ascontiguousarray(tri[order_f, 1])
        self.fwd_k = np.ascontiguousarray(tri[order_f, 2])
        self.fwd_starts = _segment_starts(self.fwd_k, self.n)

        # adjoint grouping: abar[i] += cbar[k] * b[j], segments contiguous in i
        order_a = np.lexsort((tri[:, 1], tri[:, 2], tri[:, 0]))
        self.adj_i = np.ascontiguousarray(tri[order_a, 0])
        self.adj_j = np.ascontiguousarray(tri[order_a, 1])
        self.adj_k = np.ascontiguousarray(tri[order_a, 2])
        self.adj_starts = _segment_starts(self.adj_i, self.n)

        # derivative tables: result[alpha] = (alpha_axis + 1) * a[alpha + e_axis]
        self.derive_src = []
        self.derive_scale = []
        if degree >= 1:
            lower = _indices(arity, degree - 1)
            lower_of = {a: i for i, a in enumerate(lower)}
            for axis in range(arity):
                src = np.empty(len(lower), dtype=np.int32)
                scale = np.empty(len(lower), dtype=np.float64)
                for r, a in enumerate(lower):
                    up = tuple(e + (1 if ax == axis else 0) for ax, e in enumerate(a))
                    src[r] = self.index_of[up]
                    scale[r] = a[axis] + 1
                self.derive_src.append(src)
                self.derive_scale.append(scale)
            del lower_of

    def pure_indices(self, axis: int) -> np.ndarray:
        """Positions of (0,..), (1·e_axis), (2·e_axis), ... up to the degree."""
        out = []
        for k in range(self.spec.degree + 1):
            a = tuple(k if ax == axis else 0 for ax in range(self.spec.arity))
            out.append(self.index_of[a])
        return np.array(out, dtype=np.int64)

    def mul_matrix(self, w: np.ndarray) -> np.ndarray:
        """Dense matrix of 'multiply by the fixed jet w', acting on coefficients."""
        m = np.zeros((self.n, self.n))
        np.add.at(m, (self.fwd_k, self.fwd_j), w[self.fwd_i])
        return m

    def derive_matrix(self, axis: int) -> np.ndarray:
        """Dense matrix of d/dx_axis, mapping degree d coefficients to d-1."""
        lower_n = len(_indices(self.spec.arity, self.spec.degree - 1))
        m = np.zeros((lower_n, self.n))
        m[np.arange(lower_n), self.derive_src[axis]] = self.derive_scale[axis]
        return m


def _segment_starts(sorted_keys: np.ndarray, n: int) -> np.ndarray:
    starts = np.searchsorted(sorted_keys, np.arange(n))
    return starts.astype(np.int64)


@lru_cache(maxsize=None)
def algebra(arity: int, degree: int) -> JetAlgebra:
    return JetAlgebra(arity, degree)


# ---------------------------------------------------------------------------
# batched kernels on (n_coeffs, R) arrays
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @_njit(cache=True)
    def _conv_kernel(a, b, ii, jj, kk, out):  # pragma: no cover - jitted
        for t in range(ii.shape[0]):
            ai = a[ii[t]]
            bj = b[jj[t]]
            ok = out[kk[t]]
            for r in range(ai.shape[0]):
                ok[r] += ai[r] * bj[r]


def _conv_numpy(a, b, ii, jj, kk_starts, n, out):
    prod = a[ii] * b[jj]
    out += np.add.reduceat(prod, kk_starts, axis=0)


def conv_mul(alg: JetAlgebra, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Truncated convolution of coefficient arrays, shape (n_coeffs, R)."""
    out = np.zeros_like(a)
    if _HAVE_NUMBA:
        _conv_kernel(a, b, alg.fwd_i, alg.fwd_j, alg.fwd_k, out)
    else:
        _conv_numpy(a, b, alg.fwd_i, alg.fwd_j, alg.fwd_starts, alg.n, out)
    return out


def conv_adjoint(alg: JetAlgebra, cbar: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Adjoint of ``conv_mul`` with respect to its first argument.

    Returns abar with abar[i] = sum over (i,j,k) triples of cbar[k]*other[j].
    By symmetry of the triple set this is also the adjoint with respect to
    the second argument.
    """
    out = np.zeros_like(cbar)
    if _HAVE_NUMBA:
        _conv_kernel(cbar, other, alg.adj_k, alg.adj_j, alg.adj_i, out)
    else:
        _conv_numpy(cbar, other, alg.adj_k, alg.adj_j, alg.adj_starts, alg.n, out)
    return out


def compose_series(alg: JetAlgebra, taylor_table: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Evaluate sum_k g_k * u^k over jets by Horner, truncated at alg degree.

    ``taylor_table`` has shape (degree+1, R) with g_k = f^(k)(y)/k!; ``u`` is
    a coefficient array with zero constant term.
    """
    d = alg.spec.degree
    h = np.zeros_like(u)
    h[0] = taylor_table[d]
    for k in range(d - 1, -1, -1):
        h = conv_mul(alg, h, u)
        h[0] += taylor_table[k]
    return h


def derive_coeffs(alg: JetAlgebra, a: np.ndarray, axis: int) -> np.ndarray:
    """d/dx_axis on a coefficient array; result has one lower degree."""
    return a[alg.derive_src[axis]] * alg.derive_scale[axis][:, None].astype(a.dtype)


def stable_sigmoid(y: np.ndarray) -> np.ndarray:
    """Monotone-safe logistic function, no overflow for large |y|."""
    y = np.asarray(y)
    t = np.exp(-np.abs(y))
    return np.where(y >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


@lru_cache(maxsize=None)
def _poly_table(kind: str, max_order: int) -> tuple[np.ndarray, ...]:
    """Derivative polynomials for sigmoid/tanh.

    sigmoid' = s(1-s) and tanh' = 1-t^2 close under differentiation, so each
    derivative is a polynomial in the function value; rows are differentiated
    coefficient-wise and multiplied by the chain polynomial.
    """
    chain = {"sigmoid": np.array([0.0, 1.0, -1.0]), "tanh": np.array([1.0, 0.0, -1.0])}[kind]
    polys = [np.array([0.0, 1.0])]  # P_0(t) = t
    for _ in range(max_order):
        p = polys[-1]
        dp = p[1:] * np.arange(1, len(p))
        polys.append(np.convolve(dp, chain))
    return tuple(polys)


def _polyval_many(polys: tuple[np.ndarray, ...], t: np.ndarray) -> np.ndarray:
    out = np.empty((len(polys),) + t.shape, dtype=t.dtype)
    for k, p in enumerate(polys):
        acc = np.full_like(t, p[-1])
        for c in p[-2::-1]:
            acc = acc * t + t.dtype.type(c)
        out[k] = acc
    return out


def fn_derivs(fn: str, y: np.ndarray, d: int) -> np.ndarray:
    """Raw derivatives f^(0..d)(y) of an elementary function, shape (d+1,)+y.shape."""
    y = np.asarray(y)
    if fn == "sigmoid":
        return _polyval_many(_poly_table("sigmoid", d), stable_sigmoid(y))
    if fn == "tanh":
        return _polyval_many(_poly_table("tanh", d), np.tanh(y))
    if fn in ("sin", "cos"):
        s, c = np.sin(y), np.cos(y)
        cycle = (s, c, -s, -c) if fn == "sin" else (c, -s, -c, s)
        return np.stack([cycle[k % 4] for k in range(d + 1)])
    if fn == "square":
        out = np.zeros((d + 1,) + y.shape, dtype=y.dtype)
        out[0] = y * y
        if d >= 1:
            out[1] = 2.0 * y
        if d >= 2:
            out[2] = 2.0
        return out
    if fn == "identity":
        out = np.zeros((d + 1,) + y.shape, dtype=y.dtype)
        out[0] = y
        if d >= 1:
            out[1] = 1.0
        return out
    raise ValueError(f"unknown elementary function {fn!r}")


def compose_fn_coeffs(alg: JetAlgebra, fn: str, a: np.ndarray) -> np.ndarray:
    """Coefficient array of fn(a) for a batched coefficient array a."""
    d = alg.spec.degree
    raw = fn_derivs(fn, a[0], d)
    inv_fact = np.array([1.0 / math.factorial(k) for k in range(d + 1)], dtype=a.dtype)
    table = raw * inv_fact.reshape((d + 1,) + (1,) * (raw.ndim - 1))
    u = a.copy()
    u[0] = 0.0
    return compose_series(alg, table, u)


# ---------------------------------------------------------------------------
# scalar Jet operations
# ---------------------------------------------------------------------------


def _require_same_spec(a: Jet, b: Jet):
    if a.spec != b.spec:
        raise ValueError(f"jet spec mismatch: {a.spec} vs {b.spec}")


def jet_constant(spec: JetSpec, value: float) -> Jet:
    c = np.zeros(spec.n_coeffs)
    c[0] = value
    return Jet(spec, c)


def jet_zero(spec: JetSpec) -> Jet:
    return Jet(spec, np.zeros(spec.n_coeffs))


def jet_seed(spec: JetSpec, value: float, direction: int | None = None) -> Jet:
    """Jet of a coordinate-like quantity: value plus unit slope along one direction."""
    c = np.zeros(spec.n_coeffs)
    c[0] = value
    if direction is not None and spec.degree >= 1:
        if not 0 <= direction < spec.arity:
            raise ValueError(f"direction {direction} out of range for arity {spec.arity}")
        c[1 + direction] = 1.0
    return Jet(spec, c)


def jet_add(a: Jet, b: Jet) -> Jet:
    _require_same_spec(a, b)
    return Jet(a.spec, a.coeffs + b.coeffs)


def jet_sub(a: Jet, b: Jet) -> Jet:
    _require_same_spec(a, b)
    return Jet(a.spec, a.coeffs - b.coeffs)


def jet_scale(a: Jet, factor: float) -> Jet:
    return Jet(a.spec, a.coeffs * factor)


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Truncated convolution; coefficient pairs above the degree are discarded."""
    _require_same_spec(a, b)
    alg = algebra(a.spec.arity, a.spec.degree)
    return Jet(a.spec, conv_mul(alg, a.coeffs[:, None], b.coeffs[:, None])[:, 0])


def jet_derive(a: Jet, axis: int) -> Jet:
    """Extract d/dx_axis as a jet of one lower degree."""
    if a.spec.degree < 1:
        raise ValueError("cannot differentiate a degree-0 jet")
    if not 0 <= axis < a.spec.arity:
        raise ValueError(f"axis {axis} out of range for arity {a.spec.arity}")
    alg = algebra(a.spec.arity, a.spec.degree)
    lower = JetSpec(a.spec.arity, a.spec.degree - 1)
    return Jet(lower, derive_coeffs(alg, a.coeffs[:, None], axis)[:, 0])


def jet_truncate(a: Jet, degree: int) -> Jet:
    """Drop coefficients above ``degree`` (a prefix slice in graded order)."""
    if degree > a.spec.degree:
        raise ValueError(f"cannot truncate degree {a.spec.degree} jet to {degree}")
    spec = JetSpec(a.spec.arity, degree)
    return Jet(spec, a.coeffs[: spec.n_coeffs])


def jet_compose(fn: str, a: Jet) -> Jet:
    """Jet of fn(a) by truncated power-series composition (Horner over jets).

    fn is one of ELEMENTARY_FUNCTIONS.  The constant term of the result is
    exactly fn evaluated at the constant term of ``a``.
    """
    if fn not in ELEMENTARY_FUNCTIONS:
        raise ValueError(f"unknown elementary function {fn!r}")
    alg = algebra(a.spec.arity, a.spec.degree)
    return Jet(a.spec, compose_fn_coeffs(alg, fn, a.coeffs[:, None])[:, 0])


def sigmoid_derivs(y: float, d: int) -> np.ndarray:
    """Exact logistic derivatives sigma^(0..d)(y) via the polynomial recurrence."""
    if d < 0:
        raise ValueError("derivative order must be non-negative")
    return fn_derivs("sigmoid", np.float64(y), d)


def derivative_of(a: Jet, alpha: tuple[int, ...]) -> float:
    """Raw derivative d^alpha f at the expansion point: coefficient times alpha!."""
    alpha = tuple(alpha)
    alg = algebra(a.spec.arity, a.spec.degree)
    if alpha not in alg.index_of:
        raise ValueError(f"multi-index {alpha} outside {a.spec}")
    i = alg.index_of[alpha]
    return float(a.coeffs[i] * alg.factorials[i])
