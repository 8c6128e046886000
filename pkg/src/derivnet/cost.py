"""Local and total extended cost for direct approximation and the Poisson residual.

Direct approximation: for one pattern the order-k term is the squared
mismatch of the k-th pure derivative of the network output against the
target, summed over the trained directions; the value term (k = 0) is
counted once.  The local cost of order s sums the terms for k = 0..s and
the total cost is the arithmetic mean over the batch.

Collocation: the boundary-vanishing substitution u = v * phi with
phi = 1 - x1^2 - x2^2 turns the Poisson problem into a residual for v,

    V = phi * (v_11 + v_22) - 4*x1*v_1 - 4*x2*v_2 - 4*v - g,

assembled entirely in jet arithmetic so V carries its own derivatives.  The
order-k term squares the pure derivatives of V along both axes; k = 0 is the
classical collocation cost V^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .jets import Jet, JetSpec


@dataclass(frozen=True)
class CostSpec:
    """Task kind, derivative order, and direction-selection policy."""

    task: str  # "direct" | "poisson"
    order: int  # s in 0..4
    directions: str = "fixed"  # "fixed" | "random_pair"
    axes: tuple[int, ...] = (0, 1)  # used by the "fixed" policy

    def __post_init__(self):
        if self.task not in ("direct", "poisson"):
            raise ValueError(f"unknown task kind {self.task!r}")
        if not 0 <= self.order <= 4:
            raise ValueError(f"cost order must be in 0..4, got {self.order}")
        if self.directions not in ("fixed", "random_pair"):
            raise ValueError(f"unknown direction policy {self.directions!r}")
        if self.task == "poisson" and self.directions != "fixed":
            raise ValueError("the Poisson task trains fixed axes (0, 1)")

    @property
    def jet_spec(self) -> JetSpec:
        """Jet shape propagated through the network for this cost."""
        if self.task == "poisson":
            # 4th-order operators act on a residual containing 2nd derivatives
            return JetSpec(2, self.order + 2)
        return JetSpec(1, max(self.order, 0))


@dataclass
class Pattern:
    """One training point: location, trained directions, and target data.

    For the direct task ``target_jets`` holds one jet of the target per
    trained direction (degree = cost order).  For the Poisson task
    ``source_jet`` holds the jet of g at x (degree = cost order).
    """

    x: np.ndarray
    directions: tuple[int, ...]
    target_jets: list[Jet] = field(default_factory=list)
    source_jet: Jet | None = None


def direct_local_cost(out: list[Jet], tgt: list[Jet], s: int) -> float:
    """Sum over k = 0..s of squared derivative mismatches for one pattern.

    ``out`` and ``tgt`` hold one univariate jet per trained direction.  The
    k = 0 term is counted once, not per direction.
    """
    if len(out) != len(tgt) or not out:
        raise ValueError("need one output jet per target jet")
    for j in out + tgt:
        if j.spec.degree < s:
            raise ValueError(f"jet degree {j.spec.degree} too low for order {s}")
    total = (out[0].value - tgt[0].value) ** 2
    for k in range(1, s + 1):
        fk = math.factorial(k)
        for o, t in zip(out, tgt):
            total += (fk * o.coeffs[k] - fk * t.coeffs[k]) ** 2
    return float(total)


def poisson_residual_jet(v: Jet, x, g: Jet) -> Jet:
    """Residual jet V of the substituted Poisson equation, degree = g's degree.

    ``v`` must be a bivariate jet of two degrees more than ``g``, centered at
    the same point x.  Expanding the Laplacian of v * phi gives
    V = phi*(v_11 + v_22) - 4*x1*v_1 - 4*x2*v_2 - 4*v - g.
    """
    if v.spec.arity != 2 or g.spec.arity != 2:
        raise ValueError("the Poisson residual needs bivariate jets")
    s = g.spec.degree
    if v.spec.degree < s + 2:
        raise ValueError(f"v must have degree >= {s + 2}, got {v.spec.degree}")
    x = np.asarray(x, dtype=np.float64)
    spec_s = JetSpec(2, s)

    v1 = jets.jet_derive(v, 0)
    v2 = jets.jet_derive(v, 1)
    lap = jet_at = jets.jet_add(jets.jet_derive(v1, 0), jets.jet_derive(v2, 1))
    lap = jets.jet_truncate(jet_at, s)

    phi = _phi_jet(x, spec_s)
    x1 = jets.jet_seed(spec_s, float(x[0]), 0)
    x2 = jets.jet_seed(spec_s, float(x[1]), 1)

    out = jets.jet_mul(phi, lap)
    out = jets.jet_sub(out, jets.jet_scale(jets.jet_mul(x1, jets.jet_truncate(v1, s)), 4.0))
    out = jets.jet_sub(out, jets.jet_scale(jets.jet_mul(x2, jets.jet_truncate(v2, s)), 4.0))
    out = jets.jet_sub(out, jets.jet_scale(jets.jet_truncate(v, s), 4.0))
    return jets.jet_sub(out, g)


def _phi_jet(x: np.ndarray, spec: JetSpec) -> Jet:
    """Exact jet of phi = 1 - x1^2 - x2^2 at x (a degree-2 polynomial)."""
    c = np.zeros(spec.n_coeffs)
    c[0] = 1.0 - x[0] ** 2 - x[1] ** 2
    if spec.degree >= 1:
        c[1] = -2.0 * x[0]
        c[2] = -2.0 * x[1]
    if spec.degree >= 2:
        alg = jets.algebra(2, spec.degree)
        c[alg.index_of[(2, 0)]] = -1.0
        c[alg.index_of[(0, 2)]] = -1.0
    return Jet(spec, c)


def pde_local_cost(V: Jet, s: int) -> float:
    """V^2 plus, for k = 1..s, squared pure derivatives of V along both axes."""
    if V.spec.degree < s:
        raise ValueError(f"residual degree {V.spec.degree} too low for order {s}")
    alg = jets.algebra(V.spec.arity, V.spec.degree)
    total = V.value**2
    for k in range(1, s + 1):
        fk = math.factorial(k)
        for axis in range(V.spec.arity):
            idx = alg.pure_indices(axis)[k]
            total += (fk * V.coeffs[idx]) ** 2
    return float(total)


def total_cost(local_values) -> float:
    """Arithmetic mean of local costs, summed in the given order."""
    vals = np.asarray(local_values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("total cost of an empty batch is undefined")
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# batched residual assembly
# ---------------------------------------------------------------------------


def residual_matrices(x: np.ndarray, s: int) -> np.ndarray:
    """Per-point linear maps from v-jet coefficients to residual coefficients.

    The residual (without the -g term) is linear in the coefficients of the
    degree-(s+2) jet of v, so each point gets one dense matrix L with
    V = L @ v_coeffs - g_coeffs.  Shape (n_points, T(s), T(s+2)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    alg_hi = jets.algebra(2, s + 2)
    alg_mid = jets.algebra(2, s + 1)
    alg_lo = jets.algebra(2, s)
    d1_hi, d2_hi = alg_hi.derive_matrix(0), alg_hi.derive_matrix(1)
    d1_mid, d2_mid = alg_mid.derive_matrix(0), alg_mid.derive_matrix(1)
    lap = d1_mid @ d1_hi + d2_mid @ d2_hi
    n_lo, n_hi = alg_lo.n, alg_hi.n
    trunc_mid = np.eye(n_lo, alg_mid.n)
    trunc_hi = np.eye(n_lo, n_hi)

    out = np.empty((x.shape[0], n_lo, n_hi))
    for p, xp in enumerate(x):
        phi = _phi_jet(xp, alg_lo.spec)
        x1 = jets.jet_seed(alg_lo.spec, float(xp[0]), 0)
        x2 = jets.jet_seed(alg_lo.spec, float(xp[1]), 1)
        L = alg_lo.mul_matrix(phi.coeffs) @ lap
        L -= 4.0 * alg_lo.mul_matrix(x1.coeffs) @ (trunc_mid @ d1_hi)
        L -= 4.0 * alg_lo.mul_matrix(x2.coeffs) @ (trunc_mid @ d2_hi)
        L -= 4.0 * trunc_hi
        out[p] = L
    return out


def pde_term_weights(s: int) -> np.ndarray:
    """Squared factorial weights over residual coefficients.

    e_s^local = sum_i w_i * (V_i)^2 over stored coefficients: weight 1 for
    the value and (k!)^2 for the pure order-k coefficients, zero elsewhere.
    """
    alg = jets.algebra(2, s)
    w = np.zeros(alg.n)
    w[0] = 1.0
    for k in range(1, s + 1):
        for axis in (0, 1):
            w[alg.pure_indices(axis)[k]] = math.factorial(k) ** 2
    return w
