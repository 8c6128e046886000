"""Analytic target functions and their exact derivatives via expression jets.

Targets are small expression trees evaluated with jet arithmetic, so every
derivative up to the jet degree is exact (no finite differences anywhere on
this path).  The module provides the 2D and 5D approximation targets, the
boundary-vanishing factor phi = 1 - x1^2 - x2^2, the manufactured solution
u_a = f * phi of the Poisson problem, and the back-computed source g that
makes u_a solve the equation exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .jets import Jet, JetSpec


# ---------------------------------------------------------------------------
# expression trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expression:
    """Node of an analytic expression tree.

    op is one of: "var" (arg = input index), "const" (arg = value), "add",
    "mul", "neg", or an elementary function name from
    ``jets.ELEMENTARY_FUNCTIONS`` with a single child.
    """

    op: str
    children: tuple = ()
    arg: float | int | None = None

    def __add__(self, other):
        return Expression("add", (self, _as_expr(other)))

    def __mul__(self, other):
        return Expression("mul", (self, _as_expr(other)))

    def __sub__(self, other):
        return self + Expression("neg", (_as_expr(other),))

    def __neg__(self):
        return Expression("neg", (self,))


def _as_expr(v) -> Expression:
    if isinstance(v, Expression):
        return v
    return const(float(v))


def var(i: int) -> Expression:
    return Expression("var", arg=i)


def const(c: float) -> Expression:
    return Expression("const", arg=c)


def fn(name: str, child: Expression) -> Expression:
    if name not in jets.ELEMENTARY_FUNCTIONS:
        raise ValueError(f"unknown elementary function {name!r}")
    return Expression(name, (child,))


def expr_dimension(e: Expression) -> int:
    """1 + highest variable index appearing in the tree."""
    if e.op == "var":
        return e.arg + 1
    return max((expr_dimension(c) for c in e.children), default=0)


def _check_tree(e: Expression, dim: int):
    if e.op == "var":
        if not isinstance(e.arg, int) or not 0 <= e.arg < dim:
            raise ValueError(f"variable index {e.arg} out of range for dimension {dim}")
        return
    if e.op == "const":
        if e.arg is None:
            raise ValueError("constant node without value")
        return
    arity = {"add": 2, "mul": 2, "neg": 1}.get(e.op, 1)
    if e.op not in ("add", "mul", "neg") and e.op not in jets.ELEMENTARY_FUNCTIONS:
        raise ValueError(f"malformed expression node {e.op!r}")
    if len(e.children) != arity:
        raise ValueError(f"node {e.op!r} expects {arity} children, got {len(e.children)}")
    for c in e.children:
        _check_tree(c, dim)


def eval_expr_coeffs(
    e: Expression,
    x: np.ndarray,
    spec: JetSpec,
    directions: np.ndarray,
) -> np.ndarray:
    """Batched jet evaluation of an expression.

    x has shape (P, dim); directions has shape (P, arity) and holds the input
    axis seeded along each jet direction.  Returns coefficients (n_coeffs, P).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.int64))
    if directions.shape != (x.shape[0], spec.arity):
        raise ValueError("directions must have shape (n_points, arity)")
    _check_tree(e, x.shape[1])
    alg = jets.algebra(spec.arity, spec.degree)
    return _eval_node(e, x, spec, directions, alg)


def _eval_node(e, x, spec, directions, alg) -> np.ndarray:
    P = x.shape[0]
    if e.op == "var":
        c = np.zeros((alg.n, P))
        c[0] = x[:, e.arg]
        if spec.degree >= 1:
            for a in range(spec.arity):
                c[1 + a] = (directions[:, a] == e.arg).astype(np.float64)
        return c
    if e.op == "const":
        c = np.zeros((alg.n, P))
        c[0] = e.arg
        return c
    if e.op == "add":
        return _eval_node(e.children[0], x, spec, directions, alg) + _eval_node(
            e.children[1], x, spec, directions, alg
        )
    if e.op == "neg":
        return -_eval_node(e.children[0], x, spec, directions, alg)
    if e.op == "mul":
        return jets.conv_mul(
            alg,
            _eval_node(e.children[0], x, spec, directions, alg),
            _eval_node(e.children[1], x, spec, directions, alg),
        )
    return jets.compose_fn_coeffs(alg, e.op, _eval_node(e.children[0], x, spec, directions, alg))


def eval_expr_jet(
    e: Expression, x, spec: JetSpec, directions: tuple[int, ...] | list[int]
) -> Jet:
    """Exact jet of an analytic expression at one point.

    ``directions`` lists the input axes seeded along the jet directions,
    one per arity slot.
    """
    dirs = np.asarray([tuple(directions)], dtype=np.int64)
    c = eval_expr_coeffs(e, np.asarray(x, dtype=np.float64)[None, :], spec, dirs)
    return Jet(spec, c[:, 0])


def expr_values(e: Expression, x: np.ndarray) -> np.ndarray:
    """Plain vectorized evaluation (no derivatives)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _check_tree(e, x.shape[1])
    return _eval_values(e, x)


def _eval_values(e, x):
    if e.op == "var":
        return x[:, e.arg].copy()
    if e.op == "const":
        return np.full(x.shape[0], float(e.arg))
    if e.op == "add":
        return _eval_values(e.children[0], x) + _eval_values(e.children[1], x)
    if e.op == "neg":
        return -_eval_values(e.children[0], x)
    if e.op == "mul":
        return _eval_values(e.children[0], x) * _eval_values(e.children[1], x)
    table = {
        "sin": np.sin,
        "cos": np.cos,
        "tanh": np.tanh,
        "sigmoid": jets.stable_sigmoid,
        "square": np.square,
        "identity": lambda v: v,
    }
    return table[e.op](_eval_values(e.children[0], x))


# ---------------------------------------------------------------------------
# the concrete targets
# ---------------------------------------------------------------------------


def target_2d() -> Expression:
    """Smooth 2D benchmark target on the [-1,1]^2 box."""
    x1, x2 = var(0), var(1)
    half = const(0.5)
    return (
        half * (-fn("square", x1) - fn("square", x2) + const(1.0))
        + const(2.0) * fn("tanh", x1 * fn("sin", const(0.5) * x2))
        - fn("sin", x1) * fn("cos", x2)
    )


def target_5d() -> Expression:
    """5D variant of the benchmark target, for the unit ball."""
    x1, x2, x3, x4, x5 = (var(i) for i in range(5))
    half = const(0.5)
    return (
        half * (-fn("square", x2) - fn("square", x5) + const(1.0))
        + const(2.0) * fn("tanh", x3 * fn("sin", const(0.5) * x4))
        - fn("sin", x1) * fn("cos", x2)
    )


def boundary_factor() -> Expression:
    """phi = 1 - x1^2 - x2^2; vanishes on the unit circle."""
    return const(1.0) - fn("square", var(0)) - fn("square", var(1))


def exact_solution_expr() -> Expression:
    """Manufactured solution u_a = f * phi of the Poisson problem."""
    return target_2d() * boundary_factor()


def exact_solution(x) -> float:
    """Value of the manufactured solution at one point of the disk."""
    return float(expr_values(exact_solution_expr(), np.asarray(x, dtype=np.float64)[None, :])[0])


def exact_solution_values(x: np.ndarray) -> np.ndarray:
    return expr_values(exact_solution_expr(), x)


def poisson_source_coeffs(x: np.ndarray, spec: JetSpec) -> np.ndarray:
    """Batched jet coefficients of the source g = laplacian(u_a).

    The manufactured solution is evaluated as a jet two degrees above the
    requested spec and the Laplacian is extracted with two exact jet
    derivatives per axis, so g and its derivatives carry no truncation error.
    """
    if spec.arity != 2:
        raise ValueError("the source is a function on the 2D disk; arity must be 2")
    if spec.degree > jets.MAX_DEGREE - 2:
        raise ValueError(f"source degree at most {jets.MAX_DEGREE - 2}, got {spec.degree}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    up = JetSpec(2, spec.degree + 2)
    dirs = np.broadcast_to(np.array([0, 1]), (x.shape[0], 2))
    ua = eval_expr_coeffs(exact_solution_expr(), x, up, dirs)
    alg_up = jets.algebra(2, up.degree)
    alg_mid = jets.algebra(2, up.degree - 1)
    out = None
    for axis in (0, 1):
        d1 = jets.derive_coeffs(alg_up, ua, axis)
        d2 = jets.derive_coeffs(alg_mid, d1, axis)
        out = d2 if out is None else out + d2
    return out


def poisson_source(x, spec: JetSpec) -> Jet:
    """Jet of the manufactured source g at one point."""
    c = poisson_source_coeffs(np.asarray(x, dtype=np.float64)[None, :], spec)
    return Jet(spec, c[:, 0])


# ---------------------------------------------------------------------------
# task definitions
# ---------------------------------------------------------------------------

# Trained quantities per grid point: one value plus the extra derivative
# targets.  Aligns classical and extended runs on a single parameter axis.
def n_multiplier(task: str, order: int) -> int:
    if task == "direct":
        return 1 + 2 * order  # value once + s orders along 2 directions
    if task == "poisson":
        return 1 + order  # 1 at classical, 5 at order 4
    raise ValueError(f"unknown task kind {task!r}")


@dataclass(frozen=True)
class TaskDef:
    """One benchmark problem: domain, target machinery, bookkeeping labels."""

    name: str  # approx2d | approx5d | poisson2d
    kind: str  # direct | poisson
    domain_kind: str  # box2d | disk2d | ball5d
    dimension: int
    expr: Expression  # target f (direct) or exact v = f (poisson)


def task_by_name(name: str) -> TaskDef:
    if name == "approx2d":
        return TaskDef(name, "direct", "box2d", 2, target_2d())
    if name == "approx5d":
        return TaskDef(name, "direct", "ball5d", 5, target_5d())
    if name == "poisson2d":
        return TaskDef(name, "poisson", "disk2d", 2, target_2d())
    raise ValueError(f"unknown task {name!r}")


def draw_direction_pairs(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unordered distinct axis pairs, uniform over the dim*(dim-1)/2 choices."""
    pairs = [(p, q) for p in range(dim) for q in range(p + 1, dim)]
    picks = rng.integers(0, len(pairs), size=n)
    return np.array([pairs[i] for i in picks], dtype=np.int64)
