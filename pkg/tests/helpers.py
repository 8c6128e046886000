"""Shared test oracles: finite differences and a scalar RProp simulation.

These stay independent of the implementation paths they check: the FD
oracle probes scalar callables only, and the RProp simulation is a direct
per-parameter transcription of the update rules on numpy scalars.
"""

from __future__ import annotations

import math

import numpy as np


def central_derivative(f, t0: float, order: int, h: float, richardson: bool = True) -> float:
    """k-th derivative of a scalar callable by central differences.

    Uses the (k+1)-point second-order stencil from binomial coefficients;
    with ``richardson`` the h and h/2 estimates are extrapolated to fourth
    order.  Step sizes are the caller's to tune per order.
    """

    def stencil(hh: float) -> float:
        total = 0.0
        for j in range(order + 1):
            w = (-1.0) ** j * math.comb(order, j)
            total += w * f(t0 + (order / 2.0 - j) * hh)
        return total / hh**order

    d1 = stencil(h)
    if not richardson:
        return d1
    d2 = stencil(h / 2.0)
    return (4.0 * d2 - d1) / 3.0


# Step sizes that balance truncation against roundoff in double precision
# for the second-order stencils above (after Richardson extrapolation).
FD_STEPS = {1: 1e-4, 2: 4e-3, 3: 1.6e-2, 4: 3.2e-2, 5: 4e-2, 6: 8e-2}


def directional_derivatives(f, x0: np.ndarray, axis: int, max_order: int) -> list[float]:
    """Pure derivatives d^k/dx_axis^k of f at x0 for k = 1..max_order."""
    x0 = np.asarray(x0, dtype=np.float64)

    out = []
    for k in range(1, max_order + 1):
        def g(t):
            x = x0.copy()
            x[axis] += t
            return f(x)

        out.append(central_derivative(g, 0.0, k, FD_STEPS[k]))
    return out


def rel_err(a: float, b: float, floor: float = 1e-12) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def rprop_scalar_trace(signs, cfg, dtype=np.float32, param0: float = 0.0):
    """Hand simulation of one RProp parameter over a gradient-sign sequence.

    Returns (step sizes after each epoch, parameter values after each epoch),
    computed on numpy scalars in the requested dtype so comparisons against
    the vector implementation can be bit-exact.
    """
    dt = np.dtype(dtype).type
    step = dt(cfg.delta0)
    prev_grad = dt(0.0)
    prev_move = dt(0.0)
    param = dt(param0)
    steps, params = [], []
    for g in signs:
        g = dt(g)
        prod = prev_grad * g
        pinned = (param >= dt(cfg.clamp) and g < 0) or (param <= dt(-cfg.clamp) and g > 0)
        if prod > 0:
            if not pinned:  # a boundary-pinned parameter cannot accelerate
                step = dt(step * dt(cfg.eta_plus))
            move = dt(-np.sign(g) * step)
            stored = g
        elif prod < 0:
            step = dt(step * dt(cfg.eta_minus))
            if cfg.variant == "backtrack":
                move = dt(-prev_move)
                stored = dt(0.0)
            else:
                move = dt(-np.sign(g) * step)
                stored = g
        else:
            move = dt(-np.sign(g) * step)
            stored = g
        before = param
        param = dt(param + move)
        param = dt(min(max(param, dt(-cfg.clamp)), dt(cfg.clamp)))
        prev_move = dt(param - before)
        prev_grad = stored
        steps.append(step)
        params.append(param)
    return np.array(steps, dtype=dtype), np.array(params, dtype=dtype)
