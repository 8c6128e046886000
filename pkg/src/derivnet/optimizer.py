"""Resilient backpropagation exactly as used for training.

Sign-based per-parameter step adaptation with eta+ = 1.2, eta- = 0.5,
initial step 2e-4, no lower or upper step bound, weight clamping to
[-20, 20], and periodic resurrection of steps that underflowed to zero.
The default variant backtracks on a gradient sign change and zeroes the
stored gradient so the shrink is not applied twice; ``variant="plain"``
disables backtracking for sensitivity checks.

In single precision the repeated halving drives steps to exactly 0.0, which
is the intended route to "dead" parameters; resurrection resets exact zeros
to 1e-6 once per resurrection period.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RpropConfig:
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta0: float = 2e-4
    clamp: float = 20.0
    resurrect_value: float = 1e-6
    resurrect_period: int = 1000
    variant: str = "backtrack"  # "backtrack" | "plain"

    def __post_init__(self):
        if not (self.eta_plus > 1.0 > self.eta_minus > 0.0):
            raise ValueError("need eta_plus > 1 > eta_minus > 0")
        if min(self.delta0, self.clamp, self.resurrect_value) <= 0 or self.resurrect_period <= 0:
            raise ValueError("rprop constants must be positive")
        if self.variant not in ("backtrack", "plain"):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class RpropState:
    """Per-parameter step sizes, previous gradient and previous movement."""

    config: RpropConfig
    steps: np.ndarray
    prev_grad: np.ndarray
    prev_move: np.ndarray
    epoch: int = 0
    clamp_mask: np.ndarray | None = None  # True where the clamp applies


def rprop_init(
    n: int,
    config: RpropConfig = RpropConfig(),
    dtype=np.float32,
    clamp_mask: np.ndarray | None = None,
) -> RpropState:
    """Fresh state: every step at delta0, previous gradients zero.

    With zero stored gradients the first update falls into the neutral
    branch: parameters move by the initial step, step sizes unchanged.
    """
    if n <= 0:
        raise ValueError("parameter count must be positive")
    dt = np.dtype(dtype).type
    return RpropState(
        config=config,
        steps=np.full(n, dt(config.delta0), dtype=dtype),
        prev_grad=np.zeros(n, dtype=dtype),
        prev_move=np.zeros(n, dtype=dtype),
        clamp_mask=None if clamp_mask is None else np.asarray(clamp_mask, dtype=bool),
    )


def rprop_step(state: RpropState, grad: np.ndarray, params: np.ndarray):
    """One update, in place; returns (state, params).

    Per parameter: on sign agreement grow the step by eta+ and move against
    the gradient sign; on a sign flip shrink by eta-, revert the previous
    movement and zero the stored gradient (backtrack variant); on a zero
    product move with an unchanged step.  Clamped entries are forced back
    into [-clamp, clamp] after the movement.

    A clamped parameter sitting at the boundary with the gradient pointing
    outward has a zero applied update, so its step is not grown; without
    this the clamp feeds unbounded growth (there is no step ceiling) and a
    later sign flip locks the step in a huge-value regime that floods
    training with full-span oscillations.  No bound is imposed on any
    moving parameter.
    """
    grad = np.asarray(grad, dtype=state.steps.dtype)
    if grad.shape != state.steps.shape or params.shape != state.steps.shape:
        raise ValueError("state, gradient and parameter lengths disagree")
    cfg = state.config
    dt = state.steps.dtype.type
    prod = state.prev_grad * grad
    up = prod > 0
    down = prod < 0
    mask = state.clamp_mask
    hi, lo = dt(cfg.clamp), dt(-cfg.clamp)
    pinned = ((params >= hi) & (grad < 0)) | ((params <= lo) & (grad > 0))
    if mask is not None:
        pinned &= mask

    # growth may still overflow to inf in single precision on free
    # parameters; a zero gradient moves nothing, so no NaN can form
    with np.errstate(over="ignore", invalid="ignore"):
        state.steps[up & ~pinned] *= dt(cfg.eta_plus)
        state.steps[down] *= dt(cfg.eta_minus)

        before = params.copy()
        sign = np.sign(grad)
        move = -sign * state.steps
        move[sign == 0] = 0
        if cfg.variant == "backtrack":
            move[down] = -state.prev_move[down]
        params += move

    if mask is None:
        np.clip(params, lo, hi, out=params)
    else:
        np.minimum(params, hi, out=params, where=mask)
        np.maximum(params, lo, out=params, where=mask)

    state.prev_move = params - before
    new_prev = grad.copy()
    if cfg.variant == "backtrack":
        new_prev[down] = 0  # avoid double punishment on the next epoch
    state.prev_grad = new_prev
    state.epoch += 1
    return state, params


def rprop_resurrect(state: RpropState) -> RpropState:
    """Restore every step that is exactly zero to the resurrect value."""
    dead = state.steps == 0
    state.steps[dead] = state.steps.dtype.type(state.config.resurrect_value)
    return state


def count_nonzero_steps(state: RpropState) -> int:
    return int(np.count_nonzero(state.steps > 0))
