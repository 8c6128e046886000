"""Fully connected perceptron with forward-jet propagation and exact gradients.

Layers are linear at the input and output and sigmoid in between.  Affine
layers act on jet coefficients slot-by-slot (thresholds shift only the
constant term); sigmoid layers compose the activation with the incoming jet
by truncated power series.

The gradient of any supported cost with respect to every weight and
threshold is exact (up to floating point).  The reverse pass is built from
hand-derived adjoints of the three propagation primitives:

* affine combine: transposed matrix products;
* truncated convolution (c = a * b): the adjoint of either factor is the
  correlation of the cotangent with the other factor, over the same index
  triples;
* sigmoid composition f = sigma(jet): using sigma' = sigma(1 - sigma), the
  jet r = f * (1 - f) equals the truncated jet of sigma'(a), and the whole
  adjoint collapses to one correlation of the cotangent with r.  The
  constant slot of that correlation is exactly the derivative with respect
  to the pre-activation value, and the higher slots cover the non-constant
  part, because r and the Horner derivative series agree below the top
  degree.

Training arithmetic runs in the precision of the parameters (the protocol
default is single); verification oracles construct double-precision params.
Batch reductions sum over the pattern axis in storage order, so results are
run-to-run identical in single-threaded use.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .cost import CostSpec, Pattern, pde_term_weights, residual_matrices
from .jets import Jet, JetSpec


class DiagnosticError(RuntimeError):
    """Numeric failure carrying context (e.g. the offending pattern index)."""

    def __init__(self, message: str, pattern_index: int | None = None):
        super().__init__(message)
        self.pattern_index = pattern_index


@dataclass(frozen=True)
class NetworkConfig:
    """Layer sizes and arithmetic precision.

    The first size is the input dimension, the last must be 1.  Hidden
    layers use the sigmoid activation; input and output are linear.
    """

    sizes: tuple[int, ...]
    precision: str = "single"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if any(s < 1 for s in self.sizes):
            raise ValueError("layer sizes must be positive")
        if self.sizes[-1] != 1:
            raise ValueError("output layer must have exactly one neuron")
        if self.precision not in ("single", "double"):
            raise ValueError("precision must be 'single' or 'double'")

    @property
    def dtype(self):
        return np.float32 if self.precision == "single" else np.float64

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def label(self) -> str:
        return "-".join(str(s) for s in self.sizes)


def count_weights(config: NetworkConfig) -> int:
    """Total number of weights (thresholds counted separately)."""
    return sum(a * b for a, b in zip(config.sizes[:-1], config.sizes[1:]))


def count_thresholds(config: NetworkConfig) -> int:
    return sum(config.sizes[1:])


@dataclass
class Params:
    """Per-layer weight matrices (receiver x sender) and threshold vectors.

    Flat layout, documented for checkpointing and optimizer state alignment:
    for each layer in order, the row-major weight matrix followed by the
    threshold vector.
    """

    weights: list[np.ndarray]
    thresholds: list[np.ndarray]

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(t.size for t in self.thresholds)

    def to_flat(self) -> np.ndarray:
        parts = []
        for w, t in zip(self.weights, self.thresholds):
            parts.append(w.ravel())
            parts.append(t)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, sizes: tuple[int, ...], flat: np.ndarray) -> "Params":
        """Rebuild structured views into ``flat`` (no copies)."""
        weights, thresholds, off = [], [], 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            weights.append(flat[off : off + n_in * n_out].reshape(n_out, n_in))
            off += n_in * n_out
            thresholds.append(flat[off : off + n_out])
            off += n_out
        if off != flat.size:
            raise ValueError(f"flat vector of size {flat.size}, expected {off}")
        return cls(weights, thresholds)

    def weight_mask(self) -> np.ndarray:
        """Boolean mask over the flat layout: True on weights, False on thresholds."""
        parts = []
        for w, t in zip(self.weights, self.thresholds):
            parts.append(np.ones(w.size, dtype=bool))
            parts.append(np.zeros(t.size, dtype=bool))
        return np.concatenate(parts)

    def copy(self) -> "Params":
        return Params([w.copy() for w in self.weights], [t.copy() for t in self.thresholds])


def init_params(config: NetworkConfig, rng: np.random.Generator) -> Params:
    """Uniform init: weights in +-2/sqrt(senders), thresholds in +-0.1.

    Draws in float64 in a fixed per-layer order (weights then thresholds),
    then casts to the configured precision, so a given seed is bit-stable.
    """
    weights, thresholds = [], []
    for n_in, n_out in zip(config.sizes[:-1], config.sizes[1:]):
        bound = 2.0 / math.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)).astype(config.dtype))
        thresholds.append(rng.uniform(-0.1, 0.1, size=n_out).astype(config.dtype))
    return Params(weights, thresholds)


@dataclass
class ForwardTape:
    """Cached per-layer pre-activation and activation jets for one batch."""

    pre_activations: list[np.ndarray] = field(default_factory=list)
    activations: list[np.ndarray] = field(default_factory=list)


# ---------------------------------------------------------------------------
# plain forward pass
# ---------------------------------------------------------------------------


def forward_batch(params: Params, x: np.ndarray) -> np.ndarray:
    """Plain forward values for a batch of inputs, shape (P, dim) -> (P,)."""
    a = np.ascontiguousarray(np.asarray(x), dtype=params.dtype)
    if a.ndim != 2 or a.shape[1] != params.sizes[0]:
        raise ValueError(f"expected input shape (P, {params.sizes[0]})")
    last = len(params.weights) - 1
    for l, (w, t) in enumerate(zip(params.weights, params.thresholds)):
        a = a @ w.T + t
        if l != last:
            a = jets.stable_sigmoid(a)
    return a[:, 0]


def forward(params: Params, x) -> float:
    """Network output at a single input vector."""
    return float(forward_batch(params, np.asarray(x)[None, :])[0])


# ---------------------------------------------------------------------------
# jet propagation
# ---------------------------------------------------------------------------


def seed_inputs(
    x: np.ndarray, spec: JetSpec, directions: np.ndarray, dtype
) -> np.ndarray:
    """Input jets (n_coeffs, P, dim): values plus a unit slope along each
    pattern's seeded axes."""
    x = np.atleast_2d(x)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.int64))
    P, dim = x.shape
    if directions.shape != (P, spec.arity):
        raise ValueError("directions must have shape (P, arity)")
    if directions.size and (directions.min() < 0 or directions.max() >= dim):
        raise ValueError("direction axis out of range")
    a0 = np.zeros((spec.n_coeffs, P, dim), dtype=dtype)
    a0[0] = x
    if spec.degree >= 1:
        rows = np.arange(P)
        for slot in range(spec.arity):
            a0[1 + slot, rows, directions[:, slot]] = 1.0
    return a0


def _propagate(params: Params, a0: np.ndarray, alg: jets.JetAlgebra, keep_tape: bool):
    """Run jets through every layer; returns output coefficients (C, P) and tape."""
    C, P, _ = a0.shape
    tape = ForwardTape() if keep_tape else None
    acts = [a0]
    a = a0
    last = len(params.weights) - 1
    for l, (w, t) in enumerate(zip(params.weights, params.thresholds)):
        z = (a.reshape(C * P, -1) @ w.T).reshape(C, P, -1)
        z[0] += t
        if keep_tape:
            tape.pre_activations.append(z)
        if l == last:
            a = z
        else:
            a = _compose_sigmoid(alg, z)
        acts.append(a)
        if keep_tape:
            tape.activations.append(a)
    return acts[-1][:, :, 0], acts, tape


def _compose_sigmoid(alg: jets.JetAlgebra, z: np.ndarray) -> np.ndarray:
    C, P, N = z.shape
    flat = z.reshape(C, P * N)
    out = jets.compose_fn_coeffs(alg, "sigmoid", flat)
    return out.reshape(C, P, N)


def forward_jets_batch(
    params: Params,
    x: np.ndarray,
    spec: JetSpec,
    directions: np.ndarray | None = None,
) -> np.ndarray:
    """Output-jet coefficients for a batch of points, shape (n_coeffs, P).

    ``directions`` has shape (P, arity); when omitted, every pattern seeds
    the first ``arity`` input axes.
    """
    x = np.atleast_2d(np.asarray(x, dtype=params.dtype))
    if directions is None:
        directions = np.broadcast_to(np.arange(spec.arity), (x.shape[0], spec.arity))
    alg = jets.algebra(spec.arity, spec.degree)
    a0 = seed_inputs(x, spec, directions, params.dtype)
    out, _, _ = _propagate(params, a0, alg, keep_tape=False)
    return out


def forward_jets(
    params: Params,
    x,
    spec: JetSpec,
    directions,
    return_tape: bool = False,
):
    """Output jet of the network at x, seeded along the given input axes.

    ``directions`` lists one input axis per jet direction.  At degree 0 the
    constant term reproduces ``forward`` bit-exactly.
    """
    x = np.asarray(x, dtype=params.dtype)
    if x.shape != (params.sizes[0],):
        raise ValueError(f"expected input of dimension {params.sizes[0]}")
    dirs = np.asarray([tuple(directions)], dtype=np.int64)
    if dirs.shape[1] != spec.arity:
        raise ValueError(f"need {spec.arity} directions for {spec}")
    alg = jets.algebra(spec.arity, spec.degree)
    a0 = seed_inputs(x[None, :], spec, dirs, params.dtype)
    out, _, tape = _propagate(params, a0, alg, keep_tape=return_tape)
    jet = Jet(spec, out[:, 0].astype(np.float64))
    return (jet, tape) if return_tape else jet


# ---------------------------------------------------------------------------
# batched cost and exact gradient
# ---------------------------------------------------------------------------


class BatchEvaluator:
    """Precompiled pattern tables for one (batch, cost) pair.

    Builds the seeded input jets, target/source coefficient tables and, for
    the Poisson task, the per-point linear maps of the residual assembly.
    ``cost_and_gradient`` then runs one exact forward/reverse sweep.  The sum
    over patterns uses numpy's reduction in storage order.
    """

    def __init__(self, params_sizes: tuple[int, ...], patterns: list[Pattern], spec: CostSpec, dtype):
        if not patterns:
            raise ValueError("empty batch")
        self.spec = spec
        self.dtype = np.dtype(dtype).type
        self.n_patterns = len(patterns)
        self.jet_spec = spec.jet_spec
        self.alg = jets.algebra(self.jet_spec.arity, self.jet_spec.degree)
        dim = params_sizes[0]
        x = np.array([p.x for p in patterns], dtype=np.float64)
        if x.shape[1] != dim:
            raise ValueError(f"patterns have dimension {x.shape[1]}, network expects {dim}")
        M = self.n_patterns
        s = spec.order

        if spec.task == "direct":
            self.streams = max(len(patterns[0].directions), 1) if s >= 1 else 1
            dirs = np.zeros((M, self.streams), dtype=np.int64)
            ttab = np.zeros((self.alg.n, M * self.streams))
            for p, pat in enumerate(patterns):
                if s >= 1:
                    if len(pat.directions) != self.streams:
                        raise ValueError("patterns disagree on direction count")
                    dirs[p] = pat.directions
                    if len(pat.target_jets) != self.streams:
                        raise ValueError("need one target jet per direction")
                    for j, tj in enumerate(pat.target_jets):
                        if tj.spec != self.jet_spec:
                            raise ValueError("target jet spec mismatch")
                        ttab[:, p * self.streams + j] = tj.coeffs
                else:
                    if not pat.target_jets:
                        raise ValueError("pattern without target")
                    ttab[0, p] = pat.target_jets[0].value
            rows = x.repeat(self.streams, axis=0)
            seed_dirs = dirs.reshape(-1, 1)
            self.a0 = seed_inputs(rows.astype(self.dtype), self.jet_spec, seed_dirs, self.dtype)
            self.ttab = ttab.astype(self.dtype)
            wmat = np.zeros((self.alg.n, M * self.streams))
            wmat[0, :: self.streams] = 1.0  # value mismatch counted once
            for k in range(1, s + 1):
                wmat[k, :] = math.factorial(k) ** 2
            self.wmat = wmat.astype(self.dtype)
        else:
            if dim != 2:
                raise ValueError("the Poisson task needs a 2-input network")
            dirs = np.broadcast_to(np.array([0, 1]), (M, 2))
            self.a0 = seed_inputs(x.astype(self.dtype), self.jet_spec, dirs, self.dtype)
            self.lmaps = residual_matrices(x, s).astype(self.dtype)
            gtab = np.zeros((jets.algebra(2, s).n, M))
            for p, pat in enumerate(patterns):
                if pat.source_jet is None or pat.source_jet.spec != JetSpec(2, s):
                    raise ValueError("each Poisson pattern needs a degree-s source jet")
                gtab[:, p] = pat.source_jet.coeffs
            self.gtab = gtab.astype(self.dtype)
            self.wvec = pde_term_weights(s).astype(self.dtype)[:, None]

    # -- cost terms ---------------------------------------------------------

    def _direct_terms(self, out):
        diffs = out - self.ttab
        contrib = self.wmat * diffs * diffs
        locals_ = contrib.sum(axis=0).reshape(self.n_patterns, self.streams).sum(axis=1)
        e0 = diffs[0, :: self.streams] ** 2
        vbar = (self.dtype(2.0) / self.dtype(self.n_patterns)) * self.wmat * diffs
        return locals_, e0, vbar

    def _poisson_terms(self, out):
        V = np.einsum("pij,jp->ip", self.lmaps, out) - self.gtab
        contrib = self.wvec * V * V
        locals_ = contrib.sum(axis=0)
        e0 = V[0] ** 2
        Vbar = (self.dtype(2.0) / self.dtype(self.n_patterns)) * self.wvec * V
        vbar = np.einsum("pij,ip->jp", self.lmaps, Vbar)
        return locals_, e0, vbar

    def cost_and_gradient(self, params: Params):
        """Returns (E_s, flat gradient, mean e_0 over the batch)."""
        C = self.alg.n
        P = self.a0.shape[1]
        out, acts, _ = _propagate(params, self.a0, self.alg, keep_tape=False)

        # overflow surfaces as a non-finite local cost, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            if self.spec.task == "direct":
                locals_, e0, vbar = self._direct_terms(out)
            else:
                locals_, e0, vbar = self._poisson_terms(out)
        if not np.all(np.isfinite(locals_)):
            bad = int(np.flatnonzero(~np.isfinite(locals_))[0])
            raise DiagnosticError(f"non-finite local cost at pattern {bad}", pattern_index=bad)
        E = float(np.mean(locals_))
        e0_mean = float(np.mean(e0))

        grads_w = [None] * len(params.weights)
        grads_t = [None] * len(params.weights)
        zbar = np.zeros_like(acts[-1])
        zbar[:, :, 0] = vbar.astype(self.dtype)
        last = len(params.weights) - 1
        for l in range(last, -1, -1):
            a_in = acts[l]
            zf = zbar.reshape(C * P, -1)
            af = a_in.reshape(C * P, -1)
            grads_w[l] = zf.T @ af
            grads_t[l] = zbar[0].sum(axis=0)
            if l == 0:
                break
            abar = (zf @ params.weights[l]).reshape(C, P, -1)
            f = acts[l]
            one_minus = -f
            one_minus[0] += self.dtype(1.0)
            ff = f.reshape(C, -1)
            r = jets.conv_mul(self.alg, ff, one_minus.reshape(C, -1))
            zbar = jets.conv_adjoint(self.alg, abar.reshape(C, -1), r).reshape(C, P, -1)

        flat = Params(grads_w, grads_t).to_flat()
        return E, flat, e0_mean


def cost_and_gradient(params: Params, batch: list[Pattern], cost_spec: CostSpec):
    """Total cost E_s over the batch and its exact parameter gradient.

    The gradient is obtained by reverse accumulation through all jet
    coefficients and aligns with the flat Params layout.
    """
    ev = BatchEvaluator(params.sizes, batch, cost_spec, params.dtype)
    E, grad, _ = ev.cost_and_gradient(params)
    return E, grad


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

_MAGIC = b"DNWT"
_VERSION = 1


def save_checkpoint(path, params: Params):
    """Write magic 'DNWT', version, precision byte, u32-LE layer count and
    sizes, then per layer the row-major weights and the threshold vector,
    little-endian in the stored precision."""
    sizes = params.sizes
    itemsize = params.dtype.itemsize
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BB", _VERSION, itemsize))
        fh.write(struct.pack("<I", len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, t in zip(params.weights, params.thresholds):
            fh.write(np.ascontiguousarray(w, dtype=f"<f{itemsize}").tobytes())
            fh.write(np.ascontiguousarray(t, dtype=f"<f{itemsize}").tobytes())


def load_checkpoint(path) -> Params:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a DNWT checkpoint")
        version, itemsize = struct.unpack("<BB", fh.read(2))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        if itemsize not in (4, 8):
            raise ValueError(f"unsupported precision byte {itemsize}")
        (n_sizes,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{n_sizes}I", fh.read(4 * n_sizes))
        dt = np.dtype(f"<f{itemsize}")
        weights, thresholds = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(fh.read(n_in * n_out * itemsize), dtype=dt).reshape(n_out, n_in)
            t = np.frombuffer(fh.read(n_out * itemsize), dtype=dt)
            weights.append(w.astype(dt.newbyteorder("=")))
            thresholds.append(t.astype(dt.newbyteorder("=")))
        return Params(weights, thresholds)
