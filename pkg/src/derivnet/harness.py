"""Training runs, sweeps, and diagnostics for the overfitting experiments.

One run trains full-batch with resilient backpropagation until the tracked
statistic, the root mean of the value term sqrt(<e_0>) on the training grid,
has improved its running best by less than 10% over the trailing 1000
epochs, or until epoch 10000.  The weights of the best epoch are kept and
test metrics are computed once, from those weights only; the stopping rule
never sees test data.

A sweep runs (grid, network, mode) cells with 5 repeats each, derives every
repeat's seed from the master seed and the cell coordinates so any cell can
be recomputed in isolation, and emits per-run rows plus aggregate rows.
Results are linked to the equivalent parameter count N = multiplier * M.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry, jets, network, targets
from .cost import CostSpec, Pattern, residual_matrices
from .geometry import Domain, Grid, GridSpec
from .network import BatchEvaluator, DiagnosticError, NetworkConfig, Params
from .optimizer import RpropConfig, rprop_init, rprop_resurrect, rprop_step
from .targets import TaskDef, n_multiplier, task_by_name

TASK_NAMES = ("approx2d", "approx5d", "poisson2d")

# Test grid spacings: a much denser grid of the same construction per task.
TEST_LAMBDA = {"approx2d": 0.035, "approx5d": 0.15, "poisson2d": 0.033}

# Training grid spacing ranges swept in the reference experiments.
SWEEP_LAMBDA = {
    "approx2d": {"classical": (0.073, 0.37), "extended": (0.24, 1.45)},
    "approx5d": {"classical": (0.336, 0.62), "extended": (0.55, 1.1)},
    "poisson2d": {"classical": (0.07, 0.6), "extended": (0.16, 1.62)},
}

RESULT_COLUMNS = [
    "task", "mode", "s", "net", "lambda", "M", "N", "repeat", "epochs",
    "best_epoch", "train_rms_e0", "test_rms_e0", "log10_ratio", "max_dev",
    "delta_median", "wall_seconds", "seed", "status",
]
AGGREGATE_COLUMNS = [
    "task", "mode", "s", "net", "lambda", "N", "stat",
    "log10_ratio", "log10_test_rms", "epochs",
]


def mode_label(s: int) -> str:
    if s == 0:
        return "classical"
    if s == 4:
        return "extended"
    return f"order-{s}"


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run needs, reproducible from the seed fields."""

    task: str
    sizes: tuple[int, ...]
    order: int
    lam: float
    tau: float | None = None
    test_lam: float | None = None
    max_epochs: int = 10000
    stop_window: int = 1000  # 0 disables the improvement rule
    stop_threshold: float = 0.10
    precision: str = "single"
    master_seed: int = 0
    grid_index: int = 0
    repeat: int = 0
    rprop: RpropConfig = field(default_factory=RpropConfig)

    def __post_init__(self):
        if self.task not in TASK_NAMES:
            raise ValueError(f"unknown task {self.task!r}")
        if self.stop_window and self.max_epochs < self.stop_window:
            raise ValueError("max_epochs must cover the stop window")
        object.__setattr__(self, "sizes", tuple(int(v) for v in self.sizes))

    @property
    def mode(self) -> str:
        return mode_label(self.order)

    @property
    def net_label(self) -> str:
        return f"{network.count_weights(self.network_config())}w"

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(self.sizes, self.precision)

    def cost_spec(self) -> CostSpec:
        task = task_by_name(self.task)
        if task.kind == "poisson":
            return CostSpec("poisson", self.order)
        policy = "random_pair" if task.dimension > 2 else "fixed"
        return CostSpec("direct", self.order, policy)

    def run_seed(self) -> int:
        return derive_seed(self.master_seed, self.grid_index, self.net_label, self.mode, self.repeat)


@dataclass
class RunResult:
    """Per-epoch traces, the best-epoch snapshot, and final train/test stats.

    ``trace_delta`` records the per-epoch count of parameters whose value
    actually changed (nonzero applied movement).  Step sizes linger in the
    subnormal range long after their movements round to nothing, so counting
    moved parameters is the observable measure of how much of the network is
    still training; it also spikes right after step resurrection and at the
    start of a run, then decays to its steady level.
    """

    config: RunConfig
    status: str = "ok"
    message: str = ""
    epochs: int = 0
    best_epoch: int = 0
    best_params: Params | None = None
    trace_rms0: np.ndarray = field(default_factory=lambda: np.empty(0))
    trace_delta: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    train_rms0: float = math.nan
    test_rms0: float = math.nan
    log10_ratio: float = math.nan
    max_dev: float | None = None
    change_prob10: float = math.nan
    wall_seconds: float = 0.0
    seed: int = 0
    n_points: int = 0
    n_equivalent: int = 0


@dataclass
class ExperimentRow:
    task: str
    mode: str
    s: int
    net: str
    lam: float
    m_points: int
    n_equivalent: int
    repeat: int
    epochs: int
    best_epoch: int
    train_rms_e0: float
    test_rms_e0: float
    log10_ratio: float
    max_dev: float | None
    delta_median: float
    wall_seconds: float
    seed: int
    status: str


def derive_seed(master_seed: int, grid_index: int, net_label: str, mode: str, repeat: int) -> int:
    """Stable 63-bit seed from the cell coordinates."""
    text = f"{master_seed}|{grid_index}|{net_label}|{mode}|{repeat}"
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def test_grid_seed(master_seed: int, task: str) -> int:
    digest = hashlib.sha256(f"{master_seed}|test|{task}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------------------
# pattern and test-set construction
# ---------------------------------------------------------------------------


def build_patterns(
    task: TaskDef, points: np.ndarray, spec: CostSpec, rng: np.random.Generator
) -> list[Pattern]:
    """Training patterns with exact target data at the given points."""
    points = np.atleast_2d(points)
    M = points.shape[0]
    s = spec.order
    if task.kind == "poisson":
        src = targets.poisson_source_coeffs(points, jets.JetSpec(2, s))
        return [
            Pattern(x=points[p], directions=(0, 1), source_jet=jets.Jet(jets.JetSpec(2, s), src[:, p]))
            for p in range(M)
        ]
    jet_spec = jets.JetSpec(1, s)
    if s == 0:
        vals = targets.expr_values(task.expr, points)
        return [
            Pattern(
                x=points[p],
                directions=(),
                target_jets=[jets.Jet(jet_spec, np.array([vals[p]]))],
            )
            for p in range(M)
        ]
    if spec.directions == "random_pair":
        dirs = targets.draw_direction_pairs(task.dimension, M, rng)
    else:
        dirs = np.broadcast_to(np.asarray(spec.axes, dtype=np.int64), (M, 2)).copy()
    coeff_streams = [
        targets.eval_expr_coeffs(task.expr, points, jet_spec, dirs[:, j : j + 1])
        for j in range(dirs.shape[1])
    ]
    out = []
    for p in range(M):
        tj = [jets.Jet(jet_spec, stream[:, p]) for stream in coeff_streams]
        out.append(Pattern(x=points[p], directions=tuple(int(d) for d in dirs[p]), target_jets=tj))
    return out


@dataclass
class TestSet:
    """Dense evaluation grid with precomputed target data, shared by runs."""

    task: TaskDef
    grid: Grid
    points: np.ndarray
    target_values: np.ndarray | None = None  # direct task
    source_values: np.ndarray | None = None  # poisson: g at the points
    exact_values: np.ndarray | None = None  # poisson: u_a at the points
    phi_values: np.ndarray | None = None  # poisson: boundary factor
    residual_maps: np.ndarray | None = None  # poisson: (P, 1, 6) value maps


def build_test_set(task: TaskDef, lam: float, seed: int) -> TestSet:
    domain = Domain(task.domain_kind)
    grid = geometry.generate_grid(domain, GridSpec(lam=lam, seed=seed), np.random.default_rng(seed))
    pts = grid.all_points()
    if task.kind == "direct":
        return TestSet(task, grid, pts, target_values=targets.expr_values(task.expr, pts))
    g = targets.poisson_source_coeffs(pts, jets.JetSpec(2, 0))[0]
    phi = 1.0 - pts[:, 0] ** 2 - pts[:, 1] ** 2
    return TestSet(
        task,
        grid,
        pts,
        source_values=g,
        exact_values=targets.exact_solution_values(pts),
        phi_values=phi,
        residual_maps=residual_matrices(pts, 0),
    )


def default_test_set(task_name: str, master_seed: int, lam: float | None = None) -> TestSet:
    lam = lam if lam is not None else TEST_LAMBDA[task_name]
    return build_test_set(task_by_name(task_name), lam, test_grid_seed(master_seed, task_name))


def evaluate(params: Params, test_set: TestSet, train_rms0: float | None = None) -> dict:
    """Test metrics from one parameter snapshot.

    Returns sqrt(<e_0>) on the test grid, the base-10 log of the test/train
    ratio when a train value is supplied, and for the Poisson task the
    maximum deviation of u = N * phi from the exact solution.
    """
    out = {}
    if test_set.task.kind == "direct":
        pred = network.forward_batch(params, test_set.points).astype(np.float64)
        err = pred - test_set.target_values
        out["test_rms0"] = float(np.sqrt(np.mean(err * err)))
        out["max_dev"] = None
    else:
        v = network.forward_jets_batch(params, test_set.points, jets.JetSpec(2, 2))
        v = v.astype(np.float64)
        resid = np.einsum("pij,jp->ip", test_set.residual_maps, v)[0] - test_set.source_values
        out["test_rms0"] = float(np.sqrt(np.mean(resid * resid)))
        u = v[0] * test_set.phi_values
        out["max_dev"] = float(np.abs(u - test_set.exact_values).max())
    if train_rms0 is not None:
        if train_rms0 > 0:
            out["log10_ratio"] = float(np.log10(out["test_rms0"] / train_rms0))
        else:
            out["log10_ratio"] = math.inf
    return out


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


def should_stop(best_history: list[float], window: int, threshold: float) -> bool:
    """True when the running best improved by less than ``threshold`` over the
    trailing ``window`` epochs."""
    if window <= 0 or len(best_history) <= window:
        return False
    return best_history[-1] > (1.0 - threshold) * best_history[-1 - window]


def train_run(cfg: RunConfig, test_set: TestSet | None = None) -> RunResult:
    """One full training run per the protocol; deterministic given the config."""
    t0 = time.perf_counter()
    task = task_by_name(cfg.task)
    net_cfg = cfg.network_config()
    if net_cfg.sizes[0] != task.dimension:
        raise ValueError(f"{cfg.task} needs {task.dimension} inputs, config has {net_cfg.sizes[0]}")
    run_seed = cfg.run_seed()
    ss = np.random.SeedSequence(run_seed)
    grid_rng, init_rng, dirs_rng = (np.random.default_rng(c) for c in ss.spawn(3))

    domain = Domain(task.domain_kind)
    grid = geometry.generate_grid(domain, GridSpec(lam=cfg.lam, tau=cfg.tau, seed=run_seed), grid_rng)
    cost_spec = cfg.cost_spec()
    patterns = build_patterns(task, grid.all_points(), cost_spec, dirs_rng)
    result = RunResult(config=cfg, seed=run_seed, n_points=len(patterns))
    result.n_equivalent = n_multiplier(task.kind, cfg.order) * len(patterns)

    evaluator = BatchEvaluator(net_cfg.sizes, patterns, cost_spec, net_cfg.dtype)
    params = network.init_params(net_cfg, init_rng)
    flat = params.to_flat()
    view = Params.from_flat(net_cfg.sizes, flat)
    state = rprop_init(flat.size, cfg.rprop, dtype=net_cfg.dtype, clamp_mask=params.weight_mask())

    best = math.inf
    best_flat = flat.copy()
    best_epoch = 0
    best_history: list[float] = []
    trace_rms0: list[float] = []
    trace_delta: list[int] = []
    move_window: list[np.ndarray] = []
    change_sum, change_n = 0.0, 0

    try:
        for epoch in range(1, cfg.max_epochs + 1):
            _, grad, e0_mean = evaluator.cost_and_gradient(view)
            rms0 = math.sqrt(e0_mean)
            trace_rms0.append(rms0)
            if rms0 < best:
                best = rms0
                best_flat[:] = flat
                best_epoch = epoch
            best_history.append(best)

            rprop_step(state, grad, flat)
            moved = state.prev_move != 0
            trace_delta.append(int(moved.sum()))
            move_window.append(moved)
            if len(move_window) > 10:
                move_window.pop(0)
            if len(move_window) == 10:
                changed = move_window[0].copy()
                for m in move_window[1:]:
                    changed |= m
                change_sum += float(changed.mean())
                change_n += 1
            if epoch % cfg.rprop.resurrect_period == 0:
                rprop_resurrect(state)
            if should_stop(best_history, cfg.stop_window, cfg.stop_threshold):
                break
    except DiagnosticError as err:
        result.status = "failed"
        result.message = str(err)

    result.epochs = len(trace_rms0)
    result.best_epoch = best_epoch
    result.trace_rms0 = np.asarray(trace_rms0)
    result.trace_delta = np.asarray(trace_delta, dtype=np.int64)
    result.train_rms0 = best if best < math.inf else math.nan
    result.change_prob10 = change_sum / change_n if change_n else math.nan
    result.best_params = Params.from_flat(net_cfg.sizes, best_flat)

    if result.status == "ok":
        if test_set is None:
            test_set = default_test_set(cfg.task, cfg.master_seed, cfg.test_lam)
        metrics = evaluate(result.best_params, test_set, train_rms0=result.train_rms0)
        result.test_rms0 = metrics["test_rms0"]
        result.log10_ratio = metrics["log10_ratio"]
        result.max_dev = metrics["max_dev"]
    result.wall_seconds = time.perf_counter() - t0
    return result


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def diagnostics(run: RunResult, baseline: RunResult | None = None) -> dict:
    """Nonzero-step statistics; with a baseline, paired trace ratios too."""
    delta = run.trace_delta.astype(np.float64)
    out = {
        "delta_min": float(delta.min()) if delta.size else math.nan,
        "delta_median": float(np.median(delta)) if delta.size else math.nan,
        "delta_q3low": _lower_tercile(delta),
        "change_prob10": run.change_prob10,
    }
    if baseline is not None:
        n = min(run.trace_delta.size, baseline.trace_delta.size)
        ratios = run.trace_delta[:n] / np.maximum(baseline.trace_delta[:n], 1).astype(np.float64)
        out["ratio_min"] = float(ratios.min())
        out["ratio_q3low"] = _lower_tercile(ratios)
        out["ratio_median"] = float(np.median(ratios))
    return out


def _lower_tercile(values: np.ndarray) -> float:
    if values.size == 0:
        return math.nan
    return float(np.quantile(values, 1.0 / 3.0, method="lower"))


# ---------------------------------------------------------------------------
# gradient verification gate
# ---------------------------------------------------------------------------


def gradcheck(
    sizes: tuple[int, ...],
    task_name: str,
    order: int,
    n_probe: int = 50,
    n_patterns: int = 5,
    seed: int = 0,
    threshold: float = 1e-6,
    corrupt: bool = False,
) -> dict:
    """Analytic gradient vs Richardson-extrapolated central differences.

    Runs in double precision; passes when the worst relative error over the
    probed parameters is below the threshold.  ``corrupt`` perturbs one
    analytic entry to exercise the failure path (negative control).
    """
    task = task_by_name(task_name)
    cfg = NetworkConfig(sizes, "double")
    if cfg.sizes[0] != task.dimension:
        raise ValueError(f"{task_name} needs {task.dimension} inputs")
    rng = np.random.default_rng(seed)
    pts = _interior_samples(task, n_patterns, rng)
    cost_spec = (
        CostSpec("poisson", order)
        if task.kind == "poisson"
        else CostSpec("direct", order, "random_pair" if task.dimension > 2 else "fixed")
    )
    patterns = build_patterns(task, pts, cost_spec, rng)
    params = network.init_params(cfg, rng)
    ev = BatchEvaluator(cfg.sizes, patterns, cost_spec, np.float64)
    _, grad, _ = ev.cost_and_gradient(params)
    flat = params.to_flat()
    probe_idx = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
    if corrupt:
        grad = grad.copy()
        grad[probe_idx] *= 1.001  # negative control: break every probed adjoint
    floor = max(1e-6 * float(np.abs(grad).max()), 1e-300)

    def cost_at(vec):
        e, _, _ = ev.cost_and_gradient(Params.from_flat(cfg.sizes, vec))
        return e

    worst_rel, worst_idx = 0.0, -1
    h0 = 1e-4
    for i in probe_idx:
        fd = _richardson_fd(cost_at, flat, int(i), h0)
        rel = abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), floor)
        if rel > worst_rel:
            worst_rel, worst_idx = rel, int(i)
    return {
        "passed": bool(worst_rel < threshold),
        "max_rel_error": worst_rel,
        "worst_param": worst_idx,
        "n_probe": len(probe_idx),
        "threshold": threshold,
    }


def _richardson_fd(fun, flat, i, h):
    def central(hh):
        fp = flat.copy()
        fp[i] += hh
        fm = flat.copy()
        fm[i] -= hh
        return (fun(fp) - fun(fm)) / (2.0 * hh)

    d1, d2 = central(h), central(h / 2.0)
    return (4.0 * d2 - d1) / 3.0


def _interior_samples(task: TaskDef, n: int, rng: np.random.Generator) -> np.ndarray:
    domain = Domain(task.domain_kind)
    out = []
    while len(out) < n:
        x = rng.uniform(-0.95, 0.95, size=task.dimension)
        if domain.contains(x[None, :])[0]:
            out.append(x)
    return np.array(out)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def sweep_templates(
    task_name: str,
    modes: tuple[int, ...] = (0, 4),
    sizes: tuple[int, ...] | None = None,
    master_seed: int = 0,
    max_grids: int | None = None,
    max_epochs: int = 10000,
    test_lam: float | None = None,
) -> list[RunConfig]:
    """Grid-series templates over the reference spacing ranges."""
    task = task_by_name(task_name)
    domain = Domain(task.domain_kind)
    sizes = sizes if sizes is not None else default_sizes(task.dimension)
    out = []
    for s in modes:
        rng_name = "classical" if s == 0 else "extended"
        lo, hi = SWEEP_LAMBDA[task_name][rng_name]
        series = geometry.grid_series(domain, lo, hi)
        if max_grids is not None and len(series) > max_grids:
            picks = np.unique(np.linspace(0, len(series) - 1, max_grids).round().astype(int))
            series = [series[i] for i in picks]
        for gi, gspec in enumerate(series):
            out.append(
                RunConfig(
                    task=task_name,
                    sizes=sizes,
                    order=s,
                    lam=gspec.lam,
                    test_lam=test_lam,
                    master_seed=master_seed,
                    grid_index=gi,
                    max_epochs=max_epochs,
                    stop_window=_window_for(max_epochs),
                )
            )
    return out


def _window_for(max_epochs: int, window: int = 1000) -> int:
    """Epoch caps below the stop window run to the cap (smoke runs)."""
    return window if max_epochs >= window else 0


def var_order_templates(
    n_targets: tuple[int, ...] = (1579, 1137, 819, 590, 425, 306, 220),
    sizes: tuple[int, ...] | None = None,
    master_seed: int = 0,
    max_epochs: int = 10000,
    max_grids: int | None = None,
    test_lam: float | None = None,
) -> list[RunConfig]:
    """5D sweep over cost orders 0..4 at matched equivalent parameter counts."""
    task = task_by_name("approx5d")
    domain = Domain(task.domain_kind)
    sizes = sizes if sizes is not None else default_sizes(task.dimension)
    if max_grids is not None and len(n_targets) > max_grids:
        picks = np.unique(np.linspace(0, len(n_targets) - 1, max_grids).round().astype(int))
        n_targets = tuple(n_targets[i] for i in picks)
    out = []
    for s in range(5):
        mult = n_multiplier("direct", s)
        for gi, n_target in enumerate(n_targets):
            m_target = max(3, round(n_target / mult))
            lam = geometry.lambda_for_count(domain, m_target, tau_factor=1.6)
            out.append(
                RunConfig(
                    task="approx5d",
                    sizes=sizes,
                    order=s,
                    lam=lam,
                    test_lam=test_lam,
                    master_seed=master_seed,
                    grid_index=gi,
                    max_epochs=max_epochs,
                    stop_window=_window_for(max_epochs),
                )
            )
    return out


def default_sizes(dim: int, width: int = 64) -> tuple[int, ...]:
    """The six-hidden-layer reference architecture at a given width."""
    return (dim,) + (width,) * 6 + (1,)


def _run_cell(args):
    cfg, test_lam = args
    test_set = default_test_set(cfg.task, cfg.master_seed, test_lam)
    return train_run(cfg, test_set)


def experiment(
    templates: list[RunConfig],
    repeats: int = 5,
    jobs: int = 1,
) -> tuple[list[ExperimentRow], list[dict]]:
    """Run every template x repeat, return per-run rows and aggregates.

    Failed repeats are kept in the rows with a failure flag and excluded
    from the aggregates.  Row order is deterministic regardless of ``jobs``.
    """
    cells = [replace(t, repeat=r) for t in templates for r in range(repeats)]
    results: list[RunResult] = [None] * len(cells)
    if jobs <= 1:
        test_cache: dict[tuple, TestSet] = {}
        for i, cfg in enumerate(cells):
            key = (cfg.task, cfg.master_seed, cfg.test_lam)
            if key not in test_cache:
                test_cache[key] = default_test_set(cfg.task, cfg.master_seed, cfg.test_lam)
            results[i] = train_run(cfg, test_cache[key])
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, res in enumerate(pool.map(_run_cell, [(c, c.test_lam) for c in cells])):
                results[i] = res

    rows = [
        ExperimentRow(
            task=r.config.task,
            mode=r.config.mode,
            s=r.config.order,
            net=r.config.net_label,
            lam=r.config.lam,
            m_points=r.n_points,
            n_equivalent=r.n_equivalent,
            repeat=r.config.repeat,
            epochs=r.epochs,
            best_epoch=r.best_epoch,
            train_rms_e0=r.train_rms0,
            test_rms_e0=r.test_rms0,
            log10_ratio=r.log10_ratio,
            max_dev=r.max_dev,
            delta_median=float(np.median(r.trace_delta)) if r.trace_delta.size else math.nan,
            wall_seconds=r.wall_seconds,
            seed=r.seed,
            status=r.status,
        )
        for r in results
    ]
    return rows, aggregate_rows(rows)


def aggregate_rows(rows: list[ExperimentRow]) -> list[dict]:
    """Per-cell mean/min/max of the log metrics plus the epoch lower terciles."""
    cells: dict[tuple, list[ExperimentRow]] = {}
    for row in rows:
        cells.setdefault((row.task, row.mode, row.s, row.net, row.lam), []).append(row)
    out = []
    for key in cells:
        ok = [r for r in cells[key] if r.status == "ok"]
        if not ok:
            continue
        ratios = np.array([r.log10_ratio for r in ok])
        test_logs = np.log10(np.maximum([r.test_rms_e0 for r in ok], 1e-300))
        epochs = np.array([r.epochs for r in ok], dtype=np.float64)
        n_mean = float(np.mean([r.n_equivalent for r in ok]))
        stats = {
            "mean": (float(ratios.mean()), float(test_logs.mean()), float(epochs.mean())),
            "min": (float(ratios.min()), float(test_logs.min()), float(epochs.min())),
            "max": (float(ratios.max()), float(test_logs.max()), float(epochs.max())),
            "q3low": (
                _lower_tercile(ratios),
                _lower_tercile(test_logs),
                _lower_tercile(epochs),
            ),
        }
        for stat, (ratio, tlog, ep) in stats.items():
            out.append(
                {
                    "task": key[0],
                    "mode": key[1],
                    "s": key[2],
                    "net": key[3],
                    "lambda": key[4],
                    "N": n_mean,
                    "stat": stat,
                    "log10_ratio": ratio,
                    "log10_test_rms": tlog,
                    "epochs": ep,
                }
            )
    return out


# ---------------------------------------------------------------------------
# file output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(float(v))  # shortest round-trip form, re-aggregation safe
    return str(v)


def write_results_csv(path, rows: list[ExperimentRow], header_comment: str = ""):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.task, r.mode, _fmt(r.s), r.net, _fmt(r.lam), _fmt(r.m_points),
                    _fmt(r.n_equivalent), _fmt(r.repeat), _fmt(r.epochs), _fmt(r.best_epoch),
                    _fmt(r.train_rms_e0), _fmt(r.test_rms_e0), _fmt(r.log10_ratio),
                    _fmt(r.max_dev), _fmt(r.delta_median), _fmt(r.wall_seconds),
                    _fmt(r.seed), r.status,
                ]
            )


def aggregates_csv_text(aggregates: list[dict], header_comment: str = "") -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    writer = csv.writer(buf)
    writer.writerow(AGGREGATE_COLUMNS)
    for a in aggregates:
        writer.writerow([_fmt(a[c.lower()] if c != "N" else a["N"]) for c in AGGREGATE_COLUMNS])
    return buf.getvalue()


def write_aggregates_csv(path, aggregates: list[dict], header_comment: str = ""):
    with open(path, "w", newline="") as fh:
        fh.write(aggregates_csv_text(aggregates, header_comment))


# Figure id -> (task, metric, which modes appear).
PLOT_FILES = {
    "2d1": ("approx2d", "log10_ratio", None),
    "2d2": ("approx2d", "log10_ratio", (4,)),
    "2d3": ("approx2d", "log10_test_rms", None),
    "5d1": ("approx5d", "log10_ratio", None),
    "5d2": ("approx5d", "log10_ratio", (4,)),
    "5d3": ("approx5d", "log10_test_rms", None),
    "deq1": ("poisson2d", "log10_ratio", None),
    "deq2": ("poisson2d", "log10_test_rms", None),
    "deq4": ("poisson2d", "max_dev", None),
    "varORD": ("approx5d", "log10_ratio", (0, 1, 2, 3, 4)),
}


def write_plot_data(out_dir, rows: list[ExperimentRow], figures: list[str], header_comment: str = ""):
    """Two-column (log10 N, metric) text files, one labeled block per curve."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fig in figures:
        task, metric, mode_filter = PLOT_FILES[fig]
        fig_rows = [r for r in rows if r.task == task and r.status == "ok"]
        if mode_filter is not None:
            fig_rows = [r for r in fig_rows if r.s in mode_filter]
        if not fig_rows:
            continue
        path = os.path.join(out_dir, f"{fig}.txt")
        with open(path, "w") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(f"# columns: log10_N {metric}\n")
            curves: dict[tuple, list[ExperimentRow]] = {}
            for r in fig_rows:
                curves.setdefault((r.s, r.net), []).append(r)
            for (s, net) in sorted(curves):
                fh.write(f"# curve: {mode_label(s)} {net}\n")
                cells: dict[float, list[ExperimentRow]] = {}
                for r in curves[(s, net)]:
                    cells.setdefault(r.lam, []).append(r)
                pts = []
                for lam, rs in cells.items():
                    n_mean = float(np.mean([r.n_equivalent for r in rs]))
                    if metric == "log10_test_rms":
                        vals = [math.log10(max(r.test_rms_e0, 1e-300)) for r in rs]
                    elif metric == "max_dev":
                        vals = [math.log10(max(r.max_dev, 1e-300)) for r in rs if r.max_dev is not None]
                    else:
                        vals = [r.log10_ratio for r in rs]
                    if vals:
                        pts.append((math.log10(n_mean), float(np.mean(vals))))
                for x, y in sorted(pts):
                    fh.write(f"{x:.9g} {y:.9g}\n")
        written.append(path)
    return written
