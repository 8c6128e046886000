"""Training and test grids: rotated, jittered lattices plus surface point sets.

The interior part starts from a Cartesian lattice of spacing lambda centered
on the origin and covering the domain's bounding box expanded by one lambda
per side, is rotated between two random isotropic unit vectors, shifted along
each axis by a uniform value in [-lambda/4, lambda/4], and clipped to the
domain.  The surface part holds near-equidistant points on the boundary with
spacing tau (default: tau = lambda, except 1.6*lambda for the 5D ball).

Surface constructions per domain:

* box2d: each side receives floor(side/tau) points at spacing tau with a
  random phase inside the leftover, so corners are never duplicated;
* disk2d: antipodal pairs, 2*floor(pi/tau) equally spaced circle points with
  a random phase;
* ball5d: an approximately uniform set on the 4-sphere.  The point count is
  matched so the mean nearest-neighbor geodesic distance is close to tau
  (cached per tau); small sets are produced by pairwise repulsion relaxation
  (100 iterations), large sets (> 400 points) by a deterministic recursive
  banded construction, which is quasi-uniform at that scale and avoids the
  quadratic relaxation cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_BALL5D_VOLUME = 8.0 * math.pi**2 / 15.0  # unit ball in R^5
_SPHERE4_AREA = 8.0 * math.pi**2 / 3.0  # unit 4-sphere
_RELAXATION_ITERS = 100
_RELAXATION_MAX_N = 400

DOMAIN_KINDS = ("box2d", "disk2d", "ball5d")


class GridError(RuntimeError):
    """Raised when a grid request cannot produce any points."""


@dataclass(frozen=True)
class Domain:
    """One of the three benchmark regions, with membership and measure data."""

    kind: str

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain {self.kind!r}")

    @property
    def dimension(self) -> int:
        return {"box2d": 2, "disk2d": 2, "ball5d": 5}[self.kind]

    @property
    def volume(self) -> float:
        return {"box2d": 4.0, "disk2d": math.pi, "ball5d": _BALL5D_VOLUME}[self.kind]

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind == "box2d":
            return np.all(np.abs(points) <= 1.0, axis=1)
        return np.einsum("ij,ij->i", points, points) <= 1.0

    def on_boundary(self, points: np.ndarray, tol: float = 1e-6) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.kind == "box2d":
            inside = np.all(np.abs(points) <= 1.0 + tol, axis=1)
            return inside & (np.abs(np.abs(points).max(axis=1) - 1.0) <= tol)
        r = np.sqrt(np.einsum("ij,ij->i", points, points))
        return np.abs(r - 1.0) <= tol

    def default_tau(self, lam: float) -> float:
        return 1.6 * lam if self.kind == "ball5d" else lam


@dataclass(frozen=True)
class GridSpec:
    """Lattice spacing, surface spacing and seed for one grid realization."""

    lam: float
    tau: float | None = None  # None resolves to the domain default
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lattice spacing must be positive")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("surface spacing must be positive")

    def resolve_tau(self, domain: Domain) -> float:
        return self.tau if self.tau is not None else domain.default_tau(self.lam)


@dataclass
class Grid:
    domain: Domain
    spec: GridSpec
    interior: np.ndarray
    surface: np.ndarray

    @property
    def n_interior(self) -> int:
        return self.interior.shape[0]

    @property
    def n_surface(self) -> int:
        return self.surface.shape[0]

    @property
    def n_points(self) -> int:
        return self.n_interior + self.n_surface

    def all_points(self) -> np.ndarray:
        return np.concatenate([self.interior, self.surface], axis=0)


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Rotation mapping one random isotropic unit vector onto another.

    Acts in the plane spanned by the two vectors and is the identity on the
    orthogonal complement.  A draw with the vectors nearly opposite is
    resampled (the plane rotation degenerates there).
    """
    if dim < 2:
        raise ValueError("rotations need dimension >= 2")
    u = _unit_vector(dim, rng)
    while True:
        w = _unit_vector(dim, rng)
        if 1.0 + float(u @ w) > 1e-8:
            break
    c = 1.0 + float(u @ w)
    uw = u + w
    return np.eye(dim) - np.outer(uw, uw) / c + 2.0 * np.outer(w, u)


def _unit_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def lattice_points(domain: Domain, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Rotated, shifted lattice clipped to the domain (the interior part)."""
    dim = domain.dimension
    reach = 1.0 + lam
    kmax = int(math.floor(reach / lam))
    axis = np.arange(-kmax, kmax + 1, dtype=np.float64) * lam
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    rot = random_rotation(dim, rng)
    shift = rng.uniform(-lam / 4.0, lam / 4.0, size=dim)
    pts = mesh @ rot.T + shift
    return pts[domain.contains(pts)]


def surface_points(domain: Domain, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Near-equidistant points on the domain boundary with spacing tau."""
    if tau <= 0:
        raise ValueError("surface spacing must be positive")
    if domain.kind == "box2d":
        return _box_surface(tau, rng)
    if domain.kind == "disk2d":
        return _circle_surface(tau, rng)
    return _sphere4_surface(tau, rng)


def _box_surface(tau: float, rng: np.random.Generator) -> np.ndarray:
    """floor(2/tau) points per side of the [-1,1]^2 box, random phase per side."""
    pts = []
    for side in range(4):
        k = int(math.floor(2.0 / tau))
        if k < 1:
            continue
        slack = 2.0 - (k - 1) * tau
        start = -1.0 + rng.uniform(0.0, slack)
        coords = start + tau * np.arange(k)
        fixed = np.full(k, -1.0 if side % 2 == 0 else 1.0)
        if side < 2:
            pts.append(np.column_stack([coords, fixed]))
        else:
            pts.append(np.column_stack([fixed, coords]))
    if not pts:
        return np.empty((0, 2))
    return np.concatenate(pts, axis=0)


def _circle_surface(tau: float, rng: np.random.Generator) -> np.ndarray:
    """Antipodal pairs: 2*floor(pi/tau) equally spaced points, random phase."""
    n = 2 * int(math.floor(math.pi / tau))
    if n < 1:
        n = 1
    phase = rng.uniform(0.0, 2.0 * math.pi)
    ang = phase + 2.0 * math.pi * np.arange(n) / n
    return np.column_stack([np.cos(ang), np.sin(ang)])


# -- 4-sphere ---------------------------------------------------------------

_sphere_count_cache: dict[float, int] = {}


def _sphere4_surface(tau: float, rng: np.random.Generator) -> np.ndarray:
    n = _sphere4_count(tau)
    if n > _RELAXATION_MAX_N:
        pts = _sphere_banded(4, tau)
        return pts @ random_rotation(5, rng).T
    return _relax_sphere(5, n, rng, iters=_RELAXATION_ITERS)


def _sphere4_count(tau: float) -> int:
    """Point count whose relaxed mean nearest-neighbor geodesic spacing is
    closest to tau; cached per tau with a fixed probe seed."""
    key = round(float(tau), 12)
    if key in _sphere_count_cache:
        return _sphere_count_cache[key]
    guess = _sphere_banded(4, tau).shape[0]
    if guess > _RELAXATION_MAX_N:
        _sphere_count_cache[key] = guess
        return guess
    def probe(n: int) -> float:
        pts = _relax_sphere(5, n, np.random.default_rng(20240617 + n), iters=30)
        return _mean_nn_geodesic(pts)

    # mean NN spacing decreases with n; bisect, then compare the neighbors
    lo = max(2, int(guess * 0.5))
    hi = max(lo + 1, int(math.ceil(guess * 1.6)))
    while lo < hi:
        mid = (lo + hi) // 2
        if probe(mid) > tau:
            lo = mid + 1
        else:
            hi = mid
    best_n, best_err = lo, float("inf")
    for n in (lo - 1, lo, lo + 1):
        if n < 2:
            continue
        err = abs(probe(n) - tau)
        if err < best_err:
            best_n, best_err = n, err
    _sphere_count_cache[key] = best_n
    return best_n


def _relax_sphere(dim: int, n: int, rng: np.random.Generator, iters: int) -> np.ndarray:
    """Pairwise-repulsion relaxation of n points on the unit (dim-1)-sphere."""
    pts = np.array([_unit_vector(dim, rng) for _ in range(n)])
    if n == 1:
        return pts
    for _ in range(iters):
        diff = pts[:, None, :] - pts[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        np.fill_diagonal(d2, np.inf)
        force = (diff / (d2[:, :, None] ** 1.5 + 1e-12)).sum(axis=1)
        step = 0.1 * (_SPHERE4_AREA / max(n, 1)) ** 0.5
        pts = pts + step * force / (np.linalg.norm(force, axis=1, keepdims=True) + 1e-12)
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts


def _mean_nn_geodesic(pts: np.ndarray) -> float:
    dots = np.clip(pts @ pts.T, -1.0, 1.0)
    np.fill_diagonal(dots, -1.0)
    return float(np.arccos(dots.max(axis=1)).mean())


def _sphere_banded(sphere_dim: int, tau: float) -> np.ndarray:
    """Deterministic quasi-uniform points on S^sphere_dim with spacing ~tau."""
    if sphere_dim == 1:
        n = max(1, round(2.0 * math.pi / tau))
        ang = 2.0 * math.pi * np.arange(n) / n
        return np.column_stack([np.cos(ang), np.sin(ang)])
    bands = max(2, round(math.pi / tau))
    out = []
    for j in range(bands):
        psi = (j + 0.5) * math.pi / bands
        radius = math.sin(psi)
        sub = _sphere_banded(sphere_dim - 1, min(tau / max(radius, 1e-9), math.pi))
        ring = np.column_stack([radius * sub, np.full(sub.shape[0], math.cos(psi))])
        out.append(ring)
    return np.concatenate(out, axis=0)


def generate_grid(domain: Domain, spec: GridSpec, rng: np.random.Generator | None = None) -> Grid:
    """Interior lattice plus surface set; raises GridError if both are empty."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    tau = spec.resolve_tau(domain)
    interior = lattice_points(domain, spec.lam, rng)
    surface = surface_points(domain, tau, rng)
    if interior.shape[0] + surface.shape[0] == 0:
        raise GridError(f"no points for lambda={spec.lam} on {domain.kind}")
    return Grid(domain=domain, spec=spec, interior=interior, surface=surface)


def grid_series(
    domain: Domain, lambda_start: float, lambda_end: float, shrink: float = 0.10
) -> list[GridSpec]:
    """Spacings whose expected counts decay by ~shrink per step.

    Geometric sequence lambda_{n+1} = lambda_n * (1/(1-shrink))^(1/d),
    truncated at lambda_end; the endpoint itself closes the series.
    """
    if not lambda_start < lambda_end:
        raise ValueError("need lambda_start < lambda_end")
    ratio = (1.0 / (1.0 - shrink)) ** (1.0 / domain.dimension)
    out, lam = [], lambda_start
    while lam < lambda_end * (1.0 - 1e-9):
        out.append(GridSpec(lam=lam))
        lam *= ratio
    out.append(GridSpec(lam=lambda_end))
    return out


def expected_count(domain: Domain, lam: float, tau: float | None = None) -> float:
    """Expected total point count of a grid (interior density plus surface)."""
    tau = tau if tau is not None else domain.default_tau(lam)
    interior = domain.volume / lam**domain.dimension
    if domain.kind == "box2d":
        surface = 4 * math.floor(2.0 / tau)
    elif domain.kind == "disk2d":
        surface = max(2 * math.floor(math.pi / tau), 1)
    else:
        surface = _sphere4_count(tau)
    return interior + surface


def lambda_for_count(
    domain: Domain, target: int, tau_factor: float | None = None
) -> float:
    """Spacing whose expected count is closest to ``target`` (bisection)."""
    if target < 1:
        raise ValueError("target count must be positive")

    def count(lam):
        tau = None if tau_factor is None else tau_factor * lam
        return expected_count(domain, lam, tau)

    lo, hi = 0.01, 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if count(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def write_grid(path, grid: Grid):
    """Plain-text export: one point per row, a header line per section."""
    dim = grid.domain.dimension
    tau = grid.spec.resolve_tau(grid.domain)
    with open(path, "w") as fh:
        fh.write(f"# dim={dim} lambda={grid.spec.lam:.12g} kind=interior\n")
        for row in grid.interior:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        fh.write(f"# dim={dim} lambda={tau:.12g} kind=surface\n")
        for row in grid.surface:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
