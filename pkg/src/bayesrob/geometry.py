"""Overlap geometry of shifted vicinities.

Shifting a vicinity by ``phi`` along a unit direction changes any
``mu_k`` by at most one minus the overlap of the two kernels; the worst
direction gives the maximal mu-change curve, whose inverse yields distance
bounds and the shrunken (deterministically robust) radius.

Overlaps are exact for L^inf (product of per-axis interval overlaps) and
Monte-Carlo for L^1 / L^2. The MC estimates reuse one fixed sample set per
kernel shape (common random numbers), which keeps them monotone in the
shift magnitude along any fixed direction, so bisection stays well posed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import DimUnsupported, check_kappa
from .kernels import VicinityKernel, lp_norm, sample_offset

MC_POINTS = 1_000_000
SEARCH_POINTS = 100_000
MC_SEED = 20240101
BISECT_TOL = 1e-9


@lru_cache(maxsize=16)
def _unit_ball_points(p: float, dim: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = sample_offset(VicinityKernel(p, 1.0, dim), rng, size=count)
    pts.setflags(write=False)
    return pts


def _overlap_exact_box(kernel: VicinityKernel, shift: np.ndarray) -> float:
    two_eps = 2.0 * kernel.epsilon
    return float(np.prod(np.clip(two_eps - np.abs(shift), 0.0, None) / two_eps))


def overlap(
    kernel: VicinityKernel,
    shift,
    n_points: int = MC_POINTS,
    seed: int = MC_SEED,
    return_stderr: bool = False,
):
    """Integral of min(v(t - shift), v(t)): the shared fraction of two vicinities."""
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    if shift.shape != (kernel.dim,):
        raise ValueError(f"shift must have {kernel.dim} components")
    if math.isinf(kernel.p):
        val, se = _overlap_exact_box(kernel, shift), 0.0
    else:
        pts = _unit_ball_points(kernel.p, kernel.dim, int(n_points), int(seed))
        inside = lp_norm(pts - shift / kernel.epsilon, kernel.p) <= 1.0
        val = float(inside.mean())
        se = math.sqrt(max(val * (1.0 - val), 0.0) / len(pts))
    return (val, se) if return_stderr else val


def _direction(angles, dim: int, metric: float) -> np.ndarray:
    """Positive-orthant direction from spherical angles, unit length in ``metric``."""
    if dim == 1:
        v = np.array([1.0])
    elif dim == 2:
        (a,) = angles
        v = np.array([math.cos(a), math.sin(a)])
    else:
        a, b = angles
        v = np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])
    v = np.abs(v)
    return v / lp_norm(v, metric)


def _candidate_angles(dim: int, resolution: int) -> list[tuple]:
    if dim == 1:
        return [()]
    if dim == 2:
        return [(a,) for a in np.linspace(0.0, math.pi / 2, resolution)]
    grid = np.linspace(0.0, math.pi / 2, resolution)
    out = [(a, b) for a in grid for b in grid]
    out.append((math.acos(1 / math.sqrt(3)), math.pi / 4))  # main diagonal
    return out


@dataclass(frozen=True)
class DirectionalMin:
    overlap: float
    direction: np.ndarray = field(repr=False)


def min_overlap(
    kernel: VicinityKernel,
    phi: float,
    metric: float = 2.0,
    resolution: int = 33,
    n_points: int = MC_POINTS,
    seed: int = MC_SEED,
) -> DirectionalMin:
    """Smallest overlap over shifts of ``metric``-length ``phi``.

    The kernels are symmetric under coordinate reflections, so only the
    positive orthant is searched: a coarse angle grid (axes and diagonal
    included), then local refinement from the best grid point.
    """
    n = kernel.dim
    if phi <= 0:
        return DirectionalMin(1.0, _direction((0.0,) * max(n - 1, 0), n, metric))
    if n == 1 or (kernel.p == 2.0 and metric == 2.0):
        # isotropic: every direction is equivalent
        d = np.zeros(n)
        d[0] = 1.0
        return DirectionalMin(overlap(kernel, phi * d, n_points, seed), d)

    search_pts = n_points if math.isinf(kernel.p) else min(n_points, SEARCH_POINTS)

    def f(angles, pts=search_pts):
        return overlap(kernel, phi * _direction(angles, n, metric), pts, seed)

    cands = _candidate_angles(n, resolution)
    vals = [f(a) for a in cands]
    best = int(np.argmin(vals))
    angles, val = cands[best], vals[best]
    step = (math.pi / 2) / (resolution - 1)
    if n == 2:
        lo, hi = max(0.0, angles[0] - step), min(math.pi / 2, angles[0] + step)
        res = minimize_scalar(lambda a: f((a,)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        if res.fun < val:
            angles, val = (float(res.x),), float(res.fun)
    else:
        res = minimize(lambda a: f(tuple(np.clip(a, 0.0, math.pi / 2))), np.array(angles),
                       method="Nelder-Mead",
                       options={"xatol": 1e-9, "fatol": 1e-12, "initial_simplex": None})
        if res.fun < val:
            angles, val = tuple(np.clip(res.x, 0.0, math.pi / 2)), float(res.fun)
    d = _direction(angles, n, metric)
    if search_pts != n_points:
        val = overlap(kernel, phi * d, n_points, seed)
    return DirectionalMin(float(val), d)


def max_mu_change(kernel: VicinityKernel, phi: float, **kw) -> float:
    """Largest possible |mu_k(x) - mu_k(x + shift)| over Euclidean shifts of length phi."""
    if phi < 0:
        raise ValueError("phi must be non-negative")
    return 1.0 - min_overlap(kernel, phi, metric=2.0, **kw).overlap


@dataclass
class OverlapProfile:
    kernel: VicinityKernel
    phis: list
    overlaps: list
    directions: list

    @property
    def mu_changes(self) -> list:
        return [1.0 - o for o in self.overlaps]

    def rows(self):
        for phi, o, d in zip(self.phis, self.overlaps, self.directions):
            yield phi, o, 1.0 - o, d


def overlap_profile(kernel: VicinityKernel, phis, **kw) -> OverlapProfile:
    mins = [min_overlap(kernel, float(phi), **kw) for phi in phis]
    return OverlapProfile(
        kernel,
        [float(p) for p in phis],
        [m.overlap for m in mins],
        [m.direction.tolist() for m in mins],
    )


def _check_monotone(fn, lo: float, hi: float, points: int = 17) -> None:
    grid = np.linspace(lo, hi, points)
    vals = [fn(x) for x in grid]
    if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
        raise ArithmeticError(f"bisection target is not monotone on [{lo}, {hi}]: {vals}")


def _bisect_increasing(fn, target: float, lo: float, hi: float, tol: float = BISECT_TOL) -> float:
    """Smallest x in [lo, hi] with fn(x) >= target, for non-decreasing fn."""
    if fn(lo) >= target:
        return lo
    if fn(hi) < target:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def min_adv_distance(kernel: VicinityKernel, kappa: float, **kw) -> float:
    """Euclidean distance within which a probabilistically consistent input has no
    adversarial example: the inverse of the maximal mu-change at 1/2 - kappa."""
    kappa = check_kappa(kappa)
    hi = 2.0 * kernel.epsilon * math.sqrt(kernel.dim)
    fn = lambda phi: max_mu_change(kernel, phi, **kw)  # noqa: E731
    _check_monotone(fn, 0.0, hi)
    return _bisect_increasing(fn, 0.5 - kappa, 0.0, hi)


@dataclass(frozen=True)
class ShrinkSolution:
    radius: float  # shrunken vicinity radius, in the kernel's own norm
    separation: float  # kernel-norm distance between two consistent inputs of different labels
    direction: np.ndarray = field(repr=False)


def solve_shrink_numeric(kernel: VicinityKernel, kappa: float, **kw) -> ShrinkSolution:
    """Radius of the deterministically robust sub-vicinity at tolerance kappa.

    Two probabilistically consistent inputs with different labels need
    vicinities overlapping by at most 2*kappa. Shift lengths are measured in the
    kernel's own norm; the smallest such separation ``rho`` (worst direction)
    is found by bisection and the nearest adversarial example sits halfway,
    so the robust radius is ``rho / 2``. For L^inf the worst direction is a cube
    corner and this reproduces ``eps * (1 - (2 kappa)^(1/n))``.
    """
    kappa = check_kappa(kappa)
    hi = 2.0 * kernel.epsilon  # an axis shift of 2*eps separates the balls in every norm
    fn = lambda rho: 1.0 - min_overlap(kernel, rho, metric=kernel.p, **kw).overlap  # noqa: E731
    _check_monotone(fn, 0.0, hi)
    rho = _bisect_increasing(fn, 1.0 - 2.0 * kappa, 0.0, hi)
    d = min_overlap(kernel, rho, metric=kernel.p, **kw).direction
    return ShrinkSolution(rho / 2.0, rho, d)


def per_coordinate(distance: float, dim: int) -> float:
    """Per-axis extent of a diagonal Euclidean displacement (divide by sqrt(n))."""
    return distance / math.sqrt(dim)


def _projection_slopes(kernel: VicinityKernel, normal: np.ndarray, offsets: np.ndarray,
                       delta: float, pts: np.ndarray) -> np.ndarray:
    proj = pts @ normal
    proj.sort()
    cdf = lambda s: np.searchsorted(proj, s, side="right") / len(proj)  # noqa: E731
    # mu of the step classifier 1{x . normal >= 0} at x = s * normal is P(proj >= -s)
    return (cdf(offsets + delta) - cdf(offsets - delta)) / (2.0 * delta)


def directional_derivative_bound(kernel: VicinityKernel, resolution: int = 600,
                                 angles: int = 46) -> float:
    """Bound b with |grad mu_k . u| <= b for every classifier, point and unit u.

    In 1-D this is exactly 1/(2 eps). In 2-D it is found numerically as the
    steepest finite-difference slope of mu for half-plane (step) classifiers,
    over a grid of boundary orientations, with the kernel integrated by a
    ``resolution``^2 midpoint rule.
    """
    n = kernel.dim
    if n == 1:
        return 1.0 / (2.0 * kernel.epsilon)
    if n != 2:
        raise DimUnsupported(f"directional derivative bound implemented for n <= 2, got n={n}")
    eps = kernel.epsilon
    g = (np.arange(resolution) + 0.5) / resolution * 2.0 * eps - eps
    xx, yy = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    pts = pts[kernel.contains(pts)]
    delta = eps / 40.0
    offsets = np.linspace(-eps * math.sqrt(2), eps * math.sqrt(2), 401)
    best = 0.0
    for a in np.linspace(0.0, math.pi / 2, angles):
        normal = np.array([math.cos(a), math.sin(a)])
        best = max(best, float(_projection_slopes(kernel, normal, offsets, delta, pts).max()))
    return best
