"""Uniform L^p vicinity kernels.

A vicinity of radius ``epsilon`` around ``x`` is the L^p ball
``{t : ||t - x||_p <= epsilon}``; the kernel is the uniform density on it.
Only ``p in {1, 2, inf}`` are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .errors import ResolutionTooCoarse, UnsupportedNorm, check_kappa

SUPPORTED_P = (1.0, 2.0, math.inf)

# p in {1, 2} stencils are supersampled, so they need this many cells per radius.
RESOLUTION_FLOOR = 5.0


def parse_p(value) -> float:
    """Accept 1, 2, 'inf', math.inf (and their string forms)."""
    if isinstance(value, str):
        value = value.strip().lower()
        if value in ("inf", "infinity", "linf"):
            return math.inf
        value = float(value)
    p = float(value)
    if p not in SUPPORTED_P:
        raise UnsupportedNorm(f"p={value!r}; supported: 1, 2, inf")
    return p


def format_p(p: float) -> str:
    return "inf" if math.isinf(p) else str(int(p))


def lp_norm(x: np.ndarray, p: float) -> np.ndarray:
    """Norm over the last axis."""
    x = np.abs(np.asarray(x, dtype=float))
    if math.isinf(p):
        return x.max(axis=-1)
    if p == 1.0:
        return x.sum(axis=-1)
    return np.sqrt((x * x).sum(axis=-1))


def kernel_volume(p: float, n: int, epsilon: float) -> float:
    """Volume of the L^p ball of radius epsilon in n dimensions."""
    p = parse_p(p)
    if math.isinf(p):
        return (2.0 * epsilon) ** n
    log_vol = n * (math.log(2.0 * epsilon) + gammaln(1.0 + 1.0 / p)) - gammaln(1.0 + n / p)
    return math.exp(log_vol)


@dataclass(frozen=True)
class VicinityKernel:
    p: float
    epsilon: float
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    @cached_property
    def volume(self) -> float:
        return kernel_volume(self.p, self.dim, self.epsilon)

    def contains(self, delta) -> np.ndarray:
        return lp_norm(delta, self.p) <= self.epsilon

    def describe(self) -> str:
        return f"L{format_p(self.p)}(eps={self.epsilon:g}, n={self.dim})"


def kernel_pdf(kernel: VicinityKernel, delta) -> np.ndarray | float:
    """1/volume inside the ball, 0 outside. Vectorised over leading axes."""
    delta = np.asarray(delta, dtype=float)
    if delta.ndim == 0:
        delta = delta.reshape(1)
    inside = kernel.contains(delta)
    out = np.where(inside, 1.0 / kernel.volume, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Stencil:
    """Grid realisation of a kernel: weights[idx] is the kernel mass of the cell
    at offset ``idx - radius`` from the centre cell."""

    weights: np.ndarray
    radius: tuple[int, ...]
    cell_sizes: tuple[float, ...]
    # per-axis factors when the stencil is separable (L^inf)
    axis_weights: tuple[np.ndarray, ...] | None = None

    @property
    def support(self) -> np.ndarray:
        return self.weights > 0

    def weight_at(self, offset) -> float:
        idx = tuple(int(o) + r for o, r in zip(offset, self.radius))
        if any(i < 0 or i >= s for i, s in zip(idx, self.weights.shape)):
            return 0.0
        return float(self.weights[idx])

    def as_dict(self) -> dict[tuple[int, ...], float]:
        out = {}
        for idx in zip(*np.nonzero(self.weights)):
            off = tuple(int(i) - r for i, r in zip(idx, self.radius))
            out[off] = float(self.weights[idx])
        return out


def _box_axis_weights(epsilon: float, h: float, shift: float = 0.0) -> np.ndarray:
    """Mass of [shift*h - eps, shift*h + eps] in each cell, normalised; centred array."""
    radius = max(1, math.ceil(epsilon / h + abs(shift)))
    j = np.arange(-radius, radius + 1, dtype=float)
    c = shift * h
    lo = np.maximum(j * h - h / 2, c - epsilon)
    hi = np.minimum(j * h + h / 2, c + epsilon)
    w = np.clip(hi - lo, 0.0, None) / (2.0 * epsilon)
    return w / w.sum()


def discretize_stencil(
    kernel: VicinityKernel,
    cell_sizes,
    subdivisions: int = 4,
    strict: bool = True,
    center=None,
) -> Stencil:
    """Kernel mass per grid cell.

    L^inf weights are exact box-box intersections (valid at any resolution).
    L^1 / L^2 weights count ``subdivisions**n`` subcell midpoints per cell and
    require every cell size to be at most ``epsilon / 5`` unless ``strict`` is off.

    ``center`` places the kernel at a sub-cell position (in cell units, each
    coordinate in [-1/2, 1/2]) instead of the centre of cell 0.
    """
    cell_sizes = tuple(float(h) for h in np.atleast_1d(cell_sizes))
    if len(cell_sizes) != kernel.dim:
        raise ValueError(f"{len(cell_sizes)} cell sizes for a {kernel.dim}-d kernel")
    eps = kernel.epsilon
    shift = (0.0,) * kernel.dim if center is None else tuple(float(c) for c in center)

    if math.isinf(kernel.p):
        axes = tuple(_box_axis_weights(eps, h, c) for h, c in zip(cell_sizes, shift))
        w = axes[0]
        for a in axes[1:]:
            w = np.multiply.outer(w, a)
        radius = tuple(len(a) // 2 for a in axes)
        return Stencil(np.asarray(w), radius, cell_sizes, axes)

    if strict and any(h > eps / RESOLUTION_FLOOR for h in cell_sizes):
        raise ResolutionTooCoarse(
            f"cell sizes {cell_sizes} exceed eps/{RESOLUTION_FLOOR:g}={eps / RESOLUTION_FLOOR:g} "
            f"for an L{format_p(kernel.p)} kernel"
        )
    radius = tuple(max(1, math.ceil(eps / h + abs(c))) for h, c in zip(cell_sizes, shift))
    s = int(subdivisions)
    sub = (np.arange(s) + 0.5) / s - 0.5  # subcell midpoints in cell units
    shape = tuple(2 * r + 1 for r in radius)
    grids = [
        ((np.arange(2 * r + 1) - r)[:, None] + sub[None, :]).ravel() * h
        for r, h in zip(radius, cell_sizes)
    ]
    mesh = np.meshgrid(*grids, indexing="ij")
    pts = np.stack(mesh, axis=-1) - np.asarray(shift) * np.asarray(cell_sizes)
    inside = kernel.contains(pts).astype(float)
    # fold the subcell axes back onto their parent cell
    fold_shape = []
    for r in radius:
        fold_shape.extend([2 * r + 1, s])
    inside = inside.reshape(fold_shape)
    counts = inside.sum(axis=tuple(range(1, 2 * kernel.dim, 2)))
    total = counts.sum()
    if total == 0:
        # ball smaller than one subcell: all mass in the cell holding its centre
        counts = np.zeros(shape)
        counts[tuple(r + int(round(c)) for r, c in zip(radius, shift))] = 1.0
        total = 1.0
    return Stencil(counts / total, radius, cell_sizes, None)


def sample_offset(kernel: VicinityKernel, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform samples from the L^p ball; shape (n,) or (size, n)."""
    n = kernel.dim
    m = 1 if size is None else int(size)
    eps = kernel.epsilon
    if math.isinf(kernel.p):
        out = rng.uniform(-eps, eps, size=(m, n))
    elif kernel.p == 2.0:
        g = rng.standard_normal((m, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = rng.random(m) ** (1.0 / n)
        out = g * (eps * r)[:, None]
    else:
        # n+1 exponentials: the first n normalised by the total are uniform on the simplex interior
        e = rng.exponential(size=(m, n + 1))
        signs = rng.choice(np.array([-1.0, 1.0]), size=(m, n))
        out = eps * signs * e[:, :n] / e.sum(axis=1, keepdims=True)
    return out[0] if size is None else out


def shrink_kernel(kernel: VicinityKernel, kappa: float) -> VicinityKernel:
    """Deterministically-robust sub-vicinity of an L^inf kernel at tolerance kappa."""
    kappa = check_kappa(kappa)
    if not math.isinf(kernel.p):
        raise UnsupportedNorm(
            "closed-form shrink exists only for p=inf; use geometry.solve_shrink_numeric"
        )
    eps = kernel.epsilon * (1.0 - (2.0 * kappa) ** (1.0 / kernel.dim))
    if eps <= 0:
        eps = np.nextafter(0.0, 1.0)
    return VicinityKernel(kernel.p, float(eps), kernel.dim)


def orthant_shell_bins(kernel: VicinityKernel, offsets: np.ndarray) -> np.ndarray:
    """Assign ball samples to equal-volume bins: sign orthant x inner/outer half-volume shell."""
    offsets = np.atleast_2d(offsets)
    n = kernel.dim
    orth = np.zeros(len(offsets), dtype=int)
    for i in range(n):
        orth = orth * 2 + (offsets[:, i] >= 0)
    inner = lp_norm(offsets, kernel.p) <= kernel.epsilon * 0.5 ** (1.0 / n)
    return orth * 2 + inner.astype(int)

