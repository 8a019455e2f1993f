"""Irreducible-error bounds on a grid.

``bayes_error``                 vanilla accuracy bound b_a (error form)
``det_robust_bayes_error``      deterministic-robust bound b_d for a vicinity
``prob_robust_upper_bound``     probabilistic-robust bound b_p(kappa): the
                                deterministic bound of the shrunken vicinity
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage, signal

from .distributions import GridDistribution
from .errors import InvalidSpec, MonotonicityViolation, UnsupportedNorm, check_kappa
from .kernels import VicinityKernel, discretize_stencil, format_p, shrink_kernel

DEFAULT_TAU = 1e-6
TAU_SENSITIVITY = (1e-9, 1e-6, 1e-3)
REPORT_FORMAT = "bayesrob.bounds"
REPORT_VERSION = 1
# summation-order rounding between kernels of different size; far below any grid effect
MONOTONE_SLACK = 1e-12


def bayes_error(dist: GridDistribution) -> float:
    """Sum over cells of (1 - max posterior) * marginal * cell volume."""
    dens = dist.densities
    per_cell = dist.marginal_grid - dens.max(axis=0)
    return float(per_cell.sum() * dist.cell_volume)


def convolve(dist: GridDistribution, kernel: VicinityKernel, strict: bool = True) -> GridDistribution:
    """D * v: every class density convolved with the kernel stencil.

    The output grid is padded by the stencil radius on each side (zero-extended
    input), so no mass leaves the grid.
    """
    if kernel.dim != dist.dim:
        raise ValueError(f"{kernel.dim}-d kernel on a {dist.dim}-d distribution")
    stencil = discretize_stencil(kernel, dist.cell_sizes, strict=strict)
    pad = stencil.radius
    dens = dist.densities
    if stencil.axis_weights is not None:
        out = np.pad(dens, [(0, 0)] + [(r, r) for r in pad])
        for axis, w in enumerate(stencil.axis_weights):
            out = ndimage.convolve1d(out, w, axis=axis + 1, mode="constant", cval=0.0)
    else:
        out = np.stack([_fft_full(d, stencil.weights) for d in dens])
    # rounding in the stencil sums can leave -0.0 / 1e-300 noise; densities are non-negative
    np.maximum(out, 0.0, out=out)
    domain = tuple(
        (lo - r * h, hi + r * h) for (lo, hi), r, h in zip(dist.domain, pad, dist.cell_sizes)
    )
    return GridDistribution(domain, out.shape[1:], out)


# FFT round-off floor, relative to the largest value of a convolution
_FFT_FLOOR = 1e-13


def _fft_full(field_: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = signal.fftconvolve(field_, weights, mode="full")
    out[np.abs(out) < _FFT_FLOOR * max(np.abs(out).max(), 1e-300)] = 0.0
    return out


def harden(dist: GridDistribution) -> GridDistribution:
    """Reassign each cell's marginal mass to its argmax class (ties to the lowest index)."""
    K = dist.num_classes
    onehot = dist.argmax_grid[None, ...] == np.arange(K).reshape((K,) + (1,) * dist.dim)
    return dist.with_densities(onehot * dist.marginal_grid[None, ...])


@dataclass(frozen=True, eq=False)
class BoundaryMask:
    """K on the grid of D'.

    ``mask`` is the centre-point test; ``fraction`` is the share of each cell's
    volume in K, integrated over ``subsamples**n`` sub-cell points. K's
    indicator is discontinuous, so bound sums use ``fraction``.
    """

    mask: np.ndarray
    fraction: np.ndarray
    tau: float

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def _correlate(dens: np.ndarray, stencil) -> np.ndarray:
    """sum_j dens[c + j] * w[j] for every cell c, zero outside the grid."""
    out = dens
    if stencil.axis_weights is not None:
        for axis, w in enumerate(stencil.axis_weights):
            out = ndimage.correlate1d(out, w, axis=axis, mode="constant", cval=0.0)
        return out
    flipped = stencil.weights[(slice(None, None, -1),) * stencil.weights.ndim]
    full = _fft_full(dens, flipped)
    return full[tuple(slice(r, r + n) for r, n in zip(stencil.radius, dens.shape))]


def _not_one_hot(dens: np.ndarray, tau: float) -> np.ndarray:
    marg = dens.sum(axis=0)
    top = dens.max(axis=0)
    pos = marg > 0
    maxpost = np.divide(top, marg, out=np.ones_like(marg), where=pos)
    return pos & (maxpost < 1.0 - tau)


K_SUBSAMPLES = 4


def boundary_region(
    dist_prime: GridDistribution,
    kernel: VicinityKernel,
    tau: float = DEFAULT_TAU,
    strict: bool = True,
    subsamples: int = K_SUBSAMPLES,
) -> BoundaryMask:
    """Cells of D' where D-dagger (the hardened D' convolved again) is not one-hot.

    D-dagger is evaluated exactly at each sub-cell point through a stencil
    centred on that point. Points with zero D-dagger marginal carry no mass and
    are never in K.
    """
    hard = harden(dist_prime).densities
    K = hard.shape[0]
    centre = discretize_stencil(kernel, dist_prime.cell_sizes, strict=strict)
    mask = _not_one_hot(np.stack([_correlate(hard[k], centre) for k in range(K)]), tau)

    s = int(subsamples)
    offs = (np.arange(s) + 0.5) / s - 0.5
    frac = np.zeros(dist_prime.shape)
    for shift in itertools.product(offs, repeat=dist_prime.dim):
        st = discretize_stencil(kernel, dist_prime.cell_sizes, strict=strict, center=shift)
        dag = np.stack([_correlate(hard[k], st) for k in range(K)])
        frac += _not_one_hot(dag, tau)
    frac /= s ** dist_prime.dim
    return BoundaryMask(mask, frac, float(tau))


@dataclass(frozen=True)
class DetRobustBreakdown:
    error: float
    convolved_bayes_error: float
    boundary_mass: float  # max-class mass of D' inside K
    boundary_cells: int


def det_robust_breakdown(
    dist: GridDistribution,
    kernel: VicinityKernel,
    tau: float = DEFAULT_TAU,
    strict: bool = True,
    subsamples: int = K_SUBSAMPLES,
) -> DetRobustBreakdown:
    prime = convolve(dist, kernel, strict=strict)
    K = boundary_region(prime, kernel, tau, strict=strict, subsamples=subsamples)
    marg = prime.marginal_grid
    top = prime.densities.max(axis=0)
    vol = prime.cell_volume
    base = float((marg - top).sum() * vol)
    extra = float((top * K.fraction).sum() * vol)
    return DetRobustBreakdown(base + extra, base, extra, K.count)


def det_robust_bayes_error(
    dist: GridDistribution,
    kernel: VicinityKernel,
    tau: float = DEFAULT_TAU,
    strict: bool = True,
    subsamples: int = K_SUBSAMPLES,
) -> float:
    """Deterministic-robust Bayes error: E_{D'}[1 - max posterior * 1(x not in K)]."""
    return det_robust_breakdown(dist, kernel, tau, strict, subsamples).error


def shrunken_kernel(kernel: VicinityKernel, kappa: float, numeric: bool = True) -> VicinityKernel:
    """Vicinity inside which probabilistically consistent inputs are deterministically robust."""
    kappa = check_kappa(kappa)
    if math.isinf(kernel.p):
        return shrink_kernel(kernel, kappa)
    if not numeric:
        raise UnsupportedNorm(f"no closed-form shrink for p={format_p(kernel.p)}")
    from .geometry import solve_shrink_numeric

    radius = solve_shrink_numeric(kernel, kappa).radius
    return VicinityKernel(kernel.p, max(radius, np.nextafter(0.0, 1.0)), kernel.dim)


@dataclass(frozen=True)
class ProbBound:
    kappa: float
    shrunk_epsilon: float
    error: float

    @property
    def accuracy(self) -> float:
        return 1.0 - self.error


def prob_robust_upper_bound(
    dist: GridDistribution,
    kernel: VicinityKernel,
    kappa: float,
    tau: float = DEFAULT_TAU,
    shrunk_radius: float | None = None,
    numeric: bool = True,
) -> ProbBound:
    kappa = check_kappa(kappa)
    if shrunk_radius is not None:
        small = VicinityKernel(kernel.p, shrunk_radius, kernel.dim)
    else:
        small = shrunken_kernel(kernel, kappa, numeric=numeric)
    # supersampled stencils below the resolution floor are still the best grid estimate here
    err = det_robust_bayes_error(dist, small, tau, strict=math.isinf(kernel.p))
    return ProbBound(kappa, small.epsilon, err)


def kappa_sweep(
    dist: GridDistribution,
    kernel: VicinityKernel,
    kappas,
    tau: float = DEFAULT_TAU,
) -> list[tuple[float, float]]:
    """(kappa, accuracy bound) pairs; raises if the bound ever decreases."""
    kappas = [check_kappa(k) for k in kappas]
    if any(b < a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappas must be ascending")
    out = [(k, prob_robust_upper_bound(dist, kernel, k, tau).accuracy) for k in kappas]
    for (k1, a1), (k2, a2) in zip(out, out[1:]):
        if a2 < a1 - MONOTONE_SLACK:
            raise MonotonicityViolation(
                f"accuracy bound drops from {a1:.10f} at kappa={k1} to {a2:.10f} at kappa={k2}",
                (k1, k2),
            )
    return out


@dataclass
class BoundsReport:
    p: str
    epsilon: float
    tau: float
    grid_shape: list
    bayes_error: float
    det_robust_error: float
    kappas: list = field(default_factory=list)
    prob_robust_errors: list = field(default_factory=list)
    shrunk_epsilons: list = field(default_factory=list)

    @property
    def vanilla_acc_bound(self) -> float:
        return 1.0 - self.bayes_error

    @property
    def det_acc_bound(self) -> float:
        return 1.0 - self.det_robust_error

    @property
    def prob_acc_bounds(self) -> list[float]:
        return [1.0 - e for e in self.prob_robust_errors]

    def ordering_violations(self) -> list[float]:
        """Kappas where b_a <= b_p <= b_d fails."""
        return [
            k
            for k, e in zip(self.kappas, self.prob_robust_errors)
            if not (self.bayes_error - MONOTONE_SLACK <= e <= self.det_robust_error + MONOTONE_SLACK)
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["acc_bounds"] = {
            "vanilla": self.vanilla_acc_bound,
            "det_robust": self.det_acc_bound,
            "prob_robust": self.prob_acc_bounds,
        }
        return {"format": REPORT_FORMAT, "version": REPORT_VERSION, **d}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "BoundsReport":
        if data.get("format") != REPORT_FORMAT:
            raise InvalidSpec(f"not a {REPORT_FORMAT} document")
        if data.get("version") != REPORT_VERSION:
            raise InvalidSpec(f"unsupported report version {data.get('version')}")
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in keys})


def compute_bounds(
    dist: GridDistribution,
    kernel: VicinityKernel,
    kappas=(),
    tau: float = DEFAULT_TAU,
    check_monotone: bool = True,
) -> BoundsReport:
    kappas = [check_kappa(k) for k in kappas]
    b_a = bayes_error(dist)
    b_d = det_robust_bayes_error(dist, kernel, tau)
    entries = [prob_robust_upper_bound(dist, kernel, k, tau) for k in kappas]
    if check_monotone:
        order = np.argsort(kappas, kind="stable")
        for i, j in zip(order, order[1:]):
            if entries[j].error > entries[i].error + MONOTONE_SLACK:
                raise MonotonicityViolation(
                    f"b_p rises from {entries[i].error:.10f} (kappa={kappas[i]}) "
                    f"to {entries[j].error:.10f} (kappa={kappas[j]})",
                    (kappas[i], kappas[j]),
                )
    return BoundsReport(
        p=format_p(kernel.p),
        epsilon=kernel.epsilon,
        tau=tau,
        grid_shape=list(dist.shape),
        bayes_error=b_a,
        det_robust_error=b_d,
        kappas=kappas,
        prob_robust_errors=[e.error for e in entries],
        shrunk_epsilons=[e.shrunk_epsilon for e in entries],
    )
