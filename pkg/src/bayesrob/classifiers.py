"""Classifiers and the vicinity statistics mu_k.

Grid classifiers store one label per cell and answer off-grid queries by
clamping to the nearest cell. ``VotingClassifier`` wraps any classifier with
the Monte-Carlo majority vote over vicinity samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import ndimage

from .bayes import convolve
from .distributions import GridDistribution
from .errors import InvalidSpec, ModeUnsupported, check_kappa
from .kernels import VicinityKernel, discretize_stencil, sample_offset

EXACT = "exact_grid"
MONTE_CARLO = "monte_carlo"
MODES = (EXACT, MONTE_CARLO)

CLASSIFIER_FORMAT = "bayesrob.classifier"
CLASSIFIER_VERSION = 1

# offsets drawn per batch in bulk Monte-Carlo loops
_BATCH = 2_000_000


@dataclass(frozen=True, eq=False)
class GridClassifier:
    """Label per cell of a rectangular grid (``variant`` records its provenance)."""

    domain: tuple
    shape: tuple
    labels: np.ndarray
    num_classes: int
    variant: str = "grid"

    def __post_init__(self):
        labels = np.asarray(self.labels).astype(np.int64)
        shape = tuple(int(s) for s in self.shape)
        if labels.shape != shape:
            raise InvalidSpec(f"label grid {labels.shape} != shape {shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidSpec("labels outside 0..K-1")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "domain", tuple((float(a), float(b)) for a, b in self.domain))

    @cached_property
    def grid(self) -> GridDistribution:
        # geometry only; used for cell lookup
        return GridDistribution(self.domain, self.shape, np.zeros((2,) + self.shape))

    @property
    def dim(self) -> int:
        return len(self.shape)

    def on_grid_of(self, dist: GridDistribution) -> bool:
        return self.shape == dist.shape and np.allclose(self.domain, dist.domain, rtol=0, atol=1e-12)

    def predict_points(self, points) -> np.ndarray:
        return self.labels[self.grid.locate(points)]


@dataclass(frozen=True, eq=False)
class FunctionClassifier:
    """Arbitrary callable mapping an (N, n) array of points to N labels."""

    fn: Callable[[np.ndarray], np.ndarray]
    num_classes: int
    variant: str = "function"

    def predict_points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.fn(pts)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class VotingClassifier:
    """Majority vote of ``inner`` over ``m`` uniform vicinity samples."""

    inner: object
    kernel: VicinityKernel
    m: int
    seed: int = 0
    variant: str = "voting"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def num_classes(self) -> int:
        return self.inner.num_classes

    def predict_points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([vote(self.inner, self.kernel, x, self.m, self.seed) for x in pts])

    def materialize(self, like: GridDistribution) -> GridClassifier:
        """h-dagger evaluated at every cell centre of ``like``."""
        labels = vote_grid(self.inner, self.kernel, like, self.m, self.seed)
        return GridClassifier(like.domain, like.shape, labels, self.num_classes, "voting")


# ---------------------------------------------------------------------------
# Constructors


def grid_classifier(dist: GridDistribution, labels, variant: str = "grid") -> GridClassifier:
    return GridClassifier(dist.domain, dist.shape, labels, dist.num_classes, variant)


def constant_classifier(dist: GridDistribution, label: int) -> GridClassifier:
    return grid_classifier(dist, np.full(dist.shape, int(label)), "constant")


def bayes_classifier(dist: GridDistribution) -> GridClassifier:
    return grid_classifier(dist, dist.argmax_grid, "bayes")


def smoothed_bayes_classifier(dist: GridDistribution, kernel: VicinityKernel) -> GridClassifier:
    """Argmax posterior of D * v, restricted to the cells of D."""
    prime = convolve(dist, kernel)
    offset = [int(round((lo - plo) / h)) for (lo, _), (plo, _), h in
              zip(dist.domain, prime.domain, dist.cell_sizes)]
    sl = tuple(slice(o, o + n) for o, n in zip(offset, dist.shape))
    return grid_classifier(dist, prime.argmax_grid[sl], "smoothed_bayes")


def noisy_classifier(dist: GridDistribution, rho: float = 0.15, seed: int = 0) -> GridClassifier:
    """Bayes labels with each cell flipped to a uniformly chosen other class w.p. rho."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    base = dist.argmax_grid
    flip = rng.random(dist.shape) < rho
    shift = rng.integers(1, dist.num_classes, size=dist.shape)
    labels = np.where(flip, (base + shift) % dist.num_classes, base)
    return grid_classifier(dist, labels, "noisy")


# ---------------------------------------------------------------------------
# Persistence


def classifier_to_dict(clf: GridClassifier) -> dict:
    return {
        "format": CLASSIFIER_FORMAT,
        "version": CLASSIFIER_VERSION,
        "variant": clf.variant,
        "domain": [list(d) for d in clf.domain],
        "shape": list(clf.shape),
        "num_classes": clf.num_classes,
        "order": "row-major",
        "labels": clf.labels.ravel(order="C").tolist(),
    }


def classifier_from_dict(data: dict) -> GridClassifier:
    if data.get("format") != CLASSIFIER_FORMAT:
        raise InvalidSpec(f"not a {CLASSIFIER_FORMAT} document")
    if data.get("version") != CLASSIFIER_VERSION:
        raise InvalidSpec(f"unsupported classifier version {data.get('version')}")
    shape = tuple(data["shape"])
    labels = np.asarray(data["labels"], dtype=np.int64)
    if labels.size != int(np.prod(shape)):
        raise InvalidSpec("label array size does not match shape")
    return GridClassifier(data["domain"], shape, labels.reshape(shape),
                          int(data["num_classes"]), data.get("variant", "grid"))


def save_classifier(clf: GridClassifier, path) -> None:
    with open(path, "w") as fh:
        json.dump(classifier_to_dict(clf), fh)
        fh.write("\n")


def load_classifier(path) -> GridClassifier:
    with open(path) as fh:
        return classifier_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Prediction and mu


def predict(classifier, point) -> int:
    return int(classifier.predict_points(np.atleast_2d(np.asarray(point, dtype=float)))[0])


@dataclass(frozen=True)
class MuVector:
    values: np.ndarray
    mode: str
    m: int | None = None
    seed: int | None = None

    def __getitem__(self, k):
        return self.values[k]

    @property
    def stderr(self) -> np.ndarray:
        if self.mode != MONTE_CARLO:
            return np.zeros_like(self.values)
        v = self.values
        return np.sqrt(v * (1.0 - v) / self.m)

    def argmax(self) -> int:
        return int(np.argmax(self.values))


def _correlate_nearest(field_: np.ndarray, stencil) -> np.ndarray:
    if stencil.axis_weights is not None:
        out = field_
        for axis, w in enumerate(stencil.axis_weights):
            out = ndimage.correlate1d(out, w, axis=axis, mode="nearest")
        return out
    return ndimage.correlate(field_, stencil.weights, mode="nearest")


def mu_grid_raw(clf: GridClassifier, kernel: VicinityKernel) -> np.ndarray:
    """Stencil-weighted label frequencies at every cell, (K, *shape), unnormalised.

    Labels beyond the grid edge repeat the edge cell (clamping). A class absent
    from a cell's stencil support gets exactly 0.
    """
    stencil = discretize_stencil(kernel, tuple(
        (hi - lo) / n for (lo, hi), n in zip(clf.domain, clf.shape)))
    return np.stack([
        _correlate_nearest((clf.labels == k).astype(float), stencil)
        for k in range(clf.num_classes)
    ])


def mu_grid(clf: GridClassifier, kernel: VicinityKernel) -> np.ndarray:
    raw = mu_grid_raw(clf, kernel)
    return raw / raw.sum(axis=0, keepdims=True)


def disagreement_grid(clf: GridClassifier, kernel: VicinityKernel) -> np.ndarray:
    """1 - mu_{h(x)}(x) per cell, summed from the other classes so that a
    perfectly uniform neighbourhood gives exactly 0."""
    raw = mu_grid_raw(clf, kernel)
    own = np.take_along_axis(raw, clf.labels[None, ...], axis=0)[0]
    return (raw.sum(axis=0) - own) / raw.sum(axis=0)


def _require_grid(classifier, what: str) -> GridClassifier:
    if not isinstance(classifier, GridClassifier):
        raise ModeUnsupported(f"{what} needs a grid-backed classifier, got {classifier.variant}")
    return classifier


def mu(classifier, kernel: VicinityKernel, point, mode: str = EXACT,
       m: int = 1000, seed: int = 0) -> MuVector:
    """Probability that a vicinity neighbour of ``point`` is labelled k."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if mode == EXACT:
        clf = _require_grid(classifier, "exact_grid mu")
        idx = clf.grid.locate(point[None, :])
        vals = mu_grid(clf, kernel)[(slice(None),) + tuple(i[0] for i in idx)]
        return MuVector(np.asarray(vals), EXACT)
    if mode == MONTE_CARLO:
        rng = np.random.default_rng(seed)
        pts = point[None, :] + sample_offset(kernel, rng, size=m)
        labels = classifier.predict_points(pts)
        counts = np.bincount(labels, minlength=classifier.num_classes)
        return MuVector(counts / m, MONTE_CARLO, m, seed)
    raise ModeUnsupported(f"unknown mode {mode!r}")


def vote(classifier, kernel: VicinityKernel, point, m: int, seed: int) -> int:
    """argmax_k of the Monte-Carlo mu (ties to the lowest class)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return mu(classifier, kernel, point, MONTE_CARLO, m, seed).argmax()


def mc_counts_grid(classifier, kernel: VicinityKernel, like: GridDistribution,
                   m: int, seed: int) -> np.ndarray:
    """Neighbour label counts over ``m`` samples around every cell centre, (K, *shape).

    Cells are processed in fixed row-major batches, each with its own
    generator derived from (seed, batch index), so results do not depend on
    how the work is split.
    """
    centres = like.centers().reshape(-1, like.dim)
    n_cells = len(centres)
    K = classifier.num_classes
    counts = np.zeros((n_cells, K), dtype=np.int64)
    per = max(1, _BATCH // m)
    for b, start in enumerate(range(0, n_cells, per)):
        rng = np.random.default_rng([seed, b])
        c = centres[start:start + per]
        offs = sample_offset(kernel, rng, size=len(c) * m).reshape(len(c), m, like.dim)
        labels = classifier.predict_points((c[:, None, :] + offs).reshape(-1, like.dim))
        cell = np.repeat(np.arange(len(c)), m)
        counts[start:start + len(c)] = np.bincount(
            cell * K + labels, minlength=len(c) * K).reshape(len(c), K)
    return np.moveaxis(counts.reshape(like.shape + (K,)), -1, 0)


def vote_grid(classifier, kernel: VicinityKernel, like: GridDistribution, m: int, seed: int) -> np.ndarray:
    return np.argmax(mc_counts_grid(classifier, kernel, like, m, seed), axis=0)


def point_error(classifier, dist: GridDistribution, kernel: VicinityKernel, kappa: float,
                point, mode: str = EXACT, m: int = 1000, seed: int = 0,
                label: int | None = None, mu_vector: MuVector | None = None) -> tuple[float, int, float]:
    """(incorrectness, inconsistency, combined error) at ``point``.

    ``label`` overrides the classifier's own prediction (used to compare
    alternative labels under a fixed mu).
    """
    kappa = check_kappa(kappa)
    idx = tuple(i[0] for i in dist.locate(np.atleast_2d(point)))
    h = predict(classifier, point) if label is None else int(label)
    post = dist.posterior_grid[(slice(None),) + idx]
    e_cor = float(1.0 - post[h])
    muv = mu_vector if mu_vector is not None else mu(classifier, kernel, point, mode, m, seed)
    others = float(np.sum(np.delete(muv.values, h)))
    e_cns = int(others > kappa)
    e = 1.0 - (1.0 - e_cns) * (1.0 - e_cor)
    return e_cor, e_cns, e
