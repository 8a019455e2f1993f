"""Accuracy of classifiers under the three robustness notions.

All accuracies weight cells by distribution mass (no test-set sampling):

    vanilla   sum_x p(x, h(x)) dV
    det       same, counting x only if every neighbour with positive kernel
              mass shares h(x)
    prob      same, counting x only if the neighbour disagreement 1 - mu_{h(x)}
              is at most kappa
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .classifiers import (
    EXACT,
    MONTE_CARLO,
    GridClassifier,
    VotingClassifier,
    disagreement_grid,
    mc_counts_grid,
)
from .distributions import GridDistribution
from .errors import ModeUnsupported, check_kappa
from .kernels import VicinityKernel, format_p


def grid_labels(classifier, dist: GridDistribution) -> GridClassifier:
    """The classifier realised on the cells of ``dist``.

    Voting classifiers are materialised (one vote per cell centre); grid
    classifiers on a different grid are resampled at the cell centres.
    """
    if isinstance(classifier, GridClassifier):
        if classifier.on_grid_of(dist):
            return classifier
        labels = classifier.predict_points(dist.centers().reshape(-1, dist.dim))
        return GridClassifier(dist.domain, dist.shape, labels.reshape(dist.shape),
                              classifier.num_classes, classifier.variant)
    if isinstance(classifier, VotingClassifier):
        return classifier.materialize(dist)
    raise ModeUnsupported(f"{classifier.variant} classifier has no grid realisation")


def _correct_mass(clf: GridClassifier, dist: GridDistribution) -> np.ndarray:
    return np.take_along_axis(dist.densities, clf.labels[None, ...], axis=0)[0] * dist.cell_volume


def vanilla_accuracy(classifier, dist: GridDistribution) -> float:
    if isinstance(classifier, GridClassifier) or isinstance(classifier, VotingClassifier):
        clf = grid_labels(classifier, dist)
        return float(_correct_mass(clf, dist).sum())
    labels = classifier.predict_points(dist.centers().reshape(-1, dist.dim)).reshape(dist.shape)
    mass = np.take_along_axis(dist.densities, labels[None, ...], axis=0)[0]
    return float(mass.sum() * dist.cell_volume)


def det_robust_accuracy(classifier, dist: GridDistribution, kernel: VicinityKernel) -> float:
    """Exhaustive over the stencil support; sampling could never certify the 'for all'."""
    clf = grid_labels(classifier, dist)
    consistent = disagreement_grid(clf, kernel) == 0.0
    return float(_correct_mass(clf, dist)[consistent].sum())


@dataclass(frozen=True)
class ProbAccuracy:
    value: float
    stderr: float = 0.0


def _decision_stderr(mu_hat: np.ndarray, m: int, kappa: float, weights: np.ndarray) -> float:
    """Binomial uncertainty of each cell's pass/fail decision, aggregated over cells."""
    need = math.ceil((1.0 - kappa) * m - 1e-9)
    q = stats.binom.sf(need - 1, m, mu_hat)  # plug-in P(count >= need)
    return float(np.sqrt(np.sum(weights ** 2 * q * (1.0 - q))))


def prob_robust_accuracy(classifier, dist: GridDistribution, kernel: VicinityKernel, kappa: float,
                         mode: str = EXACT, m: int = 100, seed: int = 0) -> ProbAccuracy:
    kappa = check_kappa(kappa)
    if mode == EXACT:
        clf = grid_labels(classifier, dist)
        consistent = disagreement_grid(clf, kernel) <= kappa
        return ProbAccuracy(float(_correct_mass(clf, dist)[consistent].sum()), 0.0)
    if mode != MONTE_CARLO:
        raise ModeUnsupported(f"unknown mode {mode!r}")
    if isinstance(classifier, GridClassifier) or isinstance(classifier, VotingClassifier):
        clf = grid_labels(classifier, dist)
        labels = clf.labels
    else:
        clf = classifier
        labels = classifier.predict_points(dist.centers().reshape(-1, dist.dim)).reshape(dist.shape)
    counts = mc_counts_grid(clf, kernel, dist, m, seed)
    own = np.take_along_axis(counts, labels[None, ...], axis=0)[0]
    mu_hat = own / m
    consistent = (m - own) <= kappa * m
    w = np.take_along_axis(dist.densities, labels[None, ...], axis=0)[0] * dist.cell_volume
    return ProbAccuracy(float(w[consistent].sum()), _decision_stderr(mu_hat, m, kappa, w))


@dataclass
class RobustnessReport:
    classifier: str
    vanilla_acc: float
    det_robust_acc: float
    prob_robust_acc: float
    kappa: float
    epsilon: float
    p: str
    mode: str
    m: int | None = None
    seed: int | None = None
    prob_stderr: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(classifier, dist: GridDistribution, kernel: VicinityKernel, kappa: float,
             mode: str = EXACT, m: int = 100, seed: int = 0) -> RobustnessReport:
    clf = grid_labels(classifier, dist)
    prob = prob_robust_accuracy(clf, dist, kernel, kappa, mode, m, seed)
    mc = mode == MONTE_CARLO
    return RobustnessReport(
        classifier=classifier.variant,
        vanilla_acc=vanilla_accuracy(clf, dist),
        det_robust_acc=det_robust_accuracy(clf, dist, kernel),
        prob_robust_acc=prob.value,
        kappa=kappa,
        epsilon=kernel.epsilon,
        p=format_p(kernel.p),
        mode=mode,
        m=m if mc else None,
        seed=seed if mc else None,
        prob_stderr=prob.stderr,
    )


def seed_interval(values, level: float = 0.95) -> tuple[float, float]:
    """Student-t interval for the mean over seed repetitions."""
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if len(v) < 2:
        return mean, mean
    half = stats.t.ppf(0.5 + level / 2, len(v) - 1) * v.std(ddof=1) / math.sqrt(len(v))
    return mean - float(half), mean + float(half)


@dataclass
class VotingComparison:
    kappa: float
    m: int
    seeds: list
    inner_acc: float
    voting_accs: list
    deltas: list = field(init=False)

    def __post_init__(self):
        self.deltas = [a - self.inner_acc for a in self.voting_accs]

    @property
    def mean_delta(self) -> float:
        return float(np.mean(self.deltas))

    @property
    def interval(self) -> tuple[float, float]:
        return seed_interval(self.deltas)

    def rows(self):
        for s, a, d in zip(self.seeds, self.voting_accs, self.deltas):
            yield s, self.inner_acc, a, d

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_delta"] = self.mean_delta
        d["interval95"] = list(self.interval)
        return d


def compare_voting(inner, dist: GridDistribution, kernel: VicinityKernel, kappa: float,
                   m: int, seeds) -> VotingComparison:
    """Probabilistic-robust accuracy of ``inner`` against its voting wrapper, per seed.

    Both are scored in exact mode on the grid; the wrapper's own randomness
    (its neighbour samples) is what the seeds vary.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    kappa = check_kappa(kappa)
    inner_grid = grid_labels(inner, dist)
    base = prob_robust_accuracy(inner_grid, dist, kernel, kappa).value
    accs = []
    for s in seeds:
        h_dag = VotingClassifier(inner_grid, kernel, m, s).materialize(dist)
        accs.append(prob_robust_accuracy(h_dag, dist, kernel, kappa).value)
    return VotingComparison(kappa, m, seeds, base, accs)


@dataclass
class SampleSizeRow:
    m: int
    mean: float
    std: float
    trials: int


def sample_size_study(inner, dist: GridDistribution, kernel: VicinityKernel, kappa: float,
                      m_list, trials: int, base_seed: int = 0) -> list[SampleSizeRow]:
    """Mean and spread of the voting wrapper's probabilistic-robust accuracy per m."""
    m_list = [int(m) for m in m_list]
    if any(b < a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("m_list must be ascending")
    kappa = check_kappa(kappa)
    inner_grid = grid_labels(inner, dist)
    rows = []
    for m in m_list:
        accs = [
            prob_robust_accuracy(
                VotingClassifier(inner_grid, kernel, m, base_seed + t).materialize(dist),
                dist, kernel, kappa,
            ).value
            for t in range(trials)
        ]
        std = float(np.std(accs, ddof=1)) if trials > 1 else 0.0
        rows.append(SampleSizeRow(m, float(np.mean(accs)), std, trials))
    return rows


def dumps(obj) -> str:
    return json.dumps(obj.to_dict() if hasattr(obj, "to_dict") else obj, indent=2)
