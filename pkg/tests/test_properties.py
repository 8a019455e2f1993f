import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from bayesrob.bayes import bayes_error, compute_bounds, convolve, harden, kappa_sweep
from bayesrob.classifiers import GridClassifier, mu_grid
from bayesrob.distributions import GridDistribution
from bayesrob.errors import MonotonicityViolation
from bayesrob.evaluation import det_robust_accuracy, prob_robust_accuracy, vanilla_accuracy
from bayesrob.kernels import VicinityKernel, discretize_stencil, shrink_kernel

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(0, 2 ** 32 - 1)
epsilons = st.floats(0.02, 0.3)


def random_dist(seed, n=60, classes=2):
    rng = np.random.default_rng(seed)
    dens = rng.gamma(0.5, size=(classes, n))
    dens /= dens.sum() / n
    return GridDistribution([(0.0, 1.0)], (n,), dens)


def smooth_dist(seed, n=3200):
    """Two Gaussian bumps of one shared scale on [0, 1], so the posterior crosses 1/2 once."""
    rng = np.random.default_rng(seed)
    x = (np.arange(n) + 0.5) / n
    sd = rng.uniform(0.1, 0.2)
    dens = np.array([np.exp(-0.5 * ((x - mu) / sd) ** 2) * rng.uniform(0.5, 1.5)
                     for mu in sorted(rng.uniform(0.3, 0.7, size=2))])
    dens /= dens.sum() / n
    return GridDistribution([(0.0, 1.0)], (n,), dens)


def random_labels(seed, n=60, classes=2, blocks=6):
    """Piecewise-constant labels: ``blocks`` runs of random classes."""
    rng = np.random.default_rng(seed)
    cuts = np.sort(rng.choice(np.arange(1, n), size=blocks - 1, replace=False))
    labels = np.repeat(rng.integers(classes, size=blocks), np.diff([0, *cuts, n]))
    return GridClassifier([(0.0, 1.0)], (n,), labels, classes)


@FAST
@given(seeds, st.floats(0.09, 0.3), st.sampled_from([1, 2, math.inf]))
def test_convolution_conserves_mass(seed, eps, p):
    d = random_dist(seed)
    assert math.isclose(convolve(d, VicinityKernel(p, eps, 1)).total_mass(), d.total_mass(), rel_tol=1e-9)


@FAST
@given(seeds, st.integers(2, 4))
def test_harden_idempotent_and_mass_preserving(seed, classes):
    d = random_dist(seed, classes=classes)
    once = harden(d)
    np.testing.assert_array_equal(harden(once).densities, once.densities)
    np.testing.assert_allclose(once.marginal_grid, d.marginal_grid, rtol=1e-12)
    assert np.all((once.densities > 0).sum(axis=0) <= 1)


@FAST
@given(seeds, st.integers(2, 4))
def test_posterior_sums_to_one(seed, classes):
    np.testing.assert_allclose(random_dist(seed, classes=classes).posterior_grid.sum(axis=0), 1.0, atol=1e-12)


@FAST
@given(st.floats(0.01, 1.0), st.floats(0.005, 0.2), st.integers(1, 3))
def test_box_stencil_sums_to_one(eps, h, dim):
    w = discretize_stencil(VicinityKernel(math.inf, eps, dim), [h] * dim).weights
    assert math.isclose(w.sum(), 1.0, rel_tol=1e-10)
    assert np.all(w >= 0)


@FAST
@given(st.floats(0.05, 1.0), st.sampled_from([1, 2]), st.floats(0.5, 0.95))
def test_supersampled_stencil_sums_to_one(eps, p, frac):
    h = eps / 5 * frac
    w = discretize_stencil(VicinityKernel(p, eps, 2), [h, h]).weights
    assert math.isclose(w.sum(), 1.0, rel_tol=1e-10)


@FAST
@given(st.floats(0.01, 1.0), st.integers(1, 6), st.floats(0.0, 0.49), st.floats(0.0, 0.49))
def test_shrink_decreases_with_kappa(eps, dim, k1, k2):
    lo, hi = sorted((k1, k2))
    k = VicinityKernel(math.inf, eps, dim)
    assert shrink_kernel(k, hi).epsilon <= shrink_kernel(k, lo).epsilon + 1e-15


@FAST
@given(seeds, seeds, epsilons)
def test_accuracy_ordering_and_kappa_monotone(dseed, cseed, eps):
    d = random_dist(dseed)
    clf = random_labels(cseed)
    k = VicinityKernel(math.inf, eps, 1)
    det = det_robust_accuracy(clf, d, k)
    probs = [prob_robust_accuracy(clf, d, k, kap).value for kap in (0.0, 0.1, 0.25, 0.4, 0.49)]
    assert det == probs[0]
    assert np.all(np.diff(probs) >= 0)
    assert probs[-1] <= vanilla_accuracy(clf, d) + 1e-12


@FAST
@given(seeds, epsilons)
def test_mu_slope_bounded(cseed, eps):
    # the neighbour share moves by at most 1/(2 eps) per unit shift, up to discretisation
    clf = random_labels(cseed, n=200)
    h = 1.0 / 200
    m = mu_grid(clf, VicinityKernel(math.inf, eps, 1))
    slope = np.abs(np.diff(m, axis=1)).max() / h
    assert slope <= 1 / (2 * eps) + 10 * h


@FAST
@given(seeds, st.floats(0.02, 0.15))
def test_bound_ordering(seed, eps):
    d = smooth_dist(seed)
    r = compute_bounds(d, VicinityKernel(math.inf, eps, 1), [0.0, 0.2, 0.45])
    assert r.prob_robust_errors[0] == r.det_robust_error
    assert r.bayes_error <= min(r.prob_robust_errors) + 1e-12
    assert max(r.prob_robust_errors) <= r.det_robust_error + 1e-12


@FAST
@given(seeds, st.floats(0.02, 0.15))
def test_prob_bound_monotone_in_kappa(seed, eps):
    d = smooth_dist(seed)
    out = kappa_sweep(d, VicinityKernel(math.inf, eps, 1), [0.0, 0.1, 0.2, 0.3, 0.4, 0.49])
    accs = [a for _, a in out]
    assert np.all(np.diff(accs) >= -1e-12)
    assert accs[-1] <= 1 - bayes_error(d) + 1e-12


def test_thin_spike_breaks_monotonicity():
    # a thin class-1 spike: the full kernel dilutes it below a majority, the shrunken one
    # keeps it, and K then charges a band around it
    n = 2000
    x = (np.arange(n) + 0.5) / n
    dens = np.array([np.ones(n), 0.7 + 3.1 * np.exp(-((x - 0.5) / 0.002) ** 2)])
    dens /= dens.sum() / n
    d = GridDistribution([(0.0, 1.0)], (n,), dens)
    r = compute_bounds(d, VicinityKernel(math.inf, 0.02, 1), [0.0, 0.1], check_monotone=False)
    assert r.prob_robust_errors[1] - r.prob_robust_errors[0] > 0.03


def test_rough_density_can_break_monotonicity():
    # a rough density: the full kernel blurs it into one class while the shrunken one
    # still sees alternating labels, so the computed bound rises with kappa
    d = random_dist(0)
    k = VicinityKernel(math.inf, 0.25, 1)
    r = compute_bounds(d, k, [0.2, 0.3], check_monotone=False)
    assert r.prob_robust_errors[1] > r.prob_robust_errors[0]
    with pytest.raises(MonotonicityViolation):
        compute_bounds(d, k, [0.2, 0.3])
