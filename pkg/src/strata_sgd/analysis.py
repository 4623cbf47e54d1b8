"""Exact and Monte Carlo estimator variance, and convergence-bound checks.

The variance of a minibatch gradient estimate ``g`` is ``E ||g - grad
P||_F^2``. For both samplers it has a closed form built from per-cluster
gradient scatter:

    stratified: V = (1/n^2) sum_i (n_i/b_i) SSE_i,
    uniform:    V = SSE_total / (b n),

where ``SSE_i`` is the squared Frobenius scatter of the example gradients
in cluster ``i`` around their mean. With one cluster the two formulas
coincide.

The bound checkers run the isotropic quadratic problem, whose constants
(``H``-strong convexity, per-example co-coercivity ``gamma = 1/H``) and
optimum are known exactly, and compare measured suboptimality against each
bound. Zero-variance configurations are checked deterministically; sampled
configurations average at least 100 seeded replicates and assert with a
four-standard-error cushion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .objective import (
    Model,
    QuadraticProblem,
    batch_gradient,
    full_gradient,
    per_cluster_gradient_sse,
)
from .sampling import draw_stratified, make_rng
from .strata import Allocation, Stratification, from_points


# ---------------------------------------------------------------------------
# exact variance


def _stratified_from_sse(sse, sizes, quotas, n: int) -> float:
    sse = np.asarray(sse, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    quotas = np.asarray(quotas, dtype=float)
    return float(np.sum(sizes / quotas * sse) / (n * n))


def exact_stratified_variance(
    model: Model, strat: Stratification, alloc: Allocation, dataset: Dataset
) -> float:
    """``E ||g - grad P||_F^2`` of the stratified estimator at ``model``."""
    if len(alloc.quotas) != strat.k:
        raise ValueError("allocation/stratification cluster count mismatch")
    sse = per_cluster_gradient_sse(model, dataset, strat.clusters)
    return _stratified_from_sse(sse, strat.sizes, alloc.quotas, strat.n)


def exact_uniform_variance(model: Model, dataset: Dataset, b: int) -> float:
    """``E ||g - grad P||_F^2`` of ``b`` uniform draws at ``model``.

    Computed as the one-stratum case of the stratified formula so the two
    agree bit-for-bit when a stratification has a single cluster.
    """
    if b < 1:
        raise ValueError("batch size must be >= 1")
    sse = per_cluster_gradient_sse(model, dataset, [np.arange(dataset.n)])
    return _stratified_from_sse(sse, [dataset.n], [b], dataset.n)


def quadratic_stratified_variance(
    problem: QuadraticProblem, clusters, quotas
) -> float:
    """Stratified-estimator variance on the quadratic problem (w-free)."""
    sse = problem.per_cluster_gradient_sse(clusters)
    sizes = [len(c) for c in clusters]
    return _stratified_from_sse(sse, sizes, quotas, problem.n)


def quadratic_uniform_variance(problem: QuadraticProblem, b: int) -> float:
    if b < 1:
        raise ValueError("batch size must be >= 1")
    sse = problem.per_cluster_gradient_sse([np.arange(problem.n)])
    return _stratified_from_sse(sse, [problem.n], [b], problem.n)


def empirical_variance(
    model: Model,
    dataset: Dataset,
    sampler,
    draws: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo ``E ||g - grad P||_F^2`` with its standard error.

    ``sampler`` is a closure ``rng -> Minibatch``; each draw's weighted
    gradient is compared against the exact full gradient at ``model``.
    """
    if draws < 2:
        raise ValueError("need at least 2 draws for a standard error")
    reference = full_gradient(model, dataset)
    vals = np.empty(draws)
    for i in range(draws):
        g = batch_gradient(model, dataset, sampler(rng))
        diff = g - reference
        vals[i] = float(np.sum(diff * diff))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(draws))
    return mean, se


# ---------------------------------------------------------------------------
# bound traces


@dataclass(frozen=True)
class BoundStep:
    """One checked prefix: measured quantity vs. the bound at step ``t``."""

    t: int
    measured: float
    bound: float
    stderr: float
    distance_sq: float
    passed: bool


@dataclass(frozen=True)
class BoundTrace:
    name: str
    constants: dict
    steps: tuple[BoundStep, ...]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.steps)


def _quadratic_replicates(
    problem: QuadraticProblem,
    clusters,
    quotas,
    etas: np.ndarray,
    replicates: int,
    base_seed: int,
) -> np.ndarray:
    """Suboptimality after steps 1..T for each replicate, shape (R, T)."""
    strat = from_points(problem.anchors, clusters)
    alloc = Allocation(tuple(int(q) for q in quotas), int(sum(quotas)))
    star = problem.optimum()
    p_star = problem.value(star)
    T = len(etas)
    out = np.empty((replicates, T))
    for r in range(replicates):
        rng = make_rng(base_seed + r)
        w = np.zeros(problem.dim)
        for t in range(T):
            mb = draw_stratified(strat, alloc, rng)
            w = w - etas[t] * problem.batch_gradient(w, mb.indices, mb.weights)
            out[r, t] = problem.value(w) - p_star
    return out


def check_lemma1(
    problem: QuadraticProblem,
    eta: float | None = None,
    T: int = 100,
    slack: float = 1e-10,
) -> BoundTrace:
    """Per-step descent inequality, deterministic zero-variance case.

    Each gradient-descent step with ``eta_t`` in ``(0, gamma]`` must obey

        P(w_{t+1}) - P* <= (1/2 eta_t)(||w_t - w*||^2 - ||w_{t+1} - w*||^2)
                           - (H/2)||w_t - w*||^2.
    """
    gamma = problem.gamma
    H = problem.strength
    if eta is None:
        eta = gamma
    if not (0 < eta <= gamma):
        raise ValueError(
            f"step size must satisfy η_t ∈ (0, γ]; got eta={eta}, γ={gamma}"
        )
    star = problem.optimum()
    p_star = problem.value(star)
    w = np.zeros(problem.dim)
    steps = []
    for t in range(1, T + 1):
        d_before = float(np.sum((w - star) ** 2))
        w = w - eta * problem.gradient(w)
        d_after = float(np.sum((w - star) ** 2))
        measured = problem.value(w) - p_star
        bound = (d_before - d_after) / (2 * eta) - 0.5 * H * d_before
        steps.append(
            BoundStep(t, measured, bound, 0.0, d_before, measured <= bound + slack)
        )
    return BoundTrace(
        "lemma1", {"H": H, "gamma": gamma, "eta": eta}, tuple(steps)
    )


def check_theorem1(
    problem: QuadraticProblem,
    a: float,
    T: int = 1000,
    clusters=None,
    quotas=None,
    replicates: int = 100,
    base_seed: int = 1,
    slack: float = 1e-12,
) -> BoundTrace:
    """Running-average suboptimality under ``eta_t = 1/(a + H t)``.

    Checks, for every prefix length ``T'`` up to ``T``,

        (1/T') sum_t [P(w_{t+1}) - P*] <= (1/T')[(a/2)||w*||^2
                                           + sum_t V_t/(a + H t)].

    With no clusters given the run is exact gradient descent (``V_t = 0``)
    and the inequality is asserted deterministically; otherwise it is
    asserted on a replicate average with a four-standard-error cushion.
    """
    gamma = problem.gamma
    H = problem.strength
    threshold = 1.0 / gamma - H
    if a < threshold:
        raise ValueError(
            f"schedule offset must satisfy a ≥ 1/γ − H = {threshold}; got a={a}"
        )
    etas = 1.0 / (a + H * np.arange(1, T + 1))
    star = problem.optimum()
    wstar_sq = float(np.sum(star * star))
    constants = {"H": H, "gamma": gamma, "a": a}

    if clusters is None:
        V = 0.0
        p_star = problem.value(star)
        w = np.zeros(problem.dim)
        subopt = np.empty(T)
        dist = np.empty(T)
        for t in range(T):
            dist[t] = float(np.sum((w - star) ** 2))
            w = w - etas[t] * problem.gradient(w)
            subopt[t] = problem.value(w) - p_star
        mean_sub = np.cumsum(subopt) / np.arange(1, T + 1)
        se = np.zeros(T)
    else:
        if replicates < 100:
            raise ValueError("sampled-mode checks need >= 100 replicates")
        V = quadratic_stratified_variance(problem, clusters, quotas)
        sub = _quadratic_replicates(
            problem, clusters, quotas, etas, replicates, base_seed
        )
        running = np.cumsum(sub, axis=1) / np.arange(1, T + 1)
        mean_sub = running.mean(axis=0)
        se = running.std(axis=0, ddof=1) / math.sqrt(replicates)
        dist = np.full(T, np.nan)
        constants["replicates"] = replicates

    variance_sum = np.cumsum(V * etas)
    bounds = (0.5 * a * wstar_sq + variance_sum) / np.arange(1, T + 1)
    steps = tuple(
        BoundStep(
            t + 1,
            float(mean_sub[t]),
            float(bounds[t]),
            float(se[t]),
            float(dist[t]),
            bool(mean_sub[t] <= bounds[t] + 4 * se[t] + slack),
        )
        for t in range(T)
    )
    constants["V"] = V
    return BoundTrace("theorem1", constants, steps)


def check_theorem2(
    problem: QuadraticProblem,
    eta: float,
    T: int = 100,
    clusters=None,
    quotas=None,
    replicates: int = 100,
    base_seed: int = 1,
    slack: float = 1e-12,
) -> BoundTrace:
    """Linear-rate bound under a constant admissible step size.

    Checks, for every horizon ``T'`` up to ``T``,

        E P(w_{T'+1}) - P* <= (α^{T'}/2γ)||w*||^2
                              + (η²/2γ) sum_t α^{T'-t} E V_t,

    with ``α = 1 − (2ηH/γ)/(H + 1/γ)``. Deterministic when no clusters are
    given (``V_t = 0``), replicate-averaged otherwise.
    """
    gamma = problem.gamma
    H = problem.strength
    limit = 2.0 / (H + 1.0 / gamma)
    if not (0 < eta <= limit):
        raise ValueError(
            f"step size must satisfy η ∈ (0, 2/(H+1/γ)] = (0, {limit}]; "
            f"got eta={eta}"
        )
    alpha = 1.0 - (2.0 * eta * H / gamma) / (H + 1.0 / gamma)
    alpha_floor = ((H - 1.0 / gamma) / (H + 1.0 / gamma)) ** 2
    if not (alpha_floor - 1e-12 <= alpha < 1.0):
        raise AssertionError(
            f"alpha={alpha} escaped [{alpha_floor}, 1): bad constants"
        )
    star = problem.optimum()
    wstar_sq = float(np.sum(star * star))
    constants = {"H": H, "gamma": gamma, "eta": eta, "alpha": alpha}

    if clusters is None:
        V = 0.0
        p_star = problem.value(star)
        w = np.zeros(problem.dim)
        mean_sub = np.empty(T)
        dist = np.empty(T)
        for t in range(T):
            dist[t] = float(np.sum((w - star) ** 2))
            w = w - eta * problem.gradient(w)
            mean_sub[t] = problem.value(w) - p_star
        se = np.zeros(T)
    else:
        if replicates < 100:
            raise ValueError("sampled-mode checks need >= 100 replicates")
        V = quadratic_stratified_variance(problem, clusters, quotas)
        sub = _quadratic_replicates(
            problem, clusters, quotas, np.full(T, eta), replicates, base_seed
        )
        mean_sub = sub.mean(axis=0)
        se = sub.std(axis=0, ddof=1) / math.sqrt(replicates)
        dist = np.full(T, np.nan)
        constants["replicates"] = replicates

    # sum_{t=1..T'} alpha^{T'-t} * V, accumulated as s' = alpha*s + V
    var_term = np.empty(T)
    acc = 0.0
    for t in range(T):
        acc = alpha * acc + V
        var_term[t] = acc
    powers = alpha ** np.arange(1, T + 1)
    bounds = powers / (2 * gamma) * wstar_sq + (eta * eta) / (2 * gamma) * var_term
    steps = tuple(
        BoundStep(
            t + 1,
            float(mean_sub[t]),
            float(bounds[t]),
            float(se[t]),
            float(dist[t]),
            bool(mean_sub[t] <= bounds[t] + 4 * se[t] + slack),
        )
        for t in range(T)
    )
    constants["V"] = V
    return BoundTrace("theorem2", constants, steps)


def check_lemma2(
    problem: QuadraticProblem,
    n_pairs: int = 100,
    seed: int = 0,
    scale: float = 10.0,
) -> np.ndarray:
    """Margins of the strong-convexity/smoothness inner-product bound.

    For random pairs ``u, v`` returns

        <grad P(u) - grad P(v), u - v>
        - (Hγ⁻¹)/(H + 1/γ) ||u - v||² - (1/(H + 1/γ)) ||grad P(u) - grad P(v)||²

    which the bound requires to be >= 0 (up to roundoff).
    """
    rng = make_rng(seed)
    H = problem.strength
    gamma = problem.gamma
    c1 = (H / gamma) / (H + 1.0 / gamma)
    c2 = 1.0 / (H + 1.0 / gamma)
    margins = np.empty(n_pairs)
    for i in range(n_pairs):
        u = rng.normal(size=problem.dim) * scale
        v = rng.normal(size=problem.dim) * scale
        gu = problem.gradient(u)
        gv = problem.gradient(v)
        duv = u - v
        dg = gu - gv
        margins[i] = (
            float(dg @ duv)
            - c1 * float(duv @ duv)
            - c2 * float(dg @ dg)
        )
    return margins


def check_property1(
    problem: QuadraticProblem,
    n_pairs: int = 100,
    seed: int = 0,
    scale: float = 10.0,
) -> np.ndarray:
    """Margins of per-example co-coercivity.

    For random pairs ``u, v`` and a random example index ``i`` returns

        <grad φ_i(u) - grad φ_i(v), u - v> - γ ||grad φ_i(u) - grad φ_i(v)||²

    which convex ``(1/γ)``-smooth losses keep >= 0.
    """
    rng = make_rng(seed)
    gamma = problem.gamma
    margins = np.empty(n_pairs)
    for j in range(n_pairs):
        u = rng.normal(size=problem.dim) * scale
        v = rng.normal(size=problem.dim) * scale
        i = int(rng.integers(problem.n))
        dg = problem.example_gradient(i, u) - problem.example_gradient(i, v)
        margins[j] = float(dg @ (u - v)) - gamma * float(dg @ dg)
    return margins
