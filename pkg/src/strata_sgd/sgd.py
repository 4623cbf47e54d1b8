"""The weighted-minibatch SGD loop with per-epoch metric capture.

Every step evaluates all drawn gradients at the pre-step iterate and
applies ``W' = W - eta_t * sum_s w_s grad phi_s(W)``; the minibatch's
importance weights make the update direction an unbiased estimate of the
full gradient under either sampler. Iterates start at zero. An epoch is
``steps * b / n`` (metrics are recorded whenever that crosses an integer),
and runs abort loudly when the objective blows past 1000x its initial
value or an iterate stops being finite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import analysis
from .data import Dataset
from .objective import (
    Model,
    QuadraticProblem,
    full_objective,
    test_error as _test_error,
    zero_model,
)
from .sampling import Minibatch, draw_stratified, draw_uniform, make_rng
from .strata import Allocation, Stratification

DIVERGENCE_FACTOR = 1e3


# ---------------------------------------------------------------------------
# step-size schedules


@dataclass(frozen=True)
class InverseLambdaT:
    """``eta_t = 1/(lam * t)``, the schedule used for the benchmark runs."""

    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError("lam must be positive")

    def eta(self, t: int) -> float:
        return 1.0 / (self.lam * t)


@dataclass(frozen=True)
class InverseAPlusHt:
    """``eta_t = 1/(a + H*t)``. ``a = 0`` is legal (then ``eta_1 = 1/H``)."""

    a: float
    H: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a >= 0):
            raise ValueError("a must be >= 0")
        if not (np.isfinite(self.H) and self.H > 0):
            raise ValueError("H must be positive")

    def eta(self, t: int) -> float:
        return 1.0 / (self.a + self.H * t)


@dataclass(frozen=True)
class Constant:
    eta0: float

    def __post_init__(self):
        if not (np.isfinite(self.eta0) and self.eta0 > 0):
            raise ValueError("eta0 must be positive")

    def eta(self, t: int) -> float:
        return self.eta0


# ---------------------------------------------------------------------------
# run configuration and results


@dataclass(frozen=True)
class RunConfig:
    """What a single training run looks like, minus the data itself."""

    sampler: str
    b: int
    schedule: object
    epochs: int
    seed: int
    cadence: int = 1

    def __post_init__(self):
        if self.sampler not in ("uniform", "stratified"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.b < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    objective: float
    test_error: float
    variance: float
    wall_ms: float


@dataclass(frozen=True)
class RunMetrics:
    seed: int
    sampler: str
    records: tuple[EpochRecord, ...]
    steps: int
    snapshots: tuple[np.ndarray, ...] = ()

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective


class DivergenceError(RuntimeError):
    """A run blew up: non-finite iterate or objective past the guard."""

    def __init__(self, message: str, seed: int, step: int):
        super().__init__(message)
        self.seed = seed
        self.step = step


# ---------------------------------------------------------------------------
# the update


def _step_weights(
    W: np.ndarray, lam: float, dataset: Dataset, batch: Minibatch, eta: float
) -> np.ndarray:
    """One update on raw weights; shared by :func:`sgd_step` and :func:`run`."""
    idx = np.asarray(batch.indices, dtype=np.int64)
    w = np.asarray(batch.weights, dtype=float)
    Xb = dataset.X[idx]
    scores = np.asarray(Xb @ W.T)
    shifted = scores - scores.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    A = shifted / shifted.sum(axis=1, keepdims=True)
    A[np.arange(len(idx)), dataset.y[idx]] -= 1.0
    G = np.asarray(Xb.T @ (A * w[:, None])).T + float(w.sum()) * lam * W
    with np.errstate(over="ignore", invalid="ignore"):
        # deliberate: an overflowing update becomes inf/nan and is caught by
        # the callers' finiteness guard rather than a warning here
        return W - eta * G


def sgd_step(model: Model, batch: Minibatch, eta: float, dataset: Dataset) -> Model:
    """One weighted-minibatch step, returning the next model.

    Raises :class:`DivergenceError` if the update produces a non-finite
    weight.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    W = _step_weights(model.weights, model.lam, dataset, batch, eta)
    if not np.all(np.isfinite(W)):
        raise DivergenceError("non-finite iterate after step", seed=-1, step=-1)
    return Model(W, model.lam)


# ---------------------------------------------------------------------------
# the loop


def _epoch_boundaries(epochs: int, n: int, b: int, cadence: int):
    """Map step index -> epochs recorded there; epoch e ends at ceil(e*n/b)."""
    recorded = [
        e for e in range(epochs + 1) if e % cadence == 0 or e == epochs
    ]
    mapping: dict[int, list[int]] = {}
    for e in recorded:
        if e == 0:
            continue
        t = math.ceil(e * n / b)
        mapping.setdefault(t, []).append(e)
    return mapping


def run(
    config: RunConfig,
    dataset: Dataset | None = None,
    test: Dataset | None = None,
    strat: Stratification | None = None,
    alloc: Allocation | None = None,
    *,
    lam: float = 0.0,
    problem: QuadraticProblem | None = None,
    timing: bool = True,
    keep_snapshots: bool = False,
) -> RunMetrics:
    """Train for ``config.epochs`` epochs and record metrics at boundaries.

    Two problem families share this loop: the softmax objective on a
    ``dataset`` (regularized by ``lam``), or a :class:`QuadraticProblem`
    passed via ``problem``. Stratified runs need ``strat`` and ``alloc``.

    At each recorded epoch boundary the metrics are the full objective,
    test error (NaN without a test set), the exact variance of the
    configured estimator at the current iterate, and cumulative training
    wall time in ms (exactly 0.0 when ``timing`` is off, keeping output
    files reproducible byte for byte). Metric evaluation itself is not
    counted as training time.

    Raises
    ------
    DivergenceError
        On a non-finite iterate (checked every step) or when the objective
        exceeds 1000x its initial value (checked at boundaries).
    """
    if (dataset is None) == (problem is None):
        raise ValueError("pass exactly one of dataset or problem")
    n = dataset.n if dataset is not None else problem.n
    if config.sampler == "stratified":
        if strat is None or alloc is None:
            raise ValueError("stratified runs need a stratification and allocation")
        if strat.n != n:
            raise ValueError(f"stratification covers {strat.n} of {n} instances")
        if len(alloc.quotas) != strat.k:
            raise ValueError("allocation/stratification cluster count mismatch")
        if alloc.total != config.b:
            raise ValueError(
                f"allocation totals {alloc.total}, config batch is {config.b}"
            )
        if config.b < strat.k:
            raise ValueError("batch size below cluster count")
        if dataset is not None and strat.k < dataset.m:
            raise ValueError("fewer clusters than classes")

    quadratic = problem is not None
    if quadratic:
        w = np.zeros(problem.dim)
        initial_objective = problem.value(w)
    else:
        w = np.zeros((dataset.m, dataset.d))
        initial_objective = full_objective(zero_model(dataset.m, dataset.d, lam), dataset)
    guard = DIVERGENCE_FACTOR * max(abs(initial_objective), 1.0)

    def metrics_at(weights: np.ndarray):
        if quadratic:
            obj = problem.value(weights)
            terr = float("nan")
            if config.sampler == "uniform":
                var = analysis.quadratic_uniform_variance(problem, config.b)
            else:
                var = analysis.quadratic_stratified_variance(
                    problem, strat.clusters, alloc.quotas
                )
        else:
            model = Model(weights, lam)
            obj = full_objective(model, dataset)
            terr = _test_error(model, test) if test is not None else float("nan")
            if config.sampler == "uniform":
                var = analysis.exact_uniform_variance(model, dataset, config.b)
            else:
                var = analysis.exact_stratified_variance(model, strat, alloc, dataset)
        return obj, terr, var

    boundaries = _epoch_boundaries(config.epochs, n, config.b, config.cadence)
    T = math.ceil(config.epochs * n / config.b)
    rng = make_rng(config.seed)
    records = []
    snapshots = []
    elapsed = 0.0

    def record(epoch: int, weights: np.ndarray, step: int):
        obj, terr, var = metrics_at(weights)
        if not np.isfinite(obj) or obj > guard:
            raise DivergenceError(
                f"objective {obj:g} exceeded {guard:g} at epoch {epoch} "
                f"(seed {config.seed})",
                seed=config.seed,
                step=step,
            )
        records.append(
            EpochRecord(epoch, obj, terr, var, elapsed * 1e3 if timing else 0.0)
        )
        if keep_snapshots:
            snapshots.append(weights.copy())

    if 0 % config.cadence == 0:
        record(0, w, 0)

    for t in range(1, T + 1):
        tic = time.perf_counter() if timing else 0.0
        eta = config.schedule.eta(t)
        if config.sampler == "uniform":
            mb = draw_uniform(n, config.b, rng)
        else:
            mb = draw_stratified(strat, alloc, rng)
        if quadratic:
            w = w - eta * problem.batch_gradient(w, mb.indices, mb.weights)
        else:
            w = _step_weights(w, lam, dataset, mb, eta)
        if timing:
            elapsed += time.perf_counter() - tic
        if not np.all(np.isfinite(w)):
            raise DivergenceError(
                f"non-finite iterate at step {t} (seed {config.seed})",
                seed=config.seed,
                step=t,
            )
        for e in boundaries.get(t, ()):
            record(e, w, t)

    return RunMetrics(
        seed=config.seed,
        sampler=config.sampler,
        records=tuple(records),
        steps=T,
        snapshots=tuple(snapshots),
    )


@dataclass(frozen=True)
class MultiSeedResult:
    """Per-seed runs plus pointwise mean/std curves over the survivors."""

    runs: tuple[RunMetrics, ...]
    mean_records: tuple[EpochRecord, ...]
    std_records: tuple[EpochRecord, ...]
    seeds: tuple[int, ...]
    failures: tuple[tuple[int, str], ...] = ()


def multi_seed_run(
    config: RunConfig,
    dataset: Dataset | None = None,
    test: Dataset | None = None,
    strat: Stratification | None = None,
    alloc: Allocation | None = None,
    seeds=(1, 2, 3, 4, 5),
    *,
    lam: float = 0.0,
    problem: QuadraticProblem | None = None,
    timing: bool = True,
    on_divergence: str = "raise",
) -> MultiSeedResult:
    """Run every seed and average the metric curves pointwise.

    ``on_divergence="skip"`` records diverged seeds in ``failures`` and
    averages the rest; ``"raise"`` propagates the first failure. With every
    seed diverged the result simply has empty curves.
    """
    if len(seeds) < 1:
        raise ValueError("need at least one seed")
    if on_divergence not in ("raise", "skip"):
        raise ValueError(f"unknown divergence policy {on_divergence!r}")
    runs = []
    failures = []
    for s in seeds:
        try:
            runs.append(
                run(
                    replace(config, seed=int(s)),
                    dataset,
                    test,
                    strat,
                    alloc,
                    lam=lam,
                    problem=problem,
                    timing=timing,
                )
            )
        except DivergenceError as err:
            if on_divergence == "raise":
                raise
            failures.append((int(s), str(err)))

    mean_records: list[EpochRecord] = []
    std_records: list[EpochRecord] = []
    if runs:
        epochs = [r.epoch for r in runs[0].records]
        for rm in runs[1:]:
            if [r.epoch for r in rm.records] != epochs:
                raise RuntimeError("seed runs recorded different epochs")
        # average in seed order so the mean is invariant to list permutation
        ordered = sorted(runs, key=lambda rm: rm.seed)
        for i, e in enumerate(epochs):
            cols = np.array(
                [
                    [
                        rm.records[i].objective,
                        rm.records[i].test_error,
                        rm.records[i].variance,
                        rm.records[i].wall_ms,
                    ]
                    for rm in ordered
                ]
            )
            mean = cols.mean(axis=0)
            std = cols.std(axis=0, ddof=0)
            mean_records.append(EpochRecord(e, *(float(v) for v in mean)))
            std_records.append(EpochRecord(e, *(float(v) for v in std)))
    return MultiSeedResult(
        runs=tuple(runs),
        mean_records=tuple(mean_records),
        std_records=tuple(std_records),
        seeds=tuple(int(s) for s in seeds),
        failures=tuple(failures),
    )
