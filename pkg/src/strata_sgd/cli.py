"""Command-line benchmark harness.

Subcommands
-----------
cluster   build a label-pure stratification and batch allocation, save JSON
train     one SGD run (uniform or stratified sampling), metrics to CSV
compare   both samplers over all seeds; per-seed + mean CSVs and a summary
variance  exact estimator variance at a model point, optional Monte Carlo
verify    numeric convergence-bound checks on a synthetic quadratic

Settings resolve in order: command-line flag, then config-file entry
(``--config`` JSON), then per-dataset defaults inferred from the training
file name, then global defaults. Dataset paths that do not exist are also
tried under ``$STRATA_SGD_DATA``. CSV floats carry 17 significant digits so
files round-trip exactly; ``--no-timing`` zeroes the wall-time column to
make repeated runs byte-identical.

Exit codes: 0 ok, 2 parse error (config or data file), 3 validation error,
4 divergence, 5 bound-check failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import analysis, strata
from .data import ParseError, align, parse_libsvm_file
from .objective import Model, load_model, save_model, zero_model
from .sampling import draw_stratified, draw_uniform, make_rng
from .sgd import (
    DivergenceError,
    InverseLambdaT,
    RunConfig,
    multi_seed_run,
    run,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_DIVERGENCE = 4
EXIT_BOUND = 5

DEFAULT_SEEDS = (1, 2, 3, 4, 5)
DEFAULT_EPOCHS = 20

# (batch size, lambda) keyed by training-file basename prefix
DATASET_DEFAULTS = {
    "covtype": (10, 1e-5),
    "letter": (26, 1e-4),
    "mnist": (10, 1e-4),
    "pendigits": (13, 1e-3),
    "usps": (48, 1e-3),
}


def _fmt(v) -> str:
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _write_metrics_csv(path: Path, records) -> None:
    lines = ["epoch,objective,test_error,variance,wall_ms"]
    for r in records:
        lines.append(
            f"{r.epoch},{_fmt(r.objective)},{_fmt(r.test_error)},"
            f"{_fmt(r.variance)},{_fmt(r.wall_ms)}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _write_trace_csv(path: Path, trace) -> None:
    lines = ["t,measured,bound,stderr,distance_sq,passed"]
    for s in trace.steps:
        lines.append(
            f"{s.t},{_fmt(s.measured)},{_fmt(s.bound)},{_fmt(s.stderr)},"
            f"{_fmt(s.distance_sq)},{1 if s.passed else 0}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _resolve_path(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    env = os.environ.get("STRATA_SGD_DATA")
    if env:
        candidate = Path(env) / path
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"dataset file not found: {path}")


def _parse_seeds(text: str):
    try:
        seeds = [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


class Settings:
    """Flag/config/default merge for data-facing subcommands."""

    def __init__(self, ns: argparse.Namespace):
        cfg = {}
        if ns.config:
            with open(ns.config, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
            if not isinstance(cfg, dict):
                raise ValueError("config JSON must be an object")

        def pick(flag, key, default=None):
            if flag is not None:
                return flag
            if key in cfg:
                return cfg[key]
            return default

        self.train = pick(ns.train, "train")
        self.test = pick(getattr(ns, "test", None), "test")
        inferred_b = inferred_lam = None
        if self.train is not None:
            base = os.path.basename(str(self.train))
            for prefix, (b, lam) in DATASET_DEFAULTS.items():
                if base.startswith(prefix):
                    inferred_b, inferred_lam = b, lam
                    break
        self.lam = pick(ns.lam, "lambda", inferred_lam)
        self.batch = pick(ns.batch, "batch", inferred_b)
        self.clusters = pick(ns.clusters, "clusters")  # None -> 2m later
        self.epochs = int(pick(ns.epochs, "epochs", DEFAULT_EPOCHS))
        seeds = pick(ns.seeds, "seeds", list(DEFAULT_SEEDS))
        self.seeds = [int(s) for s in seeds]
        self.out = Path(pick(ns.out, "out", "."))
        self.refine = int(pick(getattr(ns, "refine", None), "refine", 0))
        self.timing = not bool(
            pick(ns.no_timing if ns.no_timing else None, "no_timing", False)
        )
        self.save_strat = pick(getattr(ns, "save_strat", None), "save_strat")
        self.load_strat = pick(getattr(ns, "load_strat", None), "load_strat")
        self.save_model = pick(getattr(ns, "save_model", None), "save_model")
        self.load_model = pick(getattr(ns, "load_model", None), "load_model")
        self.sampler = pick(getattr(ns, "sampler", None), "sampler", "stratified")
        self.mc_draws = pick(getattr(ns, "mc_draws", None), "mc_draws")

    def require(self, *names) -> None:
        for name in names:
            if getattr(self, name) is None:
                flag = {"lam": "lambda"}.get(name, name)
                raise ValueError(
                    f"--{flag} is required (not inferable for this dataset)"
                )

    def load_train(self):
        return parse_libsvm_file(_resolve_path(str(self.train)))

    def load_pair(self):
        train = self.load_train()
        test = parse_libsvm_file(_resolve_path(str(self.test)))
        return align(train, test)

    def stratification(self, dataset):
        if self.load_strat:
            strat = strata.load_stratification(self.load_strat)
            if strat.n != dataset.n:
                raise ValueError(
                    f"stratification covers {strat.n} instances, "
                    f"dataset has {dataset.n}"
                )
            return strat
        k = int(self.clusters) if self.clusters is not None else 2 * dataset.m
        strat = strata.per_class_kmeans(dataset, k, seed=self.seeds[0])
        if self.refine > 0:
            strat = strata.refine_weighted(strat, dataset, max_iters=self.refine)
        return strat


def cmd_cluster(ns: argparse.Namespace) -> int:
    st = Settings(ns)
    st.require("train", "batch")
    train = st.load_train()
    strat = st.stratification(train)
    alloc = strata.neyman_allocation(strat, int(st.batch))
    st.out.mkdir(parents=True, exist_ok=True)
    strat_path = Path(st.save_strat) if st.save_strat else st.out / "stratification.json"
    strata.save_stratification(strat, strat_path)
    alloc_path = st.out / "allocation.json"
    alloc_path.write_text(
        json.dumps({"quotas": list(alloc.quotas), "total": alloc.total}),
        encoding="ascii",
    )
    print(f"clusters: {strat.k} over {strat.n} instances, {train.m} classes")
    print(f"objective sum n_i*sqrt(v_i): {_fmt(strata.objective(strat))}")
    print(f"allocation (b={alloc.total}): {list(alloc.quotas)}")
    print(f"wrote {strat_path} and {alloc_path}")
    return EXIT_OK


def _run_csv_name(sampler: str, seed: int) -> str:
    return f"{sampler}_seed{seed}.csv"


def cmd_train(ns: argparse.Namespace) -> int:
    st = Settings(ns)
    st.require("train", "lam", "batch")
    if st.sampler not in ("uniform", "stratified"):
        raise ValueError(f"unknown sampler {st.sampler!r}")
    if st.test is not None:
        train, test = st.load_pair()
    else:
        train, test = st.load_train(), None
    strat = alloc = None
    if st.sampler == "stratified":
        strat = st.stratification(train)
        alloc = strata.neyman_allocation(strat, int(st.batch))
    seed = st.seeds[0]
    config = RunConfig(
        sampler=st.sampler,
        b=int(st.batch),
        schedule=InverseLambdaT(float(st.lam)),
        epochs=st.epochs,
        seed=seed,
    )
    metrics = run(
        config,
        train,
        test,
        strat,
        alloc,
        lam=float(st.lam),
        timing=st.timing,
        keep_snapshots=st.save_model is not None,
    )
    st.out.mkdir(parents=True, exist_ok=True)
    csv_path = st.out / _run_csv_name(st.sampler, seed)
    _write_metrics_csv(csv_path, metrics.records)
    if st.save_model is not None:
        final = Model(metrics.snapshots[-1], float(st.lam))
        save_model(final, st.save_model)
        print(f"model saved to {st.save_model}")
    last = metrics.records[-1]
    print(
        f"{st.sampler} seed {seed}: epoch {last.epoch} "
        f"objective {_fmt(last.objective)} test_error {_fmt(last.test_error)} "
        f"variance {_fmt(last.variance)}"
    )
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_compare(ns: argparse.Namespace) -> int:
    st = Settings(ns)
    st.require("train", "test", "lam", "batch")
    train, test = st.load_pair()
    strat = st.stratification(train)
    alloc = strata.neyman_allocation(strat, int(st.batch))
    if st.save_strat:
        strata.save_stratification(strat, st.save_strat)
    st.out.mkdir(parents=True, exist_ok=True)
    schedule = InverseLambdaT(float(st.lam))
    summary = {
        "train": str(st.train),
        "test": str(st.test),
        "lambda": float(st.lam),
        "batch": int(st.batch),
        "clusters": strat.k,
        "epochs": st.epochs,
        "seeds": st.seeds,
        "clustering_objective": strata.objective(strat),
        "allocation": list(alloc.quotas),
        "samplers": {},
    }
    completed = {}
    for sampler in ("uniform", "stratified"):
        config = RunConfig(
            sampler=sampler,
            b=int(st.batch),
            schedule=schedule,
            epochs=st.epochs,
            seed=0,
        )
        result = multi_seed_run(
            config,
            train,
            test,
            strat if sampler == "stratified" else None,
            alloc if sampler == "stratified" else None,
            seeds=st.seeds,
            lam=float(st.lam),
            timing=st.timing,
            on_divergence="skip",
        )
        for rm in result.runs:
            _write_metrics_csv(
                st.out / _run_csv_name(sampler, rm.seed), rm.records
            )
        if result.mean_records:
            _write_metrics_csv(st.out / f"{sampler}_mean.csv", result.mean_records)
        completed[sampler] = len(result.runs)
        entry = {
            "completed_seeds": [rm.seed for rm in result.runs],
            "diverged": [
                {"seed": seed, "error": msg} for seed, msg in result.failures
            ],
        }
        if result.mean_records:
            last = result.mean_records[-1]
            entry["final_mean"] = {
                "epoch": last.epoch,
                "objective": last.objective,
                "test_error": last.test_error,
                "variance": last.variance,
            }
        summary["samplers"][sampler] = entry
        print(
            f"{sampler}: {len(result.runs)}/{len(st.seeds)} seeds completed"
            + (
                f", final mean objective {_fmt(result.mean_records[-1].objective)}"
                f", variance {_fmt(result.mean_records[-1].variance)}"
                if result.mean_records
                else ""
            )
        )
    (st.out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    print(f"wrote {st.out / 'summary.json'}")
    if min(completed.values()) == 0:
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_variance(ns: argparse.Namespace) -> int:
    st = Settings(ns)
    st.require("train", "lam", "batch")
    train = st.load_train()
    strat = st.stratification(train)
    alloc = strata.neyman_allocation(strat, int(st.batch))
    if st.load_model:
        model = load_model(st.load_model)
        if model.d != train.d or model.m != train.m:
            raise ValueError(
                f"model shape ({model.m},{model.d}) does not fit dataset "
                f"({train.m},{train.d})"
            )
    else:
        model = zero_model(train.m, train.d, float(st.lam))
    b = int(st.batch)
    report = {
        "batch": b,
        "clusters": strat.k,
        "exact_stratified": analysis.exact_stratified_variance(
            model, strat, alloc, train
        ),
        "exact_uniform": analysis.exact_uniform_variance(model, train, b),
    }
    if st.mc_draws is not None:
        draws = int(st.mc_draws)
        rng = make_rng(st.seeds[0])
        mean_s, se_s = analysis.empirical_variance(
            model, train, lambda r: draw_stratified(strat, alloc, r), draws, rng
        )
        mean_u, se_u = analysis.empirical_variance(
            model, train, lambda r: draw_uniform(train.n, b, r), draws, rng
        )
        report["empirical_stratified"] = {"mean": mean_s, "stderr": se_s}
        report["empirical_uniform"] = {"mean": mean_u, "stderr": se_u}
    st.out.mkdir(parents=True, exist_ok=True)
    out_path = st.out / "variance.json"
    out_path.write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    print(f"exact stratified: {_fmt(report['exact_stratified'])}")
    print(f"exact uniform:    {_fmt(report['exact_uniform'])}")
    if st.mc_draws is not None:
        print(
            f"empirical stratified: {_fmt(mean_s)} (se {_fmt(se_s)}); "
            f"empirical uniform: {_fmt(mean_u)} (se {_fmt(se_u)})"
        )
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_verify(ns: argparse.Namespace) -> int:
    from .objective import QuadraticProblem

    n = ns.n
    d = ns.d
    H = ns.H
    rng = make_rng(ns.seed)
    problem = QuadraticProblem(rng.normal(size=(n, d)), H)
    gamma = problem.gamma
    if ns.bound == "theorem2":
        eta = ns.eta if ns.eta is not None else 1.0 / (H + 1.0 / gamma)
        T = ns.T if ns.T is not None else 100
        trace = analysis.check_theorem2(problem, eta, T)
    elif ns.bound == "theorem1":
        a = ns.a if ns.a is not None else 1.0
        T = ns.T if ns.T is not None else 1000
        trace = analysis.check_theorem1(problem, a, T)
    else:
        eta = ns.eta if ns.eta is not None else gamma
        T = ns.T if ns.T is not None else 100
        trace = analysis.check_lemma1(problem, eta, T)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / f"verify_{ns.bound}.csv"
    _write_trace_csv(trace_path, trace)
    consts = ", ".join(f"{k}={_fmt(float(v))}" for k, v in trace.constants.items())
    print(f"{ns.bound}: {consts}")
    print(f"wrote {trace_path}")
    if trace.passed:
        print(f"PASS ({len(trace.steps)} steps)")
        return EXIT_OK
    first_bad = next(s for s in trace.steps if not s.passed)
    print(
        f"FAIL at t={first_bad.t}: measured {_fmt(first_bad.measured)} "
        f"> bound {_fmt(first_bad.bound)}"
    )
    return EXIT_BOUND


def _add_common(p: argparse.ArgumentParser, *, test: bool = True) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--train", help="training set (LIBSVM format)")
    if test:
        p.add_argument("--test", help="test set (LIBSVM format)")
    p.add_argument(
        "--lambda", dest="lam", type=float, help="L2 regularization strength"
    )
    p.add_argument("--batch", type=int, help="minibatch size b")
    p.add_argument("--clusters", type=int, help="cluster count k (default 2m)")
    p.add_argument("--epochs", type=int, help=f"epochs (default {DEFAULT_EPOCHS})")
    p.add_argument(
        "--seeds",
        type=_parse_seeds,
        help="comma-separated seeds (default 1,2,3,4,5)",
    )
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument(
        "--refine",
        type=int,
        help="reassignment passes to polish the clustering (default 0)",
    )
    p.add_argument(
        "--no-timing",
        action="store_true",
        default=None,
        help="write wall_ms as 0 so outputs are byte-reproducible",
    )
    p.add_argument("--load-strat", help="reuse a saved stratification JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strata-sgd",
        description="Minibatch SGD with stratified sampling: benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="build and save a stratification")
    _add_common(p, test=False)
    p.add_argument("--save-strat", help="stratification JSON path")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="single training run")
    _add_common(p)
    p.add_argument(
        "--sampler",
        choices=("uniform", "stratified"),
        help="sampling scheme (default stratified)",
    )
    p.add_argument("--save-model", help="write the final model JSON here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="uniform vs stratified over all seeds")
    _add_common(p)
    p.add_argument("--save-strat", help="also save the stratification JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("variance", help="exact estimator variance at a model")
    _add_common(p, test=False)
    p.add_argument("--load-model", help="model JSON (default: zero model)")
    p.add_argument(
        "--mc-draws", type=int, help="add a Monte Carlo cross-check of N draws"
    )
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("verify", help="numeric convergence-bound checks")
    p.add_argument(
        "bound", choices=("theorem1", "theorem2", "lemma1"), help="which bound"
    )
    p.add_argument("--n", type=int, default=20, help="anchor count (default 20)")
    p.add_argument("--d", type=int, default=5, help="dimension (default 5)")
    p.add_argument("--H", type=float, default=1.0, help="curvature (default 1)")
    p.add_argument("--eta", type=float, help="step size (bound-specific default)")
    p.add_argument("--a", type=float, help="schedule offset (default 1)")
    p.add_argument("--T", type=int, help="steps (default 100; theorem1 1000)")
    p.add_argument("--seed", type=int, default=1, help="anchor seed (default 1)")
    p.add_argument("--out", default=".", help="output directory (default .)")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except json.JSONDecodeError as err:
        print(f"error: bad JSON: {err}", file=sys.stderr)
        return EXIT_PARSE
    except DivergenceError as err:
        print(f"error: diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
