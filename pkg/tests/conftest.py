"""Shared fixtures: synthetic datasets, quadratic problems, real-data discovery."""

import os
from pathlib import Path

import numpy as np
import pytest

from strata_sgd import Dataset, QuadraticProblem, parse_libsvm, parse_libsvm_file


def make_blob_text(
    classes=3, n_per_class=40, d=4, seed=0, sep=2.0, scale=0.5, drop_below=0.05,
    center_seed=1234,
) -> str:
    """LIBSVM text of Gaussian class blobs; near-zero values are omitted
    so the stream exercises genuinely sparse rows.  Class centers come from
    their own seed so train/test splits share the geometry."""
    centers = np.random.Generator(np.random.PCG64(center_seed)).normal(
        size=(classes, d)
    ) * sep
    rng = np.random.Generator(np.random.PCG64(seed))
    lines = []
    for c in range(classes):
        for _ in range(n_per_class):
            x = centers[c] + rng.normal(size=d) * scale
            feats = " ".join(
                f"{j + 1}:{x[j]:.6f}" for j in range(d) if abs(x[j]) >= drop_below
            )
            lines.append(f"{c + 1} {feats}".rstrip())
    return "\n".join(lines) + "\n"


@pytest.fixture
def tiny_dataset() -> Dataset:
    # 5 points, 2 classes, 3 features; values chosen to be exact in binary
    text = (
        "1 1:1.0 3:0.5\n"
        "1 1:0.5 2:0.25\n"
        "2 2:1.0\n"
        "2 1:0.25 3:0.25\n"
        "1 3:1.0\n"
    )
    return parse_libsvm(text)


@pytest.fixture
def blob_dataset() -> Dataset:
    return parse_libsvm(make_blob_text())


@pytest.fixture
def blob_pair():
    train = parse_libsvm(make_blob_text(seed=0))
    test = parse_libsvm(make_blob_text(seed=1, n_per_class=15))
    from strata_sgd import align

    return align(train, test)


@pytest.fixture
def quad_problem() -> QuadraticProblem:
    rng = np.random.Generator(np.random.PCG64(1))
    return QuadraticProblem(rng.normal(size=(20, 5)), 1.0)


def _find_data_file(*names):
    roots = []
    env = os.environ.get("STRATA_SGD_DATA")
    if env:
        roots.append(Path(env))
    roots.append(Path(__file__).resolve().parent.parent / "data")
    for root in roots:
        for name in names:
            p = root / name
            if p.exists():
                return p
    return None


def load_real_pair(train_names, test_names, tag):
    train = _find_data_file(*train_names)
    test = _find_data_file(*test_names)
    if train is None or test is None:
        pytest.skip(
            f"{tag} LIBSVM files not found; place them in data/ or set "
            f"STRATA_SGD_DATA (looked for {train_names} / {test_names})"
        )
    from strata_sgd import align

    return align(parse_libsvm_file(train), parse_libsvm_file(test))


@pytest.fixture(scope="session")
def pendigits_pair():
    return load_real_pair(("pendigits.scale", "pendigits"), ("pendigits.scale.t", "pendigits.t"), "pendigits")


@pytest.fixture(scope="session")
def usps_pair():
    return load_real_pair(("usps",), ("usps.t",), "usps")


@pytest.fixture(scope="session")
def letter_pair():
    return load_real_pair(("letter.scale", "letter"), ("letter.scale.t", "letter.t"), "letter")
