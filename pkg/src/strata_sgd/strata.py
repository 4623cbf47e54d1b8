"""Label-pure stratification of a training set and minibatch allocation.

A stratification partitions the instance indices into clusters that each
hold a single class. Clusters carry their centroid and dispersion (mean
squared distance to the centroid), from which the allocation rule assigns
per-cluster minibatch quotas proportional to ``n_i * sqrt(v_i)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset


@dataclass(frozen=True)
class Stratification:
    """A label-pure partition of ``[0, n)`` with per-cluster statistics.

    Attributes
    ----------
    clusters : tuple of ndarray
        Ascending instance indices of each cluster; disjoint, covering
        ``range(n)``, each nonempty.
    centroids : ndarray of shape (k, d)
        Per-cluster feature means.
    dispersions : ndarray of shape (k,)
        Mean squared Euclidean distance to the centroid, ``v_i >= 0``.
    labels : ndarray of shape (k,)
        The single dense class id of each cluster.
    n : int
        Total number of instances partitioned.
    """

    clusters: tuple[np.ndarray, ...]
    centroids: np.ndarray
    dispersions: np.ndarray
    labels: np.ndarray
    n: int

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.clusters], dtype=np.int64)

    def validate(self) -> None:
        seen = np.concatenate(self.clusters) if self.clusters else np.array([])
        if len(seen) != self.n or not np.array_equal(
            np.sort(seen), np.arange(self.n)
        ):
            raise ValueError("clusters do not partition the index range")
        for c in self.clusters:
            if len(c) == 0:
                raise ValueError("empty cluster")
            if not np.all(np.diff(c) > 0):
                raise ValueError("cluster indices must be ascending")
        if np.any(self.dispersions < 0):
            raise ValueError("negative dispersion")

    def assignment(self) -> np.ndarray:
        """Cluster index of every instance."""
        out = np.empty(self.n, dtype=np.int64)
        for ci, members in enumerate(self.clusters):
            out[members] = ci
        return out


@dataclass(frozen=True)
class Allocation:
    """Integer per-cluster quotas ``b_i >= 1`` summing exactly to ``total``."""

    quotas: tuple[int, ...]
    total: int

    def __post_init__(self):
        if any(q < 1 for q in self.quotas):
            raise ValueError("every quota must be >= 1")
        if sum(self.quotas) != self.total:
            raise ValueError(
                f"quotas sum to {sum(self.quotas)}, expected {self.total}"
            )


def _cluster_stats(dataset: Dataset, members: np.ndarray):
    """Exact centroid and dispersion of one cluster."""
    rows = dataset.X[members]
    mu = np.asarray(rows.mean(axis=0)).ravel()
    # direct definition; the sparse product only materializes member rows
    diff_sq = (
        np.asarray(rows.multiply(rows).sum(axis=1)).ravel()
        - 2.0 * (rows @ mu)
        + mu @ mu
    )
    v = float(np.maximum(diff_sq, 0.0).mean())
    return mu, v


def from_clusters(dataset: Dataset, clusters) -> Stratification:
    """Build a validated :class:`Stratification` from raw index groups."""
    clusters = tuple(np.sort(np.asarray(c, dtype=np.int64)) for c in clusters)
    centroids = np.empty((len(clusters), dataset.d))
    dispersions = np.empty(len(clusters))
    labels = np.empty(len(clusters), dtype=np.int64)
    for i, members in enumerate(clusters):
        if len(members) == 0:
            raise ValueError("empty cluster")
        member_labels = np.unique(dataset.y[members])
        if len(member_labels) != 1:
            raise ValueError(
                f"cluster {i} mixes class labels {member_labels.tolist()}"
            )
        labels[i] = member_labels[0]
        centroids[i], dispersions[i] = _cluster_stats(dataset, members)
    strat = Stratification(clusters, centroids, dispersions, labels, dataset.n)
    strat.validate()
    return strat


def from_points(points: np.ndarray, clusters) -> Stratification:
    """Stratify a dense point set directly (one implicit class).

    Used for synthetic problems that carry raw coordinates instead of a
    :class:`~strata_sgd.data.Dataset`.
    """
    points = np.asarray(points, dtype=float)
    clusters = tuple(np.sort(np.asarray(c, dtype=np.int64)) for c in clusters)
    centroids = np.empty((len(clusters), points.shape[1]))
    dispersions = np.empty(len(clusters))
    for i, members in enumerate(clusters):
        if len(members) == 0:
            raise ValueError("empty cluster")
        sub = points[members]
        centroids[i] = sub.mean(axis=0)
        diff = sub - centroids[i]
        dispersions[i] = float(np.einsum("ij,ij->i", diff, diff).mean())
    labels = np.zeros(len(clusters), dtype=np.int64)
    strat = Stratification(
        clusters, centroids, dispersions, labels, points.shape[0]
    )
    strat.validate()
    return strat


def objective(strat: Stratification) -> float:
    """The clustering objective ``sum_i n_i * sqrt(v_i)``."""
    return float(np.sum(strat.sizes * np.sqrt(strat.dispersions)))


# ---------------------------------------------------------------------------
# integer apportionment


def _apportion(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer quotas proportional to nonnegative weights, each >= 1.

    Zero-weight entries are pinned to 1 and the remaining budget is shared
    by the positive-weight entries. Rounding is largest-remainder with ties
    to the lower index; an entry rounded to zero is raised to 1, taking from
    the donor whose rounded quota most exceeds its continuous quota (ties to
    the lower index again).
    """
    weights = np.asarray(weights, dtype=float)
    k = len(weights)
    if total < k:
        raise ValueError(f"budget {total} cannot give {k} entries >= 1")
    quotas = np.zeros(k, dtype=np.int64)
    zero = weights == 0
    quotas[zero] = 1
    remaining = total - int(zero.sum())
    pos = np.flatnonzero(~zero)
    if len(pos) == 0:
        # degenerate: nothing to weight by; spread the excess evenly
        for i in range(remaining):
            quotas[i % k] += 1
        return quotas

    continuous = remaining * weights[pos] / weights[pos].sum()
    floors = np.floor(continuous).astype(np.int64)
    leftover = remaining - int(floors.sum())
    # ties to the lower index: stable sort on negated remainder
    order = np.argsort(-(continuous - floors), kind="stable")
    floors[order[:leftover]] += 1

    while True:
        starved = np.flatnonzero(floors == 0)
        if len(starved) == 0:
            break
        overshoot = floors - continuous
        overshoot[floors < 2] = -np.inf
        donor = int(np.argmax(overshoot))
        floors[donor] -= 1
        floors[starved[0]] += 1

    quotas[pos] = floors
    return quotas


def neyman_allocation(strat: Stratification, b: int) -> Allocation:
    """Quotas proportional to ``n_i * sqrt(v_i)``, integerized.

    Zero-dispersion clusters are pinned to a quota of 1 (the continuous
    rule would give them 0, which would break unbiasedness); when every
    dispersion is zero any allocation is optimal and quotas fall back to
    being proportional to cluster sizes.

    Raises
    ------
    ValueError
        If ``b < k`` (cannot give every cluster at least one draw).
    """
    if b < strat.k:
        raise ValueError(f"batch size {b} < cluster count {strat.k}")
    weights = strat.sizes * np.sqrt(strat.dispersions)
    if not np.any(weights > 0):
        weights = strat.sizes.astype(float)
    quotas = _apportion(weights, b)
    return Allocation(tuple(int(q) for q in quotas), b)


# ---------------------------------------------------------------------------
# per-class k-means


def _kmeans_single_class(X: np.ndarray, kc: int, rng, max_iters: int, tol: float):
    """Lloyd's algorithm on one class, returning the local assignment.

    Seeding is greedy farthest-point: the first center is drawn by the rng,
    each next center is the point farthest from all chosen centers (ties to
    the lowest index). Should a cluster empty out during iteration it is
    reseeded with the point farthest from its centroid, taken from clusters
    that can spare one.
    """
    nc = X.shape[0]
    centers = np.empty((kc, X.shape[1]))
    first = int(rng.integers(nc))
    centers[0] = X[first]
    sq = np.einsum("ij,ij->i", X, X)
    min_dist = sq - 2 * X @ centers[0] + centers[0] @ centers[0]
    for j in range(1, kc):
        pick = int(np.argmax(min_dist))
        centers[j] = X[pick]
        dist_j = sq - 2 * X @ centers[j] + centers[j] @ centers[j]
        min_dist = np.minimum(min_dist, dist_j)

    assign = np.zeros(nc, dtype=np.int64)
    for _ in range(max_iters):
        dists = sq[:, None] - 2 * X @ centers.T + np.einsum(
            "ij,ij->i", centers, centers
        )
        assign = np.argmin(dists, axis=1)

        counts = np.bincount(assign, minlength=kc)
        for j in np.flatnonzero(counts == 0):
            donors = counts[assign] >= 2
            cand_dist = np.where(donors, dists[:, j], -np.inf)
            pick = int(np.argmax(cand_dist))
            counts[assign[pick]] -= 1
            assign[pick] = j
            counts[j] = 1

        new_centers = np.empty_like(centers)
        for j in range(kc):
            new_centers[j] = X[assign == j].mean(axis=0)
        shift = np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)).max()
        centers = new_centers
        if shift < tol:
            break
    return assign


def per_class_kmeans(
    dataset: Dataset,
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-7,
) -> Stratification:
    """Cluster each class separately into its share of ``k`` clusters.

    The cluster budget is split across classes proportionally to class size
    (largest-remainder rounding, ties to the lower class id, at least one
    per class); each class then runs Lloyd's k-means to convergence
    (maximum centroid shift below ``tol``) or ``max_iters``.

    Parameters
    ----------
    dataset : Dataset
    k : int
        Total cluster count; requires ``m <= k <= n``.
    seed : int
        Drives all seeding; identical inputs give identical output.
    max_iters, tol
        Lloyd's stopping controls.

    Returns
    -------
    Stratification
    """
    if dataset.n < 1:
        raise ValueError("empty dataset")
    if k < dataset.m:
        raise ValueError(f"k={k} below class count m={dataset.m}")
    if k > dataset.n:
        raise ValueError(f"k={k} above instance count n={dataset.n}")

    class_members = [
        np.flatnonzero(dataset.y == c) for c in range(dataset.m)
    ]
    class_sizes = np.array([len(mem) for mem in class_members])
    budgets = _apportion(class_sizes.astype(float), k)
    # a class can never host more clusters than points: k <= n keeps the
    # proportional shares under the cap, but guard against a pathological tie
    while np.any(budgets > class_sizes):
        over = int(np.argmax(budgets - class_sizes))
        room = np.flatnonzero(budgets < class_sizes)
        budgets[over] -= 1
        budgets[room[0]] += 1

    rng = np.random.Generator(np.random.PCG64(seed))
    clusters: list[np.ndarray] = []
    for c in range(dataset.m):
        members = class_members[c]
        kc = int(budgets[c])
        if kc == 1:
            clusters.append(members)
            continue
        if kc == len(members):
            clusters.extend(np.array([i]) for i in members)
            continue
        Xc = dataset.X[members].toarray()
        assign = _kmeans_single_class(Xc, kc, rng, max_iters, tol)
        clusters.extend(members[assign == j] for j in range(kc))

    return from_clusters(dataset, clusters)


# ---------------------------------------------------------------------------
# weighted refinement


def refine_weighted(
    strat: Stratification, dataset: Dataset, max_iters: int = 50
) -> Stratification:
    """Locally improve ``sum_i n_i*sqrt(v_i)`` by single-point moves.

    Alternates the centroid step (cluster means, optimal at a fixed
    assignment) with greedy reassignment: every point is offered to every
    other cluster of its own class and moved only when the exact objective
    strictly decreases (best target first, ties to the lower cluster
    index). A move may not empty a cluster. Stops after a full pass with no
    accepted move, or after ``max_iters`` passes. The result's objective
    never exceeds the input's.
    """
    assign = strat.assignment()
    k = strat.k
    labels = strat.labels
    same_label_targets = [
        [j for j in range(k) if labels[j] == labels[i] and j != i] for i in range(k)
    ]
    if all(not t for t in same_label_targets) or max_iters == 0:
        return strat

    X = dataset.X.toarray()
    sq = np.einsum("ij,ij->i", X, X)

    def cost(count, total_sq, s):
        # sqrt(n_i * SSE_i) with SSE from sufficient statistics
        sse = max(total_sq - (s @ s) / count, 0.0)
        return math.sqrt(count * sse)

    for _ in range(max_iters):
        counts = np.bincount(assign, minlength=k).astype(np.int64)
        sums = np.zeros((k, X.shape[1]))
        np.add.at(sums, assign, X)
        sumsq = np.zeros(k)
        np.add.at(sumsq, assign, sq)
        costs = np.array(
            [cost(counts[i], sumsq[i], sums[i]) for i in range(k)]
        )
        total = float(costs.sum())

        moved = False
        for s in range(strat.n):
            i = int(assign[s])
            if counts[i] == 1 or not same_label_targets[i]:
                continue
            x = X[s]
            xsq = sq[s]
            cost_i_out = cost(counts[i] - 1, sumsq[i] - xsq, sums[i] - x)
            best_j, best_total = -1, total
            for j in same_label_targets[i]:
                cost_j_in = cost(counts[j] + 1, sumsq[j] + xsq, sums[j] + x)
                cand = total - costs[i] - costs[j] + cost_i_out + cost_j_in
                if cand < best_total:
                    best_j, best_total = j, cand
            if best_j >= 0:
                j = best_j
                counts[i] -= 1
                sums[i] -= x
                sumsq[i] -= xsq
                counts[j] += 1
                sums[j] += x
                sumsq[j] += xsq
                costs[i] = cost(counts[i], sumsq[i], sums[i])
                costs[j] = cost(counts[j], sumsq[j], sums[j])
                assign[s] = j
                total = best_total
                moved = True
        if not moved:
            break

    clusters = [np.flatnonzero(assign == i) for i in range(k)]
    return from_clusters(dataset, clusters)


# ---------------------------------------------------------------------------
# JSON round-trip


def stratification_to_json(strat: Stratification) -> str:
    payload = {
        "clusters": [c.tolist() for c in strat.clusters],
        "centroids": strat.centroids.tolist(),
        "dispersions": strat.dispersions.tolist(),
        "labels": strat.labels.tolist(),
    }
    return json.dumps(payload)


def stratification_from_json(text: str) -> Stratification:
    payload = json.loads(text)
    for key in ("clusters", "centroids", "dispersions", "labels"):
        if key not in payload:
            raise ValueError(f"stratification JSON missing {key!r}")
    clusters = tuple(
        np.asarray(c, dtype=np.int64) for c in payload["clusters"]
    )
    n = int(sum(len(c) for c in clusters))
    strat = Stratification(
        clusters,
        np.asarray(payload["centroids"], dtype=float),
        np.asarray(payload["dispersions"], dtype=float),
        np.asarray(payload["labels"], dtype=np.int64),
        n,
    )
    strat.validate()
    return strat


def save_stratification(strat: Stratification, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(stratification_to_json(strat))


def load_stratification(path) -> Stratification:
    with open(path, "r", encoding="ascii") as fh:
        return stratification_from_json(fh.read())
