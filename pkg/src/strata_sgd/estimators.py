"""Scikit-learn style wrappers around the functional core.

These adapt the library to the fit/predict idiom so the sampler drops into
sklearn pipelines and model selection unchanged. They hold no logic of
their own: fitting builds the label-pure stratification, allocates the
minibatch, and runs the SGD loop exactly as the CLI does.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import strata
from .data import Dataset
from .sgd import InverseLambdaT, RunConfig, run


def _as_dataset(X, y_idx: np.ndarray, classes: np.ndarray) -> Dataset:
    label_map = {classes[i]: i for i in range(len(classes))}
    return Dataset(sp.csr_matrix(X), y_idx, label_map)


class StratifiedSGDClassifier(BaseEstimator, ClassifierMixin):
    """Multinomial logistic regression trained by stratified-minibatch SGD.

    Parameters
    ----------
    lam : float, default=1e-4
        L2 regularization strength.
    batch_size : int, default=10
        Minibatch size; must be at least the cluster count for the
        stratified sampler.
    n_clusters : int or None, default=None
        Label-pure cluster count; None means twice the number of classes
        (capped at the sample count).
    epochs : int, default=20
    sampler : {"stratified", "uniform"}, default="stratified"
    seed : int, default=1
        Drives clustering and minibatch draws; fit is deterministic.
    refine : int, default=0
        Reassignment passes polishing the clustering objective.
    kmeans_max_iters : int, default=100
    kmeans_tol : float, default=1e-7

    Attributes
    ----------
    classes_ : ndarray
    coef_ : ndarray of shape (n_classes, n_features)
    stratification_ : Stratification (stratified sampler only)
    allocation_ : Allocation (stratified sampler only)
    metrics_ : RunMetrics with the per-epoch training curve
    """

    def __init__(
        self,
        lam: float = 1e-4,
        batch_size: int = 10,
        n_clusters: int | None = None,
        epochs: int = 20,
        sampler: str = "stratified",
        seed: int = 1,
        refine: int = 0,
        kmeans_max_iters: int = 100,
        kmeans_tol: float = 1e-7,
    ):
        self.lam = lam
        self.batch_size = batch_size
        self.n_clusters = n_clusters
        self.epochs = epochs
        self.sampler = sampler
        self.seed = seed
        self.refine = refine
        self.kmeans_max_iters = kmeans_max_iters
        self.kmeans_tol = kmeans_tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        ds = _as_dataset(X, y_idx, self.classes_)
        self.n_features_in_ = ds.d

        strat = alloc = None
        if self.sampler == "stratified":
            k = self.n_clusters
            if k is None:
                k = min(2 * ds.m, ds.n)
            strat = strata.per_class_kmeans(
                ds,
                k,
                seed=self.seed,
                max_iters=self.kmeans_max_iters,
                tol=self.kmeans_tol,
            )
            if self.refine > 0:
                strat = strata.refine_weighted(strat, ds, max_iters=self.refine)
            alloc = strata.neyman_allocation(strat, self.batch_size)
            self.stratification_ = strat
            self.allocation_ = alloc

        config = RunConfig(
            sampler=self.sampler,
            b=self.batch_size,
            schedule=InverseLambdaT(self.lam),
            epochs=self.epochs,
            seed=self.seed,
        )
        metrics = run(
            config,
            ds,
            None,
            strat,
            alloc,
            lam=self.lam,
            timing=False,
            keep_snapshots=True,
        )
        self.coef_ = metrics.snapshots[-1]
        self.metrics_ = metrics
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return np.asarray(X @ self.coef_.T)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def predict_proba(self, X):
        scores = self.decision_function(X)
        shifted = scores - scores.max(axis=1, keepdims=True)
        np.exp(shifted, out=shifted)
        shifted /= shifted.sum(axis=1, keepdims=True)
        return shifted


class LabelPureKMeans(BaseEstimator, ClusterMixin):
    """Per-class k-means minimizing ``sum_i n_i * sqrt(v_i)``.

    Requires labels at fit time: clusters never mix classes, which is what
    lets the stratified gradient estimator pair with Neyman batch quotas.

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
        Cluster index per sample.
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
    dispersions_ : ndarray of shape (n_clusters,)
    cluster_classes_ : ndarray of shape (n_clusters,)
        The class each cluster belongs to.
    objective_ : float
    """

    def __init__(
        self,
        n_clusters: int | None = None,
        seed: int = 1,
        refine: int = 0,
        max_iters: int = 100,
        tol: float = 1e-7,
    ):
        self.n_clusters = n_clusters
        self.seed = seed
        self.refine = refine
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr")
        classes, y_idx = np.unique(y, return_inverse=True)
        ds = _as_dataset(X, y_idx, classes)
        k = self.n_clusters
        if k is None:
            k = min(2 * ds.m, ds.n)
        strat = strata.per_class_kmeans(
            ds, k, seed=self.seed, max_iters=self.max_iters, tol=self.tol
        )
        if self.refine > 0:
            strat = strata.refine_weighted(strat, ds, max_iters=self.refine)
        self.stratification_ = strat
        self.labels_ = strat.assignment()
        self.cluster_centers_ = strat.centroids
        self.dispersions_ = strat.dispersions
        self.cluster_classes_ = classes[strat.labels]
        self.objective_ = strata.objective(strat)
        self.n_features_in_ = ds.d
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X, y).labels_

    def allocate(self, batch_size: int):
        """Neyman quotas for the fitted clustering at this batch size."""
        check_is_fitted(self, "stratification_")
        return strata.neyman_allocation(self.stratification_, batch_size)
