"""scikit-learn style wrappers around the source estimators.

An observation set plays the role of ``X``: either an ``Observations`` object
or an ``(n, 2)`` array of ``[node, timestamp]`` rows.  The graph is a
constructor parameter, so ``get_params``/``set_params``/``clone`` behave as usual.

    >>> est = GSSI(graph=g).fit(obs)
    >>> est.source_, est.mu_
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .diffusion import Observations
from .evaluation import delta_metric
from .graph import Graph, shortest_distances
from .gromov import SCALED_IDENTITY, check_target_kind
from .multi import scce
from .single import bfs_mle, gssi, mle_tree, naive_gssi


def check_observations(X, graph: Graph | None = None) -> Observations:
    """Coerce ``X`` into ``Observations`` and validate node ids against ``graph``."""
    if isinstance(X, Observations):
        obs = X
    else:
        arr = check_array(X, dtype=np.float64, ensure_min_samples=1)
        if arr.shape[1] != 2:
            raise ValueError(f"expected rows of [node, timestamp], got {arr.shape[1]} columns")
        obs = Observations(arr[:, 0], arr[:, 1])
    if graph is not None:
        obs.validate_against(graph)
    return obs


def _check_graph(graph) -> Graph:
    if not isinstance(graph, Graph):
        raise TypeError(f"graph must be an infsource Graph, got {type(graph).__name__}")
    return graph


class _SingleSource(BaseEstimator):
    """Shared fit/predict for estimators returning one source."""

    def _estimate(self, g, obs):
        raise NotImplementedError

    def fit(self, X, y=None):
        g = _check_graph(self.graph)
        obs = check_observations(X, g)
        est = self._estimate(g, obs)
        self.estimate_ = est
        self.observations_ = obs
        self.source_ = est.source
        self.t0_ = est.t0
        self.mu_ = est.mu
        self.sigma2_ = est.sigma2
        self.alpha_ = est.alpha
        self.theta_ = est.theta
        self.ranking_ = [(c.candidate, c.log_score) for c in est.ranking]
        return self

    def predict(self, X=None) -> np.ndarray:
        """Estimated source for ``X`` (the fitted observations when omitted)."""
        check_is_fitted(self, "estimate_")
        if X is None:
            return np.array([self.source_])
        obs = check_observations(X, self.graph)
        if obs == self.observations_:
            return np.array([self.source_])
        return np.array([self._estimate(self.graph, obs).source])

    def score(self, X, y) -> float:
        """Negative hop distance between the estimate for ``X`` and the true source ``y``."""
        s = int(self.predict(X)[0])
        y = int(np.ravel(y)[0])
        return -float(shortest_distances(self.graph, y)[s])


class GSSI(_SingleSource):
    """Gromov-matrix single-source estimator.

    ``shrinkage=False`` fixes the target weight at 0 (the naive variant).
    """

    def __init__(self, graph=None, target=SCALED_IDENTITY, shrinkage=True, candidates=None):
        self.graph = graph
        self.target = target
        self.shrinkage = shrinkage
        self.candidates = candidates

    def _estimate(self, g, obs):
        if not self.shrinkage:
            return naive_gssi(g, obs, self.candidates)
        return gssi(g, obs, check_target_kind(self.target), self.candidates)


class TreeMLE(_SingleSource):
    """Exact maximum-likelihood source on a tree."""

    def __init__(self, graph=None, candidates=None):
        self.graph = graph
        self.candidates = candidates

    def _estimate(self, g, obs):
        return mle_tree(g, obs, self.candidates)


class BFSMLE(_SingleSource):
    """Tree MLE on one ascending BFS tree per candidate."""

    def __init__(self, graph=None, candidates=None):
        self.graph = graph
        self.candidates = candidates

    def _estimate(self, g, obs):
        return bfs_mle(g, obs, self.candidates)


class SCCE(BaseEstimator):
    """Multiple-source estimator; ``sources_`` holds one node per cluster."""

    def __init__(self, graph=None, max_sources=None, target=SCALED_IDENTITY):
        self.graph = graph
        self.max_sources = max_sources
        self.target = target

    def fit(self, X, y=None):
        g = _check_graph(self.graph)
        obs = check_observations(X, g)
        est = scce(g, obs, self.max_sources, check_target_kind(self.target))
        self.estimate_ = est
        self.observations_ = obs
        self.sources_ = np.array(est.sources, dtype=np.int64)
        self.n_sources_ = est.L
        return self

    def predict(self, X=None) -> np.ndarray:
        check_is_fitted(self, "estimate_")
        if X is None:
            return self.sources_.copy()
        obs = check_observations(X, self.graph)
        if obs == self.observations_:
            return self.sources_.copy()
        return np.array(scce(self.graph, obs, self.max_sources, self.target).sources, dtype=np.int64)

    def score(self, X, y) -> float:
        """Negative Delta error (eta = 0) against the true sources ``y``."""
        return -delta_metric(self.graph, np.ravel(y).tolist(), self.predict(X).tolist(), 0.0)


__all__ = ["BFSMLE", "GSSI", "SCCE", "TreeMLE", "check_observations"]
