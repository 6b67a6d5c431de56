"""Single-source estimation from partial timestamps.

Every candidate source ``s`` is scored by the profile log-likelihood of a
Gaussian linear model ``T ~ N(D_s beta, sigma^2 C_s)`` where ``D_s`` has rows
``[1, d(s, v_k)]`` and ``C_s`` is a Gromov-type covariance built from BFS trees
rooted at ``s``.  Smaller scores are better:

    score = n log(R / n) + log det C_s

with ``R`` the generalized-least-squares residual quadratic form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.linalg.lapack import dpotrf, dtrtrs

from .diffusion import Observations, ObservationError
from .graph import ASCENDING, DESCENDING, Graph, GraphError, bfs_tree, shortest_distances
from .gromov import SCALED_IDENTITY, check_target_kind, gromov_products, target_matrix

R_FLOOR = 1e-12
GRID_POINTS = 21
GOLDEN_TOL = 1e-3
_INV_PHI = (math.sqrt(5) - 1) / 2


class InfeasibleError(ArithmeticError):
    """A candidate cannot be scored (unreachable observation, singular system)."""


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class GlsFit:
    t0: float
    mu: float
    residual: float
    logdet: float
    log_score: float

    @property
    def beta(self) -> tuple[float, float]:
        return self.t0, self.mu


@dataclass(frozen=True)
class CandidateScore:
    candidate: int
    theta: float
    alpha: float
    fit: GlsFit | None  # None when infeasible
    n: int

    @property
    def log_score(self) -> float:
        return math.inf if self.fit is None else self.fit.log_score

    @property
    def feasible(self) -> bool:
        return self.fit is not None

    @property
    def sigma2_hat(self) -> float:
        return math.nan if self.fit is None else self.fit.residual / self.n


@dataclass(frozen=True)
class SingleSourceEstimate:
    source: int
    t0: float
    mu: float
    sigma2: float
    theta: float
    alpha: float
    ranking: list[CandidateScore] = field(repr=False)

    @property
    def log_score(self) -> float:
        return self.ranking[0].log_score

    def rank_of(self, node: int) -> int | None:
        """1-based rank of ``node`` among feasible candidates, or None."""
        for i, c in enumerate(self.ranking, start=1):
            if c.candidate == node:
                return i if c.feasible else None
        return None

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "t0": self.t0,
            "mu": self.mu,
            "sigma2": self.sigma2,
            "alpha": None if math.isnan(self.alpha) else self.alpha,
            "theta": None if math.isnan(self.theta) else self.theta,
            "ranking": [
                {"node": c.candidate, "log_score": c.log_score if c.feasible else None}
                for c in self.ranking
            ],
        }


# -- linear algebra ------------------------------------------------------------


def design_matrix(g: Graph, s: int, obs: Observations) -> np.ndarray:
    """Rows ``[1, d_G(s, v_k)]``; raises ``InfeasibleError`` if an observed node is unreachable."""
    dist = shortest_distances(g, s)[obs.nodes]
    if np.any(dist < 0):
        raise InfeasibleError(f"observed node {int(obs.nodes[np.argmax(dist < 0)])} unreachable from {s}")
    return np.column_stack([np.ones(len(dist)), dist.astype(np.float64)])


def gls_fit(D, cov, T) -> GlsFit:
    """Generalized least squares of ``T`` on ``D`` under covariance ``cov`` via Cholesky."""
    D = np.asarray(D, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    n = len(T)
    if n < 3:
        raise EstimationError(f"need at least 3 observations, got {n}")
    L, info = dpotrf(cov, lower=1, clean=0)
    if info != 0:
        raise InfeasibleError("covariance is not positive definite")
    rhs = np.empty((n, 3))
    rhs[:, :2] = D
    rhs[:, 2] = T
    W, info = dtrtrs(L, rhs, lower=1)
    Z, y = W[:, :2], W[:, 2]
    G = Z.T @ Z
    det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    if not det > 1e-10 * G[0, 0] * G[1, 1]:
        raise InfeasibleError("normal equations are singular (observed nodes equidistant from the candidate)")
    b = Z.T @ y
    t0 = (G[1, 1] * b[0] - G[0, 1] * b[1]) / det
    mu = (G[0, 0] * b[1] - G[1, 0] * b[0]) / det
    r = y - Z[:, 0] * t0 - Z[:, 1] * mu
    R = float(r @ r)
    logdet = 2.0 * float(np.log(L.diagonal()).sum())
    score = n * math.log(max(R, R_FLOOR) / n) + logdet
    return GlsFit(float(t0), float(mu), R, logdet, score)


def _score_or_inf(D, cov, T) -> float:
    try:
        return gls_fit(D, cov, T).log_score
    except InfeasibleError:
        return math.inf


# -- 1-D optimisation ----------------------------------------------------------


def optimize_unit_interval(objective: Callable[[float], float], grid: int = GRID_POINTS, tol: float = GOLDEN_TOL) -> tuple[float, float]:
    """Minimise ``objective`` on [0, 1]: coarse grid, then golden-section on the bracket.

    Returns the best point evaluated; the earliest grid point wins ties.
    """
    xs = np.linspace(0.0, 1.0, grid)
    fs = [objective(float(x)) for x in xs]
    k = int(np.argmin(fs))
    best_x, best_f = float(xs[k]), fs[k]
    if not math.isfinite(best_f):
        raise EstimationError("objective is infinite on the whole grid")
    a, b = float(xs[max(k - 1, 0)]), float(xs[min(k + 1, grid - 1)])
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = objective(c), objective(d)
    for x, f in ((c, fc), (d, fd)):
        if f < best_f:
            best_x, best_f = x, f
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = objective(c)
            x, f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = objective(d)
            x, f = d, fd
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f


# -- candidate scoring ---------------------------------------------------------


def _check_obs(obs: Observations, g: Graph) -> Observations:
    if len(obs) < 3:
        raise EstimationError(f"need at least 3 observations, got {len(obs)}")
    obs.validate_against(g)
    return obs


def _candidate_set(g: Graph, obs: Observations, candidates: Iterable[int] | None) -> list[int]:
    observed = set(obs.nodes.tolist())
    if candidates is None:
        return [v for v in range(g.node_count) if v not in observed]
    out = sorted({g.check_node(v) for v in candidates})
    clash = [v for v in out if v in observed]
    if clash:
        raise EstimationError(f"candidates {clash[:5]} are observed nodes")
    return out


def _trees(g: Graph, s: int, obs: Observations, both: bool):
    t1 = bfs_tree(g, s, ASCENDING)
    depth = t1.depth[obs.nodes]
    if np.any(depth < 0):
        raise InfeasibleError(f"observed node unreachable from {s}")
    D = np.column_stack([np.ones(len(depth)), depth.astype(np.float64)])
    lam1 = gromov_products(t1, obs.nodes)
    if not both:
        return D, lam1, None
    lam2 = gromov_products(bfs_tree(g, s, DESCENDING), obs.nodes)
    return D, lam1, lam2


def score_tree_candidate(g: Graph, s: int, obs: Observations) -> CandidateScore:
    """Tree-MLE / BFS-MLE score of one candidate using the ascending BFS tree."""
    n = len(obs)
    try:
        D, lam, _ = _trees(g, s, obs, both=False)
        return CandidateScore(s, 1.0, 0.0, gls_fit(D, lam.astype(np.float64), obs.times), n)
    except InfeasibleError:
        return CandidateScore(s, math.nan, math.nan, None, n)


def score_gssi_candidate(g: Graph, s: int, obs: Observations, target_kind: str = SCALED_IDENTITY, optimize_alpha: bool = True) -> CandidateScore:
    """Fit the mixing weight theta, then (optionally) the shrinkage weight alpha, for candidate ``s``."""
    n = len(obs)
    T = obs.times
    try:
        D, lam1, lam2 = _trees(g, s, obs, both=True)
    except InfeasibleError:
        return CandidateScore(s, math.nan, math.nan, None, n)
    lam1 = lam1.astype(np.float64)
    if np.array_equal(lam1, lam2):
        theta, M = 1.0, lam1
    else:
        lam2 = lam2.astype(np.float64)
        diff = lam1 - lam2
        try:
            theta, _ = optimize_unit_interval(lambda th: _score_or_inf(D, lam2 + th * diff, T))
        except EstimationError:
            return CandidateScore(s, math.nan, math.nan, None, n)
        M = lam2 + theta * diff
    alpha = 0.0
    if optimize_alpha:
        H = target_matrix(M, target_kind)
        step = H - M
        try:
            alpha, _ = optimize_unit_interval(lambda a: _score_or_inf(D, M + a * step, T))
        except EstimationError:
            return CandidateScore(s, theta, math.nan, None, n)
        A = M + alpha * step
    else:
        A = M
    try:
        fit = gls_fit(D, A, T)
    except InfeasibleError:
        return CandidateScore(s, theta, alpha, None, n)
    return CandidateScore(s, theta, alpha, fit, n)


def _finish(scores: Sequence[CandidateScore]) -> SingleSourceEstimate:
    ranking = sorted(scores, key=lambda c: (c.log_score, c.candidate))
    if not ranking or not ranking[0].feasible:
        raise EstimationError("no feasible candidate source")
    best = ranking[0]
    return SingleSourceEstimate(
        source=best.candidate,
        t0=best.fit.t0,
        mu=best.fit.mu,
        sigma2=best.sigma2_hat,
        theta=best.theta,
        alpha=best.alpha,
        ranking=ranking,
    )


# -- estimators ----------------------------------------------------------------


def mle_tree(g: Graph, obs: Observations, candidates: Iterable[int] | None = None) -> SingleSourceEstimate:
    """Exact joint MLE of source, start time, mean and variance when ``g`` is a tree."""
    if not g.is_tree():
        raise GraphError("graph is not a tree")
    _check_obs(obs, g)
    return _finish([score_tree_candidate(g, s, obs) for s in _candidate_set(g, obs, candidates)])


def bfs_mle(g: Graph, obs: Observations, candidates: Iterable[int] | None = None) -> SingleSourceEstimate:
    """Tree MLE applied to one ascending BFS tree per candidate."""
    _check_obs(obs, g)
    return _finish([score_tree_candidate(g, s, obs) for s in _candidate_set(g, obs, candidates)])


def gssi(g: Graph, obs: Observations, target_kind: str = SCALED_IDENTITY, candidates: Iterable[int] | None = None) -> SingleSourceEstimate:
    """Score every candidate on an optimised blend of two BFS-tree Gromov matrices and a diagonal target."""
    check_target_kind(target_kind)
    _check_obs(obs, g)
    return _finish([score_gssi_candidate(g, s, obs, target_kind) for s in _candidate_set(g, obs, candidates)])


def naive_gssi(g: Graph, obs: Observations, candidates: Iterable[int] | None = None) -> SingleSourceEstimate:
    """GSSI without the shrinkage step (alpha fixed at 0)."""
    _check_obs(obs, g)
    return _finish([score_gssi_candidate(g, s, obs, optimize_alpha=False) for s in _candidate_set(g, obs, candidates)])


ALGORITHMS = {
    "gssi": gssi,
    "mle-tree": mle_tree,
    "bfs-mle": bfs_mle,
    "naive-gssi": naive_gssi,
}


# -- shrinkage-objective analysis -----------------------------------------------


@dataclass(frozen=True)
class ShrinkageTerms:
    """``f = f1 + f2 / sigma2`` with ``f1 = log det A(alpha)``, ``f2 = U' A(alpha)^-1 U``."""

    f: float
    f1: float
    f2: float
    df: float
    df1: float
    df2: float
    d2f1: float
    d2f2: float


def _f_parts(alpha, cov, target, residual):
    A = alpha * target + (1 - alpha) * cov
    try:
        L = cholesky(A, lower=True, check_finite=False)
    except LinAlgError:
        raise InfeasibleError(f"A({alpha}) is not positive definite") from None
    f1 = 2.0 * float(np.sum(np.log(np.diag(L))))
    z = solve_triangular(L, residual, lower=True, check_finite=False)
    return A, L, f1, float(z @ z)


def shrinkage_objective(alpha: float, cov, target, residual, sigma2: float) -> ShrinkageTerms:
    """Value and analytic first/second alpha-derivatives of the shrinkage objective."""
    cov = np.asarray(cov, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    residual = np.asarray(residual, dtype=np.float64)
    A, L, f1, f2 = _f_parts(alpha, cov, target, residual)
    E = target - cov
    Ainv_E = np.linalg.solve(A, E)  # A^-1 (H - Lambda)
    Ainv_u = np.linalg.solve(A, residual)
    df1 = float(np.trace(Ainv_E))
    d2f1 = -float(np.sum(Ainv_E * Ainv_E.T))
    df2 = -float(Ainv_u @ E @ Ainv_u)
    v = E @ Ainv_u
    d2f2 = 2.0 * float(v @ np.linalg.solve(A, v))
    return ShrinkageTerms(f1 + f2 / sigma2, f1, f2, df1 + df2 / sigma2, df1, df2, d2f1, d2f2)


def shrinkage_objective_fd(alpha: float, cov, target, residual, h: float = 1e-5) -> tuple[float, float]:
    """Central finite differences of ``f1`` and ``f2`` at ``alpha``, with one Richardson step.

    The step removes the O(h^2) term, which dominates where ``f2`` is sharply curved.
    """

    def central(step):
        _, _, f1p, f2p = _f_parts(alpha + step, cov, target, residual)
        _, _, f1m, f2m = _f_parts(alpha - step, cov, target, residual)
        return np.array([f1p - f1m, f2p - f2m]) / (2 * step)

    d = (4 * central(h / 2) - central(h)) / 3
    return float(d[0]), float(d[1])
