"""Appearance and temporal alignment scores between frame-feature sequences.

A sequence is an ``(M, C)`` array, one row per sampled frame. Every score
is built from the ``(M, M)`` cosine similarity matrix ``D`` between the
frames of two sequences:

* ``sim_a``  -- sum over rows of a log-sum-exp smoothed row maximum
  (order blind);
* ``sim_t``  -- negative mean-row KL divergence between the row softmax of
  ``D`` and a row-normalised Gaussian band around the diagonal (order aware);
* ``sim_max`` and ``sim_ot`` -- hard-max and Sinkhorn optimal-transport
  aggregations of ``D``, kept as baselines.

The ``*_scores`` functions take stacks of similarity matrices ``(..., M, M)``
and are what the classifier and trainer use; the pairwise functions are thin
wrappers over them.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .errors import DimensionMismatch, SinkhornNotConverged
from .linalg import as_matrix, log_softmax_row, log_sum_exp, softmax_row, unit_rows


@dataclass(frozen=True)
class AlignmentConfig:
    lam: float = 0.1  # log-sum-exp temperature
    sigma: float = 1.0  # std of the diagonal prior
    sinkhorn_iters: int = 100
    sinkhorn_eps: float = 0.05
    sinkhorn_tol: float = 1e-6

    def __post_init__(self):
        for name in ("lam", "sigma", "sinkhorn_eps", "sinkhorn_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sinkhorn_iters < 1:
            raise ValueError("sinkhorn_iters must be >= 1")

    def to_dict(self):
        return {
            "lambda": self.lam,
            "sigma": self.sigma,
            "sinkhorn_iters": self.sinkhorn_iters,
            "sinkhorn_eps": self.sinkhorn_eps,
            "sinkhorn_tol": self.sinkhorn_tol,
        }


@dataclass(frozen=True)
class AlignmentMatrices:
    d: np.ndarray
    d_tilde: np.ndarray
    t: np.ndarray
    t_tilde: np.ndarray


def _check_pair(x, y):
    x = as_matrix(x)
    y = as_matrix(y)
    if x.shape != y.shape:
        raise DimensionMismatch(f"sequence shapes differ: {x.shape} vs {y.shape}")
    return x, y


def pairwise_similarity(xs, ys):
    """Cosine similarity matrices for every pair in two stacks.

    ``xs`` is ``(A, M, C)`` and ``ys`` is ``(B, M, C)``; the result is
    ``(A, B, M, M)`` with entry ``[a, b, i, j] = cos(xs[a, i], ys[b, j])``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 3 or ys.ndim != 3 or xs.shape[1:] != ys.shape[1:]:
        raise DimensionMismatch(f"incompatible stacks {xs.shape} and {ys.shape}")
    xu, _ = unit_rows(xs)
    yu, _ = unit_rows(ys)
    return np.clip(np.einsum("aic,bjc->abij", xu, yu), -1.0, 1.0)


def similarity_matrix(x, y):
    x, y = _check_pair(x, y)
    return pairwise_similarity(x[None], y[None])[0, 0]


@lru_cache(maxsize=64)
def _prior(m, sigma):
    idx = np.arange(m)
    dist = np.abs(idx[:, None] - idx[None, :]) / math.sqrt(2.0)
    t = np.exp(-(dist**2) / (2.0 * sigma**2)) / (sigma * math.sqrt(2.0 * math.pi))
    t_tilde = t / t.sum(axis=1, keepdims=True)
    log_t_tilde = np.log(t_tilde)
    for arr in (t, t_tilde, log_t_tilde):
        arr.setflags(write=False)
    return t, t_tilde, log_t_tilde


def temporal_prior(m, sigma=1.0):
    """Gaussian band around the diagonal: ``T[i, j]`` decays with ``|i - j|``.

    The distance of entry ``(i, j)`` to the diagonal is ``|i - j| / sqrt(2)``
    and the band has standard deviation ``sigma``. The returned array is a
    shared read-only instance per ``(m, sigma)``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return _prior(int(m), float(sigma))[0]


def normalize_pair(d, t):
    """Row-normalise ``d`` by softmax and ``t`` by plain division."""
    d = as_matrix(d)
    t = as_matrix(t)
    if d.shape != t.shape or d.shape[0] != d.shape[1]:
        raise DimensionMismatch(f"need two equal square matrices, got {d.shape}, {t.shape}")
    if np.any(t <= 0):
        raise ValueError("prior must be strictly positive")
    return softmax_row(d), t / t.sum(axis=1, keepdims=True)


def alignment_matrices(x, y, cfg=AlignmentConfig()):
    d = similarity_matrix(x, y)
    t = temporal_prior(d.shape[0], cfg.sigma)
    d_tilde, t_tilde = normalize_pair(d, t)
    return AlignmentMatrices(d=d, d_tilde=d_tilde, t=t, t_tilde=t_tilde)


# Batched aggregations over stacks of similarity matrices (..., M, M)


def appearance_scores(d, lam=0.1):
    return log_sum_exp(d, lam, axis=-1).sum(axis=-1)


def max_scores(d):
    return np.max(d, axis=-1).sum(axis=-1)


def temporal_scores(d, sigma=1.0):
    m = d.shape[-1]
    _, _, log_t_tilde = _prior(m, float(sigma))
    log_d_tilde = log_softmax_row(d)
    kl_rows = np.sum(np.exp(log_d_tilde) * (log_d_tilde - log_t_tilde), axis=-1)
    return -kl_rows.sum(axis=-1) / m


def entropy_scores(d):
    """Mean row entropy of the row softmax of ``d``; lies in [0, ln M]."""
    m = d.shape[-1]
    log_d_tilde = log_softmax_row(d)
    return -np.sum(np.exp(log_d_tilde) * log_d_tilde, axis=(-2, -1)) / m


# Pairwise scores


def sim_a(x, y, cfg=AlignmentConfig()):
    """Appearance score: sum over frames of ``x`` of the smoothed best match in ``y``.

    Not symmetric in ``(x, y)``.
    """
    return float(appearance_scores(similarity_matrix(x, y), cfg.lam))


def sim_t(x, y, cfg=AlignmentConfig()):
    """Temporal score, ``-KL(D_tilde || T_tilde)`` averaged over rows; always <= 0."""
    return float(temporal_scores(similarity_matrix(x, y), cfg.sigma))


def sim_max(x, y):
    return float(max_scores(similarity_matrix(x, y)))


def sinkhorn_plan(d, eps=0.05, max_iter=100, tol=1e-6):
    """Entropic OT plan between uniform marginals with cost ``-d``.

    Log-domain Sinkhorn; stable for small ``eps``. Stops once the row
    marginal error (columns are exact after each sweep) drops below ``tol``.

    Returns
    -------
    plan : ndarray, shape (M, M)
        Transport plan with total mass 1.
    residual : float
        Max absolute deviation of row and column sums from ``1/M``.
    n_iter : int
        Sweeps performed.
    """
    d = as_matrix(d)
    m, n = d.shape
    log_a = np.full(m, -math.log(m))
    log_b = np.full(n, -math.log(n))
    f = np.zeros(m)
    g = np.zeros(n)
    k = d / eps  # -cost / eps
    residual = np.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        f = log_a - log_sum_exp(k + g[None, :], 1.0, axis=1)
        g = log_b - log_sum_exp(k + f[:, None], 1.0, axis=0)
        plan = np.exp(k + f[:, None] + g[None, :])
        residual = max(
            np.max(np.abs(plan.sum(axis=1) - 1.0 / m)),
            np.max(np.abs(plan.sum(axis=0) - 1.0 / n)),
        )
        if residual < tol:
            break
    return plan, float(residual), n_iter


def sim_ot(x, y, cfg=AlignmentConfig()):
    """Total similarity ``<P, D>`` under the entropic OT plan ``P``.

    Raises SinkhornNotConverged (carrying the plan and score) when the
    marginal error is still above ``cfg.sinkhorn_tol`` at the iteration cap.
    """
    d = similarity_matrix(x, y)
    plan, residual, n_iter = sinkhorn_plan(
        d, cfg.sinkhorn_eps, cfg.sinkhorn_iters, cfg.sinkhorn_tol
    )
    score = float(np.sum(plan * d))
    if residual >= cfg.sinkhorn_tol:
        raise SinkhornNotConverged(residual, plan=plan, score=score, n_iter=n_iter)
    return score
