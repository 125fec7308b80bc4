"""Small dense kernels shared by the scoring and training code.

Vectors and matrices are plain float64 numpy arrays; ``as_vector`` and
``as_matrix`` do the validation. The reductions take an ``axis`` so the
batched callers can apply them to stacks of similarity matrices.
"""

import numpy as np

from .errors import DimensionMismatch, EmptyVector, NonFiniteValue, ZeroNormVector

NORM_FLOOR = 1e-12


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{what} contains NaN or Inf")
    return arr


def as_vector(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    return _finite(v, "vector")


def as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {a.shape}")
    return _finite(a, "matrix")


def cosine_sim(a, b):
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"length {a.size} vs {b.size}")
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    if na < NORM_FLOOR or nb < NORM_FLOOR:
        raise ZeroNormVector("cannot take the cosine of a (near) zero vector")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def row_norms(x):
    return np.sqrt(np.einsum("...c,...c->...", x, x))


def unit_rows(x):
    """Scale every row along the last axis to unit length.

    Returns ``(unit, norms)``. Raises ZeroNormVector if any row norm is
    below the 1e-12 floor.
    """
    x = np.asarray(x, dtype=np.float64)
    norms = row_norms(x)
    if np.any(norms < NORM_FLOOR):
        raise ZeroNormVector("feature row with norm below 1e-12")
    return x / norms[..., None], norms


def log_sum_exp(v, lam=1.0, axis=-1):
    r"""Temperature-scaled log-sum-exp, a smooth upper bound on ``max``.

    Computes :math:`\lambda \log \sum_j \exp(v_j / \lambda)` with the
    maximum subtracted first, so ``max(v) <= result <= max(v) + lam*log(n)``.

    Parameters
    ----------
    v : array-like
        Values; reduced along ``axis``.
    lam : float
        Temperature, > 0.
    axis : int
        Axis to reduce.

    Returns
    -------
    float or ndarray
        A Python float when ``v`` is 1-d, otherwise an array with ``axis``
        removed.
    """
    if not lam > 0:
        raise ValueError(f"temperature must be positive, got {lam}")
    v = np.asarray(v, dtype=np.float64)
    if v.shape[axis] == 0:
        raise EmptyVector("log_sum_exp of an empty vector")
    _finite(v, "log_sum_exp input")
    vmax = np.max(v, axis=axis, keepdims=True)
    out = lam * np.log(np.sum(np.exp((v - vmax) / lam), axis=axis, keepdims=True)) + vmax
    out = np.squeeze(out, axis=axis)
    return float(out) if out.ndim == 0 else out


def softmax_row(v, axis=-1):
    """Max-subtracted softmax along ``axis`` (rows by default)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[axis] == 0:
        raise EmptyVector("softmax of an empty vector")
    _finite(v, "softmax input")
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax_row(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
