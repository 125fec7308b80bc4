"""Prototype-bank training objective with analytic gradients.

Per labeled sample ``(x, y)`` against a bank ``W`` of ``(M, C)`` prototypes:

    sup   = -log softmax_p(sim_a(x, W_p))[y] - alpha * sim_t(x, W_y)
    info  = mean row entropy of softmax_rows(D(x, W_y))
    total = sup + nu * info

averaged over a batch. Gradients flow through the row log-sum-exp, the row
softmax / KL / entropy terms and the cosine similarity back to the
prototype rows; no autodiff is involved.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np

from .alignment import AlignmentConfig, _prior, pairwise_similarity
from .episodes import Dataset, load_features, save_features
from .errors import DimensionMismatch, EmptyBatch, MissingClass, ValidationError
from .linalg import NORM_FLOOR, log_softmax_row, log_sum_exp, row_norms, softmax_row, unit_rows

REJITTER_STD = 1e-6


@dataclass
class PrototypeBank:
    prototypes: np.ndarray  # (N, M, C)
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.prototypes.ndim != 3:
            raise DimensionMismatch(f"prototypes must be (N, M, C), got {self.prototypes.shape}")

    @property
    def num_classes(self):
        return self.prototypes.shape[0]

    def copy(self):
        return PrototypeBank(self.prototypes.copy(), list(self.loss_history))


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.0  # temporal term weight; 0.05 for order-sensitive data
    nu: float = 0.1  # entropy term weight
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.nu < 0:
            raise ValidationError("alpha and nu must be >= 0")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class LossBreakdown:
    sup: float
    info: float
    total: float


def _as_batch(xs, labels, bank):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[None]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if len(xs) == 0:
        raise EmptyBatch("empty batch")
    if len(labels) != len(xs):
        raise DimensionMismatch("one label per sample required")
    w = bank.prototypes if isinstance(bank, PrototypeBank) else np.asarray(bank, dtype=np.float64)
    if xs.shape[1:] != w.shape[1:]:
        raise DimensionMismatch(f"samples {xs.shape[1:]} vs prototypes {w.shape[1:]}")
    if np.any(labels < 0) or np.any(labels >= w.shape[0]):
        raise ValidationError(f"labels must lie in 0..{w.shape[0] - 1}")
    return xs, labels, w


def objective(xs, labels, w, lam=0.1, sigma=1.0, alpha=0.0, nu=0.0, grad=True):
    """Batch-mean loss terms and (optionally) the gradient w.r.t. ``w``.

    Parameters
    ----------
    xs : ndarray, shape (B, M, C)
    labels : ndarray, shape (B,)
    w : ndarray, shape (N, M, C)

    Returns
    -------
    sup, info : ndarray, shape (B,)
        Per-sample supervised and entropy losses.
    gw : ndarray, shape (N, M, C) or None
        Gradient of ``mean(sup) + nu * mean(info)``.
    """
    b, m, _ = xs.shape
    xu, _ = unit_rows(xs)
    wu, wn = unit_rows(w)
    d = np.clip(np.einsum("bic,njc->bnij", xu, wu), -1.0, 1.0)  # (B, N, M, M)

    a = log_sum_exp(d, lam, axis=-1).sum(axis=-1)  # (B, N) appearance logits
    log_p = log_softmax_row(a)
    rows = np.arange(b)
    ce = -log_p[rows, labels]

    d_y = d[rows, labels]  # (B, M, M)
    log_dt = log_softmax_row(d_y)
    dt = np.exp(log_dt)
    log_tt = _prior(m, float(sigma))[2]
    kl_rows = np.sum(dt * (log_dt - log_tt), axis=-1)  # (B, M)
    ent_rows = -np.sum(dt * log_dt, axis=-1)
    sup = ce + alpha * kl_rows.sum(axis=-1) / m  # -alpha * sim_t
    info = ent_rows.sum(axis=-1) / m
    if not grad:
        return sup, info, None

    # dL/dD for every (sample, prototype) pair, batch mean folded in
    g_logits = np.exp(log_p)
    g_logits[rows, labels] -= 1.0
    g = g_logits[..., None, None] * softmax_row(d / lam)
    g_y = (alpha / m) * dt * (log_dt - log_tt - kl_rows[..., None])
    g_y -= (nu / m) * dt * (log_dt + ent_rows[..., None])
    g[rows, labels] += g_y
    g /= b

    # back through D[i, j] = <xu_i, wu_j>
    gw = np.einsum("bnij,bic->njc", g, xu)
    gw -= np.einsum("bnij,bnij->nj", g, d)[..., None] * wu
    gw /= wn[..., None]
    return sup, info, gw


def loss_sup(x, label, bank, acfg=AlignmentConfig(), lcfg=LossConfig()):
    xs, labels, w = _as_batch(x, label, bank)
    sup, _, _ = objective(xs, labels, w, acfg.lam, acfg.sigma, lcfg.alpha, 0.0, grad=False)
    return float(sup[0])


def loss_info(x, label, bank):
    """Mean row entropy of the row softmax of ``D(x, W_label)``, in [0, ln M]."""
    xs, labels, w = _as_batch(x, label, bank)
    d = pairwise_similarity(xs, w[labels])[0, 0]
    m = d.shape[-1]
    log_dt = log_softmax_row(d)
    return float(-np.sum(np.exp(log_dt) * log_dt) / m)


def total_loss_batch(batch, bank, acfg=AlignmentConfig(), lcfg=LossConfig()):
    """Mean losses over ``batch``, a sequence of ``(features, label)`` pairs."""
    if len(batch) == 0:
        raise EmptyBatch("empty batch")
    xs, labels = zip(*batch)
    xs, labels, w = _as_batch(np.stack([np.asarray(x) for x in xs]), labels, bank)
    sup, info, _ = objective(xs, labels, w, acfg.lam, acfg.sigma, lcfg.alpha, lcfg.nu, grad=False)
    s, i = float(np.mean(sup)), float(np.mean(info))
    return LossBreakdown(sup=s, info=i, total=s + lcfg.nu * i)


def grad_prototypes(batch, bank, acfg=AlignmentConfig(), lcfg=LossConfig()):
    """Gradient of ``total_loss_batch(...).total`` w.r.t. every prototype, shape (N, M, C)."""
    if len(batch) == 0:
        raise EmptyBatch("empty batch")
    xs, labels = zip(*batch)
    xs, labels, w = _as_batch(np.stack([np.asarray(x) for x in xs]), labels, bank)
    return objective(xs, labels, w, acfg.lam, acfg.sigma, lcfg.alpha, lcfg.nu)[2]


def init_bank(num_classes, m, c, seed):
    rng = np.random.default_rng(seed)
    return PrototypeBank(rng.standard_normal((num_classes, m, c)) / math.sqrt(c))


def rejitter(w, rng):
    """Nudge rows whose norm fell below the floor; modifies ``w`` in place."""
    low = row_norms(w) < NORM_FLOOR
    if np.any(low):
        w[low] += REJITTER_STD * rng.standard_normal((int(low.sum()), w.shape[-1]))
    return w


def descend(w, loss_and_grad, steps, lr, rng, tol=1e-3):
    """Gradient descent with a halve-on-increase safeguard.

    ``loss_and_grad(w, idx)`` returns ``(loss, grad)`` for the mini-batch
    ``idx`` (``None`` means the full set). ``steps`` yields one list of
    mini-batch index arrays per checkpoint. After each checkpoint the
    full-set loss is recomputed; if it rose by more than ``tol`` the
    checkpoint is rolled back and the learning rate halved.

    Returns the final ``w`` and the list of accepted checkpoint losses.
    """
    history = [loss_and_grad(w, None)[0]]
    for batches in steps:
        trial = w.copy()
        for idx in batches:
            _, gw = loss_and_grad(trial, idx)
            trial -= lr * gw
            rejitter(trial, rng)
        loss = loss_and_grad(trial, None)[0]
        if loss > history[-1] + tol:
            lr *= 0.5
            history.append(history[-1])
            continue
        w = trial
        history.append(loss)
    return w, history


def train_prototypes(dataset, lcfg=LossConfig(), acfg=AlignmentConfig(), num_classes=None):
    """Fit a prototype bank on labeled sequences by mini-batch SGD.

    ``dataset`` is either a :class:`~ata.episodes.Dataset` or a list of
    ``(features, label)`` pairs. Prototype rows start i.i.d. normal scaled by
    ``1/sqrt(C)`` from ``lcfg.seed``. The bank's ``loss_history`` holds the
    full-set total loss at initialisation and after every epoch.
    """
    if hasattr(dataset, "features"):
        xs = np.asarray(dataset.features, dtype=np.float64)
        labels = np.asarray(dataset.labels, dtype=np.int64)
        num_classes = num_classes or dataset.num_classes
    else:
        if len(dataset) == 0:
            raise EmptyBatch("empty training set")
        xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in dataset])
        labels = np.asarray([y for _, y in dataset], dtype=np.int64)
    if len(xs) == 0:
        raise EmptyBatch("empty training set")
    num_classes = num_classes or int(labels.max()) + 1
    missing = sorted(set(range(num_classes)) - set(labels.tolist()))
    if missing:
        raise MissingClass(f"no samples for classes {missing}")

    _, m, c = xs.shape
    bank = init_bank(num_classes, m, c, lcfg.seed)
    rng = np.random.default_rng([lcfg.seed, 1])

    def loss_and_grad(w, idx):
        if idx is None:
            sup, info, _ = objective(xs, labels, w, acfg.lam, acfg.sigma, lcfg.alpha, lcfg.nu, False)
            return float(np.mean(sup) + lcfg.nu * np.mean(info)), None
        sup, info, gw = objective(xs[idx], labels[idx], w, acfg.lam, acfg.sigma, lcfg.alpha, lcfg.nu)
        return None, gw

    def epochs():
        for _ in range(lcfg.epochs):
            order = rng.permutation(len(xs))
            yield [order[i : i + lcfg.batch_size] for i in range(0, len(xs), lcfg.batch_size)]

    w, history = descend(bank.prototypes, loss_and_grad, epochs(), lcfg.learning_rate, rng)
    return PrototypeBank(w, history)


def nearest_prototype(xs, bank, acfg=AlignmentConfig()):
    """Argmax of ``sim_a`` over the bank for each sequence in ``xs``."""
    d = pairwise_similarity(np.asarray(xs, dtype=np.float64), bank.prototypes)
    return np.argmax(log_sum_exp(d, acfg.lam, axis=-1).sum(axis=-1), axis=1)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, bank, lcfg=LossConfig(), acfg=AlignmentConfig()):
    """Write the bank as a feature container plus a ``<path>.json`` sidecar."""
    n = bank.num_classes
    save_features(path, Dataset(bank.prototypes, np.arange(n), [f"prototype_{p}" for p in range(n)]))
    meta = {
        "seed": lcfg.seed,
        "alpha": lcfg.alpha,
        "nu": lcfg.nu,
        "lambda": acfg.lam,
        "sigma": acfg.sigma,
        "epochs": lcfg.epochs,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(bank, meta)``; prototypes come back as float32-exact float64."""
    ds = load_features(path)
    order = np.argsort(ds.labels, kind="stable")
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    return PrototypeBank(ds.features[order].astype(np.float64)), meta
