"""Few-shot inference with support-initialised sequence prototypes.

Prototypes start as per-class support means. A query's predictive
distribution mixes the class softmax of appearance scores with the class
softmax of temporal scores, weighted ``1 - beta`` and ``beta``. Prototypes
can be refined before prediction either inductively (gradient descent on the
support cross-entropy) or transductively (soft K-means over supports and
queries, using the predictive distribution as the query assignment).
"""

from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentConfig, appearance_scores, pairwise_similarity, temporal_scores
from .errors import DimensionMismatch, MissingSupportLabel, ValidationError
from .linalg import softmax_row
from .losses import PrototypeBank, descend, objective

REFINE_MODES = ("none", "inductive", "transductive")


@dataclass(frozen=True)
class InferenceConfig:
    beta: float = 0.0  # 0.5 for order-sensitive data
    refine: str = "none"
    refine_iters: int = 10
    inductive_lr: float = 0.01
    inductive_steps: int = 50

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta must lie in [0, 1], got {self.beta}")
        if self.refine not in REFINE_MODES:
            raise ValidationError(f"refine must be one of {REFINE_MODES}, got {self.refine!r}")
        if self.refine_iters < 0 or self.inductive_steps < 0:
            raise ValidationError("iteration counts must be >= 0")
        if not self.inductive_lr > 0:
            raise ValidationError("inductive_lr must be positive")

    def to_dict(self):
        return dict(self.__dict__)


def _weighted_means(z, feats):
    # shared by init and soft K-means so an empty query set is an exact fixed point
    return np.einsum("vn,vmc->nmc", z, feats) / z.sum(axis=0)[:, None, None]


def init_prototypes(episode):
    """Per-class mean of the support feature matrices."""
    z = np.eye(episode.n_way)[episode.support_labels]
    return PrototypeBank(_weighted_means(z, episode.support))


def predict_batch(xs, bank, beta, acfg=AlignmentConfig()):
    """Predictive distributions for a stack of sequences, shape (Q, N)."""
    xs = np.asarray(xs, dtype=np.float64)
    if len(xs) == 0:
        return np.empty((0, bank.num_classes))
    d = pairwise_similarity(xs, bank.prototypes)
    p = softmax_row(appearance_scores(d, acfg.lam))
    if beta > 0:
        p = (1.0 - beta) * p + beta * softmax_row(temporal_scores(d, acfg.sigma))
    return p


def predict(x, bank, beta, acfg=AlignmentConfig()):
    if not 0.0 <= beta <= 1.0:
        raise ValidationError(f"beta must lie in [0, 1], got {beta}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != bank.prototypes.shape[1:]:
        raise DimensionMismatch(f"sequence {x.shape} vs prototypes {bank.prototypes.shape[1:]}")
    return predict_batch(x[None], bank, beta, acfg)[0]


def support_loss(bank, episode, acfg=AlignmentConfig()):
    sup, _, _ = objective(
        episode.support, episode.support_labels, bank.prototypes, acfg.lam, acfg.sigma, grad=False
    )
    return float(np.mean(sup))


def support_loss_grad(bank, episode, acfg=AlignmentConfig()):
    return objective(episode.support, episode.support_labels, bank.prototypes, acfg.lam, acfg.sigma)[2]


def refine_inductive(bank, episode, icfg=InferenceConfig(), acfg=AlignmentConfig()):
    """Fine-tune prototypes on the support cross-entropy of appearance logits.

    Plain gradient descent for ``icfg.inductive_steps`` steps; a step that
    raises the loss by more than 1e-3 is undone and the step size halved.
    """
    if icfg.inductive_steps == 0:
        return bank.copy()
    xs, ys = episode.support, episode.support_labels

    def loss_and_grad(w, idx):
        sup, _, gw = objective(xs, ys, w, acfg.lam, acfg.sigma, grad=idx is not None)
        return float(np.mean(sup)), gw

    full = np.arange(len(xs))
    steps = ([full] for _ in range(icfg.inductive_steps))
    rng = np.random.default_rng(0)
    w, history = descend(bank.prototypes, loss_and_grad, steps, icfg.inductive_lr, rng)
    return PrototypeBank(w, history)


def assignment(x, c, bank, beta, acfg=AlignmentConfig(), is_support=False, support_label=None):
    """Soft assignment of ``x`` to class ``c``: one-hot for supports, p(c|x) for queries."""
    if is_support:
        if support_label is None:
            raise MissingSupportLabel("support samples need a label")
        return 1.0 if int(support_label) == int(c) else 0.0
    return float(predict(x, bank, beta, acfg)[c])


def soft_kmeans_update(episode, query_assign):
    """One prototype update from fixed assignments.

    ``query_assign`` has shape (Q, N); supports are weighted one-hot by label.
    """
    z_s = np.eye(episode.n_way)[episode.support_labels]
    if len(episode.query) == 0:
        return _weighted_means(z_s, episode.support)
    z = np.concatenate([z_s, np.asarray(query_assign, dtype=np.float64)])
    return _weighted_means(z, np.concatenate([episode.support, episode.query]))


def refine_transductive(bank, episode, icfg=InferenceConfig(), acfg=AlignmentConfig()):
    """Soft K-means over supports and queries for ``icfg.refine_iters`` iterations.

    Every iteration recomputes all query assignments with the current
    prototypes, then sets each prototype to the assignment-weighted mean of
    the support and query feature matrices. Supports keep one-hot weights, so
    every denominator is at least K.
    """
    w = bank.prototypes
    for _ in range(icfg.refine_iters):
        z_q = predict_batch(episode.query, PrototypeBank(w), icfg.beta, acfg)
        w = soft_kmeans_update(episode, z_q)
    return PrototypeBank(w)


def refine(bank, episode, icfg, acfg):
    if icfg.refine == "inductive":
        return refine_inductive(bank, episode, icfg, acfg)
    if icfg.refine == "transductive":
        return refine_transductive(bank, episode, icfg, acfg)
    return bank


def classify_episode(episode, icfg=InferenceConfig(), acfg=AlignmentConfig(), bank=None):
    """Predicted labels and probability rows for the episode's queries.

    ``bank`` overrides the support-mean initialisation (it must hold one
    prototype per episode class, in episode label order).
    """
    bank = init_prototypes(episode) if bank is None else bank
    bank = refine(bank, episode, icfg, acfg)
    probs = predict_batch(episode.query, bank, icfg.beta, acfg)
    # np.argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(probs, axis=1) if len(probs) else np.empty(0, dtype=np.int64), probs
