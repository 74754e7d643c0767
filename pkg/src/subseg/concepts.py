"""Discriminative latent concept learning.

A bank of cluster-center vectors lives in the joint embedding space.  The
initial anchors are drawn once from the deterministic PRNG (uniform in
[-1, 1], rows L2-normalized) and stay frozen; a learnable affine map
(full square matrix plus bias, shared across rows) turns them into the
working concepts.  Attention over the concepts pools them into a single
attended vector; a softmax over cosine similarities between that vector
and each concept yields per-concept confidences.  The contrastive loss
rewards the best-matching concept against all the others; its
normalizing sum deliberately excludes the best index, so the value can
go negative.  No gradient flows through the argmax picking the best
index.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DegenerateInputError, DimensionError
from .numerics import NORM_GUARD, cosine_sim, softmax


class ConceptBank:
    """Frozen anchor vectors with a learnable affine adjustment."""

    def __init__(self, anchors, weight, bias):
        self.anchors = np.asarray(anchors, dtype=float)
        self.weight = np.asarray(weight, dtype=float)
        self.bias = np.asarray(bias, dtype=float)
        if self.anchors.ndim != 2:
            raise DimensionError(f"anchors must be 2-D, got shape {self.anchors.shape}")
        if self.anchors.shape[0] < 2:
            raise ConfigError("concept bank needs at least 2 concepts")
        d = self.anchors.shape[1]
        if self.weight.shape != (d, d) or self.bias.shape != (d,):
            raise DimensionError(
                f"affine shapes {self.weight.shape}/{self.bias.shape} do not fit dim {d}"
            )
        self.anchors.setflags(write=False)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @classmethod
    def build(cls, count, dim, rng):
        if count < 2:
            raise ConfigError(f"concept count must be >= 2, got {count}")
        anchors = rng.uniform(-1.0, 1.0, size=(count, dim))
        norms = np.linalg.norm(anchors, axis=1)
        anchors = anchors / np.maximum(norms, NORM_GUARD)[:, None]
        # identity + zero start: concepts begin at the spread anchors
        return cls(anchors, np.eye(dim), np.zeros(dim))

    @property
    def count(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    def concepts(self) -> np.ndarray:
        """Current concept matrix: affine-adjusted anchors, one per row."""
        return self.anchors @ self.weight.T + self.bias

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.grad_weight, self.grad_bias]

    def zero_grad(self):
        self.grad_weight[...] = 0.0
        self.grad_bias[...] = 0.0


@dataclass
class AttentionOutput:
    weights: np.ndarray       # attention over concepts, sums to 1
    attended: np.ndarray      # pooled vector in concept space
    confidences: np.ndarray   # softmax over cosine(attended, concept_k)
    best: int                 # argmax of confidences, ties -> lowest index


def attend(bank: ConceptBank, query: np.ndarray) -> AttentionOutput:
    """Pool the bank under dot-product attention for one query vector."""
    query = np.asarray(query, dtype=float)
    if query.shape != (bank.dim,):
        raise DimensionError(f"query shape {query.shape} vs concept dim {bank.dim}")
    mat = bank.concepts()
    weights = softmax(mat @ query)
    attended = weights @ mat
    cosines = np.array([cosine_sim(attended, mat[k]) for k in range(bank.count)])
    confidences = softmax(cosines)
    return AttentionOutput(
        weights=weights,
        attended=attended,
        confidences=confidences,
        best=int(np.argmax(confidences)),
    )


def contrastive_loss(attended: np.ndarray, concept_matrix: np.ndarray, best: int) -> float:
    """-cos(attended, row best) + log sum over the other rows of exp(cos).

    The excluded-best normalizer makes values below zero legitimate.
    """
    concept_matrix = np.asarray(concept_matrix, dtype=float)
    count = concept_matrix.shape[0]
    if count < 2:
        raise ConfigError("contrastive loss needs at least 2 concepts")
    if not 0 <= best < count:
        raise DimensionError(f"best index {best} outside [0, {count})")
    cosines = np.array([cosine_sim(attended, concept_matrix[k]) for k in range(count)])
    others = np.delete(cosines, best)
    return float(-cosines[best] + logsumexp(others))


def assign(bank: ConceptBank, query: np.ndarray):
    """Best concept label and its confidence for one query vector."""
    out = attend(bank, query)
    return out.best, float(out.confidences[out.best])


@dataclass
class ConceptForward:
    """Batched attention pass with everything the backward needs."""

    concept_matrix: np.ndarray    # (K, d)
    scores: np.ndarray            # (B, K) raw dot products
    weights: np.ndarray           # (B, K)
    attended: np.ndarray          # (B, d)
    attended_norms: np.ndarray    # (B,)
    concept_norms: np.ndarray     # (K,)
    cosines: np.ndarray           # (B, K)
    confidences: np.ndarray       # (B, K)
    best: np.ndarray              # (B,) int
    losses: np.ndarray            # (B,) per-row contrastive losses


def forward_batch(bank: ConceptBank, queries: np.ndarray, frozen_best=None) -> ConceptForward:
    """Attention + confidences + contrastive losses for a batch of queries.

    frozen_best pins the per-row best indices instead of recomputing the
    argmax; finite-difference checks rely on this to keep the selection
    constant while parameters are nudged.
    """
    queries = np.asarray(queries, dtype=float)
    if queries.ndim != 2 or queries.shape[1] != bank.dim:
        raise DimensionError(f"query batch shape {queries.shape} vs concept dim {bank.dim}")
    mat = bank.concepts()
    scores = queries @ mat.T
    weights = softmax(scores)
    attended = weights @ mat

    attended_norms = np.linalg.norm(attended, axis=1)
    concept_norms = np.linalg.norm(mat, axis=1)
    if np.any(attended_norms == 0.0) or np.any(concept_norms == 0.0):
        raise DegenerateInputError("zero-norm vector in cosine similarity")
    an = np.maximum(attended_norms, NORM_GUARD)
    cn = np.maximum(concept_norms, NORM_GUARD)
    cosines = (attended / an[:, None]) @ (mat / cn[:, None]).T
    confidences = softmax(cosines)
    if frozen_best is None:
        best = np.argmax(confidences, axis=1)
    else:
        best = np.asarray(frozen_best, dtype=int)
        if best.shape != (queries.shape[0],):
            raise DimensionError(f"frozen best shape {best.shape} vs batch {queries.shape[0]}")

    rows = np.arange(queries.shape[0])
    masked = cosines.copy()
    masked[rows, best] = -np.inf
    losses = -cosines[rows, best] + logsumexp(masked, axis=1)
    return ConceptForward(
        concept_matrix=mat, scores=scores, weights=weights, attended=attended,
        attended_norms=an, concept_norms=cn, cosines=cosines,
        confidences=confidences, best=best, losses=losses,
    )


def backward_batch(bank: ConceptBank, fwd: ConceptForward, queries: np.ndarray,
                   scale: float) -> np.ndarray:
    """Accumulate (weight, bias) gradients of scale * sum of row losses.

    Returns the gradient w.r.t. the query batch so the embedding side can
    keep propagating.  The best indices are treated as constants.
    """
    queries = np.asarray(queries, dtype=float)
    rows = np.arange(queries.shape[0])
    mat = fwd.concept_matrix
    an = fwd.attended_norms
    cn = fwd.concept_norms
    att_unit = fwd.attended / an[:, None]
    con_unit = mat / cn[:, None]

    # d(row loss)/d(cosine): -1 at the best entry, renormalized softmax
    # over the remaining entries elsewhere.
    masked = np.exp(fwd.cosines)
    masked[rows, fwd.best] = 0.0
    grad_cos = masked / masked.sum(axis=1, keepdims=True)
    grad_cos[rows, fwd.best] -= 1.0
    grad_cos *= scale

    weighted = (grad_cos * fwd.cosines).sum(axis=1)
    d_attended = (grad_cos @ con_unit) / an[:, None] - (weighted / an)[:, None] * att_unit
    col_weighted = (grad_cos * fwd.cosines).sum(axis=0)
    d_mat = (grad_cos.T @ att_unit) / cn[:, None] - (col_weighted / cn)[:, None] * con_unit

    d_weights = d_attended @ mat.T
    d_mat += fwd.weights.T @ d_attended
    inner = (d_weights * fwd.weights).sum(axis=1, keepdims=True)
    d_scores = fwd.weights * (d_weights - inner)
    d_queries = d_scores @ mat
    d_mat += d_scores.T @ queries

    bank.grad_weight += d_mat.T @ bank.anchors
    bank.grad_bias += d_mat.sum(axis=0)
    return d_queries
