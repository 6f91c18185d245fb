"""NT-Xent contrastive loss kernel with an exact analytic gradient.

A batch holds 2N embeddings arranged as N positive pairs (row i pairs with
row i+N). The loss for an ordered pair (i, j) is

    l(i, j) = -log( exp(sim(z_i, z_j)/tau) / sum_{k != i} exp(sim(z_i, z_k)/tau) )

with cosine similarity over unit-normalized rows, evaluated via
max-subtracted log-sum-exp so temperatures down to 1e-3 stay finite. The
batch objective is the symmetric sum 0.5 * sum_k ( l(k, k+N) + l(k+N, k) ).

The gradient is taken with respect to the raw, pre-normalization vectors,
chaining through the L2 normalization, and is verified against central
finite differences in the test suite.

All functions are pure. Results are bit-stable for a fixed BLAS thread
count; multi-threaded reductions may differ in the last ulp, which the
documented tolerances absorb.
"""

from __future__ import annotations

import numpy as np

_NORM_TOLERANCE = 1e-6
_MIN_NORM = 1e-12


class EmbeddingBatch:
    """2N raw embedding rows; row i pairs with row i+N.

    Rows are unit-normalized at construction; the raw vectors are retained
    so gradients can be taken with respect to them.
    """

    def __init__(self, vectors: np.ndarray) -> None:
        raw = np.asarray(vectors, dtype=np.float64)
        if raw.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {raw.shape}")
        rows, _ = raw.shape
        if rows < 2 or rows % 2:
            raise ValueError(f"need an even row count of at least 2, got {rows}")
        if not np.all(np.isfinite(raw)):
            raise ValueError("embeddings must be finite")
        norms = np.linalg.norm(raw, axis=1)
        if np.any(norms < _MIN_NORM):
            raise ValueError("zero-norm embedding cannot be normalized")
        self.raw = raw
        self.norms = norms
        self.z = raw / norms[:, None]
        self.n_pairs = rows // 2

    @property
    def rows(self) -> int:
        return 2 * self.n_pairs

    @property
    def dim(self) -> int:
        return self.raw.shape[1]

    def pair_indices(self) -> list[tuple[int, int]]:
        """Ordered (i, j) pairs entering the symmetric loss."""
        n = self.n_pairs
        return [(k, k + n) for k in range(n)] + [(k + n, k) for k in range(n)]


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors, clamped into [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    for v in (a, b):
        norm = np.linalg.norm(v)
        if norm < _MIN_NORM:
            raise ValueError("zero vector has no cosine similarity")
        if abs(norm - 1.0) > _NORM_TOLERANCE:
            raise ValueError(f"vector is not unit-normalized: |v| = {norm}")
    return float(np.clip(a @ b, -1.0, 1.0))


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError(f"temperature must be positive: {tau}")


def _logits(batch: EmbeddingBatch, tau: float) -> np.ndarray:
    sims = np.clip(batch.z @ batch.z.T, -1.0, 1.0)
    return sims / tau


def _losses_for_pairs(
    batch: EmbeddingBatch, tau: float, pairs: list[tuple[int, int]]
) -> np.ndarray:
    logits = _logits(batch, tau)
    np.fill_diagonal(logits, -np.inf)  # the k == i term is excluded
    row_max = np.max(logits, axis=1)
    lse = row_max + np.log(np.sum(np.exp(logits - row_max[:, None]), axis=1))
    return np.array([lse[i] - logits[i, j] for i, j in pairs])


def nt_xent_pairloss(batch: EmbeddingBatch, i: int, j: int, tau: float) -> float:
    """Loss for the ordered pair (i, j); exact 0 for a 2-row batch."""
    _check_tau(tau)
    rows = batch.rows
    if not (0 <= i < rows and 0 <= j < rows):
        raise IndexError(f"pair indices out of range: ({i}, {j}) with {rows} rows")
    if i == j:
        raise ValueError("pair indices must differ")
    return float(_losses_for_pairs(batch, tau, [(i, j)])[0])


def symmetric_loss(batch: EmbeddingBatch, tau: float) -> float:
    """0.5 * sum over k of l(k, k+N) + l(k+N, k)."""
    _check_tau(tau)
    return float(0.5 * np.sum(_losses_for_pairs(batch, tau, batch.pair_indices())))


def symmetric_loss_grad(batch: EmbeddingBatch, tau: float) -> np.ndarray:
    """Gradient of the symmetric loss with respect to the raw vectors.

    For each ordered pair (i, j), with softmax weights p over k != i:
        d l / d z_i = (sum_k p_ik z_k - z_j) / tau
        d l / d z_j += (p_ij - 1) z_i / tau
        d l / d z_m += p_im z_i / tau            (m != i, j)
    then the normalization chain rule maps d/dz into d/draw per row.
    """
    _check_tau(tau)
    z = batch.z
    logits = _logits(batch, tau)
    np.fill_diagonal(logits, -np.inf)
    row_max = np.max(logits, axis=1)
    p = np.exp(logits - row_max[:, None])
    p /= np.sum(p, axis=1, keepdims=True)  # p[i, i] == 0 by construction

    grad_z = np.zeros_like(z)
    for i, j in batch.pair_indices():
        grad_z[i] += (p[i] @ z - z[j]) / tau
        grad_z += np.outer(p[i], z[i]) / tau
        grad_z[j] -= z[i] / tau
    grad_z *= 0.5

    # d z / d raw = (I - z z^T) / |raw|
    radial = np.sum(grad_z * z, axis=1, keepdims=True)
    return (grad_z - radial * z) / batch.norms[:, None]


def mean_pool_file_embedding(slice_embeddings: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Average slice embeddings and re-normalize to the unit sphere."""
    arr = np.asarray(slice_embeddings, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need a nonempty list of equal-dimension vectors")
    mean = arr.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < _MIN_NORM:
        raise ValueError("mean embedding has zero norm; cannot re-normalize")
    return mean / norm
