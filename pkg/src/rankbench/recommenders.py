"""Recommender contract and the four non-gradient baselines.

Every model exposes ``score(user, item)`` and ``recommend(user, candidates,
n)``; ranking is a deterministic total order (descending score, ties broken
by ascending item index).

* MostPop   global popularity, identical ranking for every user
* ItemKNN   cosine similarity between binary item columns, truncated
            neighbor lists, scores summed over the user's history
* PureSVD   rank-f truncated SVD of the binary matrix via randomized
            projection with power iterations
* SLIM      sparse non-negative item-to-item weights from per-column
            elastic-net coordinate descent
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .data import InteractionLog, to_matrix


class Recommender:
    """Fitted-model contract: deterministic scoring and tie-stable ranking."""

    kind = "base"

    def score(self, user: int, item: int) -> float:
        return float(self.score_items(user, np.asarray([item], dtype=np.int64))[0])

    def score_items(self, user: int, items: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def recommend(self, user: int, candidates, n: int) -> np.ndarray:
        """Top ``n`` of the candidate list by score, ties to the lower index."""
        items = np.asarray(candidates, dtype=np.int64)
        scores = np.asarray(self.score_items(user, items), dtype=np.float64)
        order = np.lexsort((items, -scores))
        return items[order[: min(n, len(items))]]


class MostPopModel(Recommender):
    """Rank items by training interaction count, the same for all users."""

    kind = "mostpop"

    def __init__(self, item_counts: np.ndarray):
        self.item_counts = np.asarray(item_counts, dtype=np.float64)

    def score_items(self, user, items):
        return self.item_counts[items]


def fit_mostpop(train: InteractionLog) -> MostPopModel:
    if len(train) == 0:
        raise ValueError("empty training set")
    return MostPopModel(np.bincount(train.items, minlength=train.n_items))


class ItemKNNModel(Recommender):
    """Truncated item-item cosine neighborhoods summed over the user history."""

    kind = "itemknn"

    def __init__(self, similarity: sp.csr_matrix, train_matrix: sp.csr_matrix,
                 n_neighbors: int, normalize: bool = False):
        self.similarity = similarity.tocsr()
        self.train_matrix = train_matrix.tocsr()
        self.n_neighbors = n_neighbors
        self.normalize = normalize

    def score_items(self, user, items):
        history = self.train_matrix[user].toarray().ravel()
        scores = self.similarity @ history
        if self.normalize:
            norms = np.asarray(np.abs(self.similarity).sum(axis=1)).ravel()
            scores = np.divide(scores, norms, out=np.zeros_like(scores), where=norms > 0)
        return scores[items]


def item_cosine_similarity(matrix: sp.csr_matrix) -> np.ndarray:
    """Dense cosine similarity between binary item columns, zero diagonal.

    Items with empty columns get similarity 0 to everything rather than a
    division by zero.
    """
    gram = np.asarray((matrix.T @ matrix).todense(), dtype=np.float64)
    norms = np.sqrt(np.diag(gram))
    denom = np.outer(norms, norms)
    sims = np.divide(gram, denom, out=np.zeros_like(gram), where=denom > 0)
    np.fill_diagonal(sims, 0.0)
    return sims


def fit_itemknn(train: InteractionLog, n_neighbors: int = 100,
                normalize: bool = False) -> ItemKNNModel:
    """Keep each item's top ``n_neighbors`` cosine neighbors (ties to lower index)."""
    if n_neighbors < 1:
        raise ValueError("n_neighbors must be >= 1")
    matrix = to_matrix(train)
    sims = item_cosine_similarity(matrix)
    n_items = sims.shape[0]
    keep = min(n_neighbors, n_items - 1)
    rows, cols, vals = [], [], []
    indices = np.arange(n_items)
    for item in range(n_items):
        row = sims[item]
        order = np.lexsort((indices, -row))[:keep]
        order = order[row[order] != 0.0]
        rows.extend([item] * len(order))
        cols.extend(order.tolist())
        vals.extend(row[order].tolist())
    similarity = sp.csr_matrix((vals, (rows, cols)), shape=(n_items, n_items))
    return ItemKNNModel(similarity, matrix, n_neighbors, normalize)


class PureSVDModel(Recommender):
    """Score by the rank-f reconstruction of the binary interaction matrix."""

    kind = "puresvd"

    def __init__(self, user_factors: np.ndarray, item_factors: np.ndarray):
        # user_factors already carry the singular values
        self.user_factors = np.asarray(user_factors, dtype=np.float64)
        self.item_factors = np.asarray(item_factors, dtype=np.float64)

    def score_items(self, user, items):
        return self.item_factors[items] @ self.user_factors[user]


def randomized_svd(matrix, rank: int, oversample: int = 10, power_iterations: int = 4,
                   rng: np.random.Generator | None = None):
    """Truncated SVD by Gaussian range finding with re-orthonormalized power steps.

    Returns (U, s, Vt) with exactly ``rank`` columns; directions beyond the
    numerical rank come back with (near-)zero singular values.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    m, n = matrix.shape
    if not 1 <= rank <= min(m, n):
        raise ValueError("rank must lie in [1, min(m, n)]")
    sketch = min(rank + oversample, min(m, n))
    probe = rng.standard_normal((n, sketch))
    basis, _ = np.linalg.qr(matrix @ probe)
    for _ in range(power_iterations):
        # re-orthonormalize after each half-step to keep the basis stable
        z, _ = np.linalg.qr(matrix.T @ basis)
        basis, _ = np.linalg.qr(matrix @ z)
    small = np.asarray((matrix.T @ basis).T)
    u_small, s, vt = np.linalg.svd(small, full_matrices=False)
    u = basis @ u_small
    return u[:, :rank], s[:rank], vt[:rank, :]


def fit_puresvd(train: InteractionLog, rank: int, oversample: int = 10,
                power_iterations: int = 4, seed: int = 0) -> PureSVDModel:
    matrix = to_matrix(train)
    u, s, vt = randomized_svd(
        matrix, rank, oversample, power_iterations, np.random.default_rng(seed)
    )
    return PureSVDModel(u * s, vt.T)


class SLIMModel(Recommender):
    """Sparse item-to-item weights; score is the sum over the user's history."""

    kind = "slim"

    def __init__(self, weights: sp.csr_matrix, train_matrix: sp.csr_matrix):
        self.weights = weights.tocsr()   # weights[k, i]: contribution of k to i
        self.train_matrix = train_matrix.tocsr()

    def score_items(self, user, items):
        history = self.train_matrix[user].toarray().ravel()
        return np.asarray(self.weights.T @ history)[items]

    def dense_weights(self) -> np.ndarray:
        return np.asarray(self.weights.todense())


def slim_column_objective(matrix: sp.csc_matrix, column: int, w: np.ndarray,
                          l1: float, l2: float) -> float:
    """Elastic-net reconstruction objective for one item column."""
    target = matrix[:, column].toarray().ravel()
    residual = target - matrix @ w
    return float(
        0.5 * residual @ residual + 0.5 * l2 * (w @ w) + l1 * np.abs(w).sum()
    )


def solve_slim_column(matrix: sp.csc_matrix, column: int, l1: float, l2: float,
                      max_sweeps: int = 100, tolerance: float = 1e-4) -> np.ndarray:
    """Cyclic coordinate descent for one column's non-negative elastic net.

    Minimizes 0.5*||a_j - A w||^2 + 0.5*l2*||w||^2 + l1*||w||_1 subject to
    w >= 0 and w_j = 0, using the closed-form soft-threshold update per
    coordinate. Stops when no coordinate moved more than ``tolerance`` in a
    sweep, or after ``max_sweeps`` sweeps.
    """
    n_items = matrix.shape[1]
    target = matrix[:, column].toarray().ravel()
    column_norms = np.asarray(matrix.multiply(matrix).sum(axis=0)).ravel()
    # with non-negative data and w >= 0, only columns overlapping the target
    # can ever activate, so the cycle is restricted to them
    overlap = np.asarray((matrix.T @ target)).ravel()
    active = [k for k in np.nonzero(overlap > 0)[0] if k != column]
    w = np.zeros(n_items)
    residual = target.copy()
    columns = {k: matrix[:, k].toarray().ravel() for k in active}
    for _ in range(max_sweeps):
        max_change = 0.0
        for k in active:
            col_k = columns[k]
            rho = col_k @ residual + column_norms[k] * w[k]
            new_wk = max(0.0, (rho - l1) / (column_norms[k] + l2))
            delta = new_wk - w[k]
            if delta != 0.0:
                residual -= col_k * delta
                w[k] = new_wk
                max_change = max(max_change, abs(delta))
        if max_change < tolerance:
            break
    return w


def fit_slim(train: InteractionLog, l1: float = 1e-3, l2: float = 1e-2,
             max_sweeps: int = 100, tolerance: float = 1e-4) -> SLIMModel:
    """Per-column coordinate descent; a large enough l1 yields the zero model."""
    if l1 < 0 or l2 < 0:
        raise ValueError("penalties must be >= 0")
    matrix = to_matrix(train)
    columns = matrix.tocsc()
    n_items = columns.shape[1]
    rows, cols, vals = [], [], []
    for item in range(n_items):
        w = solve_slim_column(columns, item, l1, l2, max_sweeps, tolerance)
        support = np.nonzero(w)[0]
        rows.extend(support.tolist())
        cols.extend([item] * len(support))
        vals.extend(w[support].tolist())
    weights = sp.csr_matrix((vals, (rows, cols)), shape=(n_items, n_items))
    return SLIMModel(weights, matrix)
