"""Structure-recovery scoring against a known ground truth.

Estimated factors carry no canonical order or sign, so loading matrices
are compared after an optimal column matching: an exact linear assignment
over sign-minimized squared distances, with zero-column padding when the
factor counts differ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class FactorMatching:
    """Optimal estimated-to-true column assignment with signs and MSE."""

    assignment: np.ndarray
    signs: np.ndarray
    w_mse: float
    k_est: int
    k_true: int

    def matched_pairs(self) -> list[tuple[int, int]]:
        """(estimated, true) index pairs, excluding padding columns."""
        return [
            (i, int(j))
            for i, j in enumerate(self.assignment)
            if i < self.k_est and j < self.k_true
        ]


def _pad_columns(w: np.ndarray, k: int) -> np.ndarray:
    if w.shape[1] == k:
        return w
    return np.hstack([w, np.zeros((w.shape[0], k - w.shape[1]))])


def match_factors(w_est: np.ndarray, w_true: np.ndarray) -> FactorMatching:
    """Optimal permutation + sign matching of loading columns.

    The narrower matrix is padded with zero columns; cost between columns
    is the squared distance minimized over sign, solved exactly as a
    linear assignment. The MSE normalizes by D * max(K1, K2).
    """
    w_est = np.asarray(w_est, dtype=float)
    w_true = np.asarray(w_true, dtype=float)
    if w_est.ndim != 2 or w_true.ndim != 2 or w_est.shape[0] != w_true.shape[0]:
        raise ValueError("loading matrices must share the row dimension")
    k_est, k_true = w_est.shape[1], w_true.shape[1]
    k = max(k_est, k_true)
    a = _pad_columns(w_est, k)
    b = _pad_columns(w_true, k)
    # ||s*a_i - b_j||^2 minimized over s is |a|^2 + |b|^2 - 2|a_i . b_j|.
    sq_a = (a**2).sum(axis=0)
    sq_b = (b**2).sum(axis=0)
    cross = a.T @ b
    cost = sq_a[:, None] + sq_b[None, :] - 2.0 * np.abs(cross)
    rows, cols = linear_sum_assignment(cost)
    order = np.argsort(rows)
    assignment = cols[order]
    signs = np.where(cross[rows[order], assignment] >= 0, 1, -1)
    mse = float(cost[rows, cols].sum()) / (a.shape[0] * k)
    return FactorMatching(
        assignment=assignment,
        signs=signs,
        w_mse=max(mse, 0.0),
        k_est=k_est,
        k_true=k_true,
    )


def f_error(
    f_est: np.ndarray, f_true: np.ndarray, matching: FactorMatching | None = None
) -> float:
    """Mean per-entry activity error over optimally matched factor rows.

    Reuses a loading-based matching when given, so activity and loadings
    are compared under one alignment; otherwise matches the activity rows
    themselves as vectors.
    """
    f_est = np.asarray(f_est, dtype=float)
    f_true = np.asarray(f_true, dtype=float)
    if f_est.ndim != 2 or f_true.ndim != 2 or f_est.shape[1] != f_true.shape[1]:
        raise ValueError("activity matrices must share the view dimension")
    if matching is None:
        matching = match_factors(f_est.T, f_true.T)
    elif matching.k_est != f_est.shape[0] or matching.k_true != f_true.shape[0]:
        raise ValueError("matching does not correspond to these activity matrices")
    k = max(f_est.shape[0], f_true.shape[0])
    a = _pad_columns(f_est.T, k)
    b = _pad_columns(f_true.T, k)
    diff = np.abs(a[:, np.arange(k)] - b[:, matching.assignment])
    return float(diff.mean())


def cardinality_curve(f: np.ndarray) -> np.ndarray:
    """Per-factor view counts sorted descending, empty factors dropped."""
    cards = np.asarray(f).sum(axis=1)
    cards = cards[cards > 0]
    return np.sort(cards)[::-1].astype(int)


def average_precision(relevant_in_rank_order: np.ndarray) -> float:
    rel = np.asarray(relevant_in_rank_order, dtype=bool)
    if not rel.any():
        return 0.0
    hits = np.cumsum(rel)
    precision = hits / (np.arange(rel.size) + 1)
    return float(precision[rel].mean())


def retrieval_map(
    z_mean: np.ndarray,
    labels: list[set],
    factor_subset=None,
) -> float:
    """Mean average precision of same-label retrieval in latent space.

    Each item with at least one co-labeled other item queries the rest,
    ranked by Pearson correlation between latent rows restricted to
    factor_subset; relevant means sharing at least one label.
    """
    z = np.asarray(z_mean, dtype=float)
    n = z.shape[0]
    if n < 2:
        raise ValueError("need at least two items")
    if len(labels) != n:
        raise ValueError("one label set per item required")
    if factor_subset is not None:
        z = z[:, np.asarray(factor_subset)]
    if z.shape[1] < 2:
        raise ValueError("correlation needs at least two factors")
    centered = z - z.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe[:, None]
    corr = unit @ unit.T
    ap_values = []
    for q in range(n):
        relevant = np.array(
            [bool(labels[q] & labels[i]) and i != q for i in range(n)]
        )
        if not relevant.any():
            continue
        others = np.delete(np.arange(n), q)
        scores = corr[q, others]
        # Stable tie-break on index keeps results deterministic.
        order = others[np.lexsort((others, -scores))]
        ap_values.append(average_precision(relevant[order]))
    if not ap_values:
        raise ValueError("no query shares a label with another item")
    return float(np.mean(ap_values))
