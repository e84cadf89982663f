"""Factor-activity extraction and factor ranking utilities.

A fitted posterior is summarized by a binary K x M activity matrix: factor
k counts as active in view m when its inferred loading variance share
exceeds a small fraction of the view's per-dimension signal variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataCollection
from .inference import NO_ARD, Posterior

DEFAULT_EPSILON = 1e-3
_TINY_FLOOR = 1e-12


@dataclass(frozen=True)
class ViewVarianceStats:
    total_variance: np.ndarray
    noise_variance: np.ndarray
    degenerate_views: tuple[int, ...]


@dataclass(frozen=True)
class ActivityMatrix:
    F: np.ndarray
    variance_share: np.ndarray
    threshold_used: np.ndarray
    epsilon: float

    @property
    def cardinalities(self) -> np.ndarray:
        return self.F.sum(axis=1)

    def to_text_grid(self, order=None) -> str:
        """Plain-text grid, rows = factors, columns = views ('1'/'.')."""
        if order is None:
            order = default_factor_order(self)
        lines = []
        for k in order:
            lines.append("".join("1" if v else "." for v in self.F[k]))
        return "\n".join(lines)


def view_variance_stats(
    collection: DataCollection, post: Posterior
) -> ViewVarianceStats:
    """Empirical total variance and fitted noise variance per view.

    The noise variance is the posterior mean of 1/tau_m, rate/(shape-1),
    falling back to rate/shape when the shape does not exceed 1.
    """
    total = np.array(
        [collection.view(m).var(axis=0, ddof=1).sum() for m in range(post.n_views)]
    )
    shape, rate = post.tau_shape, post.tau_rate
    noise = np.where(shape > 1.0, rate / np.maximum(shape - 1.0, 1e-300), rate / shape)
    degenerate = tuple(int(m) for m in np.flatnonzero(total <= 0))
    return ViewVarianceStats(
        total_variance=total, noise_variance=noise, degenerate_views=degenerate
    )


def variance_shares(post: Posterior) -> np.ndarray:
    """Per-(factor, view) loading variance <alpha_{m,k}^-1> as a K x M array.

    Uses the posterior rate/shape of alpha; without an ARD prior the
    equivalent <||w_{m,k}||^2>/D_m is substituted (the two agree in the
    vague-hyperprior limit).
    """
    m_views, k = post.n_views, post.K
    if post.hyper.prior_mode == NO_ARD:
        shares = np.stack(
            [post.w_sqnorm(m) / post.dims[m] for m in range(m_views)], axis=1
        )
        return shares
    shares = np.empty((k, m_views))
    for m in range(m_views):
        if post.alpha_shape.ndim == 2:
            shares[:, m] = post.alpha_rate[m] / post.alpha_shape[m]
        else:
            shares[:, m] = post.alpha_rate / post.alpha_shape
    return shares


def activity_matrix(
    post: Posterior, stats: ViewVarianceStats, epsilon: float = DEFAULT_EPSILON
) -> ActivityMatrix:
    """Threshold variance shares against the per-view signal variance.

    Factor k is active in view m when its variance share exceeds
    epsilon * (total variance - noise variance) / D_m. If the noise
    estimate exceeds the total variance, the threshold is clamped to a
    tiny positive floor so any nonzero loading still activates.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    dims = np.asarray(post.dims, dtype=float)
    signal = (stats.total_variance - stats.noise_variance) / dims
    threshold = epsilon * np.where(signal > 0, signal, _TINY_FLOOR)
    shares = variance_shares(post)
    return ActivityMatrix(
        F=(shares > threshold).astype(int),
        variance_share=shares,
        threshold_used=threshold,
        epsilon=float(epsilon),
    )


def rank_by_norm(post: Posterior, view_index: int) -> np.ndarray:
    """Factor order by decreasing loading norm in one view, stable in k."""
    norms = np.linalg.norm(post.W_mean[view_index], axis=0)
    return np.lexsort((np.arange(post.K), -norms))


def default_factor_order(act: ActivityMatrix) -> np.ndarray:
    """Decreasing cardinality, then decreasing total variance share."""
    totals = act.variance_share.sum(axis=1)
    return np.lexsort((-totals, -act.cardinalities))


def isc_scores(z_mean: np.ndarray, n_segments: int) -> tuple[np.ndarray, list[int]]:
    """Inter-segment consistency of each factor's latent trajectory.

    Splits the N rows into n_segments equal blocks and averages the
    pairwise Pearson correlations of each factor column across blocks.
    Pairs involving a constant segment contribute 0 and the factor index
    is flagged in the returned list.
    """
    z = np.asarray(z_mean, dtype=float)
    n, k = z.shape
    if n % n_segments != 0:
        raise ValueError(f"{n} samples do not split into {n_segments} equal segments")
    seg_len = n // n_segments
    if seg_len < 2:
        raise ValueError("segments must contain at least two samples")
    segments = z.reshape(n_segments, seg_len, k)
    centered = segments - segments.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    scores = np.zeros(k)
    flagged: set[int] = set()
    n_pairs = n_segments * (n_segments - 1) // 2
    for i in range(n_segments):
        for j in range(i + 1, n_segments):
            denom = norms[i] * norms[j]
            ok = denom > 0
            corr = np.zeros(k)
            corr[ok] = (centered[i] * centered[j]).sum(axis=0)[ok] / denom[ok]
            flagged.update(int(f) for f in np.flatnonzero(~ok))
            scores += corr
    return scores / n_pairs, sorted(flagged)
