"""Shared builders for test instances: random collections and posteriors."""

import numpy as np

from gfa.data import DataCollection, ViewPartition
from gfa.inference import Hyperparameters, Posterior


def random_collection(rng, dims, n):
    """Centered random data over the given view widths."""
    y = rng.standard_normal((n, int(sum(dims))))
    y -= y.mean(axis=0)
    return DataCollection(ViewPartition.of(dims), y)


def random_spd(rng, k, scale=1.0):
    a = rng.standard_normal((k, k))
    return scale * (a @ a.T) / k + 0.5 * np.eye(k)


def random_posterior(rng, dims, n, k, prior_mode="group_ard"):
    """A valid (SPD covariances, positive Gamma parameters) random state."""
    hyper = Hyperparameters(prior_mode=prior_mode)
    m = len(dims)
    if prior_mode == "group_ard":
        a_shape = rng.uniform(0.5, 5.0, size=(m, k))
        a_rate = rng.uniform(0.5, 5.0, size=(m, k))
    elif prior_mode == "shared_ard":
        a_shape = rng.uniform(0.5, 5.0, size=k)
        a_rate = rng.uniform(0.5, 5.0, size=k)
    else:
        a_shape = a_rate = None
    return Posterior(
        dims=tuple(int(d) for d in dims),
        n_samples=n,
        K=k,
        hyper=hyper,
        Z_mean=rng.standard_normal((n, k)),
        Z_cov=random_spd(rng, k, 0.5),
        W_mean=[rng.standard_normal((d, k)) for d in dims],
        W_cov=[random_spd(rng, k, 0.5) for d in dims],
        alpha_shape=a_shape,
        alpha_rate=a_rate,
        tau_shape=rng.uniform(1.0, 20.0, size=m),
        tau_rate=rng.uniform(1.0, 20.0, size=m),
    )
