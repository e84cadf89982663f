"""JSON serialization of fit results and ground truths.

Matrices are stored row-major as nested lists; floats keep their shortest
round-trip representation, so identical fits serialize byte-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import PreprocessRecord
from .inference import FitConfig, FitResult, Hyperparameters, Posterior
from .synthetic import GroundTruth
from .data import ViewPartition


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _config_dict(config: FitConfig) -> dict:
    h = config.hyper
    return {
        "K": config.K,
        "max_iter": config.max_iter,
        "elbo_rel_tol": config.elbo_rel_tol,
        "rotation_enabled": config.rotation_enabled,
        "rotation_period": config.rotation_period,
        "rotation_start": config.rotation_start,
        "rotation_max_iter": config.rotation_max_iter,
        "ard_start": config.ard_start,
        "seed": config.seed,
        "hyper": {
            "a0": h.a0,
            "b0": h.b0,
            "a_tau0": h.a_tau0,
            "b_tau0": h.b_tau0,
            "prior_mode": h.prior_mode,
        },
    }


def fit_result_to_dict(
    result: FitResult,
    config: FitConfig,
    preprocess: PreprocessRecord | None = None,
) -> dict:
    post = result.posterior
    doc = {
        "config": _config_dict(config),
        "dims": list(post.dims),
        "n_samples": post.n_samples,
        "K": post.K,
        "Z_mean": _arr(post.Z_mean),
        "Z_cov": _arr(post.Z_cov),
        "W_mean": [_arr(w) for w in post.W_mean],
        "W_cov": [_arr(c) for c in post.W_cov],
        "alpha_shape": None if post.alpha_shape is None else _arr(post.alpha_shape),
        "alpha_rate": None if post.alpha_rate is None else _arr(post.alpha_rate),
        "tau_shape": _arr(post.tau_shape),
        "tau_rate": _arr(post.tau_rate),
        "elbo_trace": _arr(result.elbo_trace),
        "n_iter": result.n_iter,
        "converged": result.converged,
        "empty_factor_count": result.empty_factor_count,
    }
    if preprocess is not None:
        doc["preprocess"] = {
            "means": _arr(preprocess.means),
            "scales": _arr(preprocess.scales),
            "constant_columns": list(preprocess.constant_columns),
        }
    return doc


def save_fit_result(path, result, config, preprocess=None) -> None:
    with open(path, "w") as fh:
        json.dump(fit_result_to_dict(result, config, preprocess), fh)


def config_from_dict(doc: dict) -> FitConfig:
    h = doc["hyper"]
    return FitConfig(
        K=doc["K"],
        max_iter=doc["max_iter"],
        elbo_rel_tol=doc["elbo_rel_tol"],
        rotation_enabled=doc["rotation_enabled"],
        rotation_period=doc["rotation_period"],
        rotation_start=doc["rotation_start"],
        rotation_max_iter=doc.get("rotation_max_iter", 60),
        ard_start=doc.get("ard_start", 50),
        seed=doc["seed"],
        hyper=Hyperparameters(
            a0=h["a0"],
            b0=h["b0"],
            a_tau0=h["a_tau0"],
            b_tau0=h["b_tau0"],
            prior_mode=h["prior_mode"],
        ),
    )


def load_fit_result(path) -> tuple[FitResult, FitConfig]:
    with open(path) as fh:
        doc = json.load(fh)
    config = config_from_dict(doc["config"])
    opt = lambda x: None if x is None else np.asarray(x)
    post = Posterior(
        dims=tuple(doc["dims"]),
        n_samples=doc["n_samples"],
        K=doc["K"],
        hyper=config.hyper,
        Z_mean=np.asarray(doc["Z_mean"]),
        Z_cov=np.asarray(doc["Z_cov"]),
        W_mean=[np.asarray(w) for w in doc["W_mean"]],
        W_cov=[np.asarray(c) for c in doc["W_cov"]],
        alpha_shape=opt(doc["alpha_shape"]),
        alpha_rate=opt(doc["alpha_rate"]),
        tau_shape=np.asarray(doc["tau_shape"]),
        tau_rate=np.asarray(doc["tau_rate"]),
    )
    result = FitResult(
        posterior=post,
        elbo_trace=np.asarray(doc["elbo_trace"]),
        n_iter=doc["n_iter"],
        converged=doc["converged"],
        empty_factor_count=doc["empty_factor_count"],
    )
    return result, config


def save_truth(path, truth: GroundTruth) -> None:
    doc = {
        "dims": list(truth.partition.dims),
        "names": list(truth.partition.names),
        "F_true": np.asarray(truth.F_true, dtype=int).tolist(),
        "W_true": _arr(truth.W_true),
        "noise_variance": _arr(truth.noise_variance),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_truth(path) -> GroundTruth:
    with open(Path(path)) as fh:
        doc = json.load(fh)
    return GroundTruth(
        partition=ViewPartition.of(doc["dims"], doc["names"]),
        F_true=np.asarray(doc["F_true"], dtype=int),
        W_true=np.asarray(doc["W_true"], dtype=float),
        noise_variance=np.asarray(doc["noise_variance"], dtype=float),
    )
