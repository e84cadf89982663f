"""Command-line front end: simulate, fit, activity, evaluate, report.

Exit codes are a stable contract: 0 success, 1 I/O failure, 2 usage
error, 3 numerical corruption. All randomness flows from one --seed
through a splittable counter-based generator.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

PRIOR_FLAGS = {"gfa": "group_ard", "bfa": "shared_ard", "fa": "none"}


class UsageError(Exception):
    pass


def _cap_threads() -> None:
    cap = os.environ.get("GFA_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _write_run_manifest(out_dir: Path, command: str, args: dict, outputs: list,
                        seed, started: float) -> None:
    from . import __version__

    doc = {
        "command": command,
        "config": {k: v for k, v in args.items() if k not in ("func", "command")},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "wall_clock_seconds": time.time() - started,
        "version": __version__,
    }
    with open(out_dir / "run_manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2)


def cmd_simulate(args) -> int:
    import numpy as np

    from .data import save_collection
    from .serialize import save_truth
    from .synthetic import SEC4_PRESET, generate_truth, sample_collection

    started = time.time()
    dist = args.dist.replace("-", "_")
    if dist != SEC4_PRESET:
        if args.views is None:
            raise UsageError("--views is required unless --dist sec4-preset")
        if args.dims is not None:
            dims = [int(d) for d in args.dims.split(",")]
            if len(dims) != args.views:
                raise UsageError("--dims must list one width per view")
        elif args.dim is not None:
            dims = [args.dim] * args.views
        else:
            raise UsageError("one of --dims or --dim is required")
        k = args.k if args.k is not None else args.views
    else:
        dims, k = None, None
    truth_seed, sample_seed = np.random.SeedSequence(args.seed).spawn(2)
    try:
        truth = generate_truth(
            M=args.views or 0, dims=dims, K=k or 0, distribution=dist,
            seed=truth_seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    collection = sample_collection(truth, args.n, seed=sample_seed)
    out = Path(args.out)
    manifest = save_collection(collection, out)
    save_truth(out / "truth.json", truth)
    _write_run_manifest(
        out, "simulate", vars(args),
        [manifest, out / "truth.json"], args.seed, started,
    )
    print(f"wrote {collection.n_views} views, N={collection.n_samples}, "
          f"total_dim={collection.partition.total_dim}, K_true={truth.K_true}")
    return EXIT_OK


def _load_data(path: str):
    from .data import load_collection

    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    return load_collection(p)


def cmd_fit(args) -> int:
    from .data import center
    from .inference import FitConfig, Hyperparameters, fit
    from .serialize import save_fit_result

    started = time.time()
    collection = _load_data(args.data)
    record = None
    if args.center:
        collection, record = center(collection, scale_to_unit_variance=args.scale)
    config = FitConfig(
        K=args.k,
        max_iter=args.max_iter,
        elbo_rel_tol=args.tol,
        rotation_enabled=not args.no_rotation,
        rotation_period=args.rotation_period,
        rotation_start=args.rotation_start,
        ard_start=args.ard_start,
        seed=args.seed,
        hyper=Hyperparameters(prior_mode=PRIOR_FLAGS[args.prior]),
    )
    result = fit(collection, config)
    save_fit_result(args.out, result, config, record)
    out_dir = Path(args.out).parent
    _write_run_manifest(out_dir, "fit", vars(args), [args.out], args.seed, started)
    print(
        f"elbo={result.elbo_trace[-1]:.6f} iterations={result.n_iter} "
        f"converged={result.converged} empty_factors={result.empty_factor_count}"
    )
    return EXIT_OK


def cmd_activity(args) -> int:
    import numpy as np

    from .activity import (activity_matrix, default_factor_order, isc_scores,
                           rank_by_norm, view_variance_stats)
    from .serialize import load_fit_result

    result, _config = load_fit_result(args.model)
    post = result.posterior
    collection = _load_data(args.data)
    stats = view_variance_stats(collection, post)
    act = activity_matrix(post, stats, epsilon=args.epsilon)
    sort = args.sort
    if sort == "cardinality":
        order = default_factor_order(act)
    elif sort.startswith("norm:"):
        view = int(sort.split(":", 1)[1])
        if not 0 <= view < post.n_views:
            raise UsageError(f"view index out of range: {view}")
        order = rank_by_norm(post, view)
    elif sort.startswith("isc:"):
        segments = int(sort.split(":", 1)[1])
        scores, _ = isc_scores(post.Z_mean, segments)
        order = np.lexsort((np.arange(post.K), -scores))
    else:
        raise UsageError(f"unknown sort key: {sort}")
    doc = {
        "F": act.F.tolist(),
        "variance_share": act.variance_share.tolist(),
        "threshold_used": act.threshold_used.tolist(),
        "epsilon": act.epsilon,
        "factor_order": [int(i) for i in order],
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh)
    print(act.to_text_grid(order))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    import numpy as np

    from .activity import activity_matrix, view_variance_stats
    from .evaluation import cardinality_curve, f_error, match_factors
    from .serialize import load_fit_result, load_truth

    result, config = load_fit_result(args.model)
    post = result.posterior
    truth = load_truth(args.truth)
    if tuple(truth.partition.dims) != tuple(post.dims):
        raise UsageError(
            f"model views {post.dims} do not match truth views "
            f"{tuple(truth.partition.dims)}"
        )
    w_est = np.vstack(post.W_mean)
    matching = match_factors(w_est, truth.W_true)
    collection = _load_data(args.data)
    stats = view_variance_stats(collection, post)
    act = activity_matrix(post, stats)
    err = f_error(act.F, truth.F_true, matching)
    metrics = {
        "w_mse": matching.w_mse,
        "f_error": err,
        "cardinality_est": cardinality_curve(act.F).tolist(),
        "cardinality_true": cardinality_curve(truth.F_true).tolist(),
        "M": post.n_views,
        "N": post.n_samples,
        "K": post.K,
        "prior": config.hyper.prior_mode,
        "seed": config.seed,
    }
    with open(args.out, "w") as fh:
        json.dump(metrics, fh)
    curves_path = Path(args.out).with_suffix(".curves.csv")
    with open(curves_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "position", "cardinality"])
        for name in ("cardinality_true", "cardinality_est"):
            for i, c in enumerate(metrics[name]):
                writer.writerow([name.split("_")[1], i, c])
    print(f"w_mse={metrics['w_mse']:.6g} f_error={metrics['f_error']:.6g}")
    return EXIT_OK


def cmd_report(args) -> int:
    import statistics

    docs = []
    for path in args.metrics:
        with open(path) as fh:
            docs.append(json.load(fh))
    if not docs:
        raise UsageError("no metrics files given")
    groups: dict[tuple, list[dict]] = {}
    for doc in docs:
        groups.setdefault((doc["M"], doc["N"], doc["prior"]), []).append(doc)
    rows = []
    for (m, n, prior), members in sorted(groups.items()):
        for metric in ("w_mse", "f_error"):
            values = [d[metric] for d in members]
            rows.append(
                {
                    "M": m,
                    "N": n,
                    "prior": prior,
                    "metric": metric,
                    "runs": len(values),
                    "median": statistics.median(values),
                    "min": min(values),
                    "max": max(values),
                }
            )
    header = ["M", "N", "prior", "metric", "runs", "median", "min", "max"]
    print("| " + " | ".join(header) + " |")
    print("|" + "---|" * len(header))
    for row in rows:
        print("| " + " | ".join(str(row[h]) for h in header) + " |")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=header)
            writer.writeheader()
            writer.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfa", description="Bayesian group factor analysis"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic collection")
    p.add_argument("--views", type=int)
    p.add_argument("--dims", help="comma-separated view widths")
    p.add_argument("--dim", type=int, help="common width for all views")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument(
        "--dist",
        required=True,
        choices=["uniform-cardinality", "power-law", "uniform-subsets", "sec4-preset"],
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the model to a collection")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--prior", choices=sorted(PRIOR_FLAGS), default="gfa")
    p.add_argument("--no-rotation", action="store_true")
    p.add_argument("--rotation-period", type=int, default=1)
    p.add_argument("--rotation-start", type=int, default=5)
    p.add_argument("--ard-start", type=int, default=50,
                   help="sweeps before the first ARD precision update")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--center", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--scale", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("activity", help="extract the factor activity matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--sort", default="cardinality",
                   help="cardinality | norm:VIEW | isc:SEGMENTS")
    p.add_argument("--out")
    p.set_defaults(func=cmd_activity)

    p = sub.add_parser("evaluate", help="score a fit against ground truth")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate metrics files")
    p.add_argument("metrics", nargs="*")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    from .data import DataError
    from .inference import NumericalCorruptionError

    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalCorruptionError as exc:
        print(f"numerical corruption: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
