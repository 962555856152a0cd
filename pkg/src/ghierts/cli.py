"""Command-line interface.

Subcommands: ``run``, ``sweep``, ``bound``, ``ingest`` and ``selftest``.
Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O or
data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, parse_config
from .errors import ConfigError, DataError, NumericalError
from .model import Weights
from .report import emit_results
from .sim import SweepFailure, stream, sweep
from .theory import bound_inputs_from_spec, bound_report, spectral_checks

__all__ = ["main"]

log = logging.getLogger("ghierts")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _overrides(args: argparse.Namespace) -> dict:
    pairs = {
        "seed": args.seed,
        "runs": args.runs,
        "horizon": args.horizon,
        "parallelism": args.parallelism,
        "out": args.out,
        "linucb_alpha": args.alpha,
        "jitter": args.jitter,
    }
    out = {k: v for k, v in pairs.items() if v is not None}
    if args.svg:
        out["svg"] = True
    return out


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return parse_config(args.config).replace(**_overrides(args))


def _summary(name: str, curves) -> None:
    if name:
        print(f"[{name}]")
    for label, c in curves.items():
        print(f"{label:>14s}  regret {c.mean[-1]:10.3f} +- {c.stderr[-1]:7.3f}  ({c.seconds:.2f} s)")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    (result,) = sweep([cfg.task()], cfg.parallelism)
    if isinstance(result, SweepFailure):
        raise result.exception
    _summary("", result)
    for p in emit_results(result, cfg, cfg.out, svg=cfg.svg):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    tasks = [cfg.task(**cell) for cell in cfg.grid()]
    results = sweep(tasks, cfg.parallelism)
    done, failures = {}, []
    for task, res in zip(tasks, results):
        name = task.name or "base"
        if isinstance(res, SweepFailure):
            failures.append(res)
            print(f"[{name}] FAILED: {res.error}", file=sys.stderr)
        else:
            _summary(name, res)
            done[name] = res
    if done:
        for p in emit_results(done, cfg, cfg.out, svg=cfg.svg):
            print(f"wrote {p}")
    if failures:
        return _exit_code(failures[0].exception)
    return EXIT_OK


def _bound_spec(cfg: ExperimentConfig):
    """A representative model plus context; synthetic weights come from the base seed."""
    problem, ctx = cfg.problem_and_context()
    spec = problem if not callable(problem) else problem(stream(cfg.seed, "weights"))
    return spec, ctx


def cmd_bound(args: argparse.Namespace) -> int:
    cfg = _load(args)
    spec, ctx = _bound_spec(cfg)
    delta = cfg.delta if cfg.delta is not None else 1.0 / cfg.horizon
    inp = bound_inputs_from_spec(spec, ctx, cfg.horizon, delta)
    if cfg.preset == "synthetic":
        # weights are redrawn every run: use the largest possible ||b_i||^2
        sup = cfg.L * max(abs(cfg.weight_low), abs(cfg.weight_high)) ** 2
        inp = type(inp)(**{**inp.__dict__, "kappa_b": sup})
    mixed = not isinstance(spec.mixing, Weights)
    rep = bound_report(inp, mixed=mixed)
    rows = {
        "n": inp.n, "delta": inp.delta, "K": inp.K, "L": inp.L, "d": inp.d, "sigma": inp.sigma,
        "lambda_1_0": inp.lambda_1_0, "lambda_d_0": inp.lambda_d_0, "lambda_1_Psi": inp.lambda_1_Psi,
        "kappa_b": inp.kappa_b, "kappa_x": inp.kappa_x, "kappa_c1": inp.kappa_c1, "kappa_c2": inp.kappa_c2,
        **rep.as_dict(),
    }
    if isinstance(spec.mixing, Weights):
        sp = spectral_checks(spec)
        rows.update(lambda_GGt=sp.lambda_GGt, lambda_D=sp.lambda_D, lambda_GtG=sp.lambda_GtG)
    for k, v in rows.items():
        print(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
    if args.csv:
        path = Path(args.csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(rows) + "\n")
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in rows.values()) + "\n")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    from .movielens import check_malformed, factorize, kmeans, load_ratings, save_embeddings

    data = load_ratings(args.ratings)
    check_malformed(data, args.max_malformed)
    print(f"ratings {len(data)}  users {data.n_users}  items {data.n_items}  malformed {len(data.malformed)}")
    fact = factorize(data, args.rank, reg=args.reg, iters=args.iters, seed=args.seed)
    print(f"factorized rank {args.rank}: objective {fact.objective[0]:.6g} -> {fact.objective[-1]:.6g}, "
          f"rmse {fact.rmse(data):.6g}")
    if args.clusters > data.n_items:
        raise ConfigError(f"--clusters {args.clusters} exceeds the number of items ({data.n_items})")
    km = kmeans(fact.item_vectors, args.clusters, np.random.default_rng(args.seed))
    sizes = np.bincount(km.labels, minlength=args.clusters)
    print(f"k-means with {args.clusters} clusters: sizes {sizes.tolist()}")
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    npz = prefix.with_name(prefix.name + ".npz")
    save_embeddings(npz, fact.user_vectors, fact.item_vectors)
    K = args.actions if args.actions is not None else min(100, data.n_items)
    cfg = ExperimentConfig(
        preset="movielens", L=args.clusters, K=K, d=args.rank, horizon=5000,
        embeddings=npz.name, out=str(prefix.name + "_results"), agents=("ghierts", "lints", "hierts"),
    )
    cfg_path = prefix.with_name(prefix.name + ".cfg")
    cfg_path.write_text(cfg.to_text(), encoding="utf-8")
    print(f"wrote {npz}")
    print(f"wrote {cfg_path}")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import oracle_sweep

    start = time.perf_counter()
    res = oracle_sweep(args.instances, seed=args.seed or 0)
    status = "PASS" if res.ok else "FAIL"
    print(f"{status} oracle equivalence: {res.instances} instances, worst mean error {res.worst_mean:.3g}, "
          f"worst covariance error {res.worst_cov:.3g}, {time.perf_counter() - start:.1f} s")
    return EXIT_OK if res.ok else EXIT_NUMERICAL


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="experiment configuration file")
    p.add_argument("--seed", type=int, help="base seed; run r uses seed + r")
    p.add_argument("--runs", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--svg", action="store_true", help="also render an SVG chart")
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--alpha", type=float, help="LinUCB width")
    p.add_argument("--jitter", type=float, help="relative diagonal jitter for ill-conditioned covariances")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghierts", description="Hierarchical Thompson sampling experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the [sweep] grid")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bound", help="evaluate the Bayes-regret bound")
    _common(p)
    p.add_argument("--csv", help="also write the values as a one-row CSV")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("ingest", help="factorize a '::' ratings file and cluster the items")
    p.add_argument("ratings")
    p.add_argument("--rank", type=int, required=True, help="embedding dimension d")
    p.add_argument("--clusters", type=int, required=True, help="number of latent parameters L")
    p.add_argument("--reg", type=float, default=0.1)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--actions", type=int, help="K written to the generated config (default min(100, items))")
    p.add_argument("--max-malformed", type=float, default=0.01)
    p.add_argument("--out", default="embeddings", help="output prefix for .npz and .cfg")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("selftest", help="oracle-equivalence check")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def _exit_code(exc: BaseException | None) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (DataError, OSError)):
        return EXIT_IO
    return EXIT_NUMERICAL if isinstance(exc, (np.linalg.LinAlgError, FloatingPointError)) else EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NumericalError, DataError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
