"""Command-line interface: ``imlekit {train,sample,eval,interpolate,verify}``.

Exit status is 0 on success, 1 when a run fails at compute time (divergence,
failing verification check) and 2 for bad configuration or inputs.
Every command is a pure function of its flags, config, seed and input files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_run_config
from .datasets import Dataset, DatasetError, gen_ring_mixture, load_csv, load_idx
from .evaluation import default_sigma_grid, interpolate_latent, parzen_log_likelihood, select_bandwidth
from .images import grid_image, write_ppm
from .models import GeneratorNet
from .numerics import RngStream
from .training import TrainingDiverged, draw_model_samples, imle_train
from .verification import SUITES, report_csv, run_suite

log = logging.getLogger("imlekit")

# stream ids carved out of the run seed
_DATA_STREAM, _INIT_STREAM, _TRAIN_STREAM = 1, 2, 3
_SAMPLE_STREAM, _EVAL_STREAM, _INTERP_STREAM = 10, 11, 12


class UsageError(Exception):
    """Bad flags, config or inputs; maps to exit status 2."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_rows_csv(path: Path, rows: np.ndarray, header: str | None = None) -> None:
    lines = [header] if header else []
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- train

def _load_training_data(cfg: RunConfig, seed: int) -> Dataset:
    d = cfg.data
    if d.kind == "ring":
        rng = RngStream(d.seed if d.seed is not None else seed, _DATA_STREAM)
        return gen_ring_mixture(rng, d.k, d.radius, d.std, d.n)
    path = cfg.data_path()
    data = load_idx(path) if d.kind == "idx" else load_csv(path, d.has_header)
    if d.limit is not None and d.limit < data.n:
        data = Dataset(data.points[:d.limit], data.source_tag, data.normalization, data.image_shape)
    return data


def _build_net(cfg: RunConfig, data: Dataset, seed: int) -> GeneratorNet:
    act = cfg.model.output_activation or ("sigmoid" if cfg.data.kind == "idx" else "identity")
    rng = RngStream(seed, _INIT_STREAM)
    if cfg.model.preset == "custom":
        sizes = list(cfg.model.layer_sizes)
        if sizes[-1] != data.dim:
            raise UsageError(f"model.layer_sizes ends in {sizes[-1]} but data has dim {data.dim}")
        return GeneratorNet.initialized(sizes, rng, act)
    return GeneratorNet.from_preset(cfg.model.preset, data.dim, rng, act)


def cmd_train(args) -> int:
    if not args.config:
        raise UsageError("train needs --config")
    cfg = load_run_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    cfg.train.seed = seed
    out = Path(args.out) if args.out else cfg.out_dir()
    path = cfg.data_path()
    if path is not None and not path.is_file():
        raise UsageError(f"data file not found: {path}")

    data = _load_training_data(cfg, seed)
    net = _build_net(cfg, data, seed)
    image_shape = tuple(cfg.data.image_shape) if cfg.data.image_shape else data.image_shape
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"

    def snapshot(net_now, k):
        return Checkpoint(net_now, seed, k, image_shape, cfg.raw)

    def on_outer(k, net_now, _rec):
        if cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
            save_checkpoint(out / f"ckpt_{k:06d}.imle", snapshot(net_now, k))

    try:
        trained, trace = imle_train(net, data, cfg.train, RngStream(seed, _TRAIN_STREAM),
                                    on_outer=on_outer, record_wall_time=cfg.record_wall_time)
    except TrainingDiverged as exc:
        trace_path.write_text(exc.trace.to_csv())
        print(f"error: training diverged: {exc} (trace so far in {trace_path})", file=sys.stderr)
        return 1
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trace_path.write_text(trace.to_csv())
    save_checkpoint(out / "final.imle", snapshot(trained, len(trace)))
    print(f"trained {len(trace)} outer iterations; wrote {trace_path} and {out / 'final.imle'}")
    return 0


# ---------------------------------------------------------------- sample

def _open_checkpoint(path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"checkpoint not found: {p}")
    return load_checkpoint(p)


def _raster_shape(ckpt: Checkpoint) -> tuple[int, int]:
    shape = ckpt.image_shape
    if shape is None or shape[0] * shape[1] != ckpt.net.data_dim:
        raise UsageError(f"data dim {ckpt.net.data_dim} is not a declared HxW image shape")
    return shape


def cmd_sample(args) -> int:
    ckpt = _open_checkpoint(args.checkpoint)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    shape = _raster_shape(ckpt) if args.format == "ppm-grid" else None
    _, samples = draw_model_samples(ckpt.net, RngStream(args.seed or 0, _SAMPLE_STREAM), args.count)
    if args.format == "csv":
        target = out / "samples.csv"
        _write_rows_csv(target, samples)
    else:
        if args.grid_cols < 1:
            raise UsageError("--grid-cols must be >= 1")
        target = out / "samples.ppm"
        write_ppm(target, grid_image(samples, shape, args.grid_cols))
    print(f"wrote {args.count} samples to {target}")
    return 0


# ---------------------------------------------------------------- eval

def _parse_sigmas(text: str | None) -> np.ndarray:
    if text is None:
        return default_sigma_grid()
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise UsageError("sigma grid is empty")
    try:
        grid = np.array([float(p) for p in parts])
    except ValueError:
        raise UsageError(f"unparsable sigma grid: {text!r}") from None
    if np.any(grid <= 0):
        raise UsageError("sigmas must be positive")
    return grid


def _load_eval_data(path: Path, has_header: bool) -> Dataset:
    if not path.is_file():
        raise UsageError(f"data file not found: {path}")
    return load_csv(path, has_header) if path.suffix.lower() == ".csv" else load_idx(path)


def cmd_eval(args) -> int:
    ckpt = _open_checkpoint(args.checkpoint)
    sigmas = _parse_sigmas(args.sigmas)
    if not args.data:
        raise UsageError("eval needs --data")
    test = _load_eval_data(Path(args.data), args.has_header)
    if test.dim != ckpt.net.data_dim:
        raise UsageError(f"model emits dim {ckpt.net.data_dim}, test data has dim {test.dim}")
    if not 0 < args.val_frac < 1:
        raise UsageError("--val-frac must lie in (0, 1)")
    n_val = max(1, int(round(args.val_frac * test.n)))
    if n_val >= test.n:
        raise UsageError("test set too small for a validation split")
    rng = RngStream(args.seed or 0, _EVAL_STREAM)
    perm = rng.permutation(test.n)
    val, rest = test.subset(perm[:n_val]), test.subset(perm[n_val:])
    _, centers = draw_model_samples(ckpt.net, rng, args.centers)
    sigma = select_bandwidth(centers, val, sigmas)
    est = parzen_log_likelihood(centers, sigma, rest)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    target = out / "eval.csv"
    target.write_text("sigma,mean_loglik,stderr,n_test,n_validation,n_centers\n"
                      f"{_fmt(sigma)},{_fmt(est.mean)},{_fmt(est.stderr)},{rest.n},{val.n},{est.n_centers}\n")
    print(f"parzen log-likelihood {est.mean:.4f} +/- {est.stderr:.4f} (sigma={sigma:g}); wrote {target}")
    return 0


# ---------------------------------------------------------------- interpolate

def cmd_interpolate(args) -> int:
    ckpt = _open_checkpoint(args.checkpoint)
    shape = _raster_shape(ckpt)
    if args.endpoints < 2 or args.steps < 2:
        raise UsageError("need at least two endpoints and two steps")
    z = RngStream(args.seed or 0, _INTERP_STREAM).normal((args.endpoints, ckpt.net.latent_dim))
    rows = np.concatenate(interpolate_latent(ckpt.net, z, args.steps), axis=0)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    target = out / "interpolation.ppm"
    write_ppm(target, grid_image(rows, shape, args.steps))
    print(f"wrote {args.endpoints} segments x {args.steps} steps to {target}")
    return 0


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    if args.suite != "all" and args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}, all")
    names = SUITES if args.suite == "all" else (args.suite,)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for name in names:
        rows = run_suite(name, args.seed or 0)
        (out / f"verify-{name}.csv").write_text(report_csv(rows))
        for row in rows:
            print(f"{'PASS' if row.passed else 'FAIL'} {row.check_id} statistic={row.statistic:.6g} "
                  f"expected={row.expected:.6g} tol={row.tolerance:.3g}")
        failed += sum(not r.passed for r in rows)
    return 1 if failed else 0


# ---------------------------------------------------------------- entry point

def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=_seed, default=None, help="unsigned 64-bit seed")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="imlekit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"imlekit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="run IMLE training from a config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="draw random samples from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--format", choices=("csv", "ppm-grid"), default="csv")
    p.add_argument("--grid-cols", type=int, default=8)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", parents=[common], help="Parzen-window log-likelihood of test data")
    p.add_argument("checkpoint")
    p.add_argument("--data", help="test set (IDX, or CSV by .csv suffix)")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--centers", type=int, default=10000)
    p.add_argument("--sigmas", help="comma-separated bandwidth grid (default: 20 log-spaced in [0.01, 1])")
    p.add_argument("--val-frac", type=float, default=0.1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("interpolate", parents=[common], help="latent interpolation grid as PPM")
    p.add_argument("checkpoint")
    p.add_argument("--endpoints", type=int, default=4)
    p.add_argument("--steps", type=int, default=8)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("verify", parents=[common], help="run theory verification suites")
    p.add_argument("suite", help=f"one of {', '.join(SUITES)}, all")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DatasetError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
