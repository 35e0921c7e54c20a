"""Command-line entry point: ``tensorfield <command> [options]``.

Every failure exits nonzero after printing exactly one line to stderr::

    tensorfield: error: <ErrorType>: <message>
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from typing import Optional, Sequence

import numpy as np

from .config import METHODS, ConfigError, RunConfig, load_config
from .experiments import REPORT_COLUMNS, TrialResult, format_noisefit, format_report, run_method, run_sweep
from .fileio import read_grid, read_mask, write_grid, write_mask
from .recon import (
    NoiseSpec,
    ObservationSet,
    SamplingSpec,
    error_decomposition,
    noise_fit_experiment,
    observe,
    prop1_bound,
    rmse,
    sample_mask,
)
from .synth import synthetic_field
from .tensor import ShapeError

__all__ = ["main", "build_parser", "CliError"]

PROG = "tensorfield"
EXIT_FAILURE = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_FAILURE):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("UsageError", message, EXIT_USAGE)


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _shape_arg(text: str) -> tuple:
    dims = tuple(int(v) for v in text.lower().replace("x", " ").replace(",", " ").split())
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"shape must be three positive ints, got {text!r}")
    return dims


def _load_obs(obs_path: str, mask_path: str) -> ObservationSet:
    y = read_grid(obs_path)
    o = read_mask(mask_path)
    if y.shape != o.shape:
        raise ShapeError(f"observation grid {y.shape} and mask {o.shape} differ in shape")
    return ObservationSet(y * o, o)


def _seed(args, cfg: RunConfig, key: str) -> int:
    return cfg[key] if args.seed is None else args.seed


def cmd_synth(args, cfg: RunConfig) -> None:
    shape = args.shape or cfg["synth.shape"]
    write_grid(args.out, synthetic_field(_seed(args, cfg, "synth.seed"), shape))


def cmd_sample(args, cfg: RunConfig) -> None:
    x = read_grid(args.grid)
    rho = cfg["sampling.rho"] if args.rho is None else args.rho
    sigma = cfg["noise.sigma"] if args.sigma is None else args.sigma
    if args.seed is None:
        sampling = SamplingSpec(rho, cfg["sampling.seed"])
        noise = NoiseSpec(sigma, cfg["noise.seed"])
    else:
        sampling, noise = SamplingSpec(rho, args.seed), NoiseSpec(sigma, args.seed)
    obs = observe(x, sample_mask(x.shape, sampling), noise, sampling)
    write_grid(args.out, obs.y)
    write_mask(args.mask_out, obs.o)


def cmd_reconstruct(args, cfg: RunConfig) -> None:
    obs = _load_obs(args.obs, args.mask)
    truth = None
    if args.truth is not None:
        truth = read_grid(args.truth)
        if truth.shape != obs.shape:
            raise ShapeError(f"truth {truth.shape} and observations {obs.shape} differ in shape")
    seed = _seed(args, cfg, "model.init_seed")
    x_hat, iters, wall = run_method(args.method, obs, cfg, seed)
    if not np.all(np.isfinite(x_hat)):
        raise FloatingPointError(f"{args.method} produced non-finite values")
    write_grid(args.out, x_hat)
    result = TrialResult(
        method=args.method,
        rho=obs.rho,
        sigma=float("nan") if args.sigma is None else args.sigma,
        seed=seed,
        rmse=None if truth is None else rmse(x_hat, truth),
        iters=iters,
        wall_seconds=wall if cfg["report.timing"] else 0.0,
    )
    row = [result.method, repr(result.rho), "" if args.sigma is None else repr(result.sigma),
           result.seed, "" if result.rmse is None else repr(result.rmse), result.iters,
           repr(result.wall_seconds), ""]
    _write_text(args.report, _csv_text(REPORT_COLUMNS, [row]))


def cmd_sweep(args, cfg: RunConfig) -> None:
    truth = synthetic_field(cfg["synth.seed"], cfg["synth.shape"])
    _write_text(args.out, format_report(run_sweep(truth, cfg)))


def cmd_noisefit(args, cfg: RunConfig) -> None:
    sigma = cfg["noise.sigma"] if args.sigma is None else args.sigma
    if sigma <= 0:
        raise ValueError("noisefit needs sigma > 0")
    seed = _seed(args, cfg, "noise.seed")
    if args.grid is not None:
        field = read_grid(args.grid)
    else:
        field = synthetic_field(cfg["synth.seed"], cfg["synth.shape"])
    model = cfg.model(field.shape)
    res = noise_fit_experiment(model, cfg.optimizer, sigma, field, seed)
    _write_text(args.out, format_noisefit(res))
    n_core = int(np.prod(model.core_dims))
    bound = prop1_bound(n_core, res.n_entries)
    ratio = res.noise_residual / res.noise_energy
    # summary goes to stderr when the CSV itself is on stdout
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print(
        f"noise_energy={res.noise_energy!r} noise_residual={res.noise_residual!r} "
        f"residual_ratio={ratio!r} bound={bound!r} "
        f"final_mse_noise={res.noise.final_loss!r} final_mse_field={res.field.final_loss!r} "
        f"final_mse_field_plus_noise={res.field_plus_noise.final_loss!r}",
        file=stream,
    )


def cmd_decompose(args, cfg: RunConfig) -> None:
    x = read_grid(args.grid)
    obs = _load_obs(args.obs, args.mask)
    method = args.method or "tnn"
    if method not in ("tnn", "tnn_tv"):
        raise ValueError(f"decompose needs a TNN method, got {method!r}")
    dec = error_decomposition(
        x,
        cfg.model(x.shape),
        cfg.loss_for(method),
        cfg.optimizer,
        obs,
        init_seed=_seed(args, cfg, "model.init_seed"),
        warm_start=args.warm_start,
        hat_iters=args.hat_iters,
    )
    row = [repr(v) for v in (dec.E, dec.E1, dec.E2, dec.eps, dec.residual, dec.relative_residual)]
    row.append("; ".join(dec.notes))
    header = ("E", "E1", "E2", "eps", "residual", "relative_residual", "note")
    _write_text(args.out, _csv_text(header, [row]))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Reconstruct 3D fields from sparse samples with tensor neural networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_required=True, out_help="output path"):
        p.add_argument("--config", help="run configuration file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="overrides the seed(s) from the config")
        p.add_argument("--out", required=out_required, help=out_help)
        return p

    p = common(sub.add_parser("synth", help="write the synthetic sound-speed field"), out_help="grid file to write")
    p.add_argument("--shape", type=_shape_arg, help="grid shape, e.g. 20x20x20")
    p.set_defaults(func=cmd_synth)

    p = common(sub.add_parser("sample", help="sample and corrupt a grid"), out_help="observation grid to write")
    p.add_argument("grid", help="source grid file")
    p.add_argument("--rho", type=float, help="sampling ratio in (0, 1]")
    p.add_argument("--sigma", type=float, help="Gaussian noise std, physical units")
    p.add_argument("--mask-out", required=True, help="mask file to write")
    p.set_defaults(func=cmd_sample)

    p = common(sub.add_parser("reconstruct", help="complete a sampled grid"), out_help="reconstructed grid to write")
    p.add_argument("--obs", required=True, help="observation grid")
    p.add_argument("--mask", required=True, help="mask file")
    p.add_argument("--method", choices=METHODS, default="tnn")
    p.add_argument("--truth", help="ground-truth grid; enables the rmse column")
    p.add_argument("--sigma", type=float, help="noise level, recorded in the report only")
    p.add_argument("--report", default="-", help="report CSV path (default stdout)")
    p.set_defaults(func=cmd_reconstruct)

    p = common(sub.add_parser("sweep", help="run the Monte-Carlo trial grid"), False, "report CSV (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("noisefit", help="fit noise, field and field+noise"), False, "trace CSV (default stdout)")
    p.add_argument("--sigma", type=float, help="noise std in normalized field units")
    p.add_argument("--grid", help="field grid (default: synthetic field from the config)")
    p.set_defaults(func=cmd_noisefit)

    p = common(sub.add_parser("decompose", help="split the reconstruction error"), False, "CSV (default stdout)")
    p.add_argument("grid", help="ground-truth grid")
    p.add_argument("--obs", required=True, help="observation grid")
    p.add_argument("--mask", required=True, help="mask file")
    p.add_argument("--method", choices=("tnn", "tnn_tv"), default="tnn")
    p.add_argument("--warm-start", action="store_true", help="start the observation fit at the full-field optimum")
    p.add_argument("--hat-iters", type=int, help="iteration budget of the observation fit (0 skips it)")
    p.set_defaults(func=cmd_decompose)
    return parser


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        args.func(args, cfg)
    except CliError as exc:
        print(f"{PROG}: error: {exc.kind}: {_one_line(exc)}", file=sys.stderr)
        return exc.code
    except (ConfigError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"{PROG}: error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
