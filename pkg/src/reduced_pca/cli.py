"""Command-line front end: ``reduced-pca {mp,predict,cov,denoise,sim}``.

Matrices are read and written as headerless comma-separated files (one row
per sample); configs and reports are JSON.  Floats are written with 17
significant digits.  Exit status is 0 on success, 1 on domain errors and 2
on I/O, parse or shape errors; errors are reported as JSON on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .covariance import Loss, ShrinkageRule, estimate_covariance, estimate_reduction_moments
from .denoise import (
    amse,
    denoise_matrix,
    denoise_rows,
    estimate_plugin_params,
    optimal_coefficients,
    top_right_singular_vectors,
)
from .errors import DomainError
from .model import DataSet, DenoiserMode, NoiseModel, ReducedModelConfig
from .mp_law import solve_general_mp
from .simulate import Quantity, run_mc
from .spike_maps import noise_law, predict_config, predict_reduced

MP_HEADER = "x,m,m_under,D,Dprime"
PREDICT_HEADER = "k,ell,t_sq,cos_sq_right,cos_sq_left,detectable"
COV_HEADER = "k,eigenvalue,shrunk_eigenvalue"
SIM_HEADER = "quantity,empirical_mean,empirical_sd,theoretical,reps"

EPILOG = f"""\
output headers:
  mp       {MP_HEADER}   (preceded by a '# edge_sq=..., d_edge=...' line)
  predict  {PREDICT_HEADER}
  cov      {COV_HEADER}   (--matrix-out: headerless p x p matrix)
  denoise  headerless matrix; report JSON via --report
  sim      {SIM_HEADER}
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D401 - argparse hook
        raise UsageError(message)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _csv_lines(rows: Iterable[Sequence]) -> list[str]:
    return [",".join(_fmt(v) for v in row) for row in rows]


def _write_text(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` atomically, or to stdout when ``path`` is None or '-'."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header: str | None, rows, preamble: Sequence[str] = ()) -> None:
    lines = list(preamble)
    if header is not None:
        lines.append(header)
    lines.extend(_csv_lines(rows))
    _write_text(path, "\n".join(lines) + "\n")


def _read_matrix(path: str) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise ValueError(f"cannot parse matrix {path}: {exc}") from exc


def _load_config(args) -> ReducedModelConfig:
    cfg = ReducedModelConfig.from_json(args.config)
    noise = getattr(args, "noise", None)
    if noise is not None:
        cfg = dataclasses.replace(cfg, noise_model=NoiseModel(noise))
    return cfg


def _load_data(y_path: str, d_path: str | None) -> DataSet:
    y = _read_matrix(y_path)
    d = _read_matrix(d_path) if d_path else np.ones_like(y)
    return DataSet(y=y, d=d)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_mp(args) -> None:
    cfg = _load_config(args)
    sol = solve_general_mp(noise_law(cfg), cfg.gamma, n_points=args.grid, span=args.span)
    rows = zip(sol.grid, sol.m_hat, sol.m_under_hat, sol.d_hat, sol.d_prime_hat)
    pre = [f"# edge_sq={_fmt(sol.edge_sq)}, d_edge={_fmt(sol.d_edge)}"]
    _write_csv(args.output, MP_HEADER, rows, pre)


def cmd_predict(args) -> None:
    cfg = _load_config(args)
    method = args.method
    if method == "auto":
        method = "closed" if cfg.white_noise else "general"
    if method == "closed":
        if not cfg.white_noise:
            raise DomainError("closed-form predictions need white noise; use --method general")
        pred = predict_reduced(cfg)
        # report the raw squared singular value of Y / sqrt(n)
        scale = cfg.second_moment if cfg.noise_model is NoiseModel.REDUCED else 1.0
        t_sq = [scale * t for t in pred.t_sq]
    else:
        pred = predict_config(cfg, n_points=args.grid)
        t_sq = list(pred.t_sq)
    rows = [
        (k + 1, ell, t, cr, cl, det)
        for k, (ell, t, cr, cl, det) in enumerate(
            zip(cfg.spikes, t_sq, pred.cos_sq_right, pred.cos_sq_left, pred.detectable)
        )
    ]
    _write_csv(args.output, PREDICT_HEADER, rows)


def cmd_cov(args) -> None:
    cfg = _load_config(args)
    if args.alt and not args.d:
        raise ValueError("--alt needs the reduction matrix (--d)")
    data = _load_data(args.y, args.d)
    if args.estimate_moments:
        if not args.d:
            raise ValueError("--estimate-moments needs the reduction matrix (--d)")
        mu, s2 = estimate_reduction_moments(data.d)
        cfg = ReducedModelConfig.general(cfg.gamma, cfg.spikes, mu, s2, cfg.noise_model, cfg.noise_variances)
    rule = ShrinkageRule(Loss(args.loss), cfg.noise_model, args.margin)
    raw, shrunk = estimate_covariance(data, cfg, rule, rank=args.rank, alternative=args.alt)
    rows = [(k + 1, a, b) for k, (a, b) in enumerate(zip(raw.eigenvalues, shrunk.eigenvalues))]
    _write_csv(args.output, COV_HEADER, rows)
    if args.matrix_out:
        _write_csv(args.matrix_out, None, shrunk.sigma_hat)


def cmd_denoise(args) -> None:
    cfg = _load_config(args)
    data = _load_data(args.y, args.d)
    mode = DenoiserMode(args.mode)
    report: dict = {}
    if args.plugin:
        est = estimate_plugin_params(data, cfg.noise_model, mu=cfg.mu, sigma2=cfg.sigma2, gamma=cfg.gamma)
        report["rank_source"] = "plugin_estimate (extension: rank inferred from the bulk edge)"
        cfg = cfg.with_spikes(est.spikes)
    else:
        report["rank_source"] = "config"
    coef = optimal_coefficients(cfg, mode)
    r = cfg.rank

    if mode is DenoiserMode.BLP:
        if not args.u:
            raise ValueError("blp mode needs the population PCs (--u, p x r)")
        basis = _read_matrix(args.u)
        if basis.shape != (data.p, r):
            raise ValueError(f"--u has shape {basis.shape}, expected {(data.p, r)}")
        s_hat = denoise_rows(data.y, basis, coef)
    elif mode is DenoiserMode.EBLP_IN_SAMPLE:
        s_hat = denoise_matrix(data, coef, r)
    else:
        if not args.new:
            raise ValueError("oos mode needs the rows to denoise (--new)")
        new = _read_matrix(args.new)
        if new.shape[1] != data.p:
            raise ValueError(f"--new has {new.shape[1]} columns, expected {data.p}")
        _, basis = top_right_singular_vectors(data.y, r)
        s_hat = denoise_rows(new, basis, coef)

    report.update(amse(cfg, mode, coef).to_dict())
    if args.s_oracle:
        s_true = _read_matrix(args.s_oracle)
        if s_true.shape != s_hat.shape:
            raise ValueError(f"--s-oracle has shape {s_true.shape}, expected {s_hat.shape}")
        report["realized_mse"] = float(np.sum((s_hat - s_true) ** 2) / s_hat.shape[0])
    _write_csv(args.output, None, s_hat)
    _write_text(args.report, json.dumps(report, indent=2) + "\n")


def cmd_sim(args) -> None:
    cfg = _load_config(args)
    p = args.p if args.p is not None else max(1, round(cfg.gamma * args.n))
    targets = [Quantity(t.strip()) for t in args.targets.split(",") if t.strip()]
    if not targets:
        raise ValueError("no targets given")
    results = run_mc(cfg, args.n, p, args.reps, targets, args.seed, workers=args.workers, oos_rows=args.oos_rows)
    rows = [(r.quantity.value, r.empirical_mean, r.empirical_sd, r.theoretical, r.reps) for r in results]
    lines = [SIM_HEADER] + [f"{q},{_fmt(a)},{_fmt(b)},{_fmt(c)},{n}" for q, a, b, c, n in rows]
    _write_text(args.output, "\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="reduced-pca",
        description="Spectral predictions, covariance estimation and denoising under diagonal reduction.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_, func):
        sp = sub.add_parser(name, help=help_, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", required=True, help="model config JSON")
        sp.add_argument("-o", "--output", default=None, help="output path (default: stdout)")
        sp.set_defaults(func=func)
        return sp

    sp = add("mp", "tabulate MP transforms right of the bulk edge", cmd_mp)
    sp.add_argument("--grid", type=int, default=200, help="number of grid points")
    sp.add_argument("--span", type=float, default=50.0, help="grid reaches span * edge")

    sp = add("predict", "limits of top singular values and cosines", cmd_predict)
    sp.add_argument("--method", choices=("auto", "closed", "general"), default="auto")
    sp.add_argument("--grid", type=int, default=2000, help="MP solver grid size (general method)")

    sp = add("cov", "debiased covariance estimate with optimal shrinkage", cmd_cov)
    sp.add_argument("--y", required=True, help="observations CSV (n x p)")
    sp.add_argument("--d", help="reduction diagonals CSV (n x p)")
    sp.add_argument("--noise", choices=[m.value for m in NoiseModel])
    sp.add_argument("--loss", choices=[l.value for l in Loss], default=Loss.FROBENIUS.value)
    sp.add_argument("--rank", type=int, default=None, help="only the top RANK eigenvalues may survive")
    sp.add_argument("--margin", type=float, default=None, help="absolute margin above the bulk edge")
    sp.add_argument("--alt", action="store_true", help="use the entrywise linear-system estimator")
    sp.add_argument("--estimate-moments", action="store_true", help="estimate mu, sigma^2 from --d")
    sp.add_argument("--matrix-out", help="write the shrunk covariance matrix here")

    sp = add("denoise", "BLP / EBLP denoising", cmd_denoise)
    sp.add_argument("--y", required=True, help="observations CSV (n x p)")
    sp.add_argument("--d", help="reduction diagonals CSV (n x p)")
    sp.add_argument("--mode", choices=[m.value for m in DenoiserMode], default=DenoiserMode.EBLP_IN_SAMPLE.value)
    sp.add_argument("--noise", choices=[m.value for m in NoiseModel])
    sp.add_argument("--u", help="population PCs CSV (p x r), blp mode")
    sp.add_argument("--new", help="rows to denoise out of sample, oos mode")
    sp.add_argument("--plugin", action="store_true", help="estimate spikes and rank from the data")
    sp.add_argument("--s-oracle", help="true signal CSV, adds realized_mse to the report")
    sp.add_argument("--report", required=True, help="AMSE report JSON path")

    sp = add("sim", "seeded Monte Carlo against theory", cmd_sim)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=int, default=None, help="default: round(gamma * n)")
    sp.add_argument("--reps", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--targets", default=Quantity.TOP_EIGENVALUE.value,
                    help="comma list of " + ",".join(q.value for q in Quantity))
    sp.add_argument("--workers", type=int, default=None, help="threads (default: $REDUCED_PCA_THREADS or cpu count)")
    sp.add_argument("--oos-rows", type=int, default=1)
    return parser


def _fail(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except DomainError as exc:
        return _fail(type(exc).__name__, exc, 1)
    except UsageError as exc:
        return _fail("UsageError", exc, 2)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail(type(exc).__name__, exc, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
