"""Command-line entry point.

Every command writes its artifacts into ``--output`` (a directory). Each JSON
artifact carries the tool version, the echoed configuration and the effective
seed; wall-clock stamps and runtimes are added only with ``--timing`` so that
default runs stay byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import adaptive_mechanism
from .audit import compare_report, default_alpha_grid, estimate_tradeoff, estimate_utility
from .errors import ConfigError, DataError, GibbsPCAError, OutOfRegime
from .io import read_dataset, write_frame, write_json, write_matrix_csv
from .mechanism import DEFAULT_SEED, MODES, GibbsTarget, SamplerConfig, as_summary, sample
from .preprocess import rank_mechanism, rank_transform
from .spectral import spiked_dataset, spiked_summary
from .theory import (
    NO_UTILITY_LABEL,
    OUT_OF_REGIME_LABEL,
    PLUGIN_LABEL,
    beta_for_target,
    guarantee_label,
    privacy_profile,
    sigma_beta,
    utility_prediction,
)

COMMANDS = ("preprocess", "privatize", "calibrate", "predict", "adaptive", "audit")
SYNTH_STREAM = 99


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be >= 0")
    return value


def _float_list(text: str):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number list {text!r}") from None


def _alpha_grid(text: str):
    """Either a comma list or ``start:stop:step`` (inclusive stop)."""
    if ":" in text:
        try:
            start, stop, step = (float(t) for t in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid alpha grid {text!r}") from None
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return _float_list(text)


def parse_synth(spec: str):
    """``spiked:p,k,spike_1,...,spike_m,bulk,theta`` -> (p, k, spikes, bulk, theta)."""
    kind, _, body = spec.partition(":")
    if kind != "spiked":
        raise ConfigError(f"unknown synthetic generator {kind!r}; expected 'spiked'")
    try:
        fields = [t.strip() for t in body.split(",")]
        p, k = int(fields[0]), int(fields[1])
        spikes = [float(t) for t in fields[2:-2]]
        bulk, theta = float(fields[-2]), float(fields[-1])
    except (ValueError, IndexError):
        raise ConfigError(f"malformed --synth {spec!r}; expected spiked:p,k,spikes...,bulk,theta") from None
    if not spikes:
        raise ConfigError("--synth needs at least one spike")
    if theta <= 0:
        raise ConfigError("--synth theta must be > 0")
    return p, k, spikes, bulk, theta


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbspca", description="Gibbs-mechanism private PCA")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--input", help="CSV dataset, one sample per row")
    src.add_argument("--synth", help="synthetic source spiked:p,k,spikes...,bulk,theta")
    common.add_argument("--output", required=True, help="output directory")
    common.add_argument("--k", type=int, help="subspace rank")
    common.add_argument("--seed", type=_seed, default=DEFAULT_SEED, help="run seed (default 0x5EED)")
    common.add_argument("--sampler-mode", choices=MODES, default="approximate")
    common.add_argument("--mh-burnin", type=int, default=64)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--frame-format", choices=("csv", "bin"), default="csv")
    common.add_argument("--timing", action="store_true", help="embed wall-clock and runtimes")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="rank-transform a dataset")

    p = sub.add_parser("privatize", parents=[common], help="one Gibbs-mechanism draw")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--rank", action="store_true", help="use the rank covariance")

    p = sub.add_parser("calibrate", parents=[common], help="beta for a target privacy level")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--w", type=float)
    g.add_argument("--w-sq", type=float)

    p = sub.add_parser("predict", parents=[common], help="utility curves over a beta grid")
    p.add_argument("--beta", type=_float_list, required=True, help="comma-separated beta grid")

    p = sub.add_parser("adaptive", parents=[common], help="private calibration then sampling")
    p.add_argument("--rho", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--w", type=float)
    g.add_argument("--w-sq", type=float)

    p = sub.add_parser("audit", parents=[common], help="Monte-Carlo utility and trade-off audit")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--n-mc", type=int, required=True)
    p.add_argument("--alpha-grid", type=_alpha_grid)
    p.add_argument("--kind", choices=("tradeoff", "utility", "both"), default="both")
    p.add_argument("--alternative", choices=("neighbor", "null"), default="neighbor")
    return parser


class _Run:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.output)
        self.start = time.perf_counter()
        self.config = SamplerConfig(mode=args.sampler_mode, mh_burnin=args.mh_burnin, seed=args.seed)

    def echo(self) -> dict:
        return {k: v for k, v in sorted(vars(self.args).items()) if k not in ("output", "timing", "workers")}

    def envelope(self, body: dict) -> dict:
        doc = {
            "tool": "gibbspca",
            "version": __version__,
            "command": self.args.command,
            "config": self.echo(),
            "seed": self.args.seed,
            **body,
        }
        if self.args.timing:
            doc["wall_clock"] = datetime.now(timezone.utc).isoformat()
            doc["runtime_s"] = time.perf_counter() - self.start
        return doc

    def need_k(self) -> int:
        if self.args.k is None:
            syn = self.synth()
            if syn is not None:
                return syn[1]
            raise ConfigError(f"{self.args.command} requires --k")
        return self.args.k

    def synth(self):
        return parse_synth(self.args.synth) if self.args.synth else None

    def dataset(self):
        """A concrete dataset: read from CSV or generated from the synthetic spec."""
        syn = self.synth()
        if syn is not None:
            p, _, spikes, bulk, theta = syn
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.args.seed, spawn_key=(SYNTH_STREAM,))))
            return spiked_dataset(p, spikes, bulk, theta, rng)
        if self.args.input is None:
            raise ConfigError("one of --input or --synth is required")
        try:
            return read_dataset(self.args.input)
        except OSError as exc:
            raise DataError(f"cannot read input: {exc}") from None

    def source(self, k: int):
        """Spectral source: synthetic spectra skip data generation."""
        syn = self.synth()
        if syn is not None:
            p, _, spikes, bulk, theta = syn
            return spiked_summary(p, k, spikes, bulk, theta)
        return as_summary(self.dataset(), k)

    def frame_name(self) -> str:
        return "frame." + self.args.frame_format


def _label_for(summary, beta: float):
    if beta == 0:
        return None, NO_UTILITY_LABEL
    try:
        s2 = sigma_beta(privacy_profile(summary), beta)
    except OutOfRegime:
        return None, OUT_OF_REGIME_LABEL
    return math.sqrt(s2), guarantee_label(math.sqrt(s2))


def cmd_preprocess(run: _Run) -> None:
    ranked = rank_transform(run.dataset())
    write_matrix_csv(run.out / "ranked.csv", ranked.values)
    write_json(run.out / "summary.json", run.envelope({"summary": ranked.summary()}))


def cmd_privatize(run: _Run) -> None:
    args = run.args
    k = run.need_k()
    if args.rank:
        res = rank_mechanism(run.dataset(), args.beta, k, run.config)
        frame, sig, label = res.frame, res.sigma_beta, res.guarantee_label
    else:
        summary = run.source(k)
        frame = sample(GibbsTarget(summary, args.beta), run.config)
        sig, label = _label_for(summary, args.beta)
    write_frame(run.out / run.frame_name(), frame, args.frame_format)
    body = {"beta": args.beta, "sigma_beta": sig, "guarantee_label": label, "frame_file": run.frame_name()}
    write_json(run.out / "report.json", run.envelope(body))


def _w_sq(args) -> float:
    w_sq = args.w_sq if args.w_sq is not None else args.w**2
    if not w_sq > 0:
        raise ConfigError("target privacy level must be > 0")
    return float(w_sq)


def cmd_calibrate(run: _Run) -> None:
    k = run.need_k()
    w_sq = _w_sq(run.args)
    profile = privacy_profile(run.source(k))
    beta = beta_for_target(profile, w_sq)
    body = {
        "w_sq": w_sq,
        "beta": beta,
        "sigma_min_sq": profile.sigma_min_sq,
        "beta_crit": profile.beta_crit,
        "profile": profile.to_dict(),
        "feasible": True,
        "label": PLUGIN_LABEL,
        "private": False,
    }
    write_json(run.out / "calibrate.json", run.envelope(body))


def cmd_predict(run: _Run) -> None:
    k = run.need_k()
    summary = run.source(k)
    rows = []
    for beta in run.args.beta:
        pred = utility_prediction(summary, beta)
        sig, label = _label_for(summary, beta)
        rows.append({**pred.to_dict(), "sigma_beta": sig, "guarantee_label": label})
    write_json(run.out / "predict.json", run.envelope({"curve": rows}))
    with open(run.out / "predict.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "spec_err_sq", "fro_err_sq", "sigma_beta"] + [f"overlap_{i + 1}" for i in range(k)])
        for r in rows:
            sig = "" if r["sigma_beta"] is None else repr(r["sigma_beta"])
            w.writerow([repr(r["beta"]), repr(r["spec_err_sq"]), repr(r["fro_err_sq"]), sig]
                       + [repr(x) for x in r["overlap_diag"]])


def cmd_adaptive(run: _Run) -> None:
    k = run.need_k()
    res = adaptive_mechanism(run.source(k), run.args.rho, _w_sq(run.args), k, run.config)
    write_frame(run.out / run.frame_name(), res.frame, run.args.frame_format)
    write_json(run.out / "report.json", run.envelope({**res.report(), "frame_file": run.frame_name()}))


def cmd_audit(run: _Run) -> None:
    args = run.args
    k = run.need_k()
    source = run.source(k)
    estimates, runtimes = [], {}
    if args.kind in ("utility", "both"):
        t0 = time.perf_counter()
        estimates.append(estimate_utility(source, args.beta, k, args.n_mc, run.config, args.workers))
        runtimes["utility_s"] = time.perf_counter() - t0
    if args.kind in ("tradeoff", "both"):
        t0 = time.perf_counter()
        grid = args.alpha_grid if args.alpha_grid is not None else default_alpha_grid()
        estimates.append(estimate_tradeoff(source, args.beta, k, args.n_mc, grid, run.config,
                                           args.workers, args.alternative))
        runtimes["tradeoff_s"] = time.perf_counter() - t0
    report = compare_report(estimates, runtimes=runtimes if args.timing else None)
    write_json(run.out / "audit.json", run.envelope({"report": report}))


HANDLERS = {
    "preprocess": cmd_preprocess,
    "privatize": cmd_privatize,
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "adaptive": cmd_adaptive,
    "audit": cmd_audit,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = _Run(args)
        run.out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            HANDLERS[args.command](run)
    except GibbsPCAError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"seed={args.seed}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
