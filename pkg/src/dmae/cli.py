"""Command-line front end.

Commands: ``run`` (simulate a scenario and run one estimator), ``sweep``
(noise-mismatch sensitivity grid), ``check`` (existence/convergence condition
verdicts), ``validate`` (config diagnostics). Exit codes: 0 success, 1 usage
or config error, 2 numerical failure. Every output file embeds the config
digest and seed, so results are reproducible from their own metadata.
"""

import argparse
import json
import math
import os
import sys
from pathlib import Path

from dmae.analysis import (
    sensitivity_sweep,
    summarize_run,
    write_sweep_csv,
    write_sweep_detail_csv,
)
from dmae.baselines import run_akf, run_pf
from dmae.dmae import run_dmae
from dmae.kalman import NumericalError
from dmae.model import (
    ModelError,
    check_convergence_condition,
    check_existence_condition,
    combined_unknown_input_maps,
)
from dmae.scenario import ConfigError, load_config

OUTPUT_DIR_ENV = "DMAE_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; 2 is reserved for
    # numerical failures here, so remap to 1
    def error(self, message):
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(1)


def _resolve_outdir(arg) -> Path:
    path = Path(arg or os.environ.get(OUTPUT_DIR_ENV) or "runs")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_grid(text: str) -> list:
    """Either 'a..b' (decade steps, endpoints must be powers of ten) or a
    comma-separated list of positive floats."""
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = float(lo_s), float(hi_s)
        if lo <= 0 or hi <= 0:
            raise ConfigError(f"grid endpoints must be > 0, got {text!r}")
        e0, e1 = math.log10(lo), math.log10(hi)
        if abs(e0 - round(e0)) > 1e-9 or abs(e1 - round(e1)) > 1e-9:
            raise ConfigError(f"grid range endpoints must be powers of ten, got {text!r}")
        e0, e1 = round(e0), round(e1)
        if e1 < e0:
            raise ConfigError(f"grid range is empty: {text!r}")
        return [10.0**e for e in range(e0, e1 + 1)]
    vals = [float(t) for t in text.split(",") if t.strip()]
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError(f"grid must be positive floats, got {text!r}")
    return vals


def _parse_seeds(text: str) -> list:
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ConfigError(f"seed range is empty: {text!r}")
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",") if t.strip()]


_RUNNERS = {"dmae": run_dmae, "akf": run_akf, "pf": run_pf}


def _cmd_run(args) -> int:
    config = load_config(args.config)
    outdir = _resolve_outdir(args.output_dir)
    log = _RUNNERS[args.estimator](config, seed=args.seed)
    stem = f"{config.name}_{args.estimator}_seed{log.meta['seed']}"
    csv_path = outdir / f"{stem}.csv"
    json_path = outdir / f"{stem}.json"
    summary_path = outdir / f"{stem}_summary.json"
    log.to_csv(csv_path)
    log.to_json(json_path)
    summary = summarize_run(config, log)
    summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
    for path in (csv_path, json_path, summary_path):
        print(f"wrote {path}")
    rms = summary["rmse"]
    print(f"rmse x={rms['x']} d={rms['d']} f={rms['f']}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    outdir = _resolve_outdir(args.output_dir)
    grid = _parse_grid(args.grid)
    seeds = _parse_seeds(args.seeds)
    result = sensitivity_sweep(config, args.axis, grid=grid, seeds=seeds)
    digest = config.digest()
    summary_path = outdir / f"{config.name}_sweep_{args.axis}.csv"
    detail_path = outdir / f"{config.name}_sweep_{args.axis}_detail.csv"
    write_sweep_csv(summary_path, result, digest=digest)
    write_sweep_detail_csv(detail_path, result, digest=digest)
    print(f"wrote {summary_path}")
    print(f"wrote {detail_path}")
    for c, per_channel, overall, failures in result.summary():
        chans = " ".join(f"{v:.6g}" for v in per_channel)
        tail = f" failures={failures}" if failures else ""
        print(f"k={c:g} rmse=[{chans}] mean={overall:.6g}{tail}")
    return 0


def _cmd_check(args) -> int:
    config = load_config(args.config)
    model = config.build_model()
    print(f"config: {config.name} (digest {config.digest()})")
    Ep, Fp = combined_unknown_input_maps(model)
    ex = check_existence_condition(Ep, Fp, model.H(0))
    verdict = "satisfied" if ex.satisfied else "NOT satisfied"
    print(f"existence condition: {verdict} (lhs {ex.lhs_rank}, rhs {ex.rhs_rank})")
    try:
        conv = check_convergence_condition(
            model.A(0), model.E(0), model.H(0), frozen_time=model.time_varying
        )
        print(f"convergence condition: {conv.describe()}")
    except ModelError as exc:
        print(f"convergence condition: not applicable ({exc})")
    return 0


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    _, warnings = config.build_model().validate()
    for w in warnings:
        print(f"warning: {w}")
    print(f"ok: {config.name} (digest {config.digest()})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dmae", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and run one estimator")
    p_run.add_argument("config", help="scenario config file (YAML)")
    p_run.add_argument("--estimator", choices=sorted(_RUNNERS), default="dmae")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--output-dir", default=None, help=f"default ${OUTPUT_DIR_ENV} or ./runs")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="noise-mismatch sensitivity grid")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", choices=("Q", "R"), required=True)
    p_sweep.add_argument("--grid", default="1e-3..1e3", help="'a..b' decades or comma list")
    p_sweep.add_argument("--seeds", default="0..9", help="'a..b' inclusive or comma list")
    p_sweep.add_argument("--output-dir", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_check = sub.add_parser("check", help="existence/convergence condition verdicts")
    p_check.add_argument("config")
    p_check.set_defaults(func=_cmd_check)

    p_val = sub.add_parser("validate", help="config diagnostics")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
