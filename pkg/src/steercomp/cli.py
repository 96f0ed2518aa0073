"""Command-line entry point: ``steercomp <subcommand> [--config F] [--seed N] [--out D]``.

Exit codes: 0 success, 2 configuration error, 3 the vehicle left the path.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from . import tdnn
from .config import ScenarioConfig
from .errors import ConfigError, SteerCompError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _load(args) -> ScenarioConfig:
    if args.config:
        cfg = ScenarioConfig.load(args.config)
    else:
        cfg = ScenarioConfig(seed=args.seed if args.seed is not None else 0)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_compensator:
        cfg.compensator = "off"
    return cfg


def _out(args, cfg) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(cfg, out) -> int:
    lg, report = pl.run_scenario(cfg)
    lg.to_csv(out / "run.csv")
    text = report.to_json()
    (out / "metrics.json").write_text(text + "\n")
    print(text)
    return EXIT_DIVERGED if lg.diverged else EXIT_OK


def cmd_delay(cfg, out) -> int:
    lg, _ = pl.run_scenario(cfg, compensated=False)
    delay, curve, horizon = pl.identify(lg)
    pl.write_csv(out / "delay_curve.csv", ["shift[s]", "rmse[deg]"], curve)
    print(f"delay {delay:.2f} s (horizon {horizon} steps)")
    return EXIT_DIVERGED if lg.diverged else EXIT_OK


def cmd_pca(cfg, out) -> int:
    sigma = pl.resolve_sigma(cfg)
    pool = pl.truncate(pl.collect(cfg, sigma), cfg.pipeline.training_samples)
    report, _ = pl.select_features(cfg, pool)
    (out / "pca_report.txt").write_text(report.table() + "\n")
    _dump(out / "pca_report.json", report.to_dict())
    print(report.table())
    return EXIT_OK


def cmd_train(cfg, out) -> int:
    st = cfg.pipeline
    sigma = pl.resolve_sigma(cfg)
    pool = pl.collect(cfg, sigma)
    train_logs = pl.truncate(pool, st.training_samples)
    _, _, horizon = pl.identify(pool[0])
    _, features = pl.select_features(cfg, train_logs)
    template = tdnn.TdnnModel(feature_names=features, taps=st.taps, horizon_steps=horizon)
    models, results = pl.train_members(template, train_logs, st, cfg.seed)
    tdnn.save_ensemble(models, out / "ensemble.json")
    best = [r.val_loss[r.best_epoch] for r in results]
    print(f"trained {len(models)} members on {features}, horizon {horizon} steps; "
          f"best validation loss {min(best):.4g}..{max(best):.4g}")
    return EXIT_OK


def cmd_evaluate(cfg, out) -> int:
    if cfg.predictor in (None, "none"):
        raise ConfigError("evaluate needs a predictor file in the config")
    if cfg.compensator_config() is None:
        raise ConfigError("evaluate compares against the compensator; it cannot be off")
    models = tdnn.load_ensemble(cfg.predictor)
    sigma = pl.resolve_sigma(cfg)
    base, comp, improvements = pl.evaluate_runs(cfg, sigma, models)
    rows = [(label, seed, m.max_lateral_error, m.oscillation)
            for label, runs in (("uncompensated", base), ("compensated", comp))
            for seed, _, m in runs]
    pl.write_csv(out / "metrics.csv", ["run", "seed", "max_lateral_error[m]", "oscillation[deg/step]"], rows)
    _dump(out / "improvements.json", improvements)
    print(json.dumps(improvements["paired_mean"], indent=2))
    diverged = any(lg.diverged for _, lg, _ in base + comp)
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_pipeline(cfg, out) -> int:
    res = pl.pipeline(cfg, out)
    print(f"sigma {res.sigma:.4f} deg, delay {res.delay:.2f} s, features {res.features}")
    for row in res.table2:
        print(f"  {row['network']:<4} m={row['taps']} n={row['samples']:<5} {row['case']:<8} "
              f"CC {row['cc']:.3f}  CE {row['ce']:.3f}")
    print(json.dumps(res.improvements["paired_mean"], indent=2))
    diverged = any(lg.diverged for _, lg, _ in res.baseline + res.compensated)
    return EXIT_DIVERGED if diverged else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "delay": cmd_delay,
    "pca": cmd_pca,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steercomp", description="Delayed steering compensation experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__name__.replace("cmd_", ""))
        p.add_argument("--config", help="scenario JSON file")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory (default: the config's output_dir)")
        p.add_argument("--no-compensator", action="store_true", help="run with the compensator off")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, _out(args, cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc.cause, ConfigError) else 1
    except SteerCompError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
