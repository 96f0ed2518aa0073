"""Grid search for the compensator gains on calibration seeds.

Trains (or loads) the predictor ensemble for a scenario, then runs the
scenario with every (k_p, k_i, k_d) on the grid over a handful of
disturbance seeds that the evaluation stage never uses. The winner has
the smallest mean maximum lateral error among the candidates that do not
raise the mean oscillation index over the uncompensated runs.

    python scripts/tune_gains.py --seed 7 --out tune_out
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import tempfile
from pathlib import Path

import numpy as np

from steercomp import tdnn
from steercomp.config import ScenarioConfig
from steercomp.pipeline import derived_seed, pipeline, resolve_sigma, run_scenario

KP = (0.2, 0.4, 0.6, 0.8, 1.0)
KI = (0.0, 0.1, 0.25, 0.5)
KD = (0.0, 0.025, 0.05, 0.1)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="scenario JSON (defaults otherwise)")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--ensemble", help="trained ensemble JSON; trained from scratch if omitted")
    ap.add_argument("--runs", type=int, default=6, help="calibration seeds per candidate")
    ap.add_argument("--out", default="tune_out")
    args = ap.parse_args(argv)

    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig(seed=args.seed)
    cfg.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.ensemble:
        models = tdnn.load_ensemble(args.ensemble)
    else:
        cfg.pipeline.eval_runs = 1
        with tempfile.TemporaryDirectory() as tmp:
            models = pipeline(cfg, tmp).ensemble
        tdnn.save_ensemble(models, out / "ensemble.json")
    sigma = resolve_sigma(cfg)
    seeds = [derived_seed(cfg.seed, 6000 + i) for i in range(args.runs)]

    base = [run_scenario(cfg, sigma=sigma, seed=s, compensated=False)[1] for s in seeds]
    base_err = float(np.mean([m.max_lateral_error for m in base]))
    base_osc = float(np.mean([m.oscillation for m in base]))
    print(f"uncompensated: max lateral error {base_err:.4f} m, oscillation {base_osc:.3f}")

    rows = []
    for kp, ki, kd in itertools.product(KP, KI, KD):
        cfg.compensator = dict(cfg.compensator, k_p=kp, k_i=ki, k_d=kd)
        reps = [run_scenario(cfg, sigma=sigma, seed=s, models=models)[1] for s in seeds]
        err = float(np.mean([m.max_lateral_error for m in reps]))
        osc = float(np.mean([m.oscillation for m in reps]))
        diverged = any(m.extras.get("diverged") for m in reps)
        rows.append({"k_p": kp, "k_i": ki, "k_d": kd, "max_lateral_error": err,
                     "oscillation": osc, "diverged": diverged})
        print(f"kp={kp:<4} ki={ki:<4} kd={kd:<5} err={err:.4f} osc={osc:.3f}{' DIVERGED' if diverged else ''}")

    ok = [r for r in rows if not r["diverged"] and r["oscillation"] <= base_osc]
    best = min(ok or rows, key=lambda r: r["max_lateral_error"])
    with open(out / "gain_grid.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    summary = {"seed": cfg.seed, "calibration_seeds": seeds, "sigma": sigma,
               "uncompensated": {"max_lateral_error": base_err, "oscillation": base_osc},
               "best": best}
    (out / "best_gains.json").write_text(json.dumps(summary, indent=2) + "\n")
    print("best:", best)


if __name__ == "__main__":
    main()
