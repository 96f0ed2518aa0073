"""End-to-end experiment: collect, identify, select, train, compensate.

Stages, in order: calibrate the disturbance level, collect uncompensated
logs, identify the actuator delay, rank channels by PCA, train the
predictor ensembles, and compare compensated against uncompensated runs.
All artifacts are written under one output directory; CSV outputs depend
only on the configuration and seed.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, pca, tdnn
from .config import ScenarioConfig
from .compensator import CompensatorConfig
from .errors import InsufficientData, SteerCompError
from .plant import calibrate_sigma
from .simulation import LoopSetup, SampleLog, run_loop
from .tracking import slalom_path

log = logging.getLogger(__name__)


class StageError(SteerCompError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name, timings):
    t0 = time.perf_counter()
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def derived_seed(seed: int, tag: int) -> int:
    """Independent plant seeds for the many runs of one experiment."""
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


# scenario runs -------------------------------------------------------------

def resolve_sigma(cfg: ScenarioConfig) -> float:
    """Configured disturbance level, or the calibrated one.

    Calibration uses a noise-free, uncompensated run of the scenario.
    """
    if not cfg.calibrate_sigma:
        return float(cfg.plant["disturbance_sigma"])
    plant = cfg.plant_config(sigma=0.0)
    clean, _ = run_loop(LoopSetup(path=cfg.reference_path(), plant=plant, speed_kmh=cfg.speed_kmh,
                                  lookahead=cfg.lookahead_m, max_time=cfg.max_time_s))
    return calibrate_sigma(clean.columns["u"], plant)


def run_scenario(cfg: ScenarioConfig, sigma=None, seed=None, models=None, compensated=None,
                 path=None, speed_kmh=None, lookahead=None):
    """One closed-loop run of ``cfg``; returns ``(SampleLog, MetricsReport)``.

    The compensator is active when the config enables it and a predictor is
    available (``models`` or the config's predictor file), unless
    ``compensated`` forces it off.
    """
    if sigma is None:
        sigma = resolve_sigma(cfg)
    comp = cfg.compensator_config()
    if models is None and cfg.predictor not in (None, "none"):
        models = tdnn.load_ensemble(cfg.predictor)
    if compensated is False:
        comp = None
    speed = cfg.speed_kmh if speed_kmh is None else speed_kmh
    setup = LoopSetup(
        path=path or cfg.reference_path(),
        plant=cfg.plant_config(sigma=sigma, seed=cfg.seed if seed is None else seed),
        speed_kmh=speed,
        lookahead=cfg.lookahead_m if lookahead is None else lookahead,
        compensator=comp,
        models=models if comp is not None else None,
        max_time=cfg.max_time_s,
    )
    return run_loop(setup)


def collect(cfg: ScenarioConfig, sigma: float) -> list[SampleLog]:
    """Uncompensated training logs: the scenario course plus seeded slaloms.

    Runs at other speeds scale the lookahead with speed so the loop keeps
    the same preview time.
    """
    st = cfg.pipeline
    path = cfg.reference_path()
    logs = []
    tag = 1
    speeds = [cfg.speed_kmh] + [s for s in st.collection_speeds_kmh if s != cfg.speed_kmh]
    for speed in speeds:
        lookahead = cfg.lookahead_m * speed / cfg.speed_kmh
        courses = [path] + [slalom_path(st.slalom_length_m, seed=derived_seed(cfg.seed, 500 + tag + i))
                            for i in range(st.slaloms_per_speed)]
        for course in courses:
            lg, _ = run_scenario(cfg, sigma=sigma, seed=derived_seed(cfg.seed, tag), compensated=False,
                                 path=course, speed_kmh=speed, lookahead=lookahead)
            logs.append(lg)
            tag += 1
    return logs


def truncate(logs, n_samples: int) -> list[SampleLog]:
    """First ``n_samples`` rows across ``logs``, cutting the last log short."""
    out = []
    remaining = n_samples
    for lg in logs:
        if remaining <= 0:
            break
        take = min(len(lg), remaining)
        out.append(SampleLog(T=lg.T, columns={k: v[:take] for k, v in lg.columns.items()}))
        remaining -= take
    return out


# predictor evaluation -------------------------------------------------------

def train_members(template: tdnn.TdnnModel, logs, st, seed: int):
    """Fit normalization on ``logs`` and train ``st.ensemble_size`` seeded members."""
    tdnn.fit_normalization(template, logs)
    data = tdnn.build_dataset(logs, template)
    seeds = [derived_seed(seed, 9000 + i) for i in range(st.ensemble_size)]
    cfg = tdnn.TrainingConfig(learning_rate=st.learning_rate, epochs=st.epochs,
                              batch_size=st.batch_size, validation_split=st.validation_split,
                              seed=seed)
    results = tdnn.train_ensemble(tdnn.seeded_ensemble(template, seeds), data, cfg)
    return [r.model for r in results], results


def evaluate_predictor(models, test_logs, w0: float):
    """CC and CE of the ensemble on held-out logs: all rows, straights, curves.

    A row counts as a curve when the desired yaw rate at the forecast
    target time exceeds ``w0`` in magnitude.
    """
    ref = models[0]
    z, y = tdnn.build_dataset(test_logs, ref)
    pred = tdnn.ensemble_predict(models, z)
    gammas = []
    for lg in test_logs:
        g = np.asarray(lg.columns["gamma_desired"])
        n = len(g) - (ref.taps - 1) - ref.horizon_steps
        if n > 0:
            gammas.append(g[ref.taps - 1 + ref.horizon_steps:][:n])
    curve = np.abs(np.concatenate(gammas)) > w0
    out = {}
    for case, mask in (("all", np.ones_like(curve)), ("straight", ~curve), ("curve", curve)):
        if mask.sum() < 3:
            continue
        try:
            out[case] = (metrics.correlation_coefficient(y[mask], pred[mask]),
                         metrics.coefficient_of_efficiency(y[mask], pred[mask]), int(mask.sum()))
        except SteerCompError:
            out[case] = (float("nan"), float("nan"), int(mask.sum()))
    return out


@dataclass
class PipelineResult:
    out_dir: Path
    sigma: float
    delay: float
    delay_curve: list
    horizon_steps: int
    pca_report: pca.PcaReport
    features: list
    table2: list
    baseline: list
    compensated: list
    improvements: dict
    timings: dict = field(default_factory=dict)
    ensemble: list = field(default_factory=list)
    train_samples: int = 0


def collect_data(cfg: ScenarioConfig, sigma: float):
    """Training pool, its 6000/425-row prefixes and the held-out runs."""
    st = cfg.pipeline
    pool = collect(cfg, sigma)
    total = sum(len(lg) for lg in pool)
    if total < st.training_samples:
        raise InsufficientData(f"collection produced {total} samples, "
                               f"fewer than the {st.training_samples} requested")
    test_logs = [run_scenario(cfg, sigma=sigma, seed=derived_seed(cfg.seed, 7000 + i),
                              compensated=False)[0] for i in range(st.heldout_runs)]
    return pool, truncate(pool, st.training_samples), truncate(pool, st.small_training_samples), test_logs


def identify(log: SampleLog):
    """Actuator delay of an uncompensated log and the matching forecast horizon."""
    delay, curve = metrics.identify_delay(log.columns["u"], log.columns["theta_measured"], log.T)
    return delay, curve, max(1, int(round(delay / log.T)))


def select_features(cfg: ScenarioConfig, logs):
    st = cfg.pipeline
    data = pca.DataMatrix(np.vstack([lg.matrix(st.pca_channels) for lg in logs]), st.pca_channels)
    report = pca.analyze(pca.center(data), top_k=st.pca_top_k, threshold=st.pca_threshold)
    features = list(report.selected) if st.features == "pca" else list(st.features)
    return report, features


def evaluate_runs(cfg: ScenarioConfig, sigma: float, models):
    """Paired uncompensated/compensated runs over ``eval_runs`` seeds.

    The first seed is the scenario's own; the rest are derived from it.
    """
    base_runs, comp_runs = [], []
    for i in range(cfg.pipeline.eval_runs):
        seed = cfg.seed if i == 0 else derived_seed(cfg.seed, 8000 + i)
        base_runs.append((seed, *run_scenario(cfg, sigma=sigma, seed=seed, compensated=False)))
        comp_runs.append((seed, *run_scenario(cfg, sigma=sigma, seed=seed, models=models)))
    return base_runs, comp_runs, _improvements(base_runs, comp_runs)


def pipeline(cfg: ScenarioConfig, out_dir=None) -> PipelineResult:
    st = cfg.pipeline
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    comp_cfg = cfg.compensator_config()
    w0 = comp_cfg.w0 if comp_cfg else CompensatorConfig().w0

    with stage("calibrate", timings):
        sigma = resolve_sigma(cfg)

    with stage("collect", timings):
        pool, train_logs, small_logs, test_logs = collect_data(cfg, sigma)

    with stage("delay", timings):
        delay, curve, horizon = identify(pool[0])

    with stage("pca", timings):
        report, features = select_features(cfg, train_logs)

    with stage("train", timings):
        t0 = time.perf_counter()
        ensemble, _ = train_members(tdnn.TdnnModel(feature_names=features, taps=st.taps,
                                                   horizon_steps=horizon), train_logs, st, cfg.seed)
        timings["train_tdnn"] = time.perf_counter() - t0
        baseline_models, _ = train_members(tdnn.TdnnModel(feature_names=features, taps=1,
                                                          horizon_steps=horizon), train_logs, st, cfg.seed)
        small_models, _ = train_members(tdnn.TdnnModel(feature_names=features, taps=st.taps,
                                                       horizon_steps=horizon), small_logs, st, cfg.seed)
        small_baseline, _ = train_members(tdnn.TdnnModel(feature_names=features, taps=1,
                                                         horizon_steps=horizon), small_logs, st, cfg.seed)
        table2 = []
        n_train = sum(len(lg) for lg in train_logs)
        n_small = sum(len(lg) for lg in small_logs)
        for samples, name, models in ((n_train, "TDNN", ensemble), (n_train, "BP", baseline_models),
                                      (n_small, "TDNN", small_models), (n_small, "BP", small_baseline)):
            for case, (cc, ce, n_eval) in evaluate_predictor(models, test_logs, w0).items():
                table2.append({"case": case, "samples": samples, "network": name, "taps": models[0].taps,
                               "cc": cc, "ce": ce, "eval_rows": n_eval})

    with stage("evaluate", timings):
        base_runs, comp_runs, improvements = evaluate_runs(cfg, sigma, ensemble)

    result = PipelineResult(
        out_dir=out, sigma=sigma, delay=delay, delay_curve=curve, horizon_steps=horizon,
        pca_report=report, features=features, table2=table2, baseline=base_runs,
        compensated=comp_runs, improvements=improvements, timings=timings, ensemble=ensemble,
        train_samples=n_train,
    )
    with stage("write", timings):
        write_artifacts(result, cfg, pool, test_logs[0], ensemble, baseline_models, small_models)
    return result


def _improvements(base_runs, comp_runs) -> dict:
    """Improvement of the seed-averaged metrics, plus the per-seed values.

    Baseline and compensated runs share disturbance seeds, so the averages
    are paired; a single seed swings by tens of percent either way.
    """
    per_seed = [metrics.compare_runs(b, c) for (_, _, b), (_, _, c) in zip(base_runs, comp_runs)]

    def avg(runs):
        return metrics.MetricsReport(
            max_lateral_error=float(np.mean([m.max_lateral_error for _, _, m in runs])),
            oscillation=float(np.mean([m.oscillation for _, _, m in runs])))

    return {"paired_mean": metrics.compare_runs(avg(base_runs), avg(comp_runs)),
            "first_seed": per_seed[0], "per_seed": per_seed}


# artifacts --------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_artifacts(res: PipelineResult, cfg, pool, test_log, ensemble, baseline_models, small_models):
    out = res.out_dir
    (out / "logs").mkdir(exist_ok=True)
    cfg.save(out / "config_used.json")
    pool[0].to_csv(out / "logs" / "collection_run.csv")
    test_log.to_csv(out / "logs" / "heldout_run.csv")
    _, base_log, _ = res.baseline[0]
    _, comp_log, _ = res.compensated[0]
    base_log.to_csv(out / "logs" / "uncompensated.csv")
    comp_log.to_csv(out / "logs" / "compensated.csv")
    cfg.reference_path().to_csv(out / "reference_path.csv")

    c = pool[0].columns
    write_csv(out / "fig6_steering.csv", ["t[s]", "command[deg]", "measured[deg]", "error[deg]"],
              zip(c["t"], c["u"], c["theta_measured"], c["e_instant"]))
    r0 = res.delay_curve[0][1]
    write_csv(out / "fig7_delay_curve.csv", ["shift[s]", "rmse[deg]", "ratio_to_zero_shift"],
              [(dt, r, r / r0 if r0 > 0 else float("nan")) for dt, r in res.delay_curve])
    rep = res.pca_report
    write_csv(out / "pca_table.csv", ["rank", "attributed_feature", "eigenvalue", "cr", "cumulative_cr"],
              [(i + 1, f, lam, cr, cum) for i, (f, lam, cr, cum) in
               enumerate(zip(rep.attributed, rep.eigenvalues, rep.contribution_rates, rep.cumulative()))])
    write_csv(out / "table2.csv", ["case", "samples", "network", "taps", "cc", "ce", "eval_rows"],
              [(r["case"], r["samples"], r["network"], r["taps"], r["cc"], r["ce"], r["eval_rows"])
               for r in res.table2])

    b, k = base_log.columns, comp_log.columns
    n = max(len(base_log), len(comp_log))

    def col(d, name, i):
        return d[name][i] if i < len(d[name]) else ""

    write_csv(out / "fig11_tracking.csv",
              ["t[s]", "x_uncomp[m]", "y_uncomp[m]", "lat_uncomp[m]", "x_comp[m]", "y_comp[m]", "lat_comp[m]"],
              [(i * base_log.T, col(b, "x", i), col(b, "y", i), col(b, "lateral_error", i),
                col(k, "x", i), col(k, "y", i), col(k, "lateral_error", i)) for i in range(n)])
    write_csv(out / "fig12_steering.csv",
              ["t[s]", "u_uncomp[deg]", "theta_uncomp[deg]", "u_comp[deg]", "theta_comp[deg]",
               "u_track_comp[deg]", "u1[deg]", "e_hat[deg]"],
              [(i * base_log.T, col(b, "u", i), col(b, "theta_measured", i), col(k, "u", i),
                col(k, "theta_measured", i), col(k, "u_track", i), col(k, "u1", i), col(k, "e_hat", i))
               for i in range(n)])

    rows = []
    for label, runs in (("uncompensated", res.baseline), ("compensated", res.compensated)):
        for seed, _, m in runs:
            flat = m.flat()
            rows.append((label, seed, flat["rmse"], flat["max_lateral_error"], flat["oscillation"],
                         flat["oscillation_measured"], flat["duration_s"], flat["diverged"]))
    write_csv(out / "metrics.csv",
              ["run", "seed", "rmse[deg]", "max_lateral_error[m]", "oscillation[deg/step]",
               "oscillation_measured[deg/step]", "duration[s]", "diverged"], rows)

    with open(out / "pca_report.txt", "w") as fh:
        fh.write(rep.table() + "\n")
    tdnn.save_ensemble(ensemble, out / "ensemble.json")
    tdnn.save_ensemble(baseline_models, out / "baseline_bp.json")
    tdnn.save_ensemble(small_models, out / "ensemble_small.json")

    summary = {
        "sigma_deg": res.sigma,
        "delay_s": res.delay,
        "rmse_zero_shift_deg": r0,
        "rmse_at_delay_deg": dict(res.delay_curve)[res.delay],
        "horizon_steps": res.horizon_steps,
        "features": res.features,
        "pca_selected": rep.selected,
        "train_samples": res.train_samples,
        "table2": res.table2,
        "improvements": res.improvements,
        "compensator": asdict(cfg.compensator_config()) if cfg.compensator_config() else "off",
        "uncompensated": res.baseline[0][2].flat(),
        "compensated": res.compensated[0][2].flat(),
    }
    with open(out / "report.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "timing.json", "w") as fh:
        json.dump(res.timings, fh, indent=2, sort_keys=True)
        fh.write("\n")
