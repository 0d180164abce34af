"""End-to-end stages from market simulation to report and figure tables.

Every stage reads its inputs through the run manifest, writes its outputs
atomically and records their hashes. The market itself is a pure function of
the configuration, so later stages rebuild it in memory and check it against
the recorded seeker table.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .config import RunConfig
from .errors import DegenerateFitError, NumericError, SchemaError, SeparationError, UsageError
from .estimation import (
    fit_hazard_calibration,
    fit_lpm_cf,
    fit_reduced_form,
    fit_structural_logit,
    fits_report,
    recover_structural,
)
from .figures import emit_figure_data
from .io import Manifest, atomic_write_text, csv_text, read_csv, write_csv, write_json
from .market import ExperimentDesign, assign_treatments, run_experiment, sample_history, sample_market
from .market.population import ALGOS, P_MIN, Market, pool_frame
from .nonmyopic import AdjustedValueProblem, summarize
from .scorers import CalibrationCoefficients, load_scorer, ranks_from_scores, save_scorer, train_triplet
from .search import VacancyDistribution, gamma_index
from .welfare import evaluate_arms

log = logging.getLogger(__name__)

STAGES = ("simulate", "train", "rank", "experiment", "estimate", "welfare", "report", "figure-data")
RESOLVED_CONFIG = "config.resolved.yaml"

SEEKERS = "market/seekers.csv"
VACANCIES = "market/vacancies.csv"
SCORER = "train/scorer.txt"
HISTORY = "train/history.csv"
HAZARD = "train/hazard.json"
SCORES = "rank/scores.csv"
ASSIGNMENT = "experiment/assignment.csv"
LOG = "experiment/log.csv"
POOL = "experiment/pool.csv"
FITS = "estimate/fits.json"
WELFARE_SUMMARY = "welfare/summary.csv"
WELFARE_SPLITS = "welfare/per_split.csv"
COUNTERFACTUAL = "welfare/counterfactual.csv"
WELFARE_META = "welfare/welfare.json"
REPORT = "report/report.json"
REPORT_ARMS = "report/arm_comparison.csv"


class Run:
    def __init__(self, cfg: RunConfig, out: Path | None = None):
        self.cfg = cfg
        self.root = Path(out if out is not None else cfg.output_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest(self.root)
        self._market: Market | None = None

    def path(self, name: str) -> Path:
        return self.root / name

    def write_resolved_config(self) -> None:
        # runtime knobs that cannot change results stay out, so reruns into
        # another directory or with another thread count hash identically
        doc = self.cfg.model_dump(mode="json")
        doc.pop("threads")
        doc.pop("output_dir")
        cfg_text = RunConfig.model_validate(doc).to_yaml()
        atomic_write_text(self.path(RESOLVED_CONFIG), cfg_text)

    def csv(self, stage: str, name: str, df: pd.DataFrame) -> Path:
        p = self.path(name)
        write_csv(p, df)
        self.manifest.record(stage, p)
        return p

    def json(self, stage: str, name: str, obj) -> Path:
        p = self.path(name)
        write_json(p, obj)
        self.manifest.record(stage, p)
        return p

    def market(self) -> Market:
        if self._market is None:
            (seekers_path,) = self.manifest.require(SEEKERS)
            m = sample_market(self.cfg.market_spec(), self.cfg.threads)
            if csv_text(m.seekers).encode() != seekers_path.read_bytes():
                raise SchemaError(f"{seekers_path} was produced by a different configuration; rerun 'simulate'")
            self._market = m
        return self._market

    def learned(self, m: Market):
        if not self.cfg.scorer.enabled:
            return None
        scorer_path, hazard_path = self.manifest.require(SCORER, HAZARD)
        import json

        hz = json.loads(hazard_path.read_text())
        return load_scorer(scorer_path), CalibrationCoefficients(hz["intercept"], hz["beta"])


def stage_simulate(run: Run) -> None:
    m = sample_market(run.cfg.market_spec(), run.cfg.threads)
    run._market = m
    run.csv("simulate", SEEKERS, m.seekers)
    run.csv("simulate", VACANCIES, m.vacancies)


def stage_train(run: Run) -> None:
    cfg, m = run.cfg, run.market()
    sc = cfg.scorer
    if not sc.enabled:
        log.info("learned scorer disabled; nothing to train")
        return
    seekers = None if sc.history_seekers is None else np.arange(min(sc.history_seekers, m.n_seekers))
    hist = sample_history(m, seekers, sc.max_apps, cfg.seed)
    pos = hist.positives
    X, Y = m.seeker_features(), m.vacancy_features()
    scorer = train_triplet(X[pos["seeker_id"].to_numpy()], Y, pos["vacancy_id"].to_numpy(), sc.training(cfg.seed),
                           block_dims=m.feature_blocks, hidden=sc.hidden)
    apps = hist.applications.copy()
    apps["score"] = scorer.score_pairs(X[apps["seeker_id"].to_numpy()], Y[apps["vacancy_id"].to_numpy()])
    # applications share a calendar: everyone's t-th try happens in period t
    cal = apps.sort_values(["order", "seeker_id"], kind="stable")
    apps["vacancy_order"] = cal.groupby("vacancy_id").cumcount().reindex(apps.index) + 1
    hz = fit_hazard_calibration(apps, mode=sc.hazard_mode, max_rank=sc.max_rank)
    save_scorer(scorer, run.path(SCORER))
    run.manifest.record("train", run.path(SCORER))
    run.csv("train", HISTORY, apps)
    run.json("train", HAZARD, hz.to_dict())


def _pool_scores(run: Run, m: Market, rows: np.ndarray) -> pd.DataFrame:
    learned = run.learned(m)
    frames = []
    for s in range(0, rows.size, 512):
        pf = pool_frame(m, rows[s : s + 512], with_shocks=False, learned=learned)
        n, P = pf.p.shape
        for algo in ALGOS:
            sc = pf.scores[algo]
            ranks = np.vstack([ranks_from_scores(pf.vacancy_id[r], sc[r]) for r in range(n)])
            frames.append(pd.DataFrame({
                "seeker_id": np.repeat(pf.rows, P),
                "vacancy_id": pf.vacancy_id.ravel(),
                "algo": algo,
                "score": sc.ravel(),
                "rank": ranks.ravel(),
            }))
    df = pd.concat(frames, ignore_index=True)
    return df.sort_values(["seeker_id", "algo", "rank"], kind="stable").reset_index(drop=True)


def stage_rank(run: Run) -> None:
    m = run.market()
    run.csv("rank", SCORES, _pool_scores(run, m, np.arange(m.n_seekers)))


def stage_experiment(run: Run) -> None:
    cfg, m = run.cfg, run.market()
    design: ExperimentDesign = cfg.experiment.build()
    assignment = assign_treatments(m.seekers, design, cfg.seed)
    log_df, pool = run_experiment(m, assignment, design, cfg.seed, cfg.threads, run.learned(m), return_pool=True)
    run.csv("experiment", ASSIGNMENT, assignment)
    run.csv("experiment", LOG, log_df)
    run.csv("experiment", POOL, pool)


def _try(name: str, fn, notes: dict):
    try:
        return fn()
    except (NumericError, ValueError) as exc:
        notes[name] = f"{type(exc).__name__}: {exc}"
        log.warning("%s failed: %s", name, exc)
        return None


def stage_estimate(run: Run) -> None:
    cfg = run.cfg
    (log_path,) = run.manifest.require(LOG)
    df = read_csv(log_path)
    notes: dict[str, str] = {}
    sections = {}
    ref = cfg.experiment.arms[0]
    for outcome in ("clicked", "applied", "hired"):
        fit = _try(f"reduced_form_{outcome}", lambda o=outcome: fit_reduced_form(df, o, reference=ref), notes)
        if fit is not None:
            sections[f"reduced_form_{outcome}"] = fit
    P = np.clip(df["p_score"].to_numpy(), P_MIN, 1.0)
    clamped = int(np.sum(df["p_score"].to_numpy() < P_MIN))
    y = df["applied"].to_numpy()
    U = df["u_score"].to_numpy()
    clusters = df["seeker_id"].to_numpy()
    fit = _try("structural_logit",
               lambda: fit_structural_logit(y, U, P, clusters, constrained=cfg.estimation.constrained), notes)
    if fit is not None:
        sections["structural_logit"] = fit
        est = _try("structural", lambda: recover_structural(fit), notes)
        if est is not None:
            sections["structural"] = est.to_dict()
    arms = df["arm"].to_numpy()
    others = [a for a in cfg.experiment.arms if a != ref]
    if others:
        T = np.column_stack([(arms == a).astype(float) for a in others])
        Z = np.column_stack([np.ones(len(df)), U])
        cf = _try("lpm_cf", lambda: fit_lpm_cf(y, 1.0 / P, T, Z, clusters, ["inv_P"], [f"T_{a}" for a in others],
                                              ["const", "U"], bootstrap=cfg.estimation.bootstrap, seed=cfg.seed),
                  notes)
        if cf is not None:
            sections["lpm_cf"] = cf
    sections["meta"] = {"rows": len(df), "p_score_clamped": clamped, "failures": notes}
    fits_report(run.path(FITS), **sections)
    run.manifest.record("estimate", run.path(FITS))


def stage_welfare(run: Run) -> None:
    cfg = run.cfg
    log_path, pool_path = run.manifest.require(LOG, POOL)
    sigma = 1.0
    if cfg.welfare.sigma == "estimated":
        import json

        (fits_path,) = run.manifest.require(FITS)
        fits = json.loads(fits_path.read_text())
        if "structural" not in fits:
            raise DegenerateFitError("no structural estimate available to rescale Gamma-hat")
        sigma = fits["structural"]["sigma"]
    w = evaluate_arms(read_csv(log_path), read_csv(pool_path), cfg.welfare.split_spec(cfg.seed),
                      slot_controls=cfg.welfare.slot_controls, k=cfg.welfare.k, threads=cfg.threads, sigma=sigma)
    run.csv("welfare", WELFARE_SUMMARY, w.summary)
    run.csv("welfare", WELFARE_SPLITS, w.per_split)
    run.csv("welfare", COUNTERFACTUAL, w.counterfactual)
    run.json("welfare", WELFARE_META, {"discarded_splits": w.discarded_splits, "notes": w.notes, "sigma": sigma})


def _nonmyopic_row(run: Run) -> dict:
    cfg, m = run.cfg, run.market()
    p, U, _ = m.truth(np.array([0]))
    dist = VacancyDistribution(p[0], U[0])
    params = cfg.model.build()
    rV0 = float(m.rV0[0])
    s = min(1.0, cfg.experiment.list_length / cfg.market.pool_size)
    prob = AdjustedValueProblem(params, dist, gamma_index(dist.p, dist.U, rV0, params), s, rV0)
    return {"seeker_id": 0, "share": s, **summarize(prob).as_dict()}


def stage_report(run: Run) -> None:
    import json

    summary_path, meta_path = run.manifest.require(WELFARE_SUMMARY, WELFARE_META)
    summary = read_csv(summary_path)
    arms = summary[["arm", "metric", "estimate", "ci95_low", "ci95_high"]].rename(
        columns={"ci95_low": "ci_low", "ci95_high": "ci_high"})
    run.csv("report", REPORT_ARMS, arms)
    doc = {
        "welfare": {
            "arm_comparison": arms.to_dict(orient="records"),
            **json.loads(meta_path.read_text()),
        },
        "non_myopic": _nonmyopic_row(run),
    }
    if (fits := run.manifest.data["artifacts"].get(FITS)) is not None:
        (fits_path,) = run.manifest.require(FITS)
        doc["estimation"] = json.loads(fits_path.read_text())
    run.json("report", REPORT, doc)


def stage_figure_data(run: Run) -> None:
    fg = run.cfg.figures
    p = run.path("figures/m_curves.csv")
    emit_figure_data("m-curves", p, n=fg.n_points, unit_variance=fg.unit_variance)
    q = run.path("figures/gamma_surface.csv")
    emit_figure_data("gamma-surface", q, sigma=run.cfg.model.sigma)
    run.manifest.record("figure-data", p, q)
    if WELFARE_SUMMARY in run.manifest.data["artifacts"]:
        (summary_path,) = run.manifest.require(WELFARE_SUMMARY)
        s = read_csv(summary_path)
        arms = s[["arm", "metric", "estimate", "ci95_low", "ci95_high"]].rename(
            columns={"ci95_low": "ci_low", "ci95_high": "ci_high"})
        run.csv("figure-data", "figures/arm_comparison.csv", arms)
    if POOL in run.manifest.data["artifacts"]:
        (pool_path,) = run.manifest.require(POOL)
        pool = read_csv(pool_path)
        ids = pool["seeker_id"].to_numpy()
        seekers, counts = np.unique(ids, return_counts=True)
        if counts.size and np.all(counts == counts[0]):
            pool = pool.sort_values(["seeker_id", "vacancy_id"], kind="stable")
            shape = (seekers.size, counts[0])
            df = emit_figure_data("rank-divergence", None, u_scores=pool["score_u_rec"].to_numpy().reshape(shape),
                                  p_scores=pool["score_vadore0"].to_numpy().reshape(shape), seeker_ids=seekers)
            run.csv("figure-data", "figures/rank_divergence.csv", df)


_STAGE_FUNCS = {
    "simulate": stage_simulate,
    "train": stage_train,
    "rank": stage_rank,
    "experiment": stage_experiment,
    "estimate": stage_estimate,
    "welfare": stage_welfare,
    "report": stage_report,
    "figure-data": stage_figure_data,
}


def run_pipeline(cfg: RunConfig, stage: str, out: Path | None = None) -> Run:
    """Run one stage, or every stage in order when ``stage == 'all'``."""
    if stage != "all" and stage not in STAGES:
        raise UsageError(f"unknown stage {stage!r}; expected one of {STAGES} or 'all'")
    run = Run(cfg, out)
    run.write_resolved_config()
    for name in STAGES if stage == "all" else (stage,):
        log.info("stage %s", name)
        _STAGE_FUNCS[name](run)
    return run
