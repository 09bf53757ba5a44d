"""Experiment orchestration: seeded repeats, attack x defense grids, sweeps.

Within one repeat the data split, targets, and injected profiles are shared
by every defense, so defense comparisons are paired across seeds.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import attacks as atk
from .cotrain import CoTrainConfig, cotrain
from .data import (RatingDataset, SplitConfig, SPLIT_TRAIN, SPLIT_VALIDATION,
                   load_ratings, filter_cold_start, split_dataset)
from .defenses import PerturbConfig, at_train, rat_train
from .metrics import (hit_ratio_test, hit_ratio_targets, paired_t_test, quartiles,
                      rank_shift, robustness_improvement, significance_stars)
from .mf import TrainConfig, fit, init_model

log = logging.getLogger(__name__)

ATTACKS = ("none", "random", "average", "pga", "tna")
DEFENSES = ("none", "at", "rat", "cotrain")


@dataclass(frozen=True)
class ThreatSettings:
    knowledge_cost: float = 0.4
    attack_size: float = 0.03
    n_targets: int = 5
    target_mode: str = "random"
    pga_steps: int = 50
    pga_step_size: float = 0.1
    tna_subset_fraction: float = 0.1
    tna_top_k: int = 10
    tna_steps: int = 50
    tna_step_size: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str | None = None
    dataset_format: str = "tab"
    dataset_name: str = "dataset"
    min_ratings: int = 0
    d: int = 128
    k: int = 50
    split: SplitConfig = field(default_factory=SplitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    cotrain: CoTrainConfig = field(default_factory=CoTrainConfig)
    threat: ThreatSettings = field(default_factory=ThreatSettings)
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    attack: str = "none"
    defense: str = "none"
    repeats: int = 5
    base_seed: int = 0
    out_dir: str | None = None
    cotrain_model_index: int = 0
    cotrain_eval_mean: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.attack not in ATTACKS:
            raise ValueError(f"attack must be one of {ATTACKS}")
        if self.defense not in DEFENSES:
            raise ValueError(f"defense must be one of {DEFENSES}")


@dataclass
class ExperimentReport:
    config: dict
    attack: str
    defense: str
    rows: list
    aggregate: dict


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["train"]["adam_betas"] = list(d["train"]["adam_betas"])
    return d


def load_config(path, **overrides) -> ExperimentConfig:
    """Build an ExperimentConfig from a YAML file plus keyword overrides.

    Top-level keys mirror ExperimentConfig fields; the nested sections
    (split, train, cotrain, threat, perturb) are mappings of their
    dataclass fields. Overrides use the same flat field names.
    """
    with open(path, "r") as f:
        raw = yaml.safe_load(f) or {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    nested = {
        "split": SplitConfig, "train": TrainConfig, "cotrain": CoTrainConfig,
        "threat": ThreatSettings, "perturb": PerturbConfig,
    }
    kwargs = {}
    for key, value in raw.items():
        if key in nested:
            if key == "train" and "adam_betas" in value:
                value = dict(value, adam_betas=tuple(value["adam_betas"]))
            kwargs[key] = nested[key](**value) if isinstance(value, dict) else value
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_dataset(cfg: ExperimentConfig) -> RatingDataset:
    if cfg.dataset_path is None:
        raise ValueError("config has no dataset_path")
    ds = load_ratings(cfg.dataset_path, cfg.dataset_format)
    if cfg.min_ratings > 0:
        ds = filter_cold_start(ds, cfg.min_ratings)
    return ds


def _fit_plain(ds: RatingDataset, train_cfg: TrainConfig, d: int):
    model = init_model(ds.n_users, ds.n_items, d, rng_seed=train_cfg.rng_seed)
    best, _ = fit(model, ds.triples(SPLIT_TRAIN), ds.triples(SPLIT_VALIDATION), train_cfg)
    return best


def generate_attack(ds: RatingDataset, cfg: ExperimentConfig, targets, seed: int):
    """Build the threat model, surrogate, and fake profiles for one repeat."""
    ts = cfg.threat
    tm = atk.ThreatModel(
        target_items=targets,
        filler_budget=atk.average_filler_budget(ds),
        knowledge_cost=ts.knowledge_cost,
        attack_size=ts.attack_size,
        target_mode=ts.target_mode,
        rng_seed=seed,
    )
    train_cfg = replace(cfg.train, rng_seed=seed)
    captured, surrogate = atk.build_surrogate(ds, tm, train_cfg, d=cfg.d)
    if cfg.attack == "random":
        fp = atk.random_attack(captured, tm)
    elif cfg.attack == "average":
        fp = atk.average_attack(captured, tm)
    elif cfg.attack == "pga":
        fp = atk.pga_attack(surrogate, captured, tm,
                            steps=ts.pga_steps, step_size=ts.pga_step_size)
    elif cfg.attack == "tna":
        subset = max(1, int(round(ts.tna_subset_fraction * ds.n_real_users)))
        fp = atk.tna_attack(surrogate, captured, tm, subset_size=subset,
                            top_k_items=ts.tna_top_k, steps=ts.tna_steps,
                            step_size=ts.tna_step_size)
    else:
        raise ValueError(f"unknown attack {cfg.attack!r}")
    return tm, fp


def _train_defended(poisoned: RatingDataset, cfg: ExperimentConfig, defense: str,
                    seed: int):
    """Returns a list of models to evaluate (len > 1 only for mean-eval cotrain)."""
    train_cfg = replace(cfg.train, rng_seed=seed)
    if defense == "at":
        model, _ = at_train(poisoned, train_cfg, cfg.perturb, d=cfg.d)
        return [model]
    if defense == "rat":
        model, _ = rat_train(poisoned, train_cfg, cfg.perturb, d=cfg.d)
        return [model]
    if defense == "cotrain":
        models, _ = cotrain(poisoned, replace(cfg.cotrain, rng_seed=seed),
                            train_cfg, d=cfg.d)
        if cfg.cotrain_eval_mean:
            return models
        return [models[cfg.cotrain_model_index]]
    raise ValueError(f"unknown defense {defense!r}")


def _mean_metrics(models, ds, targets, k):
    hr_test = float(np.mean([hit_ratio_test(m, ds, k) for m in models]))
    hr_target = float(np.mean([hit_ratio_targets(m, ds, targets, k) for m in models]))
    return hr_test, hr_target


def run_repeat(ds_raw: RatingDataset, cfg: ExperimentConfig, repeat: int,
               defenses) -> list[dict]:
    """One seeded repeat of origin -> attack -> each defense; one row per defense."""
    seed = cfg.base_seed + repeat
    sp = split_dataset(ds_raw, replace(cfg.split, rng_seed=seed))
    train_cfg = replace(cfg.train, rng_seed=seed)
    targets = atk.select_targets(sp, cfg.threat.target_mode,
                                 cfg.threat.n_targets, rng_seed=seed)

    origin = _fit_plain(sp, train_cfg, cfg.d)
    hr_test_origin = hit_ratio_test(origin, sp, cfg.k)
    hr_target_origin = hit_ratio_targets(origin, sp, targets, cfg.k)

    if cfg.attack == "none":
        poisoned, attack_model = sp, origin
        hr_test_attack, hr_target_attack = hr_test_origin, hr_target_origin
    else:
        _, fp = generate_attack(sp, cfg, targets, seed)
        poisoned = atk.inject(sp, fp)
        attack_model = _fit_plain(poisoned, train_cfg, cfg.d)
        hr_test_attack = hit_ratio_test(attack_model, poisoned, cfg.k)
        hr_target_attack = hit_ratio_targets(attack_model, poisoned, targets, cfg.k)

    rows = []
    for defense in defenses:
        if defense == "none":
            models = [attack_model]
        else:
            models = _train_defended(poisoned, cfg, defense, seed)
        hr_test_def, hr_target_def = _mean_metrics(models, poisoned, targets, cfg.k)
        row = {
            "dataset": cfg.dataset_name,
            "repeat": repeat,
            "seed": seed,
            "attack": cfg.attack,
            "defense": defense,
            "targets": " ".join(str(t) for t in targets),
            "hr_test_origin": hr_test_origin,
            "hr_target_origin": hr_target_origin,
            "hr_test_attack": hr_test_attack,
            "hr_target_attack": hr_target_attack,
            "hr_test_defense": hr_test_def,
            "hr_target_defense": hr_target_def,
        }
        if cfg.attack != "none":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                row["ri_target"] = robustness_improvement(
                    hr_target_def, hr_target_origin, hr_target_attack)
            q_att = quartiles(rank_shift(origin, attack_model, targets, poisoned))
            q_def = quartiles(rank_shift(origin, models[0], targets, poisoned))
            row.update(shift_attack_q1=q_att[0], shift_attack_q2=q_att[1],
                       shift_attack_q3=q_att[2], shift_defense_q1=q_def[0],
                       shift_defense_q2=q_def[1], shift_defense_q3=q_def[2])
        rows.append(row)
        log.info("repeat=%d attack=%s defense=%s target_hr=%.4f test_hr=%.4f",
                 repeat, cfg.attack, defense, hr_target_def, hr_test_def)
    return rows


def _aggregate(rows) -> dict:
    agg = {}
    numeric = [k for k, v in rows[0].items() if isinstance(v, (int, float)) and
               k not in ("repeat", "seed")]
    for key in numeric:
        vals = np.array([r[key] for r in rows], dtype=np.float64)
        agg[f"{key}_mean"] = float(np.nanmean(vals))
        agg[f"{key}_std"] = float(np.nanstd(vals))
    return agg


def run_cell(cfg: ExperimentConfig, ds: RatingDataset | None = None) -> ExperimentReport:
    """Run cfg.repeats seeded repeats of a single attack x defense cell."""
    if ds is None:
        ds = load_dataset(cfg)
    rows = []
    failures = []
    for r in range(cfg.repeats):
        try:
            rows.extend(run_repeat(ds, cfg, r, [cfg.defense]))
        except Exception as exc:  # noqa: BLE001 - per-repeat isolation
            log.error("repeat %d failed: %s", r, exc)
            failures.append((r, exc))
    if len(failures) > 0.1 * cfg.repeats:
        raise RuntimeError(f"{len(failures)}/{cfg.repeats} repeats failed; first: {failures[0][1]}")
    report = ExperimentReport(config_to_dict(cfg), cfg.attack, cfg.defense,
                              rows, _aggregate(rows))
    if cfg.out_dir:
        write_report(report, cfg.out_dir)
    return report


def run_grid(cfg: ExperimentConfig, attack_names, defense_names,
             ds: RatingDataset | None = None) -> list[ExperimentReport]:
    """Attack x defense grid; each repeat shares its split and attack profiles."""
    if ds is None:
        ds = load_dataset(cfg)
    all_rows = {(a, d): [] for a in attack_names for d in defense_names}
    for a in attack_names:
        acfg = replace(cfg, attack=a)
        for r in range(cfg.repeats):
            for row in run_repeat(ds, acfg, r, defense_names):
                all_rows[(a, row["defense"])].append(row)
    reports = []
    for (a, d), rows in all_rows.items():
        reports.append(ExperimentReport(config_to_dict(replace(cfg, attack=a, defense=d)),
                                        a, d, rows, _aggregate(rows)))
    return reports


SWEEP_AXES = ("knowledge_cost", "pseudo_fraction", "attack_size")


def run_sweep(cfg: ExperimentConfig, axis: str, values,
              ds: RatingDataset | None = None):
    """run_cell per axis value, all else fixed; returns (reports, long rows).

    pseudo_fraction = 0 is the no-defense point: the cell runs with
    defense="none" instead of a degenerate co-training config.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    if len(values) == 0:
        raise ValueError("values must be nonempty")
    if ds is None:
        ds = load_dataset(cfg)
    reports = []
    long_rows = []
    for v in values:
        if axis == "pseudo_fraction":
            if v == 0:
                vcfg = replace(cfg, defense="none")
            else:
                vcfg = replace(cfg, cotrain=replace(cfg.cotrain, pseudo_fraction=v))
        elif axis == "knowledge_cost":
            vcfg = replace(cfg, threat=replace(cfg.threat, knowledge_cost=v))
        else:
            vcfg = replace(cfg, threat=replace(cfg.threat, attack_size=v))
        rep = run_cell(replace(vcfg, out_dir=None), ds=ds)
        reports.append(rep)
        for row in rep.rows:
            long_rows.append({"axis": axis, "value": v, **row})
    if cfg.out_dir:
        _write_csv(os.path.join(cfg.out_dir, f"sweep_{axis}.csv"), long_rows)
    return reports, long_rows


def _write_csv(path, rows, fieldnames=None) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def write_report(report: ExperimentReport, out_dir) -> None:
    """Emit rows.csv, summary.csv, and the fully resolved config."""
    tag = f"{report.attack}_{report.defense}"
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, f"rows_{tag}.csv"), report.rows)
    _write_csv(os.path.join(out_dir, f"summary_{tag}.csv"),
               [dict(attack=report.attack, defense=report.defense, **report.aggregate)])
    with open(os.path.join(out_dir, f"config_{tag}.yaml"), "w") as f:
        yaml.safe_dump(report.config, f, sort_keys=True)


ROBUSTNESS_COLUMNS = ["dataset", "attack", "origin", "attack_hr", "at", "rat",
                      "cotrain", "cotrain_stars"]
GENERALIZATION_COLUMNS = ["dataset", "attack", "origin", "attack_hr", "at", "rat",
                          "cotrain", "cotrain_stars"]


def emit_tables(reports, out_dir) -> dict:
    """Write robustness / generalization / rank-shift CSVs from grid reports.

    Robustness rows hold the target-item HR of every defense; generalization
    rows the test HR. Stars mark the paired significance of the co-training
    column against the best (lowest target HR / highest test HR) baseline.
    """
    os.makedirs(out_dir, exist_ok=True)
    by_cell = {(r.attack, r.defense): r for r in reports}
    attacks_present = sorted({r.attack for r in reports},
                             key=lambda a: ATTACKS.index(a))
    rob_rows, gen_rows, shift_rows = [], [], []
    for a in attacks_present:
        dataset = next(iter(by_cell.values())).config["dataset_name"]
        rob = {"dataset": dataset, "attack": a}
        gen = {"dataset": dataset, "attack": a}
        per_defense_target = {}
        per_defense_test = {}
        for dfn in ("at", "rat", "cotrain"):
            rep = by_cell.get((a, dfn))
            if rep is None:
                rob[dfn] = gen[dfn] = ""
                continue
            rob[dfn] = rep.aggregate["hr_target_defense_mean"]
            gen[dfn] = rep.aggregate["hr_test_defense_mean"]
            per_defense_target[dfn] = [r["hr_target_defense"] for r in rep.rows]
            per_defense_test[dfn] = [r["hr_test_defense"] for r in rep.rows]
        some = next(rep for (aa, _), rep in by_cell.items() if aa == a)
        rob["origin"] = some.aggregate["hr_target_origin_mean"]
        rob["attack_hr"] = some.aggregate["hr_target_attack_mean"]
        gen["origin"] = some.aggregate["hr_test_origin_mean"]
        gen["attack_hr"] = some.aggregate["hr_test_attack_mean"]

        rob["cotrain_stars"] = gen["cotrain_stars"] = ""
        if "cotrain" in per_defense_target:
            baselines = {d: v for d, v in per_defense_target.items() if d in ("at", "rat")}
            if baselines:
                best = min(baselines, key=lambda d: float(np.mean(baselines[d])))
                _, p = paired_t_test(per_defense_target["cotrain"], baselines[best])
                rob["cotrain_stars"] = significance_stars(p)
            _, p = paired_t_test(per_defense_test["cotrain"],
                                 [r["hr_test_origin"] for r in by_cell[(a, "cotrain")].rows])
            gen["cotrain_stars"] = significance_stars(p)
        rob_rows.append(rob)
        gen_rows.append(gen)

        for dfn in ("none", "at", "rat", "cotrain"):
            rep = by_cell.get((a, dfn))
            if rep is None or "shift_defense_q2" not in (rep.rows[0] if rep.rows else {}):
                continue
            for r in rep.rows:
                shift_rows.append({
                    "dataset": dataset, "attack": a, "defense": dfn,
                    "repeat": r["repeat"],
                    "q1": r["shift_defense_q1"], "median": r["shift_defense_q2"],
                    "q3": r["shift_defense_q3"],
                })
    paths = {
        "robustness": os.path.join(out_dir, "robustness.csv"),
        "generalization": os.path.join(out_dir, "generalization.csv"),
        "rank_shift": os.path.join(out_dir, "rank_shift_quartiles.csv"),
    }
    _write_csv(paths["robustness"], rob_rows, ROBUSTNESS_COLUMNS)
    _write_csv(paths["generalization"], gen_rows, GENERALIZATION_COLUMNS)
    _write_csv(paths["rank_shift"], shift_rows,
               ["dataset", "attack", "defense", "repeat", "q1", "median", "q3"])
    return paths
