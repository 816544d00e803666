"""Command-line pipeline: simulate, ingest, tune, train, eval, report.

Every subcommand takes ``--config`` (a key=value file), ``--out-dir``, and
where relevant ``--env``, ``--rep``, ``--seed``. All randomness derives from
the configured master seed (or its ``--seed`` override), so a rerun with the
same config and seed reproduces every output file byte for byte.

Artifact naming inside the out-dir:

    corpus_<env>.csv                       canonical records
    params_<estimator>_<env>_rep<k>.txt    tuned detector parameters
    model_<kind>_<env>_rep<k>.json         trained estimator checkpoint
    report_<task>_<env>_rep<k>_<slug>.txt  per-method evaluation report
    table_<task>_p90.csv                   merged table (mean p90 over reps)
    cdf_<task>_<env>_<slug>.csv            pooled CDF, two columns
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataio, evaluate, models, simulate
from .core import PhysConstants
from .detectors import LdeParams, PeakParams, TuneGrid, tune
from .errors import MissingArtifacts, UwbposError
from .locate import SolverConfig
from .net import TrainConfig


def _slug(method: str) -> str:
    return method.replace("+", "-").replace("@", "-at-").lower()


def _parse_grid(text: str) -> tuple:
    """Comma list ('0.1,0.2') or inclusive range ('0.05:0.6:0.05')."""
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(v) for v in text.split(","))


def _int_grid(text: str) -> tuple:
    return tuple(int(v) for v in _parse_grid(text))


class RunConfig:
    """Typed access to the run config file with pipeline defaults."""

    def __init__(self, raw: dict, seed_override: int | None = None):
        self.raw = raw
        self.master_seed = seed_override if seed_override is not None else int(
            raw.get("master_seed", 0)
        )

    def corpus_path(self) -> str:
        if "corpus" not in self.raw:
            raise ValueError("run config must set 'corpus'")
        return self.raw["corpus"]

    def plan(self) -> dataio.SplitPlan:
        fractions = (
            float(self.raw.get("train_frac", 0.70)),
            float(self.raw.get("val_frac", 0.15)),
            float(self.raw.get("test_frac", 0.15)),
        )
        return dataio.SplitPlan.from_master(
            self.master_seed,
            int(self.raw.get("n_repetitions", 10)),
            fractions,
        )

    def split_domain(self) -> str:
        domain = self.raw.get("split_domain", "records")
        if domain not in ("records", "sets"):
            raise ValueError("split_domain must be 'records' or 'sets'")
        return domain

    def tune_grid(self) -> TuneGrid:
        defaults = TuneGrid()
        return TuneGrid(
            beta=_parse_grid(self.raw["beta_grid"]) if "beta_grid" in self.raw else defaults.beta,
            lede_factor=_parse_grid(self.raw["lde_factor_grid"])
            if "lde_factor_grid" in self.raw
            else defaults.lede_factor,
            w_avg=_int_grid(self.raw["lde_w_avg_grid"])
            if "lde_w_avg_grid" in self.raw
            else defaults.w_avg,
            w_small=_int_grid(self.raw["lde_w_small_grid"])
            if "lde_w_small_grid" in self.raw
            else defaults.w_small,
            w_large=_int_grid(self.raw["lde_w_large_grid"])
            if "lde_w_large_grid" in self.raw
            else defaults.w_large,
        )

    def train_config(self, rep: int) -> TrainConfig:
        return TrainConfig(
            batch_size=int(self.raw.get("batch_size", 32)),
            lr0=float(self.raw.get("lr0", 1e-3)),
            max_epochs=int(self.raw.get("max_epochs", 250)),
            patience_early=int(self.raw.get("patience_early", 25)),
            plateau_patience=int(self.raw.get("plateau_patience", 10)),
            plateau_factor=float(self.raw.get("plateau_factor", 0.5)),
            min_lr=float(self.raw.get("min_lr", 1e-5)),
            seed=self.master_seed * 10000 + rep,
        )

    def arch_seed(self, rep: int) -> int:
        return int(self.raw.get("arch_seed", self.master_seed)) * 10000 + rep + 1

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            max_iters=int(self.raw.get("solver_max_iters", 50)),
            tol_cm=float(self.raw.get("solver_tol_cm", 1e-6)),
            damping=float(self.raw.get("solver_damping", 0.0)),
        )

    def methods(self, task: str) -> tuple:
        key = f"{task}_methods"
        if key in self.raw:
            return tuple(m.strip() for m in self.raw[key].split(",") if m.strip())
        if task == "ranging":
            return evaluate.RANGING_METHODS
        return evaluate.POSITIONING_METHODS

    def envs(self) -> tuple:
        if "envs" in self.raw:
            return tuple(e.strip() for e in self.raw["envs"].split(",") if e.strip())
        return ()


def _load_records(cfg: RunConfig, env: str | None):
    records = dataio.read_records(cfg.corpus_path())
    if env:
        records = [r for r in records if r.env_id == env]
        if not records:
            raise ValueError(f"no records for env {env!r} in {cfg.corpus_path()}")
    return records


def _split_record_indices(records, cfg: RunConfig, rep: int):
    """(train, val, test) record index lists under the configured domain."""
    plan = cfg.plan()
    if cfg.split_domain() == "records":
        return dataio.split(len(records), plan, rep)
    groups: dict = {}
    for i, r in enumerate(records):
        groups.setdefault((r.env_id, r.tag_id, r.rep_id), []).append(i)
    keys = sorted(groups)
    parts = dataio.split(len(keys), plan, rep)
    return tuple(
        np.array([i for g in part for i in groups[keys[g]]], dtype=int)
        for part in parts
    )


# ---------------------------------------------------------------------------
# Subcommands

def cmd_simulate(args) -> int:
    config = dataio.read_kv(args.config)
    if args.seed is not None:
        config["seed"] = str(args.seed)
    scenario = simulate.scenario_from_config(config)
    corpus = simulate.generate_corpus(scenario)
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, f"corpus_{scenario.env_id}.csv")
    dataio.write_records(out_path, corpus.records)
    print(
        f"simulate: {len(corpus.records)} records, "
        f"{len(corpus.fingerprint_groups)} fingerprint sets -> {out_path}"
    )
    return 0


def cmd_ingest(args) -> int:
    adapter = dataio.read_kv(args.config)
    source = adapter.get("source_dir")
    if not source:
        raise ValueError("adapter config must set 'source_dir'")
    result = dataio.ingest_public_dataset(source, adapter)
    os.makedirs(args.out_dir, exist_ok=True)
    by_env: dict = {}
    for r in result.records:
        by_env.setdefault(r.env_id, []).append(r)
    for env, recs in sorted(by_env.items()):
        out_path = os.path.join(args.out_dir, f"corpus_{env}.csv")
        dataio.write_records(out_path, recs)
        print(f"ingest: {env}: {len(recs)} records -> {out_path}")
    if result.skipped:
        print(f"ingest: skipped {len(result.skipped)} rows", file=sys.stderr)
    return 0


def _params_path(out_dir, estimator, env, rep):
    return os.path.join(out_dir, f"params_{estimator}_{env or 'all'}_rep{rep}.txt")


def cmd_tune(args) -> int:
    cfg = RunConfig(dataio.read_kv(args.config), args.seed)
    records = _load_records(cfg, args.env)
    dataset = dataio.make_toa_dataset(records)
    train_idx, val_idx, _ = _split_record_indices(dataset.records, cfg, args.rep)
    fit_idx = np.concatenate([train_idx, val_idx])
    windows = [dataset.windows[i] for i in fit_idx]
    labels = dataset.labels[fit_idx]
    grid = cfg.tune_grid()
    os.makedirs(args.out_dir, exist_ok=True)

    estimators = tuple(
        e.strip() for e in cfg.raw.get("estimators", "peak,lde").split(",") if e.strip()
    )
    for kind in estimators:
        result = tune(kind, grid, windows, labels)
        path = _params_path(args.out_dir, kind, args.env, args.rep)
        manifest = {"estimator": kind, "env": args.env or "all", "rep": args.rep,
                    "split_domain": cfg.split_domain(), "mae_samples": repr(result.mae)}
        for key, value in vars(result.params).items():
            manifest[key] = repr(value) if isinstance(value, float) else value
        dataio.write_kv(path, manifest, header="uwbpos-params v1")
        print(f"tune: {kind}: MAE {result.mae:.3f} samples -> {path}")
    return 0


def _model_path(out_dir, kind, env, rep):
    return os.path.join(out_dir, f"model_{kind}_{env or 'all'}_rep{rep}.json")


def cmd_train(args) -> int:
    cfg = RunConfig(dataio.read_kv(args.config), args.seed)
    records = _load_records(cfg, args.env)
    train_cfg = cfg.train_config(args.rep)
    os.makedirs(args.out_dir, exist_ok=True)
    path = _model_path(args.out_dir, args.model, args.env, args.rep)

    if args.model == "ann-toa":
        dataset = dataio.make_toa_dataset(records)
        train_idx, val_idx, _ = _split_record_indices(dataset.records, cfg, args.rep)
        estimator, result = models.train_toa_estimator(
            [dataset.windows[i] for i in train_idx],
            dataset.labels[train_idx],
            [dataset.windows[i] for i in val_idx],
            dataset.labels[val_idx],
            train_cfg,
            arch_seed=cfg.arch_seed(args.rep),
        )
        payload = models.toa_estimator_to_dict(estimator)
    elif args.model == "ann-fp":
        fp = dataio.make_fp_dataset(records)
        train_idx, val_idx, _ = dataio.split(len(fp.sets), cfg.plan(), args.rep)
        estimator, result = models.train_fp_estimator(
            [fp.sets[i] for i in train_idx],
            [fp.sets[i] for i in val_idx],
            train_cfg,
            arch_seed=cfg.arch_seed(args.rep),
        )
        payload = models.fp_estimator_to_dict(estimator)
    else:
        raise ValueError(f"unknown model {args.model!r}")

    payload["env"] = args.env or "all"
    payload["rep"] = args.rep
    with open(path, "w") as fh:
        json.dump(payload, fh)
    print(
        f"train: {args.model}: best val loss {result.best_val_loss:.6f} "
        f"at epoch {result.best_epoch}/{len(result.history)} -> {path}"
    )
    return 0


def _load_params(out_dir, estimator, env, rep):
    path = _params_path(out_dir, estimator, env, rep)
    if not os.path.exists(path):
        raise MissingArtifacts(f"missing tuned parameters: {path}")
    raw = dataio.read_kv(path)
    if estimator == "peak":
        return PeakParams(beta=float(raw["beta"]))
    return LdeParams(
        beta=float(raw["beta"]),
        lede_factor=float(raw["lede_factor"]),
        w_avg=int(raw["w_avg"]),
        w_small=int(raw["w_small"]),
        w_large=int(raw["w_large"]),
    )


def _load_model(out_dir, kind, env, rep):
    path = _model_path(out_dir, kind, env, rep)
    if not os.path.exists(path):
        raise MissingArtifacts(f"missing trained model: {path}")
    with open(path) as fh:
        payload = json.load(fh)
    if kind == "ann-toa":
        return models.toa_estimator_from_dict(payload)
    return models.fp_estimator_from_dict(payload)


def cmd_eval(args) -> int:
    cfg = RunConfig(dataio.read_kv(args.config), args.seed)
    records = _load_records(cfg, args.env)
    plan = cfg.plan()
    methods = cfg.methods(args.task)
    os.makedirs(args.out_dir, exist_ok=True)

    if args.task == "ranging":
        artifacts = evaluate.RangingArtifacts()
        if "Peak" in methods:
            artifacts.peak = _load_params(args.out_dir, "peak", args.env, args.rep)
        if "LDE" in methods:
            artifacts.lde = _load_params(args.out_dir, "lde", args.env, args.rep)
        if "ANN_ToA" in methods:
            artifacts.ann_toa = _load_model(args.out_dir, "ann-toa", args.env, args.rep)
        reports = evaluate.run_ranging_eval(
            records, plan, args.rep, artifacts, methods, env=args.env
        )
    else:
        needs = {m.partition("+")[0] for m in methods}
        artifacts = evaluate.PositioningArtifacts()
        if "Peak" in needs:
            artifacts.peak = _load_params(args.out_dir, "peak", args.env, args.rep)
        if "LDE" in needs:
            artifacts.lde = _load_params(args.out_dir, "lde", args.env, args.rep)
        if "ANN_ToA" in needs:
            artifacts.ann_toa = _load_model(args.out_dir, "ann-toa", args.env, args.rep)
        if "ANN_FP" in needs:
            artifacts.ann_fp = _load_model(args.out_dir, "ann-fp", args.env, args.rep)
        reports = evaluate.run_positioning_eval(
            records, plan, args.rep, artifacts, methods,
            solver_cfg=cfg.solver_config(), env=args.env,
        )

    for method, report in reports.items():
        name = f"report_{args.task}_{args.env or 'all'}_rep{args.rep}_{_slug(method)}.txt"
        path = os.path.join(args.out_dir, name)
        evaluate.write_report(path, report)
        print(f"eval: {method}: p90 {report.percentiles[90]:.1f} cm -> {path}")
    return 0


def cmd_report(args) -> int:
    cfg = RunConfig(dataio.read_kv(args.config), args.seed) if args.config else None
    out_dir = args.out_dir
    grouped: dict = {}
    for name in sorted(os.listdir(out_dir)):
        if not (name.startswith("report_") and name.endswith(".txt")):
            continue
        report = evaluate.read_report(os.path.join(out_dir, name))
        task = report.meta.get("task", "unknown")
        env = report.meta.get("env", "all")
        grouped.setdefault((task, env, report.method), []).append(report)
    if not grouped:
        print("report: no report files found", file=sys.stderr)
        return 1

    by_task: dict = {}
    for (task, env, method), reports in grouped.items():
        p90, pooled = evaluate.aggregate_p90(reports)
        by_task.setdefault(task, {})[(env, method)] = (p90, pooled)
        cdf_path = os.path.join(out_dir, f"cdf_{task}_{env}_{_slug(method)}.csv")
        pooled = np.sort(pooled)
        with open(cdf_path, "w") as fh:
            fh.write("error_cm,cum_fraction\n")
            for i, err in enumerate(pooled):
                fh.write(f"{err!r},{(i + 1) / pooled.size!r}\n")

    for task, cells in sorted(by_task.items()):
        envs = cfg.envs() if cfg and cfg.envs() else tuple(sorted({e for e, _ in cells}))
        methods = []
        for env, method in cells:
            if method not in methods:
                methods.append(method)
        table_path = os.path.join(out_dir, f"table_{task}_p90.csv")
        with open(table_path, "w") as fh:
            fh.write("method," + ",".join(envs) + "\n")
            for method in methods:
                row = [method]
                for env in envs:
                    cell = cells.get((env, method))
                    row.append(f"{cell[0]:.1f}" if cell else "")
                fh.write(",".join(row) + "\n")
        print(f"report: {task}: {len(methods)} methods x {len(envs)} envs -> {table_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwbpos",
        description="UWB positioning pipeline: simulate, ingest, tune, train, eval, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, rep=False, env=False, config_required=True):
        p.add_argument(
            "--config",
            required=config_required,
            default=None,
            help="key=value config file",
        )
        p.add_argument("--out-dir", required=True, help="artifact directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        if env:
            p.add_argument("--env", default=None, help="environment filter")
        if rep:
            p.add_argument("--rep", type=int, default=0, help="repetition index")

    add_common(sub.add_parser("simulate", help="scenario config -> canonical corpus"))
    add_common(sub.add_parser("ingest", help="public dataset -> canonical corpus"))
    p = sub.add_parser("tune", help="exhaustive Peak/LDE parameter search")
    add_common(p, rep=True, env=True)
    p = sub.add_parser("train", help="train an ANN estimator")
    p.add_argument("model", choices=["ann-toa", "ann-fp"])
    add_common(p, rep=True, env=True)
    p = sub.add_parser("eval", help="evaluate methods on the test split")
    p.add_argument("task", choices=["ranging", "positioning"])
    add_common(p, rep=True, env=True)
    p = sub.add_parser("report", help="merge repetition reports into tables and CDFs")
    add_common(p, config_required=False)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "tune": cmd_tune,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (UwbposError, ValueError, OSError) as exc:
        summary = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(summary), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
