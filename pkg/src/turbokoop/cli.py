"""Command-line entry point.

Commands: ``gen-data``, ``fit``, ``fit-narx``, ``evaluate``, ``sweep``.  Every
command accepts ``--config``, ``--seed``, ``--out-dir`` and
``--print-schema``; flags override values from the config file.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import benchmark, edmd, narx
from .config import RunConfig, check_data_files, load_config, schema_json
from .dataio import ingest_csv, write_columns, write_csv
from .dictionary import DictionarySpec
from .errors import ConfigError, TurboKoopError
from .metrics import format_comparison, format_table, rows_to_csv
from .surrogate import DutyCycleSettings, PlantParams, make_duty_cycles

log = logging.getLogger("turbokoop")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load(paths, cfg: RunConfig):
    roles = {n: "state" for n in cfg.states} | {n: "input" for n in cfg.inputs}
    return [ingest_csv(p, roles) for p in paths]


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(cfg: RunConfig) -> list[Path]:
    g = cfg["generator"]
    noise = g["noise_std"]
    settings = DutyCycleSettings(
        n_train=g["n_train"],
        train_duration=g["train_duration"],
        test_duration=g["test_duration"],
        sample_rate=g["sample_rate"],
        substeps=g["substeps"],
        noise_std=tuple(noise) if isinstance(noise, list) else noise,
    )
    train, transient, steady = make_duty_cycles(PlantParams(), cfg.seed, settings)
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for ds in [*train, transient, steady]:
        path = cfg.data_dir / f"{ds.name}.csv"
        write_csv(ds, path)
        written.append(path)
        log.info("wrote %s (%d samples)", path, ds.length)
    return written


# ---------------------------------------------------------------------------
# fit


def make_dictionary(cfg: RunConfig, snapshots, num_functions=None) -> DictionarySpec:
    d = cfg["dictionary"]
    bounds = d["center_bounds"]
    if bounds == "auto":
        both = np.hstack([snapshots.X, snapshots.Y])
        bounds = (float(both.min()), float(both.max()))
    k = d["num_functions"] if num_functions is None else num_functions
    family = d["family"]
    if k == 0 and family not in ("identity_only", "polynomial"):
        family = "identity_only"
    return DictionarySpec.create(
        family,
        len(cfg.states),
        k,
        shape_parameter=d["shape_parameter"],
        polynomial_degree=d["polynomial_degree"],
        center_bounds=tuple(bounds),
        seed=cfg.dictionary_seed,
    )


def _fit(cfg: RunConfig, datasets, model_path: Path, report_path: Path, num_functions=None):
    r = cfg["regression"]
    snap = edmd.build_snapshots(datasets, cfg.states, cfg.inputs,
                                normalize_inputs=r["normalize_inputs"])
    spec = make_dictionary(cfg, snap, num_functions)
    model, sol = edmd.fit_detailed(snap, spec, r["rank_tolerance"], r["ridge"])
    residual = edmd.one_step_residual(model, snap)
    edmd.save_model(model, model_path)
    report = {
        "train_files": [ds.name for ds in datasets],
        "family": spec.family,
        "num_functions": spec.num_functions,
        "lifted_dim": model.lifted_dim,
        "n_snapshots": int(snap.X.shape[1]),
        "effective_rank": sol.effective_rank,
        "one_step_residual": residual,
        "lifted_residual": sol.residual_norm,
        "spectral_radius": float(np.max(np.abs(np.linalg.eigvals(model.A)))),
    }
    _write_json(report_path, report)
    log.info("fit %s: N_l=%d residual=%.6g", spec.family, model.lifted_dim, residual)
    return model, report


def cmd_fit(cfg: RunConfig):
    paths = cfg.train_paths()
    check_data_files(paths, cfg.states + cfg.inputs, "train")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return _fit(cfg, _load(paths, cfg), cfg.model_path, cfg.out_dir / "fit_report.json")


# ---------------------------------------------------------------------------
# fit-narx


def narx_config(cfg: RunConfig, output: str, sample_rate: float) -> narx.NarxConfig:
    n = cfg["narx"]
    o = n["outputs"][output]
    return narx.NarxConfig.from_seconds(
        o.get("input_delay_s", 0.1),
        o.get("feedback_delay_s", n["feedback_delay_s"]),
        sample_rate,
        hidden_neurons=o.get("hidden_neurons", 10),
        l2_penalty=n["l2_penalty"],
        max_epochs=n["max_epochs"],
        seed=cfg.seed,
        lm_initial_damping=n["lm_initial_damping"],
        lm_damping_factor=n["lm_damping_factor"],
    )


def cmd_fit_narx(cfg: RunConfig):
    outputs = list(cfg["narx"]["outputs"])
    if not outputs:
        raise ConfigError("narx.outputs is empty")
    paths = cfg.train_paths()
    check_data_files(paths, outputs + cfg.inputs, "train")
    datasets = _load(paths, cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    dest = cfg.narx_model_paths()
    models, report = {}, {}
    for out in outputs:
        ncfg = narx_config(cfg, out, datasets[0].sample_rate)
        model = narx.train(datasets, ncfg, out, cfg.inputs)
        narx.save_narx(model, dest[out])
        models[out] = model
        report[out] = {
            "input_delay_steps": ncfg.input_delay_steps,
            "feedback_delay_steps": ncfg.feedback_delay_steps,
            "hidden_neurons": ncfg.hidden_neurons,
            "epochs": len(model.loss_history) - 1,
            "final_loss": model.loss_history[-1],
        }
        log.info("narx %s: %d epochs, loss %.6g", out, report[out]["epochs"], model.loss_history[-1])
    _write_json(cfg.out_dir / "narx_report.json", report)
    return models, report


# ---------------------------------------------------------------------------
# evaluate


def _evaluate(model, narx_models, datasets, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = benchmark.comparison_rows(model, narx_models, datasets)
    cols = ("cycle", "channel", "method", "nrmse", "r_squared", "mape", "nrmse_measured", "n_points")
    (out_dir / "metrics.csv").write_text(rows_to_csv(rows, cols))
    (out_dir / "metrics.txt").write_text(format_comparison(rows))

    for ds in datasets:
        meas, pred = benchmark.koopman_rollout(model, ds)
        cols_out = {"time_s": ds.time}
        for i, ch in enumerate(model.state_names):
            cols_out[f"{ch}_measured"] = meas[i]
            cols_out[f"{ch}_edmd"] = pred[i]
            if ch in narx_models:
                _, start, npred = benchmark.narx_reports(narx_models[ch], ds)
                full = np.full(ds.length, np.nan)
                full[start:] = npred
                cols_out[f"{ch}_narx"] = full
        write_columns(out_dir / f"trajectory_{ds.name}.csv", cols_out)

    res = {ds.name: edmd.one_step_residual(model, benchmark.snapshots_for_model(model, ds))
           for ds in datasets}
    res["combined"] = edmd.one_step_residual(model, benchmark.snapshots_for_model(model, datasets))
    _write_json(out_dir / "residuals.json", {"one_step_residual": res})
    return rows, res


def cmd_evaluate(cfg: RunConfig, use_narx: bool = True):
    paths = cfg.test_paths()
    if not cfg.model_path.is_file():
        raise ConfigError(f"model file {cfg.model_path} does not exist (run `fit` first)")
    narx_paths = {}
    if use_narx:
        for out, p in cfg.narx_model_paths().items():
            if p.is_file():
                narx_paths[out] = p
            elif cfg.raw.get("narx_models"):
                raise ConfigError(f"NARX model file {p} does not exist")
            else:
                log.info("no NARX model for %s at %s; skipping", out, p)
    model = edmd.load_model(cfg.model_path)
    narx_models = {k: narx.load_narx(p) for k, p in narx_paths.items()}
    needed = list(model.state_names) + list(model.input_names)
    for m in narx_models.values():
        needed += [m.output_name, *m.input_names]
    check_data_files(paths, list(dict.fromkeys(needed)), "test")
    rows, res = _evaluate(model, narx_models, _load(paths, cfg), cfg.out_dir / "eval")
    print(format_comparison(rows))
    return rows, res


# ---------------------------------------------------------------------------
# sweep


def _sweep_one(args):
    raw, count, train_paths, test_paths = args
    cfg = RunConfig(raw)
    run_dir = cfg.out_dir / "sweep" / f"rbf_{count:03d}"
    run_dir.mkdir(parents=True, exist_ok=True)
    train = _load(train_paths, cfg)
    test = _load(test_paths, cfg)
    model, report = _fit(cfg, train, run_dir / "koopman.tkm", run_dir / "fit_report.json", count)
    rows, _ = _evaluate(model, {}, test, run_dir)
    for r in rows:
        r["num_rbf"] = count
        r["one_step_residual"] = report["one_step_residual"]
    return rows


def cmd_sweep(cfg: RunConfig):
    train_paths, test_paths = cfg.train_paths(), cfg.test_paths()
    check_data_files(train_paths, cfg.states + cfg.inputs, "train")
    check_data_files(test_paths, cfg.states + cfg.inputs, "test")
    counts = cfg["sweep"]["rbf_counts"]
    jobs = [(cfg.raw, c, train_paths, test_paths) for c in counts]
    if cfg["sweep"]["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["sweep"]["jobs"]) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    rows = [r for chunk in results for r in chunk]
    sweep_dir = cfg.out_dir / "sweep"
    cols = ("channel", "cycle", "num_rbf", "nrmse", "r_squared", "mape", "nrmse_measured",
            "one_step_residual", "n_points")
    rows.sort(key=lambda r: (r["channel"], r["cycle"], r["num_rbf"]))
    (sweep_dir / "sweep.csv").write_text(rows_to_csv(rows, cols))
    text = []
    for ch in dict.fromkeys(r["channel"] for r in rows):
        text.append(f"Prediction performance of {ch} using EDMD")
        for cyc in dict.fromkeys(r["cycle"] for r in rows if r["channel"] == ch):
            text.append(f"  [{cyc}]")
            sub = [r for r in rows if r["channel"] == ch and r["cycle"] == cyc]
            table = format_table(sub, ("num_rbf", "nrmse", "r_squared", "mape", "one_step_residual"))
            text.extend("    " + line for line in table.rstrip("\n").split("\n"))
        text.append("")
    (sweep_dir / "sweep.txt").write_text("\n".join(text))
    print("\n".join(text))
    return rows


# ---------------------------------------------------------------------------
# argument handling


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (data, centers, NARX init)")
    p.add_argument("--out-dir", help="directory for every output of the run")
    p.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    p.add_argument("-v", "--verbose", action="store_true")


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="turbokoop", description="EDMD / NARX turbine identification")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-data", help="write surrogate train/test CSVs")
    _common(g)
    g.add_argument("--n-train", type=int)
    g.add_argument("--train-duration", type=float)
    g.add_argument("--test-duration", type=float)

    f = sub.add_parser("fit", help="fit an EDMD model")
    _common(f)
    f.add_argument("--train", nargs="+", help="training CSVs")
    f.add_argument("--family")
    f.add_argument("--num-rbf", type=int)
    f.add_argument("--ridge", type=float)
    f.add_argument("--auto-bounds", action="store_true", help="centers span the normalized data range")

    n = sub.add_parser("fit-narx", help="train one NARX network per output")
    _common(n)
    n.add_argument("--train", nargs="+")
    n.add_argument("--max-epochs", type=int)

    e = sub.add_parser("evaluate", help="simulate models on test CSVs and report metrics")
    _common(e)
    e.add_argument("--test", nargs="+")
    e.add_argument("--model", help="EDMD model file")
    e.add_argument("--no-narx", action="store_true")

    s = sub.add_parser("sweep", help="fit+evaluate for several RBF counts")
    _common(s)
    s.add_argument("--train", nargs="+")
    s.add_argument("--test", nargs="+")
    s.add_argument("--rbf-counts", type=_int_list)
    s.add_argument("--jobs", type=int)
    return p


def _overrides(a) -> dict:
    o: dict = {}
    if a.seed is not None:
        o["seed"] = a.seed
    if a.out_dir is not None:
        o["out_dir"] = a.out_dir
    gen = {k: v for k, v in (("n_train", getattr(a, "n_train", None)),
                             ("train_duration", getattr(a, "train_duration", None)),
                             ("test_duration", getattr(a, "test_duration", None))) if v is not None}
    if gen:
        o["generator"] = gen
    data = {}
    if getattr(a, "train", None):
        data["train"] = a.train
    if getattr(a, "test", None):
        data["test"] = a.test
    if data:
        o["data"] = data
    d = {}
    if getattr(a, "family", None):
        d["family"] = a.family
    if getattr(a, "num_rbf", None) is not None:
        d["num_functions"] = a.num_rbf
    if getattr(a, "auto_bounds", False):
        d["center_bounds"] = "auto"
    if d:
        o["dictionary"] = d
    if getattr(a, "ridge", None) is not None:
        o["regression"] = {"ridge": a.ridge}
    if getattr(a, "max_epochs", None) is not None:
        o["narx"] = {"max_epochs": a.max_epochs}
    sw = {}
    if getattr(a, "rbf_counts", None):
        sw["rbf_counts"] = a.rbf_counts
    if getattr(a, "jobs", None):
        sw["jobs"] = a.jobs
    if sw:
        o["sweep"] = sw
    if getattr(a, "model", None):
        o["model_path"] = a.model
    return o


COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "fit-narx": cmd_fit_narx,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    if a.print_schema:
        print(schema_json())
        return 0
    logging.basicConfig(
        level=logging.INFO if a.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(a.config, _overrides(a))
        if a.cmd == "evaluate":
            cmd_evaluate(cfg, use_narx=not a.no_narx)
        else:
            COMMANDS[a.cmd](cfg)
    except TurboKoopError as exc:
        print(f"turbokoop {a.cmd}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
