"""Model-vs-measurement evaluation shared by the CLI and the test-suite."""
from __future__ import annotations

import numpy as np

from . import edmd, narx
from .metrics import evaluate_channels
from .timeseries import TimeSeriesDataset


def snapshots_for_model(model: edmd.KoopmanModel, datasets) -> edmd.SnapshotMatrices:
    """Snapshot matrices normalized with a fitted model's statistics."""
    if isinstance(datasets, TimeSeriesDataset):
        datasets = [datasets]
    xs, ys, us = [], [], []
    for ds in datasets:
        s = model.stats.normalize_states(ds.matrix(list(model.state_names)))
        u = model.stats.normalize_inputs(ds.matrix(list(model.input_names)))
        xs.append(s[:, :-1])
        ys.append(s[:, 1:])
        us.append(u[:, :-1])
    return edmd.SnapshotMatrices(
        X=np.hstack(xs), Y=np.hstack(ys), U=np.hstack(us), stats=model.stats,
        state_names=model.state_names, input_names=model.input_names,
        sample_rate=model.sample_rate,
    )


def koopman_rollout(model: edmd.KoopmanModel, dataset: TimeSeriesDataset) -> tuple[np.ndarray, np.ndarray]:
    """Simulate over a whole record from its first measured state."""
    meas = dataset.matrix(list(model.state_names))
    pred = model.simulate(meas[:, 0], dataset.matrix(list(model.input_names)))
    return meas, pred


def koopman_reports(model, dataset):
    meas, pred = koopman_rollout(model, dataset)
    return evaluate_channels(meas, pred, list(model.state_names)), meas, pred


def narx_reports(model: narx.NarxModel, dataset):
    """Metrics over the closed-loop span (samples from ``lookback`` on)."""
    start, pred = narx.simulate_dataset(model, dataset)
    meas = dataset.channels[model.output_name][start:]
    return evaluate_channels(meas[None, :], pred[None, :], [model.output_name])[0], start, pred


def comparison_rows(koopman_model, narx_models: dict, datasets) -> list[dict]:
    """Rows in cycle / channel / method order for :func:`metrics.format_comparison`."""
    rows = []
    for ds in datasets:
        reps, _, _ = koopman_reports(koopman_model, ds)
        by_channel = {r.channel: r for r in reps}
        for ch in koopman_model.state_names:
            if ch in narx_models:
                rep, _, _ = narx_reports(narx_models[ch], ds)
                rows.append({"cycle": ds.name, "channel": ch, "method": "NARX", **_metric_fields(rep)})
            rows.append({
                "cycle": ds.name, "channel": ch,
                "method": f"EDMD (N_RBF = {koopman_model.dictionary.num_functions})",
                **_metric_fields(by_channel[ch]),
            })
    return rows


def _metric_fields(rep) -> dict:
    return {
        "nrmse": rep.nrmse,
        "r_squared": rep.r_squared,
        "mape": rep.mape,
        "nrmse_measured": rep.nrmse_measured,
        "n_points": rep.n_points,
    }
