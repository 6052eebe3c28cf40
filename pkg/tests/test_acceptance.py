"""Acceptance criteria, one check per criterion.

Run under pytest (the pass/fail lines appear in the terminal summary) or
directly: ``python tests/test_acceptance.py``.
"""
import filecmp
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from turbokoop import benchmark, edmd, narx
from turbokoop import surrogate as sg
from turbokoop.dictionary import DictionarySpec
from turbokoop.linalg import pseudoinverse, solve_stacked_regression
from turbokoop.metrics import format_comparison, mape, nrmse, r_squared
from turbokoop.timeseries import TimeSeriesDataset

sys.path.insert(0, str(Path(__file__).parent))
from _systems import linear_dataset, random_stable_system  # noqa: E402
from test_linalg import normal_equations, penrose_gaps  # noqa: E402
from test_metrics import loop_metrics  # noqa: E402
from test_surrogate import U0, U1, rk4_order  # noqa: E402

# criterion number -> (pass, line); filled as checks run
RESULTS: dict[int, tuple[bool, str]] = {}


def c1_linear_recovery():
    A0, B0 = random_stable_system(2, 2, seed=101)
    train, s, u = linear_dataset(A0, B0, 500, seed=102)
    snap = edmd.build_snapshots([train], s, u, normalize_states=False)
    model = edmd.fit(snap, DictionarySpec.create("identity_only", 2))
    err_a = np.abs(model.A - A0).max()
    err_b = np.abs(model.B - B0).max()
    test, _, _ = linear_dataset(A0, B0, 101, seed=103)
    truth = test.matrix(s)
    pred = model.simulate(truth[:, 0], test.matrix(u))
    rel = np.sqrt(np.mean((pred - truth) ** 2)) / np.sqrt(np.mean(truth**2))
    assert err_a <= 1e-7 and err_b <= 1e-7, (err_a, err_b)
    assert rel < 1e-5, rel
    return f"max|dA|={err_a:.1e} max|dB|={err_b:.1e} sim rel RMSE={rel:.1e}"


def c2_pseudoinverse():
    rng = np.random.default_rng(202)
    worst = 0.0
    deficient = 0
    for i in range(50):
        rows, cols = rng.integers(1, 12, size=2)
        full = min(rows, cols)
        rank = full if i % 2 else int(rng.integers(0, full))
        deficient += rank < full
        m = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
        worst = max(worst, *penrose_gaps(m, pseudoinverse(m)))
    assert worst <= 1e-9, worst
    worst_ls = 0.0
    for _ in range(10):
        x = rng.standard_normal((6, 400))
        u = rng.standard_normal((3, 400))
        y = rng.standard_normal((6, 400))
        coef = solve_stacked_regression(y, x, u).coefficients
        worst_ls = max(worst_ls, np.abs(coef - normal_equations(y, x, u)).max())
    assert worst_ls <= 1e-8, worst_ls
    return f"Penrose max gap={worst:.1e} ({deficient}/50 rank-deficient), normal-eq max diff={worst_ls:.1e}"


def _duty_cycles():
    return sg.make_duty_cycles(sg.PlantParams(), seed=0)


def c3_nested_monotonicity():
    params = sg.PlantParams()
    ex = sg.training_excitations(params, [7])[0]
    cycle = sg.integrate(params, ex, 200.0, name="train_00")
    snap = edmd.build_snapshots([cycle], list(sg.STATE_CHANNELS), list(sg.INPUT_CHANNELS))
    res = []
    for k in (0, 50, 100, 150):
        family = "identity_only" if k == 0 else "polyharmonic"
        spec = DictionarySpec.create(family, 2, k, seed=11)
        res.append(edmd.one_step_residual(edmd.fit(snap, spec), snap))
    steps = np.diff(res)
    assert np.all(steps <= 1e-9), res
    return "residuals " + " > ".join(f"{r:.6g}" for r in res)


def c4_end_to_end():
    train, transient, steady = _duty_cycles()
    states, inputs = list(sg.STATE_CHANNELS), list(sg.INPUT_CHANNELS)
    snap = edmd.build_snapshots(train, states, inputs)
    model = edmd.fit(snap, DictionarySpec.create("polyharmonic", 2, 100, seed=0))
    fs = train[0].sample_rate
    nets = {}
    for out, delay, h in (("N_t", 0.1, 20), ("T_tur_out", 2.0, 14)):
        cfg = narx.NarxConfig.from_seconds(delay, 0.01, fs, hidden_neurons=h)
        nets[out] = narx.train(train, cfg, out, inputs)
    rows = benchmark.comparison_rows(model, nets, [transient, steady])
    assert len(rows) == 8
    for r in rows:
        assert all(np.isfinite(r[k]) for k in ("nrmse", "r_squared", "mape")), r
    edmd_tr = {r["channel"]: r for r in rows if r["cycle"] == "transient_test" and r["method"] != "NARX"}
    r2_n, r2_t = edmd_tr["N_t"]["r_squared"], edmd_tr["T_tur_out"]["r_squared"]
    table = format_comparison(rows)
    assert r2_n >= 0.90 and r2_t >= 0.70, (r2_n, r2_t)
    return f"EDMD transient R2: N_t={r2_n:.3f} T_tur_out={r2_t:.3f}\n" + table


def c5_metrics():
    assert nrmse([0.0, 0.0], [1.0, 1.0]) == 1.0
    assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 5.0]) == -1.0
    assert r_squared([1.0, 4.0, 2.0, 8.0], [3.75] * 4) == 0.0
    assert abs(mape([10.0], [11.0]) - 10.0) <= 1e-12
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 80))
        y = rng.uniform(0.5, 5.0, n) * rng.choice([-1.0, 1.0])
        yh = y + rng.normal(0, 0.5, n)
        ref = loop_metrics(y, yh)
        got = (nrmse(y, yh), r_squared(y, yh), mape(y, yh))
        worst = max(worst, max(abs(a - b) for a, b in zip(got, ref)))
    assert worst <= 1e-12, worst
    return f"max |vectorized - loop| over 1000 pairs = {worst:.1e}"


def _ar(T, f, seed, noise=0.0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(T)
    y = np.zeros(T)
    for l in range(1, T):
        y[l] = f(y[l - 1], u[l - 1])
    y = y + noise * rng.standard_normal(T)
    return TimeSeriesDataset("ar", 100.0, {"y": y, "u": u})


def c6_narx():
    worst = 0.0
    for seed in range(3):
        cfg = narx.NarxConfig(input_delay_steps=1, hidden_neurons=3 + seed, seed=seed)
        stats = narx.RegressorStats(0.0, 1.0, np.zeros(2), np.ones(2))
        m = narx.init_model(cfg, "y", ["a", "b"], stats)
        R = np.random.default_rng(seed).standard_normal((15, 3))
        J = narx.jacobian(m, R)
        theta = m.params()
        for k in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += 1e-6
            tm[k] -= 1e-6
            fd = (narx.forward_batch(m.with_params(tp), R) - narx.forward_batch(m.with_params(tm), R)) / 2e-6
            worst = max(worst, np.abs(fd - J[:, k]).max() / max(1.0, np.abs(J[:, k]).max()))
    assert worst <= 1e-6, worst

    ds = _ar(1000, lambda y, u: 0.6 * np.tanh(1.5 * y) + 0.5 * u, seed=61)
    m = narx.train([ds], narx.NarxConfig(input_delay_steps=1, hidden_neurons=6, max_epochs=40), "y", ["u"])
    rises = int(np.sum(np.diff(m.loss_history) > 0))
    assert rises == 0, m.loss_history

    ds = _ar(1500, lambda y, u: 0.6 * y + 0.8 * u, seed=62, noise=0.05)
    cfg = narx.NarxConfig(input_delay_steps=1, hidden_neurons=4, l2_penalty=0.0, max_epochs=100)
    m = narx.train([ds], cfg, "y", ["u"])
    R, target = narx.build_regressors(ds, cfg, "y", ["u"], m.stats)
    Z = np.column_stack([R, np.ones(len(R))])
    coef = np.linalg.lstsq(Z, target, rcond=None)[0]
    oracle = np.mean((Z @ coef - target) ** 2)
    ratio = narx.training_loss(m, R, target) / oracle
    assert ratio <= 1.05, ratio
    return f"Jacobian rel err={worst:.1e}, loss rises=0, linear loss/oracle={ratio:.4f}"


def c7_physics():
    P = sg.PlantParams()
    worst = 0.0
    for N in (40_000.0, 90_000.0, 140_000.0):
        for u in (U0, U1):
            q = sg.turbine_quantities(P, N, u)
            rhs = q["P_t"] - q["Q_housing"]
            worst = max(worst, abs(q["W"] * P.c_p * (q["T_in"] - q["T_target"]) - rhs) / abs(rhs))
    assert worst < 1e-6, worst
    slopes, _ = rk4_order()
    assert all(3.7 <= s <= 4.3 for s in slopes), slopes
    x = [70_000.0, 650.0]
    d1 = sg.plant_derivatives(P, x, U1)[0]
    d2 = sg.plant_derivatives(sg.with_params(P, J_t=2 * P.J_t), x, U1)[0]
    assert d1 != 0 and d2 == d1 / 2, (d1, d2)
    return f"energy residual={worst:.1e}, RK4 slopes={slopes[0]:.3f},{slopes[1]:.3f}, 2J gives dN/2 exactly"


DETERMINISM_CONFIG = """{
  "seed": 5,
  "generator": {"n_train": 2, "train_duration": 40.0, "test_duration": 40.0},
  "dictionary": {"num_functions": 30},
  "narx": {"max_epochs": 5},
  "sweep": {"rbf_counts": [0, 15, 30]}
}"""


def _pipeline(root: Path):
    root.mkdir(parents=True)
    cfg = root / "config.json"
    cfg.write_text(DETERMINISM_CONFIG)
    env = dict(os.environ, PYTHONHASHSEED="random")
    for cmd in ("gen-data", "fit", "fit-narx", "evaluate", "sweep"):
        subprocess.run(
            [sys.executable, "-m", "turbokoop", cmd, "--config", "config.json", "--out-dir", "run"],
            cwd=root, env=env, check=True, capture_output=True,
        )
    return root / "run"


def c8_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        a = _pipeline(Path(tmp) / "a")
        b = _pipeline(Path(tmp) / "b")
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        other = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files == other, set(files) ^ set(other)
        _, mismatch, errors = filecmp.cmpfiles(a, b, [str(f) for f in files], shallow=False)
        assert not mismatch and not errors, mismatch + errors
        # one output per stage: gen-data, fit, fit-narx, evaluate, sweep
        assert all((a / k).exists() for k in ("data", "koopman.tkm", "narx_N_t.tkm", "eval", "sweep"))
    return f"{len(files)} output files identical across two fresh runs"


CRITERIA = [
    (1, "linear-system exact recovery", c1_linear_recovery, 1.0),
    (2, "pseudoinverse correctness", c2_pseudoinverse, 5.0),
    (3, "nested-dictionary residual monotonicity", c3_nested_monotonicity, 30.0),
    (4, "surrogate end-to-end", c4_end_to_end, 300.0),
    (5, "metrics oracle equivalence", c5_metrics, 1.0),
    (6, "NARX training soundness", c6_narx, 30.0),
    (7, "surrogate physics", c7_physics, 10.0),
    (8, "pipeline determinism", c8_determinism, 300.0),
]


def run_criterion(num, title, fn, limit):
    t0 = time.perf_counter()
    try:
        detail = fn()
        err = None
    except AssertionError as exc:
        detail, err = f"FAILED: {exc!r}", exc
    elapsed = time.perf_counter() - t0
    if err is None and elapsed >= limit:
        err = AssertionError(f"runtime {elapsed:.1f} s exceeds {limit:g} s")
        detail += f" (too slow: {elapsed:.1f} s)"
    ok = err is None
    first, *rest = detail.split("\n")
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} ({elapsed:.2f} s / {limit:g} s) {first}"
    RESULTS[num] = (ok, "\n".join([line, *("    " + r for r in rest)]))
    if err is not None:
        raise err
    return line


@pytest.mark.parametrize(
    "num, title, fn, limit",
    [
        pytest.param(*c, id=f"criterion_{c[0]}", marks=[pytest.mark.slow] if c[3] >= 300 else [])
        for c in CRITERIA
    ],
)
def test_criterion(num, title, fn, limit):
    run_criterion(num, title, fn, limit)


if __name__ == "__main__":
    failed = 0
    for crit in CRITERIA:
        try:
            run_criterion(*crit)
        except AssertionError:
            failed += 1
        print(RESULTS[crit[0]][1], flush=True)
    sys.exit(1 if failed else 0)
