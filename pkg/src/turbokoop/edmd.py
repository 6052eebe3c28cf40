"""Extended dynamic mode decomposition with inputs.

The model is ``z[l+1] = A z[l] + B u[l]``, ``y[l] = C z[l]`` where
``z = psi(x)`` is the lifted, z-scored state.  ``C`` is the selector
``[I | 0]`` because the state leads every lifted vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .dictionary import DictionarySpec, lift, lift_batch
from .errors import DegenerateChannelError, DivergenceError, InvalidInputError, ShapeError
from .linalg import as_matrix, solve_stacked_regression
from .timeseries import TimeSeriesDataset

MODEL_TYPE = "koopman-edmd"


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel z-score statistics (sample standard deviation, ddof=1).

    ``input_mean``/``input_std`` are ``None`` when inputs are used as-is.
    """

    state_mean: np.ndarray
    state_std: np.ndarray
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None

    def __post_init__(self):
        if np.any(~(np.asarray(self.state_std) > 0)):
            raise DegenerateChannelError("state standard deviations must be positive")
        if self.input_std is not None and np.any(~(np.asarray(self.input_std) > 0)):
            raise DegenerateChannelError("input standard deviations must be positive")

    @classmethod
    def identity(cls, n_states: int) -> "NormalizationStats":
        return cls(np.zeros(n_states), np.ones(n_states))

    @property
    def normalizes_inputs(self) -> bool:
        return self.input_mean is not None

    def normalize_states(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return (x - self.state_mean) / self.state_std
        return (x - self.state_mean[:, None]) / self.state_std[:, None]

    def denormalize_states(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return x * self.state_std + self.state_mean
        return x * self.state_std[:, None] + self.state_mean[:, None]

    def normalize_inputs(self, u):
        u = np.asarray(u, dtype=np.float64)
        if not self.normalizes_inputs:
            return u
        if u.ndim == 1:
            return (u - self.input_mean) / self.input_std
        return (u - self.input_mean[:, None]) / self.input_std[:, None]


@dataclass(frozen=True)
class SnapshotMatrices:
    X: np.ndarray
    Y: np.ndarray
    U: np.ndarray
    stats: NormalizationStats
    state_names: tuple[str, ...] = ()
    input_names: tuple[str, ...] = ()
    sample_rate: float = 1.0

    def __post_init__(self):
        if self.X.shape != self.Y.shape:
            raise ShapeError(f"X {self.X.shape} and Y {self.Y.shape} differ")
        if self.U.shape[1] != self.X.shape[1]:
            raise ShapeError(f"U has {self.U.shape[1]} columns, X has {self.X.shape[1]}")


def _zscore_stats(block: np.ndarray, names, kind: str):
    mean = block.mean(axis=1)
    std = block.std(axis=1, ddof=1)
    for name, s in zip(names, std):
        if not s > 0:
            raise DegenerateChannelError(f"{kind} channel {name!r} is constant")
    return mean, std


def build_snapshots(
    datasets,
    state_names,
    input_names,
    *,
    normalize_states: bool = True,
    normalize_inputs: bool = False,
) -> SnapshotMatrices:
    """Form ``X``, ``Y``, ``U`` from one or more records.

    Statistics come from the concatenation of all records.  Each record
    contributes ``length - 1`` snapshot pairs; no pair spans two records.
    """
    if isinstance(datasets, TimeSeriesDataset):
        datasets = [datasets]
    if not datasets:
        raise InvalidInputError("need at least one dataset")
    state_names = tuple(state_names)
    input_names = tuple(input_names)
    states, inputs = [], []
    for ds in datasets:
        ds.require(state_names + input_names)
        states.append(ds.matrix(state_names))
        inputs.append(ds.matrix(input_names))
    rates = {ds.sample_rate for ds in datasets}
    if len(rates) != 1:
        raise InvalidInputError(f"datasets have different sample rates {sorted(rates)}")

    all_states = np.hstack(states)
    if normalize_states:
        mean, std = _zscore_stats(all_states, state_names, "state")
    else:
        mean, std = np.zeros(len(state_names)), np.ones(len(state_names))
    in_mean = in_std = None
    if normalize_inputs and input_names:
        in_mean, in_std = _zscore_stats(np.hstack(inputs), input_names, "input")
    stats = NormalizationStats(mean, std, in_mean, in_std)

    xs, ys, us = [], [], []
    for s, u in zip(states, inputs):
        sn = stats.normalize_states(s)
        xs.append(sn[:, :-1])
        ys.append(sn[:, 1:])
        us.append(stats.normalize_inputs(u)[:, :-1])
    return SnapshotMatrices(
        X=np.hstack(xs),
        Y=np.hstack(ys),
        U=np.hstack(us),
        stats=stats,
        state_names=state_names,
        input_names=input_names,
        sample_rate=rates.pop(),
    )


@dataclass(frozen=True)
class KoopmanModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dictionary: DictionarySpec
    stats: NormalizationStats
    state_names: tuple[str, ...]
    input_names: tuple[str, ...]
    sample_rate: float

    def __post_init__(self):
        nl = self.A.shape[0]
        if self.A.shape != (nl, nl) or self.B.shape[0] != nl or self.C.shape[1] != nl:
            raise ShapeError(
                f"inconsistent model dimensions A{self.A.shape} B{self.B.shape} C{self.C.shape}"
            )
        if nl != self.dictionary.lifted_dim:
            raise ShapeError("A does not match the dictionary's lifted dimension")

    @property
    def n_states(self) -> int:
        return self.C.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def lifted_dim(self) -> int:
        return self.A.shape[0]

    def predict_step(self, z, u) -> np.ndarray:
        return predict_step(self, z, u)

    def simulate(self, x0, inputs, *, relift: bool = False) -> np.ndarray:
        return simulate(self, x0, inputs, relift=relift)


def state_selector(n_states: int, lifted_dim: int) -> np.ndarray:
    C = np.zeros((n_states, lifted_dim))
    C[:, :n_states] = np.eye(n_states)
    return C


def fit(
    snapshots: SnapshotMatrices,
    dictionary: DictionarySpec,
    rank_tolerance: float = 0.0,
    ridge: float = 0.0,
) -> KoopmanModel:
    """Lift the snapshots and regress ``[A, B]``."""
    return fit_detailed(snapshots, dictionary, rank_tolerance, ridge)[0]


def fit_detailed(snapshots, dictionary, rank_tolerance=0.0, ridge=0.0):
    """Like :func:`fit` but also return the :class:`LeastSquaresSolution`."""
    n = snapshots.X.shape[0]
    if dictionary.state_dim != n:
        raise ShapeError(f"dictionary expects {dictionary.state_dim} states, snapshots have {n}")
    x_lift = lift_batch(dictionary, snapshots.X)
    y_lift = lift_batch(dictionary, snapshots.Y)
    sol = solve_stacked_regression(y_lift, x_lift, snapshots.U, rank_tolerance, ridge)
    model = KoopmanModel(
        A=sol.A.copy(),
        B=sol.B.copy(),
        C=state_selector(n, dictionary.lifted_dim),
        dictionary=dictionary,
        stats=snapshots.stats,
        state_names=tuple(snapshots.state_names) or tuple(f"x{i}" for i in range(n)),
        input_names=tuple(snapshots.input_names)
        or tuple(f"u{i}" for i in range(snapshots.U.shape[0])),
        sample_rate=snapshots.sample_rate,
    )
    return model, sol


def one_step_residual(model: KoopmanModel, snapshots: SnapshotMatrices) -> float:
    """Frobenius norm of ``C (A X_lift + B U) - Y`` in normalized units."""
    x_lift = lift_batch(model.dictionary, snapshots.X)
    pred = model.C @ (model.A @ x_lift + model.B @ snapshots.U)
    return float(np.linalg.norm(pred - snapshots.Y))


def predict_step(model: KoopmanModel, z, u) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if z.shape != (model.lifted_dim,) or u.shape != (model.n_inputs,):
        raise ShapeError(
            f"expected z of length {model.lifted_dim} and u of length {model.n_inputs}, "
            f"got {z.shape} and {u.shape}"
        )
    return model.A @ z + model.B @ u


def simulate(model: KoopmanModel, x0, inputs, *, relift: bool = False) -> np.ndarray:
    """Roll the lifted model forward from a physical initial state.

    ``x0`` is lifted once; the lifted state then propagates linearly and is
    never re-lifted (``relift=True`` re-lifts the read-out state every step,
    a diagnostic mode).  Column ``l`` of the result is the denormalized
    output at step ``l``; column 0 reproduces ``x0``.  The last input column
    is not needed to produce ``T`` outputs but is accepted so that inputs and
    outputs share a time axis.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (model.n_states,):
        raise ShapeError(f"x0 must have length {model.n_states}, got {x0.shape}")
    u = as_matrix(inputs, "inputs")
    if u.shape[0] != model.n_inputs or u.shape[1] < 1:
        raise ShapeError(f"inputs must be ({model.n_inputs}, T>=1), got {u.shape}")
    u = model.stats.normalize_inputs(u)
    T = u.shape[1]

    A, B, C = model.A, model.B, model.C
    bu = (B @ u).T  # per-step input contribution, shape (T, N_l)
    out = np.empty((model.n_states, T))
    z = lift(model.dictionary, model.stats.normalize_states(x0))
    out[:, 0] = C @ z
    # overflow is reported as DivergenceError rather than as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(T - 1):
            z = A @ z + bu[l]
            y = C @ z
            if not np.all(np.isfinite(z)):
                raise DivergenceError(f"rollout became non-finite at step {l + 1}", step=l + 1)
            if relift:
                z = lift(model.dictionary, y)
            out[:, l + 1] = y
    return model.stats.denormalize_states(out)


def save_model(model: KoopmanModel, path) -> None:
    arrays = {
        "A": model.A,
        "B": model.B,
        "C": model.C,
        "centers": model.dictionary.centers,
        "state_mean": model.stats.state_mean,
        "state_std": model.stats.state_std,
    }
    if model.stats.normalizes_inputs:
        arrays["input_mean"] = model.stats.input_mean
        arrays["input_std"] = model.stats.input_std
    meta = {
        "dictionary": model.dictionary.to_dict(),
        "state_names": list(model.state_names),
        "input_names": list(model.input_names),
        "sample_rate": model.sample_rate,
        "dims": {"n_states": model.n_states, "n_inputs": model.n_inputs,
                 "lifted_dim": model.lifted_dim},
    }
    write_container(path, MODEL_TYPE, meta, arrays)


def load_model(path) -> KoopmanModel:
    meta, arr = read_container(path, MODEL_TYPE)
    stats = NormalizationStats(
        arr["state_mean"], arr["state_std"], arr.get("input_mean"), arr.get("input_std")
    )
    centers = arr["centers"]
    spec = DictionarySpec.from_dict(meta["dictionary"], centers.reshape(-1, meta["dictionary"]["state_dim"]))
    return KoopmanModel(
        A=arr["A"],
        B=arr["B"],
        C=arr["C"],
        dictionary=spec,
        stats=stats,
        state_names=tuple(meta["state_names"]),
        input_names=tuple(meta["input_names"]),
        sample_rate=float(meta["sample_rate"]),
    )
