"""Single-hidden-layer NARX network trained with Levenberg-Marquardt.

One network predicts one output channel from a first-order regressor::

    y[l] = h(y[l - feedback_delay], u[l - input_delay])

with a tanh hidden layer and a linear output.  Training is series-parallel
(measured outputs are fed back); :func:`simulate_closed_loop` feeds the
network's own predictions back instead.  All regressor channels and the
target are z-scored with statistics of the training data.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .container import read_container, write_container
from .errors import (
    DivergenceError,
    InsufficientDataError,
    InvalidInputError,
    ShapeError,
    TrainingDivergedError,
)
from .timeseries import TimeSeriesDataset

log = logging.getLogger(__name__)

MODEL_TYPE = "narx"


def seconds_to_steps(seconds: float, sample_rate: float) -> int:
    steps = seconds * sample_rate
    k = int(round(steps))
    if abs(steps - k) > 1e-6:
        raise InvalidInputError(
            f"delay {seconds} s is not a whole number of samples at {sample_rate} Hz"
        )
    return k


@dataclass(frozen=True)
class NarxConfig:
    input_delay_steps: int
    feedback_delay_steps: int = 1
    hidden_neurons: int = 10
    l2_penalty: float = 1e-4
    max_epochs: int = 100
    seed: int = 0
    lm_initial_damping: float = 1e-3
    lm_damping_factor: float = 10.0
    lm_max_damping: float = 1e10
    min_gradient: float = 1e-10

    def __post_init__(self):
        if self.hidden_neurons < 1:
            raise InvalidInputError("hidden_neurons must be >= 1")
        if self.feedback_delay_steps < 1:
            raise InvalidInputError("feedback_delay_steps must be >= 1")
        if self.input_delay_steps < 0:
            raise InvalidInputError("input_delay_steps must be >= 0")
        if self.l2_penalty < 0 or self.max_epochs < 0:
            raise InvalidInputError("l2_penalty and max_epochs must be >= 0")
        if not self.lm_initial_damping > 0 or not self.lm_damping_factor > 1:
            raise InvalidInputError("need lm_initial_damping > 0 and lm_damping_factor > 1")

    @classmethod
    def from_seconds(cls, input_delay_s, feedback_delay_s, sample_rate, **kw) -> "NarxConfig":
        return cls(
            input_delay_steps=seconds_to_steps(input_delay_s, sample_rate),
            feedback_delay_steps=seconds_to_steps(feedback_delay_s, sample_rate),
            **kw,
        )

    @property
    def lookback(self) -> int:
        return max(self.input_delay_steps, self.feedback_delay_steps)


@dataclass(frozen=True)
class RegressorStats:
    output_mean: float
    output_std: float
    input_mean: np.ndarray
    input_std: np.ndarray


@dataclass
class NarxModel:
    config: NarxConfig
    input_weights: np.ndarray  # (hidden, regressor_dim)
    input_bias: np.ndarray  # (hidden,)
    output_weights: np.ndarray  # (hidden,)
    output_bias: float
    output_name: str
    input_names: tuple[str, ...]
    stats: RegressorStats
    loss_history: list[float] = field(default_factory=list)

    @property
    def regressor_dim(self) -> int:
        return 1 + len(self.input_names)

    @property
    def n_params(self) -> int:
        h, d = self.input_weights.shape
        return h * d + 2 * h + 1

    def params(self) -> np.ndarray:
        return np.concatenate(
            [self.input_weights.ravel(), self.input_bias, self.output_weights, [self.output_bias]]
        )

    def with_params(self, theta) -> "NarxModel":
        h, d = self.input_weights.shape
        theta = np.asarray(theta, dtype=np.float64)
        k = h * d
        return replace(
            self,
            input_weights=theta[:k].reshape(h, d).copy(),
            input_bias=theta[k : k + h].copy(),
            output_weights=theta[k + h : k + 2 * h].copy(),
            output_bias=float(theta[-1]),
            loss_history=list(self.loss_history),
        )

    def denormalize(self, y):
        return np.asarray(y) * self.stats.output_std + self.stats.output_mean


def regressor_stats(datasets, output_name, input_names) -> RegressorStats:
    y = np.concatenate([ds.channels[output_name] for ds in datasets])
    u = np.hstack([ds.matrix(list(input_names)) for ds in datasets])
    y_std = float(np.std(y, ddof=1))
    u_std = np.std(u, axis=1, ddof=1) if len(input_names) else np.zeros(0)
    # a constant channel carries no information but is harmless once centred
    u_std = np.where(u_std > 0, u_std, 1.0)
    return RegressorStats(
        output_mean=float(np.mean(y)),
        output_std=y_std if y_std > 0 else 1.0,
        input_mean=u.mean(axis=1) if len(input_names) else np.zeros(0),
        input_std=u_std,
    )


def build_regressors(
    dataset: TimeSeriesDataset,
    config: NarxConfig,
    output_name: str,
    input_names,
    stats: RegressorStats | None = None,
):
    """Return ``(R, target)`` for every index ``l >= lookback``.

    Row ``i`` of ``R`` is ``[y[l - fb], u_1[l - td], ..., u_m[l - td]]``
    (normalized) and ``target[i]`` is the normalized ``y[l]``.
    """
    input_names = list(input_names)
    dataset.require([output_name] + input_names)
    if stats is None:
        stats = regressor_stats([dataset], output_name, input_names)
    L = dataset.length
    start = config.lookback
    if L <= start:
        raise InsufficientDataError(
            f"{dataset.name}: {L} samples cannot cover a delay of {start} steps"
        )
    y = (dataset.channels[output_name] - stats.output_mean) / stats.output_std
    u = (dataset.matrix(input_names) - stats.input_mean[:, None]) / stats.input_std[:, None]
    idx = np.arange(start, L)
    R = np.empty((idx.size, 1 + len(input_names)))
    R[:, 0] = y[idx - config.feedback_delay_steps]
    R[:, 1:] = u[:, idx - config.input_delay_steps].T
    return R, y[idx]


def _hidden(model: NarxModel, R):
    return np.tanh(R @ model.input_weights.T + model.input_bias)


def forward_batch(model: NarxModel, R) -> np.ndarray:
    """Normalized outputs for a batch of regressor rows."""
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    if R.shape[1] != model.regressor_dim:
        raise ShapeError(f"regressor must have {model.regressor_dim} columns, got {R.shape[1]}")
    return _hidden(model, R) @ model.output_weights + model.output_bias


def forward(model: NarxModel, regressor, *, denormalize: bool = False) -> float:
    r = np.asarray(regressor, dtype=np.float64)
    if r.shape != (model.regressor_dim,):
        raise ShapeError(f"regressor must have length {model.regressor_dim}, got {r.shape}")
    out = float(forward_batch(model, r[None, :])[0])
    return float(model.denormalize(out)) if denormalize else out


def jacobian(model: NarxModel, R) -> np.ndarray:
    """Derivative of each network output w.r.t. the flat parameter vector.

    Columns follow :meth:`NarxModel.params`: input weights (row-major),
    input bias, output weights, output bias.
    """
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    h = _hidden(model, R)
    g = (1.0 - h * h) * model.output_weights  # (N, hidden)
    n, d = R.shape
    hid = model.input_weights.shape[0]
    J = np.empty((n, model.n_params))
    J[:, : hid * d] = (g[:, :, None] * R[:, None, :]).reshape(n, hid * d)
    J[:, hid * d : hid * d + hid] = g
    J[:, hid * d + hid : hid * d + 2 * hid] = h
    J[:, -1] = 1.0
    return J


def training_loss(model: NarxModel, R, target) -> float:
    """Mean squared one-step error plus ``l2_penalty * ||theta||^2``."""
    e = forward_batch(model, R) - target
    theta = model.params()
    return float(np.mean(e * e) + model.config.l2_penalty * (theta @ theta))


def init_model(config: NarxConfig, output_name, input_names, stats) -> NarxModel:
    """Uniform initialisation in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` per layer."""
    rng = np.random.default_rng(config.seed)
    d = 1 + len(input_names)
    h = config.hidden_neurons
    a1 = 1.0 / math.sqrt(d)
    a2 = 1.0 / math.sqrt(h)
    return NarxModel(
        config=config,
        input_weights=rng.uniform(-a1, a1, size=(h, d)),
        input_bias=rng.uniform(-a1, a1, size=h),
        output_weights=rng.uniform(-a2, a2, size=h),
        output_bias=float(rng.uniform(-a2, a2)),
        output_name=output_name,
        input_names=tuple(input_names),
        stats=stats,
    )


def _lm(model: NarxModel, R, target) -> NarxModel:
    cfg = model.config
    lam = cfg.l2_penalty
    N = R.shape[0]
    theta = model.params()
    loss = training_loss(model, R, target)
    if not math.isfinite(loss):
        raise TrainingDivergedError("initial training loss is not finite")
    history = [loss]
    mu = cfg.lm_initial_damping
    eye = np.eye(theta.size)
    for epoch in range(cfg.max_epochs):
        # residuals scaled so that ||r||^2 is exactly the training loss
        J = jacobian(model, R) / math.sqrt(N)
        r = (forward_batch(model, R) - target) / math.sqrt(N)
        grad = J.T @ r + lam * theta
        if np.linalg.norm(grad) < cfg.min_gradient:
            log.debug("epoch %d: gradient below tolerance", epoch)
            break
        H = J.T @ J + lam * eye
        accepted = False
        while mu <= cfg.lm_max_damping:
            try:
                step = np.linalg.solve(H + mu * eye, -grad)
            except np.linalg.LinAlgError:
                mu *= cfg.lm_damping_factor
                continue
            trial = model.with_params(theta + step)
            new_loss = training_loss(trial, R, target)
            if math.isfinite(new_loss) and new_loss < loss:
                model, theta, loss = trial, theta + step, new_loss
                mu /= cfg.lm_damping_factor
                accepted = True
                break
            mu *= cfg.lm_damping_factor
        if not accepted:
            log.debug("epoch %d: damping exceeded %g", epoch, cfg.lm_max_damping)
            break
        history.append(loss)
    if not math.isfinite(loss):
        raise TrainingDivergedError("training loss became non-finite")
    model.loss_history = history
    return model


def train(datasets, config: NarxConfig, output_name: str, input_names) -> NarxModel:
    """Fit one NARX network on the series-parallel one-step objective."""
    if isinstance(datasets, TimeSeriesDataset):
        datasets = [datasets]
    input_names = list(input_names)
    stats = regressor_stats(datasets, output_name, input_names)
    blocks = [build_regressors(ds, config, output_name, input_names, stats) for ds in datasets]
    R = np.vstack([b[0] for b in blocks])
    target = np.concatenate([b[1] for b in blocks])
    if R.shape[0] < config.hidden_neurons * R.shape[1]:
        warnings.warn(
            f"only {R.shape[0]} training rows for {config.hidden_neurons} x {R.shape[1]} weights",
            stacklevel=2,
        )
    model = init_model(config, output_name, input_names, stats)
    model.loss_history = [training_loss(model, R, target)]
    if config.max_epochs == 0:
        return model
    return _lm(model, R, target)


def simulate_closed_loop(model: NarxModel, initial_history, inputs, steps: int) -> np.ndarray:
    """Free-run the network, feeding predictions back as delayed outputs.

    ``initial_history`` holds the physical outputs for the ``p`` samples that
    precede the first prediction; ``inputs`` (physical, ``m x (p + steps)``)
    is indexed on the same time axis, so prediction ``k`` lands at time
    ``p + k``.  Requires ``p >= lookback``.
    """
    cfg = model.config
    hist = np.asarray(initial_history, dtype=np.float64).ravel()
    u = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    p = hist.size
    if p < cfg.lookback:
        raise InsufficientDataError(f"need {cfg.lookback} history samples, got {p}")
    if u.shape[0] != len(model.input_names) or u.shape[1] < p + steps:
        raise ShapeError(
            f"inputs must be ({len(model.input_names)}, >= {p + steps}), got {u.shape}"
        )
    st = model.stats
    un = (u - st.input_mean[:, None]) / st.input_std[:, None]
    W = model.input_weights
    # input part of the hidden pre-activation for every prediction time
    pre = (W[:, 1:] @ un[:, p - cfg.input_delay_steps : p - cfg.input_delay_steps + steps]).T
    pre += model.input_bias
    w_fb = W[:, 0]
    y = np.empty(p + steps)
    y[:p] = (hist - st.output_mean) / st.output_std
    for k in range(steps):
        a = pre[k] + w_fb * y[p + k - cfg.feedback_delay_steps]
        val = float(np.tanh(a) @ model.output_weights + model.output_bias)
        if not math.isfinite(val):
            raise DivergenceError(f"closed-loop rollout non-finite at step {k}", step=k)
        y[p + k] = val
    return model.denormalize(y[p:])


def simulate_dataset(model: NarxModel, dataset: TimeSeriesDataset) -> tuple[int, np.ndarray]:
    """Closed-loop prediction over a whole record.

    The first ``lookback`` measured outputs seed the history.  Returns the
    index of the first predicted sample and the predictions from there on.
    """
    p = model.config.lookback
    dataset.require([model.output_name, *model.input_names])
    if dataset.length <= p:
        raise InsufficientDataError(f"{dataset.name} is shorter than the NARX lookback")
    y = dataset.channels[model.output_name]
    u = dataset.matrix(list(model.input_names))
    return p, simulate_closed_loop(model, y[:p], u, dataset.length - p)


def neuron_sweep(train_sets, val_set, base: NarxConfig, output_name, input_names,
                 counts=range(4, 21, 2)):
    """Closed-loop validation RMSE for each hidden-layer size."""
    out = []
    for h in counts:
        m = train(train_sets, replace(base, hidden_neurons=h), output_name, input_names)
        p, pred = simulate_dataset(m, val_set)
        meas = val_set.channels[output_name][p:]
        out.append((h, float(np.sqrt(np.mean((pred - meas) ** 2)))))
    return out


def save_narx(model: NarxModel, path) -> None:
    st = model.stats
    meta = {
        "config": asdict(model.config),
        "output_name": model.output_name,
        "input_names": list(model.input_names),
        "output_mean": st.output_mean,
        "output_std": st.output_std,
        "output_bias": model.output_bias,
        "loss_history": model.loss_history,
    }
    arrays = {
        "input_weights": model.input_weights,
        "input_bias": model.input_bias,
        "output_weights": model.output_weights,
        "input_mean": st.input_mean,
        "input_std": st.input_std,
    }
    write_container(path, MODEL_TYPE, meta, arrays)


def load_narx(path) -> NarxModel:
    meta, arr = read_container(path, MODEL_TYPE)
    stats = RegressorStats(
        output_mean=float(meta["output_mean"]),
        output_std=float(meta["output_std"]),
        input_mean=arr["input_mean"],
        input_std=arr["input_std"],
    )
    return NarxModel(
        config=NarxConfig(**meta["config"]),
        input_weights=arr["input_weights"],
        input_bias=arr["input_bias"],
        output_weights=arr["output_weights"],
        output_bias=float(meta["output_bias"]),
        output_name=meta["output_name"],
        input_names=tuple(meta["input_names"]),
        stats=stats,
        loss_history=[float(v) for v in meta["loss_history"]],
    )
