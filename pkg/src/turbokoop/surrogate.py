"""Mean-value turbine surrogate used to generate identification data.

States are turbine speed ``N_t`` (rpm) and the *measured* turbine outlet
temperature ``T_tur_out`` (K).  Nine exogenous inputs drive them.

Speed follows the rotor torque balance::

    J_t domega/dt = P_t/omega - P_c/omega - M_fric(omega),   omega = N_t 2pi/60

with ``M_fric = k1 omega + k2 omega**2`` (SI units, omega in rad/s).  The gas
temperature leaving the turbine follows the steady energy balance::

    W c_p T_in = W c_p T_target + P_t - Q_housing

with ``Q_housing = h_loss (T_oil - T_in)`` the heat added to the gas
(negative: the hot gas loses heat to the oil-cooled housing).  The
thermocouple reading lags ``T_target`` by a first-order filter with a 2 s
time constant.

The maps are smooth analytic stand-ins, not calibrated turbomachinery maps:

* mass flow ``W = w_ref (P_in/P_ref) sqrt(T_ref/T_in) A(u_vgt) Psi(PR)
  (1 - egr_split u_egrv/100) + fuel flow``, with ``A(u) = 1 - area_slope u/100``,
  ``Psi(PR) = sqrt(1 - PR**-2)`` and fuel flow ``m_f N_e n_cyl / 120``;
* power ``P_t = eta W c_p T_in (1 - PR**-((gamma-1)/gamma))``;
* efficiency ``eta = eta_max (1 - vgt_curv (u/100 - vgt_opt)**2)
  (1 - exp(-pr_rate (PR - 1))) (1 - bsr_curv (BSR - bsr_opt)**2)``, where
  ``BSR`` is the blade speed ratio ``omega r_tip / C_s``;
* compressor load ``P_c = k_c omega**3 T_comp_out / T_comp_ref``.

``T_tur_in``, ``P_tur_in`` and ``T_comp_out`` are generated as affine
functions of the engine-side inputs plus their own excitation (see
:func:`coupled_channels`), so ``N_e``, ``m_f``, ``u_egrv`` and
``T_coolant`` all act on the turbine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidInputError, SingularityError
from .timeseries import INPUT, STATE, TimeSeriesDataset

STATE_CHANNELS = ("N_t", "T_tur_out")
INPUT_CHANNELS = (
    "u_vgt",
    "u_egrv",
    "T_tur_in",
    "P_tur_in",
    "N_e",
    "m_f",
    "T_oil",
    "T_coolant",
    "T_comp_out",
)
UNITS = {
    "N_t": "rpm",
    "T_tur_out": "K",
    "u_vgt": "%",
    "u_egrv": "%",
    "T_tur_in": "K",
    "P_tur_in": "kPa",
    "N_e": "rpm",
    "m_f": "mg",
    "T_oil": "K",
    "T_coolant": "K",
    "T_comp_out": "K",
}
PRIMARY = ("u_vgt", "u_egrv", "N_e", "m_f", "T_oil", "T_coolant")
COUPLED = ("T_tur_in", "P_tur_in", "T_comp_out")

RPM_TO_RAD = 2.0 * math.pi / 60.0

_IDX = {name: i for i, name in enumerate(INPUT_CHANNELS)}


def _default_ranges():
    return {
        "u_vgt": (10.0, 90.0),
        "u_egrv": (0.0, 50.0),
        "T_tur_in": (550.0, 950.0),
        "P_tur_in": (115.0, 350.0),
        "N_e": (800.0, 2100.0),
        "m_f": (20.0, 220.0),
        "T_oil": (340.0, 390.0),
        "T_coolant": (345.0, 375.0),
        "T_comp_out": (300.0, 460.0),
    }


@dataclass(frozen=True)
class PlantParams:
    J_t: float = 2.5e-4  # kg m^2
    c_p: float = 1150.0  # J/(kg K)
    gamma: float = 1.35
    k1: float = 2.0e-6  # N m s
    k2: float = 1.0e-10  # N m s^2
    h_loss: float = 15.0  # W/K
    p_amb: float = 101.325  # kPa
    # turbine flow map
    w_ref: float = 0.30  # kg/s
    p_ref: float = 250.0  # kPa
    t_ref: float = 800.0  # K
    area_slope: float = 0.5
    egr_split: float = 0.6
    n_cyl: int = 6
    # turbine efficiency map
    eta_max: float = 0.74
    vgt_opt: float = 0.55
    vgt_curv: float = 0.8
    pr_rate: float = 1.2
    r_tip: float = 0.045  # m
    bsr_opt: float = 0.65
    bsr_curv: float = 1.2
    # compressor load
    k_c: float = 1.7e-8
    t_comp_ref: float = 350.0  # K
    # sensor and limits
    tau_sensor: float = 2.0  # s
    rated_speed: float = 150_000.0  # rpm
    speed_floor_fraction: float = 0.01
    ranges: dict = field(default_factory=_default_ranges)

    def __post_init__(self):
        if not (self.J_t > 0 and self.c_p > 0 and self.tau_sensor > 0):
            raise InvalidInputError("J_t, c_p and tau_sensor must be positive")
        for name, (lo, hi) in self.ranges.items():
            if not lo < hi:
                raise InvalidInputError(f"range for {name} is not ordered")

    @property
    def speed_floor(self) -> float:
        return self.rated_speed * self.speed_floor_fraction


# ---------------------------------------------------------------------------
# physics


@dataclass(frozen=True)
class _Gas:
    """Speed-independent quantities for one set of inputs."""

    W: float
    PR: float
    expansion: float  # 1 - PR**-((gamma-1)/gamma)
    eta_static: float  # efficiency without the blade-speed factor
    c_s: float  # isentropic spouting velocity, m/s
    T_in: float
    Q: float  # heat added to the gas, W
    comp_scale: float


def _gas(p: PlantParams, u) -> _Gas:
    u_vgt, u_egrv, T_in, P_in, N_e, m_f, T_oil, _T_cool, T_comp = (float(v) for v in u)
    PR = P_in / p.p_amb
    if PR <= 1.0 or T_in <= 0:
        raise InvalidInputError(f"need P_tur_in > ambient and T_tur_in > 0 (PR={PR})")
    area = 1.0 - p.area_slope * u_vgt / 100.0
    psi = math.sqrt(1.0 - PR**-2)
    egr = 1.0 - p.egr_split * u_egrv / 100.0
    fuel = m_f * 1e-6 * N_e / 120.0 * p.n_cyl
    W = p.w_ref * (P_in / p.p_ref) * math.sqrt(p.t_ref / T_in) * area * psi * egr + fuel
    expansion = 1.0 - PR ** (-(p.gamma - 1.0) / p.gamma)
    eta = (
        p.eta_max
        * (1.0 - p.vgt_curv * (u_vgt / 100.0 - p.vgt_opt) ** 2)
        * (1.0 - math.exp(-p.pr_rate * (PR - 1.0)))
    )
    c_s = math.sqrt(2.0 * p.c_p * T_in * expansion)
    return _Gas(
        W=W,
        PR=PR,
        expansion=expansion,
        eta_static=eta,
        c_s=c_s,
        T_in=T_in,
        Q=p.h_loss * (T_oil - T_in),
        comp_scale=T_comp / p.t_comp_ref,
    )


def _powers(p: PlantParams, g: _Gas, omega: float):
    bsr = omega * p.r_tip / g.c_s
    eta = g.eta_static * (1.0 - p.bsr_curv * (bsr - p.bsr_opt) ** 2)
    P_t = eta * g.W * p.c_p * g.T_in * g.expansion
    P_c = p.k_c * omega**3 * g.comp_scale
    return P_t, P_c, eta


def turbine_quantities(params: PlantParams, N_t: float, inputs) -> dict:
    """Every intermediate quantity of the model at one operating point (SI)."""
    g = _gas(params, inputs)
    omega = N_t * RPM_TO_RAD
    P_t, P_c, eta = _powers(params, g, omega)
    M_fric = params.k1 * omega + params.k2 * omega**2
    T_target = g.T_in - (P_t - g.Q) / (g.W * params.c_p)
    return {
        "W": g.W,
        "PR": g.PR,
        "eta": eta,
        "omega": omega,
        "P_t": P_t,
        "P_c": P_c,
        "M_fric": M_fric,
        "torque": P_t / omega,
        "Q_housing": g.Q,
        "T_in": g.T_in,
        "T_target": T_target,
    }


def _check_floor(p: PlantParams, N_t: float, t=None):
    if not N_t > p.speed_floor:
        where = "" if t is None else f" at t={t:.3f} s"
        raise SingularityError(
            f"turbine speed {N_t:.1f} rpm fell below the floor {p.speed_floor:.1f} rpm{where}",
            time_s=t,
        )


def _deriv(p: PlantParams, g: _Gas, N_t: float, T_out: float):
    omega = N_t * RPM_TO_RAD
    P_t, P_c, _ = _powers(p, g, omega)
    M_fric = p.k1 * omega + p.k2 * omega * omega
    domega = ((P_t - P_c) / omega - M_fric) / p.J_t
    T_target = g.T_in - (P_t - g.Q) / (g.W * p.c_p)
    return domega / RPM_TO_RAD, (T_target - T_out) / p.tau_sensor


def plant_derivatives(params: PlantParams, state, inputs) -> np.ndarray:
    """Time derivative of ``[N_t (rpm), T_tur_out (K)]`` in rpm/s and K/s.

    ``inputs`` follows :data:`INPUT_CHANNELS` order.
    """
    N_t, T_out = (float(v) for v in state)
    _check_floor(params, N_t)
    return np.array(_deriv(params, _gas(params, inputs), N_t, T_out))


def equilibrium(params: PlantParams, inputs) -> np.ndarray:
    """Steady state for constant inputs, found by bracketing the speed root."""
    g = _gas(params, inputs)

    def f(N):
        return _deriv(params, g, N, 0.0)[0]

    lo = params.speed_floor * 1.001
    hi = params.rated_speed * 4.0
    if f(lo) <= 0 or f(hi) >= 0:
        raise SingularityError("no equilibrium above the speed floor for these inputs")
    N = brentq(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
    T = turbine_quantities(params, N, inputs)["T_target"]
    return np.array([N, T])


# ---------------------------------------------------------------------------
# integration


def simulate_inputs(params: PlantParams, inputs, sample_rate: float, x0=None, substeps: int = 4):
    """Integrate with fixed-step RK4, inputs held constant over each sample.

    ``inputs`` is ``9 x L``; returns the ``2 x L`` state trajectory sampled
    at the input instants.  ``x0`` defaults to the equilibrium of the first
    input sample.
    """
    u = np.asarray(inputs, dtype=np.float64)
    if u.shape[0] != len(INPUT_CHANNELS) or u.shape[1] < 2:
        raise InvalidInputError(f"inputs must be (9, L>=2), got {u.shape}")
    if substeps < 1:
        raise InvalidInputError("substeps must be >= 1")
    L = u.shape[1]
    x = equilibrium(params, u[:, 0]) if x0 is None else np.asarray(x0, dtype=np.float64)
    N, T = float(x[0]), float(x[1])
    _check_floor(params, N, 0.0)
    h = 1.0 / (sample_rate * substeps)
    out = np.empty((2, L))
    out[:, 0] = N, T
    for k in range(L - 1):
        g = _gas(params, u[:, k])
        for _ in range(substeps):
            a1, b1 = _deriv(params, g, N, T)
            a2, b2 = _deriv(params, g, N + 0.5 * h * a1, T + 0.5 * h * b1)
            a3, b3 = _deriv(params, g, N + 0.5 * h * a2, T + 0.5 * h * b2)
            a4, b4 = _deriv(params, g, N + h * a3, T + h * b3)
            N += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            T += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if not (math.isfinite(N) and math.isfinite(T)):
            raise SingularityError(f"state became non-finite at t={(k + 1) / sample_rate:.3f} s",
                                   time_s=(k + 1) / sample_rate)
        _check_floor(params, N, (k + 1) / sample_rate)
        out[:, k + 1] = N, T
    return out


# ---------------------------------------------------------------------------
# excitation


SIGNAL_KINDS = ("constant", "steps", "chirp", "filtered-noise", "duty-cycle-profile")


@dataclass(frozen=True)
class SignalSpec:
    """One channel's excitation.

    For primary channels ``low``/``high`` are absolute values; for the
    coupled channels they bound an additive deviation.  ``levels`` (fractions
    of ``[low, high]``) drives the ``duty-cycle-profile`` staircase; left
    empty, levels are drawn at random.
    """

    kind: str
    low: float
    high: float
    hold_min: float = 1.0  # s
    hold_max: float = 5.0  # s
    f_start: float = 0.01  # Hz
    f_end: float = 1.0  # Hz
    time_constant: float = 1.0  # s
    ramp: float = 2.0  # s
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise InvalidInputError(f"unknown signal kind {self.kind!r}")
        if self.high < self.low or self.hold_max < self.hold_min or self.hold_min <= 0:
            raise InvalidInputError(f"bad signal bounds in {self}")


@dataclass(frozen=True)
class ExcitationSpec:
    signals: dict
    seed: int = 0


def _holds(rng, n, s: SignalSpec, fs):
    """Piecewise-constant segment lengths in samples covering ``n`` samples."""
    bounds = [0]
    while bounds[-1] < n:
        bounds.append(bounds[-1] + max(1, int(round(rng.uniform(s.hold_min, s.hold_max) * fs))))
    bounds[-1] = n
    return bounds


def make_signal(s: SignalSpec, n: int, fs: float, rng) -> np.ndarray:
    t = np.arange(n) / fs
    span = s.high - s.low
    if s.kind == "constant":
        return np.full(n, 0.5 * (s.low + s.high))
    if s.kind == "steps":
        b = _holds(rng, n, s, fs)
        out = np.empty(n)
        for i in range(len(b) - 1):
            out[b[i] : b[i + 1]] = rng.uniform(s.low, s.high)
        return out
    if s.kind == "chirp":
        dur = max(t[-1], 1.0 / fs)
        phase0 = rng.uniform(0, 2 * math.pi)
        k = (s.f_end - s.f_start) / dur
        ph = 2 * math.pi * (s.f_start * t + 0.5 * k * t * t) + phase0
        return s.low + span * 0.5 * (1.0 + np.sin(ph))
    if s.kind == "filtered-noise":
        w = rng.standard_normal(n)
        a = math.exp(-1.0 / (fs * s.time_constant))
        y = np.empty(n)
        acc = 0.0
        for i in range(n):
            acc = a * acc + (1.0 - a) * w[i]
            y[i] = acc
        y = y / (np.std(y) + 1e-300)
        # +-2 sigma mapped onto the range, the rare excursions clipped
        return np.clip(0.5 * (s.low + s.high) + y * span / 4.0, s.low, s.high)
    # duty-cycle-profile: staircase of held levels joined by linear ramps
    b = _holds(rng, n, s, fs)
    nseg = len(b) - 1
    if s.levels:
        fr = [s.levels[i % len(s.levels)] for i in range(nseg)]
    else:
        fr = list(rng.uniform(0.0, 1.0, size=nseg))
    target = np.empty(n)
    for i in range(nseg):
        target[b[i] : b[i + 1]] = s.low + span * fr[i]
    out = target.copy()
    nr = int(round(s.ramp * fs))
    for i in range(1, nseg):
        j0, j1 = b[i], min(b[i] + nr, b[i + 1])
        if j1 > j0 and nr > 0:
            frac = (np.arange(j0, j1) - j0 + 1) / nr
            out[j0:j1] = target[j0 - 1] + (target[j0] - target[j0 - 1]) * frac
    return out


def coupled_channels(primary: dict, deviation: dict) -> dict:
    """Affine maps from engine-side inputs to the turbine boundary conditions."""
    N_e, m_f = primary["N_e"], primary["m_f"]
    return {
        "T_tur_in": 520.0 + 1.6 * m_f + 0.05 * (N_e - 800.0)
        + 0.8 * (primary["T_coolant"] - 345.0) + 0.8 * primary["u_egrv"] + deviation["T_tur_in"],
        "P_tur_in": 105.0 + 0.045 * (N_e - 800.0) + 0.45 * m_f + 0.9 * primary["u_vgt"]
        + deviation["P_tur_in"],
        "T_comp_out": 300.0 + 0.04 * (N_e - 800.0) + 0.35 * m_f + deviation["T_comp_out"],
    }


def generate_inputs(params: PlantParams, excitation: ExcitationSpec, n: int, fs: float) -> np.ndarray:
    """The ``9 x n`` input matrix for an excitation, clipped to the ranges."""
    missing = [c for c in INPUT_CHANNELS if c not in excitation.signals]
    if missing:
        raise InvalidInputError(f"excitation lacks channels {missing}")
    # one child stream per channel, so editing one channel leaves the rest intact
    children = np.random.SeedSequence(excitation.seed).spawn(len(INPUT_CHANNELS))
    raw = {
        name: make_signal(excitation.signals[name], n, fs, np.random.default_rng(ss))
        for name, ss in zip(INPUT_CHANNELS, children)
    }
    primary = {k: np.clip(raw[k], *params.ranges[k]) for k in PRIMARY}
    coupled = coupled_channels(primary, {k: raw[k] for k in COUPLED})
    chans = {**primary, **{k: np.clip(v, *params.ranges[k]) for k, v in coupled.items()}}
    return np.vstack([chans[c] for c in INPUT_CHANNELS])


def dataset_from_arrays(name, fs, states, inputs) -> TimeSeriesDataset:
    channels = {STATE_CHANNELS[i]: states[i] for i in range(2)}
    channels.update({INPUT_CHANNELS[i]: inputs[i] for i in range(len(INPUT_CHANNELS))})
    roles = {c: STATE for c in STATE_CHANNELS} | {c: INPUT for c in INPUT_CHANNELS}
    return TimeSeriesDataset(name=name, sample_rate=fs, channels=channels, units=dict(UNITS), roles=roles)


def integrate(
    params: PlantParams,
    excitation: ExcitationSpec,
    duration: float,
    sample_rate: float = 100.0,
    seed: int = 0,
    *,
    substeps: int = 4,
    noise_std=None,
    name: str = "surrogate",
) -> TimeSeriesDataset:
    """Generate one record.

    ``noise_std`` (scalar or per-state pair, default none) adds Gaussian
    measurement noise to the states, drawn from ``seed``.
    """
    n = int(round(duration * sample_rate))
    if n < 2:
        raise InvalidInputError("duration * sample_rate must give at least 2 samples")
    u = generate_inputs(params, excitation, n, sample_rate)
    x = simulate_inputs(params, u, sample_rate, substeps=substeps)
    if noise_std is not None:
        sd = np.broadcast_to(np.asarray(noise_std, dtype=np.float64), (2,))
        x = x + sd[:, None] * np.random.default_rng(seed).standard_normal(x.shape)
    return dataset_from_arrays(name, sample_rate, x, u)


# ---------------------------------------------------------------------------
# duty cycles


def _excitation(params: PlantParams, kinds: dict, seed: int, **overrides) -> ExcitationSpec:
    dev = {"T_tur_in": (-25.0, 25.0), "P_tur_in": (-15.0, 15.0), "T_comp_out": (-10.0, 10.0)}
    sigs = {}
    for ch in INPUT_CHANNELS:
        lo, hi = dev[ch] if ch in COUPLED else params.ranges[ch]
        kind, kw = kinds[ch]
        sigs[ch] = SignalSpec(kind, lo, hi, **{**overrides, **kw})
    return ExcitationSpec(sigs, seed)


def training_excitations(params: PlantParams, seeds) -> list[ExcitationSpec]:
    slow = ("filtered-noise", {"time_constant": 20.0})
    plans = [
        # random steps everywhere
        {ch: ("steps", {"hold_min": 0.5, "hold_max": 6.0}) for ch in INPUT_CHANNELS},
        # band-limited noise
        {ch: ("filtered-noise", {"time_constant": 1.5}) for ch in INPUT_CHANNELS},
        # sweeps on the actuators, steps on the engine
        {
            "u_vgt": ("chirp", {"f_start": 0.005, "f_end": 0.5}),
            "u_egrv": ("chirp", {"f_start": 0.01, "f_end": 0.3}),
            "N_e": ("steps", {"hold_min": 2.0, "hold_max": 10.0}),
            "m_f": ("steps", {"hold_min": 1.0, "hold_max": 6.0}),
            "T_tur_in": ("filtered-noise", {"time_constant": 2.0}),
            "P_tur_in": ("filtered-noise", {"time_constant": 2.0}),
            "T_comp_out": ("filtered-noise", {"time_constant": 2.0}),
        },
    ]
    out = []
    for i, s in enumerate(seeds):
        plan = dict(plans[i % len(plans)])
        plan.setdefault("T_oil", slow)
        plan.setdefault("T_coolant", slow)
        out.append(_excitation(params, plan, s))
    return out


def transient_excitation(params: PlantParams, seed: int) -> ExcitationSpec:
    """Rapid random load steps, loosely in the spirit of a transient test cycle."""
    plan = {ch: ("steps", {"hold_min": 0.5, "hold_max": 4.0}) for ch in INPUT_CHANNELS}
    plan["T_oil"] = ("filtered-noise", {"time_constant": 20.0})
    plan["T_coolant"] = ("filtered-noise", {"time_constant": 20.0})
    for ch in COUPLED:
        plan[ch] = ("filtered-noise", {"time_constant": 1.0})
    return _excitation(params, plan, seed)


def steady_excitation(params: PlantParams, seed: int) -> ExcitationSpec:
    """Long staircase holds joined by ramps, a steady-state cycle analogue."""
    hold = {"hold_min": 12.0, "hold_max": 20.0, "ramp": 2.0}
    plan = {ch: ("duty-cycle-profile", hold) for ch in PRIMARY}
    plan["T_oil"] = ("filtered-noise", {"time_constant": 30.0})
    plan["T_coolant"] = ("filtered-noise", {"time_constant": 30.0})
    for ch in COUPLED:
        plan[ch] = ("duty-cycle-profile", hold)
    return _excitation(params, plan, seed)


@dataclass(frozen=True)
class DutyCycleSettings:
    n_train: int = 3
    train_duration: float = 200.0
    test_duration: float = 200.0
    sample_rate: float = 100.0
    substeps: int = 4
    noise_std: tuple | None = None


def make_duty_cycles(params: PlantParams, seed: int, settings: DutyCycleSettings | None = None):
    """Training records plus transient and steady test records.

    All seeds are spawned from ``seed``; train and test streams never share
    a child sequence.
    """
    st = settings or DutyCycleSettings()
    kids = np.random.SeedSequence(seed).spawn(st.n_train + 2)
    ints = [int(k.generate_state(1)[0]) for k in kids]
    train_seeds, tr_seed, ss_seed = ints[: st.n_train], ints[-2], ints[-1]
    common = dict(sample_rate=st.sample_rate, substeps=st.substeps, noise_std=st.noise_std)
    train = [
        integrate(params, ex, st.train_duration, seed=s, name=f"train_{i:02d}", **common)
        for i, (ex, s) in enumerate(zip(training_excitations(params, train_seeds), train_seeds))
    ]
    transient = integrate(params, transient_excitation(params, tr_seed), st.test_duration,
                          seed=tr_seed, name="transient_test", **common)
    steady = integrate(params, steady_excitation(params, ss_seed), st.test_duration,
                       seed=ss_seed, name="steady_test", **common)
    return train, transient, steady


def with_params(params: PlantParams, **kw) -> PlantParams:
    return replace(params, **kw)
