"""Lifting functions: the observables that map a state into the lifted space.

A lifted vector is always the state itself followed by the dictionary
functions.  Centers are drawn with numpy's PCG64 bit generator
(``np.random.default_rng(seed)``), whose stream is fixed across platforms,
so a seed reproduces the same centers everywhere.  Drawing ``k`` centers
yields the first ``k`` rows of a larger draw with the same seed, which is
what makes dictionaries of growing size nested.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .errors import InvalidInputError, ShapeError

RBF_FAMILIES = (
    "polyharmonic",
    "gaussian",
    "multiquadric",
    "inverse_quadratic",
    "inverse_multiquadric",
)
FAMILIES = ("identity_only", "polynomial") + RBF_FAMILIES

DEFAULT_BOUNDS = (-1.8, 1.8)


def sample_centers(n_centers: int, state_dim: int, low: float, high: float, seed: int) -> np.ndarray:
    """Draw ``n_centers`` points i.i.d. uniform on ``[low, high]**state_dim``.

    Returns an array of shape ``(n_centers, state_dim)``.
    """
    if not low < high:
        raise InvalidInputError(f"invalid center range: low={low} must be < high={high}")
    if n_centers < 0 or state_dim < 1:
        raise InvalidInputError("n_centers must be >= 0 and state_dim >= 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(n_centers, state_dim))


def polynomial_exponents(state_dim: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of every monomial with total degree 2..``degree``.

    Degree-1 terms are omitted because the state already leads the lifted
    vector; no constant term is included.
    """
    out = []
    for d in range(2, degree + 1):
        for combo in combinations_with_replacement(range(state_dim), d):
            exps = [0] * state_dim
            for i in combo:
                exps[i] += 1
            out.append(tuple(exps))
    return out


@dataclass(frozen=True)
class DictionarySpec:
    family: str
    state_dim: int
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    shape_parameter: float = 1.0
    polynomial_degree: int = 0
    center_bounds: tuple[float, float] = DEFAULT_BOUNDS
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown dictionary family {self.family!r}")
        if self.state_dim < 1:
            raise InvalidInputError("state_dim must be >= 1")
        if not self.shape_parameter > 0:
            raise InvalidInputError("shape_parameter must be positive")
        c = np.array(self.centers, dtype=np.float64, copy=True)
        if self.family not in RBF_FAMILIES or c.size == 0:
            c = np.zeros((0, self.state_dim))
        if c.ndim != 2 or c.shape[1] != self.state_dim:
            raise ShapeError(f"centers must have shape (k, {self.state_dim}), got {c.shape}")
        low, high = self.center_bounds
        if c.size and (c.min() < low or c.max() > high):
            raise InvalidInputError("a center lies outside center_bounds")
        c.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "center_bounds", (float(low), float(high)))

    @classmethod
    def create(
        cls,
        family: str,
        state_dim: int,
        num_functions: int = 0,
        *,
        shape_parameter: float = 1.0,
        polynomial_degree: int = 2,
        center_bounds=DEFAULT_BOUNDS,
        seed: int = 0,
    ) -> "DictionarySpec":
        """Build a spec, sampling centers for the RBF families."""
        low, high = center_bounds
        if family in RBF_FAMILIES:
            centers = sample_centers(num_functions, state_dim, low, high, seed)
        else:
            centers = np.zeros((0, state_dim))
        if family != "polynomial":
            polynomial_degree = 0
        return cls(
            family=family,
            state_dim=state_dim,
            centers=centers,
            shape_parameter=shape_parameter,
            polynomial_degree=polynomial_degree,
            center_bounds=(low, high),
            seed=seed,
        )

    @property
    def num_functions(self) -> int:
        if self.family == "polynomial":
            return len(polynomial_exponents(self.state_dim, self.polynomial_degree))
        return self.centers.shape[0]

    @property
    def lifted_dim(self) -> int:
        return self.state_dim + self.num_functions

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "state_dim": self.state_dim,
            "shape_parameter": self.shape_parameter,
            "polynomial_degree": self.polynomial_degree,
            "center_bounds": list(self.center_bounds),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, centers) -> "DictionarySpec":
        return cls(
            family=d["family"],
            state_dim=int(d["state_dim"]),
            centers=centers,
            shape_parameter=float(d["shape_parameter"]),
            polynomial_degree=int(d["polynomial_degree"]),
            center_bounds=tuple(d["center_bounds"]),
            seed=int(d["seed"]),
        )

    def __eq__(self, other):
        if not isinstance(other, DictionarySpec):
            return NotImplemented
        return self.to_dict() == other.to_dict() and np.array_equal(self.centers, other.centers)

    __hash__ = None


def _radial(family: str, r: np.ndarray, eps: float) -> np.ndarray:
    if family == "polyharmonic":
        out = np.zeros_like(r)
        pos = r > 0
        out[pos] = r[pos] * np.log(r[pos])
        return out
    er2 = (eps * r) ** 2
    if family == "gaussian":
        return np.exp(-er2)
    if family == "multiquadric":
        return np.sqrt(1.0 + er2)
    if family == "inverse_quadratic":
        return 1.0 / (1.0 + er2)
    if family == "inverse_multiquadric":
        return 1.0 / np.sqrt(1.0 + er2)
    raise InvalidInputError(f"{family!r} is not a radial family")


def lift_batch(spec: DictionarySpec, states) -> np.ndarray:
    """Lift every column of an ``n x N`` state matrix to ``N_l x N``."""
    x = np.asarray(states, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != spec.state_dim:
        raise ShapeError(f"states must have shape ({spec.state_dim}, N), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("states contain non-finite values")
    fam = spec.family
    if fam == "identity_only":
        return x.copy()
    if fam == "polynomial":
        exps = polynomial_exponents(spec.state_dim, spec.polynomial_degree)
        tail = np.empty((len(exps), x.shape[1]))
        for k, e in enumerate(exps):
            term = np.ones(x.shape[1])
            for j, p in enumerate(e):
                for _ in range(p):
                    term = term * x[j]
            tail[k] = term
        return np.vstack([x, tail])

    c = spec.centers
    # squared distances accumulated one coordinate at a time: the summation
    # order is independent of batch size, so single-vector and batch lifts
    # agree bit for bit
    d2 = np.zeros((c.shape[0], x.shape[1]))
    for j in range(spec.state_dim):
        diff = x[j][None, :] - c[:, j][:, None]
        d2 += diff * diff
    tail = _radial(fam, np.sqrt(d2), spec.shape_parameter)
    return np.vstack([x, tail])


def lift(spec: DictionarySpec, x) -> np.ndarray:
    """Lift a single state vector."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"x must be a vector, got shape {v.shape}")
    return lift_batch(spec, v[:, None])[:, 0]
