from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, SchemaError, ShapeError

STATE = "state"
INPUT = "input"


@dataclass
class TimeSeriesDataset:
    """A uniformly sampled multi-channel record.

    ``channels`` maps a channel name to a 1-D float64 array; all channels share
    one length.  ``units`` and ``roles`` are optional per-channel labels
    (roles are ``"state"`` or ``"input"``).
    """

    name: str
    sample_rate: float
    channels: dict[str, np.ndarray]
    units: dict[str, str] = field(default_factory=dict)
    roles: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise InvalidInputError(f"{self.name}: sample_rate must be > 0")
        if not self.channels:
            raise SchemaError(f"{self.name}: dataset has no channels")
        lengths = set()
        fixed = {}
        for key, values in self.channels.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.ndim != 1:
                raise ShapeError(f"{self.name}: channel {key!r} is not 1-D")
            if np.isnan(arr).any():
                i = int(np.flatnonzero(np.isnan(arr))[0])
                raise InvalidInputError(f"{self.name}: channel {key!r} has NaN at sample {i}")
            lengths.add(arr.size)
            fixed[key] = arr
        if len(lengths) != 1:
            raise ShapeError(f"{self.name}: channels differ in length {sorted(lengths)}")
        if lengths.pop() < 2:
            raise ShapeError(f"{self.name}: need at least 2 samples")
        self.channels = fixed
        for key, role in self.roles.items():
            if role not in (STATE, INPUT):
                raise InvalidInputError(f"{self.name}: bad role {role!r} for {key!r}")

    @property
    def length(self) -> int:
        return next(iter(self.channels.values())).size

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.length) / self.sample_rate

    def names_with_role(self, role: str) -> list[str]:
        return [k for k in self.channels if self.roles.get(k) == role]

    def require(self, names) -> None:
        missing = [n for n in names if n not in self.channels]
        if missing:
            raise SchemaError(f"{self.name}: missing channel(s) {missing}")

    def matrix(self, names) -> np.ndarray:
        """Stack the named channels as rows, shape ``(len(names), length)``."""
        self.require(names)
        if not names:
            return np.zeros((0, self.length))
        return np.vstack([self.channels[n] for n in names])
