"""Tunable parameters of the construction and the geometric scale ladder."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np


class ConfigError(ValueError):
    """Invalid parameter or grid configuration."""


@dataclass(frozen=True)
class ScaleGrid:
    """Descending geometric ladder ``t_max * ratio**-j`` of scales in
    ``(t_min, t_max]``."""

    t_min: float
    t_max: float = 5.0
    ratio: float = math.sqrt(2.0)
    scales: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.t_min > 0 and self.t_max > self.t_min and self.ratio > 1):
            raise ConfigError(
                f"need 0 < t_min < t_max and ratio > 1, got "
                f"({self.t_min}, {self.t_max}, {self.ratio})"
            )
        n = int(math.floor(math.log(self.t_max / self.t_min) / math.log(self.ratio)))
        scales = self.t_max * self.ratio ** -np.arange(n + 1, dtype=float)
        scales = scales[scales > self.t_min * (1 + 1e-12)]
        if scales.size == 0:
            raise ConfigError("scale grid is empty")
        scales.setflags(write=False)
        object.__setattr__(self, "scales", scales)

    @classmethod
    def with_count(cls, count: int, t_max: float = 5.0, ratio: float = math.sqrt(2.0)):
        """Grid with exactly ``count`` rungs starting at ``t_max``."""
        if count < 1:
            raise ConfigError("count must be >= 1")
        t_min = t_max * ratio ** -(count - 1) / math.sqrt(ratio)
        return cls(t_min=t_min, t_max=t_max, ratio=ratio)

    @classmethod
    def parse(cls, spec: str) -> "ScaleGrid":
        """Parse ``t_min:t_max:ratio``; ``ratio`` may be omitted."""
        parts = spec.split(":")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"bad scale spec {spec!r}") from exc
        if len(vals) == 2:
            return cls(vals[0], vals[1])
        if len(vals) == 3:
            return cls(vals[0], vals[1], vals[2])
        raise ConfigError(f"bad scale spec {spec!r}")

    def __len__(self):
        return self.scales.size

    @property
    def smallest(self) -> float:
        return float(self.scales[-1])

    @property
    def log_weight(self) -> float:
        """Quadrature weight of one rung for dt/t."""
        return math.log(self.ratio)

    def index_at_least(self, t: float) -> int | None:
        """Index of the smallest rung >= t (rungs are descending)."""
        ok = np.nonzero(self.scales >= t * (1 - 1e-12))[0]
        return int(ok[-1]) if ok.size else None

    def spec(self) -> str:
        return f"{self.t_min!r}:{self.t_max!r}:{self.ratio!r}"


@dataclass(frozen=True)
class Parameters:
    """Thresholds and window constants of the stopping-time construction.

    ``k1`` defaults to ``4 * (k + k0)``; ``scale_floor`` defaults to the
    smallest rung of the grid in use.
    """

    delta: float = 0.05
    epsilon: float = 0.02
    alpha: float = 0.2
    eta: float = 1e-9
    k: float = 10.0
    k0: float = 10.0
    k1: float | None = None
    K: float = 100.0
    scale_floor: float | None = None
    strict_hierarchy: bool = False

    def __post_init__(self):
        if self.k1 is None:
            object.__setattr__(self, "k1", 4.0 * (self.k + self.k0))
        self.validate()

    def validate(self):
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.alpha < math.pi / 2:
            raise ConfigError("alpha must lie in (0, pi/2)")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if self.k < 10 or self.k0 < 10:
            raise ConfigError("k and k0 must both be >= 10")
        if not self.k1 > 1:
            raise ConfigError("k1 must exceed 1")
        if not self.K > 1:
            raise ConfigError("K must exceed 1")
        if self.scale_floor is not None and not self.scale_floor > 0:
            raise ConfigError("scale_floor must be positive")
        if not self.epsilon < self.alpha:
            raise ConfigError("epsilon must be smaller than alpha")
        if self.strict_hierarchy and not (
            self.eta <= self.epsilon**5 <= self.alpha**25
        ):
            raise ConfigError("strict hierarchy eta <= eps^5 <= alpha^25 violated")

    def floor_for(self, grid: ScaleGrid) -> float:
        return self.scale_floor if self.scale_floor is not None else grid.smallest

    def with_overrides(self, **kw) -> "Parameters":
        known = {f.name: f for f in fields(self)}
        clean = {}
        for key, val in kw.items():
            if key not in known:
                raise ConfigError(f"unknown parameter {key!r}")
            clean[key] = _coerce(key, val)
        return replace(self, **clean)

    def as_dict(self) -> dict:
        return asdict(self)


def _coerce(key: str, val):
    if not isinstance(val, str):
        return val
    if key == "strict_hierarchy":
        if val.lower() in ("1", "true", "yes", "on"):
            return True
        if val.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {key}: {val!r}")
    if val.lower() in ("none", ""):
        return None
    try:
        return float(val)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {val!r}") from exc
