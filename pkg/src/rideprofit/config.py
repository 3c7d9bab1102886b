"""Flat ``key = value`` run configuration.

Values resolve in three layers: built-in defaults, then a config file, then
``--set key=value`` overrides from the command line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .pricing import CostSchedule, DiscountPolicy
from .trips import HaversineMetric, LandmarkGrid, NYC_BOX, TravelMetric

DEFAULTS: dict[str, float | str] = {
    "cost.base": 2.50,
    "cost.per_km": 1.10,
    "cost.per_min": 0.35,
    "cost.driver_cut": 0.20,
    "discount.theta_dist_deg": 40.0,
    "discount.theta_time_deg": 0.0,
    "discount.min_b": 0.10,
    "metric.speed_kmh": 18.0,
    "metric.circuity": 1.3,
    "grid.cell_m": 0.0,
    "routing.objective": "profit",
}

_TEXT_KEYS = {"routing.objective"}


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw) -> float | str:
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    if key in _TEXT_KEYS:
        value = str(raw).strip()
        if key == "routing.objective" and value not in ("profit", "distance"):
            raise ConfigError("routing.objective must be 'profit' or 'distance'")
        return value
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} needs a number, got {raw!r}") from None


def parse_pairs(lines: Iterable[str], origin: str = "<config>") -> dict[str, float | str]:
    out: dict[str, float | str] = {}
    for no, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{no}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{origin}:{no}: duplicate key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def read_config_file(path) -> dict[str, float | str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_pairs(path.read_text().splitlines(), str(path))


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, float | str]

    @classmethod
    def resolve(cls, file_values: Mapping | None = None, overrides: Mapping | None = None) -> "RunConfig":
        merged = dict(DEFAULTS)
        for layer in (file_values or {}, overrides or {}):
            for k, v in layer.items():
                merged[k] = _coerce(k, v)
        cfg = cls(merged)
        # surface range errors at load time rather than mid-run
        cfg.schedule(), cfg.policy(), cfg.metric(), cfg.grid()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def schedule(self) -> CostSchedule:
        v = self.values
        try:
            return CostSchedule(v["cost.base"], v["cost.per_km"], v["cost.per_min"], v["cost.driver_cut"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def policy(self) -> DiscountPolicy:
        v = self.values
        try:
            return DiscountPolicy(v["discount.theta_dist_deg"], v["discount.theta_time_deg"], v["discount.min_b"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def metric(self) -> TravelMetric:
        try:
            return HaversineMetric(self.values["metric.speed_kmh"], self.values["metric.circuity"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def grid(self) -> LandmarkGrid | None:
        cell = self.values["grid.cell_m"]
        if cell < 0:
            raise ConfigError("grid.cell_m must be >= 0 (0 disables snapping)")
        return LandmarkGrid(cell, NYC_BOX) if cell > 0 else None

    def comment(self, extra: Mapping | None = None) -> str:
        """One ``#`` line with every resolved key, then any run arguments."""
        items = [f"{k}={self.values[k]}" for k in sorted(self.values)]
        items += [f"{k}={v}" for k, v in (extra or {}).items()]
        return "# " + " ".join(items)
