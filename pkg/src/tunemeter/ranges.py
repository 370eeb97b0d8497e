"""Data-driven tuning spaces from per-dataset optimal configurations.

For every numeric or integer parameter the tuning range is the interval
between two quantiles (type-7, linear interpolation of order statistics) of
the per-dataset best values on the untransformed scale. Categorical
parameters keep the levels that won at least once, or on at least a given
fraction of datasets. Conditional parameters contribute only datasets where
they were active in the best configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hyperspace import Configuration, ParamDef, SearchSpace, apply_trafo

DS_FREE_TRAFOS = ("identity", "pow2")


@dataclass(frozen=True)
class RangeSpec:
    """Quantile levels and the categorical inclusion rule."""

    p1: float = 0.05
    p2: float = 0.95
    categorical_rule: str = "at_least_once"
    min_fraction: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.p1 < self.p2 <= 1.0):
            raise ValueError("need 0 <= p1 < p2 <= 1")
        if self.categorical_rule not in ("at_least_once", "min_fraction"):
            raise ValueError(f"unknown categorical rule {self.categorical_rule!r}")
        if not 0.0 < self.min_fraction <= 1.0:
            raise ValueError("min_fraction must lie in (0, 1]")


@dataclass
class ParamRange:
    """Computed tuning range for one parameter."""

    name: str
    kind: str
    n_active: int
    values: list = field(default_factory=list)
    q_low: Optional[float] = None
    q_high: Optional[float] = None
    q_low_trafo: Optional[float] = None
    q_high_trafo: Optional[float] = None
    included_levels: Optional[list[str]] = None

    @property
    def has_data(self) -> bool:
        return self.n_active > 0


@dataclass
class TuningSpaceResult:
    spec: RangeSpec
    per_param: dict[str, ParamRange]

    def contains(self, config: Configuration) -> bool:
        """Whether a configuration's active values fall inside the ranges."""
        for name, pr in self.per_param.items():
            if not config.active.get(name, False) or not pr.has_data:
                continue
            v = config.values[name]
            if pr.included_levels is not None:
                if v not in pr.included_levels:
                    return False
            elif not (pr.q_low <= v <= pr.q_high):
                return False
        return True


def compute_ranges(
    best_configs: Sequence[Configuration],
    space: SearchSpace,
    spec: RangeSpec = RangeSpec(),
) -> TuningSpaceResult:
    """Quantile ranges and categorical inclusion sets over per-dataset optima."""
    best_configs = list(best_configs)
    if not best_configs:
        raise ValueError("need at least one best configuration")
    per_param: dict[str, ParamRange] = {}
    for p in space.params:
        values = [c.values[p.name] for c in best_configs if c.active.get(p.name, False)]
        pr = ParamRange(name=p.name, kind=p.kind, n_active=len(values), values=values)
        if values:
            if p.kind in ("numeric", "integer"):
                arr = np.asarray(values, dtype=float)
                pr.q_low = float(np.quantile(arr, spec.p1))
                pr.q_high = float(np.quantile(arr, spec.p2))
                if p.trafo in DS_FREE_TRAFOS:
                    pr.q_low_trafo = float(apply_trafo(p, pr.q_low))
                    pr.q_high_trafo = float(apply_trafo(p, pr.q_high))
            else:
                counts: dict[str, int] = {}
                for v in values:
                    counts[v] = counts.get(v, 0) + 1
                if spec.categorical_rule == "at_least_once":
                    included = [lv for lv in p.levels if counts.get(lv, 0) >= 1]
                else:
                    thr = spec.min_fraction * len(values)
                    included = [lv for lv in p.levels if counts.get(lv, 0) >= thr]
                pr.included_levels = included
        per_param[p.name] = pr
    return TuningSpaceResult(spec=spec, per_param=per_param)


@dataclass
class HistogramTable:
    parameter: str
    edges: list[float]
    counts: list[int]

    def rows(self) -> list[tuple[float, float, int]]:
        return [
            (self.edges[i], self.edges[i + 1], self.counts[i])
            for i in range(len(self.counts))
        ]


def export_histogram(pdef: ParamDef, values: Sequence[float], bins: int) -> HistogramTable:
    """Equal-width histogram of best values over the parameter's bounds.

    Bins are half-open with the last bin closed, so a value sitting on an
    interior edge lands in the upper bin; counts always sum to the number
    of contributing datasets.
    """
    if bins < 1:
        raise ValueError("need at least one bin")
    if pdef.kind not in ("numeric", "integer"):
        raise ValueError(f"histograms apply to numeric parameters, not {pdef.kind}")
    arr = np.asarray(list(values), dtype=float)
    counts, edges = np.histogram(arr, bins=bins, range=(pdef.lower, pdef.upper))
    return HistogramTable(
        parameter=pdef.name,
        edges=[float(e) for e in edges],
        counts=[int(c) for c in counts],
    )
