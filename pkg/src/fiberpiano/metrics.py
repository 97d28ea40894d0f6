"""Disorder baselines and enhancement statistics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import sqrt

import numpy as np


class DegenerateBaselineError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DisorderStats:
    mean: float
    std: float
    n_samples: int
    seed: int | None = None
    target: str = ""
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def sem(self) -> float:
        """Standard error of the mean."""
        return self.std / sqrt(self.n_samples)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n_samples": self.n_samples,
                "sem": self.sem, "seed": self.seed, "target": self.target}


@dataclass(frozen=True)
class EnhancementReport:
    enhancement: float
    normalized_enhancement: float
    total_ratio: float
    singles_enhancement: float | None = None
    enhancement_uncertainty: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def random_displacements(n_samples: int, dimension: int, seed, lower=-1.0, upper=1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(lower, upper, (n_samples, dimension))


def disorder_average(cost, n_samples: int, seed, dimension: int | None = None,
                     workers: int = 1, target: str = "") -> DisorderStats:
    """Mean and spread of ``cost`` over uniformly random displacement vectors."""
    if n_samples < 2:
        raise ValueError("need at least two disorder samples")
    dim = dimension if dimension is not None else getattr(cost, "dimension", None)
    if dim is None:
        raise ValueError("dimension must be given for costs without a .dimension attribute")
    V = random_displacements(n_samples, dim, seed)
    if hasattr(cost, "batch"):
        # chunks keep the batched buffers small
        vals = np.concatenate([cost.batch(V[i:i + 256]) for i in range(0, n_samples, 256)])
    elif workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            vals = np.fromiter(pool.map(cost, V), dtype=float, count=n_samples)
    else:
        vals = np.array([float(cost(v)) for v in V])
    # np.mean / np.std use pairwise summation, so the result is order-stable
    return DisorderStats(float(np.mean(vals)), float(np.std(vals)), n_samples,
                         seed if isinstance(seed, int) else None, target, vals)


def enhancement(peak: float, baseline: DisorderStats) -> float:
    if baseline.mean <= 0:
        raise DegenerateBaselineError("baseline mean must be positive")
    return peak / baseline.mean


def enhancement_uncertainty(peak: float, baseline: DisorderStats) -> float:
    """Uncertainty of the enhancement from the finite baseline ensemble."""
    eta = enhancement(peak, baseline)
    return eta * baseline.std / (baseline.mean * sqrt(baseline.n_samples))


def enhancement_report(before_map, after_map, target, baseline: DisorderStats,
                       singles_after=None, singles_baseline: DisorderStats | None = None,
                       totals: tuple[float, float] | None = None) -> EnhancementReport:
    """Enhancement at ``target`` split into refocusing and global throughput.

    ``target`` is an (x, y) position on the maps' scan raster. The total
    ratio is after/before summed over the scan raster unless ``totals``
    supplies full-aperture (before, after) totals.
    """
    b = np.asarray(getattr(before_map, "values", before_map))
    a = np.asarray(getattr(after_map, "values", after_map))
    if a.shape != b.shape:
        raise ValueError("before and after maps are on different scan grids")
    for m in (before_map, after_map):
        if hasattr(m, "xs") and hasattr(before_map, "xs"):
            if not (np.array_equal(m.xs, before_map.xs) and np.array_equal(m.ys, before_map.ys)):
                raise ValueError("before and after maps are on different scan grids")
    peak = _value_at(after_map, target)
    eta = enhancement(peak, baseline)
    if totals is None:
        before_total, after_total = float(np.sum(b)), float(np.sum(a))
    else:
        before_total, after_total = totals
    if before_total <= 0:
        raise DegenerateBaselineError("before map has no counts")
    rho = after_total / before_total
    singles = None
    if singles_after is not None and singles_baseline is not None:
        singles = enhancement(_value_at(singles_after, target), singles_baseline)
    return EnhancementReport(eta, eta / rho, rho, singles, enhancement_uncertainty(peak, baseline))


def _value_at(m, target) -> float:
    if hasattr(m, "at"):
        return m.at(*target)
    i, j = target
    return float(np.asarray(m)[i, j])
