"""Particle-swarm feedback loop over actuator displacements.

Costs are maximized. A cost is any callable ``f(v) -> float``; if it also
has a ``batch(V) -> array`` method the whole swarm is evaluated in one
call, which is how the fiber costs below are written.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .fiber import FiberPiano
from .quantum import HeraldedState, TwoPhotonState

VARIANTS = ("single_spot", "two_spot", "smf_coupling", "singles_feedback")
CONFIGURATIONS = ("heralded", "two_photon")


class CostEvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 30
    max_iterations: int = 500
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    velocity_clamp: float = 0.3  # fraction of the bound range
    lower: float = -1.0
    upper: float = 1.0
    seed: int = 0
    evaluations_per_cost: int = 1

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not 0 < self.inertia < 1:
            raise ValueError("inertia must lie in (0, 1)")
        if self.cognitive <= 0 or self.social <= 0:
            raise ValueError("cognitive and social weights must be positive")
        if self.upper <= self.lower:
            raise ValueError("upper bound must exceed lower bound")
        if self.evaluations_per_cost < 1:
            raise ValueError("evaluations_per_cost must be >= 1")


@dataclass
class OptimizationRun:
    best_displacements: np.ndarray
    best_cost: float
    trace_best: np.ndarray  # best-so-far after each iteration, index 0 = initial swarm
    trace_mean: np.ndarray
    evaluations: int
    wall_time: float
    seed: int
    config: PsoConfig = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "best_displacements": [float(x) for x in self.best_displacements],
            "best_cost": float(self.best_cost),
            "trace_best": [float(x) for x in self.trace_best],
            "trace_mean": [float(x) for x in self.trace_mean],
            "evaluations": self.evaluations,
            "wall_time_s": self.wall_time,
            "seed": self.seed,
            "config": asdict(self.config),
        }


def _evaluate(cost, x: np.ndarray, iteration: int, workers: int) -> np.ndarray:
    batch = getattr(cost, "batch", None)
    try:
        if batch is not None:
            y = np.asarray(batch(x), dtype=float)
        elif workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                y = np.fromiter(pool.map(cost, x), dtype=float, count=len(x))
        else:
            y = np.array([float(cost(p)) for p in x])
    except Exception as exc:
        # locate the offending particle for the diagnostic
        for i, p in enumerate(x):
            try:
                float(cost(p))
            except Exception:
                raise CostEvaluationError(
                    f"cost failed for particle {i} at iteration {iteration}, position {p.tolist()}"
                ) from exc
        raise CostEvaluationError(f"cost failed at iteration {iteration}") from exc
    if y.shape != (len(x),):
        raise CostEvaluationError(f"cost returned shape {y.shape} for {len(x)} particles")
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        i = int(bad[0])
        raise CostEvaluationError(
            f"non-finite cost for particle {i} at iteration {iteration}, position {x[i].tolist()}"
        )
    return y


def pso_run(cost, config: PsoConfig, dimension: int | None = None, workers: int = 1,
            callback=None) -> OptimizationRun:
    """Global-best PSO with inertia, velocity clamping and reflecting walls."""
    dim = dimension if dimension is not None else getattr(cost, "dimension", None)
    if dim is None:
        raise ValueError("dimension must be given for costs without a .dimension attribute")
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    lo, hi = config.lower, config.upper
    vmax = config.velocity_clamp * (hi - lo)
    n = config.swarm_size

    x = rng.uniform(lo, hi, (n, dim))
    vel = rng.uniform(-vmax, vmax, (n, dim))
    y = _evaluate(cost, x, 0, workers)
    pbest_x, pbest_y = x.copy(), y.copy()
    g = int(np.argmax(pbest_y))
    gbest_x, gbest_y = pbest_x[g].copy(), float(pbest_y[g])
    trace_best = [gbest_y]
    trace_mean = [float(np.mean(y))]

    for it in range(1, config.max_iterations + 1):
        r1 = rng.random((n, dim))
        r2 = rng.random((n, dim))
        vel = (config.inertia * vel
               + config.cognitive * r1 * (pbest_x - x)
               + config.social * r2 * (gbest_x - x))
        np.clip(vel, -vmax, vmax, out=vel)
        x = x + vel
        over = x > hi
        x[over] = 2 * hi - x[over]
        vel[over] *= -1
        under = x < lo
        x[under] = 2 * lo - x[under]
        vel[under] *= -1
        np.clip(x, lo, hi, out=x)

        y = _evaluate(cost, x, it, workers)
        improved = y > pbest_y
        pbest_x[improved] = x[improved]
        pbest_y[improved] = y[improved]
        g = int(np.argmax(pbest_y))
        if pbest_y[g] > gbest_y:
            gbest_x, gbest_y = pbest_x[g].copy(), float(pbest_y[g])
        trace_best.append(gbest_y)
        trace_mean.append(float(np.mean(y)))
        if callback is not None:
            callback(it, gbest_y)

    return OptimizationRun(
        best_displacements=gbest_x,
        best_cost=gbest_y,
        trace_best=np.array(trace_best),
        trace_mean=np.array(trace_mean),
        evaluations=n * (config.max_iterations + 1),
        wall_time=time.perf_counter() - t0,
        seed=config.seed,
        config=config,
    )


# -- fiber costs --------------------------------------------------------------

@dataclass(frozen=True)
class CostSpec:
    variant: str = "single_spot"
    targets: tuple = ()  # DetectorSpec(s)
    alpha: float = 0.04
    configuration: str = "heralded"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown cost variant {self.variant!r}")
        if self.configuration not in CONFIGURATIONS:
            raise ValueError(f"unknown configuration {self.configuration!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.variant == "two_spot" and len(self.targets) != 2:
            raise ValueError("two_spot cost needs exactly two targets")


@dataclass(eq=False)
class CostContext:
    """Everything a fiber cost needs besides the displacements.

    ``targets`` are mode-space collection rows, one per target detector.
    Rates are expected counts per acquisition window: detection probability
    times ``pairs_per_window``. With ``noise_rng`` set, each evaluation is
    the mean of ``evaluations_per_cost`` Poisson draws instead.
    """

    piano: FiberPiano
    state: TwoPhotonState
    targets: np.ndarray
    configuration: str = "heralded"
    heralded: HeraldedState | None = None
    fixed: np.ndarray | None = None
    smf: np.ndarray | None = None
    pairs_per_window: float = 1.0
    alpha: float = 0.04
    noise_rng: np.random.Generator | None = None
    evaluations_per_cost: int = 1

    def __post_init__(self):
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=complex))
        if self.configuration not in CONFIGURATIONS:
            raise ValueError(f"unknown configuration {self.configuration!r}")
        if self.configuration == "heralded" and self.heralded is None:
            raise ValueError("heralded configuration needs a HeraldedState")
        if self.configuration == "two_photon" and self.fixed is None:
            raise ValueError("two-photon configuration needs a fixed detector row")

    @property
    def dimension(self) -> int:
        return self.piano.count

    def psi(self) -> np.ndarray:
        return self.heralded.fiber_vector(self.piano.n_modes)

    def sample(self, expected: np.ndarray) -> np.ndarray:
        if self.noise_rng is None:
            return expected
        draws = self.noise_rng.poisson(np.broadcast_to(expected, (self.evaluations_per_cost,) + expected.shape))
        return draws.mean(axis=0)


def _batch(v):
    v = np.asarray(v, dtype=float)
    return np.atleast_2d(v), v.ndim == 1


def coincidence_probabilities(ctx: CostContext, V) -> np.ndarray:
    """Coincidence probability at each target, shape (P, R)."""
    V, _ = _batch(V)
    if ctx.configuration == "heralded":
        rows = ctx.piano.rows(ctx.targets, V)
        amp = rows @ ctx.psi()
        return ctx.heralded.herald_probability * np.abs(amp) ** 2
    rows = ctx.piano.rows(np.vstack([ctx.targets, ctx.fixed]), V)
    s = ctx.state.schmidt_modes
    a_t = rows[:, :-1, s]
    a_f = rows[:, -1, s] * ctx.state.amplitudes()
    return np.abs(np.einsum("pra,pa->pr", a_t, a_f)) ** 2


def singles_probabilities(ctx: CostContext, V) -> np.ndarray:
    V, _ = _batch(V)
    rows = ctx.piano.rows(ctx.targets, V)
    amps = rows[:, :, ctx.state.schmidt_modes]
    return np.sum(ctx.state.schmidt_coeffs * np.abs(amps) ** 2, axis=-1)


def _out(vals: np.ndarray, single: bool):
    return float(vals[0]) if single else vals


def cost_single_spot(v, ctx: CostContext):
    _, single = _batch(v)
    c = ctx.sample(coincidence_probabilities(ctx, v)[:, 0] * ctx.pairs_per_window)
    return _out(c, single)


def two_spot_value(c1, c2, alpha: float):
    """sqrt(c1) + sqrt(c2) - alpha |c1 - c2|."""
    return np.sqrt(c1) + np.sqrt(c2) - alpha * np.abs(c1 - c2)


def cost_two_spot(v, ctx: CostContext, alpha: float | None = None):
    _, single = _batch(v)
    if ctx.targets.shape[0] != 2:
        raise ValueError("two-spot cost needs exactly two target rows")
    alpha = ctx.alpha if alpha is None else alpha
    c = ctx.sample(coincidence_probabilities(ctx, v) * ctx.pairs_per_window)
    return _out(two_spot_value(c[:, 0], c[:, 1], alpha), single)


def smf_efficiency(ctx: CostContext, V) -> np.ndarray:
    V, _ = _batch(V)
    if ctx.heralded is None:
        raise ValueError("SMF coupling needs a heralded photon")
    smf = ctx.smf if ctx.smf is not None else np.eye(ctx.piano.n_modes)[0]
    rows = ctx.piano.rows(np.atleast_2d(smf), V)[:, 0]
    return np.abs(rows @ ctx.psi()) ** 2


def cost_smf(v, ctx: CostContext):
    """Coupling efficiency of the heralded photon into the SMF mode."""
    _, single = _batch(v)
    eff = smf_efficiency(ctx, v)
    if ctx.noise_rng is not None:
        scale = ctx.pairs_per_window * ctx.heralded.herald_probability
        eff = ctx.sample(eff * scale) / scale
    return _out(eff, single)


def cost_singles(v, ctx: CostContext):
    _, single = _batch(v)
    c = ctx.sample(singles_probabilities(ctx, v)[:, 0] * ctx.pairs_per_window)
    return _out(c, single)


COSTS = {
    "single_spot": cost_single_spot,
    "two_spot": cost_two_spot,
    "smf_coupling": cost_smf,
    "singles_feedback": cost_singles,
}


class BoundCost:
    """A cost function bound to its context, usable by :func:`pso_run`."""

    def __init__(self, fn, ctx: CostContext, name: str | None = None):
        self.fn = fn
        self.ctx = ctx
        self.name = name or fn.__name__
        self.dimension = ctx.dimension

    def __call__(self, v) -> float:
        return float(self.fn(np.asarray(v, dtype=float), self.ctx))

    def batch(self, V) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(V), self.ctx), dtype=float)


def make_cost(variant: str, ctx: CostContext) -> BoundCost:
    if variant not in COSTS:
        raise ValueError(f"unknown cost variant {variant!r}")
    return BoundCost(COSTS[variant], ctx, variant)
