"""Experiment orchestration shared by the CLI and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .config import ExperimentConfig
from .fiber import ActuatorBank, FiberPiano, build_actuator_bank
from .metrics import (DisorderStats, EnhancementReport, disorder_average,
                      enhancement_report, random_displacements)
from .modes import (DetectorSpec, FiberSpec, GridSpec, ModeBasis, build_mode_basis,
                    collection_vectors, scan_positions, scan_vectors)
from .optimize import (CostContext, OptimizationRun, PsoConfig, coincidence_probabilities,
                       make_cost, pso_run, singles_probabilities, smf_efficiency)
from .quantum import (CoincidenceMap, HeraldedState, TwoPhotonState, contrast, effective_modes,
                      herald, herald_vector, schmidt_estimate, spdc_state)


def _snap(value: float, axis: np.ndarray) -> float:
    return float(axis[int(np.argmin(np.abs(axis - value)))])


class Setup:
    """The simulated apparatus described by one :class:`ExperimentConfig`."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.seeds = cfg.seeds()
        f = cfg.fiber
        self.fiber = FiberSpec(f.core_radius_um, f.numerical_aperture, f.wavelength_nm, f.mode_count)
        self.grid = GridSpec(cfg.grid.side_um, cfg.grid.samples_per_side)
        self.xs, self.ys = scan_positions(cfg.scan.half_width_um, cfg.scan.points)
        d = cfg.detectors
        # targets sit on the scan raster so map values and costs coincide
        snap = lambda p: (_snap(p[0], self.xs), _snap(p[1], self.ys))  # noqa: E731
        self.scanner = DetectorSpec((0.0, 0.0), d.collection_radius_um, "scanning", d.magnification)
        self.target = self.scanner.moved(*snap(d.target_um))
        self.fixed = DetectorSpec(tuple(d.fixed_um), d.collection_radius_um, "fixed", d.magnification)
        self.herald_detector = DetectorSpec(tuple(d.herald_um), d.collection_radius_um, "heralding",
                                            d.magnification)
        self.spot_scanner = DetectorSpec((0.0, 0.0), d.two_spot_collection_radius_um, "scanning",
                                         d.magnification)
        self.spots = tuple(self.spot_scanner.moved(*snap(p)) for p in d.two_spot_um)

    @cached_property
    def basis(self) -> ModeBasis:
        return build_mode_basis(self.fiber, self.grid)

    @cached_property
    def bank(self) -> ActuatorBank:
        a = self.cfg.actuators
        return build_actuator_bank(self.fiber.mode_truncation, a.count, a.coupling_strength,
                                   a.loss_coefficient, self.seeds["actuators"],
                                   mode_dependent_loss=a.mode_dependent_loss)

    @cached_property
    def piano(self) -> FiberPiano:
        return FiberPiano(self.bank, self.seeds["fiber"])

    @cached_property
    def state(self) -> TwoPhotonState:
        s = self.cfg.state
        return spdc_state(s.schmidt_number, self.fiber.mode_truncation,
                          equal_weights=s.spectrum == "equal")

    @cached_property
    def heralded(self) -> HeraldedState:
        return herald(self.state, herald_vector(self.basis, self.herald_detector))

    @property
    def configuration(self) -> str:
        return self.cfg.state.configuration

    @cached_property
    def fixed_row(self) -> np.ndarray:
        return collection_vectors(self.basis, [self.fixed])[0]

    def rows_for(self, detectors) -> np.ndarray:
        return collection_vectors(self.basis, detectors)

    @cached_property
    def scan_rows(self) -> np.ndarray:
        return scan_vectors(self.basis, self.scanner, self.xs, self.ys)

    @cached_property
    def spot_scan_rows(self) -> np.ndarray:
        return scan_vectors(self.basis, self.spot_scanner, self.xs, self.ys)

    def context(self, variant: str | None = None, configuration: str | None = None,
                noise: bool | None = None) -> CostContext:
        variant = variant or self.cfg.cost.variant
        configuration = configuration or self.configuration
        targets = self.spots if variant == "two_spot" else (self.target,)
        noise = self.cfg.source.poisson_noise if noise is None else noise
        return CostContext(
            piano=self.piano,
            state=self.state,
            targets=self.rows_for(targets),
            configuration=configuration,
            heralded=self.heralded,
            fixed=self.fixed_row,
            pairs_per_window=self.cfg.source.pairs_per_window,
            alpha=self.cfg.cost.alpha,
            noise_rng=np.random.default_rng(self.seeds["noise"]) if noise else None,
            evaluations_per_cost=self.cfg.pso.evaluations_per_cost,
        )

    def pso_config(self, **overrides) -> PsoConfig:
        p = self.cfg.pso
        kw = dict(swarm_size=p.swarm_size, max_iterations=p.max_iterations, inertia=p.inertia,
                  cognitive=p.cognitive, social=p.social, velocity_clamp=p.velocity_clamp,
                  seed=self.seeds["pso"], evaluations_per_cost=p.evaluations_per_cost)
        kw.update(overrides)
        return PsoConfig(**kw)

    # -- maps -----------------------------------------------------------------

    def maps(self, v, configuration: str | None = None, two_spot: bool = False) -> dict:
        """Singles and coincidence maps (expected counts per window) at displacement v."""
        configuration = configuration or self.configuration
        rows = self.spot_scan_rows if two_spot else self.scan_rows
        t = self.piano.tm(np.asarray(v, dtype=float))
        scale = self.cfg.source.pairs_per_window
        rt = rows @ t
        s = self.state.schmidt_modes
        singles = scale * np.sum(self.state.schmidt_coeffs * np.abs(rt[..., s]) ** 2, axis=-1)
        if configuration == "heralded":
            psi = self.heralded.fiber_vector(self.fiber.mode_truncation)
            coinc = scale * self.heralded.herald_probability * np.abs(rt @ psi) ** 2
            kind = "heralded_coincidence"
        else:
            a_f = (self.fixed_row @ t)[s] * self.state.amplitudes()
            coinc = scale * np.abs(rt[..., s] @ a_f) ** 2
            kind = "coincidence"
        meta = {"configuration": configuration, "displacements": [float(x) for x in np.ravel(v)]}
        return {
            "singles": CoincidenceMap(self.xs, self.ys, singles, "singles", dict(meta)),
            "coincidence": CoincidenceMap(self.xs, self.ys, coinc, kind, dict(meta)),
        }

    def full_aperture_total(self, v, configuration: str | None = None) -> float:
        """Total coincidence probability over the whole output plane.

        Evaluated by grid quadrature of the rendered output, expressed
        through the basis Gram matrix.
        """
        configuration = configuration or self.configuration
        gram = self.basis.gram()
        t = self.piano.tm(np.asarray(v, dtype=float))
        if configuration == "heralded":
            out = t @ self.heralded.fiber_vector(self.fiber.mode_truncation)
            return float(self.heralded.herald_probability * np.real(out.conj() @ gram @ out))
        ts = t[:, self.state.schmidt_modes]
        m = (ts * self.state.amplitudes()) @ ts.T
        return float(np.real(np.sum(m.conj() * (gram @ m @ gram.T))))


# -- experiments ----------------------------------------------------------------

@dataclass
class SpeckleResult:
    maps: dict
    singles_contrast: float
    coincidence_contrast: float
    ensemble_size: int
    singles_samples: np.ndarray = field(repr=False)
    coincidence_samples: np.ndarray = field(repr=False)


def ensemble_samples(setup: Setup, n_samples: int, configuration: str | None = None,
                     stream: str = "ensemble") -> tuple[np.ndarray, np.ndarray]:
    """Singles and coincidences at the target over random configurations."""
    ctx = setup.context("single_spot", configuration, noise=False)
    V = random_displacements(n_samples, setup.bank.count, setup.seeds[stream])
    singles, coinc = [], []
    for i in range(0, n_samples, 256):
        singles.append(singles_probabilities(ctx, V[i:i + 256])[:, 0])
        coinc.append(coincidence_probabilities(ctx, V[i:i + 256])[:, 0])
    scale = setup.cfg.source.pairs_per_window
    return scale * np.concatenate(singles), scale * np.concatenate(coinc)


def run_speckle(setup: Setup) -> SpeckleResult:
    maps = setup.maps(np.zeros(setup.bank.count))
    n = setup.cfg.ensembles.speckle_samples
    s, c = ensemble_samples(setup, n)
    return SpeckleResult(maps, contrast(s), contrast(c), n, s, c)


@dataclass
class OptimizeResult:
    variant: str
    configuration: str
    run: OptimizationRun
    baseline: DisorderStats
    before: dict
    after: dict
    report: EnhancementReport
    coincidence_baseline: DisorderStats | None = None
    singles_baseline: DisorderStats | None = None
    spot_baselines: tuple = ()
    spot_enhancements: tuple = ()
    spot_values: tuple = ()
    smf_baseline: DisorderStats | None = None

    @property
    def enhancement(self) -> float:
        return self.report.enhancement

    @property
    def cost_enhancement(self) -> float:
        """Best cost over the disorder-averaged cost (smf and singles variants)."""
        return self.run.best_cost / self.baseline.mean

    def summary(self) -> dict:
        out = {
            "variant": self.variant,
            "configuration": self.configuration,
            "best_cost": self.run.best_cost,
            "baseline": self.baseline.to_dict(),
            "report": self.report.to_dict(),
            "cost_enhancement": self.cost_enhancement,
            "evaluations": self.run.evaluations,
        }
        if self.spot_enhancements:
            out["spot_enhancements"] = list(self.spot_enhancements)
            out["spot_values"] = list(self.spot_values)
            out["spot_baselines"] = [b.to_dict() for b in self.spot_baselines]
        return out


def run_optimize(setup: Setup, variant: str | None = None, configuration: str | None = None,
                 workers: int = 1, **pso_overrides) -> OptimizeResult:
    """Baseline, PSO, and before/after maps for one cost variant.

    The reported enhancement is always the coincidence enhancement at the
    target (for smf_coupling: the SMF coupling enhancement), whatever
    signal served as feedback.
    """
    cfg = setup.cfg
    variant = variant or cfg.cost.variant
    configuration = configuration or setup.configuration
    if variant == "smf_coupling":
        configuration = "heralded"
    ctx = setup.context(variant, configuration)
    cost = make_cost(variant, ctx)
    nb = cfg.ensembles.baseline_samples
    bseed = setup.seeds["baseline"]
    baseline = disorder_average(cost, nb, bseed, workers=workers, target=variant)
    run = pso_run(cost, setup.pso_config(**pso_overrides), workers=workers)

    v0 = np.zeros(setup.bank.count)
    two_spot = variant == "two_spot"
    before = setup.maps(v0, configuration, two_spot)
    after = setup.maps(run.best_displacements, configuration, two_spot)

    clean = setup.context(variant, configuration, noise=False)
    coinc_cost = make_cost("single_spot", setup.context("single_spot", configuration, noise=False))
    sing_cost = make_cost("singles_feedback", setup.context("single_spot", configuration, noise=False))
    coinc_base = disorder_average(coinc_cost, nb, bseed, target="coincidence")
    sing_base = disorder_average(sing_cost, nb, bseed, target="singles")
    result = dict(variant=variant, configuration=configuration, run=run, baseline=baseline,
                  before=before, after=after, singles_baseline=sing_base)

    if variant == "smf_coupling":
        smf_base = disorder_average(make_cost("smf_coupling", clean), nb, bseed, target="smf")
        eta = float(smf_efficiency(clean, run.best_displacements)[0] / smf_base.mean)
        report = EnhancementReport(eta, eta, 1.0, None, None)
        result.update(report=report, smf_baseline=smf_base, coincidence_baseline=coinc_base)
        return OptimizeResult(**result)

    if two_spot:
        probs = coincidence_probabilities(clean, run.best_displacements)[0] * cfg.source.pairs_per_window
        spot_bases = []
        for k in range(2):
            spot_ctx = setup.context("two_spot", configuration, noise=False)
            spot_ctx.targets = spot_ctx.targets[k:k + 1]
            spot_bases.append(disorder_average(make_cost("single_spot", spot_ctx), nb, bseed,
                                               target=f"spot{k}"))
        spot_eta = tuple(float(probs[k] / spot_bases[k].mean) for k in range(2))
        report = enhancement_report(before["coincidence"], after["coincidence"],
                                    setup.spots[0].position, spot_bases[0])
        result.update(report=report, spot_baselines=tuple(spot_bases), spot_enhancements=spot_eta,
                      spot_values=tuple(float(p) for p in probs), coincidence_baseline=coinc_base)
        return OptimizeResult(**result)

    report = enhancement_report(before["coincidence"], after["coincidence"],
                                setup.target.position, coinc_base,
                                singles_after=after["singles"], singles_baseline=sing_base)
    result.update(report=report, coincidence_baseline=coinc_base)
    return OptimizeResult(**result)


@dataclass
class SchmidtResult:
    singles_contrast: float
    coincidence_contrast: float
    singles_modes: float
    coincidence_modes: float
    schmidt_estimate: float
    plain_estimate: float
    n_configurations: int
    n_modes: int | None
    configuration: str
    true_schmidt_number: float
    singles_samples: np.ndarray = field(repr=False)
    coincidence_samples: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if not k.endswith("_samples")}


def run_schmidt(setup: Setup, n_configurations: int | None = None,
                finite_size: bool = True) -> SchmidtResult:
    """Contrast-ratio estimate of the Schmidt number at the target spot.

    With ``finite_size`` the mode counts use the exact law for the
    simulated number of fiber modes; ``plain_estimate`` is always the
    uncorrected ratio of 1/C**2 values.
    """
    n = n_configurations or setup.cfg.ensembles.schmidt_samples
    s, c = ensemble_samples(setup, n)
    cs, cc = contrast(s), contrast(c)
    n_modes = setup.fiber.mode_truncation if finite_size else None
    return SchmidtResult(cs, cc, effective_modes(cs, n_modes), effective_modes(cc, n_modes),
                         schmidt_estimate(cs, cc, n_modes), schmidt_estimate(cs, cc), n, n_modes,
                         setup.configuration, setup.state.schmidt_number, s, c)
