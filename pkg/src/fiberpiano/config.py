"""Experiment configuration: JSON document <-> nested dataclasses.

Units live in the key names (``_um``, ``_nm``, ``_s``). Keys starting with
an underscore are commentary and ignored on load.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np


class ConfigError(ValueError):
    pass


@dataclass
class FiberSection:
    core_radius_um: float = 25.0
    numerical_aperture: float = 0.2
    wavelength_nm: float = 807.6
    mode_count: int = 30


@dataclass
class GridSection:
    side_um: float = 120.0
    samples_per_side: int = 256


@dataclass
class ActuatorSection:
    count: int = 37
    # calibrated: one actuator swept over full stroke leaves speckle correlation 0.3
    coupling_strength: float = 0.92
    loss_coefficient: float = 0.03
    mode_dependent_loss: bool = False


@dataclass
class StateSection:
    schmidt_number: float = 15.0
    spectrum: str = "geometric"
    configuration: str = "heralded"


@dataclass
class DetectorSection:
    magnification: float = 12.5
    collection_radius_um: float = 25.0
    target_um: list = field(default_factory=lambda: [3.0, -2.0])
    fixed_um: list = field(default_factory=lambda: [-4.0, 3.0])
    herald_um: list = field(default_factory=lambda: [1.5, 1.0])
    two_spot_collection_radius_um: float = 50.0
    two_spot_um: list = field(default_factory=lambda: [[0.0, 8.0], [0.0, -8.0]])


@dataclass
class ScanSection:
    half_width_um: float = 16.0
    points: int = 33


@dataclass
class SourceSection:
    pairs_per_window: float = 1.0e5
    integration_time_s: float = 5.0
    poisson_noise: bool = False


@dataclass
class CostSection:
    variant: str = "single_spot"
    alpha: float = 0.04


@dataclass
class PsoSection:
    swarm_size: int = 30
    max_iterations: int = 500
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    velocity_clamp: float = 0.3
    evaluations_per_cost: int = 1


@dataclass
class EnsembleSection:
    baseline_samples: int = 100
    speckle_samples: int = 500
    schmidt_samples: int = 1900


@dataclass
class ExperimentConfig:
    seed: int = 20230611
    fiber: FiberSection = field(default_factory=FiberSection)
    grid: GridSection = field(default_factory=GridSection)
    actuators: ActuatorSection = field(default_factory=ActuatorSection)
    state: StateSection = field(default_factory=StateSection)
    detectors: DetectorSection = field(default_factory=DetectorSection)
    scan: ScanSection = field(default_factory=ScanSection)
    source: SourceSection = field(default_factory=SourceSection)
    cost: CostSection = field(default_factory=CostSection)
    pso: PsoSection = field(default_factory=PsoSection)
    ensembles: EnsembleSection = field(default_factory=EnsembleSection)
    workers: int = 1
    output_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def derived_seed(self, stream: str) -> int:
        """Independent, reproducible seed for one random stream."""
        key = [self.seed] + [ord(ch) for ch in stream]
        return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint32)[0])

    def seeds(self) -> dict:
        return {name: self.derived_seed(name) for name in SEED_STREAMS}

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with some fields of some sections overridden, e.g. state={"schmidt_number": 1}."""
        data = self.to_dict()
        for key, val in sections.items():
            if isinstance(val, dict):
                data[key].update(val)
            else:
                data[key] = val
        return from_dict(data)


SEED_STREAMS = ("fiber", "actuators", "pso", "baseline", "ensemble", "noise")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "patternProperties": {"^_": {}}, "additionalProperties": False}


SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "fiber": _obj({
        "core_radius_um": _pos,
        "numerical_aperture": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "wavelength_nm": _pos,
        "mode_count": _posint,
    }),
    "grid": _obj({"side_um": _pos, "samples_per_side": {"type": "integer", "minimum": 64}}),
    "actuators": _obj({
        "count": _posint,
        "coupling_strength": _pos,
        "loss_coefficient": {"type": "number", "minimum": 0},
        "mode_dependent_loss": {"type": "boolean"},
    }),
    "state": _obj({
        "schmidt_number": {"type": "number", "minimum": 1},
        "spectrum": {"enum": ["geometric", "equal"]},
        "configuration": {"enum": ["heralded", "two_photon"]},
    }),
    "detectors": _obj({
        "magnification": _pos,
        "collection_radius_um": _pos,
        "target_um": _point,
        "fixed_um": _point,
        "herald_um": _point,
        "two_spot_collection_radius_um": _pos,
        "two_spot_um": {"type": "array", "items": _point, "minItems": 2, "maxItems": 2},
    }),
    "scan": _obj({"half_width_um": _pos, "points": {"type": "integer", "minimum": 2}}),
    "source": _obj({
        "pairs_per_window": _pos,
        "integration_time_s": _pos,
        "poisson_noise": {"type": "boolean"},
    }),
    "cost": _obj({
        "variant": {"enum": ["single_spot", "two_spot", "smf_coupling", "singles_feedback"]},
        "alpha": {"type": "number", "minimum": 0},
    }),
    "pso": _obj({
        "swarm_size": {"type": "integer", "minimum": 2},
        "max_iterations": {"type": "integer", "minimum": 0},
        "inertia": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "cognitive": _pos,
        "social": _pos,
        "velocity_clamp": _pos,
        "evaluations_per_cost": _posint,
    }),
    "ensembles": _obj({
        "baseline_samples": {"type": "integer", "minimum": 2},
        "speckle_samples": {"type": "integer", "minimum": 2},
        "schmidt_samples": {"type": "integer", "minimum": 2},
    }),
    "workers": _posint,
    "output_dir": {"type": ["string", "null"]},
})

_SECTION_TYPES = {
    "fiber": FiberSection, "grid": GridSection, "actuators": ActuatorSection,
    "state": StateSection, "detectors": DetectorSection, "scan": ScanSection,
    "source": SourceSection, "cost": CostSection, "pso": PsoSection,
    "ensembles": EnsembleSection,
}


def _strip_comments(obj):
    if isinstance(obj, dict):
        return {k: _strip_comments(v) for k, v in obj.items() if not k.startswith("_")}
    return obj


def validate(data: dict):
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {err.message}")
    state = data.get("state", {})
    fiber = data.get("fiber", {})
    k = state.get("schmidt_number", StateSection.schmidt_number)
    n = fiber.get("mode_count", FiberSection.mode_count)
    if k > n:
        raise ConfigError(f"state.schmidt_number: {k} exceeds fiber.mode_count {n}")
    if state.get("spectrum") == "equal" and k != int(k):
        raise ConfigError("state.schmidt_number: equal-weight spectrum needs an integer value")


def from_dict(data: dict) -> ExperimentConfig:
    data = _strip_comments(copy.deepcopy(data))
    validate(data)
    kwargs = {}
    for name, val in data.items():
        if name in _SECTION_TYPES:
            kwargs[name] = _SECTION_TYPES[name](**val)
        else:
            kwargs[name] = val
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    """Load a config file or the config embedded in a run manifest."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if isinstance(data, dict) and data.get("kind") == "run-manifest":
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a JSON object")
    return from_dict(data)


_DOCS = {
    "_doc": "Desk-scale fiber piano experiment. Units are part of each key name.",
    "fiber": "Graded-index fiber; mode_count modes are simulated (capacity ~V^2/8).",
    "grid": "Transverse sampling grid of the fiber output facet.",
    "actuators": "Bend actuators; stroke is normalized to [-1, 1]. loss_coefficient beta "
                 "attenuates power by exp(-beta v^2) per actuator.",
    "state": "SPDC state. spectrum: geometric | equal. configuration: heralded | two_photon.",
    "detectors": "Positions are at the fiber facet (um). Collection fiber radii are in the "
                 "detector plane and divided by the imaging magnification.",
    "scan": "Square raster scanned by the moving detector.",
    "source": "Rates are expected counts per acquisition window; poisson_noise adds shot noise.",
    "cost": "variant: single_spot | two_spot | smf_coupling | singles_feedback; alpha weights "
            "the two-spot balance penalty.",
    "pso": "Particle swarm; velocity_clamp is a fraction of the stroke range.",
    "ensembles": "Random-configuration sample counts for baselines and contrast statistics.",
}


def default_document() -> dict:
    """Default config as a JSON-ready dict with commentary keys."""
    data = ExperimentConfig().to_dict()
    doc = {"_doc": _DOCS["_doc"]}
    for key, val in data.items():
        if isinstance(val, dict) and key in _DOCS:
            val = {"_doc": _DOCS[key], **val}
        doc[key] = val
    return doc


def write_default(path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(default_document(), indent=2) + "\n")
    return path
