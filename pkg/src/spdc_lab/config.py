"""Experiment configuration: loading, validation and canonical hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .dispersion import SellmeierSet, load_builtin
from .errors import ConfigurationError
from .montecarlo import DetectorModel, RateBudget, TimingModel
from .phasematch import CrystalSpec, pm_bandwidth
from .polarization import StateNoise
from .spectral import SpectralFilter, effective_pair_bandwidth

_REQUIRED = ("seed", "crystal", "sellmeier", "detectors", "timing", "budgets", "filters", "state_noise", "experiments")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _strip_private(d):
    if isinstance(d, dict):
        return {k: _strip_private(v) for k, v in d.items() if not k.startswith("_")}
    if isinstance(d, list):
        return [_strip_private(v) for v in d]
    return d


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int
    output_dir: Path
    crystal: CrystalSpec
    detectors: tuple[DetectorModel, DetectorModel]
    timing: TimingModel
    budgets: dict[str, RateBudget]
    filters: dict[str, SpectralFilter]
    state_noise: dict[str, StateNoise]
    experiments: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        missing = [k for k in _REQUIRED if k not in d]
        if missing:
            raise ConfigurationError(f"config lacks required sections: {', '.join(missing)}")
        raw = _strip_private(copy.deepcopy(d))
        try:
            seed = int(raw["seed"])
            sel = raw["sellmeier"]
            if isinstance(sel, str):
                sset = load_builtin(sel)
            else:
                sset = SellmeierSet.from_dict(sel)
            cr = dict(raw["crystal"])
            cr.pop("calibration", None)
            crystal = CrystalSpec(sellmeier=sset, **cr)
            dets = raw["detectors"]
            detectors = (DetectorModel.from_dict(dets["signal"]), DetectorModel.from_dict(dets["idler"]))
            timing = TimingModel(**raw["timing"])
            budgets = {k: RateBudget.from_dict({"name": k, **v}) for k, v in raw["budgets"].items()}
            filters = {k: SpectralFilter.from_dict({"name": k, **v}) for k, v in raw["filters"].items()}
            noise = {k: StateNoise(**v) for k, v in raw["state_noise"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid config: {exc}") from exc
        out = Path(raw.get("output_dir", "spdc_out"))
        if base_dir is not None and not out.is_absolute():
            out = base_dir / out
        cfg = cls(raw, seed, out, crystal, detectors, timing, budgets, filters, noise, raw["experiments"])
        cfg._check_references()
        return cfg

    def _check_references(self):
        for name, ex in self.experiments.items():
            if "budget" in ex and ex["budget"] not in self.budgets:
                raise ConfigurationError(f"experiment {name!r} references unknown budget {ex['budget']!r}")
            if "noise" in ex and ex["noise"] not in self.state_noise:
                raise ConfigurationError(f"experiment {name!r} references unknown noise model {ex['noise']!r}")
            for f in ex.get("filters", []):
                if f not in self.filters:
                    raise ConfigurationError(f"experiment {name!r} references unknown filter {f!r}")

    def to_dict(self) -> dict:
        """Canonical content; ``output_dir`` is excluded because it does not affect results."""
        d = {k: v for k, v in self.raw.items() if k != "output_dir"}
        d["seed"] = self.seed
        return d

    @cached_property
    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return replace(self, raw=raw, seed=int(seed))

    def with_output_dir(self, path) -> "ExperimentConfig":
        return replace(self, output_dir=Path(path))

    # --- lookups -------------------------------------------------------------

    def budget(self, name: str) -> RateBudget:
        try:
            return self.budgets[name]
        except KeyError:
            raise ConfigurationError(f"unknown budget {name!r}") from None

    def noise(self, name: str) -> StateNoise:
        try:
            return self.state_noise[name]
        except KeyError:
            raise ConfigurationError(f"unknown noise model {name!r}") from None

    def filter(self, name: str) -> SpectralFilter:
        try:
            return self.filters[name]
        except KeyError:
            raise ConfigurationError(f"unknown filter {name!r}") from None

    @property
    def calibration_temperature(self) -> float:
        return float(self.raw["crystal"].get("calibration", {}).get("temperature_c", 183.6))

    def pair_bandwidth(self, filter_names) -> float:
        pm = pm_bandwidth(self.calibration_temperature, self.crystal)
        return effective_pair_bandwidth(pm, [self.filter(f) for f in filter_names])

    def fringe_sweep(self) -> np.ndarray:
        s = self.experiments["fringe"]["sweep"]
        return np.linspace(s["start_rad"], s["stop_rad"], int(s["points"]))

    def polscan_sweep(self) -> np.ndarray:
        s = self.experiments["polscan"]["theta_i"]
        return np.linspace(s["start_rad"], s["stop_rad"], int(s["points"]))

    def bandwidth_offsets(self) -> np.ndarray:
        s = self.experiments["bandwidth"]["offsets_mm"]
        n = int(round((s["stop"] - s["start"]) / s["step"])) + 1
        return s["start"] + s["step"] * np.arange(n)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        with open(p, encoding="utf-8") as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {p} is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(d, base_dir=None)


def default_config_path() -> Path:
    return Path(str(resources.files("spdc_lab").joinpath("data").joinpath("paper.json")))


def load_default_config() -> ExperimentConfig:
    return load_config(default_config_path())


def provenance() -> dict:
    with open(default_config_path(), encoding="utf-8") as fh:
        return json.load(fh).get("_provenance", {})


def angles_from_text(text: str) -> list[float]:
    """Parse comma-separated angles; accepts plain radians or expressions like ``pi/8``."""
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower().replace(" ", "")
        if not tok:
            continue
        sign = -1.0 if tok.startswith("-") else 1.0
        tok = tok.lstrip("+-")
        if "pi" in tok:
            num, _, den = tok.partition("/")
            coef = num.replace("*", "").replace("pi", "")
            val = (float(coef) if coef else 1.0) * math.pi / (float(den) if den else 1.0)
        else:
            val = float(tok)
        out.append(sign * val)
    return out
