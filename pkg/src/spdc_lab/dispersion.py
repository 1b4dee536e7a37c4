"""
Temperature-dependent refractive indices of congruent lithium niobate.

Coefficient sets live in JSON files (see ``data/congruent_ln.json``) so the
choice of published fit is swappable. Wavelengths are in micrometres and
temperatures in degrees Celsius, exactly as the published formulas expect.

Supported per-polarization formula forms
----------------------------------------
``jundt``
    n^2 = a1 + b1 f + (a2 + b2 f) / (l^2 - (a3 + b3 f)^2)
          + (a4 + b4 f) / (l^2 - a5^2) - a6 l^2,
    f = (T - t0)(T + t1)
``edwards_lawrence``
    n^2 = a1 + (a2 + b1 F) / (l^2 - (a3 + b2 F)^2) + b3 F - a4 l^2,
    F = (T - t0)(T + t1)
``constant``
    n = n   (test stubs)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import RangeError

Polarization = Literal["ordinary", "extraordinary"]


@dataclass(frozen=True)
class SellmeierSet:
    name: str
    coefficients: dict
    valid_wavelength_range: tuple[float, float]
    valid_temperature_range: tuple[float, float]
    source: str = ""

    def __post_init__(self):
        for pol in ("ordinary", "extraordinary"):
            if pol not in self.coefficients:
                raise ValueError(f"Sellmeier set {self.name!r} lacks {pol} coefficients")
            form = self.coefficients[pol].get("form")
            if form not in _FORMS:
                raise ValueError(f"unknown Sellmeier form {form!r}")

    def __hash__(self):
        return hash((self.name, self.valid_wavelength_range, self.valid_temperature_range))

    @classmethod
    def from_dict(cls, d: dict) -> "SellmeierSet":
        return cls(
            name=d["name"],
            coefficients=d["coefficients"],
            valid_wavelength_range=tuple(d["valid_wavelength_um"]),
            valid_temperature_range=tuple(d["valid_temperature_c"]),
            source=d.get("source", ""),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "valid_wavelength_um": list(self.valid_wavelength_range),
            "valid_temperature_c": list(self.valid_temperature_range),
            "coefficients": self.coefficients,
        }

    @classmethod
    def from_json(cls, path: str | Path) -> "SellmeierSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def load_builtin(name: str = "congruent_ln") -> SellmeierSet:
    """Load one of the coefficient sets shipped in ``spdc_lab/data``."""
    text = resources.files("spdc_lab").joinpath("data").joinpath(f"{name}.json").read_text("utf-8")
    return SellmeierSet.from_dict(json.loads(text))


def _jundt(lam, T, c):
    f = (T - c["t0"]) * (T + c["t1"])
    l2 = lam * lam
    n2 = (
        c["a1"]
        + c["b1"] * f
        + (c["a2"] + c["b2"] * f) / (l2 - (c["a3"] + c["b3"] * f) ** 2)
        + (c["a4"] + c["b4"] * f) / (l2 - c["a5"] ** 2)
        - c["a6"] * l2
    )
    return np.sqrt(n2)


def _edwards_lawrence(lam, T, c):
    F = (T - c["t0"]) * (T + c["t1"])
    l2 = lam * lam
    n2 = (
        c["a1"]
        + (c["a2"] + c["b1"] * F) / (l2 - (c["a3"] + c["b2"] * F) ** 2)
        + c["b3"] * F
        - c["a4"] * l2
    )
    return np.sqrt(n2)


def _constant(lam, T, c):
    return c["n"] + 0.0 * np.asarray(lam, dtype=float) * np.asarray(T, dtype=float)


_FORMS = {"jundt": _jundt, "edwards_lawrence": _edwards_lawrence, "constant": _constant}


def check_range(lam_um, T_c, sset: SellmeierSet) -> None:
    lo, hi = sset.valid_wavelength_range
    lam = np.asarray(lam_um, dtype=float)
    if np.any(~np.isfinite(lam)) or lam.min() < lo or lam.max() > hi:
        bad = lam.min() if lam.min() < lo else lam.max()
        bound = f"lower bound {lo} um" if lam.min() < lo else f"upper bound {hi} um"
        raise RangeError(f"wavelength {bad:.6g} um violates {bound} of set {sset.name!r}")
    tlo, thi = sset.valid_temperature_range
    T = np.asarray(T_c, dtype=float)
    if np.any(~np.isfinite(T)) or T.min() < tlo or T.max() > thi:
        bad = T.min() if T.min() < tlo else T.max()
        bound = f"lower bound {tlo} C" if T.min() < tlo else f"upper bound {thi} C"
        raise RangeError(f"temperature {bad:.6g} C violates {bound} of set {sset.name!r}")


def refractive_index(lam_um, T_c, pol: Polarization, sset: SellmeierSet):
    """Principal refractive index for ``pol`` at wavelength ``lam_um`` and temperature ``T_c``.

    Accepts scalars or numpy arrays; returns a float for scalar input.
    """
    check_range(lam_um, T_c, sset)
    c = sset.coefficients[pol]
    n = _FORMS[c["form"]](np.asarray(lam_um, dtype=float), np.asarray(T_c, dtype=float), c)
    return float(n) if np.ndim(n) == 0 else n


def ellipsoid_index(n_o, n_e, theta_oa):
    """Extraordinary-wave index at angle ``theta_oa`` from the optic axis."""
    s = np.sin(theta_oa)
    c = np.cos(theta_oa)
    return 1.0 / np.sqrt(s * s / (n_e * n_e) + c * c / (n_o * n_o))


def angle_dependent_index(lam_um, T_c, theta_oa, sset: SellmeierSet):
    theta = np.asarray(theta_oa, dtype=float)
    if np.any(theta < 0) or np.any(theta > np.pi / 2 + 1e-15):
        raise ValueError("theta_oa must lie in [0, pi/2]")
    n_o = refractive_index(lam_um, T_c, "ordinary", sset)
    n_e = refractive_index(lam_um, T_c, "extraordinary", sset)
    n = ellipsoid_index(n_o, n_e, theta)
    return float(n) if np.ndim(n) == 0 else n


def wavevector(lam_um, T_c, pol: Polarization, sset: SellmeierSet):
    """Wavenumber 2*pi*n/lambda in rad/um."""
    return 2.0 * np.pi * refractive_index(lam_um, T_c, pol, sset) / np.asarray(lam_um, dtype=float)
