"""
Spectral filtering and two-photon temporal overlap.

Bandwidths are FWHM in GHz of signal optical frequency, path offsets in mm
and times in ps. The phase-matching sinc^2 envelope is treated as a Gaussian
of equal FWHM whenever it is combined with Gaussian filters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import FitError, UnboundedBandwidthError

C_MM_PER_PS = 0.299792458
C_NM_GHZ = 299792458.0
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
# Gaussian transform limit, FWHM(t) * FWHM(nu) = 2 ln2 / pi
GAUSSIAN_TBP = 2.0 * math.log(2.0) / math.pi

# Ratio of the half-visibility width of a path-offset scan to the intensity
# FWHM of the fiber-coupled photon wavepacket (11 ps scan width <-> 8.8 ps
# pulse for this source). Coherent overlap of two identical transform-limited
# Gaussian amplitudes would give 2 and incoherent intensity overlap sqrt(2);
# the source's own conversion sits below both, so it is kept as an
# adjustable model constant.
SCAN_TO_PULSE_RATIO = 1.25


@dataclass(frozen=True)
class SpectralFilter:
    center: float  # nm
    fwhm: float
    unit: Literal["nm", "GHz"] = "nm"
    shape: Literal["gaussian", "rectangular"] = "gaussian"
    peak_transmission: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.fwhm <= 0:
            raise ValueError("filter FWHM must be positive")
        if not 0.0 < self.peak_transmission <= 1.0:
            raise ValueError("peak transmission must lie in (0, 1]")
        if self.unit not in ("nm", "GHz"):
            raise ValueError(f"unknown bandwidth unit {self.unit!r}")
        if self.shape not in ("gaussian", "rectangular"):
            raise ValueError(f"unknown filter shape {self.shape!r}")

    @property
    def fwhm_ghz(self) -> float:
        if self.unit == "GHz":
            return self.fwhm
        return C_NM_GHZ * self.fwhm / self.center**2

    @property
    def fwhm_nm(self) -> float:
        if self.unit == "nm":
            return self.fwhm
        return self.fwhm * self.center**2 / C_NM_GHZ

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "center_nm": self.center,
            "fwhm": self.fwhm,
            "unit": self.unit,
            "shape": self.shape,
            "peak_transmission": self.peak_transmission,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralFilter":
        return cls(
            center=d["center_nm"],
            fwhm=d["fwhm"],
            unit=d.get("unit", "nm"),
            shape=d.get("shape", "gaussian"),
            peak_transmission=d.get("peak_transmission", 1.0),
            name=d.get("name", ""),
        )


@dataclass
class ScanResult:
    """Ordered (setting, value, uncertainty) series with free-form metadata.

    ``metadata`` conventionally holds ``kind``, ``setting_unit``,
    ``value_unit`` and any fixed parameters of the scan.
    """

    settings: np.ndarray
    values: np.ndarray
    uncertainties: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.settings = np.asarray(self.settings, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.uncertainties = np.asarray(self.uncertainties, dtype=float)
        if not (self.settings.shape == self.values.shape == self.uncertainties.shape):
            raise ValueError("settings, values and uncertainties must have equal length")
        d = np.diff(self.settings)
        if d.size and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("scan settings must be strictly monotone")
        if np.any(self.uncertainties < 0):
            raise ValueError("uncertainties must be non-negative")

    def __len__(self):
        return self.settings.size


def effective_pair_bandwidth(pm_fwhm: float, filters: Sequence[SpectralFilter] = ()) -> float:
    """Combine phase matching and filters: 1/B^2 = sum 1/B_i^2, capped by rectangular filters."""
    widths = []
    caps = []
    if pm_fwhm is not None and math.isfinite(pm_fwhm):
        if pm_fwhm <= 0:
            raise ValueError("phase-matching bandwidth must be positive")
        widths.append(pm_fwhm)
    for f in filters:
        (caps if f.shape == "rectangular" else widths).append(f.fwhm_ghz)
    if not widths and not caps:
        raise UnboundedBandwidthError("no bandwidth-limiting element supplied")
    out = math.inf
    if widths:
        out = 1.0 / math.sqrt(math.fsum(1.0 / w**2 for w in widths))
    if caps:
        out = min(out, min(caps))
    return out


def pulse_width_ps(bandwidth_ghz: float) -> float:
    """Intensity FWHM (ps) of a transform-limited Gaussian wavepacket."""
    return GAUSSIAN_TBP / bandwidth_ghz * 1e3


def bandwidth_from_pulse_ps(pulse_ps: float) -> float:
    return GAUSSIAN_TBP / (pulse_ps * 1e-3)


def visibility_fwhm_mm(pair_bandwidth: float, ratio: float = SCAN_TO_PULSE_RATIO) -> float:
    """Full path-offset width at half visibility for a given pair bandwidth."""
    return ratio * pulse_width_ps(pair_bandwidth) * C_MM_PER_PS


def overlap_visibility(path_offset, pair_bandwidth: float, ratio: float = SCAN_TO_PULSE_RATIO):
    """Gaussian two-photon visibility envelope versus path-length offset (mm); V(0) = 1."""
    if pair_bandwidth <= 0:
        raise ValueError("pair bandwidth must be positive")
    sigma_mm = visibility_fwhm_mm(pair_bandwidth, ratio) / FWHM_PER_SIGMA
    x = np.asarray(path_offset, dtype=float)
    v = np.exp(-0.5 * (x / sigma_mm) ** 2)
    return float(v) if np.ndim(v) == 0 else v


@dataclass(frozen=True)
class BandwidthFit:
    fwhm_mm: float
    fwhm_ps: float
    pulse_width_ps: float
    bandwidth_ghz: float
    peak_visibility: float
    center_mm: float
    bandwidth_stderr_ghz: float
    residual_rms: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _gauss(x, a, x0, s):
    return a * np.exp(-0.5 * ((x - x0) / s) ** 2)


def bandwidth_from_scan(scan: ScanResult, ratio: float = SCAN_TO_PULSE_RATIO) -> BandwidthFit:
    """Fit a Gaussian to visibility versus mirror displacement and infer the pair bandwidth."""
    x = scan.settings
    y = scan.values
    if x.size < 5:
        raise FitError("too few scan points", {"n_points": int(x.size)})
    i = int(np.argmax(y))
    peak = y[i]
    if peak <= 0:
        raise FitError("scan has no positive visibility", {"peak": float(peak)})
    half = 0.5 * peak
    if not (np.any(y[:i] < half) and np.any(y[i + 1 :] < half)):
        raise FitError(
            "scan does not extend beyond half visibility on both sides of the peak",
            {"peak": float(peak), "left_min": float(y[:i].min()) if i else None,
             "right_min": float(y[i + 1 :].min()) if i + 1 < y.size else None},
        )
    above = x[y >= half]
    s0 = max((above.max() - above.min()) / FWHM_PER_SIGMA, 1e-6)
    sigma = scan.uncertainties if np.all(scan.uncertainties > 0) else None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(_gauss, x, y, p0=[peak, x[i], s0], sigma=sigma, absolute_sigma=sigma is not None, maxfev=10000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Gaussian fit failed: {exc}", {"p0": [float(peak), float(x[i]), float(s0)]}) from exc
    resid = y - _gauss(x, *popt)
    rms = float(np.sqrt(np.mean(resid**2)))
    a, x0, s = popt
    s = abs(s)
    exact = rms <= 1e-9 * abs(a)
    if rms > 0.25 * abs(a) or not (exact or np.all(np.isfinite(pcov))):
        raise FitError("Gaussian fit is poor", {"residual_rms": rms, "amplitude": float(a)})
    fwhm_mm = FWHM_PER_SIGMA * s
    fwhm_ps = fwhm_mm / C_MM_PER_PS
    pulse = fwhm_ps / ratio
    bw = bandwidth_from_pulse_ps(pulse)
    # noiseless data leaves the covariance undefined
    s_err = 0.0 if exact else math.sqrt(pcov[2, 2])
    return BandwidthFit(
        fwhm_mm=float(fwhm_mm),
        fwhm_ps=float(fwhm_ps),
        pulse_width_ps=float(pulse),
        bandwidth_ghz=float(bw),
        peak_visibility=float(a),
        center_mm=float(x0),
        bandwidth_stderr_ghz=float(bw * s_err / s),
        residual_rms=rms,
    )


def synthetic_visibility_scan(pair_bandwidth: float, offsets_mm, peak: float = 1.0) -> ScanResult:
    x = np.asarray(offsets_mm, dtype=float)
    return ScanResult(
        x,
        peak * overlap_visibility(x, pair_bandwidth),
        np.zeros_like(x),
        {"kind": "path_offset_visibility", "setting_unit": "mm", "value_unit": "visibility",
         "pair_bandwidth_ghz": pair_bandwidth},
    )
