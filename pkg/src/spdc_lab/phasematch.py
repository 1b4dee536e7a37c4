"""
Quasi-phase-matching for type-I (e -> e + e) down-conversion in PPLN.

All three waves are extraordinary-polarized and the pump travels along the
crystal x axis. The grating supplies a wavevector ``m * 2*pi / period``.
Public wavelengths are in nm, temperatures in C, wavevectors in rad/um and
angles of ``PhaseMatchPoint`` in mrad.

Sign convention::

    delta_k = k_p - k_s - k_i - K_grating

Noncollinear emission at a fixed signal wavelength requires
``delta_k(collinear) < 0``; the longitudinal condition is then satisfied by
tilting signal and idler to opposite sides of the pump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .dispersion import SellmeierSet, load_builtin, refractive_index
from .errors import NoPhaseMatchError, NotPhaseMatchableError

Plane = Literal["y", "z"]

C_NM_GHZ = 299792458.0  # c in nm*GHz
# root of sin(x)^2/x^2 = 1/2
SINC2_HALF = brentq(lambda x: (math.sin(x) / x) ** 2 - 0.5, 1.0, 2.0, xtol=1e-15, rtol=8.9e-16)

_LAM_XTOL_UM = 1e-15
_ANGLE_XTOL = 1e-15


@dataclass(frozen=True)
class CrystalSpec:
    length_mm: float = 20.0
    thickness_mm: float = 0.5
    grating_period_um: float = 21.6
    qpm_order: int = 3
    pump_wavelength_nm: float = 532.0
    calibration_delta_period_um: float = 0.0
    sellmeier: SellmeierSet = field(default_factory=load_builtin)

    def __post_init__(self):
        if self.length_mm <= 0:
            raise ValueError("crystal length must be positive")
        if self.grating_period_um <= 0:
            raise ValueError("grating period must be positive")
        if self.qpm_order < 1 or self.qpm_order % 2 == 0:
            raise ValueError("QPM order must be an odd positive integer")
        if abs(self.calibration_delta_period_um) >= 0.1:
            raise ValueError("calibration_delta_period_um must satisfy |delta| < 0.1 um")

    @property
    def effective_period_um(self) -> float:
        return self.grating_period_um + self.calibration_delta_period_um

    @property
    def grating_k(self) -> float:
        return self.qpm_order * 2.0 * math.pi / self.effective_period_um

    @property
    def length_um(self) -> float:
        return self.length_mm * 1000.0

    def to_dict(self) -> dict:
        return {
            "length_mm": self.length_mm,
            "thickness_mm": self.thickness_mm,
            "grating_period_um": self.grating_period_um,
            "qpm_order": self.qpm_order,
            "pump_wavelength_nm": self.pump_wavelength_nm,
            "calibration_delta_period_um": self.calibration_delta_period_um,
            "sellmeier": self.sellmeier.name,
        }


@dataclass(frozen=True)
class PhaseMatchPoint:
    signal_wavelength: float  # nm
    idler_wavelength: float  # nm
    temperature: float  # C
    delta_k: float  # rad/um, collinear longitudinal residual
    signal_angle_internal: float  # mrad
    signal_angle_external: float
    idler_angle_internal: float
    idler_angle_external: float
    plane: str
    transverse_residual: float = 0.0  # rad/um
    longitudinal_residual: float = 0.0  # rad/um


def idler_wavelength(signal_nm, pump_nm):
    """Energy-conjugate idler wavelength in nm."""
    return 1.0 / (1.0 / pump_nm - 1.0 / signal_nm)


def _k_e(lam_um, T, sset):
    return 2.0 * math.pi * refractive_index(lam_um, T, "extraordinary", sset) / lam_um


def qpm_mismatch(signal_nm: float, T: float, crystal: CrystalSpec) -> float:
    """Collinear mismatch ``k_p - k_s - k_i - K`` in rad/um."""
    lp = crystal.pump_wavelength_nm * 1e-3
    ls = signal_nm * 1e-3
    li = idler_wavelength(signal_nm, crystal.pump_wavelength_nm) * 1e-3
    s = crystal.sellmeier
    return _k_e(lp, T, s) - _k_e(ls, T, s) - _k_e(li, T, s) - crystal.grating_k


def collinear_pm_wavelength(T: float, crystal: CrystalSpec, window=(750.0, 850.0)) -> float:
    lo, hi = window
    f_lo = qpm_mismatch(lo, T, crystal)
    f_hi = qpm_mismatch(hi, T, crystal)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise NoPhaseMatchError(
            f"no collinear phase matching in window {lo}-{hi} nm at T={T} C "
            f"(mismatch {f_lo:.4g} and {f_hi:.4g} rad/um at the endpoints)"
        )
    root_um = brentq(
        lambda x: qpm_mismatch(x * 1e3, T, crystal),
        lo * 1e-3,
        hi * 1e-3,
        xtol=_LAM_XTOL_UM,
        rtol=8.9e-16,
        maxiter=200,
    )
    return root_um * 1e3


def calibrate(
    crystal: CrystalSpec, temperature: float = 183.6, signal_nm: float = 795.0
) -> CrystalSpec:
    """Return ``crystal`` with the period offset that puts collinear matching at (signal_nm, temperature)."""
    lp = crystal.pump_wavelength_nm * 1e-3
    ls = signal_nm * 1e-3
    li = idler_wavelength(signal_nm, crystal.pump_wavelength_nm) * 1e-3
    s = crystal.sellmeier
    dk0 = _k_e(lp, temperature, s) - _k_e(ls, temperature, s) - _k_e(li, temperature, s)
    period = crystal.qpm_order * 2.0 * math.pi / dk0
    return replace(crystal, calibration_delta_period_um=period - crystal.grating_period_um)


def signal_frequency_ghz(lam_nm):
    return C_NM_GHZ / np.asarray(lam_nm, dtype=float)


def tuning_slope(T: float, crystal: CrystalSpec, dT: float = 0.05) -> float:
    """d(nu_signal)/dT of the collinear point in GHz/C (central difference)."""
    lp = collinear_pm_wavelength(T + dT, crystal)
    lm = collinear_pm_wavelength(T - dT, crystal)
    return float((signal_frequency_ghz(lp) - signal_frequency_ghz(lm)) / (2 * dT))


def spectral_density(signal_nm, T: float, crystal: CrystalSpec):
    """Collinear sinc^2(delta_k L / 2) envelope, 1 at exact phase matching."""
    dk = np.vectorize(lambda x: qpm_mismatch(x, T, crystal))(signal_nm)
    x = dk * crystal.length_um / 2.0
    out = np.sinc(x / np.pi) ** 2
    return float(out) if np.ndim(out) == 0 else out


def half_power_wavelengths(T: float, crystal: CrystalSpec) -> tuple[float, float]:
    lam0 = collinear_pm_wavelength(T, crystal)
    target = 2.0 * SINC2_HALF / crystal.length_um
    roots = []
    for sign in (-1.0, 1.0):
        f = lambda x: abs(qpm_mismatch(x * 1e3, T, crystal)) - target
        # walk outward until the mismatch exceeds the half-power value
        step = 0.05
        edge = lam0 + sign * step
        while f(edge * 1e-3) < 0:
            step *= 2
            edge = lam0 + sign * step
            if step > 50:
                raise NoPhaseMatchError("half-power point not bracketed")
        a, b = sorted((lam0 * 1e-3, edge * 1e-3))
        r = brentq(f, a, b, xtol=_LAM_XTOL_UM, rtol=8.9e-16)
        roots.append(r * 1e3)
    return roots[0], roots[1]


def pm_bandwidth(T: float, crystal: CrystalSpec) -> float:
    """FWHM of the collinear sinc^2 envelope expressed in signal frequency (GHz)."""
    l1, l2 = half_power_wavelengths(T, crystal)
    return float(abs(signal_frequency_ghz(l1) - signal_frequency_ghz(l2)))


def idler_interval_nm(signal_lo_nm: float, signal_hi_nm: float, pump_nm: float) -> float:
    """Width in nm of the idler interval energy-conjugate to a signal interval."""
    return abs(idler_wavelength(signal_lo_nm, pump_nm) - idler_wavelength(signal_hi_nm, pump_nm))


# --- noncollinear solver -----------------------------------------------------


class _Wave:
    """Index of one extraordinary wave as a function of its tilt in a given plane."""

    def __init__(self, lam_um: float, T: float, sset: SellmeierSet, plane: Plane):
        self.lam = lam_um
        self.n_e = refractive_index(lam_um, T, "extraordinary", sset)
        self.n_o = refractive_index(lam_um, T, "ordinary", sset)
        self.plane = plane

    def n(self, theta: float) -> float:
        if self.plane == "y":
            return self.n_e
        # tilt toward z: angle to optic axis is pi/2 - theta
        c2 = math.sin(theta) ** 2
        return 1.0 / math.sqrt((1.0 - c2) / self.n_e**2 + c2 / self.n_o**2)

    def k(self, theta: float) -> float:
        return 2.0 * math.pi * self.n(theta) / self.lam


def emission_angles(signal_nm: float, T: float, crystal: CrystalSpec, plane: Plane = "y") -> PhaseMatchPoint:
    """Solve energy, longitudinal QPM and transverse momentum for the internal angles.

    Raises :class:`NotPhaseMatchableError` when the collinear mismatch is
    positive, i.e. the signal wavelength lies on the long side of
    ``collinear_pm_wavelength(T)``.
    """
    if plane not in ("y", "z"):
        raise ValueError("plane must be 'y' or 'z'")
    pump_nm = crystal.pump_wavelength_nm
    idler_nm = idler_wavelength(signal_nm, pump_nm)
    s = crystal.sellmeier
    sig = _Wave(signal_nm * 1e-3, T, s, plane)
    idl = _Wave(idler_nm * 1e-3, T, s, plane)
    k_p = _k_e(pump_nm * 1e-3, T, s)
    target = k_p - crystal.grating_k  # required longitudinal sum k_s cos + k_i cos
    dk = k_p - sig.k(0.0) - idl.k(0.0) - crystal.grating_k

    if abs(dk) < 1e-12:
        return PhaseMatchPoint(signal_nm, idler_nm, T, dk, 0.0, 0.0, 0.0, 0.0, plane)
    if dk > 0:
        raise NotPhaseMatchableError(
            f"{signal_nm} nm is not phase-matchable at T={T} C "
            f"(collinear mismatch {dk:.4g} rad/um > 0)"
        )

    k_i_max = idl.k(math.pi / 2)

    def idler_angle(q: float) -> float:
        # solve k_i(theta) sin(theta) = q
        return brentq(lambda t: idl.k(t) * math.sin(t) - q, 0.0, math.pi / 2, xtol=_ANGLE_XTOL, rtol=8.9e-16)

    def g(ts: float) -> float:
        q = sig.k(ts) * math.sin(ts)
        ti = idler_angle(q)
        return sig.k(ts) * math.cos(ts) + idl.k(ti) * math.cos(ti) - target

    # largest signal angle with a real idler solution
    ts_max = brentq(lambda t: sig.k(t) * math.sin(t) - k_i_max, 0.0, math.pi / 2)
    hi = 1e-3
    while g(hi) > 0:
        hi *= 2.0
        if hi >= ts_max:
            hi = ts_max * (1 - 1e-12)
            if g(hi) > 0:
                raise NotPhaseMatchableError(f"no real noncollinear solution for {signal_nm} nm at T={T} C")
            break
    ts = brentq(g, 0.0, hi, xtol=_ANGLE_XTOL, rtol=8.9e-16, maxiter=200)
    q = sig.k(ts) * math.sin(ts)
    ti = idler_angle(q)
    transverse = sig.k(ts) * math.sin(ts) - idl.k(ti) * math.sin(ti)
    longitudinal = g(ts)
    ext_s = math.asin(min(1.0, sig.n(ts) * math.sin(ts)))
    ext_i = math.asin(min(1.0, idl.n(ti) * math.sin(ti)))
    return PhaseMatchPoint(
        signal_wavelength=signal_nm,
        idler_wavelength=idler_nm,
        temperature=T,
        delta_k=dk,
        signal_angle_internal=ts * 1e3,
        signal_angle_external=ext_s * 1e3,
        idler_angle_internal=ti * 1e3,
        idler_angle_external=ext_i * 1e3,
        plane=plane,
        transverse_residual=abs(transverse),
        longitudinal_residual=abs(longitudinal),
    )


# --- far-field ring images ---------------------------------------------------


@dataclass(frozen=True)
class RingGrid:
    n_pixels: int = 201
    half_width_mrad: float = 40.0

    @property
    def axis_mrad(self) -> np.ndarray:
        return np.linspace(-self.half_width_mrad, self.half_width_mrad, self.n_pixels)

    @property
    def pixel_mrad(self) -> float:
        return 2 * self.half_width_mrad / (self.n_pixels - 1)


@dataclass
class RingImage:
    intensity: np.ndarray  # rows: z axis, columns: y axis
    y_mrad: np.ndarray
    z_mrad: np.ndarray
    temperature: float
    filter_center_nm: float
    filter_fwhm_nm: float
    filter_shape: str

    def integrated(self) -> float:
        dy = self.y_mrad[1] - self.y_mrad[0]
        dz = self.z_mrad[1] - self.z_mrad[0]
        return float(self.intensity.sum() * dy * dz)

    def header(self) -> dict:
        return {
            "temperature_c": self.temperature,
            "filter": {
                "center_nm": self.filter_center_nm,
                "fwhm_nm": self.filter_fwhm_nm,
                "shape": self.filter_shape,
            },
            "grid": {
                "n_pixels": int(self.y_mrad.size),
                "half_width_mrad": float(self.y_mrad[-1]),
                "rows": "z (external angle, mrad)",
                "columns": "y (external angle, mrad)",
            },
        }


def _filter_samples(center_nm: float, fwhm_nm: float, shape: str, n: int):
    if shape == "gaussian":
        lam = np.linspace(center_nm - 2.0 * fwhm_nm, center_nm + 2.0 * fwhm_nm, n)
        sigma = fwhm_nm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        w = np.exp(-0.5 * ((lam - center_nm) / sigma) ** 2)
    elif shape == "rectangular":
        lam = np.linspace(center_nm - fwhm_nm / 2, center_nm + fwhm_nm / 2, n)
        w = np.ones(n)
    else:
        raise ValueError(f"unknown filter shape {shape!r}")
    step = lam[1] - lam[0]
    return lam, w * step


def _angular_intensity(theta_ext, psi, T, crystal, lam_nm, weights):
    """Filter-weighted sinc^2 emission density at external angles ``theta_ext`` (rad), azimuths ``psi``.

    Azimuth is measured from the crystal y axis toward z.
    """
    s = crystal.sellmeier
    L = crystal.length_um
    K = crystal.grating_k
    lp = crystal.pump_wavelength_nm * 1e-3
    k_p = _k_e(lp, T, s)
    sin_ext = np.sin(theta_ext)
    sin2_psi = np.sin(psi) ** 2
    out = np.zeros_like(theta_ext, dtype=float)
    for lam, w in zip(lam_nm, weights):
        ls = lam * 1e-3
        li = idler_wavelength(lam, crystal.pump_wavelength_nm) * 1e-3
        nso = refractive_index(ls, T, "ordinary", s)
        nse = refractive_index(ls, T, "extraordinary", s)
        nio = refractive_index(li, T, "ordinary", s)
        nie = refractive_index(li, T, "extraordinary", s)

        def n_of(sin_t, n_o, n_e):
            c2 = sin_t**2 * sin2_psi  # cos^2 of angle to optic axis
            return 1.0 / np.sqrt((1.0 - c2) / n_e**2 + c2 / n_o**2)

        sin_s = sin_ext / nse
        for _ in range(6):
            sin_s = sin_ext / n_of(sin_s, nso, nse)
        k_s = 2 * math.pi * n_of(sin_s, nso, nse) / ls
        q = k_s * sin_s
        sin_i = q / (2 * math.pi * nie / li)
        for _ in range(6):
            sin_i = q / (2 * math.pi * n_of(sin_i, nio, nie) / li)
        k_i = 2 * math.pi * n_of(sin_i, nio, nie) / li
        with np.errstate(invalid="ignore"):
            cos_s = np.sqrt(1.0 - sin_s**2)
            cos_i = np.sqrt(1.0 - sin_i**2)
        dk = k_p - K - k_s * cos_s - k_i * cos_i
        val = np.sinc(dk * L / 2.0 / np.pi) ** 2
        out += w * np.where(np.isfinite(val), val, 0.0)
    return out


def ring_image(
    T: float,
    crystal: CrystalSpec,
    filter_center_nm: float = 795.0,
    filter_fwhm_nm: float = 1.0,
    grid: RingGrid | None = None,
    filter_shape: str = "gaussian",
    n_wavelengths: int = 241,
) -> RingImage:
    """Far-field image (external angles) of the filtered signal emission at temperature ``T``."""
    grid = grid or RingGrid()
    ax = grid.axis_mrad
    Y, Z = np.meshgrid(ax, ax)
    theta = np.hypot(Y, Z) * 1e-3
    psi = np.arctan2(Z, Y)
    lam, w = _filter_samples(filter_center_nm, filter_fwhm_nm, filter_shape, n_wavelengths)
    # wavelengths outside the Sellmeier range contribute nothing
    lo, hi = crystal.sellmeier.valid_wavelength_range
    ok = (lam * 1e-3 >= lo) & (idler_wavelength(lam, crystal.pump_wavelength_nm) * 1e-3 <= hi)
    img = _angular_intensity(theta, psi, T, crystal, lam[ok], w[ok])
    return RingImage(img, ax.copy(), ax.copy(), T, filter_center_nm, filter_fwhm_nm, filter_shape)


def radial_profile(
    theta_ext_mrad,
    T: float,
    crystal: CrystalSpec,
    plane: Plane = "y",
    filter_center_nm: float = 795.0,
    filter_fwhm_nm: float = 1.0,
    filter_shape: str = "gaussian",
    n_wavelengths: int = 241,
):
    theta = np.asarray(theta_ext_mrad, dtype=float) * 1e-3
    psi = np.full_like(theta, 0.0 if plane == "y" else math.pi / 2)
    lam, w = _filter_samples(filter_center_nm, filter_fwhm_nm, filter_shape, n_wavelengths)
    return _angular_intensity(theta, psi, T, crystal, lam, w)


def ring_radius(image: RingImage, axis: Plane = "y") -> float:
    """External ring radius in mrad from the peak of the central cut (0 for a filled spot)."""
    mid = image.intensity.shape[0] // 2
    if axis == "y":
        ax = image.y_mrad
        cut = image.intensity[mid, :]
    else:
        ax = image.z_mrad
        cut = image.intensity[:, mid]
    keep = ax >= 0
    ax = ax[keep]
    cut = cut[keep]
    i = int(np.argmax(cut))
    if i == 0 or i == cut.size - 1:
        return float(ax[i])
    y0, y1, y2 = cut[i - 1], cut[i], cut[i + 1]
    denom = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    return float(ax[i] + shift * (ax[1] - ax[0]))
