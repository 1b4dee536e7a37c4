"""
Two-qubit polarization states of the dual-pumped source.

Basis ordering is ``|HH>, |HV>, |VH>, |VV>`` with the signal photon first.
An analyzer angle ``theta`` follows the source's balanced convention: the
analyzer at ``theta`` transmits linear polarization at ``pi/4 + theta`` in the
lab H/V frame, so ``theta = -pi/4`` passes H and ``theta = +pi/4`` passes V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateInputError, DegenerateSettingsError, MalformedScanError

Arm = Literal["signal", "idler"]

_I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class BiphotonState:
    density_matrix: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.density_matrix, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError("density matrix must be 4x4")
        object.__setattr__(self, "density_matrix", rho)

    @classmethod
    def from_ket(cls, ket) -> "BiphotonState":
        psi = np.asarray(ket, dtype=complex)
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise DegenerateInputError("zero state vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @property
    def trace(self) -> float:
        return float(np.trace(self.density_matrix).real)

    def is_valid(self, tol: float = 1e-10) -> bool:
        rho = self.density_matrix
        herm = np.allclose(rho, rho.conj().T, atol=1e-12)
        ev = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        return bool(herm and abs(self.trace - 1) < 1e-12 and ev.min() >= -tol)

    def to_json(self) -> list:
        """Row-major 4x4 list of ``[re, im]`` pairs."""
        return [[[float(z.real), float(z.imag)] for z in row] for row in self.density_matrix]

    @classmethod
    def from_json(cls, data) -> "BiphotonState":
        arr = np.asarray(data, dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1])


@dataclass(frozen=True)
class AnalyzerSetting:
    theta_signal: float
    theta_idler: float

    def __post_init__(self):
        object.__setattr__(self, "theta_signal", float(self.theta_signal) % math.pi)
        object.__setattr__(self, "theta_idler", float(self.theta_idler) % math.pi)


def dual_pump_state(pair_amp_path1: complex, pair_amp_path2: complex) -> BiphotonState:
    """alpha|HH> + beta|VV> from the two down-converters, normalized."""
    if abs(pair_amp_path1) == 0 and abs(pair_amp_path2) == 0:
        raise DegenerateInputError("both pair amplitudes are zero")
    return BiphotonState.from_ket([pair_amp_path1, 0, 0, pair_amp_path2])


def singlet_family_state(phi: float, balance: float = 0.5) -> BiphotonState:
    """sqrt(b)|HV> - exp(i phi) sqrt(1-b)|VH>; phi=0 singlet, phi=pi triplet."""
    if not 0.0 <= balance <= 1.0:
        raise ValueError("balance must lie in [0, 1]")
    return BiphotonState.from_ket([0, math.sqrt(balance), -np.exp(1j * phi) * math.sqrt(1 - balance), 0])


def singlet() -> BiphotonState:
    return singlet_family_state(0.0, 0.5)


def maximally_mixed() -> BiphotonState:
    return BiphotonState(np.eye(4, dtype=complex) / 4)


def hwp_jones(angle: float) -> np.ndarray:
    c, s = math.cos(2 * angle), math.sin(2 * angle)
    return np.array([[c, s], [s, -c]], dtype=complex)


def apply_local_rotation(state: BiphotonState, arm: Arm, waveplate_angle: float) -> BiphotonState:
    """Half-wave plate at ``waveplate_angle`` on one arm, applied as U rho U^dagger."""
    J = hwp_jones(waveplate_angle)
    if arm == "signal":
        U = np.kron(J, _I2)
    elif arm == "idler":
        U = np.kron(_I2, J)
    else:
        raise ValueError("arm must be 'signal' or 'idler'")
    return BiphotonState(U @ state.density_matrix @ U.conj().T)


def werner_mix(state: BiphotonState, v: float) -> BiphotonState:
    if not 0.0 <= v <= 1.0:
        raise ValueError("Werner parameter must lie in [0, 1]")
    return BiphotonState(v * state.density_matrix + (1 - v) * np.eye(4) / 4)


def analyzer_vector(theta: float) -> np.ndarray:
    chi = math.pi / 4 + theta
    return np.array([math.cos(chi), math.sin(chi)], dtype=complex)


def coincidence_probability(state: BiphotonState, analyzers: AnalyzerSetting) -> float:
    """Tr[rho (P_s x P_i)] for the transmitted ports of both analyzers."""
    v = np.kron(analyzer_vector(analyzers.theta_signal), analyzer_vector(analyzers.theta_idler))
    p = np.real(v.conj() @ state.density_matrix @ v)
    return float(min(1.0, max(0.0, p)))


def outcome_probabilities(state: BiphotonState, analyzers: AnalyzerSetting) -> np.ndarray:
    """Probabilities of (pass,pass), (pass,block), (block,pass), (block,block)."""
    ts, ti = analyzers.theta_signal, analyzers.theta_idler
    h = math.pi / 2
    p = np.array(
        [
            coincidence_probability(state, AnalyzerSetting(ts, ti)),
            coincidence_probability(state, AnalyzerSetting(ts, ti + h)),
            coincidence_probability(state, AnalyzerSetting(ts + h, ti)),
            coincidence_probability(state, AnalyzerSetting(ts + h, ti + h)),
        ]
    )
    return p / p.sum()


def correlator(state: BiphotonState, a: float, b: float) -> float:
    h = math.pi / 2
    pp = coincidence_probability(state, AnalyzerSetting(a, b))
    mm = coincidence_probability(state, AnalyzerSetting(a + h, b + h))
    pm = coincidence_probability(state, AnalyzerSetting(a, b + h))
    mp = coincidence_probability(state, AnalyzerSetting(a + h, b))
    total = pp + mm + pm + mp
    if total <= 0:
        raise DegenerateSettingsError(f"zero total probability at settings ({a}, {b})")
    return (pp + mm - pm - mp) / total


def chsh_from_correlators(E_ab: float, E_abp: float, E_apb: float, E_apbp: float) -> float:
    return abs(E_ab - E_abp) + abs(E_apb + E_apbp)


def chsh_S(state: BiphotonState, a: float, a_p: float, b: float, b_p: float):
    """CHSH parameter and the four correlators (E(a,b), E(a,b'), E(a',b), E(a',b'))."""
    E = (correlator(state, a, b), correlator(state, a, b_p), correlator(state, a_p, b), correlator(state, a_p, b_p))
    return chsh_from_correlators(*E), E


TEXTBOOK_CHSH_ANGLES = (0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)


@dataclass(frozen=True)
class StateNoise:
    """Phenomenological imperfections of the combined source.

    ``coherence`` scales the HV/VH off-diagonal term (spectral
    distinguishability of the two down-converters). ``crosstalk_path1`` and
    ``crosstalk_path2`` move a fraction of each path's pairs into the
    parallel-polarization term (finite analyzer/combiner extinction), and
    ``werner_v`` mixes the result with white noise.
    """

    werner_v: float = 1.0
    coherence: float = 1.0
    crosstalk_path1: float = 0.0
    crosstalk_path2: float = 0.0

    def __post_init__(self):
        for name in ("werner_v", "coherence", "crosstalk_path1", "crosstalk_path2"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "werner_v": self.werner_v,
            "coherence": self.coherence,
            "crosstalk_path1": self.crosstalk_path1,
            "crosstalk_path2": self.crosstalk_path2,
        }


def source_state(phi: float, noise: StateNoise | None = None, balance: float = 0.5) -> BiphotonState:
    """Output of the bidirectionally pumped source at relative phase ``phi`` with ``noise`` applied."""
    noise = noise or StateNoise()
    e1, e2 = noise.crosstalk_path1, noise.crosstalk_path2
    b = balance
    rho = np.zeros((4, 4), dtype=complex)
    rho[1, 1] = b * (1 - e1)
    rho[0, 0] = b * e1
    rho[2, 2] = (1 - b) * (1 - e2)
    rho[3, 3] = (1 - b) * e2
    off = -noise.coherence * math.sqrt(rho[1, 1].real * rho[2, 2].real) * np.exp(-1j * phi)
    rho[1, 2] = off
    rho[2, 1] = np.conj(off)
    return werner_mix(BiphotonState(rho), noise.werner_v)


def random_density_matrix(rng: np.random.Generator, rank: int | None = None) -> BiphotonState:
    """Random state from the Ginibre ensemble."""
    rank = rank or 4
    G = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = G @ G.conj().T
    return BiphotonState(rho / np.trace(rho).real)


# --- fringe analysis ----------------------------------------------------------


def fit_sinusoid(x, y, period: float | None = None, weights=None):
    """Least-squares fit of ``c0 + c1 cos(2 pi x / period + x0)``.

    Returns ``(c0, |c1|, x0, period)``. With ``period=None`` the period is a
    free parameter seeded from the dominant FFT component.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if x.size < 4:
        raise MalformedScanError("need at least four points to fit a fringe")

    def linear(omega):
        A = np.column_stack([np.ones_like(x), np.cos(omega * x), np.sin(omega * x)])
        coef, *_ = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)
        return coef

    if period is not None:
        omega = 2 * math.pi / period
    else:
        span = x.max() - x.min()
        if span <= 0:
            raise MalformedScanError("scan settings do not span an interval")
        # seed from a dense periodogram, then refine
        omegas = np.linspace(2 * math.pi / span, 2 * math.pi * (x.size / 2) / span, 4 * x.size)
        power = []
        for om in omegas:
            c = linear(om)
            power.append(c[1] ** 2 + c[2] ** 2)
        om0 = omegas[int(np.argmax(power))]
        c = linear(om0)

        def resid(p):
            return w * (p[0] + p[1] * np.cos(p[3] * x) + p[2] * np.sin(p[3] * x) - y)

        sol = least_squares(resid, [c[0], c[1], c[2], om0])
        omega = sol.x[3]
    c0, a, b = linear(omega)
    return c0, math.hypot(a, b), math.atan2(-b, a), 2 * math.pi / omega


def fringe_visibility(scan, period: float | None = None) -> float:
    """Visibility (max - min)/(max + min) of the fitted sinusoid through ``scan``.

    ``scan`` is a :class:`~spdc_lab.spectral.ScanResult`; its metadata key
    ``fringe_period`` (in setting units) is used when ``period`` is omitted.
    """
    x = np.asarray(scan.settings, dtype=float)
    y = np.asarray(scan.values, dtype=float)
    if period is None:
        period = scan.metadata.get("fringe_period")
    if period is not None and x.max() - x.min() < period * (1.0 - 1.0 / x.size) - 1e-12:
        raise MalformedScanError("scan covers less than one fringe period")
    c0, c1, _, _ = fit_sinusoid(x, y, period)
    if c0 <= 0:
        raise MalformedScanError(f"non-positive fitted offset {c0:.4g}")
    return float(c1 / c0)
