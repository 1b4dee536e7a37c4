"""
Event-level simulation of fiber-coupled pair detection.

Pairs whose signal photon enters the signal fiber are drawn as a Poisson
process. Each pair picks a joint analyzer outcome from the polarization
state, then loses photons independently in each arm. A signal click opens an
idler gate; the idler detector only registers photons (and its own dark
counts) while a gate is open. Tags carry integer picoseconds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Literal, Sequence

import numpy as np

from .errors import ConfigurationError, InsufficientStatisticsError, InvalidOffsetError
from .polarization import (
    AnalyzerSetting,
    BiphotonState,
    StateNoise,
    chsh_from_correlators,
    coincidence_probability,
    outcome_probabilities,
    singlet,
    source_state,
    werner_mix,
)
from .spectral import ScanResult, overlap_visibility

if TYPE_CHECKING:
    from .config import ExperimentConfig

PS_PER_S = 10**12
PS_PER_NS = 1000
MAX_DURATION_S = 3600.0


class BackgroundExceedsSignalWarning(UserWarning):
    """Accidental estimate larger than the raw coincidence count; result clamped to zero."""


@dataclass(frozen=True)
class DetectorModel:
    quantum_efficiency: float
    dark_count_prob_per_gate: float = 0.0
    gate_duration_ns: float = 20.0
    mode: Literal["free_running_trigger", "gated"] = "gated"
    dark_count_rate_hz: float = 0.0  # free-running darks only
    dead_time_ns: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise ValueError("quantum_efficiency must lie in [0, 1]")
        if not 0.0 <= self.dark_count_prob_per_gate <= 1.0:
            raise ValueError("dark_count_prob_per_gate must lie in [0, 1]")
        if self.mode not in ("free_running_trigger", "gated"):
            raise ValueError(f"unknown detector mode {self.mode!r}")
        if self.mode == "gated" and self.gate_duration_ns <= 0:
            raise ValueError("gated detector needs a positive gate duration")
        if self.dark_count_rate_hz < 0 or self.dead_time_ns < 0:
            raise ValueError("dark count rate and dead time must be non-negative")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorModel":
        return cls(**d)


@dataclass(frozen=True)
class RateBudget:
    """Loss chain from the crystal to the fiber inputs.

    The signal arm is ``pair_rate_at_crystal * signal_path_efficiency *
    filter_transmission`` per mW; ``idler_path_efficiency`` is the probability
    that the partner of a fiber-coupled signal reaches the idler detector.
    """

    pump_power_mw: float
    pair_rate_at_crystal: float  # pairs/s/mW
    signal_path_efficiency: float
    idler_path_efficiency: float
    filter_transmission: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.pump_power_mw < 0 or self.pair_rate_at_crystal < 0:
            raise ValueError("pump power and pair rate must be non-negative")
        for attr in ("signal_path_efficiency", "idler_path_efficiency", "filter_transmission"):
            if not 0.0 <= getattr(self, attr) <= 1.0:
                raise ValueError(f"{attr} must lie in [0, 1]")

    @property
    def signal_chain(self) -> float:
        return self.signal_path_efficiency * self.filter_transmission

    @property
    def coupled_pair_rate(self) -> float:
        """Pairs/s whose signal photon is fiber coupled."""
        return self.pump_power_mw * self.pair_rate_at_crystal * self.signal_chain

    def with_power(self, pump_power_mw: float) -> "RateBudget":
        return replace(self, pump_power_mw=pump_power_mw)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "RateBudget":
        return cls(**d)


@dataclass(frozen=True)
class TimingModel:
    """Coincidence window placement inside the idler gate.

    The gate opens at the signal click and the idler photon arrives at the
    gate centre; the coincidence window is centred on that arrival time.
    The accidental window is the same window displaced by ``accidental_shift_ns``.
    """

    coincidence_window_ns: float = 4.0
    accidental_shift_ns: float = 6.0

    def __post_init__(self):
        if self.coincidence_window_ns <= 0:
            raise ValueError("coincidence window must be positive")

    def coincidence_offset_ns(self, gate_ns: float) -> float:
        return 0.5 * (gate_ns - self.coincidence_window_ns)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TimeTagStream:
    channel: Literal["signal", "idler"]
    tags: np.ndarray  # int64 ps, sorted
    duration: float  # s
    seed: int
    n_gates: int = 0

    def __post_init__(self):
        self.tags = np.asarray(self.tags, dtype=np.int64)
        if self.tags.size:
            if np.any(np.diff(self.tags) < 0):
                raise ValueError("tags must be sorted")
            if self.tags[0] < 0 or self.tags[-1] > round(self.duration * PS_PER_S):
                raise ValueError("tags must lie within [0, duration]")

    def __len__(self):
        return int(self.tags.size)

    def rate(self) -> float:
        return self.tags.size / self.duration if self.duration > 0 else 0.0


def _apply_dead_time(tags: np.ndarray, dead_ps: int) -> np.ndarray:
    if dead_ps <= 0 or tags.size < 2:
        return tags
    keep = np.ones(tags.size, dtype=bool)
    last = tags[0]
    for i in range(1, tags.size):
        if tags[i] - last < dead_ps:
            keep[i] = False
        else:
            last = tags[i]
    return tags[keep]


def _uniform_tags(rng: np.random.Generator, n: int, duration_ps: int) -> np.ndarray:
    return np.sort(np.floor(rng.random(n) * duration_ps).astype(np.int64))


def simulate_timetags(
    budget: RateBudget,
    detectors: tuple[DetectorModel, DetectorModel],
    state: BiphotonState | None,
    analyzers: AnalyzerSetting | None,
    duration: float,
    seed: int,
) -> tuple[TimeTagStream, TimeTagStream]:
    """Signal and idler click streams for one fixed setting.

    ``analyzers=None`` removes the polarizers (no projection loss).
    """
    if not 0 < duration <= MAX_DURATION_S:
        raise ConfigurationError(f"duration must lie in (0, {MAX_DURATION_S}] s")
    det_s, det_i = detectors
    if det_i.mode != "gated":
        raise ConfigurationError("idler detector must be gated")
    gate_ps = int(round(det_i.gate_duration_ns * PS_PER_NS))
    rate = budget.coupled_pair_rate
    if rate * gate_ps / PS_PER_S > 1.0:
        raise ConfigurationError(
            f"pair rate {rate:.3g}/s puts more than one expected pair in a {det_i.gate_duration_ns} ns gate"
        )
    rng = np.random.default_rng(seed)
    duration_ps = int(round(duration * PS_PER_S))

    n_pairs = int(rng.poisson(rate * duration))
    t_pair = _uniform_tags(rng, n_pairs, duration_ps)
    if analyzers is None:
        s_pass = np.ones(n_pairs, dtype=bool)
        i_pass = s_pass
    else:
        if state is None:
            raise ConfigurationError("analyzer projection needs a state")
        cum = np.cumsum(outcome_probabilities(state, analyzers))
        outcome = np.minimum(np.searchsorted(cum, rng.random(n_pairs), side="right"), 3)
        s_pass = outcome <= 1  # (pass, pass) or (pass, block)
        i_pass = (outcome == 0) | (outcome == 2)
    s_click = s_pass & (rng.random(n_pairs) < det_s.quantum_efficiency)
    i_arrive = i_pass & (rng.random(n_pairs) < budget.idler_path_efficiency * det_i.quantum_efficiency)

    sig = t_pair[s_click]
    if det_s.dark_count_rate_hz > 0:
        n_dark = int(rng.poisson(det_s.dark_count_rate_hz * duration))
        sig = np.sort(np.concatenate([sig, _uniform_tags(rng, n_dark, duration_ps)]))
    sig = _apply_dead_time(sig, int(round(det_s.dead_time_ns * PS_PER_NS)))

    # idler photons arrive at the centre of the gate their partner would open
    idl_t = t_pair[i_arrive] + gate_ps // 2
    starts = sig
    if starts.size and idl_t.size:
        k = np.searchsorted(starts, idl_t, side="right") - 1
        live = (k >= 0) & (idl_t < starts[np.maximum(k, 0)] + gate_ps)
        idl_t = idl_t[live]
    else:
        idl_t = idl_t[:0]
    dark = rng.random(starts.size) < det_i.dark_count_prob_per_gate
    dark_t = starts[dark] + np.floor(rng.random(int(dark.sum())) * gate_ps).astype(np.int64)
    idl = np.unique(np.concatenate([idl_t, dark_t]))
    idl = idl[idl <= duration_ps]
    idl = _apply_dead_time(idl, int(round(det_i.dead_time_ns * PS_PER_NS)))
    return (
        TimeTagStream("signal", sig, duration, seed),
        TimeTagStream("idler", idl, duration, seed, n_gates=int(starts.size)),
    )


def count_coincidences(streams: tuple[TimeTagStream, TimeTagStream], window: float, offset: float = 0.0) -> int:
    """Signal tags with an idler tag in ``[t + offset, t + offset + window]`` (ns).

    Greedy earliest pairing: each idler tag is used at most once.
    """
    if window <= 0:
        raise ValueError("coincidence window must be positive")
    s = streams[0].tags
    i = streams[1].tags
    if s.size == 0 or i.size == 0:
        return 0
    off = int(round(offset * PS_PER_NS))
    win = int(round(window * PS_PER_NS))
    lo = np.searchsorted(i, s + off, side="left")
    hi = np.searchsorted(i, s + off + win, side="right")
    # ranges that share candidates with the previous signal need the sequential pass
    shared = np.zeros(s.size, dtype=bool)
    shared[1:] = lo[1:] < hi[:-1]
    if not shared.any():
        return int(np.count_nonzero(lo < hi))
    in_cluster = shared.copy()
    in_cluster[:-1] |= shared[1:]
    total = int(np.count_nonzero((lo < hi) & ~in_cluster))
    last = -1
    for n in np.flatnonzero(in_cluster):
        if not shared[n]:
            last = -1
        j = max(int(lo[n]), last + 1)
        if j < hi[n]:
            total += 1
            last = j
    return total


def accidental_estimate(
    streams: tuple[TimeTagStream, TimeTagStream], window: float, offset: float, base_offset: float = 0.0
) -> int:
    """Coincidences in a window displaced by ``offset`` ns from the true-coincidence window."""
    if offset <= window:
        raise InvalidOffsetError(f"accidental offset {offset} ns must exceed the {window} ns window")
    return count_coincidences(streams, window, base_offset + offset)


def conditional_probability(
    coincidences: float, accidentals: float, signal_singles: float, idler_detector_efficiency: float | None = None
) -> float:
    """Background-subtracted idler detection probability per signal click.

    With ``idler_detector_efficiency`` the result is divided by it, giving the
    idler path transmission.
    """
    if signal_singles <= 0:
        raise ValueError("signal_singles must be positive")
    num = coincidences - accidentals
    if num < 0:
        warnings.warn("accidentals exceed coincidences; conditional probability clamped to 0",
                      BackgroundExceedsSignalWarning, stacklevel=2)
        num = 0.0
    p = num / signal_singles
    if idler_detector_efficiency is not None:
        if not 0 < idler_detector_efficiency <= 1:
            raise ValueError("idler detector efficiency must lie in (0, 1]")
        p /= idler_detector_efficiency
    return float(p)


@dataclass(frozen=True)
class RateReport:
    """Analytic expectation values (per second unless stated)."""

    pump_power_mw: float
    coupled_signal_rate: float
    signal_singles: float
    coincidences: float
    accidentals: float
    raw_coincidences: float
    conditional_probability: float
    raw_conditional_probability: float
    idler_path_efficiency: float
    inferred_pair_flux: float
    background_per_gate: float

    def per_mw(self) -> dict:
        p = self.pump_power_mw
        keys = ("coupled_signal_rate", "signal_singles", "coincidences", "inferred_pair_flux")
        return {k: getattr(self, k) / p for k in keys} if p > 0 else {}

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["per_mw"] = self.per_mw()
        return d


def rate_budget_report(
    budget: RateBudget,
    detectors: tuple[DetectorModel, DetectorModel],
    timing: TimingModel | None = None,
    state: BiphotonState | None = None,
    analyzers: AnalyzerSetting | None = None,
) -> RateReport:
    timing = timing or TimingModel()
    det_s, det_i = detectors
    rc = budget.coupled_pair_rate
    if analyzers is None:
        pp = p_s = p_i = 1.0
    else:
        pp, pb, bp, _ = outcome_probabilities(state, analyzers)
        p_s, p_i = pp + pb, pp + bp
    eta_s, eta_d = det_s.quantum_efficiency, det_i.quantum_efficiency
    eta_i = budget.idler_path_efficiency
    singles = rc * p_s * eta_s + det_s.dark_count_rate_hz
    true = rc * pp * eta_s * eta_i * eta_d
    # background per signal click inside one coincidence window
    w_ps = timing.coincidence_window_ns * PS_PER_NS
    gate = det_i.gate_duration_ns * PS_PER_NS
    other = rc * p_i * eta_i * eta_d * w_ps / PS_PER_S
    p_bg = 1.0 - (1.0 - det_i.dark_count_prob_per_gate * w_ps / gate) * math.exp(-other)
    acc = singles * p_bg
    p_true = true / singles if singles > 0 else 0.0
    raw = singles * (p_true + (1.0 - p_true) * p_bg)
    cond = p_true
    denom = eta_s * eta_d
    flux = true / denom if denom > 0 else 0.0
    return RateReport(
        pump_power_mw=budget.pump_power_mw,
        coupled_signal_rate=rc,
        signal_singles=singles,
        coincidences=true,
        accidentals=acc,
        raw_coincidences=raw,
        conditional_probability=cond,
        raw_conditional_probability=raw / singles if singles > 0 else 0.0,
        idler_path_efficiency=cond / eta_d if eta_d > 0 else 0.0,
        inferred_pair_flux=flux,
        background_per_gate=p_bg,
    )


@dataclass(frozen=True)
class RunCounts:
    signal_singles: int
    coincidences: int
    accidentals: int
    duration: float

    @property
    def net(self) -> int:
        return self.coincidences - self.accidentals

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def measure(
    budget: RateBudget,
    detectors: tuple[DetectorModel, DetectorModel],
    timing: TimingModel,
    state: BiphotonState | None,
    analyzers: AnalyzerSetting | None,
    duration: float,
    seed: int,
) -> RunCounts:
    """Simulate one setting and return singles, raw coincidences and the accidental estimate."""
    streams = simulate_timetags(budget, detectors, state, analyzers, duration, seed)
    base = timing.coincidence_offset_ns(detectors[1].gate_duration_ns)
    w = timing.coincidence_window_ns
    return RunCounts(
        signal_singles=len(streams[0]),
        coincidences=count_coincidences(streams, w, base),
        accidentals=accidental_estimate(streams, w, timing.accidental_shift_ns, base),
        duration=duration,
    )


def _expected(budget, detectors, timing, state, analyzers, duration) -> RunCounts:
    r = rate_budget_report(budget, detectors, timing, state, analyzers)
    return RunCounts(r.signal_singles * duration, r.raw_coincidences * duration, r.accidentals * duration, duration)


def _seed_sequence(seed: int, n: int) -> list[int]:
    """Independent child seeds, one per scan point."""
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


# --- experiments ---------------------------------------------------------------


def _net_and_sigma(c: RunCounts | None, exp: RunCounts | None, subtract: bool):
    if c is None:
        n = exp.coincidences - (exp.accidentals if subtract else 0.0)
        return n, 0.0
    n = c.coincidences - (c.accidentals if subtract else 0)
    var = c.coincidences + (c.accidentals if subtract else 0)
    return float(n), math.sqrt(var)


def pzt_fringe_experiment(
    config: "ExperimentConfig",
    phi_sweep: Sequence[float] | None = None,
    bin_time_ms: float | None = None,
    seed: int | None = None,
    analytic: bool = False,
    subtract_background: bool = True,
) -> ScanResult:
    """Coincidences per time bin versus interferometer phase at crossed analyzers."""
    ex = config.experiments["fringe"]
    phi = np.asarray(phi_sweep if phi_sweep is not None else config.fringe_sweep(), dtype=float)
    bin_s = (bin_time_ms if bin_time_ms is not None else ex["bin_ms"]) * 1e-3
    seed = config.seed if seed is None else seed
    budget = config.budget(ex["budget"]).with_power(ex["pump_power_mw"])
    noise = config.noise(ex["noise"])
    an = AnalyzerSetting(*ex["analyzers"])
    seeds = _seed_sequence(seed, phi.size)
    vals, errs = [], []
    for k, p in enumerate(phi):
        st = source_state(p, noise)
        if analytic:
            n, e = _net_and_sigma(None, _expected(budget, config.detectors, config.timing, st, an, bin_s), subtract_background)
        else:
            c = measure(budget, config.detectors, config.timing, st, an, bin_s, seeds[k])
            n, e = _net_and_sigma(c, None, subtract_background)
        vals.append(n)
        errs.append(e)
    return ScanResult(
        phi, vals, errs,
        {"kind": "pzt_fringe", "setting_unit": "rad", "value_unit": "coincidences/bin",
         "bin_ms": bin_s * 1e3, "pump_power_mw": budget.pump_power_mw, "theta_signal": an.theta_signal,
         "theta_idler": an.theta_idler, "background_subtracted": subtract_background,
         "analytic": analytic, "seed": seed, "fringe_period": 2 * math.pi},
    )


def analyzer_scan_experiment(
    config: "ExperimentConfig",
    theta_i_sweep: Sequence[float] | None = None,
    theta_s: float = 0.0,
    seed: int | None = None,
    phi: float = 0.0,
    analytic: bool = False,
    subtract_background: bool = True,
    noise: StateNoise | None = None,
) -> ScanResult:
    """Coincidences versus idler analyzer angle at fixed signal analyzer angle."""
    ex = config.experiments["polscan"]
    th = np.asarray(theta_i_sweep if theta_i_sweep is not None else config.polscan_sweep(), dtype=float)
    seed = config.seed if seed is None else seed
    budget = config.budget(ex["budget"]).with_power(ex["pump_power_mw"])
    noise = noise or config.noise(ex["noise"])
    st = source_state(phi, noise)
    dwell = ex["dwell_s"]
    seeds = _seed_sequence(seed, th.size)
    vals, errs = [], []
    for k, t in enumerate(th):
        an = AnalyzerSetting(theta_s, t)
        if analytic:
            n, e = _net_and_sigma(None, _expected(budget, config.detectors, config.timing, st, an, dwell), subtract_background)
        else:
            n, e = _net_and_sigma(measure(budget, config.detectors, config.timing, st, an, dwell, seeds[k]), None,
                                  subtract_background)
        vals.append(n)
        errs.append(e)
    return ScanResult(
        th, vals, errs,
        {"kind": "analyzer_scan", "setting_unit": "rad", "value_unit": "coincidences",
         "theta_signal": theta_s, "phi": phi, "dwell_s": dwell, "pump_power_mw": budget.pump_power_mw,
         "background_subtracted": subtract_background, "analytic": analytic, "seed": seed,
         "fringe_period": math.pi},
    )


@dataclass(frozen=True)
class ChshResult:
    S: float
    sigma_S: float
    correlators: tuple[float, float, float, float]
    correlator_sigmas: tuple[float, float, float, float]
    counts: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def violation_sigmas(self) -> float:
        return (self.S - 2.0) / self.sigma_S if self.sigma_S > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "S": self.S,
            "sigma_S": self.sigma_S,
            "violation_sigmas": self.violation_sigmas,
            "correlators": list(self.correlators),
            "correlator_sigmas": list(self.correlator_sigmas),
            "counts": self.counts,
            "seed": self.seed,
        }


def chsh_state(config: "ExperimentConfig", ideal: bool = False) -> BiphotonState:
    if ideal:
        return singlet()
    v = config.noise(config.experiments["chsh"]["noise"]).werner_v
    return werner_mix(singlet(), v)


def chsh_experiment(
    config: "ExperimentConfig",
    angles: Sequence[float] | None = None,
    coincidences_per_correlator: float | None = None,
    seed: int | None = None,
    state: BiphotonState | None = None,
    ideal: bool = False,
    subtract_background: bool = False,
    analytic: bool = False,
) -> ChshResult:
    """Sixteen analyzer settings -> correlators -> S with Poisson error propagation.

    The dwell per setting is chosen so each correlator collects about
    ``coincidences_per_correlator`` expected coincidences. ``ideal`` uses the
    pure singlet, the high-statistics target and background subtraction.
    """
    ex = config.experiments["chsh"]
    a, a_p, b, b_p = angles if angles is not None else ex["angles"]
    if ideal:
        subtract_background = True
        default_target = ex.get("ideal_coincidences_per_correlator", ex["coincidences_per_correlator"])
    else:
        default_target = ex["coincidences_per_correlator"]
    target = coincidences_per_correlator or default_target
    seed = config.seed if seed is None else seed
    budget = config.budget(ex["budget"]).with_power(ex["pump_power_mw"])
    state = state if state is not None else chsh_state(config, ideal)
    h = math.pi / 2
    pairs = [(a, b), (a, b_p), (a_p, b), (a_p, b_p)]
    # every correlator sums four complementary settings; their probabilities sum to 1
    full = rate_budget_report(budget, config.detectors, config.timing).coincidences
    if full <= 0:
        raise InsufficientStatisticsError("configured budget yields no coincidences")
    dwell = min(target / full, MAX_DURATION_S)
    seeds = _seed_sequence(seed, 16)
    E, sE, counts = [], [], {}
    k = 0
    for x, y in pairs:
        n = {}
        for key, (dx, dy) in {"pp": (0, 0), "mm": (h, h), "pm": (0, h), "mp": (h, 0)}.items():
            an = AnalyzerSetting(x + dx, y + dy)
            if analytic:
                c = _expected(budget, config.detectors, config.timing, state, an, dwell)
                n[key] = c.coincidences - (c.accidentals if subtract_background else 0.0)
            else:
                c = measure(budget, config.detectors, config.timing, state, an, dwell, seeds[k])
                n[key] = max(c.coincidences - (c.accidentals if subtract_background else 0), 0)
            k += 1
        tot = n["pp"] + n["mm"] + n["pm"] + n["mp"]
        if tot <= 0:
            raise InsufficientStatisticsError(f"no coincidences at settings ({x:.4f}, {y:.4f})")
        e = (n["pp"] + n["mm"] - n["pm"] - n["mp"]) / tot
        E.append(e)
        sE.append(math.sqrt(max(1.0 - e * e, 0.0) / tot))
        counts[f"{x:.6f},{y:.6f}"] = {kk: float(vv) for kk, vv in n.items()}
    S = chsh_from_correlators(*E)
    return ChshResult(
        S=float(S),
        sigma_S=float(math.sqrt(sum(s * s for s in sE))),
        correlators=tuple(E),
        correlator_sigmas=tuple(sE),
        counts=counts,
        seed=seed,
    )


def bandwidth_scan_experiment(
    config: "ExperimentConfig",
    offsets_mm: Sequence[float] | None = None,
    pair_bandwidth_ghz: float | None = None,
    seed: int | None = None,
    analytic: bool = False,
) -> ScanResult:
    """Singlet visibility versus mirror displacement.

    At each offset the HV/VH coherence is reduced by the two-photon overlap
    envelope; visibility comes from the maximum (crossed) and minimum
    (parallel) idler analyzer settings at theta_S = 0.
    """
    ex = config.experiments["bandwidth"]
    x = np.asarray(offsets_mm if offsets_mm is not None else config.bandwidth_offsets(), dtype=float)
    B = pair_bandwidth_ghz if pair_bandwidth_ghz is not None else config.pair_bandwidth(ex["filters"])
    seed = config.seed if seed is None else seed
    budget = config.budget(ex["budget"]).with_power(ex["pump_power_mw"])
    base = config.noise(ex["noise"])
    dwell = ex["dwell_s"]
    seeds = _seed_sequence(seed, 2 * x.size)
    env = overlap_visibility(x, B)
    vals, errs = [], []
    hi_set = AnalyzerSetting(0.0, math.pi / 2)
    lo_set = AnalyzerSetting(0.0, 0.0)
    for k, e in enumerate(np.atleast_1d(env)):
        st = source_state(0.0, replace(base, coherence=base.coherence * float(e)))
        if analytic:
            n_hi = _expected(budget, config.detectors, config.timing, st, hi_set, dwell)
            n_lo = _expected(budget, config.detectors, config.timing, st, lo_set, dwell)
            a = n_hi.coincidences - n_hi.accidentals
            b = n_lo.coincidences - n_lo.accidentals
            va, vb = 0.0, 0.0
        else:
            c_hi = measure(budget, config.detectors, config.timing, st, hi_set, dwell, seeds[2 * k])
            c_lo = measure(budget, config.detectors, config.timing, st, lo_set, dwell, seeds[2 * k + 1])
            a, b = c_hi.net, c_lo.net
            va = c_hi.coincidences + c_hi.accidentals
            vb = c_lo.coincidences + c_lo.accidentals
        if a + b <= 0:
            raise InsufficientStatisticsError(f"no net coincidences at offset {x[k]} mm")
        v = (a - b) / (a + b)
        # d v / d a = 2b/(a+b)^2, d v / d b = -2a/(a+b)^2
        sv = 2.0 * math.sqrt(b * b * va + a * a * vb) / (a + b) ** 2
        vals.append(v)
        errs.append(sv)
    return ScanResult(
        x, vals, errs,
        {"kind": "path_offset_visibility", "setting_unit": "mm", "value_unit": "visibility",
         "pair_bandwidth_ghz": B, "dwell_s": dwell, "pump_power_mw": budget.pump_power_mw,
         "analytic": analytic, "seed": seed},
    )


def budget_trial(
    budget: RateBudget,
    detectors: tuple[DetectorModel, DetectorModel],
    timing: TimingModel,
    duration: float,
    seed: int,
) -> dict:
    """One Monte Carlo run of the unpolarized rate measurement with derived quantities."""
    c = measure(budget, detectors, timing, None, None, duration, seed)
    p = budget.pump_power_mw
    eta = detectors[0].quantum_efficiency * detectors[1].quantum_efficiency
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BackgroundExceedsSignalWarning)
        cond = conditional_probability(c.coincidences, c.accidentals, c.signal_singles) if c.signal_singles else 0.0
    return {
        "signal_singles": c.signal_singles,
        "coincidences": c.coincidences,
        "accidentals": c.accidentals,
        "conditional_probability": cond,
        "inferred_pair_flux_per_mw": (c.net / eta / duration / p) if p > 0 and eta > 0 else 0.0,
    }


def budget_agreement(
    budget: RateBudget,
    detectors: tuple[DetectorModel, DetectorModel],
    timing: TimingModel,
    duration: float,
    seed: int,
    n_sigma: float = 3.0,
) -> dict:
    """Compare one Monte Carlo run with the analytic report; returns per-quantity pulls."""
    r = rate_budget_report(budget, detectors, timing)
    t = budget_trial(budget, detectors, timing, duration, seed)
    S = r.signal_singles * duration
    C = r.raw_coincidences * duration
    A = r.accidentals * duration
    eta = detectors[0].quantum_efficiency * detectors[1].quantum_efficiency
    p = r.conditional_probability
    exp = {
        "signal_singles": (S, math.sqrt(S)),
        "coincidences": (C, math.sqrt(C)),
        "conditional_probability": (p, math.sqrt((p * (1 - p) + 2 * r.background_per_gate) / max(S, 1.0))),
        "inferred_pair_flux_per_mw": (
            r.inferred_pair_flux / budget.pump_power_mw,
            math.sqrt(C + A) / eta / duration / budget.pump_power_mw,
        ),
    }
    out = {}
    for k, (mu, sd) in exp.items():
        pull = (t[k] - mu) / sd if sd > 0 else 0.0
        out[k] = {"mc": t[k], "expected": mu, "sigma": sd, "pull": pull, "within": abs(pull) <= n_sigma}
    return out
