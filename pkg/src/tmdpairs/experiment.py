"""Coincidence statistics, detection budget, power scaling and fiber spectroscopy."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, special

# detector (<= 25 ps) and correlator (<= 10 ps) jitter in quadrature
DEFAULT_JITTER = math.hypot(25e-12, 10e-12)
DEGENERATE_NM = 1576.0


# --- detection budget -------------------------------------------------------

@dataclass(frozen=True)
class DetectionBudget:
    """Per-photon factors (t_opt, eta_coupl, eta_detec) enter squared."""

    t_opt: float = 0.78
    eta_coupl: float = 0.35
    eta_bs: float = 0.45
    eta_detec: float = 0.6
    eta_lp: float = 0.5

    def __post_init__(self):
        for name in ("t_opt", "eta_coupl", "eta_bs", "eta_detec", "eta_lp"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def total_efficiency(b: DetectionBudget) -> float:
    return b.t_opt**2 * b.eta_coupl**2 * b.eta_bs * b.eta_detec**2 * b.eta_lp


def detected_rates(pair_rate: float, b: DetectionBudget, pl_rate: float = 0.0,
                   dark_rate: float = 0.0) -> tuple[float, float, float]:
    """(pair, singles_s, singles_i) count rates at the detectors.

    Singles use the per-photon share of the budget (the square root of the
    pair-level splitter and polarizer factors); photoluminescence and dark
    counts add flat rates.
    """
    eta_pair = total_efficiency(b)
    eta_single = b.t_opt * b.eta_coupl * b.eta_detec * math.sqrt(b.eta_lp) * math.sqrt(b.eta_bs)
    singles = pair_rate * eta_single + pl_rate + dark_rate
    return pair_rate * eta_pair, singles, singles


# --- coincidence histograms -------------------------------------------------

@dataclass
class CoincidenceHistogram:
    bin_width: float
    delays: np.ndarray  # bin centers, s
    counts: np.ndarray
    duration: float

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.counts.shape != self.delays.shape:
            raise ValueError("counts and delays must have the same length")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def bin_centers(n_bins: int, bin_width: float) -> np.ndarray:
    return (np.arange(n_bins) - (n_bins - 1) / 2) * bin_width


def peak_fraction(delays, bin_width, sigma, mask=None) -> np.ndarray:
    """Probability of a Gaussian-jittered zero-delay coincidence falling in each bin."""
    lo = (delays - bin_width / 2) / (sigma * math.sqrt(2))
    hi = (delays + bin_width / 2) / (sigma * math.sqrt(2))
    p = 0.5 * (special.erf(hi) - special.erf(lo))
    return p if mask is None else p[mask]


def synthesize_histogram(pair_rate, singles_s, singles_i, jitter_sigma=DEFAULT_JITTER,
                         bin_width=10e-12, duration=3600.0, seed=None, n_bins=401) -> CoincidenceHistogram:
    """Pairs at zero delay with Gaussian jitter on a flat accidental floor.

    Per-bin counts are Poisson with mean pair_rate * T * P(bin) + s_s s_i w T,
    which is the binned form of placing each pair's delay independently.
    """
    if min(pair_rate, singles_s, singles_i) < 0:
        raise ValueError("rates must be nonnegative")
    rng = np.random.default_rng(seed)
    delays = bin_centers(n_bins, bin_width)
    mean = expected_histogram(pair_rate, singles_s, singles_i, jitter_sigma, bin_width, duration, delays)
    return CoincidenceHistogram(bin_width, delays, rng.poisson(mean), duration)


def expected_histogram(pair_rate, singles_s, singles_i, jitter_sigma, bin_width, duration, delays):
    acc = singles_s * singles_i * bin_width * duration
    if jitter_sigma > 0:
        peak = pair_rate * duration * peak_fraction(delays, bin_width, jitter_sigma)
    else:
        peak = np.where(np.abs(delays) < bin_width / 2, pair_rate * duration, 0.0)
    return peak + acc


def peak_mask(h: CoincidenceHistogram, peak_window: float) -> np.ndarray:
    return np.abs(h.delays) <= peak_window / 2 + 1e-6 * h.bin_width


def expected_car(pair_rate, singles_s, singles_i, jitter_sigma, bin_width, peak_window,
                 n_bins=401) -> float:
    """1 + pair_rate / (s_s s_i w_eff) with w_eff = (bins in window) * width / captured fraction."""
    delays = bin_centers(n_bins, bin_width)
    mask = np.abs(delays) <= peak_window / 2 + 1e-6 * bin_width
    frac = peak_fraction(delays, bin_width, jitter_sigma, mask).sum()
    w_eff = mask.sum() * bin_width / frac
    return 1.0 + pair_rate / (singles_s * singles_i * w_eff)


@dataclass
class CARResult:
    value: float
    std: float
    peak_counts: int
    background_per_window: float
    net_counts: float
    net_std: float
    background_limited: bool = False
    flags: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.value, self.std))

    @property
    def pair_evidence(self) -> bool:
        """CAR exceeds 2 by more than two standard deviations."""
        return bool(self.value - 2 * self.std > 2)


def car(h: CoincidenceHistogram, peak_window: float | None = None) -> CARResult:
    """Coincidence-to-accidental ratio.

    Peak counts within +-window/2 over the mean accidental counts in an
    equal-width window, the latter from all bins beyond 1.5 windows from zero.
    Poisson errors are propagated through the ratio.
    """
    peak_window = 4 * DEFAULT_JITTER if peak_window is None else peak_window
    mask = peak_mask(h, peak_window)
    m = int(mask.sum())
    if m < 1:
        raise ValueError("peak window covers no bin")
    bg = np.abs(h.delays) > 1.5 * peak_window
    n_bg = int(bg.sum())
    if n_bg == 0:
        raise ValueError("no background bins outside 3x the peak window")
    if n_bg < 10:
        raise ValueError(f"only {n_bg} background bins; at least 10 are required")
    P = int(h.counts[mask].sum())
    B = float(h.counts[bg].sum())
    acc = m * B / n_bg
    if B == 0:
        # lower bound from one background count
        value = P / (m / n_bg) if P else 0.0
        return CARResult(value, math.inf, P, 0.0, float(P), math.sqrt(P), True, ["background-limited"])
    value = P / acc
    rel = math.sqrt((1 / P if P else 0.0) + 1 / B)
    net_std = math.sqrt(P + (m / n_bg) ** 2 * B)
    return CARResult(value, value * rel, P, acc, P - acc, net_std)


# --- power scaling ----------------------------------------------------------

@dataclass
class PowerFit:
    slope: float
    intercept: float
    exponent: float
    r2: float
    rates: np.ndarray


def fit_power_law(powers, rates) -> PowerFit:
    """Linear fit rate = slope * P + b and log-log exponent; r2 is for the linear fit."""
    p = np.asarray(powers, dtype=float)
    r = np.asarray(rates, dtype=float)
    if p.size < 3:
        raise ValueError("at least three powers are required")
    slope, intercept = np.polyfit(p, r, 1)
    pos = r > 0
    exponent = np.polyfit(np.log(p[pos]), np.log(r[pos]), 1)[0]
    resid = r - (slope * p + intercept)
    ss = np.sum((r - r.mean()) ** 2)
    r2 = 1 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return PowerFit(float(slope), float(intercept), float(exponent), float(r2), r)


def power_sweep(powers, rate_per_mW: float, duration: float = 1.0, seed=None,
                noiseless: bool = False) -> PowerFit:
    """Simulate coincidence rates proportional to pump power and fit them."""
    p = np.asarray(powers, dtype=float)
    mean = rate_per_mW * p * duration
    counts = mean if noiseless else np.random.default_rng(seed).poisson(mean)
    return fit_power_law(p, counts / duration)


# --- fiber spectroscopy -----------------------------------------------------

class OutOfBandError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrometerConfig:
    """Dispersive time-of-flight spectrometer.

    ``fiber_length_km`` is the spool length (shared layout) or the signal-arm
    length (split layout, with ``idler_length_km`` defaulting to the same).
    """

    fiber_length_km: float = 1.0
    dispersion: float = 17.0  # ps / (nm km)
    reference_wavelength: float = DEGENERATE_NM
    band_nm: tuple = (1100.0, 2300.0)
    idler_length_km: float | None = None

    def __post_init__(self):
        if self.fiber_length_km <= 0 or (self.idler_length_km is not None and self.idler_length_km <= 0):
            raise ValueError("fiber length must be positive")
        if self.dispersion == 0:
            raise ValueError("dispersion must be nonzero")

    @property
    def lengths(self):
        li = self.fiber_length_km if self.idler_length_km is None else self.idler_length_km
        return self.fiber_length_km, li


def partner_wavelength(lam_nm, ref_nm=DEGENERATE_NM):
    """Energy-conserving partner: 1/l_s + 1/l_i = 2/l_deg."""
    return 1.0 / (2.0 / ref_nm - 1.0 / np.asarray(lam_nm, dtype=float))


def wavelengths_to_delay(lam_s, lam_i, cfg: SpectrometerConfig, layout: str = "shared-spool") -> float:
    """Arrival delay t_s - t_i in seconds (first-order dispersion)."""
    ls, li = cfg.lengths if layout == "split-arms" else (cfg.fiber_length_km,) * 2
    if layout not in ("shared-spool", "split-arms"):
        raise ValueError(f"unknown layout {layout!r}")
    ref = cfg.reference_wavelength
    dt_ps = cfg.dispersion * (ls * (lam_s - ref) - li * (lam_i - ref))
    return dt_ps * 1e-12


def fiber_delay_to_wavelengths(dt: float, cfg: SpectrometerConfig, layout: str = "shared-spool"):
    """Invert an arrival delay to the energy-conserving wavelength pair (nm)."""
    ref = cfg.reference_wavelength
    ls, li = cfg.lengths if layout == "split-arms" else (cfg.fiber_length_km,) * 2
    if layout not in ("shared-spool", "split-arms"):
        raise ValueError(f"unknown layout {layout!r}")
    if ls == li:
        delta = dt * 1e12 / (cfg.dispersion * ls)  # lam_s - lam_i, nm
        lam_s = 0.5 * ((delta + ref) + math.sqrt(delta**2 + ref**2))
    else:
        def g(lam):
            return wavelengths_to_delay(lam, partner_wavelength(lam, ref), cfg, layout) - dt

        lo = 0.5 * ref + 1e-6
        hi = 1e4 * ref
        try:
            lam_s = optimize.brentq(g, lo, hi, xtol=1e-12, rtol=1e-14)
        except ValueError:
            raise OutOfBandError(f"no wavelength pair maps to delay {dt:.4g} s") from None
    lam_i = float(partner_wavelength(lam_s, ref))
    lo_b, hi_b = cfg.band_nm
    if not (lo_b <= lam_s <= hi_b and lo_b <= lam_i <= hi_b) or lam_i <= 0:
        raise OutOfBandError(
            f"delay {dt * 1e12:.1f} ps maps to {lam_s:.1f}/{lam_i:.1f} nm, outside the "
            f"{lo_b:.0f}-{hi_b:.0f} nm band"
        )
    return float(lam_s), lam_i


def filter_from_table(lam_nm, transmission):
    lam = np.asarray(lam_nm, dtype=float)
    tr = np.asarray(transmission, dtype=float)
    order = np.argsort(lam)
    lam, tr = lam[order], tr[order]
    return lambda x: np.interp(x, lam, tr, left=tr[0], right=tr[-1])


def step_filter(cut_on_nm: float):
    return lambda x: np.where(np.asarray(x, dtype=float) >= cut_on_nm, 1.0, 0.0)


def read_filter_csv(path):
    lam, tr = [], []
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                lam.append(float(row[0]))
                tr.append(float(row[1]))
            except ValueError:
                continue  # header
    if len(lam) < 2:
        raise ValueError(f"{path}: filter curve needs at least two rows")
    return filter_from_table(lam, tr)


def dispersive_histogram(spectral_density, filter_curve, cfg: SpectrometerConfig, pairs: float,
                         bin_width=20e-12, n_bins=801, seed=None, noiseless=False,
                         background=0.0, n_sub=8, layout="shared-spool") -> CoincidenceHistogram:
    """Forward model: delay histogram of pairs with signal spectral density S(lambda).

    Each delay bin collects pairs whose arrival-detector wavelength lies in
    the bin's wavelength interval; the pair survives with probability
    T(lambda) T(partner). ``pairs`` scales the expected total before
    filtering; ``background`` adds a flat expected count per bin.
    """
    delays = bin_centers(n_bins, bin_width)
    mean = np.zeros(n_bins)
    for k, t in enumerate(delays):
        sub = t + (np.arange(n_sub) + 0.5 - n_sub / 2) / n_sub * bin_width
        acc = 0.0
        for ts in sub:
            try:
                lam, part = fiber_delay_to_wavelengths(ts, cfg, layout)
                jac = abs(_dlam_dt(ts, cfg, layout))
            except OutOfBandError:
                continue
            acc += spectral_density(lam) * filter_curve(lam) * filter_curve(part) * jac * bin_width / n_sub
        mean[k] = acc
    total = mean.sum()
    if total > 0:
        mean *= pairs / total
    mean += background
    counts = mean if noiseless else np.random.default_rng(seed).poisson(mean)
    return CoincidenceHistogram(bin_width, delays, counts, 1.0)


def _dlam_dt(dt, cfg, layout="shared-spool"):
    h = 1e-15
    a = fiber_delay_to_wavelengths(dt - h, cfg, layout)[0]
    b = fiber_delay_to_wavelengths(dt + h, cfg, layout)[0]
    return (b - a) / (2 * h)


def _mean_pair_transmission(filter_curve, a, b, ref, n=16):
    x = a + (np.arange(n) + 0.5) / n * (b - a)
    return float(np.mean(np.asarray(filter_curve(x), dtype=float)
                         * np.asarray(filter_curve(partner_wavelength(x, ref)), dtype=float)))


@dataclass
class Spectrum:
    wavelength_nm: np.ndarray
    counts_rel: np.ndarray
    std: np.ndarray
    valid: np.ndarray
    truncated_band: tuple | None = None

    def half_max_fraction(self) -> float:
        """Fraction of the valid band where the spectrum exceeds half its maximum."""
        v = self.valid
        if not np.any(v):
            return 0.0
        s = self.counts_rel[v]
        return float(np.mean(s >= 0.5 * s.max()))


def spectrum_estimate(h: CoincidenceHistogram, cfg: SpectrometerConfig, filter_curve,
                      layout: str = "shared-spool", min_transmission: float = 0.05) -> Spectrum:
    """Spectral density from a dispersive coincidence histogram.

    Bins map to the energy-conserving wavelength pair; counts are divided by
    the bin-averaged pair transmission T(lambda) T(partner) where that exceeds
    ``min_transmission`` over the whole bin and by its wavelength width, then scaled to a
    maximum of 1. Bins below the threshold are flagged invalid and zeroed.
    """
    lam, width, t_edge, edges = [], [], [], []
    keep = []
    for k, t in enumerate(h.delays):
        try:
            a, pa = fiber_delay_to_wavelengths(t - h.bin_width / 2, cfg, layout)
            b, pb = fiber_delay_to_wavelengths(t + h.bin_width / 2, cfg, layout)
            c, _ = fiber_delay_to_wavelengths(t, cfg, layout)
        except OutOfBandError:
            continue
        keep.append(k)
        lam.append(c)
        width.append(abs(b - a))
        edges.append((a, b))
        t_edge.append(min(float(filter_curve(a) * filter_curve(pa)), float(filter_curve(b) * filter_curve(pb))))
    if not keep:
        raise OutOfBandError("no histogram bin maps inside the configured band")
    keep = np.array(keep)
    lam, width = np.array(lam), np.array(width)
    counts = np.asarray(h.counts, dtype=float)[keep]
    # pair transmission averaged across each bin, since the counts integrate over it
    T = np.array([_mean_pair_transmission(filter_curve, a, b, cfg.reference_wavelength) for a, b in edges])
    # bins the filter edge cuts through are not invertible either
    valid = (T > min_transmission) & (np.array(t_edge) > min_transmission)
    if not np.any(valid):
        raise ValueError("filter transmission at or below threshold across the whole band")
    dens = np.zeros_like(counts)
    err = np.zeros_like(counts)
    dens[valid] = counts[valid] / (T[valid] * width[valid])
    err[valid] = np.sqrt(counts[valid]) / (T[valid] * width[valid])
    peak = dens.max()
    if peak > 0:
        dens, err = dens / peak, err / peak
    order = np.argsort(lam)
    lam_v = lam[valid]
    band = (float(lam_v.min()), float(lam_v.max())) if lam_v.size else None
    return Spectrum(lam[order], dens[order], err[order], valid[order], band)
