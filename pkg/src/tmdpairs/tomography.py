"""Two-photon polarization tomography with waveplate/polarizer analyzers.

Each arm holds a quarter-wave plate, a half-wave plate and a fixed polarizer
transmitting H, traversed in that order. A setting therefore projects onto

    |proj> = W_q(qwp)^dagger W_h(hwp)^dagger |H>

with the retarder convention of :func:`tmdpairs.states.retarder` (fast-axis
component unchanged, slow axis delayed by the retardance). With it,
qwp = 45 deg, hwp = 0 projects on L = (H + iV)/sqrt(2) and qwp = 0,
hwp = 22.5 deg on R = (H - iV)/sqrt(2).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .states import (
    DensityMatrix,
    PreconditionError,
    TwoQubitKet,
    as_density,
    concurrence,
    fidelity,
    half_wave_plate,
    quarter_wave_plate,
)

H = np.array([1.0, 0.0], dtype=complex)


def jones_projector(qwp: float, hwp: float) -> np.ndarray:
    """Single-photon state selected by the analyzer (normalized, 2 amplitudes)."""
    v = quarter_wave_plate(qwp).conj().T @ half_wave_plate(hwp).conj().T @ H
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class ProjectionSetting:
    """Waveplate angles in radians for the signal and idler analyzers."""

    qwp_s: float
    hwp_s: float
    qwp_i: float
    hwp_i: float
    label: str = ""

    @classmethod
    def from_degrees(cls, qwp_s, hwp_s, qwp_i, hwp_i, label=""):
        return cls(*np.deg2rad([qwp_s, hwp_s, qwp_i, hwp_i]), label=label)

    def degrees(self) -> tuple[float, float, float, float]:
        return tuple(float(np.rad2deg(a)) for a in (self.qwp_s, self.hwp_s, self.qwp_i, self.hwp_i))

    def state(self) -> np.ndarray:
        return np.kron(jones_projector(self.qwp_s, self.hwp_s), jones_projector(self.qwp_i, self.hwp_i))

    def projector(self) -> np.ndarray:
        v = self.state()
        return np.outer(v, v.conj())

    def name(self) -> str:
        return self.label or "({:.4g},{:.4g},{:.4g},{:.4g})deg".format(*self.degrees())


# waveplate angles (qwp, hwp) in degrees selecting each single-photon state
WAVEPLATES = {
    "H": (0.0, 0.0),
    "V": (0.0, 45.0),
    "D": (45.0, 22.5),
    "A": (45.0, -22.5),
    "R": (0.0, 22.5),
    "L": (45.0, 0.0),
}

# 16-setting set of James, Kwiat, Munro and White (2001)
CANONICAL_PAIRS = (
    "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
    "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL",
)


def setting_for(pair: str) -> ProjectionSetting:
    qs, hs = WAVEPLATES[pair[0]]
    qi, hi = WAVEPLATES[pair[1]]
    return ProjectionSetting.from_degrees(qs, hs, qi, hi, label=pair)


def canonical_settings() -> list[ProjectionSetting]:
    return [setting_for(p) for p in CANONICAL_PAIRS]


@dataclass(frozen=True)
class MeasurementRecord:
    setting: ProjectionSetting
    counts: int
    duration: float = 1.0

    def __post_init__(self):
        if self.counts < 0 or int(self.counts) != self.counts:
            raise ValueError(f"counts must be a nonnegative integer, got {self.counts}")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        object.__setattr__(self, "counts", int(self.counts))


class RankDeficientError(PreconditionError):
    def __init__(self, msg, deficient):
        super().__init__(msg)
        self.deficient = deficient


# Hermitian operator basis: sigma_a (x) sigma_b / 2, orthonormal under tr(A B)
_PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]
HERMITIAN_BASIS = np.array([np.kron(a, b) / 2 for a in _PAULI for b in _PAULI], dtype=complex)


def _design_matrix(settings) -> np.ndarray:
    """A[k, j] = tr(Pi_k B_j), real."""
    P = np.array([s.projector() for s in settings])
    return np.real(np.einsum("kij,bji->kb", P, HERMITIAN_BASIS))


class TomographySet:
    """Projective counts that determine a two-qubit density matrix.

    Construction rejects sets whose projectors do not span the 16-dimensional
    space of Hermitian 4x4 matrices, naming the redundant settings.
    """

    COND_LIMIT = 1e10

    def __init__(self, records):
        self.records = tuple(records)
        if len(self.records) < 16:
            raise RankDeficientError(
                f"{len(self.records)} settings cannot span the 16-dimensional operator space",
                [r.setting.name() for r in self.records],
            )
        A = self.design_matrix()
        sv = np.linalg.svd(A, compute_uv=False)
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        if cond > self.COND_LIMIT:
            from scipy.linalg import qr

            _, _, piv = qr(A.T, pivoting=True)
            rank = int(np.sum(sv > sv[0] * 1e-10))
            redundant = [self.records[k].setting.name() for k in sorted(piv[rank:])]
            raise RankDeficientError(
                f"settings span only rank {rank}/16 (condition {cond:.3g}); "
                f"linearly dependent settings: {', '.join(redundant)}",
                redundant,
            )
        self.condition = float(cond)

    @property
    def settings(self):
        return [r.setting for r in self.records]

    @property
    def counts(self) -> np.ndarray:
        return np.array([r.counts for r in self.records], dtype=float)

    @property
    def durations(self) -> np.ndarray:
        return np.array([r.duration for r in self.records], dtype=float)

    def design_matrix(self) -> np.ndarray:
        return _design_matrix(self.settings)

    def projectors(self) -> np.ndarray:
        return np.array([s.projector() for s in self.settings])

    def with_counts(self, counts) -> "TomographySet":
        return TomographySet(
            MeasurementRecord(r.setting, int(c), r.duration) for r, c in zip(self.records, counts)
        )

    def __len__(self):
        return len(self.records)


def predicted_counts(rho, setting: ProjectionSetting, n_total: float) -> float:
    rho = as_density(rho)
    v = setting.state()
    return float(n_total * max(0.0, np.real(v.conj() @ rho.entries @ v)))


def expected_counts(rho, settings, n_total: float, durations=None) -> np.ndarray:
    rho = as_density(rho)
    d = np.ones(len(settings)) if durations is None else np.asarray(durations, float)
    return np.array([predicted_counts(rho, s, n_total) for s in settings]) * d


def simulate(rho, n_total: float, settings=None, rng=None, noiseless=False, duration=1.0) -> TomographySet:
    """Counts for each setting, Poisson-distributed unless ``noiseless``.

    ``n_total`` is the pair number per setting arriving before the analyzers;
    noiseless counts are rounded to the nearest integer.
    """
    settings = settings or canonical_settings()
    mean = expected_counts(rho, settings, n_total)
    if noiseless:
        counts = np.rint(mean)
    else:
        rng = np.random.default_rng(rng)
        counts = rng.poisson(mean)
    return TomographySet(MeasurementRecord(s, int(c), duration) for s, c in zip(settings, counts))


def _rates(data: TomographySet) -> np.ndarray:
    return data.counts / data.durations


def linear_reconstruct(data: TomographySet) -> np.ndarray:
    """Least-squares inversion of n_k = tr(M Pi_k); returns M / tr(M) (may be unphysical)."""
    A = data.design_matrix()
    x, *_ = np.linalg.lstsq(A, _rates(data), rcond=None)
    m = np.einsum("b,bij->ij", x, HERMITIAN_BASIS)
    m = 0.5 * (m + m.conj().T)
    tr = np.real(np.trace(m))
    if tr <= 0:
        raise PreconditionError("linear estimate has non-positive trace (no counts?)")
    return m / tr


def project_physical(m) -> DensityMatrix:
    """Clip negative eigenvalues and renormalize."""
    m = 0.5 * (np.asarray(m) + np.asarray(m).conj().T)
    lam, vec = np.linalg.eigh(m)
    lam = np.clip(lam, 0.0, None)
    if lam.sum() <= 0:
        return DensityMatrix(np.eye(4) / 4)
    out = (vec * lam) @ vec.conj().T
    return DensityMatrix(out / np.real(np.trace(out)))


# --- maximum likelihood -----------------------------------------------------

_TRIL = np.tril_indices(4)
_OFF = np.tril_indices(4, -1)


def t_from_params(x) -> np.ndarray:
    """Lower-triangular T from 16 reals: 4 diagonal, then 6 real + 6 imaginary off-diagonal."""
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = x[:4]
    T[_OFF] = x[4:10] + 1j * x[10:16]
    return T


def params_from_rho(rho, eps: float = 1e-6) -> np.ndarray:
    """Parameters with T^dagger T proportional to rho (regularized to full rank)."""
    m = np.asarray(rho) + eps * np.eye(4)
    # J m J = L L^dag (Cholesky) gives T = (J L J)^dag, lower triangular
    J = np.eye(4)[::-1]
    L = np.linalg.cholesky(J @ m @ J)
    T = (J @ L @ J).conj().T
    return np.concatenate([np.real(np.diag(T)), np.real(T[_OFF]), np.imag(T[_OFF])])


def rho_from_params(x) -> np.ndarray:
    T = t_from_params(x)
    m = T.conj().T @ T
    return m / np.real(np.trace(m))


@dataclass
class MLEResult:
    rho: DensityMatrix
    likelihood: float  # Poisson negative log-likelihood, lower is better
    n_iter: int
    trace: list = field(default_factory=list)
    linear_likelihood: float = float("nan")
    converged: bool = True


class MLEConvergenceError(RuntimeError):
    def __init__(self, msg, best: DensityMatrix, trace):
        super().__init__(msg)
        self.best = best
        self.trace = trace


def poisson_nll(rho, data: TomographySet) -> float:
    """sum_k [nbar_k - n_k ln nbar_k] with the pair number N fitted in closed form."""
    p = np.real(np.einsum("kij,ji->k", data.projectors(), np.asarray(rho))) * data.durations
    p = np.clip(p, 1e-300, None)
    n = data.counts
    N = n.sum() / p.sum()
    nbar = N * p
    mask = n > 0
    return float(nbar.sum() - np.sum(n[mask] * np.log(nbar[mask])))


def _objective(data: TomographySet):
    P = data.projectors() * data.durations[:, None, None]
    n = data.counts
    ntot = n.sum()
    mask = n > 0

    def f(x):
        T = t_from_params(x)
        M = T.conj().T @ T
        q = np.clip(np.real(np.einsum("kij,ji->k", P, M)), 1e-300, None)
        Q = q.sum()
        val = ntot * np.log(Q) - np.sum(n[mask] * np.log(q[mask]))
        dq = ntot / Q - np.where(mask, n / q, 0.0)
        G = np.einsum("k,kij->ij", dq, P)
        GT = G @ T.conj().T  # d val = 2 Re tr(G T^dag dT)
        grad_T = GT.T  # element (i, j) pairs with dT[i, j]
        g = np.concatenate([
            2 * np.real(np.diag(grad_T)),
            2 * np.real(grad_T[_OFF]),
            -2 * np.imag(grad_T[_OFF]),
        ])
        return val, g

    return f


def mle_reconstruct(data: TomographySet, tol: float = 1e-10, max_iter: int = 10_000,
                    seed: int | None = None, raise_on_fail: bool = True) -> MLEResult:
    """Maximum-likelihood density matrix, rho = T^dag T / tr(T^dag T).

    Quasi-Newton (BFGS) minimization of the Poisson negative log-likelihood
    over the 16 Cholesky parameters, with analytic gradient, started from the
    physicality-projected linear estimate. ``seed`` only perturbs the start
    when the linear estimate is degenerate, so results are deterministic.
    """
    lin = project_physical(linear_reconstruct(data))
    x0 = params_from_rho(lin.entries)
    if not np.all(np.isfinite(x0)):
        x0 = np.random.default_rng(seed).normal(size=16)
    x0 = x0 / np.linalg.norm(x0)
    f = _objective(data)
    offset = poisson_nll(rho_from_params(x0), data) - f(x0)[0]

    trace = [f(x0)[0] + offset]

    def record(xk):
        trace.append(f(xk)[0] + offset)

    res = minimize(f, x0, jac=True, method="BFGS", callback=record,
                   options={"gtol": 1e-9, "maxiter": max_iter, "xrtol": tol})
    rho = rho_from_params(res.x)
    rho = 0.5 * (rho + rho.conj().T)
    dm = DensityMatrix(rho / np.real(np.trace(rho)))
    nll = poisson_nll(dm.entries, data)
    lin_nll = poisson_nll(lin.entries, data)
    if nll > lin_nll:
        # never worse than the starting point
        dm, nll = lin, lin_nll
    converged = bool(res.success) or _small_relative_change(trace, tol) or res.status == 2
    if not converged and raise_on_fail:
        raise MLEConvergenceError(f"MLE did not converge: {res.message}", dm, trace)
    return MLEResult(dm, nll, int(res.nit), trace, lin_nll, converged)


def _small_relative_change(trace, tol):
    if len(trace) < 2:
        return True
    a, b = trace[-2], trace[-1]
    return abs(a - b) <= tol * max(1.0, abs(b))


# --- Monte Carlo uncertainty ------------------------------------------------

@dataclass
class MonteCarloResult:
    mean: float
    std: float
    values: np.ndarray
    excluded: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.mean, self.std))

    def format(self, name: str = "C") -> str:
        return f"{name}={format_uncertainty(self.mean, self.std)}"


def format_uncertainty(value: float, std: float) -> str:
    """``0.967±0.002`` style: std to one significant figure (two if it starts with 1)."""
    if not np.isfinite(std) or std <= 0:
        return f"{value:.6g}±{std:g}"
    exp = math.floor(math.log10(std))
    digits = 2 if f"{std:e}".startswith("1") else 1
    dec = max(0, -exp + digits - 1)
    return f"{value:.{dec}f}±{std:.{dec}f}"


def _statistic(kind, target):
    if kind == "concurrence":
        return concurrence
    if kind == "fidelity":
        if target is None:
            raise ValueError("fidelity statistic needs a target ket")
        return lambda rho: fidelity(rho, target)
    if callable(kind):
        return kind
    raise ValueError(f"unknown statistic {kind!r}")


def monte_carlo_uncertainty(data: TomographySet, n_samples: int, statistic="concurrence",
                            target: TwoQubitKet | None = None, seed: int = 0,
                            workers: int = 1, mle_options: dict | None = None) -> MonteCarloResult:
    """Mean and standard deviation of a statistic over Poisson-resampled data.

    Each sample draws every record's counts from a Poisson law with the
    observed counts as mean and re-runs the MLE. Sample k uses its own child
    of ``SeedSequence(seed)``, so results do not depend on ``workers``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    stat = _statistic(statistic, target)
    opts = mle_options or {}
    children = np.random.SeedSequence(seed).spawn(n_samples)
    lam = data.counts

    def one(k):
        rng = np.random.default_rng(children[k])
        sample = data.with_counts(rng.poisson(lam))
        try:
            return stat(mle_reconstruct(sample, **opts).rho), None
        except (MLEConvergenceError, PreconditionError) as exc:
            return np.nan, f"sample {k}: {exc}"

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(n_samples)))
    else:
        results = [one(k) for k in range(n_samples)]
    values = np.array([r[0] for r in results])
    excluded = [r[1] for r in results if r[1] is not None]
    good = values[np.isfinite(values)]
    if good.size < 2:
        raise RuntimeError("fewer than two Monte Carlo samples succeeded: " + "; ".join(excluded))
    return MonteCarloResult(float(good.mean()), float(good.std(ddof=1)), values, excluded)


# --- CSV I/O ------------------------------------------------------------------

CSV_COLUMNS = ("qwp_s_deg", "hwp_s_deg", "qwp_i_deg", "hwp_i_deg", "counts", "duration_s")


class TomographyCSVError(ValueError):
    pass


def read_csv(path) -> TomographySet:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise TomographyCSVError(f"{path.name}: missing column(s) {', '.join(missing)}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                s = ProjectionSetting.from_degrees(
                    float(row["qwp_s_deg"]), float(row["hwp_s_deg"]),
                    float(row["qwp_i_deg"]), float(row["hwp_i_deg"]),
                    label=row.get("label") or "",
                )
                counts = float(row["counts"])
                records.append(MeasurementRecord(s, int(round(counts)), float(row["duration_s"])))
            except (TypeError, ValueError) as exc:
                raise TomographyCSVError(f"{path.name} line {lineno}: {exc}") from None
    return TomographySet(records)


def write_rows(data: TomographySet):
    yield list(CSV_COLUMNS) + ["label"]
    for r in data.records:
        yield [f"{a:.10g}" for a in r.setting.degrees()] + [str(r.counts), f"{r.duration:.10g}", r.setting.label]
