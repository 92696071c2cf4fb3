"""Two-qubit polarization states of the signal/idler pair.

Basis ordering is (HH, HV, VH, VV) with the signal photon in the first slot.
H is the crystal zigzag axis (lab x), V the armchair axis (lab y); in-plane
angles are counterclockwise from x as seen looking down the -z axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BASIS = ("HH", "HV", "VH", "VV")

NORM_TOL = 1e-12
PHYS_TOL = 1e-9
# eigenvalues of rho below this are treated as roundoff in concurrence()
EIG_FLOOR = 1e-14

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
_YY = np.kron(SIGMA_Y, SIGMA_Y)


class PreconditionError(ValueError):
    """Raised when an input violates a documented precondition."""


@dataclass(frozen=True)
class PumpAngle:
    """In-plane pump polarization angle, radians from the zigzag (x) axis."""

    phi_p: float

    def __post_init__(self):
        object.__setattr__(self, "phi_p", float(np.mod(self.phi_p, 2 * np.pi)))

    @classmethod
    def from_degrees(cls, deg: float) -> "PumpAngle":
        return cls(np.deg2rad(deg))

    def __float__(self):
        return self.phi_p


def _angle(phi) -> float:
    return phi.phi_p if isinstance(phi, PumpAngle) else float(phi)


class TwoQubitKet:
    """Pure two-photon polarization state.

    Amplitudes are normalized on construction unless ``normalize=False``,
    which is used for projected (sub-normalized) kets.
    """

    __slots__ = ("_amps",)

    def __init__(self, amplitudes, normalize: bool = True):
        a = np.array(amplitudes, dtype=complex).reshape(-1)
        if a.shape != (4,):
            raise ValueError(f"expected 4 amplitudes, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("amplitudes must be finite")
        if normalize:
            n = np.linalg.norm(a)
            if n == 0:
                raise ValueError("cannot normalize the zero vector")
            a = a / n
        a.setflags(write=False)
        self._amps = a

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self._amps))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(np.sum(np.abs(self._amps) ** 2) - 1.0) <= tol

    def normalized(self) -> "TwoQubitKet":
        return TwoQubitKet(self._amps)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._amps, dtype=dtype)

    def __repr__(self):
        return f"TwoQubitKet({np.array2string(self._amps, precision=6)})"


class DensityMatrix:
    """4x4 polarization density matrix.

    With ``validate=True`` (default) the matrix must be Hermitian, unit-trace
    and positive semidefinite to within ``PHYS_TOL``. Unvalidated instances
    represent unnormalized operators, e.g. after a lossy Jones transform.
    """

    __slots__ = ("_m",)

    def __init__(self, entries, validate: bool = True):
        m = np.array(entries, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("density matrix entries must be finite")
        m.setflags(write=False)
        self._m = m
        if validate:
            problems = self.physicality_problems()
            if problems:
                raise PreconditionError("unphysical density matrix: " + "; ".join(problems))

    @property
    def entries(self) -> np.ndarray:
        return self._m

    @property
    def trace(self) -> complex:
        return complex(np.trace(self._m))

    def purity(self) -> float:
        return float(np.real(np.trace(self._m @ self._m)))

    def physicality_problems(self, tol: float = PHYS_TOL) -> list[str]:
        m = self._m
        out = []
        herm = np.max(np.abs(m - m.conj().T))
        if herm > tol:
            out.append(f"not Hermitian (max deviation {herm:.3g})")
        tr = np.trace(m)
        if abs(tr - 1.0) > tol:
            out.append(f"trace {tr.real:.12g}{tr.imag:+.3g}j != 1")
        if herm <= tol:
            lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
            if lam[0] < -tol:
                out.append(f"negative eigenvalue {lam[0]:.3g}")
        return out

    def is_physical(self, tol: float = PHYS_TOL) -> bool:
        return not self.physicality_problems(tol)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._m, dtype=dtype)

    def __repr__(self):
        return f"DensityMatrix(\n{np.array2string(self._m, precision=4)})"


def ket(amplitudes) -> TwoQubitKet:
    return TwoQubitKet(amplitudes)


PHI_PLUS = TwoQubitKet([1, 0, 0, 1])
PHI_MINUS = TwoQubitKet([1, 0, 0, -1])
PSI_PLUS = TwoQubitKet([0, 1, 1, 0])
PSI_MINUS = TwoQubitKet([0, 1, -1, 0])
BELL_STATES = {"phi+": PHI_PLUS, "phi-": PHI_MINUS, "psi+": PSI_PLUS, "psi-": PSI_MINUS}

MAXIMALLY_MIXED = DensityMatrix(np.eye(4) / 4)


def tmd_state(phi_p) -> TwoQubitKet:
    """Pair state emitted by a C3v/D3h crystal for linear pump polarization ``phi_p``.

    An x-polarized pump gives Psi+, a y-polarized pump gives Phi-, and any
    angle in between is a real superposition of the two.
    """
    phi = _angle(phi_p)
    s, c = np.sin(phi), np.cos(phi)
    return TwoQubitKet(np.array([s, c, c, -s]) / np.sqrt(2))


def density_from_ket(psi: TwoQubitKet) -> DensityMatrix:
    if not psi.is_normalized():
        raise PreconditionError(f"ket is not normalized (norm {psi.norm:.15g})")
    a = psi.amplitudes
    return DensityMatrix(np.outer(a, a.conj()))


def as_density(state) -> DensityMatrix:
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, TwoQubitKet):
        return density_from_ket(state)
    return DensityMatrix(state)


def _require_physical(rho: DensityMatrix):
    problems = rho.physicality_problems()
    if problems:
        raise PreconditionError("unphysical density matrix: " + "; ".join(problems))


def concurrence(rho) -> float:
    """Wootters concurrence max(0, l1 - l2 - l3 - l4) from the spin-flipped matrix."""
    rho = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho, validate=False)
    _require_physical(rho)
    m = rho.entries
    # With rho = W W^dag the square roots of the eigenvalues of
    # rho (sy x sy) rho* (sy x sy) are the singular values of W^T (sy x sy) W.
    # Taking them that way avoids square roots of roundoff-level eigenvalues,
    # which otherwise cost ~1e-9 for pure states.
    d, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    keep = d > EIG_FLOOR
    w = v[:, keep] * np.sqrt(d[keep])
    lam = np.zeros(4)
    sv = np.linalg.svd(w.T @ _YY @ w, compute_uv=False)
    lam[: sv.size] = sv
    return float(min(1.0, max(0.0, lam[0] - lam[1] - lam[2] - lam[3])))


def fidelity(rho, target: TwoQubitKet) -> float:
    """Overlap <t|rho|t> with a pure target state."""
    rho = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho, validate=False)
    _require_physical(rho)
    if not target.is_normalized():
        raise PreconditionError("target ket is not normalized")
    t = target.amplitudes
    f = float(np.real(t.conj() @ rho.entries @ t))
    if f < -NORM_TOL or f > 1 + NORM_TOL:
        raise PreconditionError(f"fidelity {f} outside [0, 1]")
    return min(1.0, max(0.0, f))


def _check_jones(j, name):
    j = np.asarray(j, dtype=complex)
    if j.shape != (2, 2):
        raise ValueError(f"{name} must be a 2x2 Jones matrix, got shape {j.shape}")
    if not np.all(np.isfinite(j)):
        raise ValueError(f"{name} has non-finite entries")
    return j


def apply_local_jones(state, j_signal, j_idler):
    """Apply J_s (x) J_i to a ket or density matrix.

    No renormalization is done, so polarizers give sub-normalized results
    whose norm (ket) or trace (density matrix) is the transmission probability.
    """
    u = np.kron(_check_jones(j_signal, "j_signal"), _check_jones(j_idler, "j_idler"))
    if isinstance(state, TwoQubitKet):
        return TwoQubitKet(u @ state.amplitudes, normalize=False)
    if isinstance(state, DensityMatrix):
        return DensityMatrix(u @ state.entries @ u.conj().T, validate=False)
    raise TypeError(f"expected TwoQubitKet or DensityMatrix, got {type(state).__name__}")


# --- single-photon Jones matrices -------------------------------------------

def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def retarder(theta: float, delta: float) -> np.ndarray:
    """Linear retarder with fast axis at ``theta`` and retardance ``delta``.

    The global phase is chosen so the fast-axis component is unchanged.
    """
    return rotation(-theta) @ np.diag([1.0, np.exp(1j * delta)]) @ rotation(theta)


def half_wave_plate(theta: float) -> np.ndarray:
    return retarder(theta, np.pi)


def quarter_wave_plate(theta: float) -> np.ndarray:
    return retarder(theta, np.pi / 2)


def linear_polarizer(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c * c, c * s], [c * s, s * s]], dtype=complex)


# --- serialization ----------------------------------------------------------

def density_to_json(rho: DensityMatrix) -> dict:
    m = rho.entries
    return {"basis": list(BASIS), "re": np.real(m).tolist(), "im": np.imag(m).tolist()}


def density_from_json(obj: dict, validate: bool = True) -> DensityMatrix:
    basis = obj.get("basis", list(BASIS))
    if list(basis) != list(BASIS):
        raise ValueError(f"unsupported basis ordering {basis}")
    m = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    return DensityMatrix(m, validate=validate)


def ket_to_json(psi: TwoQubitKet) -> dict:
    a = psi.amplitudes
    return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}


def ket_from_json(obj: dict) -> TwoQubitKet:
    a = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    return TwoQubitKet(a, normalize=False)
