"""Second-order tensor of 3R/monolayer TMDs and the polarization laws it implies."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .states import (
    TwoQubitKet,
    apply_local_jones,
    linear_polarizer,
    tmd_state,
    _angle,
)

X, Y, Z = 0, 1, 2


@dataclass(frozen=True)
class ChiTensor:
    """chi^(2) with C3v symmetry.

    ``theta_ac`` is the lab-frame angle of the armchair (crystal y) axis. The
    default pi/2 makes crystal and lab frames coincide. Index order is
    (signal, idler, pump).
    """

    d22: float = 1.0
    d31: float = 0.0
    theta_ac: float = np.pi / 2

    def crystal_array(self) -> np.ndarray:
        chi = np.zeros((3, 3, 3))
        chi[Y, Y, Y] = self.d22
        chi[Y, X, X] = chi[X, X, Y] = chi[X, Y, X] = -self.d22
        if self.d31:
            # Kleinman-symmetric out-of-plane elements (d15 = d31)
            for a, b in ((X, X), (Y, Y)):
                chi[Z, a, b] = chi[a, Z, b] = chi[a, b, Z] = self.d31
        return chi

    def rotation(self) -> np.ndarray:
        """Matrix taking crystal-frame components to lab-frame components."""
        psi = self.theta_ac - np.pi / 2
        c, s = np.cos(psi), np.sin(psi)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def lab_array(self) -> np.ndarray:
        r = self.rotation()
        return np.einsum("ai,bj,ck,ijk->abc", r, r, r, self.crystal_array())

    def element(self, a: str, b: str, c: str) -> float:
        idx = {"x": X, "y": Y, "z": Z}
        return float(self.crystal_array()[idx[a], idx[b], idx[c]])

    def scaled(self, factor: float) -> "ChiTensor":
        return ChiTensor(self.d22 * factor, self.d31 * factor, self.theta_ac)


def chi2_contract(t: ChiTensor, e_s, e_i, e_p) -> float:
    """sum_abc chi_abc e_s[a] e_i[b] e_p[c] with lab-frame vectors."""
    return float(np.einsum("abc,a,b,c->", t.lab_array(), e_s, e_i, e_p).real)


def in_plane(phi: float) -> np.ndarray:
    return np.array([np.cos(phi), np.sin(phi), 0.0])


def shg_intensity(phi: float, t: ChiTensor | None = None) -> float:
    """SHG through an analyzer co-rotating parallel to the pump, peak normalized to 1."""
    t = t or ChiTensor()
    e = in_plane(phi)
    return chi2_contract(t, e, e, e) ** 2 / t.d22**2


class AnalyzerMode(str, Enum):
    NONE = "none"
    FIXED = "common-fixed"
    PARALLEL = "common-corotating-parallel"
    PERPENDICULAR = "common-corotating-perpendicular"


@dataclass(frozen=True)
class AnalyzerConfig:
    """A single linear analyzer shared by both photons."""

    mode: AnalyzerMode = AnalyzerMode.NONE
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", AnalyzerMode(self.mode))
        object.__setattr__(self, "angle", float(np.mod(self.angle, np.pi)))

    def axis(self, phi_p: float) -> float | None:
        if self.mode is AnalyzerMode.NONE:
            return None
        if self.mode is AnalyzerMode.FIXED:
            return self.angle
        if self.mode is AnalyzerMode.PARALLEL:
            return phi_p
        return phi_p + np.pi / 2


def projected_pair_rate(phi_p, analyzer: AnalyzerConfig, t: ChiTensor | None = None) -> float:
    """Coincidence rate relative to unpolarized detection (= 1).

    Obtained by passing the emitted state through the analyzer on both arms
    and taking the transmitted norm. Lab angles are converted to the crystal
    frame when ``t`` is rotated.
    """
    phi = _angle(phi_p)
    offset = (t.theta_ac - np.pi / 2) if t is not None else 0.0
    psi: TwoQubitKet = tmd_state(phi - offset)
    axis = analyzer.axis(phi)
    if axis is None:
        return float(np.sum(np.abs(psi.amplitudes) ** 2))
    p = linear_polarizer(axis - offset)
    out = apply_local_jones(psi, p, p)
    return float(np.sum(np.abs(out.amplitudes) ** 2))


def rate_sweep(phi_grid, analyzer: AnalyzerConfig, t: ChiTensor | None = None) -> np.ndarray:
    return np.array([projected_pair_rate(p, analyzer, t) for p in np.asarray(phi_grid, float)])
