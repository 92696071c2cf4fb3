"""Pump field inside the film and the reduced far-field Green's tensor of the stack."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stack import (
    C_LIGHT,
    LayeredStack,
    StackError,
    basis_vectors,
    kz,
    plane_wave_field,
    substack_rt,
)

DEFAULT_PUMP_WAVELENGTH = 788e-9


@dataclass(frozen=True)
class PumpField:
    """Monochromatic pump incident from the top half-space.

    ``model`` is "plane-wave" (normal incidence) or "focused-gaussian", an
    angular spectrum exp(-(kappa / (NA k0))^2) truncated at NA k0 with each
    plane wave's polarization mapped from the collimated input by an
    aplanatic lens. The focused field is normalized to ``amplitude`` at the
    focus in a homogeneous medium.
    """

    phi_p: float = np.pi / 2
    wavelength: float = DEFAULT_PUMP_WAVELENGTH
    model: str = "plane-wave"
    na: float = 0.4
    amplitude: complex = 1.0

    def __post_init__(self):
        if self.model not in ("plane-wave", "focused-gaussian"):
            raise ValueError(f"unknown pump model {self.model!r}")
        if self.model == "focused-gaussian" and not 0 < self.na < 1:
            raise ValueError("pump NA must lie in (0, 1)")

    @property
    def omega(self) -> float:
        return 2 * np.pi * C_LIGHT / self.wavelength

    @property
    def polarization(self) -> np.ndarray:
        return np.array([np.cos(self.phi_p), np.sin(self.phi_p), 0.0])

    def spectrum_grid(self, n_kappa: int = 16, n_phi: int = 24):
        """(kappa, phi, weight) of the normalized angular spectrum, weights summing to 1."""
        k0 = 2 * np.pi / self.wavelength
        kmax = self.na * k0
        x, wx = np.polynomial.legendre.leggauss(n_kappa)
        kap = 0.5 * kmax * (x + 1)
        wk = 0.5 * kmax * wx * kap * np.exp(-(kap / kmax) ** 2)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        K, P = np.meshgrid(kap, phi, indexing="ij")
        W = np.repeat(wk[:, None], n_phi, axis=1) * (2 * np.pi / n_phi)
        W = W / W.sum()
        return K.ravel(), P.ravel(), W.ravel()

    def weight_density(self, kpar) -> np.ndarray:
        """Angular-spectrum amplitude per d^2 kappa, zero outside the NA."""
        k0 = 2 * np.pi / self.wavelength
        kmax = self.na * k0
        kpar = np.asarray(kpar, dtype=float)
        norm = np.pi * kmax**2 * (1 - np.exp(-1.0))
        return np.where(kpar <= kmax, np.exp(-(kpar / kmax) ** 2) / norm, 0.0)


def _film_check(stack: LayeredStack, z):
    zb, zt = stack.film_bounds()
    z = np.atleast_1d(np.asarray(z, dtype=float))
    tol = 1e-12 * max(1.0, zt - zb) + 1e-18
    if np.any(z < zb - tol) or np.any(z > zt + tol):
        raise StackError(f"source/field point outside the film ({zb * 1e9:.3f}..{zt * 1e9:.3f} nm)")
    return np.clip(z, zb, zt)


def lens_mapped_input(e_in, kpar, phi, n0, k0):
    """Polarization of a plane-wave component behind an aplanatic focusing lens."""
    s, _, pd = basis_vectors(n0, k0, np.atleast_1d(kpar), np.atleast_1d(phi))
    khat = np.array([np.cos(phi), np.sin(phi), 0.0])
    es = e_in @ s[0].real
    ek = e_in @ khat
    # meridional component follows the bending ray; p_dn -> -khat at normal incidence
    return es * s[0] - ek * pd[0]


def pump_plane_component(stack, pump: PumpField, kpar, phi, z) -> np.ndarray:
    """Field in the film of one pump plane wave with in-plane wavevector (kpar, phi)."""
    n0 = stack.layers[0].index(pump.wavelength)
    k0 = 2 * np.pi / pump.wavelength
    e_in = lens_mapped_input(pump.polarization, kpar, phi, np.real(n0), k0)
    return pump.amplitude * plane_wave_field(stack, kpar, phi, pump.wavelength, e_in, z, side="top")


def pump_field_in_film(stack, pump: PumpField, r, n_kappa: int = 16, n_phi: int = 24) -> np.ndarray:
    """Complex pump field vector at point ``r`` (m) inside the film."""
    r = np.asarray(r, dtype=float)
    _film_check(stack, r[2])
    if pump.model == "plane-wave":
        return pump_plane_component(stack, pump, 0.0, 0.0, r[2])[0]
    out = np.zeros(3, dtype=complex)
    for kap, ph, w in zip(*pump.spectrum_grid(n_kappa, n_phi)):
        lateral = np.exp(1j * kap * (np.cos(ph) * r[0] + np.sin(ph) * r[1]))
        out += w * lateral * pump_plane_component(stack, pump, kap, ph, r[2])[0]
    return out


# ---------------------------------------------------------------------------
# far-field Green's tensor

def direction_params(stack: LayeredStack, direction, wavelength):
    """(kpar, phi, side, n_det) for real unit direction(s) of shape (..., 3)."""
    d = np.asarray(direction, dtype=float)
    if np.any(np.abs(np.linalg.norm(d, axis=-1) - 1) > 1e-9):
        raise ValueError("detection direction must be a unit vector")
    dz = d[..., 2]
    if np.any(np.abs(dz) < 1e-9):
        raise StackError("detection direction parallel to the interfaces")
    if np.any(dz > 0) and np.any(dz < 0):
        raise ValueError("batch directions must share one half-space")
    side = "bottom" if np.all(dz < 0) else "top"
    lay = stack.layers[-1] if side == "bottom" else stack.layers[0]
    n_det = lay.index(wavelength)
    if abs(np.imag(n_det)) > 0:
        raise StackError("far field requires a lossless detection half-space")
    n_det = float(np.real(n_det))
    k0 = 2 * np.pi / wavelength
    rho = np.hypot(d[..., 0], d[..., 1])
    kpar = n_det * k0 * rho
    phi = np.where(rho > 1e-15, np.arctan2(d[..., 1], d[..., 0]), 0.0)
    return kpar, phi, side, n_det


def green_batch(stack: LayeredStack, kpar, phi, wavelength, z, side="bottom") -> np.ndarray:
    """Reduced far-field Green's tensors, shape (M, Z, 3, 3).

    Built from the plane-wave expansion of a point dipole in the film, the
    multiple-reflection sum between the film interfaces, transmission to the
    detection half-space and the stationary-phase factor k_z. The common
    exp(ikr)/r and k0^2/(4 pi eps0) factors are dropped, so a homogeneous
    medium gives (I - khat khat^T) exp(-i k khat . r_s).
    """
    kpar = np.atleast_1d(np.asarray(kpar, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), kpar.shape)
    z = _film_check(stack, z)
    f = stack.film_index
    nl = len(stack.layers)
    k0 = 2 * np.pi / wavelength
    zi = stack.interfaces()
    zb, zt = stack.film_bounds()
    tf = zt - zb
    n_f = stack.film.index(wavelength)
    w_f = kz(n_f, k0, kpar)
    s_f, pu_f, pd_f = basis_vectors(n_f, k0, kpar, phi)

    upper = stack.substack(0, f)
    lower = stack.substack(f, nl - 1)
    det_layer = nl - 1 if side == "bottom" else 0
    n_d = stack.layers[det_layer].index(wavelength)
    w_d = kz(n_d, k0, kpar)
    s_d, pu_d, pd_d = basis_vectors(n_d, k0, kpar, phi)

    e_dn = np.exp(1j * w_f[:, None] * (z[None, :] - zb))  # source -> bottom of film
    e_up = np.exp(1j * w_f[:, None] * (zt - z[None, :]))  # source -> top of film
    e_t = np.exp(1j * w_f * tf)[:, None]

    G = np.zeros(kpar.shape + (z.size, 3, 3), dtype=complex)
    for pol in ("s", "p"):
        r_t, t_t = substack_rt(upper, k0, kpar, pol, "bottom", wavelength)
        r_b, t_b = substack_rt(lower, k0, kpar, pol, "top", wavelength)
        den = (1 - r_t * r_b * np.exp(2j * w_f * tf))[:, None]
        if pol == "s":
            v_up = v_dn = s_f
            e_det = s_d
        else:
            v_up, v_dn = pu_f, pd_f
            e_det = pd_d if side == "bottom" else pu_d
        if side == "bottom":
            a_dn = e_dn
            a_up = (r_t[:, None] * e_up * e_t)
            pref = t_b * np.exp(1j * w_d * zi[-1])
            c = a_dn[..., None] * v_dn[:, None, :] + a_up[..., None] * v_up[:, None, :]
        else:
            a_up = e_up
            a_dn = (r_b[:, None] * e_dn * e_t)
            pref = t_t * np.exp(-1j * w_d * zi[0])
            c = a_up[..., None] * v_up[:, None, :] + a_dn[..., None] * v_dn[:, None, :]
        c = c * (pref / w_f)[:, None, None] / den[..., None]
        G += (w_d[:, None, None, None] * e_det[:, None, :, None]) * c[:, :, None, :]
    return G


def farfield_green(stack: LayeredStack, direction, z_source: float, omega: float) -> np.ndarray:
    """Reduced far-field Green's tensor G[sigma, alpha] for one direction and depth."""
    wl = 2 * np.pi * C_LIGHT / omega
    kpar, phi, side, _ = direction_params(stack, direction, wl)
    return green_batch(stack, np.atleast_1d(kpar), np.atleast_1d(phi), wl, [z_source], side)[0, 0]


class GreensTensor:
    """Callable view G(direction, z, omega) of a stack's reduced far-field tensor."""

    def __init__(self, stack: LayeredStack):
        self.stack = stack

    def __call__(self, direction, z_source, omega):
        return farfield_green(self.stack, direction, z_source, omega)


@dataclass(frozen=True)
class DetectionVector:
    direction: tuple
    polarization: tuple
    omega: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        e = np.asarray(self.polarization, dtype=complex)
        if abs(np.linalg.norm(d) - 1) > 1e-9 or abs(np.linalg.norm(e) - 1) > 1e-9:
            raise ValueError("direction and polarization must be unit vectors")
        if abs(e @ d) >= 1e-12:
            raise ValueError("detection polarization must be orthogonal to the direction")
        object.__setattr__(self, "direction", tuple(d))
        object.__setattr__(self, "polarization", tuple(e))

    @property
    def wavelength(self) -> float:
        return 2 * np.pi * C_LIGHT / self.omega


def collimated_hv(direction) -> tuple[np.ndarray, np.ndarray]:
    """Far-field polarization vectors that a collimating lens maps onto lab H and V.

    The azimuthal (s) component is preserved and the meridional component is
    rotated into the pupil plane, so at normal emission these reduce to x and y.
    """
    d = np.asarray(direction, dtype=float)
    rho = np.hypot(d[0], d[1])
    phi = np.arctan2(d[1], d[0]) if rho > 1e-15 else 0.0
    khat = np.array([np.cos(phi), np.sin(phi), 0.0])
    s = np.array([-np.sin(phi), np.cos(phi), 0.0])
    m = np.cross(d, s)
    if m @ khat < 0:
        m = -m
    out = []
    for e in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0])):
        v = (e @ s) * s + (e @ khat) * m
        out.append(v / np.linalg.norm(v))
    return out[0], out[1]
