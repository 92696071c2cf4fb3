"""Two-photon amplitudes and collection-integrated polarization density matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..chi2 import ChiTensor
from ..states import DensityMatrix
from .farfield import (
    DetectionVector,
    PumpField,
    collimated_hv,
    direction_params,
    green_batch,
    pump_plane_component,
)
from .stack import C_LIGHT, LayeredStack, StackError, kz


class QuadratureError(RuntimeError):
    """Depth quadrature did not reach the requested tolerance."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass(frozen=True)
class GridSpec:
    """Quadrature resolution for source_density_matrix.

    ``n_kappa`` Gauss-Legendre radial nodes and ``n_phi`` azimuths per
    collection cone; ``n_freq`` Gauss-Legendre nodes across the band when
    ``spectral`` is "band"; pump cone resolution for focused pumps.
    """

    n_kappa: int = 12
    n_phi: int = 16
    n_freq: int = 5
    spectral: str = "degenerate"
    pump_n_kappa: int = 4
    pump_n_phi: int = 8
    z_tol: float = 1e-10
    z_start: int = 16
    z_max: int = 1024

    def doubled(self) -> "GridSpec":
        return GridSpec(
            2 * self.n_kappa, 2 * self.n_phi, 2 * self.n_freq, self.spectral,
            2 * self.pump_n_kappa, 2 * self.pump_n_phi, self.z_tol, self.z_start, self.z_max,
        )


def _gauss(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * (x + 1) + a, 0.5 * (b - a) * w


def _amplitudes(stack, chi_lab, wl_p, e_pump_fn, kp_s, ph_s, wl_s, kp_i, ph_i, wl_i, pol_s, pol_i, tol, n0, nmax):
    """Depth-integrated amplitudes for M direction pairs, shape (M, 2, 2).

    ``e_pump_fn(z)`` -> (M, Z, 3) pump field; ``pol_s``/``pol_i`` are (M, 2, 3)
    detection polarizations. Doubles the Gauss-Legendre order until the
    largest change relative to the largest amplitude drops below ``tol``.
    """
    zb, zt = stack.film_bounds()
    prev = None
    history = []
    n = n0
    while True:
        z, wz = _gauss(n, zb, zt)
        Gs = green_batch(stack, kp_s, ph_s, wl_s, z, "bottom")
        Gi = green_batch(stack, kp_i, ph_i, wl_i, z, "bottom")
        Ep = e_pump_fn(z)
        gs = np.einsum("msk,mzka->mzsa", pol_s.conj(), Gs)
        gi = np.einsum("msk,mzka->mzsa", pol_i.conj(), Gi)
        amp = np.einsum("abc,z,mzc,mzsa,mztb->mst", chi_lab, wz, Ep, gs, gi)
        if prev is not None:
            scale = np.max(np.abs(amp))
            change = np.max(np.abs(amp - prev)) / scale if scale > 0 else 0.0
            history.append((n, change))
            if change < tol:
                return amp
        if 2 * n > nmax:
            last = f"{history[-1][1]:.3g}" if history else "n/a"
            raise QuadratureError(f"depth quadrature not converged after {n} nodes (last change {last})", history)
        prev = amp
        n *= 2


def _kvec(det: DetectionVector, stack):
    kpar, phi, _, _ = direction_params(stack, np.asarray(det.direction), det.wavelength)
    return kpar * np.array([np.cos(phi), np.sin(phi)])


def pair_amplitude(stack: LayeredStack, pump: PumpField, det_s: DetectionVector,
                   det_i: DetectionVector, chi: ChiTensor, tol: float = 1e-10) -> complex:
    """Two-photon amplitude for detection along ``det_s``/``det_i`` (bottom half-space).

    The lateral integral is carried out analytically: it enforces
    kpar_s + kpar_i = kpar_pump. For the plane-wave pump (kpar = 0) pairs
    that violate this return 0; for the focused pump the matching plane-wave
    component is weighted by the angular spectrum.
    """
    if abs(det_s.omega + det_i.omega - pump.omega) > 1e-9 * pump.omega:
        raise ValueError("frequency mismatch: omega_s + omega_i != omega_p")
    if not stack.covers([det_s.wavelength, det_i.wavelength, pump.wavelength]):
        raise StackError("wavelengths outside the index tables")
    kp_vec = _kvec(det_s, stack) + _kvec(det_i, stack)
    kp = float(np.hypot(*kp_vec))
    k0p = 2 * np.pi / pump.wavelength
    if pump.model == "plane-wave":
        if kp > 1e-9 * k0p:
            return 0.0 + 0.0j
        weight, kp, php = 1.0, 0.0, 0.0
    else:
        weight = float(pump.weight_density(kp))
        if weight == 0:
            return 0.0 + 0.0j
        php = float(np.arctan2(kp_vec[1], kp_vec[0])) if kp > 0 else 0.0
    ks, phs, _, _ = direction_params(stack, np.asarray(det_s.direction), det_s.wavelength)
    ki, phi_, _, _ = direction_params(stack, np.asarray(det_i.direction), det_i.wavelength)

    def e_pump(z):
        return pump_plane_component(stack, pump, kp, php, z)[None]

    ps = np.asarray(det_s.polarization, dtype=complex)[None, None, :].repeat(2, axis=1)
    pi = np.asarray(det_i.polarization, dtype=complex)[None, None, :].repeat(2, axis=1)
    amp = _amplitudes(stack, chi.lab_array(), pump.wavelength, e_pump,
                      np.atleast_1d(ks), np.atleast_1d(phs), det_s.wavelength,
                      np.atleast_1d(ki), np.atleast_1d(phi_), det_i.wavelength,
                      ps, pi, tol, 16, 4096)
    return complex(weight * amp[0, 0, 0])


@dataclass
class SourceResult:
    rho: DensityMatrix
    meta: dict = field(default_factory=dict)


def _spectral_nodes(pump: PumpField, band, grid: GridSpec):
    """(wl_s, wl_i, weight) with omega_s + omega_i = omega_p."""
    wp = pump.omega
    if grid.spectral == "degenerate":
        wl = 2 * pump.wavelength
        return [(wl, wl, 1.0)]
    if grid.spectral != "band":
        raise ValueError(f"unknown spectral mode {grid.spectral!r}")
    lo, hi = band
    w_lo, w_hi = 2 * np.pi * C_LIGHT / hi, 2 * np.pi * C_LIGHT / lo
    # both photons must fall inside the band
    w_lo, w_hi = max(w_lo, wp - w_hi), min(w_hi, wp - w_lo)
    if w_lo >= w_hi:
        raise ValueError("band admits no energy-conserving pair")
    om, wo = _gauss(grid.n_freq, w_lo, w_hi)
    return [(2 * np.pi * C_LIGHT / o, 2 * np.pi * C_LIGHT / (wp - o), w) for o, w in zip(om, wo)]


def _cone(kmax, n_kappa, n_phi):
    kap, wk = _gauss(n_kappa, 0.0, kmax)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    K, P = np.meshgrid(kap, phi, indexing="ij")
    W = (wk * kap)[:, None] * np.full(n_phi, 2 * np.pi / n_phi)[None, :]
    return K.ravel(), P.ravel(), W.ravel()


def _directions(kpar, phi, n, k0):
    w = np.sqrt((n * k0) ** 2 - kpar**2)
    return np.stack([kpar * np.cos(phi), kpar * np.sin(phi), -w], axis=-1) / (n * k0)


def source_density_matrix(stack: LayeredStack, pump: PumpField, collection_na: float,
                          band=(1500e-9, 1650e-9), chi: ChiTensor | None = None,
                          grid: GridSpec | None = None) -> SourceResult:
    """Polarization density matrix of pairs collected through the bottom half-space.

    Sums |amplitude|-bilinears over signal directions inside the collection
    cone (idler fixed by transverse momentum conservation for a plane-wave
    pump, or paired with each pump plane wave for a focused pump) and over
    the spectral nodes. Far-field polarizations are projected on the
    collimated H/V vectors. The measure is d^2 kappa_s / (k_s k_zs k_i k_zi),
    i.e. uniform in solid angle for both photons; no pupil apodization.
    """
    chi = chi or ChiTensor()
    grid = grid or GridSpec()
    if not 0 < collection_na < 1:
        raise ValueError("collection NA must lie in (0, 1)")
    chi_lab = chi.lab_array()
    n_sub = float(np.real(stack.layers[-1].index(pump.wavelength * 2)))
    nodes = _spectral_nodes(pump, band, grid)
    for wl_s, wl_i, _ in nodes:
        if not stack.covers([wl_s, wl_i, pump.wavelength]):
            raise StackError("band outside the index tables")

    rho = np.zeros((4, 4), dtype=complex)
    total_pairs = 0
    for wl_s, wl_i, w_om in nodes:
        k0s, k0i = 2 * np.pi / wl_s, 2 * np.pi / wl_i
        ns = float(np.real(stack.layers[-1].index(wl_s)))
        ni = float(np.real(stack.layers[-1].index(wl_i)))
        kmax = collection_na * min(k0s, k0i)
        kap, ph, wgt = _cone(kmax, grid.n_kappa, grid.n_phi)
        if pump.model == "plane-wave":
            pump_nodes = [(0.0, 0.0, 1.0)]
        else:
            pump_nodes = list(zip(*pump.spectrum_grid(grid.pump_n_kappa, grid.pump_n_phi)))
        for kp, php, wp in pump_nodes:
            kpv = kp * np.array([np.cos(php), np.sin(php)])
            ksv = np.stack([kap * np.cos(ph), kap * np.sin(ph)], axis=-1)
            kiv = kpv[None, :] - ksv
            ki = np.hypot(kiv[:, 0], kiv[:, 1])
            keep = ki <= collection_na * k0i * (1 + 1e-12)
            if not np.any(keep):
                continue
            ks_k, phs_k, w_k = kap[keep], ph[keep], wgt[keep]
            ki_k = ki[keep]
            phi_k = np.where(ki_k > 0, np.arctan2(kiv[keep, 1], kiv[keep, 0]), 0.0)
            dir_s = _directions(ks_k, phs_k, ns, k0s)
            dir_i = _directions(ki_k, phi_k, ni, k0i)
            pol_s = np.array([np.stack(collimated_hv(d)) for d in dir_s])
            pol_i = np.array([np.stack(collimated_hv(d)) for d in dir_i])

            def e_pump(z, kp=kp, php=php):
                e = pump_plane_component(stack, pump, kp, php, z)
                return np.broadcast_to(e, (ks_k.size,) + e.shape)

            amp = _amplitudes(stack, chi_lab, pump.wavelength, e_pump,
                              ks_k, phs_k, wl_s, ki_k, phi_k, wl_i,
                              pol_s, pol_i, grid.z_tol, grid.z_start, grid.z_max)
            wzs = np.real(kz(ns, k0s, ks_k))
            wzi = np.real(kz(ni, k0i, ki_k))
            meas = w_k / (ns * k0s * wzs * ni * k0i * wzi)
            v = amp.reshape(-1, 4)
            rho += w_om * wp * np.einsum("m,mi,mj->ij", meas, v, v.conj())
            total_pairs += ks_k.size
    tr = np.real(np.trace(rho))
    if tr <= 0:
        raise ValueError("no pair amplitude collected (vanishing nonlinearity?)")
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    meta = {
        "collection_na": collection_na,
        "band_nm": [band[0] * 1e9, band[1] * 1e9],
        "phi_p_deg": float(np.rad2deg(pump.phi_p)),
        "pump_model": pump.model,
        "spectral": grid.spectral,
        "grid": {"n_kappa": grid.n_kappa, "n_phi": grid.n_phi, "n_freq": len(nodes),
                 "pump_n_kappa": grid.pump_n_kappa, "pump_n_phi": grid.pump_n_phi},
        "direction_pairs": int(total_pairs),
        "n_substrate": n_sub,
    }
    return SourceResult(DensityMatrix(rho), meta)
