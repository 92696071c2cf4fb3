"""Planar layered media: index tables, transfer matrices, internal plane-wave fields.

Geometry: layer 0 is the top half-space (z > 0), the last layer the bottom
half-space. Interfaces sit at z = 0, -d1, -d1-d2, ... Each finite layer's
wave amplitudes are referenced at its upper interface; the top half-space
is referenced at z = 0 and the bottom half-space at its upper interface.

Amplitude convention: a plane wave with in-plane wavevector kappa * khat is

    s:  E = A * s_hat
    p:  E = A * p_hat(+/-),  p_hat(+/-) = (+/- w khat - kappa z_hat) / k

with s_hat = z_hat x khat, w = sqrt(k^2 - kappa^2) (Im w >= 0) and +/-
meaning up/down-going. With these vectors the normal-incidence Fresnel
coefficients are r_s = (n1 - n2)/(n1 + n2) and r_p = -r_s.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

C_LIGHT = 299_792_458.0


class StackError(ValueError):
    pass


class IndexTable:
    """Complex refractive index tabulated against vacuum wavelength (m)."""

    def __init__(self, wavelengths, n):
        wl = np.asarray(wavelengths, dtype=float).reshape(-1)
        n = np.asarray(n, dtype=complex).reshape(-1)
        if wl.size != n.size or wl.size == 0:
            raise StackError("index table needs matching, non-empty columns")
        if wl.size > 1 and not np.all(np.diff(wl) > 0):
            raise StackError("index table wavelengths must be strictly increasing")
        self.wavelengths = wl
        self.n = n

    @classmethod
    def constant(cls, n, lo=100e-9, hi=100e-6) -> "IndexTable":
        return cls([lo, hi], [n, n])

    @property
    def range(self) -> tuple[float, float]:
        return float(self.wavelengths[0]), float(self.wavelengths[-1])

    def covers(self, wl) -> bool:
        wl = np.asarray(wl, dtype=float)
        lo, hi = self.range
        return bool(np.all((wl >= lo * (1 - 1e-12)) & (wl <= hi * (1 + 1e-12))))

    def __call__(self, wl) -> complex:
        if not self.covers(wl):
            lo, hi = self.range
            raise StackError(
                f"wavelength {np.min(wl) * 1e9:.1f}-{np.max(wl) * 1e9:.1f} nm outside "
                f"index table range {lo * 1e9:.1f}-{hi * 1e9:.1f} nm"
            )
        if self.wavelengths.size == 1:
            return self.n[0] * np.ones_like(np.asarray(wl, dtype=float))
        re = np.interp(wl, self.wavelengths, self.n.real)
        im = np.interp(wl, self.wavelengths, self.n.imag)
        return re + 1j * im


@dataclass(frozen=True)
class Layer:
    thickness: float  # m; np.inf for the two half-spaces
    index: IndexTable
    name: str = ""


@dataclass(frozen=True)
class LayeredStack:
    layers: tuple[Layer, ...]
    film_index: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 2:
            raise StackError("a stack needs at least two half-spaces")
        if not (np.isinf(layers[0].thickness) and np.isinf(layers[-1].thickness)):
            raise StackError("first and last layers must be half-infinite")
        for lay in layers[1:-1]:
            if not (np.isfinite(lay.thickness) and lay.thickness >= 0):
                raise StackError(f"finite layer thickness required, got {lay.thickness}")
        if not 0 < self.film_index < len(layers) - 1:
            raise StackError("the nonlinear film must be a finite inner layer")

    @property
    def film(self) -> Layer:
        return self.layers[self.film_index]

    def interfaces(self) -> np.ndarray:
        """z positions of the N-1 interfaces, top to bottom."""
        d = [lay.thickness for lay in self.layers[1:-1]]
        return -np.concatenate([[0.0], np.cumsum(d)])

    def film_bounds(self) -> tuple[float, float]:
        z = self.interfaces()
        return float(z[self.film_index]), float(z[self.film_index - 1])

    def indices(self, wl) -> list:
        return [lay.index(wl) for lay in self.layers]

    def covers(self, wl) -> bool:
        return all(lay.index.covers(wl) for lay in self.layers)

    def substack(self, start: int, stop: int) -> "_Substack":
        return _Substack(self, start, stop)

    def with_film_thickness(self, t: float) -> "LayeredStack":
        layers = list(self.layers)
        f = layers[self.film_index]
        layers[self.film_index] = Layer(t, f.index, f.name)
        return LayeredStack(tuple(layers), self.film_index, self.meta)

    def homogeneous_copy(self, n) -> "LayeredStack":
        tab = IndexTable.constant(n)
        layers = tuple(Layer(lay.thickness, tab, lay.name) for lay in self.layers)
        return LayeredStack(layers, self.film_index, self.meta)


class _Substack:
    """Layers [start, stop] of a parent stack, both ends treated as half-spaces."""

    def __init__(self, parent: LayeredStack, start: int, stop: int):
        self.parent = parent
        self.idx = list(range(start, stop + 1))

    def indices(self, wl):
        return [self.parent.layers[j].index(wl) for j in self.idx]

    def thicknesses(self):
        return [self.parent.layers[j].thickness for j in self.idx[1:-1]]


# ---------------------------------------------------------------------------
# 3R-MoS2 in-plane (ordinary) index, approximate values for 0.7-3 um.
_MOS2_NM = [600, 650, 700, 750, 788, 850, 950, 1100, 1300, 1500, 1576, 1700, 2000, 2400, 3000]
_MOS2_N = [
    5.20 + 1.10j, 5.25 + 1.05j, 4.90 + 0.45j, 4.75 + 0.20j, 4.65 + 0.12j,
    4.50 + 0.05j, 4.35 + 0.01j, 4.25, 4.17, 4.12, 4.10, 4.08, 4.05, 4.03, 4.02,
]
MOS2_3R = IndexTable(np.array(_MOS2_NM) * 1e-9, _MOS2_N)
QUARTZ = IndexTable.constant(1.45)
AIR = IndexTable.constant(1.0)

FILM_THICKNESS = 285e-9


def default_stack(thickness: float = FILM_THICKNESS) -> LayeredStack:
    """Air / 3R-MoS2 film / quartz, pumped from the air side."""
    return LayeredStack(
        (Layer(np.inf, AIR, "air"), Layer(thickness, MOS2_3R, "3R-MoS2"), Layer(np.inf, QUARTZ, "quartz")),
        film_index=1,
    )


def load_stack_json(path) -> LayeredStack:
    """Read ``{"layers": [{"thickness_nm", "n_table": [[nm, re, im], ...]}], "film_index"}``.

    Half-spaces use ``"thickness_nm": null`` (or "inf").
    """
    obj = json.loads(Path(path).read_text())
    return stack_from_dict(obj)


def stack_from_dict(obj: dict) -> LayeredStack:
    try:
        raw_layers = obj["layers"]
        film = int(obj.get("film_index", 1))
    except (KeyError, TypeError) as exc:
        raise StackError(f"stack description missing key: {exc}") from None
    layers = []
    for k, item in enumerate(raw_layers):
        t = item.get("thickness_nm")
        thickness = np.inf if t is None or str(t).lower() in ("inf", "infinity") else float(t) * 1e-9
        table = np.asarray(item["n_table"], dtype=float)
        if table.ndim != 2 or table.shape[1] not in (2, 3):
            raise StackError(f"layer {k}: n_table rows must be [lambda_nm, n_re(, n_im)]")
        n = table[:, 1] + (1j * table[:, 2] if table.shape[1] == 3 else 0)
        tab = IndexTable.constant(n[0]) if len(table) == 1 else IndexTable(table[:, 0] * 1e-9, n)
        layers.append(Layer(thickness, tab, item.get("name", f"layer{k}")))
    return LayeredStack(tuple(layers), film)


def stack_to_dict(stack: LayeredStack) -> dict:
    out = []
    for lay in stack.layers:
        tab = lay.index
        rows = [[w * 1e9, n.real, n.imag] for w, n in zip(tab.wavelengths, tab.n)]
        out.append({
            "name": lay.name,
            "thickness_nm": None if np.isinf(lay.thickness) else lay.thickness * 1e9,
            "n_table": rows,
        })
    return {"layers": out, "film_index": stack.film_index}


# ---------------------------------------------------------------------------
# transfer matrices

def kz(n, k0, kpar):
    """Normal wavevector component with Im >= 0 (and Re >= 0 for real media)."""
    w = np.sqrt((n * k0) ** 2 - np.asarray(kpar, dtype=complex) ** 2 + 0j)
    return np.where(np.imag(w) < 0, -w, w)


def _ab(n, w, pol):
    # tangential (E, H) field vector is (a (D + U), b (D - U))
    if pol == "s":
        return 1.0, w
    return n, w / n


def _check_pol(pol):
    if pol not in ("s", "p"):
        raise ValueError(f"polarization must be 's' or 'p', got {pol!r}")


def march(ns, ds, k0, kpar, pol, side):
    """Layer amplitudes (D_j, U_j) for unit incident amplitude.

    ``ns``: indices of all layers, ``ds``: thicknesses of the inner layers.
    Returns (D, U) arrays of shape (n_layers, *kpar.shape), referenced as in
    the module docstring, normalized so the incident wave has amplitude 1.
    """
    _check_pol(pol)
    kpar = np.asarray(kpar, dtype=float)
    nl = len(ns)
    ws = [kz(n, k0, kpar) for n in ns]
    D = np.zeros((nl,) + kpar.shape, dtype=complex)
    U = np.zeros_like(D)
    if side == "top":
        D[-1], U[-1] = 1.0, 0.0
        for j in range(nl - 1, 0, -1):
            a, b = _ab(ns[j], ws[j], pol)
            F1, F2 = a * (D[j] + U[j]), b * (D[j] - U[j])
            # amplitudes of layer j-1 at its lower interface
            a, b = _ab(ns[j - 1], ws[j - 1], pol)
            Db = 0.5 * (F1 / a + F2 / b)
            Ub = 0.5 * (F1 / a - F2 / b)
            if j - 1 == 0:
                D[0], U[0] = Db, Ub
            else:
                ph = np.exp(1j * ws[j - 1] * ds[j - 2])
                D[j - 1], U[j - 1] = Db / ph, Ub * ph
        inc = D[0].copy()
    elif side == "bottom":
        D[0], U[0] = 0.0, 1.0
        for j in range(0, nl - 1):
            if j == 0:
                Db, Ub = D[0], U[0]
            else:
                ph = np.exp(1j * ws[j] * ds[j - 1])
                Db, Ub = D[j] * ph, U[j] / ph
            a, b = _ab(ns[j], ws[j], pol)
            F1, F2 = a * (Db + Ub), b * (Db - Ub)
            a, b = _ab(ns[j + 1], ws[j + 1], pol)
            D[j + 1] = 0.5 * (F1 / a + F2 / b)
            U[j + 1] = 0.5 * (F1 / a - F2 / b)
        inc = U[-1].copy()
    else:
        raise ValueError(f"incidence_side must be 'top' or 'bottom', got {side!r}")
    return D / inc, U / inc, ws


def _launch_check(n, k0, kpar):
    if abs(np.imag(n)) > 0:
        raise StackError("the launch half-space must be lossless")
    if np.any(np.asarray(kpar) >= np.real(n) * k0):
        raise StackError("evanescent excitation: k_parallel exceeds the launch medium wavenumber")


def _rt(ns, ds, k0, kpar, pol, side):
    D, U, ws = march(ns, ds, k0, kpar, pol, side)
    if side == "top":
        return U[0], D[-1]
    return D[-1], U[0]


def fresnel_stack(stack, k_parallel, wavelength, pol, incidence_side="top"):
    """Amplitude (r, t) of the full stack for a plane wave from one half-space.

    ``r`` is referenced at the first interface met by the wave and ``t`` at
    the last; both use the E-field amplitude convention of this module.
    """
    ns = stack.indices(wavelength)
    ds = [lay.thickness for lay in stack.layers[1:-1]]
    k0 = 2 * np.pi / wavelength
    launch = ns[0] if incidence_side == "top" else ns[-1]
    _launch_check(launch, k0, k_parallel)
    r, t = _rt(ns, ds, k0, k_parallel, pol, incidence_side)
    if np.ndim(r) == 0:
        return complex(r), complex(t)
    return r, t


def substack_rt(sub: _Substack, k0, kpar, pol, side, wl):
    """(r, t) of a sub-stack; the launch layer may be absorbing (no launch check)."""
    return _rt(sub.indices(wl), sub.thicknesses(), k0, kpar, pol, side)


def basis_vectors(n, k0, kpar, phi):
    """s_hat, p_hat(up), p_hat(down) for in-plane wavevector kpar at azimuth phi.

    Arrays of shape (*kpar.shape, 3); p vectors are complex for lossy media.
    """
    kpar = np.asarray(kpar, dtype=float)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), kpar.shape)
    w = kz(n, k0, kpar)
    k = n * k0
    kx, ky = np.cos(phi), np.sin(phi)
    zeros = np.zeros_like(kx)
    khat = np.stack([kx, ky, zeros], axis=-1)
    zhat = np.stack([zeros, zeros, np.ones_like(kx)], axis=-1)
    s = np.stack([-ky, kx, zeros], axis=-1).astype(complex)
    p_up = ((w / k)[..., None] * khat - (kpar / k)[..., None] * zhat).astype(complex)
    p_dn = (-(w / k)[..., None] * khat - (kpar / k)[..., None] * zhat).astype(complex)
    return s, p_up, p_dn


def plane_wave_field(stack, kpar, phi, wavelength, e_inc, z, side="top"):
    """Total E field at depths ``z`` inside the stack for an incident plane wave.

    ``e_inc`` is the incident complex polarization (3-vector, transverse to
    the incident direction) with unit-amplitude phase reference at the
    origin. Only the factor exp(i kpar . rho) is omitted. Returns shape
    (len(z), 3).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    ns = stack.indices(wavelength)
    ds = [lay.thickness for lay in stack.layers[1:-1]]
    k0 = 2 * np.pi / wavelength
    zi = stack.interfaces()
    nl = len(ns)
    launch = 0 if side == "top" else nl - 1
    _launch_check(ns[launch], k0, kpar)
    e_inc = np.asarray(e_inc, dtype=complex)
    s0, pu0, pd0 = basis_vectors(ns[launch], k0, kpar, phi)
    p_inc = pd0 if side == "top" else pu0
    # incident wave is referenced at the launch layer's reference plane
    w_l = kz(ns[launch], k0, kpar)
    zref = 0.0 if side == "top" else zi[-1]
    ref_phase = np.exp(-1j * w_l * zref) if side == "top" else np.exp(1j * w_l * zref)
    comps = {"s": complex(e_inc @ s0), "p": complex(e_inc @ p_inc)}
    # layer index of every z
    layer_of = np.array([_layer_at(zi, zz) for zz in z])
    out = np.zeros((z.size, 3), dtype=complex)
    for pol, amp in comps.items():
        if amp == 0:
            continue
        D, U, ws = march(ns, ds, k0, kpar, pol, side)
        for m, (zz, j) in enumerate(zip(z, layer_of)):
            zr = 0.0 if j == 0 else zi[j - 1]
            dd = D[j] * np.exp(-1j * ws[j] * (zz - zr))
            uu = U[j] * np.exp(1j * ws[j] * (zz - zr))
            s, pu, pd = basis_vectors(ns[j], k0, kpar, phi)
            if pol == "s":
                vec = (dd + uu) * s
            else:
                vec = dd * pd + uu * pu
            out[m] += amp * ref_phase * vec
    return out


def _layer_at(zi, z):
    # interfaces are decreasing; layer j spans (zi[j], zi[j-1])
    if z > zi[0]:
        return 0
    for j in range(1, len(zi)):
        if z >= zi[j]:
            return j
    return len(zi)
