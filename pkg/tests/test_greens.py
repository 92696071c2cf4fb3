import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tmdpairs.chi2 import ChiTensor
from tmdpairs.greens.farfield import (
    DetectionVector, GreensTensor, PumpField, collimated_hv, direction_params, farfield_green, pump_field_in_film,
)
from tmdpairs.greens.pairs import GridSpec, QuadratureError, pair_amplitude, source_density_matrix
from tmdpairs.greens.stack import (
    AIR, C_LIGHT, MOS2_3R, QUARTZ, IndexTable, Layer, LayeredStack, StackError, basis_vectors, default_stack,
    fresnel_stack, load_stack_json, plane_wave_field, stack_from_dict, stack_to_dict,
)
from tmdpairs.states import PHI_MINUS, PSI_PLUS, concurrence, fidelity, tmd_state

WL = 1576e-9
K0 = 2 * np.pi / WL
OMEGA_S = 2 * np.pi * C_LIGHT / WL


def three_layer(n1, n2, n3, t):
    tabs = [IndexTable.constant(n) for n in (n1, n2, n3)]
    return LayeredStack((Layer(np.inf, tabs[0]), Layer(t, tabs[1]), Layer(np.inf, tabs[2])), 1)


def airy(n1, n2, n3, t, kpar, pol):
    # textbook single-film Airy sum with interface Fresnel coefficients
    w = [np.sqrt((n * K0) ** 2 - kpar**2 + 0j) for n in (n1, n2, n3)]
    if pol == "s":
        r = lambda a, b: (w[a] - w[b]) / (w[a] + w[b])
        tt = lambda a, b: 2 * w[a] / (w[a] + w[b])
    else:
        n = (n1, n2, n3)
        r = lambda a, b: (n[b] ** 2 * w[a] - n[a] ** 2 * w[b]) / (n[b] ** 2 * w[a] + n[a] ** 2 * w[b])
        tt = lambda a, b: 2 * n[a] * n[b] * w[a] / (n[b] ** 2 * w[a] + n[a] ** 2 * w[b])
    ph = np.exp(2j * w[1] * t)
    den = 1 + r(0, 1) * r(1, 2) * ph
    return (r(0, 1) + r(1, 2) * ph) / den, tt(0, 1) * tt(1, 2) * np.exp(1j * w[1] * t) / den


def test_fresnel_air_quartz():
    st_ = three_layer(1.0, 1.45, 1.45, 0.0)
    r, t = fresnel_stack(st_, 0.0, WL, "s")
    assert r == pytest.approx((1 - 1.45) / (1 + 1.45), abs=1e-12)
    assert abs(r + 0.18367) < 1e-5
    assert abs(t) == pytest.approx(2 / 2.45, abs=1e-12)
    rp, _ = fresnel_stack(st_, 0.0, WL, "p")
    assert rp == pytest.approx(-r, abs=1e-12)


def test_zero_thickness_film_is_transparent():
    bare = three_layer(1.0, 1.45, 1.45, 0.0)
    film = three_layer(1.0, 4.1, 1.45, 0.0)
    for kp in (0.0, 0.5 * K0):
        for pol in "sp":
            a = fresnel_stack(bare, kp, WL, pol)
            b = fresnel_stack(film, kp, WL, pol)
            assert np.allclose(a, b, atol=1e-12)


def test_homogeneous_stack_no_reflection():
    r, t = fresnel_stack(default_stack().homogeneous_copy(1.45), 0.3 * K0, WL, "p")
    assert abs(r) < 1e-14 and abs(abs(t) - 1) < 1e-12


@given(st.floats(0, 0.95), st.floats(0, 600e-9), st.sampled_from("sp"), st.sampled_from(["top", "bottom"]))
def test_matches_airy_and_conserves_energy(frac, t, pol, side):
    n1, n2, n3 = (1.0, 4.1, 1.45) if side == "top" else (1.45, 4.1, 1.0)
    kp = frac * K0  # propagating on both sides
    stack = three_layer(1.0, 4.1, 1.45, t)
    r, tr = fresnel_stack(stack, kp, WL, pol, side)
    r_ref, t_ref = airy(n1, n2, n3, t, kp, pol)
    assert abs(r - r_ref) < 1e-9
    w_in, w_out = (np.sqrt((n * K0) ** 2 - kp**2) for n in (n1, n3))
    # normal energy flux of a plane wave is proportional to k_z |E|^2 for both polarizations
    flux = (w_out / w_in) * abs(tr) ** 2
    assert abs(abs(r) ** 2 + flux - 1) < 1e-9


def test_evanescent_launch_rejected():
    with pytest.raises(StackError):
        fresnel_stack(default_stack(), 1.2 * K0, WL, "s", "top")
    with pytest.raises(StackError):
        fresnel_stack(default_stack(), 0.0, 5e-6, "s")  # outside film table


def test_stack_validation_and_json(tmp_path):
    with pytest.raises(StackError):
        LayeredStack((Layer(1e-6, AIR), Layer(1e-7, MOS2_3R), Layer(np.inf, QUARTZ)))
    with pytest.raises(StackError):
        IndexTable([2e-6, 1e-6], [1, 1])
    d = stack_to_dict(default_stack())
    p = tmp_path / "stack.json"
    p.write_text(json.dumps(d))
    back = load_stack_json(p)
    assert back.film.thickness == pytest.approx(285e-9)
    assert back.film.index(WL) == pytest.approx(MOS2_3R(WL))
    same = stack_from_dict({"layers": [{"thickness_nm": None, "n_table": [[1000, 1.0]]},
                                       {"thickness_nm": 10, "n_table": [[700, 4.0, 0.1], [2000, 4.0, 0.0]]},
                                       {"thickness_nm": "inf", "n_table": [[1000, 1.45]]}]})
    assert same.film_bounds() == pytest.approx((-10e-9, 0.0))


def test_pump_plane_wave_homogeneous():
    hs = default_stack().homogeneous_copy(1.0)
    pump = PumpField(phi_p=np.pi / 2)
    k = 2 * np.pi / pump.wavelength
    for z in (-1e-9, -100e-9, -285e-9):
        e = pump_field_in_film(hs, pump, [0, 0, z])
        assert np.allclose(e, [0, np.exp(-1j * k * z), 0], atol=1e-12)


def test_pump_transmission_into_quartz():
    st_ = three_layer(1.0, 1.45, 1.45, 285e-9)
    e = pump_field_in_film(st_, PumpField(phi_p=0.0), [0, 0, -1e-15])
    assert abs(e[0]) == pytest.approx(2 / 2.45, abs=1e-9)
    assert abs(abs(e[0]) - 0.8163) < 1e-4
    assert abs(e[1]) < 1e-15 and abs(e[2]) < 1e-15


def test_pump_outside_film_rejected():
    with pytest.raises(StackError):
        pump_field_in_film(default_stack(), PumpField(), [0, 0, 10e-9])


def test_focused_pump_small_na_limit():
    st_ = default_stack()
    r = [0.0, 0.0, -100e-9]
    plane = pump_field_in_film(st_, PumpField(phi_p=0.4), r)
    foc = pump_field_in_film(st_, PumpField(phi_p=0.4, model="focused-gaussian", na=1e-4), r)
    assert np.max(abs(foc - plane)) / np.max(abs(plane)) < 1e-6
    with pytest.raises(ValueError):
        PumpField(model="focused-gaussian", na=1.2)


def test_green_homogeneous_is_transverse_projector():
    hs = default_stack().homogeneous_copy(1.45)
    d = np.array([0.3, 0.2, -np.sqrt(1 - 0.13)])
    z = -100e-9
    g = farfield_green(hs, d, z, OMEGA_S)
    ref = (np.eye(3) - np.outer(d, d)) * np.exp(-1j * 1.45 * K0 * d[2] * z)
    assert np.max(abs(g - ref)) < 1e-6 * np.max(abs(ref))
    up = farfield_green(hs, np.array([0, 0, 1.0]), z, OMEGA_S)
    assert up[2, 0] == 0


@given(st.floats(0.0, 0.9), st.floats(0, 2 * np.pi), st.booleans(), st.floats(0.0, 1.0))
def test_green_transversality(rho, phi, down, zf):
    st_ = default_stack()
    d = np.array([rho * np.cos(phi), rho * np.sin(phi), np.sqrt(1 - rho**2) * (-1 if down else 1)])
    g = farfield_green(st_, d, -zf * 285e-9, OMEGA_S)
    assert np.max(abs(d @ g)) <= 1e-9 * np.max(abs(g))


@pytest.mark.parametrize("down", [True, False])
def test_green_reciprocity(down):
    # the far field of a dipole equals the field a plane wave arriving from the
    # detector direction produces at the source (contracted with its polarization)
    st_ = default_stack()
    d = np.array([0.3, 0.2, -np.sqrt(1 - 0.13)])
    if not down:
        d[2] = -d[2]
    z = -100e-9
    g = GreensTensor(st_)(d, z, OMEGA_S)
    kpar, phi, side, nd = direction_params(st_, d, WL)
    s, pu, pd = (v[0].real for v in basis_vectors(nd, K0, np.atleast_1d(kpar), np.atleast_1d(phi)))
    e_det = pd if side == "bottom" else pu
    gr = np.zeros((3, 3), complex)
    for e in (s, e_det):
        field = plane_wave_field(st_, kpar, phi + np.pi, WL, e, [z], side=side)[0]
        gr += np.outer(e, field)
    assert np.max(abs(g - gr)) < 1e-9 * np.max(abs(g))


def test_green_rejects_grazing_direction():
    with pytest.raises(StackError):
        farfield_green(default_stack(), np.array([1.0, 0, 0]), -1e-7, OMEGA_S)


def _normal_detectors(omega):
    d = (0.0, 0.0, -1.0)
    return [DetectionVector(d, e, omega) for e in ((1, 0, 0), (0, 1, 0))]


def test_thin_film_amplitudes_give_phi_minus():
    st_ = default_stack(1e-9)
    pump = PumpField(phi_p=np.pi / 2)
    h, v = _normal_detectors(pump.omega / 2)
    chi = ChiTensor()
    amp = {(a, b): pair_amplitude(st_, pump, da, db, chi)
           for a, da in (("H", h), ("V", v)) for b, db in (("H", h), ("V", v))}
    scale = abs(amp["H", "H"])
    assert scale > 0
    assert abs(abs(amp["H", "H"]) - abs(amp["V", "V"])) < 1e-9 * scale
    assert abs(amp["H", "V"]) < 1e-12 * scale and abs(amp["V", "H"]) < 1e-12 * scale
    assert abs(amp["H", "H"] + amp["V", "V"]) < 1e-9 * scale


def test_amplitude_linear_in_chi():
    st_ = default_stack()
    pump = PumpField(phi_p=1.0)
    h, v = _normal_detectors(pump.omega / 2)
    a = pair_amplitude(st_, pump, h, h, ChiTensor(d22=1.0))
    b = pair_amplitude(st_, pump, h, h, ChiTensor(d22=-1.0))
    assert abs(a + b) < 1e-12 * abs(a)
    assert pair_amplitude(st_, pump, h, v, ChiTensor(d22=0.0, d31=0.0)) == 0


def test_amplitude_frequency_and_momentum_checks():
    st_ = default_stack()
    pump = PumpField()
    h, _ = _normal_detectors(pump.omega / 2)
    off = DetectionVector((0, 0, -1.0), (1, 0, 0), pump.omega / 3)
    with pytest.raises(ValueError):
        pair_amplitude(st_, pump, h, off, ChiTensor())
    tilted = DetectionVector((0.6, 0.0, -0.8), (0.8, 0.0, 0.6), pump.omega / 2)
    assert pair_amplitude(st_, pump, tilted, h, ChiTensor()) == 0


def test_detection_vector_validation():
    with pytest.raises(ValueError):
        DetectionVector((0, 0, -1.0), (0.6, 0, 0.8), 1e15)


def test_collimated_hv_normal():
    hh, vv = collimated_hv([0, 0, -1.0])
    assert np.allclose(hh, [1, 0, 0]) and np.allclose(vv, [0, 1, 0])
    d = np.array([0.3, -0.1, -np.sqrt(0.9)])
    for e in collimated_hv(d):
        assert abs(e @ d) < 1e-14


def test_source_density_matrix_bell_states():
    st_ = default_stack()
    for deg, target in ((90, PHI_MINUS), (0, PSI_PLUS)):
        res = source_density_matrix(st_, PumpField(np.deg2rad(deg)), 0.4)
        assert res.rho.is_physical()
        assert fidelity(res.rho, target) >= 0.98
        assert res.meta["collection_na"] == 0.4


@pytest.mark.parametrize("deg", [0, 30, 45, 90])
def test_free_space_paraxial_limit(deg):
    hs = default_stack().homogeneous_copy(1.45)
    res = source_density_matrix(hs, PumpField(np.deg2rad(deg)), 0.01, grid=GridSpec(n_kappa=4, n_phi=8))
    assert fidelity(res.rho, tmd_state(np.deg2rad(deg))) >= 0.999


def test_chi_scaling_invariance():
    st_ = default_stack()
    grid = GridSpec(n_kappa=4, n_phi=8)
    a = source_density_matrix(st_, PumpField(0.5), 0.4, chi=ChiTensor(1.0, 0.2), grid=grid).rho.entries
    b = source_density_matrix(st_, PumpField(0.5), 0.4, chi=ChiTensor(7.5, 1.5), grid=grid).rho.entries
    assert np.max(abs(a - b)) < 1e-12


def test_concurrence_stays_high_across_pump_angles():
    st_ = default_stack()
    for deg in range(0, 180, 15):
        rho = source_density_matrix(st_, PumpField(np.deg2rad(deg)), 0.4).rho
        assert concurrence(rho) >= 0.95


def test_band_mode_and_focused_pump():
    st_ = default_stack()
    band = source_density_matrix(st_, PumpField(np.pi / 4), 0.4, grid=GridSpec(n_kappa=6, n_phi=8, spectral="band"))
    assert band.meta["grid"]["n_freq"] == 5
    assert fidelity(band.rho, tmd_state(np.pi / 4)) >= 0.98
    foc = source_density_matrix(st_, PumpField(np.pi / 2, model="focused-gaussian"), 0.4,
                                grid=GridSpec(n_kappa=6, n_phi=8))
    assert fidelity(foc.rho, PHI_MINUS) >= 0.98


def test_source_density_matrix_errors():
    st_ = default_stack()
    with pytest.raises(ValueError):
        source_density_matrix(st_, PumpField(), 1.2)
    with pytest.raises(StackError):
        source_density_matrix(st_, PumpField(), 0.4, band=(100e-9, 5000e-9), grid=GridSpec(spectral="band"))
    with pytest.raises(ValueError):
        source_density_matrix(st_, PumpField(), 0.4, chi=ChiTensor(0.0, 0.0))
    with pytest.raises(QuadratureError) as info:
        source_density_matrix(st_, PumpField(), 0.4, grid=GridSpec(z_start=2, z_max=4, z_tol=1e-15))
    assert info.value.history
