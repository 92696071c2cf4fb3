import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tmdpairs.states import (
    MAXIMALLY_MIXED, PHI_MINUS, DensityMatrix, concurrence, density_from_ket, fidelity, tmd_state,
)
from tmdpairs.tomography import (
    CANONICAL_PAIRS, MLEConvergenceError, MeasurementRecord, ProjectionSetting, RankDeficientError,
    TomographyCSVError, TomographySet, canonical_settings, format_uncertainty, jones_projector,
    linear_reconstruct, mle_reconstruct, monte_carlo_uncertainty, params_from_rho, poisson_nll,
    predicted_counts, read_csv, rho_from_params, setting_for, simulate, write_rows,
)

STATES = {
    "H": [1, 0], "V": [0, 1],
    "D": np.array([1, 1]) / np.sqrt(2), "A": np.array([1, -1]) / np.sqrt(2),
    "R": np.array([1, -1j]) / np.sqrt(2), "L": np.array([1, 1j]) / np.sqrt(2),
}
WERNER = DensityMatrix(0.8 * density_from_ket(PHI_MINUS).entries + 0.05 * np.eye(4))


def same_ray(a, b):
    return abs(abs(np.vdot(a, b)) - 1) < 1e-12


def qwp_oracle(t):
    # fast axis at t: R(-t) diag(1, i) R(t), written out
    c, s = np.cos(t), np.sin(t)
    return np.array([[c * c + 1j * s * s, (1 - 1j) * c * s], [(1 - 1j) * c * s, s * s + 1j * c * c]])


def hwp_oracle(t):
    c, s = np.cos(2 * t), np.sin(2 * t)
    return np.array([[c, s], [s, -c]])


def test_projector_examples():
    d = np.deg2rad
    assert same_ray(jones_projector(0, 0), STATES["H"])
    assert same_ray(jones_projector(d(45), d(22.5)), STATES["D"])
    assert same_ray(jones_projector(0, d(22.5)), STATES["R"])
    assert same_ray(jones_projector(d(45), 0), STATES["L"])


@given(st.floats(-7, 7), st.floats(-7, 7))
def test_projector_matches_jones_oracle(q, h):
    v = qwp_oracle(q).conj().T @ hwp_oracle(h).conj().T @ np.array([1, 0])
    p = jones_projector(q, h)
    assert abs(np.linalg.norm(p) - 1) < 1e-12
    assert same_ray(p, v)
    for q2, h2 in ((q + np.pi, h), (q, h + np.pi / 2)):
        p2 = jones_projector(q2, h2)
        assert np.allclose(np.outer(p, p.conj()), np.outer(p2, p2.conj()), atol=1e-12)


def test_canonical_labels_select_named_states():
    assert len(CANONICAL_PAIRS) == 16 and len(set(CANONICAL_PAIRS)) == 16
    for pair in CANONICAL_PAIRS:
        v = setting_for(pair).state()
        assert same_ray(v, np.kron(STATES[pair[0]], STATES[pair[1]]))


def test_predicted_counts_examples():
    rho = density_from_ket(PHI_MINUS)
    assert predicted_counts(rho, setting_for("HH"), 1000) == pytest.approx(500)
    assert predicted_counts(rho, setting_for("HV"), 1000) == pytest.approx(0, abs=1e-12)
    assert predicted_counts(rho, setting_for("DD"), 1000) == pytest.approx(0, abs=1e-12)


def test_record_validation():
    with pytest.raises(ValueError):
        MeasurementRecord(setting_for("HH"), -1)
    with pytest.raises(ValueError):
        MeasurementRecord(setting_for("HH"), 5, duration=0)


def test_linear_reconstruct_round_trip():
    for rho in (density_from_ket(PHI_MINUS), MAXIMALLY_MIXED, WERNER):
        got = linear_reconstruct(simulate(rho, 1e6, noiseless=True))
        assert np.allclose(got, rho.entries, atol=1e-10)


def test_linear_reconstruct_exact_for_exact_counts():
    rho = density_from_ket(PHI_MINUS)
    settings = canonical_settings()
    # integer counts at a scale where the expected values are integral
    counts = [predicted_counts(rho, s, 4) for s in settings]
    assert np.allclose(counts, np.rint(counts), atol=1e-12)
    data = TomographySet(MeasurementRecord(s, int(round(c))) for s, c in zip(settings, counts))
    assert np.max(abs(linear_reconstruct(data) - rho.entries)) < 1e-10


def test_missing_record_is_rank_deficient():
    data = simulate(density_from_ket(PHI_MINUS), 1e4, rng=1)
    with pytest.raises(RankDeficientError):
        TomographySet(data.records[1:])
    dup = list(data.records[1:]) + [data.records[2]]
    with pytest.raises(RankDeficientError) as info:
        TomographySet(dup)
    assert info.value.deficient


def test_overcomplete_set_accepted():
    pairs = [a + b for a in "HVDARL" for b in "HVDARL"]
    settings = [setting_for(p) for p in pairs]
    data = simulate(WERNER, 1e6, settings=settings, noiseless=True)
    assert len(data) == 36
    assert fidelity(mle_reconstruct(data).rho, PHI_MINUS) == pytest.approx(fidelity(WERNER, PHI_MINUS), abs=1e-4)


@given(st.integers(0, 2**31))
def test_cholesky_parameter_round_trip(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    assert np.max(abs(rho_from_params(params_from_rho(rho, eps=0)) - rho)) < 1e-10


def test_mle_noiseless_phi_minus():
    data = simulate(density_from_ket(PHI_MINUS), 1e6, noiseless=True)
    res = mle_reconstruct(data)
    assert fidelity(res.rho, PHI_MINUS) >= 0.9999
    assert res.rho.is_physical()
    assert np.max(abs(res.rho.entries - linear_reconstruct(data))) < 1e-6


def test_mle_likelihood_not_worse_than_linear_and_monotone():
    for seed in range(10):
        data = simulate(density_from_ket(tmd_state(np.pi / 4)), 300, rng=seed)
        res = mle_reconstruct(data)
        assert res.likelihood <= res.linear_likelihood + 1e-9
        assert res.likelihood == pytest.approx(poisson_nll(res.rho.entries, data))
        assert all(b <= a + 1e-9 * abs(a) for a, b in zip(res.trace, res.trace[1:]))
        assert res.rho.is_physical()
        ev = np.linalg.eigvalsh(res.rho.entries)
        assert ev.min() > -1e-12


def test_mle_deterministic():
    data = simulate(WERNER, 1e3, rng=5)
    a, b = mle_reconstruct(data, seed=3), mle_reconstruct(data, seed=3)
    assert np.array_equal(a.rho.entries, b.rho.entries)


def test_mle_non_convergence_reports_best():
    data = simulate(WERNER, 1e3, rng=2)
    with pytest.raises(MLEConvergenceError) as info:
        mle_reconstruct(data, max_iter=1, tol=0)
    assert info.value.best.is_physical() and len(info.value.trace) >= 1


def test_mle_maximally_mixed_within_statistics():
    settings = canonical_settings()
    reps = np.array([mle_reconstruct(simulate(MAXIMALLY_MIXED, 1e4, settings, rng=s)).rho.entries
                     for s in range(40)])
    sre, sim = reps.real.std(axis=0), reps.imag.std(axis=0)
    one = mle_reconstruct(simulate(MAXIMALLY_MIXED, 1e4, settings, rng=1000)).rho.entries
    assert np.all(abs(one.real - 0.25 * np.eye(4)) <= 3 * sre + 1e-9)
    assert np.all(abs(one.imag) <= 3 * sim + 1e-9)


def test_estimator_consistency():
    truth = density_from_ket(tmd_state(np.pi / 4))
    target = tmd_state(np.pi / 4)
    means = []
    for n in (1e2, 1e3, 1e4):
        f = [fidelity(mle_reconstruct(simulate(truth, n, rng=s)).rho, target) for s in range(100)]
        means.append(np.mean(f))
    assert means[0] < means[1] < means[2]


def test_monte_carlo_vanishing_noise():
    data = simulate(WERNER, 1e10, noiseless=True)
    mc = monte_carlo_uncertainty(data, 10, seed=0)
    assert mc.std < 1e-3
    assert mc.mean == pytest.approx(0.7, abs=1e-3)


def test_monte_carlo_sqrt_n_scaling():
    # interior (full-rank) state: away from the physical boundary the spread is Gaussian
    s = [monte_carlo_uncertainty(simulate(WERNER, n, noiseless=True), 100, seed=1).std for n in (1e4, 4e4)]
    assert 2 / 1.5 <= s[0] / s[1] <= 2 * 1.5


def test_monte_carlo_independent_of_workers():
    data = simulate(WERNER, 1e3, rng=3)
    a = monte_carlo_uncertainty(data, 12, seed=9, workers=1)
    b = monte_carlo_uncertainty(data, 12, seed=9, workers=3)
    assert np.array_equal(a.values, b.values)
    c = monte_carlo_uncertainty(data, 12, "fidelity", target=PHI_MINUS, seed=9)
    assert 0 < c.mean < 1
    with pytest.raises(ValueError):
        monte_carlo_uncertainty(data, 1)


def test_uncertainty_format():
    assert format_uncertainty(0.96712, 0.0021) == "0.967±0.002"
    assert format_uncertainty(5.4965, 0.41) == "5.5±0.4"
    assert format_uncertainty(0.5, 0.013) == "0.500±0.013"


def test_csv_round_trip(tmp_path):
    import csv

    data = simulate(WERNER, 1e4, rng=4, duration=2.0)
    p = tmp_path / "t.csv"
    with p.open("w", newline="") as fh:
        csv.writer(fh).writerows(write_rows(data))
    back = read_csv(p)
    assert np.array_equal(back.counts, data.counts)
    assert np.allclose(back.durations, 2.0)
    assert np.allclose(back.projectors(), data.projectors(), atol=1e-9)


def test_csv_missing_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("qwp_s_deg,hwp_s_deg,qwp_i_deg,counts,duration_s\n0,0,0,5,1\n")
    with pytest.raises(TomographyCSVError, match="hwp_i_deg"):
        read_csv(p)


def test_setting_degrees_round_trip():
    s = ProjectionSetting.from_degrees(45, 22.5, 0, 45)
    assert s.degrees() == pytest.approx((45, 22.5, 0, 45))
    assert concurrence(density_from_ket(PHI_MINUS)) == pytest.approx(1)
