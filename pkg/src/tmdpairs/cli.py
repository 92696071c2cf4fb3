"""Command-line entry point: ``tmdpairs <command> [options]``.

Every command resolves its knobs from built-in defaults, an optional TOML or
JSON config file (top-level keys, then a table named after the command) and
``-s key=value`` overrides, writes its artifacts atomically into the output
directory and records a ``<command>.manifest.json`` next to them.
``tmdpairs report DIR`` aggregates the manifests and renders figures.

Exit codes: 0 success, 2 usage error, 3 invalid input or configuration,
4 numerical failure (quadrature or optimizer did not converge).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .io import dumps, read_columns, write_csv, write_json

EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_NUMERIC = 4
ENV_OUT = "TMDPAIRS_OUT"


class ConfigError(ValueError):
    pass


# --- configuration --------------------------------------------------------------

def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path.name}: {exc}") from None
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        return tomllib.loads(text.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path.name}: {exc}") from None


def parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _coerce(key, value, default):
    if default is None or value is None:
        return value
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError
                return value.lower() in ("true", "1")
            return bool(value)
        if isinstance(default, int):
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
            if not isinstance(value, (list, tuple)):
                raise ValueError
            if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
                return [float(v) for v in value]
            return list(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r}: cannot interpret {value!r} as {type(default).__name__}") from None


def resolve_config(command: str, defaults: dict, file_cfg: dict, overrides: list[tuple]) -> tuple[dict, list]:
    """Merge defaults < file top level < file [command] table < overrides."""
    cfg = dict(defaults)
    ignored = []
    for key, value in file_cfg.items():
        if isinstance(value, dict):
            continue
        if key in defaults:
            cfg[key] = _coerce(key, value, defaults[key])
        else:
            ignored.append(key)
    section = file_cfg.get(command, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config entry {command!r} must be a table")
    for key, value in list(section.items()) + list(overrides):
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r} for {command} (known: {', '.join(sorted(defaults))})")
        cfg[key] = _coerce(key, value, defaults[key])
    return cfg, sorted(ignored)


def _grid_ints(text: str, n: int, command: str) -> list[int]:
    try:
        vals = [int(v) for v in text.lower().split("x")]
    except ValueError:
        raise ConfigError(f"--grid {text!r} is not of the form N or NxM") from None
    if not 1 <= len(vals) <= n or min(vals) < 1:
        raise ConfigError(f"--grid for {command} takes 1 to {n} positive integers separated by 'x'")
    return vals


# --- commands -------------------------------------------------------------------

def _phi_grid(n):
    if n < 1:
        raise ConfigError("n_points must be positive")
    return np.arange(n) * 360.0 / n


def cmd_state_sweep(cfg, out, seed):
    from .states import PHI_MINUS, PSI_PLUS, concurrence, density_from_ket, fidelity, tmd_state

    rows = []
    for deg in _phi_grid(cfg["n_points"]):
        rho = density_from_ket(tmd_state(np.deg2rad(deg)))
        rows.append([deg, concurrence(rho), fidelity(rho, PHI_MINUS), fidelity(rho, PSI_PLUS)])
    write_csv(out / "state_sweep.csv", ["phi_p_deg", "concurrence", "fidelity_phi_minus", "fidelity_psi_plus"], rows)
    c = np.array([r[1] for r in rows])
    metrics = {"min_concurrence": float(c.min()), "max_concurrence": float(c.max()), "n_points": len(rows)}
    return ["state_sweep.csv"], metrics, [("state_sweep", "state_sweep.csv")]


def _analyzer(spec: str):
    from .chi2 import AnalyzerConfig, AnalyzerMode

    mode, _, angle = spec.partition(":")
    try:
        m = AnalyzerMode(mode)
    except ValueError:
        raise ConfigError(f"unknown analyzer mode {mode!r}") from None
    if m is AnalyzerMode.FIXED:
        if not angle:
            raise ConfigError("common-fixed analyzer needs an angle, e.g. common-fixed:55")
        return AnalyzerConfig(m, np.deg2rad(float(angle)))
    return AnalyzerConfig(m)


def cmd_rate_sweep(cfg, out, seed):
    from .chi2 import ChiTensor, rate_sweep, shg_intensity

    chi = ChiTensor(d22=cfg["d22"], theta_ac=np.deg2rad(cfg["theta_ac_deg"]))
    deg = _phi_grid(cfg["n_points"])
    rad = np.deg2rad(deg)
    rows, metrics = [], {}
    for spec in cfg["modes"]:
        an = _analyzer(spec)
        rates = rate_sweep(rad, an, chi)
        adeg = float(np.rad2deg(an.angle)) if an.mode.value == "common-fixed" else float("nan")
        rows += [[d, r, an.mode.value, adeg] for d, r in zip(deg, rates)]
        metrics[spec] = {"min_rate": float(rates.min()), "max_rate": float(rates.max())}
    write_csv(out / "rate_sweep.csv", ["phi_p_deg", "rate", "analyzer_mode", "analyzer_deg"], rows)
    shg = [[d, shg_intensity(r, chi)] for d, r in zip(deg, rad)]
    write_csv(out / "shg_sweep.csv", ["phi_deg", "shg_intensity"], shg)
    return ["rate_sweep.csv", "shg_sweep.csv"], metrics, [("rate_sweep", "rate_sweep.csv")]


def cmd_gf_density_matrix(cfg, out, seed):
    from .chi2 import ChiTensor
    from .greens.farfield import PumpField
    from .greens.pairs import GridSpec, source_density_matrix
    from .greens.stack import default_stack, load_stack_json
    from .states import (PHI_MINUS, PSI_PLUS, concurrence, density_to_json, fidelity, tmd_state)

    if cfg["stack"]:
        stack = load_stack_json(cfg["stack"])
    else:
        stack = default_stack(cfg["thickness_nm"] * 1e-9)
    phi = np.deg2rad(cfg["phi_p_deg"])
    pump = PumpField(phi_p=phi, wavelength=cfg["pump_wavelength_nm"] * 1e-9,
                     model=cfg["pump_model"], na=cfg["pump_na"])
    chi = ChiTensor(d22=cfg["d22"], d31=cfg["d31"], theta_ac=np.deg2rad(cfg["theta_ac_deg"]))
    grid = GridSpec(n_kappa=cfg["n_kappa"], n_phi=cfg["n_phi"], n_freq=cfg["n_freq"], spectral=cfg["spectral"])
    band = tuple(b * 1e-9 for b in cfg["band_nm"])
    if len(band) != 2:
        raise ConfigError("band_nm must have two entries")
    res = source_density_matrix(stack, pump, cfg["collection_na"], band=band, chi=chi, grid=grid)
    rho = res.rho
    report = {
        "fidelity_phi_minus": fidelity(rho, PHI_MINUS),
        "fidelity_psi_plus": fidelity(rho, PSI_PLUS),
        "fidelity_tmd_state": fidelity(rho, tmd_state(phi)),
        "concurrence": concurrence(rho),
        "purity": rho.purity(),
    }
    doc = density_to_json(rho)
    doc["meta"] = res.meta
    doc["report"] = report
    write_json(out / "density_matrix.json", doc)
    return ["density_matrix.json"], report, [("density_matrix", "density_matrix.json")]


def _tomography_state(cfg):
    from .states import (BELL_STATES, MAXIMALLY_MIXED, density_from_json, density_from_ket, tmd_state)

    if cfg["rho"]:
        path = Path(cfg["rho"])
        if not path.exists():
            raise ConfigError(f"state file not found: {path}")
        return density_from_json(json.loads(path.read_text()))
    name = cfg["state"].lower()
    if name == "tmd":
        return density_from_ket(tmd_state(np.deg2rad(cfg["phi_p_deg"])))
    if name == "mixed":
        return MAXIMALLY_MIXED
    if name in BELL_STATES:
        return density_from_ket(BELL_STATES[name])
    raise ConfigError(f"unknown state {cfg['state']!r} (tmd, mixed, {', '.join(BELL_STATES)})")


def cmd_tomography_simulate(cfg, out, seed):
    from .tomography import simulate, write_rows

    rho = _tomography_state(cfg)
    if cfg["n_per_setting"] <= 0 or cfg["duration_s"] <= 0:
        raise ConfigError("n_per_setting and duration_s must be positive")
    data = simulate(rho, cfg["n_per_setting"], rng=seed, noiseless=cfg["noiseless"], duration=cfg["duration_s"])
    rows = list(write_rows(data))
    write_csv(out / "tomography.csv", rows[0], rows[1:])
    return ["tomography.csv"], {"total_counts": int(data.counts.sum()), "n_settings": len(data.records)}, []


def cmd_tomography_reconstruct(cfg, out, seed):
    from .states import PHI_MINUS, PSI_PLUS, concurrence, density_to_json, fidelity
    from .tomography import mle_reconstruct, monte_carlo_uncertainty, read_csv

    if not cfg["input"]:
        raise ConfigError("tomography-reconstruct needs an input CSV (--input or input=...)")
    path = Path(cfg["input"])
    if not path.exists():
        raise ConfigError(f"input file not found: {path}")
    data = read_csv(path)
    opts = {"tol": cfg["tol"], "max_iter": cfg["max_iter"], "seed": seed}
    fit = mle_reconstruct(data, **opts)
    doc = density_to_json(fit.rho)
    c_hat = concurrence(fit.rho)
    conc = {"value": c_hat, "mean": c_hat, "std": None, "samples": 0, "excluded": 0}
    if cfg["mc_samples"] >= 2:
        mc = monte_carlo_uncertainty(data, cfg["mc_samples"], "concurrence", seed=seed,
                                     workers=cfg["workers"], mle_options=opts)
        conc.update(mean=mc.mean, std=mc.std, samples=cfg["mc_samples"], excluded=len(mc.excluded),
                    formatted=mc.format("C"))
    doc.update({
        "concurrence": conc,
        "fidelity_phi_minus": fidelity(fit.rho, PHI_MINUS),
        "fidelity_psi_plus": fidelity(fit.rho, PSI_PLUS),
        "likelihood": fit.likelihood,
        "linear_likelihood": fit.linear_likelihood,
        "n_iter": fit.n_iter,
    })
    write_json(out / "reconstruction.json", doc)
    metrics = {k: doc[k] for k in ("fidelity_phi_minus", "fidelity_psi_plus", "n_iter")}
    metrics["concurrence"] = conc["mean"]
    metrics["concurrence_std"] = conc["std"]
    return ["reconstruction.json"], metrics, [("density_matrix", "reconstruction.json")]


def _read_histogram(path, duration):
    from .experiment import CoincidenceHistogram

    d = read_columns(path, ["delay_ps", "counts"])
    delays = d["delay_ps"] * 1e-12
    if delays.size < 2:
        raise ConfigError(f"{Path(path).name}: histogram needs at least two bins")
    width = float(np.median(np.diff(delays)))
    if width <= 0:
        raise ConfigError(f"{Path(path).name}: delays must increase")
    return CoincidenceHistogram(width, delays, d["counts"].astype(int), duration)


def _write_histogram(path, h):
    write_csv(path, ["delay_ps", "counts"], [[t * 1e12, int(c)] for t, c in zip(h.delays, h.counts)])


def cmd_histogram(cfg, out, seed):
    from .experiment import car, expected_car, synthesize_histogram
    from .tomography import format_uncertainty

    sigma = cfg["jitter_ps"] * 1e-12
    window = (cfg["peak_window_ps"] if cfg["peak_window_ps"] is not None else 4 * cfg["jitter_ps"]) * 1e-12
    expected = None
    if cfg["input"]:
        h = _read_histogram(cfg["input"], cfg["duration_s"])
    else:
        h = synthesize_histogram(cfg["pair_rate"], cfg["singles_s"], cfg["singles_i"], sigma,
                                 cfg["bin_ps"] * 1e-12, cfg["duration_s"], seed=seed, n_bins=cfg["n_bins"])
        if cfg["singles_s"] > 0 and cfg["singles_i"] > 0:
            expected = expected_car(cfg["pair_rate"], cfg["singles_s"], cfg["singles_i"], sigma,
                                    cfg["bin_ps"] * 1e-12, window, cfg["n_bins"])
    _write_histogram(out / "histogram.csv", h)
    c = car(h, window)
    result = {
        "car": c.value,
        "car_std": c.std if math.isfinite(c.std) else None,
        "formatted": "CAR=" + format_uncertainty(c.value, c.std) if math.isfinite(c.std) else f"CAR>{c.value:.3g}",
        "peak_counts": c.peak_counts,
        "background_per_window": c.background_per_window,
        "net_counts": c.net_counts,
        "net_std": c.net_std,
        "pair_evidence": c.pair_evidence,
        "flags": c.flags,
        "peak_window_ps": window * 1e12,
        "expected_car": expected,
    }
    write_json(out / "car.json", result)
    metrics = {k: result[k] for k in ("car", "car_std", "net_counts", "pair_evidence")}
    return ["histogram.csv", "car.json"], metrics, [("histogram", "histogram.csv")]


def cmd_power_sweep(cfg, out, seed):
    from .experiment import power_sweep

    fit = power_sweep(cfg["powers_mW"], cfg["rate_per_mW"], cfg["duration_s"], seed=seed, noiseless=cfg["noiseless"])
    write_csv(out / "power_sweep.csv", ["power_mW", "rate"], [[p, r] for p, r in zip(cfg["powers_mW"], fit.rates)])
    metrics = {"slope": fit.slope, "intercept": fit.intercept, "exponent": fit.exponent, "r2": fit.r2}
    write_json(out / "power_fit.json", metrics)
    return ["power_sweep.csv", "power_fit.json"], metrics, [("power_sweep", "power_sweep.csv")]


def cmd_spectrum(cfg, out, seed):
    from .experiment import (SpectrometerConfig, dispersive_histogram, read_filter_csv,
                             spectrum_estimate, step_filter)

    sc = SpectrometerConfig(cfg["fiber_length_km"], cfg["dispersion_ps_nm_km"], cfg["reference_nm"],
                            tuple(cfg["band_nm"]), cfg["idler_length_km"])
    filt = read_filter_csv(cfg["filter"]) if cfg["filter"] else step_filter(cfg["cut_on_nm"])
    arts = []
    if cfg["input"]:
        h = _read_histogram(cfg["input"], 1.0)
    else:
        h = dispersive_histogram(lambda lam: 1.0, filt, sc, cfg["pairs"], bin_width=cfg["bin_ps"] * 1e-12,
                                 n_bins=cfg["n_bins"], seed=seed, layout=cfg["layout"])
        _write_histogram(out / "dispersive_histogram.csv", h)
        arts.append("dispersive_histogram.csv")
    sp = spectrum_estimate(h, sc, filt, cfg["layout"], cfg["min_transmission"])
    rows = [[l, c, s, int(v)] for l, c, s, v in zip(sp.wavelength_nm, sp.counts_rel, sp.std, sp.valid)]
    write_csv(out / "spectrum.csv", ["lambda_nm", "counts_rel", "std", "valid"], rows)
    arts.insert(0, "spectrum.csv")
    metrics = {"valid_band_nm": list(sp.truncated_band) if sp.truncated_band else None,
               "half_max_fraction": sp.half_max_fraction(), "n_valid": int(sp.valid.sum())}
    return arts, metrics, [("spectrum", "spectrum.csv")]


def cmd_efficiency(cfg, out, seed):
    from .experiment import DetectionBudget, total_efficiency

    b = DetectionBudget(cfg["t_opt"], cfg["eta_coupl"], cfg["eta_bs"], cfg["eta_detec"], cfg["eta_lp"])
    eta = total_efficiency(b)
    doc = {"eta_tot": eta, "percent": 100 * eta, "factors": {k: cfg[k] for k in
                                                            ("t_opt", "eta_coupl", "eta_bs", "eta_detec", "eta_lp")}}
    write_json(out / "efficiency.json", doc)
    return ["efficiency.json"], {"eta_tot": eta}, []


COMMANDS = {
    "state-sweep": (cmd_state_sweep, {"n_points": 360}, ("n_points",),
                    "concurrence and Bell fidelities of the source state versus pump angle"),
    "rate-sweep": (cmd_rate_sweep, {
        "n_points": 360,
        "modes": ["none", "common-corotating-parallel", "common-corotating-perpendicular",
                  "common-fixed:110", "common-fixed:55", "common-fixed:50"],
        "d22": 1.0, "theta_ac_deg": 90.0,
    }, ("n_points",), "polarization-resolved pair rates and the SHG pattern"),
    "gf-density-matrix": (cmd_gf_density_matrix, {
        "stack": "", "thickness_nm": 285.0, "collection_na": 0.4, "phi_p_deg": 90.0,
        "pump_model": "plane-wave", "pump_na": 0.4, "pump_wavelength_nm": 788.0,
        "band_nm": [1500.0, 1650.0], "spectral": "degenerate",
        "n_kappa": 12, "n_phi": 16, "n_freq": 5, "d22": 1.0, "d31": 0.0, "theta_ac_deg": 90.0,
    }, ("n_kappa", "n_phi", "n_freq"), "Green's-function density matrix of the collected pairs"),
    "tomography-simulate": (cmd_tomography_simulate, {
        "state": "tmd", "phi_p_deg": 90.0, "rho": "", "n_per_setting": 10000.0,
        "noiseless": False, "duration_s": 1.0,
    }, (), "simulated 16-setting tomography counts"),
    "tomography-reconstruct": (cmd_tomography_reconstruct, {
        "input": "", "mc_samples": 100, "workers": 1, "tol": 1e-10, "max_iter": 10000,
    }, ("mc_samples",), "maximum-likelihood reconstruction with Monte Carlo errors"),
    "histogram": (cmd_histogram, {
        "input": "", "pair_rate": 0.124, "singles_s": 15500.0, "singles_i": 15500.0,
        "jitter_ps": 26.93, "bin_ps": 10.0, "duration_s": 12600.0, "n_bins": 401, "peak_window_ps": None,
    }, ("n_bins",), "coincidence histogram and CAR"),
    "power-sweep": (cmd_power_sweep, {
        "powers_mW": [1.0, 2.0, 3.0, 4.0, 5.6], "rate_per_mW": 1000.0, "duration_s": 1.0, "noiseless": False,
    }, (), "coincidence rate versus pump power"),
    "spectrum": (cmd_spectrum, {
        "input": "", "filter": "", "cut_on_nm": 1500.0, "fiber_length_km": 1.0, "idler_length_km": None,
        "dispersion_ps_nm_km": 17.0, "reference_nm": 1576.0, "band_nm": [1100.0, 2300.0],
        "layout": "shared-spool", "pairs": 1e6, "bin_ps": 20.0, "n_bins": 801, "min_transmission": 0.05,
    }, ("n_bins",), "fiber-spectroscopy spectrum reconstruction"),
    "efficiency": (cmd_efficiency, {
        "t_opt": 0.78, "eta_coupl": 0.35, "eta_bs": 0.45, "eta_detec": 0.6, "eta_lp": 0.5,
    }, (), "total pair detection efficiency"),
}


# --- report ---------------------------------------------------------------------

def render_figure(kind, src: Path, dest: Path):
    from . import plotting

    if kind == "density_matrix":
        from .states import density_from_json

        rho = density_from_json(json.loads(src.read_text()), validate=False)
        return plotting.plot_density_matrix(rho.entries, dest)
    fn = {
        "state_sweep": plotting.plot_state_sweep,
        "rate_sweep": plotting.plot_rate_sweep,
        "histogram": plotting.plot_histogram,
        "spectrum": plotting.plot_spectrum,
        "power_sweep": plotting.plot_power_sweep,
    }[kind]
    return fn(src, dest)


def run_report(bundle: Path, plots: bool) -> dict:
    if not bundle.is_dir():
        raise ConfigError(f"report directory not found: {bundle}")
    manifests = sorted(bundle.glob("*.manifest.json"))
    if not manifests:
        raise ConfigError(f"no run manifests in {bundle}")
    runs, figures = [], []
    for path in manifests:
        try:
            m = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path.name}: {exc}") from None
        runs.append({k: m.get(k) for k in ("command", "version", "seed", "config", "artifacts", "metrics")})
        if plots:
            for kind, src in m.get("figures", []):
                dest = bundle / (Path(src).stem + ".png")
                render_figure(kind, bundle / src, dest)
                figures.append(dest.name)
    summary = {"n_runs": len(runs), "runs": runs, "figures": figures}
    write_json(bundle / "report.json", summary)
    return summary


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tmdpairs", description="TMD entangled photon-pair source toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./tmdpairs-out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--grid", help="grid resolution, N or NxM[xK] depending on the command")
    common.add_argument("--input", help="input file (same as -s input=PATH)")
    common.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, _, _, helptext) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=helptext)
    rep = sub.add_parser("report", help="aggregate run manifests and render figures")
    rep.add_argument("bundle", nargs="?", help="directory holding manifests (default: output directory)")
    rep.add_argument("--out", help=argparse.SUPPRESS)
    rep.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    return p


def _output_dir(arg) -> Path:
    return Path(arg or os.environ.get(ENV_OUT) or "tmdpairs-out")


def _fail(code, exc, command):
    err = {"error": {"type": type(exc).__name__, "message": str(exc), "command": command, "exit_code": code}}
    sys.stderr.write(dumps(err))
    return code


def _classify(exc) -> int | None:
    from .greens.pairs import QuadratureError
    from .tomography import MLEConvergenceError

    if isinstance(exc, (QuadratureError, MLEConvergenceError)):
        return EXIT_NUMERIC
    if isinstance(exc, (ValueError, FileNotFoundError, KeyError)):
        return EXIT_INVALID
    return None


def run(command: str, args) -> int:
    if command == "report":
        bundle = Path(args.bundle) if args.bundle else _output_dir(args.out)
        summary = run_report(bundle, plots=not args.no_plots)
        print(f"report: {summary['n_runs']} run(s) -> {bundle / 'report.json'}")
        return 0
    fn, defaults, grid_keys, _ = COMMANDS[command]
    file_cfg = load_config_file(args.config) if args.config else {}
    overrides = [parse_override(s) for s in args.set]
    if args.input:
        overrides.append(("input", args.input))
    if args.grid:
        if not grid_keys:
            raise ConfigError(f"{command} has no grid")
        overrides += list(zip(grid_keys, _grid_ints(args.grid, len(grid_keys), command)))
    cfg, ignored = resolve_config(command, defaults, file_cfg, overrides)
    out = _output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts, metrics, figures = fn(cfg, out, args.seed)
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": args.seed,
        "config": cfg,
        "ignored_config_keys": ignored,
        "artifacts": artifacts,
        "metrics": metrics,
        "figures": [list(f) for f in figures],
    }
    write_json(out / f"{command}.manifest.json", manifest)
    print(f"{command}: wrote {', '.join(artifacts)} to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return run(args.command, args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        code = _classify(exc)
        if code is None:
            raise
        return _fail(code, exc, args.command)


if __name__ == "__main__":
    sys.exit(main())
