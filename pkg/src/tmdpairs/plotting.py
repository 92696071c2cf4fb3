"""Figures rendered from CLI artifacts. matplotlib is imported on first use."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import read_columns

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "xtick.top": True,
    "ytick.right": True,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(STYLE)
    return plt


def _save(fig, path):
    path = Path(path)
    # no timestamp in the metadata so reruns give the same file
    fig.savefig(path, metadata={"Software": None})
    _plt().close(fig)
    return path


def plot_state_sweep(csv_path, out):
    plt = _plt()
    d = read_columns(csv_path, ["phi_p_deg", "concurrence", "fidelity_phi_minus", "fidelity_psi_plus"])
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.plot(d["phi_p_deg"], d["concurrence"], "k-", label="C")
    ax.plot(d["phi_p_deg"], d["fidelity_phi_minus"], label=r"$F(\psi,\Phi^-)$")
    ax.plot(d["phi_p_deg"], d["fidelity_psi_plus"], label=r"$F(\psi,\Psi^+)$")
    ax.set_xlabel(r"$\varphi_p$ (deg)")
    ax.set_ylim(-0.02, 1.05)
    ax.legend(loc="lower right")
    return _save(fig, out)


def plot_rate_sweep(csv_path, out):
    plt = _plt()
    import csv

    rows = list(csv.DictReader(Path(csv_path).open(newline="")))
    fig = plt.figure(figsize=(4, 4))
    ax = fig.add_subplot(projection="polar")
    groups = {}
    for r in rows:
        key = r["analyzer_mode"] + ("" if r["analyzer_deg"] in ("", "nan") else f" {float(r['analyzer_deg']):g}")
        groups.setdefault(key, []).append((float(r["phi_p_deg"]), float(r["rate"])))
    for key, pts in groups.items():
        a = np.array(pts)
        ax.plot(np.deg2rad(a[:, 0]), a[:, 1], label=key)
    ax.legend(loc="upper right", bbox_to_anchor=(1.45, 1.1))
    return _save(fig, out)


def plot_density_matrix(rho, out, title=""):
    plt = _plt()
    from .states import BASIS

    rho = np.asarray(rho)
    fig, axes = plt.subplots(1, 2, figsize=(6, 2.8))
    for ax, part, name in zip(axes, (rho.real, rho.imag), ("Re", "Im")):
        im = ax.imshow(part, vmin=-0.5, vmax=0.5, cmap="RdBu_r")
        ax.set_xticks(range(4), BASIS)
        ax.set_yticks(range(4), BASIS)
        ax.set_title(f"{name} {title}".strip())
    fig.colorbar(im, ax=axes, shrink=0.8)
    return _save(fig, out)


def plot_histogram(csv_path, out):
    plt = _plt()
    d = read_columns(csv_path, ["delay_ps", "counts"])
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.step(d["delay_ps"], d["counts"], where="mid", color="k", lw=0.8)
    ax.set_xlabel("delay (ps)")
    ax.set_ylabel("coincidences")
    return _save(fig, out)


def plot_spectrum(csv_path, out):
    plt = _plt()
    d = read_columns(csv_path, ["lambda_nm", "counts_rel", "std"])
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.errorbar(d["lambda_nm"], d["counts_rel"], yerr=d["std"], fmt=".", ms=2, lw=0.5)
    ax.axvline(1576.0, ls="--", color="g", lw=0.8)
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel("relative counts")
    return _save(fig, out)


def plot_power_sweep(csv_path, out):
    plt = _plt()
    d = read_columns(csv_path, ["power_mW", "rate"])
    fig, ax = plt.subplots(figsize=(3.5, 3))
    ax.plot(d["power_mW"], d["rate"], "o")
    slope = np.polyfit(d["power_mW"], d["rate"], 1)
    x = np.linspace(0, d["power_mW"].max(), 50)
    ax.plot(x, np.polyval(slope, x), "k--", lw=0.8)
    ax.set_xlabel("pump power (mW)")
    ax.set_ylabel("coincidence rate (1/s)")
    return _save(fig, out)
