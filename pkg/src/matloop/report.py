"""Render campaign diagnostics as figure files next to the CSV exports."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .campaign import Campaign
from .pareto import pareto_front


def _save(fig, outdir: str, name: str) -> str:
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def hv_figure(camp: Campaign, outdir: str) -> str:
    d = camp.diagnostics()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(d["iteration"], d["hv"], "o-", ms=3)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("hypervolume")
    ax2.bar(d["iteration"], d["delta_hv"], width=0.8)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("ΔHV")
    fig.suptitle("Hypervolume evolution")
    return _save(fig, outdir, "hypervolume.png")


def acquisition_figure(camp: Campaign, outdir: str) -> str:
    d = camp.diagnostics()
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(d["iteration"], d["acq_raw"], "o-", ms=3, label="raw")
    weighted = d.get("acq_weighted")
    if weighted and any(w is not None for w in weighted):
        ax.plot(d["iteration"], [np.nan if w is None else w for w in weighted],
                "s--", ms=3, label="cost-weighted")
    ax.set_xlabel("iteration")
    ax.set_ylabel("best acquisition value")
    ax.set_yscale("symlog")
    ax.legend()
    return _save(fig, outdir, "acquisition.png")


def pareto_figure(camp: Campaign, outdir: str) -> str:
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    if camp.m == 2 and camp.Y_obs:
        Y = np.asarray(camp.Y_obs, dtype=float)
        front = pareto_front(camp.internal_Y())
        order = np.arange(len(Y))
        ax.plot(Y[:, 0], Y[:, 1], "-", color="0.8", lw=0.8, zorder=1)
        sc = ax.scatter(Y[:, 0], Y[:, 1], c=order, cmap="viridis", s=18, zorder=2)
        fig.colorbar(sc, ax=ax, label="evaluation order")
        fy = Y[list(front.indices)]
        ax.scatter(fy[:, 0], fy[:, 1], facecolors="none", edgecolors="crimson",
                   s=80, lw=1.5, zorder=3, label="Pareto front")
        ax.legend(loc="best")
        names = camp.config.objective_names()
        ax.set_xlabel(names[0])
        ax.set_ylabel(names[1])
        ax.set_title("Objective space")
    else:
        d = camp.diagnostics()
        ax.plot(d["iteration"], d["best_value"], "o-", ms=3)
        ax.set_xlabel("iteration")
        ax.set_ylabel("best observed value")
        ax.set_title("Convergence")
    return _save(fig, outdir, "pareto.png")


def fidelity_figure(camp: Campaign, outdir: str) -> str | None:
    if camp.config.fidelity is None:
        return None
    d = camp.diagnostics()
    hist = d.get("fidelity_histogram", {})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.bar(range(len(hist)), list(hist.values()))
    ax1.set_xticks(range(len(hist)), list(hist.keys()))
    ax1.set_xlabel("fidelity level")
    ax1.set_ylabel("evaluations")
    per_iter = d.get("fidelity_per_iteration", [])
    for i, fids in enumerate(per_iter, start=1):
        for f in fids:
            ax2.plot([i], [f], "ko", ms=3)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("chosen fidelity")
    ax2.set_ylim(-0.05, 1.05)
    fig.suptitle("Fidelity usage")
    return _save(fig, outdir, "fidelity.png")


def convergence_figure(camp: Campaign, outdir: str) -> str | None:
    if camp.m != 1:
        return None
    d = camp.diagnostics()
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(d["iteration"], d["best_value"], "o-", ms=3)
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("best so far")
    if "distance_to_optimum" in d:
        axes[1].semilogy(d["iteration"],
                         np.maximum(d["distance_to_optimum"], 1e-12), "o-", ms=3)
        axes[1].set_xlabel("iteration")
        axes[1].set_ylabel("distance to optimum")
    steps = [s if s is not None else np.nan for s in d["step_size"]]
    axes[2].plot(d["iteration"], steps, "o-", ms=3)
    axes[2].set_xlabel("iteration")
    axes[2].set_ylabel("step size")
    fig.suptitle("Single-objective diagnostics")
    return _save(fig, outdir, "convergence.png")


def render_all(camp: Campaign, outdir: str) -> list[str]:
    """Write the full figure bundle; returns the created paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = [hv_figure(camp, outdir), acquisition_figure(camp, outdir),
             pareto_figure(camp, outdir)]
    for fn in (fidelity_figure, convergence_figure):
        p = fn(camp, outdir)
        if p:
            paths.append(p)
    return paths
