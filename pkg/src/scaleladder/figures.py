"""Matplotlib renderings of the delimited outputs, written next to them.

Every report path saves a PNG alongside its CSV/JSON so a run directory is
inspectable at a glance. Uses the Agg backend; nothing here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_psi_curves_figure",
    "save_schedules_figure",
    "save_trace_figure",
    "save_risk_report_figure",
    "save_sweep_figure",
]

_LEVEL_STYLES = ["-", ":", "--", "-.", (0, (8, 3)), (0, (3, 1, 1, 1)), (0, (5, 5))]


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_psi_curves_figure(rows, path) -> None:
    """Residual curves by level, one line style per level."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    levels = sorted({k for k, _, _ in rows})
    for i, k in enumerate(levels):
        xs = np.array([x for kk, x, _ in rows if kk == k])
        vals = np.array([v for kk, _, v in rows if kk == k])
        ax.plot(xs, vals, linestyle=_LEVEL_STYLES[i % len(_LEVEL_STYLES)], color="k", label=f"k={k}")
    ax.set_xlabel("x")
    ax.set_ylabel("rung residual")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def save_schedules_figure(rows, path) -> None:
    """Per-level scales, budgets, temperatures, and candidate-set sizes."""
    ks = [r["k"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].semilogy(ks, [r["gamma_k"] for r in rows], "o-", label="gamma_k")
    axes[0].semilogy(ks, [r["rho_k"] for r in rows], "s--", label="rho_k")
    axes[0].set_xlabel("level k")
    axes[0].legend(fontsize=8)
    axes[0].grid(alpha=0.3)
    axes[1].semilogy(ks, [r["lambda_bar_k"] for r in rows], "o-", label="lambda_bar_k")
    axes[1].semilogy(ks, [r["lambda_k"] for r in rows], "s--", label="lambda_k")
    axes[1].semilogy(ks, [r["W_k_size"] for r in rows], "^:", label="|W_k|")
    axes[1].set_xlabel("level k")
    axes[1].legend(fontsize=8)
    axes[1].grid(alpha=0.3)
    _finish(fig, path)


def save_trace_figure(trace_dicts, path) -> None:
    """Chosen vs minimum stage loss, with the temperature on a twin axis."""
    ks = [t["level"] for t in trace_dicts]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [t["chosen_loss"] for t in trace_dicts], "o-", label="chosen loss")
    ax.plot(ks, [t["min_loss"] for t in trace_dicts], "s--", label="min loss")
    ax.set_xlabel("level k")
    ax.set_ylabel("stage empirical loss")
    ax.grid(alpha=0.3)
    twin = ax.twinx()
    twin.semilogy(ks, [t["lambda"] for t in trace_dicts], "^:", color="gray", label="lambda_k")
    twin.set_ylabel("temperature")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = twin.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, fontsize=8)
    _finish(fig, path)


def save_risk_report_figure(report_dict, path) -> None:
    """Measured risks against every closed-form bound."""
    entries = [
        ("statistical", report_dict["statistical_risk"]["value"]),
        ("chained", report_dict["chained_risk"]["value"]),
    ]
    for name, value in report_dict["bounds"].items():
        if name == "powerlaw_factor":
            continue
        entries.append((name, value))
    names = [e[0] for e in entries]
    values = [e[1] for e in entries]
    fig, ax = plt.subplots(figsize=(7, 4))
    colors = ["tab:blue", "tab:blue"] + ["tab:orange"] * (len(values) - 2)
    ax.bar(range(len(values)), values, color=colors)
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    finite = [v for v in values if np.isfinite(v) and v > 0]
    if finite and max(finite) / max(min(finite), 1e-300) > 100:
        ax.set_yscale("log")
    ax.set_ylabel("value")
    ax.grid(alpha=0.3, axis="y")
    _finish(fig, path)


def save_sweep_figure(rows, path) -> None:
    """Bound magnitudes against the sample count, log-log."""
    ns = [r["n"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(ns, [r["chained_opt"] for r in rows], "o-", label="chained_opt")
    ax.loglog(ns, [r["erm"] for r in rows], "s--", label="erm")
    risk_vals = [r["risk_bound"] for r in rows]
    if all(np.isfinite(v) for v in risk_vals):
        ax.loglog(ns, risk_vals, "^:", label="risk_bound")
    ax.set_xlabel("n")
    ax.set_ylabel("bound")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    _finish(fig, path)
