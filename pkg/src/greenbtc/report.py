"""Figure rendering for simulation and analysis outputs.

Every figure is written as a PNG with render-order and metadata pinned
so a rerun with the same inputs produces byte-identical files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def interval_timeline(
    heights: list[int],
    intervals: list[float],
    levels: list[int],
    target_interval_s: float,
    out_path: str,
) -> None:
    """Block interval per height with the retarget target line."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(heights, intervals, lw=0.8, color="#2a7f3f", label="interval")
    ax.axhline(target_interval_s, color="#888888", ls="--", lw=1, label="target")
    changes = [h for h, (a, b) in zip(heights[1:], zip(levels, levels[1:])) if a != b]
    for h in changes:
        ax.axvline(h, color="#c06030", ls=":", lw=1)
    if changes:
        ax.plot([], [], color="#c06030", ls=":", lw=1, label="level change")
    ax.set_xlabel("height")
    ax.set_ylabel("block interval (s)")
    ax.set_title("Block intervals")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE)
    plt.close(fig)


def ece_curve(
    pps: list[float], eces: list[float], ci_halves: list[float], out_path: str
) -> None:
    """Measured energy efficiency against the 1 - pp line."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    grid = [i / 100 for i in range(1, 101)]
    ax.plot(grid, [1 - x for x in grid], color="#888888", ls="--", lw=1, label="1 - pp")
    ax.errorbar(
        pps, eces, yerr=ci_halves, fmt="o", color="#2a7f3f", capsize=3, label="measured"
    )
    ax.set_xlabel("pass probability")
    ax.set_ylabel("energy consumption efficiency")
    ax.set_title("Energy efficiency vs election probability")
    ax.set_xlim(0, 1.05)
    ax.set_ylim(-0.05, 1.0)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE)
    plt.close(fig)


def attack_curves(
    fractions: list[float],
    rates: list[float],
    ci_lows: list[float],
    ci_highs: list[float],
    analytic: list[float],
    confirmations: int,
    out_path: str,
) -> None:
    """Empirical double-spend success vs adversary share, with theory."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    yerr = [
        [r - lo for r, lo in zip(rates, ci_lows)],
        [hi - r for r, hi in zip(rates, ci_highs)],
    ]
    ax.errorbar(
        fractions, rates, yerr=yerr, fmt="o", color="#2a7f3f", capsize=3, label="simulated"
    )
    ax.plot(fractions, analytic, color="#c06030", lw=1.2, label="analytic")
    ax.set_xlabel("adversary share")
    ax.set_ylabel(f"success rate at z = {confirmations}")
    ax.set_title("Double-spend success probability")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE)
    plt.close(fig)


def profit_curve(
    zs: list[int], profits: list[float], required_z: int | str, out_path: str
) -> None:
    """Expected attack profit by confirmation depth."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(zs, profits, marker="o", ms=3, color="#2a7f3f", label="expected profit")
    ax.axhline(0, color="#888888", ls="--", lw=1)
    if isinstance(required_z, int):
        ax.axvline(required_z, color="#c06030", ls=":", lw=1, label=f"required z = {required_z}")
    ax.set_xlabel("confirmations")
    ax.set_ylabel("expected attack profit (coin units)")
    ax.set_title("Double-spend profitability")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE)
    plt.close(fig)


def calibration_curve(
    ns: list[int], p_hats: list[float], extrapolated: list[bool], out_path: str
) -> None:
    """Solve probability by code length, measured and extrapolated."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    meas = [(n, p) for n, p, e in zip(ns, p_hats, extrapolated) if not e]
    extr = [(n, p) for n, p, e in zip(ns, p_hats, extrapolated) if e]
    if meas:
        ax.semilogy([n for n, _ in meas], [p for _, p in meas], "o-", color="#2a7f3f",
                    label="measured")
    if extr:
        ax.semilogy([n for n, _ in extr], [p for _, p in extr], "s--", color="#c06030",
                    label="extrapolated")
    ax.set_xlabel("code length n")
    ax.set_ylabel("solve probability per attempt")
    ax.set_title("Difficulty calibration")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE)
    plt.close(fig)
