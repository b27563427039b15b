#!/usr/bin/env python3
"""Plot the CSV artifacts written by `bimodal`.

usage: plot_artifacts.py DIR

Looks in DIR for *_trace.csv, quadrant_regions.csv and valve_mass_map.csv and
writes a PNG next to each one it finds.
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402


def plot_trace(path: Path) -> Path:
    df = pd.read_csv(path)
    fig, ax = plt.subplots(4, 1, sharex=True, figsize=(8, 9))
    ax[0].plot(df.t_s, df.x_o_m * 1e3, label="x_o")
    ax[0].plot(df.t_s, df.x1_m * 1e3, label="x1")
    ax[0].plot(df.t_s, df.x2_m * 1e3, label="x2")
    ax[0].set_ylabel("position [mm]")
    ax[0].legend(loc="best")
    ax[1].plot(df.t_s, df.F_out_N)
    ax[1].set_ylabel("output force [N]")
    ax[2].plot(df.t_s, np.degrees(df.phi_rad))
    ax[2].set_ylabel("valve angle [deg]")
    ax[3].plot(df.t_s, df.P_throttle_W)
    ax[3].set_ylabel("throttle power [W]")
    ax[3].set_xlabel("t [s]")
    modes = {m: i for i, m in enumerate(dict.fromkeys(df["mode"]))}
    for _, grp in df.groupby((df["mode"] != df["mode"].shift()).cumsum()):
        color = f"C{modes[grp['mode'].iloc[0]] % 10}"
        ax[0].axvspan(grp.t_s.iloc[0], grp.t_s.iloc[-1], alpha=0.08, color=color)
    fig.suptitle(path.stem)
    out = path.with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    return out


def plot_quadrants(path: Path) -> Path:
    df = pd.read_csv(path)
    fig, ax = plt.subplots(figsize=(7, 6))
    for region, grp in df.groupby("region", sort=False):
        ax.fill(grp.v_mps, grp.F_N, alpha=0.3, label=region)
        ax.plot(grp.v_mps, grp.F_N)
    ax.axhline(0, color="k", lw=0.5)
    ax.axvline(0, color="k", lw=0.5)
    ax.set_xlabel("output speed [m/s]")
    ax.set_ylabel("output force [N]")
    ax.set_ylim(-5000, 5000)
    ax.legend()
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=120)
    return out


def plot_mass_map(path: Path) -> Path:
    df = pd.read_csv(path)
    grid = df.pivot(index="dt_s", columns="d_m", values="mass_total_kg")
    fig, ax = plt.subplots(figsize=(7, 5))
    cs = ax.contour(grid.columns * 1e3, grid.index, grid.values * 1e3, levels=15)
    ax.clabel(cs, fmt="%.0f g")
    ax.set_xlabel("bore diameter [mm]")
    ax.set_ylabel("switching time [s]")
    out = path.with_suffix(".png")
    fig.savefig(out, dpi=120)
    return out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("dir", type=Path)
    args = ap.parse_args()
    jobs = [(p, plot_trace) for p in sorted(args.dir.glob("*_trace.csv"))]
    jobs += [(args.dir / "quadrant_regions.csv", plot_quadrants), (args.dir / "valve_mass_map.csv", plot_mass_map)]
    for path, fn in jobs:
        if path.exists():
            print(fn(path))


if __name__ == "__main__":
    main()
