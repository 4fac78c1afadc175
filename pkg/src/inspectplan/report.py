"""Figures and a profile table for a finished planning run."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .pipeline import load_trajectory  # noqa: E402
from .scene import build_occupancy, load_scene  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def profile_table(curve, samples: int = 500) -> dict:
    t = np.linspace(0.0, curve.total_duration, samples)
    vel = curve.derivative(t, 1)
    acc = curve.derivative(t, 2)
    jerk = curve.derivative(t, 3)
    speed = np.linalg.norm(vel, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(speed > 1e-9, np.linalg.norm(np.cross(vel, acc), axis=1) / speed ** 3, np.nan)
    return {"t": t, "speed": speed, "curvature": kappa, "jerk": np.linalg.norm(jerk, axis=1)}


def _occupancy_slice(ax, grid, axes, level):
    """Occupied cells of the grid layer containing ``level`` on the axis not in ``axes``."""
    drop = ({0, 1, 2} - set(axes)).pop()
    k = int(np.clip((level - grid.origin[drop]) // grid.cell_size, 0, grid.dims[drop] - 1))
    layer = np.take(grid.occupied, k, axis=drop)
    lo = grid.origin[list(axes)]
    hi = lo + grid.cell_size * np.array(grid.dims)[list(axes)]
    ax.imshow(layer.T, origin="lower", extent=(lo[0], hi[0], lo[1], hi[1]), cmap="Greys",
              alpha=0.35, interpolation="nearest", aspect="equal")


def _view(ax, pts, poly, waypoints, grid, axes, labels):
    if grid is not None:
        drop = ({0, 1, 2} - set(axes)).pop()
        _occupancy_slice(ax, grid, axes, float(pts[:, drop].mean()))
    a, b = axes
    ax.plot(poly[:, a], poly[:, b], "o--", color="0.5", lw=0.8, ms=3, label="polyline")
    ax.plot(pts[:, a], pts[:, b], "-", color="C0", lw=1.5, label="trajectory")
    if len(waypoints):
        ax.plot(waypoints[:, a], waypoints[:, b], "*", color="C3", ms=9, label="waypoints")
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    ax.legend(loc="best", frameon=False)


def render(run_dir, scene_path=None, out_dir=None, samples: int = 500) -> list:
    """Write top/side views, speed and curvature profiles and ``profile.csv``."""
    run = Path(run_dir)
    out = Path(out_dir) if out_dir else run
    out.mkdir(parents=True, exist_ok=True)
    doc, curve, _ = load_trajectory(run / "trajectory.json")
    grid = None
    if scene_path is not None:
        cfg = json.loads((run / "config.json").read_text()) if (run / "config.json").exists() else {}
        scene = load_scene(scene_path)
        frac = cfg.get("grid", {}).get("cell_fraction", 0.01)
        grid = build_occupancy(scene, frac * scene.bbox.diagonal)
    prof = profile_table(curve, samples)
    pts = curve.positions(prof["t"])
    joints = curve.joints
    way = np.array([joints[w["joint"]] for w in doc.get("waypoints", [])]).reshape(-1, 3)

    written = []
    with plt.rc_context(STYLE):
        for name, axes, labels in (("top_view.png", (0, 1), ("x [m]", "y [m]")),
                                   ("side_view.png", (0, 2), ("x [m]", "z [m]"))):
            fig, ax = plt.subplots(figsize=(5.0, 4.0))
            _view(ax, pts, joints, way, grid, axes, labels)
            fig.tight_layout()
            fig.savefig(out / name)
            plt.close(fig)
            written.append(out / name)

        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 4.0))
        ax1.plot(prof["t"], prof["speed"], color="C0")
        ax1.set_ylabel("speed [m/s]")
        ax2.plot(prof["t"], prof["curvature"], color="C1")
        ax2.set_ylabel("curvature [1/m]")
        ax2.set_xlabel("t [s]")
        for k in curve.knots[1:-1]:
            for ax in (ax1, ax2):
                ax.axvline(k, color="0.8", lw=0.6, zorder=0)
        fig.tight_layout()
        fig.savefig(out / "profiles.png")
        plt.close(fig)
        written.append(out / "profiles.png")

    with open(out / "profile.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "speed", "curvature", "jerk"])
        for row in zip(prof["t"], prof["speed"], prof["curvature"], prof["jerk"]):
            w.writerow([repr(float(v)) for v in row])
    written.append(out / "profile.csv")
    return written
