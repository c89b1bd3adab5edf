"""Renders a figure manifest's CSV series into one PNG per panel.

The data layer (``figures``) stays plot-free; this module only reads
the manifest plus its CSVs back and draws them with matplotlib's Agg
backend, so it works headless.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _load(path):
    # analytic-curve files open with a "# tag" line that genfromtxt would
    # otherwise mistake for the header row
    with open(path, encoding="utf-8") as fh:
        skip = 1 if fh.readline().startswith("#") else 0
    return np.genfromtxt(path, delimiter=",", names=True, skip_header=skip)


def _col(data, name):
    return np.atleast_1d(data[name])


def _draw_record(ax, series, data):
    step = _col(data, "step")
    ax.plot(step, _col(data, "r_re"), lw=0.8, label="readout")
    r_im = _col(data, "r_im")
    if np.any(r_im != 0.0):
        ax.plot(step, r_im, lw=0.8, label="readout (imag)")
    ax.plot(step, _col(data, "z"), lw=1.2, label="bloch z")


def _draw_histogram(ax, series, data):
    left = _col(data, "left_edge")
    right = _col(data, "right_edge")
    edges = np.append(left, right[-1])
    ax.stairs(_col(data, "density"), edges, label=series["name"])


def _draw_curve(ax, series, data):
    x = _col(data, series.get("x", "x"))
    ycols = series.get("y", ["value"])
    for col in ycols:
        label = series["name"] if len(ycols) == 1 else f"{series['name']} {col}"
        ax.plot(x, _col(data, col), lw=1.0, label=label)


def _draw_points(ax, series, data):
    x = _col(data, series["x"])
    names = data.dtype.names
    for col in series["y"]:
        err_name = col + "Stderr"
        err = _col(data, err_name) if err_name in names else None
        label = series["name"] if len(series["y"]) == 1 else f"{series['name']} {col}"
        ax.errorbar(x, _col(data, col), yerr=err, fmt="o", ms=3.5, capsize=2, label=label)


_DRAWERS = {
    "record": _draw_record,
    "histogram": _draw_histogram,
    "curve": _draw_curve,
    "points": _draw_points,
}


def render_manifest(out_dir: str, dpi: int = 150) -> list[str]:
    """Render every panel of out_dir/manifest.json; returns PNG paths."""
    with open(os.path.join(out_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    panels: dict[str, list[dict]] = {}
    for series in manifest["series"]:
        panels.setdefault(series["panel"], []).append(series)
    written = []
    for panel, series_list in panels.items():
        fig, ax = plt.subplots(figsize=(5.4, 3.6), constrained_layout=True)
        kinds = set()
        xlabel = None
        for series in series_list:
            data = _load(os.path.join(out_dir, series["file"]))
            _DRAWERS[series["kind"]](ax, series, data)
            kinds.add(series["kind"])
            if xlabel is None and "x" in series:
                xlabel = series["x"]
        if "record" in kinds:
            ax.set_xlabel("step")
            ax.set_ylabel("amplitude")
        else:
            ax.set_xlabel(xlabel if xlabel is not None else "value")
            ax.set_ylabel("density" if "histogram" in kinds else "value")
        ax.legend(fontsize=7)
        ax.set_title(f"{manifest['figure']}: {panel}")
        path = os.path.join(out_dir, f"panel_{panel}.png")
        fig.savefig(path, dpi=dpi)
        plt.close(fig)
        written.append(path)
    return written
