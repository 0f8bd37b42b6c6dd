"""Shared plumbing for the figure scripts: table loading, schema checks,
figure specs, and deterministic image output.

The scripts plot numbers straight from the batch CSVs and reports; any
quantity that looks derived (fitted slopes, error norms) is read from the
corresponding report file, never recomputed here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = (
    "distribution_overlay",
    "tail_loglog",
    "epsilon_convergence",
    "spacetime_heatmap",
    "moment_timeseries",
)


class SchemaMismatchError(ValueError):
    """Input table lacks required columns; carries the offending names."""

    def __init__(self, path, missing, present):
        self.missing = list(missing)
        super().__init__(
            f"{path}: missing columns {sorted(self.missing)} (found {sorted(present)})"
        )


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    output: Path
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")
        for path in self.inputs:
            if not Path(path).exists():
                raise FileNotFoundError(f"input table not found: {path}")


def read_table(path, required=()):
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    missing = set(required) - set(header)
    if missing:
        raise SchemaMismatchError(path, missing, header)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def read_report(path):
    return json.loads(Path(path).read_text())


def wealth_density_from(path):
    """Wealth density curve from either a density table or a kinetic field table."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if {"y", "density"} <= set(header):
        table = read_table(path, required=("y", "density"))
        return table["y"], table["density"]
    if {"t", "x", "y", "f"} <= set(header):
        table = read_table(path, required=("t", "x", "y", "f"))
        last = table["t"] == table["t"].max()
        y = np.unique(table["y"][last])
        dens = np.zeros_like(y)
        for xv in np.unique(table["x"][last]):
            cell = last & (table["x"] == xv)
            dens += np.interp(y, table["y"][cell], table["f"][cell], left=0.0, right=0.0)
        widths = np.gradient(y)
        total = float(np.sum(dens * widths))
        return y, dens / total
    raise SchemaMismatchError(path, {"y", "density"}, header)


def new_axes(title=None, xlabel=None, ylabel=None):
    fig, ax = plt.subplots(figsize=(6.4, 4.4), dpi=130)
    if title:
        ax.set_title(title)
    if xlabel:
        ax.set_xlabel(xlabel)
    if ylabel:
        ax.set_ylabel(ylabel)
    return fig, ax


def save(fig, out_path):
    """Write a PNG whose bytes depend only on the plotted inputs."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, metadata={"Software": "figures"})
    plt.close(fig)
    return out_path
