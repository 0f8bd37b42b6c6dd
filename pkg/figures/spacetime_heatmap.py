#!/usr/bin/env python3
"""Space-time heatmap of a moment field from a batch moment table.

Usage: figures/spacetime_heatmap.py --in <moments.csv> --out <png> [--field rho]

Accepts the kinetic/macro moment schema ``t,x,rho,upsilon1[,upsilon2]``.
"""

import argparse
from pathlib import Path

import numpy as np

from figlib import FigureSpec, new_axes, read_table, save


def build_figure(spec: FigureSpec):
    name = spec.options.get("field", "rho")
    table = read_table(spec.inputs[0], required=("t", "x", name))
    times = np.unique(table["t"])
    xs = np.unique(table["x"])
    grid = np.full((times.size, xs.size), np.nan)
    ti = np.searchsorted(times, table["t"])
    xi = np.searchsorted(xs, table["x"])
    grid[ti, xi] = table[name]
    fig, ax = new_axes(
        title=f"{name}(x, t)", xlabel="configuration x", ylabel="time"
    )
    mesh = ax.pcolormesh(xs, times, grid, shading="nearest")
    fig.colorbar(mesh, ax=ax, label=name)
    return fig, {"n_times": int(times.size), "n_cells": int(xs.size)}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="inputs", nargs=1, required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--field", default="rho")
    args = parser.parse_args(argv)
    spec = FigureSpec(
        kind="spacetime_heatmap",
        inputs=tuple(args.inputs),
        output=Path(args.out),
        options={"field": args.field},
    )
    fig, artifacts = build_figure(spec)
    save(fig, spec.output)
    return artifacts


if __name__ == "__main__":
    main()
