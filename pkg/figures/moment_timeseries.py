#!/usr/bin/env python3
"""Time series of domain-aggregated moments from a batch moment table.

Usage: figures/moment_timeseries.py --in <moments.csv> --out <png>

Plots total mass and the mass-weighted mean wealth per output time; accepts
the kinetic/macro schema ``t,x,rho,upsilon1[,...]`` and the particle summary
schema ``t,bin,rho,upsilon1,upsilon2``.
"""

import argparse
from pathlib import Path

import numpy as np

from figlib import FigureSpec, new_axes, read_table, save


def build_figure(spec: FigureSpec):
    table = read_table(spec.inputs[0], required=("t", "rho", "upsilon1"))
    times = np.unique(table["t"])
    mass = np.empty(times.size)
    mean_wealth = np.empty(times.size)
    for i, t in enumerate(times):
        rows = table["t"] == t
        rho = table["rho"][rows]
        u1 = table["upsilon1"][rows]
        mass[i] = rho.mean()
        mean_wealth[i] = float(np.sum(rho * u1) / np.sum(rho))
    fig, ax = new_axes(title="aggregate moments", xlabel="time")
    ax.plot(times, mass, "o-", label="total mass")
    ax.plot(times, mean_wealth, "s-", label="mean wealth")
    ax.legend()
    return fig, {"times": times.tolist(), "mass": mass.tolist(), "mean_wealth": mean_wealth.tolist()}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="inputs", nargs=1, required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    spec = FigureSpec(
        kind="moment_timeseries", inputs=tuple(args.inputs), output=Path(args.out)
    )
    fig, artifacts = build_figure(spec)
    save(fig, spec.output)
    return artifacts


if __name__ == "__main__":
    main()
