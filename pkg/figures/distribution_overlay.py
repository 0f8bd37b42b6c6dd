#!/usr/bin/env python3
"""Overlay an empirical or kinetic wealth density against a reference curve.

Usage: figures/distribution_overlay.py --in <data.csv> <reference.csv> --out <png>

The data table is either a ``y,density`` marginal or a sparse kinetic field
``t,x,y,f`` (its terminal wealth marginal is plotted); the reference is a
``y,density`` table, typically the closed-form equilibrium.
"""

import argparse
from pathlib import Path

import numpy as np

from figlib import FigureSpec, new_axes, save, wealth_density_from


def build_figure(spec: FigureSpec):
    y1, d1 = wealth_density_from(spec.inputs[0])
    y2, d2 = wealth_density_from(spec.inputs[1])
    fig, ax = new_axes(
        title=spec.options.get("title", "wealth distribution"),
        xlabel="wealth",
        ylabel="density",
    )
    ax.loglog(y1, np.maximum(d1, 1e-300), label=spec.options.get("label_a", "data"))
    ax.loglog(
        y2,
        np.maximum(d2, 1e-300),
        "--",
        label=spec.options.get("label_b", "reference"),
    )
    lo = max(np.min(d1[d1 > 0]), 1e-12)
    ax.set_ylim(bottom=lo / 10)
    ax.legend()
    common = np.interp(y1, y2, d2, left=np.nan, right=np.nan)
    gap = float(np.nanmax(np.abs(common - d1))) if np.any(np.isfinite(common)) else np.nan
    artifacts = {"max_plotted_gap": gap}
    return fig, artifacts


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="inputs", nargs=2, required=True,
                        help="data table and reference table")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default="wealth distribution")
    args = parser.parse_args(argv)
    spec = FigureSpec(
        kind="distribution_overlay",
        inputs=tuple(args.inputs),
        output=Path(args.out),
        options={"title": args.title},
    )
    fig, artifacts = build_figure(spec)
    save(fig, spec.output)
    return artifacts


if __name__ == "__main__":
    main()
