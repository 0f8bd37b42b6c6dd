#!/usr/bin/env python3
"""Log-log tail plot of a wealth density with the fitted slope annotated.

Usage: figures/tail_loglog.py --in <density.csv> <tail_fit.json> --out <png> [--kappa K]

The slope in the annotation is copied verbatim from the tail-fit report;
nothing is refitted here. With ``--kappa`` the theoretical tail exponent
-(kappa+3) is drawn as a guide line through the window.
"""

import argparse
from pathlib import Path

import numpy as np

from figlib import FigureSpec, new_axes, read_report, save, wealth_density_from


def build_figure(spec: FigureSpec):
    y, dens = wealth_density_from(spec.inputs[0])
    report = read_report(spec.inputs[1])
    slope = report["slope"]
    lo, hi = report["window"]
    fig, ax = new_axes(title="wealth-density tail", xlabel="wealth", ylabel="density")
    pos = dens > 0
    ax.loglog(y[pos], dens[pos], label="density")
    annotation = f"fitted slope = {slope!r}"
    window = (y >= lo) & (y <= hi) & pos
    anchor_y = float(np.exp(np.mean(np.log(y[window]))))
    anchor_d = float(np.exp(np.mean(np.log(dens[window]))))
    guide_x = np.geomspace(lo, hi, 10)
    ax.loglog(anchor_y, anchor_d, ".", ms=1, alpha=0.0)
    ax.loglog(
        guide_x,
        anchor_d * (guide_x / anchor_y) ** slope,
        "-",
        lw=2.0,
        label=f"fit: slope {slope:.3f}",
    )
    kappa = spec.options.get("kappa")
    if kappa is not None:
        ref = -(kappa + 3.0)
        ax.loglog(
            guide_x,
            0.5 * anchor_d * (guide_x / anchor_y) ** ref,
            ":",
            label=f"theory: slope {ref:.3f}",
        )
    ax.axvspan(lo, hi, alpha=0.12, label="fit window")
    ax.annotate(annotation, xy=(0.03, 0.05), xycoords="axes fraction", fontsize=8)
    ax.legend(loc="upper right", fontsize=8)
    return fig, {"annotation": annotation, "slope": slope}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="inputs", nargs=2, required=True,
                        help="density table and tail-fit report")
    parser.add_argument("--out", required=True)
    parser.add_argument("--kappa", type=float, default=None)
    args = parser.parse_args(argv)
    spec = FigureSpec(
        kind="tail_loglog",
        inputs=tuple(args.inputs),
        output=Path(args.out),
        options={"kappa": args.kappa},
    )
    fig, artifacts = build_figure(spec)
    save(fig, spec.output)
    return artifacts


if __name__ == "__main__":
    main()
