#!/usr/bin/env python3
"""Scale-separation sweep plot: error markers with a first-order guide line.

Usage: figures/epsilon_convergence.py --in <sweep.csv> --out <png>

The table carries one row per run with columns ``epsilon,error``.
"""

import argparse
from pathlib import Path

import numpy as np

from figlib import FigureSpec, new_axes, read_table, save


def build_figure(spec: FigureSpec):
    table = read_table(spec.inputs[0], required=("epsilon", "error"))
    eps = table["epsilon"]
    err = table["error"]
    order = np.argsort(eps)
    eps, err = eps[order], err[order]
    fig, ax = new_axes(
        title="closure error against scale separation",
        xlabel="epsilon",
        ylabel="terminal field error",
    )
    ax.loglog(eps, err, "o-", label="measured")
    guide = err[-1] * (eps / eps[-1])
    ax.loglog(eps, guide, "--", label="first order in epsilon")
    ax.legend()
    return fig, {"n_points": int(eps.size)}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="inputs", nargs=1, required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    spec = FigureSpec(
        kind="epsilon_convergence", inputs=tuple(args.inputs), output=Path(args.out)
    )
    fig, artifacts = build_figure(spec)
    save(fig, spec.output)
    return artifacts


if __name__ == "__main__":
    main()
