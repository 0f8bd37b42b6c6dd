"""Finite-volume grids for the wealth and configuration variables.

Both grids are cell-based: values live at cell centers, fluxes at cell
faces, and quadrature is the cell-width weighted sum. The wealth grid is
logarithmically spaced so that the equilibrium density's power-law tail
and its peak near the mean wealth are resolved simultaneously.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WealthGrid:
    """Log-spaced finite-volume grid on a truncated wealth interval.

    Attributes
    ----------
    nodes : cell-center wealth values (geometric mean of the cell faces).
    faces : cell edges; ``faces[0] == y_min`` and ``faces[-1] == y_max``.
    cell_widths : ``diff(faces)``.
    """

    nodes: np.ndarray
    faces: np.ndarray
    cell_widths: np.ndarray = field(init=False)

    def __post_init__(self):
        faces = _readonly(self.faces)
        nodes = _readonly(self.nodes)
        if faces.ndim != 1 or nodes.ndim != 1 or faces.size != nodes.size + 1:
            raise ValueError("need one more face than nodes")
        if faces[0] <= 0.0:
            raise ValueError("wealth grid must start at a positive value")
        if np.any(np.diff(faces) <= 0.0) or np.any(np.diff(nodes) <= 0.0):
            raise ValueError("grid coordinates must be strictly increasing")
        if np.any(nodes <= faces[:-1]) or np.any(nodes >= faces[1:]):
            raise ValueError("each node must lie inside its cell")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "cell_widths", _readonly(np.diff(faces)))

    @classmethod
    def log_spaced(cls, y_min: float = 1e-3, y_max: float = 1e3, n_nodes: int = 400) -> "WealthGrid":
        """Grid with log-uniform faces and geometric-mean cell centers."""
        if not (0.0 < y_min < y_max):
            raise ValueError("require 0 < y_min < y_max")
        if n_nodes < 2:
            raise ValueError("need at least two cells")
        faces = np.geomspace(y_min, y_max, n_nodes + 1)
        nodes = np.sqrt(faces[:-1] * faces[1:])
        return cls(nodes=nodes, faces=faces)

    @classmethod
    def scaled_default(cls, upsilon1: float, n_nodes: int = 400) -> "WealthGrid":
        """Default truncation [1e-3, 1e3] in units of the mean wealth."""
        return cls.log_spaced(1e-3 * upsilon1, 1e3 * upsilon1, n_nodes)

    @property
    def y_min(self) -> float:
        return float(self.faces[0])

    @property
    def y_max(self) -> float:
        return float(self.faces[-1])

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    def quadrature(self, values: np.ndarray) -> float:
        """Integral of a cell-centered function over the grid."""
        return float(np.dot(values, self.cell_widths))

    def moment(self, values: np.ndarray, k: int) -> float:
        """Integral of ``y**k * values`` over the grid."""
        return float(np.dot(self.nodes**k * values, self.cell_widths))

    def refined(self, factor: int = 2) -> "WealthGrid":
        """Same bounds, ``factor`` times as many cells."""
        return WealthGrid.log_spaced(self.y_min, self.y_max, self.n_nodes * factor)


@dataclass(frozen=True)
class XGrid:
    """Uniform finite-volume grid on the configuration interval [0, 1]."""

    n_cells: int

    def __post_init__(self):
        if self.n_cells < 1:
            raise ValueError("need at least one cell")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.dx

    def quadrature(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.dx)
