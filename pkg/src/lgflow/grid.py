"""Staggered rectangular grids with exact summation-by-parts structure.

Cell-centered scalar fields and face-centered flux fields on axis-aligned
1D/2D grids (axis loops are written dimension-agnostically, but only 1D and
2D are supported). The discrete gradient takes forward differences across
interior faces; the divergence is its exact negative adjoint, with
boundary-face values entering as data. The resulting identity

    <grad u, p>_faces + <u, div p>_cells = sum_{bdry faces} u * [p, nu] * area

holds to rounding error for every (u, p) pair, and everything the certificate
machinery reports downstream rests on that exactness.

Fixed layout (the reproducibility contract):

* cell values: C-order ndarray of shape ``cells``;
* interior faces along axis k: ndarray of shape ``cells`` with axis k
  shortened by one (the face between cells i and i+1 along k);
* boundary faces along axis k: two slabs (low side, high side), each of
  shape ``cells`` with axis k dropped;
* CSV order: axis 0 interior, axis 0 low, axis 0 high, axis 1 interior, ...
  each block flattened in C order, one value per line, formatted %.17g.

Cell measure is prod(spacing); an interior face carries measure
(face area) * spacing = prod(spacing) as well, while a boundary face carries
only its area prod(spacing)/spacing[axis].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_CELL_CAP = 1 << 24

_CSV_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _CSV_FMT % float(x)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned rectangular grid: per-axis cell counts and spacings."""

    cells: tuple[int, ...]
    spacing: tuple[float, ...]
    cell_cap: int = DEFAULT_CELL_CAP

    def __post_init__(self):
        cells = tuple(int(n) for n in self.cells)
        spacing = tuple(float(h) for h in self.spacing)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "spacing", spacing)
        if len(cells) not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {len(cells)}")
        if len(spacing) != len(cells):
            raise ValueError("spacing and cells must have the same length")
        if any(n < 1 for n in cells):
            raise ValueError(f"cell counts must be >= 1, got {cells}")
        if any(not np.isfinite(h) or h <= 0 for h in spacing):
            raise ValueError(f"spacings must be positive, got {spacing}")
        if self.cell_count > self.cell_cap:
            raise ValueError(
                f"total cell count {self.cell_count} exceeds cap {self.cell_cap}"
            )

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_measure(self) -> float:
        """Volume of one cell, prod(h_k)."""
        return float(np.prod(self.spacing))

    def face_area(self, axis: int) -> float:
        """Area of a face normal to ``axis`` (the empty product in 1D is 1)."""
        return self.cell_measure / self.spacing[axis]

    def interior_face_shape(self, axis: int) -> tuple[int, ...]:
        s = list(self.cells)
        s[axis] -= 1
        return tuple(s)

    def boundary_face_shape(self, axis: int) -> tuple[int, ...]:
        s = list(self.cells)
        del s[axis]
        return tuple(s)

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``cells``, one per axis."""
        axes = [
            (np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)
        ]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def interior_face_centers(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``interior_face_shape(axis)``."""
        axes = []
        for k, (n, h) in enumerate(zip(self.cells, self.spacing)):
            if k == axis:
                axes.append((np.arange(n - 1) + 1.0) * h)
            else:
                axes.append((np.arange(n) + 0.5) * h)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def boundary_face_centers(self, axis: int, side: int) -> tuple[np.ndarray, ...]:
        """Coordinates on the low (side=0) or high (side=1) boundary slab."""
        axes = []
        for k, (n, h) in enumerate(zip(self.cells, self.spacing)):
            if k == axis:
                continue
            axes.append((np.arange(n) + 0.5) * h)
        coord_k = 0.0 if side == 0 else self.cells[axis] * self.spacing[axis]
        if not axes:  # 1D: a boundary face is a single point
            return (np.array(coord_k),)
        grids = list(np.meshgrid(*axes, indexing="ij"))
        full = []
        j = 0
        for k in range(self.dim):
            if k == axis:
                full.append(np.full_like(grids[0], coord_k))
            else:
                full.append(grids[j])
                j += 1
        return tuple(full)


def _freeze(a: np.ndarray) -> np.ndarray:
    # np.array rather than ascontiguousarray: the latter promotes 0-d slabs
    # (1D boundary faces) to shape (1,)
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScalarField:
    """One real value per cell."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.cells:
            v = v.reshape(self.grid.cells)
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field entries must be finite")
        object.__setattr__(self, "values", _freeze(v))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.cells, float(value)))


@dataclass(frozen=True)
class FluxField:
    """One value per face: interior arrays plus (low, high) boundary slabs per axis.

    Entries are the axis-component of the flux through the face, not the
    outward-signed normal trace; see :func:`boundary_trace` for the latter.
    """

    grid: GridSpec
    interior: tuple[np.ndarray, ...]
    boundary: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        g = self.grid
        if len(self.interior) != g.dim or len(self.boundary) != g.dim:
            raise ValueError("flux needs one interior array and one boundary pair per axis")
        ints, bnds = [], []
        for k in range(g.dim):
            a = np.asarray(self.interior[k], dtype=np.float64).reshape(
                g.interior_face_shape(k)
            )
            lo = np.asarray(self.boundary[k][0], dtype=np.float64).reshape(
                g.boundary_face_shape(k)
            )
            hi = np.asarray(self.boundary[k][1], dtype=np.float64).reshape(
                g.boundary_face_shape(k)
            )
            if not (
                np.all(np.isfinite(a))
                and np.all(np.isfinite(lo))
                and np.all(np.isfinite(hi))
            ):
                raise ValueError("flux entries must be finite")
            ints.append(_freeze(a))
            bnds.append((_freeze(lo), _freeze(hi)))
        object.__setattr__(self, "interior", tuple(ints))
        object.__setattr__(self, "boundary", tuple(bnds))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "FluxField":
        return cls(
            grid,
            tuple(np.zeros(grid.interior_face_shape(k)) for k in range(grid.dim)),
            tuple(
                (
                    np.zeros(grid.boundary_face_shape(k)),
                    np.zeros(grid.boundary_face_shape(k)),
                )
                for k in range(grid.dim)
            ),
        )

    def max_boundary_abs(self) -> float:
        return max(
            float(np.max(np.abs(side), initial=0.0))
            for pair in self.boundary
            for side in pair
        )


@dataclass(frozen=True)
class BoundaryCondition:
    """Neumann (zero flux) or relaxed Dirichlet with a per-boundary-face datum."""

    kind: str
    datum: tuple[tuple[np.ndarray, np.ndarray], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if (self.datum is not None) != (self.kind == "dirichlet"):
            raise ValueError("datum must be present exactly when kind is dirichlet")
        if self.datum is not None:
            frozen = tuple(
                (_freeze(np.asarray(lo, float)), _freeze(np.asarray(hi, float)))
                for lo, hi in self.datum
            )
            object.__setattr__(self, "datum", frozen)

    @classmethod
    def neumann(cls) -> "BoundaryCondition":
        return cls("neumann")

    @classmethod
    def dirichlet(cls, grid: GridSpec, datum) -> "BoundaryCondition":
        """Datum given as a constant, a callable of coordinates, or explicit slabs."""
        if np.isscalar(datum):
            slabs = tuple(
                (
                    np.full(grid.boundary_face_shape(k), float(datum)),
                    np.full(grid.boundary_face_shape(k), float(datum)),
                )
                for k in range(grid.dim)
            )
        elif callable(datum):
            slabs = tuple(
                (
                    np.broadcast_to(
                        np.asarray(datum(*grid.boundary_face_centers(k, 0)), float),
                        grid.boundary_face_shape(k),
                    ),
                    np.broadcast_to(
                        np.asarray(datum(*grid.boundary_face_centers(k, 1)), float),
                        grid.boundary_face_shape(k),
                    ),
                )
                for k in range(grid.dim)
            )
        else:
            slabs = tuple((np.asarray(lo, float), np.asarray(hi, float)) for lo, hi in datum)
        return cls("dirichlet", slabs)


def gradient(u: ScalarField) -> FluxField:
    """Forward differences on interior faces; boundary faces are zero.

    Boundary faces never receive one-sided differences — their energy
    contribution is the boundary penalty assembled by the resolvent, matching
    a relaxed formulation where the state need not attain the datum.
    """
    g = u.grid
    interior = tuple(
        np.diff(u.values, axis=k) / g.spacing[k] for k in range(g.dim)
    )
    boundary = tuple(
        (
            np.zeros(g.boundary_face_shape(k)),
            np.zeros(g.boundary_face_shape(k)),
        )
        for k in range(g.dim)
    )
    return FluxField(g, interior, boundary)


def _boundary_to_full(grid: GridSpec, axis: int, slab: np.ndarray) -> np.ndarray:
    """Reshape a boundary slab so it can be concatenated along ``axis``."""
    return np.expand_dims(slab, axis=axis)


def divergence_arrays(
    grid: GridSpec,
    interior: tuple[np.ndarray, ...],
    boundary,
) -> np.ndarray:
    """Divergence from raw face arrays; ``boundary=None`` means all-zero faces."""
    out = np.zeros(grid.cells)
    for k in range(grid.dim):
        if boundary is None:
            lo = np.zeros(grid.boundary_face_shape(k))
            hi = lo
        else:
            lo, hi = boundary[k]
        stack = np.concatenate(
            [
                _boundary_to_full(grid, k, lo),
                interior[k].reshape(grid.interior_face_shape(k)),
                _boundary_to_full(grid, k, hi),
            ],
            axis=k,
        )
        out += np.diff(stack, axis=k) / grid.spacing[k]
    return out


def divergence(p: FluxField, bc: BoundaryCondition) -> ScalarField:
    """Exact negative adjoint of :func:`gradient`, boundary fluxes as data.

    Under a Neumann condition the stored boundary entries are forced to zero.
    """
    boundary = None if bc.kind == "neumann" else p.boundary
    return ScalarField(p.grid, divergence_arrays(p.grid, p.interior, boundary))


def boundary_trace(p: FluxField) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Outward-signed normal traces [p, nu]: -value on low faces, +value on high."""
    return tuple((-lo, +hi) for (lo, hi) in p.boundary)


def inner_product(u: ScalarField, v: ScalarField) -> float:
    """Cell L2 pairing, weighted by the cell measure."""
    if u.grid != v.grid:
        raise ValueError("grid mismatch in inner_product")
    return float(u.grid.cell_measure * np.dot(u.values.ravel(), v.values.ravel()))


def cell_norm(grid: GridSpec, values: np.ndarray) -> float:
    return float(np.sqrt(grid.cell_measure * np.dot(values.ravel(), values.ravel())))


def face_inner_product(p: FluxField, q: FluxField) -> float:
    """Face pairing: interior faces weighted by face area * spacing, boundary by area."""
    if p.grid != q.grid:
        raise ValueError("grid mismatch in face_inner_product")
    g = p.grid
    total = 0.0
    for k in range(g.dim):
        total += g.cell_measure * np.dot(p.interior[k].ravel(), q.interior[k].ravel())
        for side in range(2):
            total += g.face_area(k) * np.dot(
                p.boundary[k][side].ravel(), q.boundary[k][side].ravel()
            )
    return float(total)


# ---------------------------------------------------------------------------
# serialization: CSV payload next to a small JSON header
# ---------------------------------------------------------------------------


def _header_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def _write_header(csv_path, grid: GridSpec, kind: str) -> None:
    header = {
        "dims": grid.dim,
        "cells": list(grid.cells),
        "spacing": list(grid.spacing),
        "kind": kind,
    }
    _header_path(csv_path).write_text(json.dumps(header, sort_keys=True) + "\n")


def _read_header(csv_path) -> tuple[GridSpec, str]:
    header = json.loads(_header_path(csv_path).read_text())
    grid = GridSpec(tuple(header["cells"]), tuple(header["spacing"]))
    return grid, header["kind"]


def write_scalar(field: ScalarField, csv_path) -> None:
    lines = [_fmt(x) for x in field.values.ravel()]
    Path(csv_path).write_text("\n".join(lines) + "\n")
    _write_header(csv_path, field.grid, "scalar")


def read_scalar(csv_path) -> ScalarField:
    grid, kind = _read_header(csv_path)
    if kind != "scalar":
        raise ValueError(f"{csv_path}: header kind {kind!r}, expected 'scalar'")
    vals = np.array(
        [float(s) for s in Path(csv_path).read_text().split()], dtype=np.float64
    )
    if vals.size != grid.cell_count:
        raise ValueError(f"{csv_path}: expected {grid.cell_count} values, got {vals.size}")
    return ScalarField(grid, vals.reshape(grid.cells))


def write_flux(field: FluxField, csv_path) -> None:
    blocks = []
    for k in range(field.grid.dim):
        blocks.append(field.interior[k].ravel())
        blocks.append(field.boundary[k][0].ravel())
        blocks.append(field.boundary[k][1].ravel())
    lines = [_fmt(x) for x in np.concatenate(blocks)]
    Path(csv_path).write_text("\n".join(lines) + "\n")
    _write_header(csv_path, field.grid, "flux")


def read_flux(csv_path) -> FluxField:
    grid, kind = _read_header(csv_path)
    if kind != "flux":
        raise ValueError(f"{csv_path}: header kind {kind!r}, expected 'flux'")
    vals = np.array(
        [float(s) for s in Path(csv_path).read_text().split()], dtype=np.float64
    )
    interior, boundary = [], []
    pos = 0
    for k in range(grid.dim):
        n_int = int(np.prod(grid.interior_face_shape(k)))
        n_bnd = int(np.prod(grid.boundary_face_shape(k)))
        interior.append(vals[pos : pos + n_int].reshape(grid.interior_face_shape(k)))
        pos += n_int
        lo = vals[pos : pos + n_bnd].reshape(grid.boundary_face_shape(k))
        pos += n_bnd
        hi = vals[pos : pos + n_bnd].reshape(grid.boundary_face_shape(k))
        pos += n_bnd
        boundary.append((lo, hi))
    if pos != vals.size:
        raise ValueError(f"{csv_path}: trailing values beyond the declared layout")
    return FluxField(grid, tuple(interior), tuple(boundary))
