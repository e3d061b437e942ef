"""Uniform rectangular meshes of axis-aligned 2D boxes.

Cells are axis-aligned rectangles, so every reference map is affine and
tensor-product Gauss quadrature integrates the assembled polynomial
integrands exactly.  The mesh is immutable after construction.

Conventions
-----------
Cell (i, j) has linear index ``c = j*nx + i``.  Internal face normals point
from the lower-index ("minus") cell to the higher-index ("plus") cell; with
this cell numbering they are always +x or +y unit vectors.  Jumps are
``minus trace - plus trace`` and averages are the arithmetic mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Mesh:
    """Conforming nx-by-ny grid of rectangles on [xmin,xmax] x [ymin,ymax].

    vertices : (Nv, 2) float array
    cells : (Nc, 4) int array, counter-clockwise corner vertices
    iface_cells : (Nf, 2) int, (minus, plus) cell of each internal face
    iface_normals : (Nf, 2) float, unit normal from minus to plus
    iface_h : (Nf,) float, face length
    iface_p0, iface_p1 : (Nf, 2) float, face endpoints
    iface_axis : (Nf,) int, 0 for faces with normal +x, 1 for +y
    bface_cells, bface_normals, bface_h, bface_p0, bface_p1 : boundary
        analogues; bface_side is 0/1/2/3 for left/right/bottom/top.
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int
    vertices: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)
    iface_cells: np.ndarray = field(repr=False)
    iface_normals: np.ndarray = field(repr=False)
    iface_h: np.ndarray = field(repr=False)
    iface_p0: np.ndarray = field(repr=False)
    iface_p1: np.ndarray = field(repr=False)
    iface_axis: np.ndarray = field(repr=False)
    bface_cells: np.ndarray = field(repr=False)
    bface_normals: np.ndarray = field(repr=False)
    bface_h: np.ndarray = field(repr=False)
    bface_p0: np.ndarray = field(repr=False)
    bface_p1: np.ndarray = field(repr=False)
    bface_side: np.ndarray = field(repr=False)

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def h(self) -> float:
        """Mesh size, max(dx, dy)."""
        return max(self.dx, self.dy)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @property
    def internal_faces(self):
        """List of (cell_minus, cell_plus, normal, length) tuples."""
        return [
            (int(cm), int(cp), self.iface_normals[f].copy(), float(self.iface_h[f]))
            for f, (cm, cp) in enumerate(self.iface_cells)
        ]

    @property
    def boundary_faces(self):
        """List of (cell, outward normal, length) tuples."""
        return [
            (int(c), self.bface_normals[f].copy(), float(self.bface_h[f]))
            for f, c in enumerate(self.bface_cells)
        ]

    def cell_origin(self, cells) -> np.ndarray:
        """Lower-left corner of each cell in `cells`."""
        cells = np.asarray(cells)
        i = cells % self.nx
        j = cells // self.nx
        return np.stack(
            [self.xmin + i * self.dx, self.ymin + j * self.dy], axis=-1
        )

    def ref_to_phys(self, cells, ref_pts) -> np.ndarray:
        """Map reference points in [-1,1]^2 to physical coordinates.

        cells: (...,) int, ref_pts: (npts, 2).  Returns (..., npts, 2).
        """
        orig = self.cell_origin(cells)  # (..., 2)
        scale = np.array([self.dx, self.dy]) / 2.0
        return orig[..., None, :] + (np.asarray(ref_pts) + 1.0) * scale

    def phys_to_ref(self, cell: int, x) -> np.ndarray:
        """Inverse affine map into a cell's reference square."""
        orig = self.cell_origin(cell)
        return 2.0 * (np.asarray(x) - orig) / np.array([self.dx, self.dy]) - 1.0


def build_rect_mesh(xmin, xmax, ymin, ymax, nx: int, ny: int) -> Mesh:
    """Build a uniform nx-by-ny rectangle mesh of [xmin,xmax] x [ymin,ymax]."""
    if nx < 1 or ny < 1:
        raise ConfigurationError(f"subdivisions must be >= 1, got nx={nx}, ny={ny}")
    if not (xmax > xmin and ymax > ymin):
        raise ConfigurationError(
            f"invalid extents: [{xmin},{xmax}] x [{ymin},{ymax}]"
        )

    dx = (xmax - xmin) / nx
    dy = (ymax - ymin) / ny
    xs = xmin + dx * np.arange(nx + 1)
    ys = ymin + dy * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    I, J = I.ravel(), J.ravel()
    cells = np.column_stack(
        [vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)]
    ).astype(np.int64)

    def cid(i, j):
        return j * nx + i

    # Vertical internal faces (normal +x), between (i,j) and (i+1,j).
    ic, inrm, ih, ip0, ip1, iax = [], [], [], [], [], []
    for j in range(ny):
        for i in range(nx - 1):
            ic.append((cid(i, j), cid(i + 1, j)))
            inrm.append((1.0, 0.0))
            ih.append(dy)
            x = xmin + (i + 1) * dx
            ip0.append((x, ymin + j * dy))
            ip1.append((x, ymin + (j + 1) * dy))
            iax.append(0)
    # Horizontal internal faces (normal +y), between (i,j) and (i,j+1).
    for j in range(ny - 1):
        for i in range(nx):
            ic.append((cid(i, j), cid(i, j + 1)))
            inrm.append((0.0, 1.0))
            ih.append(dx)
            y = ymin + (j + 1) * dy
            ip0.append((xmin + i * dx, y))
            ip1.append((xmin + (i + 1) * dx, y))
            iax.append(1)

    # Boundary faces: left, right, bottom, top.
    bc, bnrm, bh, bp0, bp1, bs = [], [], [], [], [], []
    for j in range(ny):
        bc.append(cid(0, j))
        bnrm.append((-1.0, 0.0))
        bh.append(dy)
        bp0.append((xmin, ymin + j * dy))
        bp1.append((xmin, ymin + (j + 1) * dy))
        bs.append(0)
        bc.append(cid(nx - 1, j))
        bnrm.append((1.0, 0.0))
        bh.append(dy)
        bp0.append((xmax, ymin + j * dy))
        bp1.append((xmax, ymin + (j + 1) * dy))
        bs.append(1)
    for i in range(nx):
        bc.append(cid(i, 0))
        bnrm.append((0.0, -1.0))
        bh.append(dx)
        bp0.append((xmin + i * dx, ymin))
        bp1.append((xmin + (i + 1) * dx, ymin))
        bs.append(2)
        bc.append(cid(i, ny - 1))
        bnrm.append((0.0, 1.0))
        bh.append(dx)
        bp0.append((xmin + i * dx, ymax))
        bp1.append((xmin + (i + 1) * dx, ymax))
        bs.append(3)

    return Mesh(
        xmin=float(xmin), xmax=float(xmax), ymin=float(ymin), ymax=float(ymax),
        nx=nx, ny=ny,
        vertices=vertices,
        cells=cells,
        iface_cells=np.asarray(ic, dtype=np.int64).reshape(-1, 2),
        iface_normals=np.asarray(inrm, dtype=float).reshape(-1, 2),
        iface_h=np.asarray(ih, dtype=float),
        iface_p0=np.asarray(ip0, dtype=float).reshape(-1, 2),
        iface_p1=np.asarray(ip1, dtype=float).reshape(-1, 2),
        iface_axis=np.asarray(iax, dtype=np.int64),
        bface_cells=np.asarray(bc, dtype=np.int64),
        bface_normals=np.asarray(bnrm, dtype=float).reshape(-1, 2),
        bface_h=np.asarray(bh, dtype=float),
        bface_p0=np.asarray(bp0, dtype=float).reshape(-1, 2),
        bface_p1=np.asarray(bp1, dtype=float).reshape(-1, 2),
        bface_side=np.asarray(bs, dtype=np.int64),
    )


def face_quadrature(p0, p1, order: int):
    """Gauss quadrature on the segment p0-p1.

    Returns (points (n,2), weights (n,)); weights sum to the segment
    length and the rule is exact for polynomials of degree 2*order-1.
    """
    if order < 1:
        raise ConfigurationError(f"quadrature order must be >= 1, got {order}")
    t, w = np.polynomial.legendre.leggauss(order)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.linalg.norm(p1 - p0))
    pts = p0 + (t[:, None] + 1.0) / 2.0 * (p1 - p0)
    return pts, w * (length / 2.0)
