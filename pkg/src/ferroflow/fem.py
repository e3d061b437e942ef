"""Tensor-product Lagrange elements on uniform rectangle meshes.

Provides continuous and discontinuous Q_l spaces, their DOF maps, shape
function tabulation, nodal interpolation and cell quadrature.  Because the
mesh is uniform every cell shares one reference tabulation, which the
assembly routines exploit.

Vector-valued spaces store coefficients blocked by component: the full
vector of a 2-component space is [all x-component DOFs, all y-component
DOFs], and `dof_map` indexes the scalar (per-component) block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .mesh import Mesh


def lagrange_nodes_1d(degree: int) -> np.ndarray:
    """Equispaced Lagrange nodes on [-1, 1]."""
    return np.linspace(-1.0, 1.0, degree + 1)


def lagrange_basis_1d(nodes: np.ndarray, pts) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the 1D Lagrange basis at `pts`.

    Returns (vals, ders), each of shape (npts, nnodes).
    """
    pts = np.atleast_1d(np.asarray(pts, dtype=float))
    n = len(nodes)
    vals = np.ones((len(pts), n))
    ders = np.zeros((len(pts), n))
    for a in range(n):
        for b in range(n):
            if b == a:
                continue
            vals[:, a] *= (pts - nodes[b]) / (nodes[a] - nodes[b])
        # derivative by the product-rule sum over omitted factors
        for c in range(n):
            if c == a:
                continue
            term = np.full(len(pts), 1.0 / (nodes[a] - nodes[c]))
            for b in range(n):
                if b in (a, c):
                    continue
                term *= (pts - nodes[b]) / (nodes[a] - nodes[b])
            ders[:, a] += term
    return vals, ders


def cell_quadrature(mesh: Mesh, npts: int):
    """Tensor Gauss rule on the reference square, with physical weights.

    Returns (ref_pts (n,2), weights (n,)); weights include the cell
    Jacobian dx*dy/4, so summing f(quad points)*weights integrates f over
    one cell.  Exact for Q_{2*npts-1} integrands.
    """
    if npts < 1:
        raise ConfigurationError(f"need at least one quadrature point, got {npts}")
    t, w = np.polynomial.legendre.leggauss(npts)
    X, Y = np.meshgrid(t, t, indexing="xy")
    WX, WY = np.meshgrid(w, w, indexing="xy")
    ref = np.column_stack([X.ravel(), Y.ravel()])
    wts = (WX * WY).ravel() * (mesh.dx * mesh.dy / 4.0)
    return ref, wts


class FESpace:
    """Scalar or vector Q_l space, continuous or discontinuous.

    Attributes
    ----------
    n_scalar : number of DOFs of one component
    dim : n_scalar * ncomp
    nloc : local (per-cell, per-component) DOFs, (l+1)^2
    dirichlet_scalar : sorted array of boundary scalar-DOF indices
        (empty unless the space was built with dirichlet=True)
    """

    def __init__(self, mesh: Mesh, degree: int, ncomp: int = 1,
                 continuous: bool = True, dirichlet: bool = False):
        if degree < 1:
            raise ConfigurationError(f"polynomial degree must be >= 1, got {degree}")
        if ncomp not in (1, 2):
            raise ConfigurationError(f"ncomp must be 1 or 2, got {ncomp}")
        if dirichlet and not continuous:
            raise ConfigurationError("strong Dirichlet requires a continuous space")
        self.mesh = mesh
        self.degree = degree
        self.ncomp = ncomp
        self.continuous = continuous
        self.dirichlet = dirichlet
        self.nodes_1d = lagrange_nodes_1d(degree)
        self.nloc = (degree + 1) ** 2

        l, nx, ny = degree, mesh.nx, mesh.ny
        if continuous:
            self._ngx = l * nx + 1
            self._ngy = l * ny + 1
            self.n_scalar = self._ngx * self._ngy
            # dof_map built per cell: global grid node (l*i+a, l*j+b)
            a = np.arange(l + 1)
            A, B = np.meshgrid(a, a, indexing="xy")  # local order: a fastest
            ci = np.arange(nx * ny) % nx
            cj = np.arange(nx * ny) // nx
            gx = l * ci[:, None] + A.ravel()[None, :]
            gy = l * cj[:, None] + B.ravel()[None, :]
            self._dof_map = (gy * self._ngx + gx).astype(np.int64)
        else:
            self.n_scalar = mesh.n_cells * self.nloc
            self._dof_map = (
                np.arange(mesh.n_cells)[:, None] * self.nloc
                + np.arange(self.nloc)[None, :]
            ).astype(np.int64)

        if dirichlet:
            gx = np.arange(self._ngx)
            gy = np.arange(self._ngy)
            on_bnd = np.zeros((self._ngy, self._ngx), dtype=bool)
            on_bnd[0, :] = on_bnd[-1, :] = True
            on_bnd[:, 0] = on_bnd[:, -1] = True
            self.dirichlet_scalar = np.flatnonzero(on_bnd.ravel())
        else:
            self.dirichlet_scalar = np.array([], dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.n_scalar * self.ncomp

    def dof_map(self, cells=None) -> np.ndarray:
        """Scalar DOF indices per cell, shape (ncells, nloc)."""
        if cells is None:
            return self._dof_map
        return self._dof_map[np.asarray(cells)]

    def dirichlet_dofs(self) -> np.ndarray:
        """Constrained full-vector DOF indices (all components)."""
        if len(self.dirichlet_scalar) == 0:
            return self.dirichlet_scalar
        return np.concatenate(
            [self.dirichlet_scalar + c * self.n_scalar for c in range(self.ncomp)]
        )

    def tabulate(self, ref_pts) -> tuple[np.ndarray, np.ndarray]:
        """Shape values and physical gradients at reference points.

        Returns (phi (npts, nloc), grad (npts, nloc, 2)); the gradient is
        already scaled by the affine Jacobian (2/dx, 2/dy), valid on every
        cell of the uniform mesh.
        """
        ref_pts = np.asarray(ref_pts, dtype=float).reshape(-1, 2)
        vx, dx_ = lagrange_basis_1d(self.nodes_1d, ref_pts[:, 0])
        vy, dy_ = lagrange_basis_1d(self.nodes_1d, ref_pts[:, 1])
        n1 = self.degree + 1
        # local index = b*n1 + a  (x-index a fastest)
        phi = vy[:, :, None] * vx[:, None, :]          # (npts, b, a)
        gx = vy[:, :, None] * dx_[:, None, :] * (2.0 / self.mesh.dx)
        gy = dy_[:, :, None] * vx[:, None, :] * (2.0 / self.mesh.dy)
        npts = len(ref_pts)
        grad = np.stack([gx.reshape(npts, -1), gy.reshape(npts, -1)], axis=-1)
        return phi.reshape(npts, n1 * n1), grad

    def scalar_node_coords(self) -> np.ndarray:
        """Physical coordinates of each scalar DOF, shape (n_scalar, 2)."""
        if self.continuous:
            l = self.degree
            xs = self.mesh.xmin + (self.mesh.dx / l) * np.arange(self._ngx)
            ys = self.mesh.ymin + (self.mesh.dy / l) * np.arange(self._ngy)
            X, Y = np.meshgrid(xs, ys, indexing="xy")
            return np.column_stack([X.ravel(), Y.ravel()])
        ref = np.column_stack(
            [np.tile(self.nodes_1d, self.degree + 1),
             np.repeat(self.nodes_1d, self.degree + 1)]
        )
        pts = self.mesh.ref_to_phys(np.arange(self.mesh.n_cells), ref)
        return pts.reshape(-1, 2)

    def interpolate(self, f) -> "FEFunction":
        """Nodal Lagrange interpolant of f(x, y).

        f returns a scalar for 1-component spaces, a length-2 sequence for
        vector spaces; it must broadcast over numpy arrays x, y.
        """
        xy = self.scalar_node_coords()
        vals = f(xy[:, 0], xy[:, 1])
        coeffs = np.zeros(self.dim)
        if self.ncomp == 1:
            coeffs[:] = np.broadcast_to(vals, (self.n_scalar,))
        else:
            for c in range(self.ncomp):
                coeffs[c * self.n_scalar:(c + 1) * self.n_scalar] = \
                    np.broadcast_to(vals[c], (self.n_scalar,))
        return FEFunction(self, coeffs)

    def zero(self) -> "FEFunction":
        return FEFunction(self, np.zeros(self.dim))

    def mass_lumped_weights(self, quad_pts: int | None = None) -> np.ndarray:
        """Integrals of each scalar basis function (for means/integrals)."""
        nq = quad_pts or (self.degree + 2)
        ref, wts = cell_quadrature(self.mesh, nq)
        phi, _ = self.tabulate(ref)
        local = wts @ phi                      # (nloc,)
        out = np.zeros(self.n_scalar)
        np.add.at(out, self._dof_map.ravel(),
                  np.tile(local, self.mesh.n_cells))
        return out


@dataclass
class FEFunction:
    """Coefficient vector over the DOFs of a space."""

    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dim,):
            raise ConfigurationError(
                f"coefficient length {self.coeffs.shape} != space dim {self.space.dim}"
            )

    def copy(self) -> "FEFunction":
        return FEFunction(self.space, self.coeffs.copy())

    def component(self, c: int) -> np.ndarray:
        n = self.space.n_scalar
        return self.coeffs[c * n:(c + 1) * n]

    def apply_dirichlet(self):
        dofs = self.space.dirichlet_dofs()
        if len(dofs):
            self.coeffs[dofs] = 0.0

    def eval_cells(self, cells, ref_pts):
        """Values and gradients on given cells at reference points.

        Returns (vals, grads): for scalar spaces vals is (ncells, npts)
        and grads is (ncells, npts, 2); vector spaces get an extra
        trailing component axis on vals, and grads[..., i, j] = d u_i/d x_j.
        """
        cells = np.atleast_1d(np.asarray(cells))
        if cells.size and (cells.min() < 0 or cells.max() >= self.space.mesh.n_cells):
            raise ConfigurationError(f"cell index out of range: {cells}")
        phi, grad = self.space.tabulate(ref_pts)
        dm = self.space.dof_map(cells)          # (nc, nloc)
        comps_v, comps_g = [], []
        for c in range(self.space.ncomp):
            loc = self.component(c)[dm]         # (nc, nloc)
            comps_v.append(np.einsum("cl,pl->cp", loc, phi))
            comps_g.append(np.einsum("cl,pld->cpd", loc, grad))
        if self.space.ncomp == 1:
            return comps_v[0], comps_g[0]
        return np.stack(comps_v, axis=-1), np.stack(comps_g, axis=-2)

    def integral(self) -> np.ndarray:
        """Componentwise integral over the domain."""
        w = self.space.mass_lumped_weights()
        return np.array([w @ self.component(c) for c in range(self.space.ncomp)])


@dataclass
class SpaceBundle:
    """The five spaces of the coupled scheme."""

    mesh: Mesh
    degree: int
    U: FESpace = field(repr=False)
    P: FESpace = field(repr=False)
    W: FESpace = field(repr=False)
    M: FESpace = field(repr=False)
    X: FESpace = field(repr=False)


def build_spaces(mesh: Mesh, degree: int = 2) -> SpaceBundle:
    """Velocity/pressure/spin/magnetization/potential spaces.

    U: vector continuous Q_l, zero trace.  P: scalar continuous Q_{l-1}
    (Taylor-Hood).  W: scalar continuous Q_l, zero trace (planar spin).
    M: vector discontinuous Q_l.  X: scalar continuous Q_l, so that the
    gradient of any X-function lies in M cellwise.
    """
    if degree < 2:
        raise ConfigurationError(
            f"degree must be >= 2 for a stable velocity-pressure pair, got {degree}"
        )
    return SpaceBundle(
        mesh=mesh, degree=degree,
        U=FESpace(mesh, degree, ncomp=2, continuous=True, dirichlet=True),
        P=FESpace(mesh, degree - 1, ncomp=1, continuous=True),
        W=FESpace(mesh, degree, ncomp=1, continuous=True, dirichlet=True),
        M=FESpace(mesh, degree, ncomp=2, continuous=False),
        X=FESpace(mesh, degree, ncomp=1, continuous=True),
    )
