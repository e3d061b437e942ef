"""Sparse matrix and load-vector assembly on top of `forms.Discretization`.

Everything that does not depend on the velocity field is cached on first
use (mass, stiffness, coupling and penalty matrices); the convection
matrices are rebuilt per call since they carry the current velocity
samples.  Vector spaces are blocked by component, matching `fem`.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fem import FEFunction, FESpace
from .forms import Discretization
from .linalg import coo_matrix


def _scatter(rows_dm, cols_dm, local, shape) -> sp.csr_matrix:
    """Accumulate per-cell local blocks into a CSR matrix.

    rows_dm (nc, nr), cols_dm (nc, ncl); local is (nc, nr, ncl) or a
    shared (nr, ncl) block used for every cell.
    """
    nc, nr = rows_dm.shape
    ncl = cols_dm.shape[1]
    r = np.broadcast_to(rows_dm[:, :, None], (nc, nr, ncl))
    c = np.broadcast_to(cols_dm[:, None, :], (nc, nr, ncl))
    if local.ndim == 2:
        local = np.broadcast_to(local[None], (nc, nr, ncl))
    return coo_matrix(r, c, np.ascontiguousarray(local), shape)


class Operators:
    """Assembled operators for one discretization."""

    def __init__(self, disc: Discretization):
        self.d = disc
        self._cache = {}

    # -- velocity-independent matrices ---------------------------------

    def mass(self, space: FESpace) -> sp.csr_matrix:
        """Scalar-block mass matrix (one component)."""
        key = ("mass", space.degree, space.continuous)
        if key not in self._cache:
            phi, _ = self.d.tab(space)
            local = np.einsum("q,qi,qj->ij", self.d.wts, phi, phi)
            dm = space.dof_map()
            n = space.n_scalar
            self._cache[key] = _scatter(dm, dm, local, (n, n))
        return self._cache[key]

    def stiffness(self, space: FESpace) -> sp.csr_matrix:
        """Scalar-block stiffness matrix (grad, grad)."""
        key = ("stiff", space.degree, space.continuous)
        if key not in self._cache:
            _, grad = self.d.tab(space)
            local = np.einsum("q,qid,qjd->ij", self.d.wts, grad, grad)
            dm = space.dof_map()
            n = space.n_scalar
            self._cache[key] = _scatter(dm, dm, local, (n, n))
        return self._cache[key]

    def deriv(self, rsp: FESpace, csp: FESpace, c: int) -> sp.csr_matrix:
        """(phi_i, d_c psi_j) with rows in rsp, columns in csp (scalar blocks)."""
        key = ("deriv", rsp.degree, rsp.continuous, csp.degree, csp.continuous, c)
        if key not in self._cache:
            phi_r, _ = self.d.tab(rsp)
            _, grad_c = self.d.tab(csp)
            local = np.einsum("q,qi,qj->ij", self.d.wts, phi_r, grad_c[:, :, c])
            self._cache[key] = _scatter(rsp.dof_map(), csp.dof_map(), local,
                                        (rsp.n_scalar, csp.n_scalar))
        return self._cache[key]

    def divergence(self) -> sp.csr_matrix:
        """B with B[i, :] = (Q_i, div V): rows P, columns full U."""
        key = "div_B"
        if key not in self._cache:
            b = self.d.bundle
            self._cache[key] = sp.hstack(
                [self.deriv(b.P, self.d.bundle.U, 0),
                 self.deriv(b.P, self.d.bundle.U, 1)]).tocsr()
        return self._cache[key]

    def grad_coupling(self) -> sp.csr_matrix:
        """G with G[i, :] = (d phi^X / dx_c, psi^M_i): rows full M, cols X."""
        key = "grad_G"
        if key not in self._cache:
            b = self.d.bundle
            self._cache[key] = sp.vstack(
                [self.deriv(b.M, b.X, 0), self.deriv(b.M, b.X, 1)]).tocsr()
        return self._cache[key]

    def curl_w_to_u(self) -> sp.csr_matrix:
        """Matrix of (curl w, V) = (dy w, V1) - (dx w, V2): rows full U, cols W."""
        key = "curlWU"
        if key not in self._cache:
            b = self.d.bundle
            phi_u, _ = self.d.tab(b.U)
            _, grad_w = self.d.tab(b.W)
            loc_y = np.einsum("q,qi,qj->ij", self.d.wts, phi_u, grad_w[:, :, 1])
            loc_x = np.einsum("q,qi,qj->ij", self.d.wts, phi_u, grad_w[:, :, 0])
            dm_u, dm_w = b.U.dof_map(), b.W.dof_map()
            n_u, n_w = b.U.n_scalar, b.W.n_scalar
            top = _scatter(dm_u, dm_w, loc_y, (n_u, n_w))
            bot = _scatter(dm_u, dm_w, -loc_x, (n_u, n_w))
            self._cache[key] = sp.vstack([top, bot]).tocsr()
        return self._cache[key]

    def curl_u_to_w(self) -> sp.csr_matrix:
        """Matrix of (curl U, x) = (dx U2 - dy U1, x): rows W, cols full U."""
        key = "curlUW"
        if key not in self._cache:
            b = self.d.bundle
            phi_w, _ = self.d.tab(b.W)
            _, grad_u = self.d.tab(b.U)
            loc_y = np.einsum("q,qi,qj->ij", self.d.wts, phi_w, grad_u[:, :, 1])
            loc_x = np.einsum("q,qi,qj->ij", self.d.wts, phi_w, grad_u[:, :, 0])
            dm_w, dm_u = b.W.dof_map(), b.U.dof_map()
            n_w, n_u = b.W.n_scalar, b.U.n_scalar
            left = _scatter(dm_w, dm_u, -loc_y, (n_w, n_u))
            right = _scatter(dm_w, dm_u, loc_x, (n_w, n_u))
            self._cache[key] = sp.hstack([left, right]).tocsr()
        return self._cache[key]

    def _m_full_dm(self) -> np.ndarray:
        """Full (2-component) per-cell DOF map of the magnetization space."""
        key = "m_full_dm"
        if key not in self._cache:
            M = self.d.bundle.M
            dm = M.dof_map()
            self._cache[key] = np.concatenate([dm, dm + M.n_scalar], axis=1)
        return self._cache[key]

    def ah_matrix(self, eta: float | None = None) -> sp.csr_matrix:
        """Interior-penalty vector Laplacian on the full magnetization space."""
        eta = self.d.eta if eta is None else float(eta)
        key = ("ah", eta)
        if key not in self._cache:
            d = self.d
            M = d.bundle.M
            nl = M.nloc
            n_full = 2 * M.n_scalar
            _, grad = d.tab(M)
            nq = d.nq
            # stacked basis: index a = c*nl + l
            curl = np.concatenate([-grad[:, :, 1], grad[:, :, 0]], axis=1)
            div = np.concatenate([grad[:, :, 0], grad[:, :, 1]], axis=1)
            local = np.einsum("q,qa,qb->ab", d.wts, curl, curl) + \
                np.einsum("q,qa,qb->ab", d.wts, div, div)
            fdm = self._m_full_dm()
            A = _scatter(fdm, fdm, local, (n_full, n_full))

            for family in (0, 1):
                faces = d.vfaces if family == 0 else d.hfaces
                if len(faces) == 0:
                    continue
                w = d.fwts[family]
                hF = d.face_h[family]
                cells = d.bundle.mesh.iface_cells[faces]
                for si, sgn_i in (("minus", 1.0), ("plus", -1.0)):
                    phi_i, grad_i = d.face_tab(M, (family, si))
                    ti, ji, ci, di = _face_basis(phi_i, grad_i, family, nl)
                    dofs_i = fdm[cells[:, 0 if si == "minus" else 1]]
                    for sj, sgn_j in (("minus", 1.0), ("plus", -1.0)):
                        phi_j, grad_j = d.face_tab(M, (family, sj))
                        tj, jj, cj, dj = _face_basis(phi_j, grad_j, family, nl)
                        dofs_j = fdm[cells[:, 0 if sj == "minus" else 1]]
                        loc = (eta / hF) * (
                            np.einsum("q,qa,qb->ab", w, sgn_i * ti, sgn_j * tj)
                            + np.einsum("q,qa,qb->ab", w, sgn_i * ji, sgn_j * jj))
                        loc -= 0.5 * np.einsum("q,qa,qb->ab", w, sgn_i * ti, cj)
                        loc -= 0.5 * np.einsum("q,qa,qb->ab", w, ci, sgn_j * tj)
                        loc -= 0.5 * np.einsum("q,qa,qb->ab", w, sgn_i * ji, dj)
                        loc -= 0.5 * np.einsum("q,qa,qb->ab", w, di, sgn_j * jj)
                        A = A + _scatter(dofs_i, dofs_j, loc, (n_full, n_full))
            self._cache[key] = A.tocsr()
        return self._cache[key]

    def robin_matrix(self, gamma: float) -> sp.csr_matrix:
        """gamma * [(m x n, z x n) + (m . n, z . n)] on the boundary, full M."""
        key = ("robin", gamma)
        if key not in self._cache:
            d = self.d
            mesh = d.mesh
            M = d.bundle.M
            nl = M.nloc
            n_full = 2 * M.n_scalar
            fdm = self._m_full_dm()
            A = sp.csr_matrix((n_full, n_full))
            for side in range(4):
                faces = np.flatnonzero(mesh.bface_side == side)
                if len(faces) == 0:
                    continue
                n = mesh.bface_normals[faces[0]]
                w = d.bwts[side]
                phi, _ = d.face_tab(M, ("b", side))
                zeros = np.zeros_like(phi)
                # stacked traces: component 0 then component 1
                v1 = np.concatenate([phi, zeros], axis=1)
                v2 = np.concatenate([zeros, phi], axis=1)
                cross = v1 * n[1] - v2 * n[0]
                dotn = v1 * n[0] + v2 * n[1]
                local = gamma * (
                    np.einsum("q,qa,qb->ab", w, cross, cross)
                    + np.einsum("q,qa,qb->ab", w, dotn, dotn))
                dofs = fdm[mesh.bface_cells[faces]]
                A = A + _scatter(dofs, dofs, local, (n_full, n_full))
            self._cache[key] = A.tocsr()
        return self._cache[key]

    # -- velocity-dependent matrices -------------------------------------

    def conv_cont(self, space: FESpace, u: FEFunction) -> sp.csr_matrix:
        """Temam convection scalar block for a continuous space.

        A[i, j] = integral of (u . grad phi_j) phi_i + (1/2)(div u) phi_j phi_i.
        """
        d = self.d
        Uv, Ug = d.sample(u)
        divU = Ug[..., 0, 0] + Ug[..., 1, 1]
        phi, grad = d.tab(space)
        local = np.einsum("q,cqd,qjd,qi->cij", d.wts, Uv, grad, phi)
        local += 0.5 * np.einsum("q,cq,qj,qi->cij", d.wts, divU, phi, phi)
        dm = space.dof_map()
        n = space.n_scalar
        return _scatter(dm, dm, local, (n, n))

    def conv_dg(self, u: FEFunction) -> sp.csr_matrix:
        """Scalar block of the DG convection form on the magnetization space.

        C[i, j] carries the form with the ROW index in the differentiated
        (second) slot: C[i, j] = cell Temam terms of (u, phi_i, phi_j)
        minus face terms (jump phi_i)(avg phi_j)(u . n_F).
        """
        d = self.d
        M = d.bundle.M
        Uv, Ug = d.sample(u)
        divU = Ug[..., 0, 0] + Ug[..., 1, 1]
        phi, grad = d.tab(M)
        local = np.einsum("q,cqd,qid,qj->cij", d.wts, Uv, grad, phi)
        local += 0.5 * np.einsum("q,cq,qi,qj->cij", d.wts, divU, phi, phi)
        dm = M.dof_map()
        n = M.n_scalar
        A = _scatter(dm, dm, local, (n, n))

        for family in (0, 1):
            faces = d.vfaces if family == 0 else d.hfaces
            if len(faces) == 0:
                continue
            un = d.face_trace(u, family, "minus")[..., family]  # (nf, nfq)
            w = d.fwts[family]
            cells = d.mesh.iface_cells[faces]
            for si, sgn_i in (("minus", 1.0), ("plus", -1.0)):
                phi_i, _ = d.face_tab(M, (family, si))
                dofs_i = dm[cells[:, 0 if si == "minus" else 1]]
                for sj, _sgn in (("minus", 1.0), ("plus", 1.0)):
                    phi_j, _ = d.face_tab(M, (family, sj))
                    dofs_j = dm[cells[:, 0 if sj == "minus" else 1]]
                    loc = -0.5 * sgn_i * np.einsum(
                        "q,fq,qi,qj->fij", w, un, phi_i, phi_j)
                    A = A + _scatter(dofs_i, dofs_j, loc, (n, n))
        return A.tocsr()

    def weighted_mass_m(self, wvals: np.ndarray) -> sp.csr_matrix:
        """Scalar M-block of (w phi_j, phi_i) for a sampled weight (nc, nq)."""
        d = self.d
        M = d.bundle.M
        phi, _ = d.tab(M)
        local = np.einsum("q,cq,qi,qj->cij", d.wts, wvals, phi, phi)
        dm = M.dof_map()
        n = M.n_scalar
        return _scatter(dm, dm, local, (n, n))

    def robin_load(self, gamma: float, bvals: np.ndarray) -> np.ndarray:
        """gamma * [(f x n)(z x n) + (f . n)(z . n)] boundary load on full M.

        bvals holds the field at the boundary quadrature points, shape
        (n_bfaces, nfq, 2), ordered like the mesh boundary-face arrays.
        """
        d = self.d
        mesh = d.mesh
        M = d.bundle.M
        out = np.zeros(M.dim)
        fdm = self._m_full_dm()
        for side in range(4):
            faces = np.flatnonzero(mesh.bface_side == side)
            if len(faces) == 0:
                continue
            n = mesh.bface_normals[faces[0]]
            w = d.bwts[side]
            phi, _ = d.face_tab(M, ("b", side))
            zeros = np.zeros_like(phi)
            v1 = np.concatenate([phi, zeros], axis=1)
            v2 = np.concatenate([zeros, phi], axis=1)
            cross = v1 * n[1] - v2 * n[0]
            dotn = v1 * n[0] + v2 * n[1]
            fb = bvals[faces]
            f_cross = fb[..., 0] * n[1] - fb[..., 1] * n[0]
            f_dot = fb[..., 0] * n[0] + fb[..., 1] * n[1]
            local = gamma * (np.einsum("q,fq,qa->fa", w, f_cross, cross)
                             + np.einsum("q,fq,qa->fa", w, f_dot, dotn))
            np.add.at(out, fdm[mesh.bface_cells[faces]].ravel(), local.ravel())
        return out

    # -- load vectors -----------------------------------------------------

    def load(self, space: FESpace, vals: np.ndarray) -> np.ndarray:
        """(f, phi) load vector from samples at cell quadrature points.

        vals has shape (nc, nq) for scalar spaces, (nc, nq, 2) for vector
        spaces; returns a full-dimension vector.
        """
        d = self.d
        phi, _ = d.tab(space)
        dm = space.dof_map()
        out = np.zeros(space.dim)
        for c in range(space.ncomp):
            v = vals if space.ncomp == 1 else vals[..., c]
            local = np.einsum("q,cq,ql->cl", d.wts, v, phi)
            np.add.at(out, c * space.n_scalar + dm.ravel(), local.ravel())
        return out

    def grad_load(self, space: FESpace, vecvals: np.ndarray) -> np.ndarray:
        """(f, grad phi) load for a scalar space; vecvals (nc, nq, 2)."""
        d = self.d
        _, grad = d.tab(space)
        local = np.einsum("q,cqd,qld->cl", d.wts, vecvals, grad)
        out = np.zeros(space.dim)
        np.add.at(out, space.dof_map().ravel(), local.ravel())
        return out

    def kelvin_load(self, h: FEFunction, m: FEFunction) -> np.ndarray:
        """Load r[j] = b_h_m(phi^U_j, h, m) over the full velocity space.

        The Kelvin force functional of the momentum equation; caller scales
        by the permeability.
        """
        d = self.d
        U = d.bundle.U
        Hv, Hg = d.sample(h)
        Mv, _ = d.sample(m)
        hdotm = np.einsum("cqi,cqi->cq", Hv, Mv)
        phi, grad = d.tab(U)
        dm = U.dof_map()
        out = np.zeros(U.dim)
        for c in range(2):
            dH_dot_m = np.einsum("cqi,cqi->cq", Hg[..., c], Mv)
            local = np.einsum("q,cq,ql->cl", d.wts, dH_dot_m, phi)
            local += 0.5 * np.einsum("q,cq,ql->cl", d.wts, hdotm, grad[:, :, c])
            np.add.at(out, c * U.n_scalar + dm.ravel(), local.ravel())
        # internal-face terms: -(jump h . avg m)(V . n_F); only the normal
        # velocity component appears and traces of V are single-valued
        for family in (0, 1):
            faces = d.vfaces if family == 0 else d.hfaces
            if len(faces) == 0:
                continue
            hm = d.face_trace(h, family, "minus")
            hp = d.face_trace(h, family, "plus")
            mm = d.face_trace(m, family, "minus")
            mp = d.face_trace(m, family, "plus")
            jump_avg = np.einsum("fqi,fqi->fq", hm - hp, 0.5 * (mm + mp))
            phi_u, _ = d.face_tab(U, (family, "minus"))
            cells = d.mesh.iface_cells[faces, 0]
            local = -np.einsum("q,fq,ql->fl", d.fwts[family], jump_avg, phi_u)
            np.add.at(out, family * U.n_scalar + dm[cells].ravel(), local.ravel())
        return out


def _face_basis(phi, grad, family: int, nl: int):
    """Stacked vector-basis traces on a face: tangential cross, normal dot,
    curl and div, each of shape (nfq, 2*nl)."""
    zeros = np.zeros_like(phi)
    if family == 0:   # n = (1, 0)
        t = np.concatenate([zeros, phi], axis=1)       # -n2*v1 + n1*v2
        jn = np.concatenate([phi, zeros], axis=1)      # v . n
    else:             # n = (0, 1)
        t = np.concatenate([-phi, zeros], axis=1)
        jn = np.concatenate([zeros, phi], axis=1)
    curl = np.concatenate([-grad[:, :, 1], grad[:, :, 0]], axis=1)
    div = np.concatenate([grad[:, :, 0], grad[:, :, 1]], axis=1)
    return t, jn, curl, div
