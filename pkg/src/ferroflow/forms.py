"""Discrete variational forms in their planar (2D) reduction.

Planar conventions, fixed once by embedding the plane in 3D:
  curl u = dx(u2) - dy(u1)            (scalar, for vector u)
  curl w = (dy(w), -dx(w))            (vector, for scalar w)
  m x h  = m1*h2 - m2*h1              (scalar)
  w x m  = w*(-m2, m1)                (vector, w scalar)
  s x n  = s*(-n2, n1)                (vector, s scalar, e.g. s = curl m)
  a x n  = a1*n2 - a2*n1              (scalar, for vectors a, n)

The `Discretization` class caches quadrature rules and shape-function
tables shared by every cell of the uniform mesh; both the form-value
functions here and the matrix assembly in `assemble` are built on it.

Jumps on internal faces are minus-trace minus plus-trace, averages the
arithmetic mean, with the face normal pointing from the minus cell to the
plus cell (see `mesh`).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .fem import FEFunction, SpaceBundle, cell_quadrature


class Discretization:
    """Quadrature data and shape tables for one space bundle.

    Cell rule: tensor Gauss with (degree+2) points per direction, exact for
    every polynomial integrand assembled here, which is what makes the
    skew-symmetry and curl-pairing identities hold to machine precision.
    Face rule: (degree+2)-point Gauss per face.
    """

    def __init__(self, bundle: SpaceBundle, eta: float | None = None):
        self.bundle = bundle
        self.mesh = bundle.mesh
        self.degree = bundle.degree
        self.eta = 10.0 * bundle.degree ** 2 if eta is None else float(eta)
        if self.eta <= 0:
            raise ConfigurationError(f"penalty must be positive, got {self.eta}")
        mesh = self.mesh

        nq1 = bundle.degree + 2
        self.ref, self.wts = cell_quadrature(mesh, nq1)
        self.nq = len(self.wts)
        self.qpts = mesh.ref_to_phys(np.arange(mesh.n_cells), self.ref)

        # one shape table per distinct degree (U, W, M, X share degree l)
        self._tab = {}
        for sp in (bundle.U, bundle.P, bundle.W, bundle.M, bundle.X):
            if sp.degree not in self._tab:
                self._tab[sp.degree] = sp.tabulate(self.ref)

        # face quadrature: reference edge coordinates per family and side
        t, w1 = np.polynomial.legendre.leggauss(nq1)
        self.nfq = nq1
        self._ft = t
        self._fw = w1
        ones = np.ones_like(t)
        # family 0: vertical faces (normal +x); family 1: horizontal (+y)
        self._face_ref = {
            (0, "minus"): np.column_stack([ones, t]),
            (0, "plus"): np.column_stack([-ones, t]),
            (1, "minus"): np.column_stack([t, ones]),
            (1, "plus"): np.column_stack([t, -ones]),
            # boundary sides: 0 left, 1 right, 2 bottom, 3 top
            ("b", 0): np.column_stack([-ones, t]),
            ("b", 1): np.column_stack([ones, t]),
            ("b", 2): np.column_stack([t, -ones]),
            ("b", 3): np.column_stack([t, ones]),
        }
        self._face_tab = {}

        self.vfaces = np.flatnonzero(mesh.iface_axis == 0)
        self.hfaces = np.flatnonzero(mesh.iface_axis == 1)
        # physical quadrature weights per family (all faces in a family
        # share the same length on a uniform mesh)
        self.fwts = {0: w1 * (mesh.dy / 2.0), 1: w1 * (mesh.dx / 2.0)}
        self.face_h = {0: mesh.dy, 1: mesh.dx}
        self.bwts = {0: w1 * (mesh.dy / 2.0), 1: w1 * (mesh.dy / 2.0),
                     2: w1 * (mesh.dx / 2.0), 3: w1 * (mesh.dx / 2.0)}

    def tab(self, space):
        return self._tab[space.degree]

    def face_tab(self, space, key):
        """Shape table of `space` on a face-family edge, cached."""
        k = (space.degree, key)
        if k not in self._face_tab:
            self._face_tab[k] = space.tabulate(self._face_ref[key])
        return self._face_tab[k]

    def face_qpts(self, family: int) -> np.ndarray:
        """Physical quadrature points of every internal face of a family."""
        mesh = self.mesh
        faces = self.vfaces if family == 0 else self.hfaces
        p0 = mesh.iface_p0[faces]
        p1 = mesh.iface_p1[faces]
        s = (self._ft + 1.0) / 2.0
        return p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]

    def bface_qpts(self) -> np.ndarray:
        mesh = self.mesh
        s = (self._ft + 1.0) / 2.0
        return mesh.bface_p0[:, None, :] + s[None, :, None] * (
            mesh.bface_p1 - mesh.bface_p0)[:, None, :]

    # -- field sampling -------------------------------------------------

    def sample(self, fn: FEFunction):
        """Values and gradients of fn at every cell quadrature point.

        Scalar space: vals (nc, nq), grads (nc, nq, 2).
        Vector space: vals (nc, nq, 2), grads (nc, nq, 2, 2) with
        grads[..., i, j] = d(comp i)/d(x_j).
        """
        phi, grad = self.tab(fn.space)
        dm = fn.space.dof_map()
        vs, gs = [], []
        for c in range(fn.space.ncomp):
            loc = fn.component(c)[dm]
            vs.append(np.einsum("cl,ql->cq", loc, phi))
            gs.append(np.einsum("cl,qld->cqd", loc, grad))
        if fn.space.ncomp == 1:
            return vs[0], gs[0]
        return np.stack(vs, axis=-1), np.stack(gs, axis=-2)

    def face_trace(self, fn: FEFunction, family: int, side: str,
                   with_grad: bool = False):
        """Trace of fn on one side of every internal face of a family."""
        faces = self.vfaces if family == 0 else self.hfaces
        cells = self.mesh.iface_cells[faces, 0 if side == "minus" else 1]
        phi, grad = self.face_tab(fn.space, (family, side))
        dm = fn.space.dof_map(cells)
        vs, gs = [], []
        for c in range(fn.space.ncomp):
            loc = fn.component(c)[dm]
            vs.append(np.einsum("fl,ql->fq", loc, phi))
            if with_grad:
                gs.append(np.einsum("fl,qld->fqd", loc, grad))
        if fn.space.ncomp == 1:
            return (vs[0], gs[0]) if with_grad else vs[0]
        v = np.stack(vs, axis=-1)
        if with_grad:
            return v, np.stack(gs, axis=-2)
        return v

    def div_curl_trace(self, fn: FEFunction, family: int, side: str):
        """(div, curl) traces of a vector function on internal faces."""
        _, g = self.face_trace(fn, family, side, with_grad=True)
        div = g[..., 0, 0] + g[..., 1, 1]
        curl = g[..., 1, 0] - g[..., 0, 1]
        return div, curl

    def boundary_trace(self, fn: FEFunction):
        """Trace of fn at quadrature points of every boundary face."""
        mesh = self.mesh
        out = np.zeros((len(mesh.bface_cells), self.nfq, fn.space.ncomp))
        for side in range(4):
            faces = np.flatnonzero(mesh.bface_side == side)
            if len(faces) == 0:
                continue
            phi, _ = self.face_tab(fn.space, ("b", side))
            dm = fn.space.dof_map(mesh.bface_cells[faces])
            for c in range(fn.space.ncomp):
                loc = fn.component(c)[dm]
                out[faces, :, c] = np.einsum("fl,ql->fq", loc, phi)
        return out if fn.space.ncomp > 1 else out[..., 0]

    # -- L2 quantities ---------------------------------------------------

    def integrate(self, cellwise) -> float:
        """Sum of w_q * f(x_q) over all cells; cellwise has shape (nc, nq)."""
        return float(np.einsum("cq,q->", cellwise, self.wts))

    def l2norm2(self, fn: FEFunction) -> float:
        v, _ = self.sample(fn)
        if fn.space.ncomp == 1:
            return self.integrate(v * v)
        return self.integrate(np.einsum("cqi,cqi->cq", v, v))

    def grad_norm2(self, fn: FEFunction) -> float:
        _, g = self.sample(fn)
        g2 = (g * g).reshape(g.shape[0], g.shape[1], -1).sum(axis=-1)
        return self.integrate(g2)

    def div_field(self, fn: FEFunction):
        _, g = self.sample(fn)
        return g[..., 0, 0] + g[..., 1, 1]

    def curl_field(self, fn: FEFunction):
        _, g = self.sample(fn)
        return g[..., 1, 0] - g[..., 0, 1]

    # -- convection forms -------------------------------------------------

    def b_h(self, u: FEFunction, v: FEFunction, w: FEFunction) -> float:
        """Temam-modified convection for continuous arguments.

        Integral of (u.grad)v . w + (1/2)(div u)(v . w); exactly skew in
        (v, w) because the quadrature is exact.
        """
        if v.space.mesh is not w.space.mesh or u.space.mesh is not v.space.mesh:
            raise ConfigurationError("form arguments live on different meshes")
        Uv, Ug = self.sample(u)
        divU = Ug[..., 0, 0] + Ug[..., 1, 1]
        Vv, Vg = self.sample(v)
        Wv, _ = self.sample(w)
        if v.space.ncomp == 1:
            conv = np.einsum("cqd,cqd->cq", Uv, Vg) * Wv
            dot = Vv * Wv
        else:
            conv = np.einsum("cqd,cqid,cqi->cq", Uv, Vg, Wv)
            dot = np.einsum("cqi,cqi->cq", Vv, Wv)
        return self.integrate(conv + 0.5 * divU * dot)

    def b_h_m(self, u: FEFunction, v: FEFunction, w: FEFunction) -> float:
        """DG convection form: Temam cell terms minus the internal-face
        consistency terms (jump(v) . avg(w)) (u . n_F)."""
        total = self.b_h(u, v, w)
        for family in (0, 1):
            vm = self.face_trace(v, family, "minus")
            vp = self.face_trace(v, family, "plus")
            wm = self.face_trace(w, family, "minus")
            wp = self.face_trace(w, family, "plus")
            un = self.face_trace(u, family, "minus")[..., family]
            jump = vm - vp
            avg = 0.5 * (wm + wp)
            if v.space.ncomp == 1:
                jump_avg = jump * avg
            else:
                jump_avg = np.einsum("fqi,fqi->fq", jump, avg)
            total -= np.einsum("fq,fq,q->", jump_avg, un, self.fwts[family])
        return total

    # -- interior penalty vector Laplacian --------------------------------

    def _ip_part(self, m: FEFunction, z: FEFunction, eta: float, kind: str) -> float:
        """One interior-penalty half of a_h: kind is 'curl' or 'div'."""
        dM = self.div_field(m)
        dZ = self.div_field(z)
        cM = self.curl_field(m)
        cZ = self.curl_field(z)
        if kind == "curl":
            total = self.integrate(cM * cZ)
        else:
            total = self.integrate(dM * dZ)
        for family in (0, 1):
            n = np.zeros(2)
            n[family] = 1.0
            jm = self.face_trace(m, family, "minus") - \
                self.face_trace(m, family, "plus")
            jz = self.face_trace(z, family, "minus") - \
                self.face_trace(z, family, "plus")
            dm_m, cm_m = self.div_curl_trace(m, family, "minus")
            dm_p, cm_p = self.div_curl_trace(m, family, "plus")
            dz_m, cz_m = self.div_curl_trace(z, family, "minus")
            dz_p, cz_p = self.div_curl_trace(z, family, "plus")
            w = self.fwts[family]
            hF = self.face_h[family]
            if kind == "curl":
                # (avg(curl) x n) . jump = avg_s * (-n2*j1 + n1*j2)
                tm = -n[1] * jm[..., 0] + n[0] * jm[..., 1]
                tz = -n[1] * jz[..., 0] + n[0] * jz[..., 1]
                cons = 0.5 * (cm_m + cm_p) * tz + 0.5 * (cz_m + cz_p) * tm
                # tangential jump scalar: jump x n = j1*n2 - j2*n1 = -t
                pen = (eta / hF) * tm * tz
            else:
                jmn = jm[..., family]
                jzn = jz[..., family]
                cons = 0.5 * (dm_m + dm_p) * jzn + 0.5 * (dz_m + dz_p) * jmn
                pen = (eta / hF) * jmn * jzn
            total += np.einsum("fq,q->", pen - cons, w)
        return total

    def curl_pairing(self, m: FEFunction, z: FEFunction, eta: float | None = None) -> float:
        return self._ip_part(m, z, self.eta if eta is None else eta, "curl")

    def div_pairing(self, m: FEFunction, z: FEFunction, eta: float | None = None) -> float:
        return self._ip_part(m, z, self.eta if eta is None else eta, "div")

    def a_h(self, m: FEFunction, z: FEFunction, eta: float | None = None) -> float:
        """Interior-penalty vector Laplacian: curl part plus div part."""
        e = self.eta if eta is None else eta
        return self._ip_part(m, z, e, "curl") + self._ip_part(m, z, e, "div")

    def dg_seminorm(self, m: FEFunction) -> float:
        """Broken curl/div norm plus 1/h_F-weighted jump norms, square-rooted."""
        dM = self.div_field(m)
        cM = self.curl_field(m)
        total = self.integrate(dM * dM + cM * cM)
        for family in (0, 1):
            jm = self.face_trace(m, family, "minus") - \
                self.face_trace(m, family, "plus")
            w = self.fwts[family]
            hF = self.face_h[family]
            jn = jm[..., family]
            n = np.zeros(2)
            n[family] = 1.0
            jt = jm[..., 0] * n[1] - jm[..., 1] * n[0]
            total += np.einsum("fq,q->", (jn * jn + jt * jt) / hF, w)
        return float(np.sqrt(max(total, 0.0)))

    # -- Robin boundary terms ---------------------------------------------

    def robin_boundary_forms(self, m: FEFunction, z: FEFunction, h: FEFunction,
                             sigma: float, gamma: float, kappa0: float):
        """Boundary alignment terms of the magnetization equation.

        Returns (left, right): left is the bilinear part
        sigma*gamma*[(m x n, z x n) + (m . n, z . n)] on the boundary,
        right the analogous load with kappa0*h in place of m.
        """
        if sigma == 0.0 or gamma == 0.0:
            return 0.0, 0.0
        mesh = self.mesh
        mt = self.boundary_trace(m)
        zt = self.boundary_trace(z)
        ht = self.boundary_trace(h)
        left = right = 0.0
        for side in range(4):
            faces = np.flatnonzero(mesh.bface_side == side)
            if len(faces) == 0:
                continue
            n = mesh.bface_normals[faces[0]]
            w = self.bwts[side]

            def cross_n(v):
                return v[..., 0] * n[1] - v[..., 1] * n[0]

            def dot_n(v):
                return v[..., 0] * n[0] + v[..., 1] * n[1]

            zc, zn = cross_n(zt[faces]), dot_n(zt[faces])
            left += np.einsum("fq,q->", cross_n(mt[faces]) * zc + dot_n(mt[faces]) * zn, w)
            right += np.einsum("fq,q->", cross_n(ht[faces]) * zc + dot_n(ht[faces]) * zn, w)
        return sigma * gamma * left, sigma * gamma * kappa0 * right
