"""Implicit, fully coupled time stepping for the ferrofluid system.

Each backward-Euler step is solved by a Picard fixed-point iteration over
three linear stages: (a) magnetization coupled with the magnetostatic
potential, (b) spin, (c) velocity-pressure saddle point.  Transport terms
and the magnetic field entering the force couplings are taken from the
previous iterate, so a converged iterate solves the fully implicit
nonlinear step.

A simplified variant skips the potential solve and takes the magnetic
field to be the interpolated applied field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .assemble import Operators
from .errors import ConfigurationError, StepError
from .fem import FEFunction
from .forms import Discretization
from .linalg import Factorized, pin_dof, project_mean_zero, solve_direct
from .magnetics import PotentialSolver, grad_to_m, sample_field


@dataclass(frozen=True)
class MaterialParams:
    """Material and discretization parameters.

    nu: fluid viscosity, nu_r: vortex viscosity, mu0: permeability,
    j_inertia: microinertia density, c1: spin diffusion, sigma: DG
    magnetization diffusion, relax_time: magnetization relaxation time,
    kappa0: equilibrium susceptibility, gamma: boundary penalty of the
    diffusive magnetization term, eta: interior-penalty constant.
    """

    nu: float = 1.0
    nu_r: float = 1.0
    mu0: float = 1.0
    j_inertia: float = 1.0
    c1: float = 1.0
    sigma: float = 0.0
    relax_time: float = 1.0
    kappa0: float = 1.0
    gamma: float = 1.0
    eta: float | None = None

    def __post_init__(self):
        for name in ("nu", "mu0", "j_inertia", "c1", "relax_time"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("nu_r", "sigma", "kappa0", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")

    @property
    def nu0(self) -> float:
        return self.nu + self.nu_r


@dataclass
class State:
    """Discrete fields at one time level."""

    k: int
    t: float
    u: FEFunction
    p: FEFunction
    w: FEFunction
    m: FEFunction
    phi: FEFunction
    H: FEFunction

    def copy(self) -> "State":
        return State(self.k, self.t, self.u.copy(), self.p.copy(),
                     self.w.copy(), self.m.copy(), self.phi.copy(),
                     self.H.copy())


@dataclass
class SourceSet:
    """Forcing callables (x, y, t); vector ones return a component pair."""

    f_u: object = None
    f_w: object = None
    f_m: object = None


@dataclass
class StepInfo:
    iterations: int
    increment: float
    relaxation: float


class Stepper:
    """Advances the coupled system by implicit steps of size tau."""

    def __init__(self, disc: Discretization, params: MaterialParams,
                 applied_field=None, sources: SourceSet | None = None,
                 scheme: str = "coupled", picard_tol: float = 1e-9,
                 picard_max: int = 100, bc_u=None, bc_w=None):
        if scheme not in ("coupled", "simplified"):
            raise ConfigurationError(f"unknown scheme '{scheme}'")
        self.disc = disc
        self.ops = Operators(disc)
        self.params = params
        self.applied_field = applied_field
        self.sources = sources or SourceSet()
        self.scheme = scheme
        self.picard_tol = picard_tol
        self.picard_max = picard_max
        self.bc_u = bc_u
        self.bc_w = bc_w
        b = disc.bundle
        self.b = b

        self.dir_u = b.U.dirichlet_dofs()
        self.dir_w = b.W.dirichlet_dofs()
        self.free_u = np.setdiff1d(np.arange(b.U.dim), self.dir_u)
        self.free_w = np.setdiff1d(np.arange(b.W.dim), self.dir_w)
        self.n_m = b.M.n_scalar

        ops = self.ops
        self.mass_u = sp.block_diag([ops.mass(b.U)] * 2).tocsr()
        self.mass_w = ops.mass(b.W)
        self.mass_m2 = sp.block_diag([ops.mass(b.M)] * 2).tocsr()
        self.stiff_u = sp.block_diag([ops.stiffness(b.U)] * 2).tocsr()
        self.stiff_w = ops.stiffness(b.W)
        self.stiff_x = ops.stiffness(b.X)
        self.B = ops.divergence()
        self.G = ops.grad_coupling()
        self.curl_wu = ops.curl_w_to_u()
        self.curl_uw = ops.curl_u_to_w()
        if params.sigma > 0:
            self.ah = ops.ah_matrix(params.eta if params.eta is not None
                                    else disc.eta)
            self.robin = (ops.robin_matrix(params.gamma)
                          if params.gamma > 0 else None)
        else:
            self.ah = None
            self.robin = None
        self.x_weights = b.X.mass_lumped_weights()
        self.p_weights = b.P.mass_lumped_weights()
        self.potential = PotentialSolver(disc, ops) if scheme == "coupled" \
            else None

    # -- applied field --------------------------------------------------

    def ha_quad(self, t: float) -> np.ndarray:
        """Applied field at the cell quadrature points, shape (nc, nq, 2)."""
        return sample_field(self.disc, self.applied_field, t)

    def ha_boundary(self, t: float) -> np.ndarray:
        """Applied field at boundary-face quadrature points."""
        pts = self.disc.bface_qpts()
        if self.applied_field is None:
            return np.zeros_like(pts)
        return np.asarray(self.applied_field(t, pts), dtype=float)

    def interp_ha(self, t: float) -> FEFunction:
        """Applied field interpolated into the magnetization space."""
        M = self.b.M
        pts = M.scalar_node_coords()
        if self.applied_field is None:
            vals = np.zeros_like(pts)
        else:
            vals = np.asarray(self.applied_field(t, pts), dtype=float)
        return FEFunction(M, np.concatenate([vals[:, 0], vals[:, 1]]))

    # -- initialization -------------------------------------------------

    def initialize(self, t0: float = 0.0, u0=None, w0=None, m0=None) -> State:
        """Interpolates initial data and solves for the initial field."""
        b = self.b
        u = b.U.interpolate(u0) if u0 is not None else b.U.zero()
        if self.bc_u is None:
            u.apply_dirichlet()
        w = b.W.interpolate(w0) if w0 is not None else b.W.zero()
        if self.bc_w is None:
            w.apply_dirichlet()
        m = b.M.interpolate(m0) if m0 is not None else b.M.zero()
        if self.scheme == "coupled":
            phi, H = self.potential.solve(m, self.ha_quad(t0))
        else:
            phi = b.X.zero()
            H = self.interp_ha(t0)
        return State(0, t0, u, b.P.zero(), w, m, phi, H)

    # -- sources --------------------------------------------------------

    def _source_quad(self, fn, t: float, vector: bool):
        if fn is None:
            return None
        q = self.disc.qpts
        if vector:
            v1, v2 = fn(q[..., 0], q[..., 1], t)
            return np.stack([np.broadcast_to(v1, q.shape[:2]),
                             np.broadcast_to(v2, q.shape[:2])], axis=-1)
        return np.broadcast_to(fn(q[..., 0], q[..., 1], t), q.shape[:2]).copy()

    # -- Picard stages --------------------------------------------------

    def _stage_magnetization(self, tau, m_old, u_lag, w_lag, ha_q, ha_b, fm_q):
        """Magnetization update; coupled variant also returns phi and H."""
        pr = self.params
        ops = self.ops
        nM = 2 * self.n_m

        conv = ops.conv_dg(u_lag)
        wv, _ = self.disc.sample(w_lag)
        S = ops.weighted_mass_m(wv)
        zero = sp.csr_matrix((self.n_m, self.n_m))
        cross = sp.bmat([[zero, S], [-S, zero]]).tocsr()
        A_mm = ((1.0 + tau / pr.relax_time) * self.mass_m2
                - tau * sp.block_diag([conv] * 2).tocsr()
                + tau * cross)
        if self.ah is not None:
            A_mm = A_mm + tau * pr.sigma * self.ah
            if self.robin is not None:
                A_mm = A_mm + tau * pr.sigma * self.robin

        rhs_m = self.mass_m2 @ m_old.coeffs
        if fm_q is not None:
            rhs_m = rhs_m + tau * ops.load(self.b.M, fm_q)
        if self.ah is not None and self.robin is not None and pr.kappa0 > 0:
            rhs_m = rhs_m + tau * pr.sigma * pr.kappa0 * ops.robin_load(
                pr.gamma, ha_b)

        if self.scheme == "simplified":
            h_known = self.interp_ha_cached
            rhs_m = rhs_m + (tau * pr.kappa0 / pr.relax_time) * (
                self.mass_m2 @ h_known.coeffs)
            coeffs = solve_direct(A_mm, rhs_m, label="magnetization system")
            return FEFunction(self.b.M, coeffs), None, h_known

        nX = self.b.X.dim
        A = sp.bmat([
            [A_mm, -(tau * pr.kappa0 / pr.relax_time) * self.G],
            [self.G.T, self.stiff_x],
        ]).tocsr()
        rhs = np.concatenate([rhs_m, ops.grad_load(self.b.X, ha_q)])
        A = pin_dof(A, nM)
        rhs[nM] = 0.0
        sol = solve_direct(A, rhs, label="magnetization-potential system")
        m = FEFunction(self.b.M, sol[:nM])
        phi = FEFunction(self.b.X, project_mean_zero(self.x_weights, sol[nM:]))
        return m, phi, grad_to_m(self.disc, phi)

    def _stage_spin(self, tau, w_old, u_lag, h_lag, m_new, fw_q):
        pr = self.params
        ops = self.ops
        A = ((pr.j_inertia / tau) * self.mass_w
             + pr.j_inertia * ops.conv_cont(self.b.W, u_lag)
             + pr.c1 * self.stiff_w
             + 4.0 * pr.nu_r * self.mass_w)
        rhs = ((pr.j_inertia / tau) * (self.mass_w @ w_old.coeffs)
               + 2.0 * pr.nu_r * (self.curl_uw @ u_lag.coeffs))
        mv, _ = self.disc.sample(m_new)
        hv, _ = self.disc.sample(h_lag)
        torque = mv[..., 0] * hv[..., 1] - mv[..., 1] * hv[..., 0]
        rhs = rhs + pr.mu0 * ops.load(self.b.W, torque)
        if fw_q is not None:
            rhs = rhs + ops.load(self.b.W, fw_q)
        fr, dd = self.free_w, self.dir_w
        coeffs = np.zeros(self.b.W.dim)
        rhs_f = rhs[fr]
        if self.bc_w is not None:
            g = self.b.W.interpolate(
                lambda x, y: self.bc_w(x, y, self._t_stage)).coeffs
            coeffs[dd] = g[dd]
            rhs_f = rhs_f - A[fr][:, dd] @ g[dd]
        coeffs[fr] = solve_direct(A[fr][:, fr], rhs_f, label="spin system")
        return FEFunction(self.b.W, coeffs)

    def _stage_velocity(self, tau, u_old, u_lag, h_lag, m_new, w_new, fu_q):
        pr = self.params
        ops = self.ops
        conv = ops.conv_cont(self.b.U, u_lag)
        A_uu = ((1.0 / tau) * self.mass_u
                + sp.block_diag([conv] * 2).tocsr()
                + pr.nu0 * self.stiff_u)
        rhs_u = ((1.0 / tau) * (self.mass_u @ u_old.coeffs)
                 + 2.0 * pr.nu_r * (self.curl_wu @ w_new.coeffs)
                 + pr.mu0 * ops.kelvin_load(h_lag, m_new))
        if fu_q is not None:
            rhs_u = rhs_u + ops.load(self.b.U, fu_q)

        fr, dd = self.free_u, self.dir_u
        nP = self.b.P.dim
        Bf = self.B[:, fr]
        A = sp.bmat([[A_uu[fr][:, fr], -Bf.T], [Bf, None]]).tocsr()
        rhs_f = rhs_u[fr]
        rhs_c = np.zeros(nP)
        u = np.zeros(self.b.U.dim)
        if self.bc_u is not None:
            g = self.b.U.interpolate(
                lambda x, y: self.bc_u(x, y, self._t_stage)).coeffs
            u[dd] = g[dd]
            rhs_f = rhs_f - A_uu[fr][:, dd] @ g[dd]
            rhs_c = rhs_c - self.B[:, dd] @ g[dd]
        rhs = np.concatenate([rhs_f, rhs_c])
        nfu = len(fr)
        A = pin_dof(A, nfu)
        rhs[nfu] = 0.0
        sol = solve_direct(A, rhs, label="velocity-pressure system")
        u[fr] = sol[:nfu]
        p = project_mean_zero(self.p_weights, sol[nfu:])
        return FEFunction(self.b.U, u), FEFunction(self.b.P, p)

    # -- one step -------------------------------------------------------

    def step(self, state: State, tau: float) -> tuple[State, StepInfo]:
        """Advances from state.t to state.t + tau."""
        if tau <= 0:
            raise ConfigurationError("time step must be positive")
        pr = self.params
        t_new = state.t + tau
        self._t_stage = t_new
        ha_q = self.ha_quad(t_new)
        ha_b = (self.ha_boundary(t_new)
                if (self.ah is not None and self.robin is not None) else None)
        if self.scheme == "simplified":
            self.interp_ha_cached = self.interp_ha(t_new)
        fu_q = self._source_quad(self.sources.f_u, t_new, True)
        fw_q = self._source_quad(self.sources.f_w, t_new, False)
        fm_q = self._source_quad(self.sources.f_m, t_new, True)

        u_it, w_it, h_it = state.u, state.w, state.H
        m_it, phi_it, p_it = state.m, state.phi, state.p
        theta = 1.0
        prev_inc = None
        halvings = 0
        for it in range(1, self.picard_max + 1):
            m_new, phi_new, h_new = self._stage_magnetization(
                tau, state.m, u_it, w_it, ha_q, ha_b, fm_q)
            w_new = self._stage_spin(tau, state.w, u_it, h_it, m_new, fw_q)
            u_new, p_new = self._stage_velocity(
                tau, state.u, u_it, h_it, m_new, w_new, fu_q)

            if theta != 1.0:
                u_new = FEFunction(self.b.U, u_it.coeffs
                                   + theta * (u_new.coeffs - u_it.coeffs))
                w_new = FEFunction(self.b.W, w_it.coeffs
                                   + theta * (w_new.coeffs - w_it.coeffs))
                m_new = FEFunction(self.b.M, m_it.coeffs
                                   + theta * (m_new.coeffs - m_it.coeffs))
                h_new = FEFunction(self.b.M, h_it.coeffs
                                   + theta * (h_new.coeffs - h_it.coeffs))

            inc2 = (self._m_norm2(self.mass_u, u_new.coeffs - u_it.coeffs)
                    + pr.j_inertia * self._m_norm2(
                        self.mass_w, w_new.coeffs - w_it.coeffs)
                    + pr.mu0 * self._m_norm2(
                        self.mass_m2, m_new.coeffs - m_it.coeffs)
                    + pr.mu0 * self._m_norm2(
                        self.mass_m2, h_new.coeffs - h_it.coeffs))
            ref2 = (self._m_norm2(self.mass_u, u_new.coeffs)
                    + pr.j_inertia * self._m_norm2(self.mass_w, w_new.coeffs)
                    + pr.mu0 * self._m_norm2(self.mass_m2, m_new.coeffs)
                    + pr.mu0 * self._m_norm2(self.mass_m2, h_new.coeffs))
            inc = np.sqrt(inc2) / max(np.sqrt(ref2), 1e-30)

            u_it, w_it, m_it, h_it, p_it = u_new, w_new, m_new, h_new, p_new
            if phi_new is not None:
                phi_it = phi_new
            if inc < self.picard_tol:
                return (State(state.k + 1, t_new, u_it, p_it, w_it, m_it,
                              phi_it, h_it),
                        StepInfo(it, inc, theta))
            if prev_inc is not None and inc > prev_inc and halvings < 3:
                theta *= 0.5
                halvings += 1
            prev_inc = inc
        raise StepError(
            f"fixed-point iteration did not converge in {self.picard_max} "
            f"iterations at t = {t_new:.6g} (last increment {inc:.3e})")

    @staticmethod
    def _m_norm2(Mmat, v) -> float:
        return float(v @ (Mmat @ v))

    # -- run loop -------------------------------------------------------

    def run(self, state: State, tau: float, n_steps: int,
            store_every: int = 0, callback=None):
        """Runs n_steps; returns (final state, list of StepInfo, snapshots).

        Snapshots are (state copies) every `store_every` steps when the
        cadence is positive, always including the initial state.
        """
        infos = []
        snaps = [state.copy()] if store_every else []
        for k in range(n_steps):
            state, info = self.step(state, tau)
            infos.append(info)
            if store_every and (state.k % store_every == 0 or k == n_steps - 1):
                snaps.append(state.copy())
            if callback is not None:
                callback(state, info)
        return state, infos, snaps
