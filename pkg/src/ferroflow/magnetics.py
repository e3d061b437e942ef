"""Applied dipole fields and the magnetostatic potential solve.

The applied magnetizing field is a superposition of point dipoles whose
intensity, position and orientation may depend on time.  The demagnetizing
correction is obtained from a scalar potential solved on the potential
space with natural boundary conditions; the resulting field H = grad(Phi)
is interpolated into the magnetization space, exactly, because gradients
of potential-space functions lie in it cellwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, FerroflowError
from .fem import FEFunction
from .forms import Discretization
from .linalg import Factorized, pin_dof, project_mean_zero


def dipole_field(x, position, direction, dim: int = 2, alpha: float = 1.0):
    """Field grad(phi_s) of a point dipole, phi_s = d.(x_s - x)/|x_s - x|^dim.

    x may be a single point or an (..., dim) array; returns matching shape.
    The field is harmonic away from the singularity at x = x_s.
    """
    if dim not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {dim}")
    x = np.asarray(x, dtype=float)
    xs = np.asarray(position, dtype=float)
    d = np.asarray(direction, dtype=float)
    r = x - xs
    R2 = np.sum(r * r, axis=-1)
    if np.any(R2 == 0.0):
        raise FerroflowError("dipole field evaluated at its singular point")
    p = float(dim)
    Rp = R2 ** (p / 2.0)
    dr = np.sum(d * r, axis=-1)
    grad = -d / Rp[..., None] + p * (dr / (R2 * Rp))[..., None] * r
    return alpha * grad


def dipole_potential(x, position, direction, dim: int = 2, alpha: float = 1.0):
    """Scalar dipole potential (for harmonicity checks)."""
    x = np.asarray(x, dtype=float)
    r = x - np.asarray(position, dtype=float)
    R2 = np.sum(r * r, axis=-1)
    p = float(dim)
    return alpha * (-np.sum(np.asarray(direction) * r, axis=-1)) / R2 ** (p / 2.0)


@dataclass
class Dipole:
    """One dipole; position/direction/intensity are constants or callables of t."""

    position: object
    direction: object
    intensity: object = 1.0

    def at(self, t: float):
        pos = np.asarray(self.position(t) if callable(self.position)
                         else self.position, dtype=float)
        dirn = np.asarray(self.direction(t) if callable(self.direction)
                          else self.direction, dtype=float)
        nrm = np.linalg.norm(dirn)
        if nrm == 0:
            raise ConfigurationError("dipole direction must be nonzero")
        alpha = float(self.intensity(t) if callable(self.intensity)
                      else self.intensity)
        return pos, dirn / nrm, alpha


@dataclass
class FieldSchedule:
    """Applied field h_a(t, x) as a sum of scheduled dipoles."""

    dipoles: list = field(default_factory=list)

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for dp in self.dipoles:
            pos, dirn, alpha = dp.at(t)
            if alpha != 0.0:
                out += dipole_field(x, pos, dirn, dim=x.shape[-1], alpha=alpha)
        return out

    def validate_outside(self, mesh, times) -> None:
        """Reject dipoles that enter the closed domain at any sample time."""
        for dp in self.dipoles:
            for t in np.atleast_1d(times):
                pos, _, _ = dp.at(float(t))
                if (mesh.xmin <= pos[0] <= mesh.xmax
                        and mesh.ymin <= pos[1] <= mesh.ymax):
                    raise ConfigurationError(
                        f"dipole at {tuple(pos)} lies inside the domain at t={t}"
                    )


def grad_to_m(disc: Discretization, phi: FEFunction) -> FEFunction:
    """Nodal interpolation of grad(phi) into the magnetization space.

    Exact, since the gradient of a potential-space function is a
    magnetization-space function on every cell.
    """
    b = disc.bundle
    nodes = b.M.nodes_1d
    n1 = len(nodes)
    ref = np.column_stack([np.tile(nodes, n1), np.repeat(nodes, n1)])
    _, gX = b.X.tabulate(ref)
    loc = phi.coeffs[b.X.dof_map()]
    Hc = np.einsum("cl,nld->cnd", loc, gX)
    return FEFunction(b.M, np.concatenate([Hc[..., 0].ravel(), Hc[..., 1].ravel()]))


class PotentialSolver:
    """Solves (grad Phi, grad X) = (h_a - M, grad X) with a pinned-DOF gauge."""

    def __init__(self, disc: Discretization, ops):
        self.disc = disc
        self.ops = ops
        X = disc.bundle.X
        L = pin_dof(ops.stiffness(X), 0)
        self._lu = Factorized(L, label="potential system")
        self._weights = X.mass_lumped_weights()

    def solve(self, m: FEFunction, ha_quad: np.ndarray):
        """Returns (Phi, H) for magnetization m and applied-field samples.

        ha_quad holds h_a at the cell quadrature points, shape (nc, nq, 2).
        """
        d = self.disc
        X = d.bundle.X
        mv, _ = d.sample(m)
        rhs = self.ops.grad_load(X, ha_quad - mv)
        rhs[0] = 0.0
        phi = FEFunction(X, project_mean_zero(self._weights, self._lu.solve(rhs)))
        H = grad_to_m(d, phi)
        return phi, H

    def identity_residual(self, phi: FEFunction, H: FEFunction,
                          m: FEFunction, ha_quad: np.ndarray) -> float:
        """| ||H||^2 - (h_a - M, H) |, which vanishes at the discrete solution."""
        d = self.disc
        Hv, _ = d.sample(H)
        mv, _ = d.sample(m)
        h2 = d.integrate(np.einsum("cqi,cqi->cq", Hv, Hv))
        rhs = d.integrate(np.einsum("cqi,cqi->cq", ha_quad - mv, Hv))
        return abs(h2 - rhs)


def sample_field(disc: Discretization, schedule_or_fn, t: float) -> np.ndarray:
    """Applied field at every cell quadrature point, shape (nc, nq, 2)."""
    if schedule_or_fn is None:
        return np.zeros_like(disc.qpts)
    if isinstance(schedule_or_fn, FieldSchedule):
        return schedule_or_fn(t, disc.qpts)
    return np.asarray(schedule_or_fn(t, disc.qpts), dtype=float)
