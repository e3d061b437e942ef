"""Manufactured analytic fields and matching forcing terms.

The analytic fields below satisfy the coupled momentum / spin /
magnetization / potential system once the forcing terms produced here are
added to the right-hand sides.  The forcings are derived symbolically and
lambdified once per parameter set; the potential equation is kept exactly
consistent by using grad(phi) + m as the effective applied field.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sym


@dataclass(frozen=True)
class ManufacturedCase:
    """Callables (x, y, t) -> value for the exact fields and forcings.

    Vector-valued entries return a pair of arrays.
    """

    u: object
    p: object
    w: object
    m: object
    phi: object
    grad_phi: object
    f_u: object
    f_w: object
    f_m: object
    h_applied: object


def _lambdify_scalar(expr, x, y, t):
    f = sym.lambdify((x, y, t), expr, "numpy")

    def wrapped(xv, yv, tv):
        return np.broadcast_to(
            np.asarray(f(xv, yv, tv), dtype=float),
            np.broadcast_shapes(np.shape(xv), np.shape(yv)),
        ).copy()

    return wrapped


def _lambdify_vector(exprs, x, y, t):
    fs = [_lambdify_scalar(e, x, y, t) for e in exprs]

    def wrapped(xv, yv, tv):
        return tuple(f(xv, yv, tv) for f in fs)

    return wrapped


@lru_cache(maxsize=4)
def manufactured_case(nu: float = 1.0, nu_r: float = 1.0, mu0: float = 1.0,
                      j_inertia: float = 1.0, c1: float = 1.0,
                      relax_time: float = 1.0, kappa0: float = 1.0
                      ) -> ManufacturedCase:
    """Builds the standard validation case on the unit square."""
    x, y, t = sym.symbols("x y t", real=True)
    pi = sym.pi

    u1 = sym.sin(t) * sym.sin(pi * x) * sym.sin(pi * (y + sym.Rational(1, 2)))
    u2 = sym.sin(t) * sym.cos(pi * x) * sym.cos(pi * (y + sym.Rational(1, 2)))
    p = sym.sin(2 * pi * (x - y) + t)
    w = sym.sin(2 * pi * x + t) * sym.sin(2 * pi * y + t)
    m1 = sym.sin(2 * pi * x + t) * sym.cos(2 * pi * y + t)
    m2 = sym.cos(2 * pi * x + t) * sym.sin(2 * pi * y + t)
    phi = sym.sin(pi * x + t) * sym.sin(pi * y + t)

    h1, h2 = sym.diff(phi, x), sym.diff(phi, y)
    nu0 = nu + nu_r

    def lap(f):
        return sym.diff(f, x, 2) + sym.diff(f, y, 2)

    def adv(f):
        return u1 * sym.diff(f, x) + u2 * sym.diff(f, y)

    curl_u = sym.diff(u2, x) - sym.diff(u1, y)
    # planar curl of the scalar spin: (dw/dy, -dw/dx)
    fu1 = (sym.diff(u1, t) + adv(u1) - nu0 * lap(u1) + sym.diff(p, x)
           - 2 * nu_r * sym.diff(w, y)
           - mu0 * (m1 * sym.diff(h1, x) + m2 * sym.diff(h1, y)))
    fu2 = (sym.diff(u2, t) + adv(u2) - nu0 * lap(u2) + sym.diff(p, y)
           + 2 * nu_r * sym.diff(w, x)
           - mu0 * (m1 * sym.diff(h2, x) + m2 * sym.diff(h2, y)))
    fw = (j_inertia * (sym.diff(w, t) + adv(w)) - c1 * lap(w)
          + 4 * nu_r * w - 2 * nu_r * curl_u
          - mu0 * (m1 * h2 - m2 * h1))
    fm1 = (sym.diff(m1, t) + adv(m1) - w * (-m2)
           + (m1 - kappa0 * h1) / relax_time)
    fm2 = (sym.diff(m2, t) + adv(m2) - w * m1
           + (m2 - kappa0 * h2) / relax_time)

    # effective applied field making the potential equation exact
    ha1 = h1 + m1
    ha2 = h2 + m2

    return ManufacturedCase(
        u=_lambdify_vector((u1, u2), x, y, t),
        p=_lambdify_scalar(p, x, y, t),
        w=_lambdify_scalar(w, x, y, t),
        m=_lambdify_vector((m1, m2), x, y, t),
        phi=_lambdify_scalar(phi, x, y, t),
        grad_phi=_lambdify_vector((h1, h2), x, y, t),
        f_u=_lambdify_vector((fu1, fu2), x, y, t),
        f_w=_lambdify_scalar(fw, x, y, t),
        f_m=_lambdify_vector((fm1, fm2), x, y, t),
        h_applied=_lambdify_vector((ha1, ha2), x, y, t),
    )


def vector_at(fn, pts: np.ndarray, t: float) -> np.ndarray:
    """Evaluates a vector callable at points shaped (..., 2)."""
    v1, v2 = fn(pts[..., 0], pts[..., 1], t)
    return np.stack([v1, v2], axis=-1)
