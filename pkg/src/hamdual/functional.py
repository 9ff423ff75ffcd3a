"""Dual functional J, primal functional I and the maps between them.

    J(f, g) = int H*(f, g) - int g A f
    I(u, v) = int grad u . grad v - int H(u, v)

Critical points of J give solutions through (u, v) = grad H*(f, g), and
J(f, g) = I(u, v) there.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conjugate import conjugate_arrays, eval_H, grad_H
from .discretization import DiscreteField, MeshMismatch, l2_norm, lp_norm


@dataclass
class DualPoint:
    f: DiscreteField
    g: DiscreteField

    def __post_init__(self):
        if self.f.mesh != self.g.mesh:
            raise MeshMismatch("f and g must share a mesh")

    @classmethod
    def from_arrays(cls, f, g, mesh):
        return cls(DiscreteField(f, mesh), DiscreteField(g, mesh))

    @classmethod
    def zeros(cls, mesh):
        return cls.from_arrays(np.zeros(mesh.size), np.zeros(mesh.size), mesh)

    @property
    def mesh(self):
        return self.f.mesh

    def __neg__(self):
        return DualPoint(-self.f, -self.g)

    def __add__(self, other):
        return DualPoint(self.f + other.f, self.g + other.g)

    def __sub__(self, other):
        return DualPoint(self.f - other.f, self.g - other.g)

    def __mul__(self, c):
        return DualPoint(self.f * c, self.g * c)

    __rmul__ = __mul__


def xnorm(spec, point):
    """|f|_{1+1/p} + |g|_{1+1/q}."""
    return lp_norm(point.f, spec.a) + lp_norm(point.g, spec.b)


def _check(solver, point):
    if point.mesh != solver.mesh:
        raise MeshMismatch("dual point is not on the solver mesh")


# Array-level kernels; the minimax loops call these directly.

def J_arrays(spec, solver, f, g):
    w = solver.mesh.weight
    hstar = conjugate_arrays(spec, f, g)[0]
    return float(w * np.sum(hstar) - w * np.dot(g, solver.A(f)))


def gradJ_arrays(spec, solver, f, g):
    """L2 gradient (H*_f - A g, H*_g - A f) and the recovered (u, v)."""
    _, u, v = conjugate_arrays(spec, f, g)
    return u - solver.A(g), v - solver.A(f), u, v


def I_arrays(spec, solver, u, v):
    w = solver.mesh.weight
    return float(w * np.dot(solver.neg_laplacian(u), v) - w * np.sum(eval_H(spec, u, v)))


def residual_arrays(spec, solver, u, v):
    hu, hv = grad_H(spec, u, v)
    return solver.neg_laplacian(u) - hv, solver.neg_laplacian(v) - hu


def eval_J(spec, solver, point):
    _check(solver, point)
    return J_arrays(spec, solver, point.f.values, point.g.values)


def grad_J(spec, solver, point):
    _check(solver, point)
    df, dg, _, _ = gradJ_arrays(spec, solver, point.f.values, point.g.values)
    return DualPoint.from_arrays(df, dg, solver.mesh)


def recover_primal(spec, point):
    _, u, v = conjugate_arrays(spec, point.f.values, point.g.values)
    return DiscreteField(u, point.mesh), DiscreteField(v, point.mesh)


def dual_from_primal(spec, u, v):
    """(f, g) = grad H(u, v), the inverse of recover_primal."""
    mesh = u.mesh
    hu, hv = grad_H(spec, u.values, v.values)
    return DualPoint.from_arrays(hu, hv, mesh)


def eval_I(spec, solver, u, v):
    """Discrete Dirichlet form inner(-Delta_h u, v) minus the quadrature of H."""
    return I_arrays(spec, solver, np.asarray(u, dtype=float), np.asarray(v, dtype=float))


def energy_identity_gap(spec, solver, point):
    u, v = recover_primal(spec, point)
    return abs(eval_I(spec, solver, u, v) - eval_J(spec, solver, point))


def pde_residual(spec, solver, u, v):
    ru, rv = residual_arrays(spec, solver, np.asarray(u, dtype=float),
                            np.asarray(v, dtype=float))
    return l2_norm(ru, solver.mesh), l2_norm(rv, solver.mesh)


@dataclass
class SolutionRecord:
    dual: DualPoint
    u: DiscreteField
    v: DiscreteField
    J_value: float
    I_value: float
    residual_u: float
    residual_v: float
    galerkin_m: int
    level_index: int
    regime: str
    identity_gap: float = 0.0
    grad_norm: float = 0.0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dual(cls, spec, solver, point, galerkin_m, level_index, regime, primal=None,
                  **extra):
        """Evaluate everything at a dual point.

        ``primal`` may pass (u, v) fields already known to equal grad H*(f, g),
        e.g. from a primal Newton polish; recomputing them through an iterative
        conjugate would feed its tolerance into the PDE residual amplified by
        the discrete Laplacian.
        """
        u, v = recover_primal(spec, point) if primal is None else primal
        J = eval_J(spec, solver, point)
        I = eval_I(spec, solver, u, v)
        ru, rv = pde_residual(spec, solver, u, v)
        gr = grad_J(spec, solver, point)
        gn = float(np.hypot(l2_norm(gr.f.values, solver.mesh), l2_norm(gr.g.values, solver.mesh)))
        return cls(point, u, v, J, I, ru, rv, galerkin_m, level_index, regime,
                   identity_gap=abs(I - J), grad_norm=gn, extra=dict(extra))

    def scalars(self):
        out = {
            "level_index": self.level_index,
            "galerkin_m": self.galerkin_m,
            "regime": self.regime,
            "J": self.J_value,
            "I": self.I_value,
            "identity_gap": self.identity_gap,
            "residual_u": self.residual_u,
            "residual_v": self.residual_v,
            "grad_norm": self.grad_norm,
        }
        out.update(self.extra)
        return out

    def field_columns(self):
        return {"u": self.u, "v": self.v, "f": self.dual.f, "g": self.dual.g}

    def l2_distance(self, other):
        d = self.u.values - other.u.values
        return l2_norm(d, self.u.mesh)


def distinct(a, b, energy_rel=1e-4, dist=1e-3):
    """Two solutions count as distinct when both energies and primal fields separate."""
    de = abs(a.I_value - b.I_value) > energy_rel * (1 + max(abs(a.I_value), abs(b.I_value)))
    return bool(de and a.l2_distance(b) > dist)
