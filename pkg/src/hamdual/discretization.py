"""Uniform box meshes, discrete fields and the inverse Dirichlet Laplacian."""

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .errors import BadExponent, MeshMismatch


@dataclass(frozen=True)
class Mesh:
    """Interior nodes of (0,1)^dim with n_per_axis nodes per axis.

    Fields are flat arrays in C order: node (i, j) sits at index i*n + j
    with coordinates ((i+1)h, (j+1)h).
    """

    dim: int
    n_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.n_per_axis < 1:
            raise ValueError("n_per_axis must be positive")

    @property
    def h(self):
        return 1.0 / (self.n_per_axis + 1)

    @property
    def size(self):
        return self.n_per_axis ** self.dim

    @property
    def weight(self):
        # trapezoidal rule with zero boundary values
        return self.h ** self.dim

    @cached_property
    def axis(self):
        return self.h * np.arange(1, self.n_per_axis + 1)

    @cached_property
    def coords(self):
        if self.dim == 1:
            return self.axis[:, None]
        X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def sample(self, fn):
        """Evaluate fn at the nodes (fn takes one coordinate array per axis)."""
        return np.asarray(fn(*self.coords.T), dtype=float)


class DiscreteField:
    """Nodal values on a mesh; supports the usual arithmetic."""

    __array_priority__ = 100

    def __init__(self, values, mesh):
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != (mesh.size,):
            raise MeshMismatch(f"expected {mesh.size} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.values = values
        self.mesh = mesh

    @classmethod
    def from_function(cls, mesh, fn):
        return cls(mesh.sample(fn), mesh)

    @classmethod
    def zeros(cls, mesh):
        return cls(np.zeros(mesh.size), mesh)

    def _other(self, other):
        if isinstance(other, DiscreteField):
            if other.mesh != self.mesh:
                raise MeshMismatch("fields live on different meshes")
            return other.values
        return other

    def __add__(self, other):
        return DiscreteField(self.values + self._other(other), self.mesh)

    __radd__ = __add__

    def __sub__(self, other):
        return DiscreteField(self.values - self._other(other), self.mesh)

    def __rsub__(self, other):
        return DiscreteField(self._other(other) - self.values, self.mesh)

    def __mul__(self, other):
        return DiscreteField(self.values * self._other(other), self.mesh)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return DiscreteField(self.values / self._other(other), self.mesh)

    def __neg__(self):
        return DiscreteField(-self.values, self.mesh)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"DiscreteField(dim={self.mesh.dim}, n={self.mesh.n_per_axis})"


def _values(x, mesh=None):
    if isinstance(x, DiscreteField):
        if mesh is not None and x.mesh != mesh:
            raise MeshMismatch("field is not on the solver mesh")
        return x.values
    x = np.asarray(x, dtype=float)
    if mesh is not None and x.shape != (mesh.size,):
        raise MeshMismatch(f"expected {mesh.size} values, got shape {x.shape}")
    return x


def laplacian_matrix(mesh):
    """Sparse -Delta_h with homogeneous Dirichlet data (3- or 5-point stencil)."""
    n, h = mesh.n_per_axis, mesh.h
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2
    if mesh.dim == 1:
        return T.tocsc()
    eye = sp.identity(n)
    return (sp.kron(T, eye) + sp.kron(eye, T)).tocsc()


class LaplacianSolver:
    """-Delta_h on a mesh with its cached sparse LU factorization; A = (-Delta_h)^-1."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.L = laplacian_matrix(mesh)
        self._solve = factorized(self.L)

    def A(self, values):
        """Apply the inverse Laplacian to a raw nodal array."""
        return self._solve(np.asarray(values, dtype=float))

    def neg_laplacian(self, values):
        return self.L @ np.asarray(values, dtype=float)


def apply_A(solver, rhs):
    """w with -Delta_h w = rhs and zero boundary data."""
    vals = _values(rhs, solver.mesh)
    w = solver.A(vals)
    return DiscreteField(w, solver.mesh) if isinstance(rhs, DiscreteField) else w


def lp_norm(field, r, mesh=None):
    if r < 1:
        raise BadExponent(f"L^r norm needs r >= 1, got {r}")
    if mesh is None:
        mesh = field.mesh
    vals = _values(field)
    return float((mesh.weight * np.sum(np.abs(vals) ** r)) ** (1.0 / r))


def inner(a, b, mesh=None):
    """Quadrature of a*b over the domain."""
    if isinstance(a, DiscreteField) and isinstance(b, DiscreteField) and a.mesh != b.mesh:
        raise MeshMismatch("fields live on different meshes")
    if mesh is None:
        mesh = a.mesh if isinstance(a, DiscreteField) else b.mesh
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise MeshMismatch("field sizes differ")
    return float(mesh.weight * np.dot(va, vb))


def l2_norm(values, mesh):
    return float(np.sqrt(mesh.weight * np.dot(values, values)))


def write_fields_csv(path, mesh, columns):
    """Write node coordinates plus named value columns at round-trip precision."""
    names = ["x", "y"][: mesh.dim]
    cols = {k: _values(v) for k, v in columns.items()}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + list(cols))
        data = np.column_stack([mesh.coords] + [cols[k] for k in cols])
        for row in data:
            w.writerow([f"{x:.17g}" for x in row])


def read_fields_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return {name: data[:, i] for i, name in enumerate(header)}
