"""Biorthogonal Galerkin decomposition built on the discrete Dirichlet eigenbasis.

With g_j the L2-normalized discrete sine modes and f_j = lambda_j g_j,

    inner(g_j, g_k) = delta_jk        inner(f_j, A g_k) = delta_jk

so both projections P_n and P~_n are the L2 projection onto the first n modes.

Galerkin coefficient vectors use L2-orthonormal coordinates on both sides:
a vector z of length 2m holds (c_f, c_g) with f = sum c_f[j] g_j and
g = sum c_g[j] g_j.  In the f_j basis the f-coefficient of mode j is
c_f[j] / lambda_j.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .discretization import Mesh, lp_norm
from .errors import BadSpec, NonConvergence, NonPositive, TooManyModes


@dataclass
class GalerkinBasis:
    mesh: Mesh
    eigenvalues: np.ndarray  # (m_max,)
    G: np.ndarray  # (nodes, m_max), column j-1 holds g_j
    modes: list  # mode index tuples, sorted with the eigenvalues

    @property
    def m_max(self):
        return self.eigenvalues.size

    def g(self, j):
        return self.G[:, j - 1]

    def f(self, j):
        return self.eigenvalues[j - 1] * self.G[:, j - 1]

    def fields(self, z):
        """Nodal (f, g) for a coefficient vector of length 2m (m <= m_max)."""
        z = np.asarray(z, dtype=float)
        m = z.size // 2
        Gm = self.G[:, :m]
        return Gm @ z[:m], Gm @ z[m:]

    def coeffs(self, f, g, m):
        """L2 coefficients of (f, g) on the first m modes (the G_m projection)."""
        Gm = self.G[:, :m]
        w = self.mesh.weight
        return np.concatenate([w * (Gm.T @ np.asarray(f)), w * (Gm.T @ np.asarray(g))])


def build_basis(mesh, m_max):
    if m_max < 1 or m_max > mesh.size:
        raise TooManyModes(f"m_max={m_max} must lie in [1, {mesh.size}]")
    n, h = mesh.n_per_axis, mesh.h
    x = mesh.axis

    def lam1(j):
        return (2.0 / h**2) * (1.0 - np.cos(j * np.pi * h))

    if mesh.dim == 1:
        modes = [(j,) for j in range(1, m_max + 1)]
        lam = np.array([lam1(j) for j in range(1, m_max + 1)])
        G = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, np.arange(1, m_max + 1)))
        return GalerkinBasis(mesh, lam, G, modes)

    top = min(n, m_max)
    jx, jy = np.meshgrid(np.arange(1, top + 1), np.arange(1, top + 1), indexing="ij")
    jx, jy = jx.ravel(), jy.ravel()
    lam = lam1(jx) + lam1(jy)
    # ties broken lexicographically in (jx, jy)
    order = np.lexsort((jy, jx, lam))[:m_max]
    S = np.sin(np.pi * np.outer(x, np.arange(1, top + 1)))  # S[i, j-1] = sin(j pi x_i)
    G = np.empty((mesh.size, m_max))
    for col, k in enumerate(order):
        G[:, col] = 2.0 * np.outer(S[:, jx[k] - 1], S[:, jy[k] - 1]).ravel()
    modes = [(int(jx[k]), int(jy[k])) for k in order]
    return GalerkinBasis(mesh, lam[order], G, modes)


KINDS = ("E_n", "E_n_perp", "F_n", "G_n", "G_n_perp", "G_n_m")


@dataclass(frozen=True)
class SubspaceSpec:
    kind: str
    n: int
    m: Optional[int] = None

    def check(self, basis):
        if self.kind not in KINDS:
            raise BadSpec(f"unknown subspace kind {self.kind!r}")
        top = self.m if self.kind == "G_n_m" else self.n
        if self.kind == "G_n_m" and self.m is None:
            raise BadSpec("G_n_m needs m")
        if not (1 <= self.n <= top <= basis.m_max):
            raise BadSpec(f"need 1 <= n <= m <= m_max for {self}")

    def dim(self, basis=None):
        """Coefficient-space dimension; complements use the truncated basis."""
        if self.kind == "F_n":
            return self.n
        if self.kind == "E_n":
            return self.n
        if self.kind == "G_n":
            return 2 * self.n
        if self.kind == "G_n_m":
            return 2 * (self.m - self.n + 1)
        if basis is None:
            raise BadSpec("complement dimension depends on the basis")
        if self.kind == "E_n_perp":
            return basis.m_max - self.n
        return 2 * (basis.m_max - self.n)

    def mode_range(self, basis):
        """1-based inclusive mode range used on each side."""
        if self.kind in ("E_n", "F_n", "G_n"):
            return 1, self.n
        if self.kind == "G_n_m":
            return self.n, self.m
        return self.n + 1, basis.m_max


def _mode_projection(basis, values, lo, hi):
    cols = basis.G[:, lo - 1:hi]
    return cols @ (basis.mesh.weight * (cols.T @ np.asarray(values, dtype=float)))


def project(field, basis, spec):
    """Component of a field (or an (f, g) pair) in the named subspace.

    E_n / E_n_perp act on a single field (the f-side projections coincide).
    G_n, G_n_perp and G_n_m act on pairs; F_n returns the L2xL2-orthogonal
    projection of a pair onto span{(f_j, g_j)}.
    """
    spec.check(basis)
    from .discretization import DiscreteField

    def wrap(vals, like):
        return DiscreteField(vals, basis.mesh) if isinstance(like, DiscreteField) else vals

    def raw(x):
        return x.values if isinstance(x, DiscreteField) else np.asarray(x, dtype=float)

    if spec.kind in ("E_n", "E_n_perp"):
        if isinstance(field, tuple) or hasattr(field, "f"):
            raise BadSpec(f"{spec.kind} projects a single field")
        v = raw(field)
        pn = _mode_projection(basis, v, 1, spec.n)
        return wrap(pn if spec.kind == "E_n" else v - pn, field)

    f, g = (field.f, field.g) if hasattr(field, "f") else field
    fv, gv = raw(f), raw(g)
    if spec.kind == "F_n":
        w = basis.mesh.weight
        lam = basis.eigenvalues[: spec.n]
        Gn = basis.G[:, : spec.n]
        c = (lam * (w * Gn.T @ fv) + w * Gn.T @ gv) / (lam**2 + 1)
        pf, pg = Gn @ (lam * c), Gn @ c
    else:
        lo, hi = spec.mode_range(basis)
        if spec.kind == "G_n_perp":
            pf = fv - _mode_projection(basis, fv, 1, spec.n)
            pg = gv - _mode_projection(basis, gv, 1, spec.n)
        else:
            pf = _mode_projection(basis, fv, lo, hi)
            pg = _mode_projection(basis, gv, lo, hi)
    return wrap(pf, f), wrap(pg, g)


# ----------------------------------------------------------- gap constants

def _log_norm_and_grad(w, r, weight):
    s = np.sum(np.abs(w) ** r)
    val = (np.log(weight) + np.log(s)) / r
    grad = np.sign(w) * np.abs(w) ** (r - 1) / s
    return val, grad


def _ratio_sup(M_num, M_den, r_num, r_den, weight, starts, rng):
    """sup_c |M_num c|_{r_num} / |M_den c|_{r_den} by multistart L-BFGS on the log."""

    def obj(c):
        v1, g1 = _log_norm_and_grad(M_num @ c, r_num, weight)
        v2, g2 = _log_norm_and_grad(M_den @ c, r_den, weight)
        return -(v1 - v2), -(M_num.T @ g1 - M_den.T @ g2)

    k = M_num.shape[1]
    inits = [np.eye(k)[0]] + [rng.standard_normal(k) for _ in range(starts - 1)]
    best, best_c, ok = -np.inf, None, False
    for c0 in inits:
        res = minimize(obj, c0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
        val = float(np.exp(-res.fun))
        ok = ok or res.success
        if val > best:
            best, best_c = val, res.x / np.linalg.norm(res.x)
    return best, best_c, ok


@dataclass
class GapConstants:
    alpha: float
    beta: float
    gamma: float
    lower_bound_only: bool = False

    def __iter__(self):
        return iter((self.alpha, self.beta, self.gamma))


def gap_constants(basis, n, p, q, starts=20, seed=0):
    """alpha_n, beta_n, gamma_n over the truncated complement (modes n+1..m_max)."""
    if not (1 <= n < basis.m_max):
        raise BadSpec(f"need 1 <= n < m_max, got n={n}")
    rng = np.random.default_rng(seed)
    w = basis.mesh.weight
    T = basis.G[:, n:]
    inv_lam = 1.0 / basis.eigenvalues[n:]
    lam = basis.eigenvalues[n:]
    # alpha: g = T c, A g = T (c / lambda)
    alpha, _, ok1 = _ratio_sup(T * inv_lam, T, p + 1, 1 + 1 / q, w, starts, rng)
    # beta: f = sum c_j f_j = T (lambda c), A f = T c
    beta, _, ok2 = _ratio_sup(T, T * lam, q + 1, 1 + 1 / p, w, starts, rng)
    out = GapConstants(alpha, beta, min(alpha, beta), lower_bound_only=not (ok1 and ok2))
    if not (np.isfinite(alpha) and np.isfinite(beta)):
        raise NonConvergence("gap-constant ascent failed", best=out)
    return out


def gap_mesh_drift(n, p, q, sizes=(63, 127, 255), dim=1, m_max=40, seed=0):
    """alpha_n across refinements; returns (values, max relative drift, flagged)."""
    vals = []
    for s in sizes:
        b = build_basis(Mesh(dim, s), m_max)
        vals.append(gap_constants(b, n, p, q, seed=seed).alpha)
    vals = np.array(vals)
    drift = float(np.max(np.abs(np.diff(vals)) / np.abs(vals[1:])))
    return vals, drift, drift > 0.05


def positivity_constant(basis, n, p, q, starts=20, seed=0):
    """C(n) = min of inner(f, A g) over unit-X-norm pairs in F_n.

    For (f, g) = sum c_j (f_j, g_j) the pairing equals |c|^2, so C(n) is the
    minimum of |c|^2 / ||(f, g)||_X^2 on R^n.
    """
    if not (1 <= n <= basis.m_max):
        raise BadSpec(f"need 1 <= n <= m_max, got n={n}")
    w = basis.mesh.weight
    Gn = basis.G[:, :n]
    lam = basis.eigenvalues[:n]
    a, b = 1 + 1 / p, 1 + 1 / q

    def xnorm_grad(c):
        fv, gv = Gn @ (lam * c), Gn @ c
        sf, sg = np.sum(np.abs(fv) ** a), np.sum(np.abs(gv) ** b)
        nf, ng = (w * sf) ** (1 / a), (w * sg) ** (1 / b)
        df = nf * (lam * (Gn.T @ (np.sign(fv) * np.abs(fv) ** (a - 1)))) / sf
        dg = ng * (Gn.T @ (np.sign(gv) * np.abs(gv) ** (b - 1))) / sg
        return nf + ng, df + dg

    def obj(c):
        X, dX = xnorm_grad(c)
        cc = c @ c
        return np.log(cc) - 2 * np.log(X), 2 * c / cc - 2 * dX / X

    rng = np.random.default_rng(seed)
    inits = [np.eye(n)[j] for j in range(n)] + [rng.standard_normal(n) for _ in range(starts)]
    best = np.inf
    for c0 in inits:
        if n == 1:
            val = obj(c0)[0]
        else:
            val = minimize(obj, c0, jac=True, method="L-BFGS-B",
                           options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15}).fun
        best = min(best, float(np.exp(val)))
    if not best > 0:
        raise NonPositive(f"C({n}) = {best} is not positive")
    return best


def bilinear_bound_ratio(basis, n, p, q, count=1000, seed=0):
    """Max over random complement pairs of |inner(f, A g)| / (|f|_{1+1/p} |g|_{1+1/q})."""
    rng = np.random.default_rng(seed)
    T = basis.G[:, n:]
    inv_lam = 1.0 / basis.eigenvalues[n:]
    mesh = basis.mesh
    worst = 0.0
    for _ in range(count):
        cf, cg = rng.standard_normal((2, T.shape[1]))
        # random decay so low and high tail modes both get weight
        cf *= np.exp(-rng.uniform(0, 0.3) * np.arange(cf.size))
        cg *= np.exp(-rng.uniform(0, 0.3) * np.arange(cg.size))
        f, g = T @ cf, T @ cg
        pair = mesh.weight * np.dot(f, T @ (inv_lam * cg))
        denom = lp_norm(f, 1 + 1 / p, mesh) * lp_norm(g, 1 + 1 / q, mesh)
        worst = max(worst, abs(pair) / denom)
    return worst
