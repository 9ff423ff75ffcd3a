"""Ground-truth generators independent of the dual pipeline.

* shoot_1d: shooting for the 1D Lane-Emden type system
      u'' = -a |v|^(q-1) v,   v'' = -b |u|^(p-1) u,   u(0)=v(0)=u(1)=v(1)=0
  (a = q+1, b = p+1 reproduces the H_eps family at eps = 0).
* newton_primal: damped Newton on the discrete system in (u, v).
* brute_force_conjugate: zooming grid search for sup_(t,s) t f + s g - H(t, s).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .conjugate import eval_H, grad_H, hess_H
from .discretization import DiscreteField, Mesh, l2_norm
from .errors import BoundaryMaximum, BracketFailure, NonConvergence
from .functional import residual_arrays

ODE_RTOL = 1e-12
ODE_ATOL = 1e-14


# ------------------------------------------------------------------ shooting

def _rhs(p, q, a, b):
    def fun(x, y):
        u, du, v, dv, _ = y
        H = b * abs(u) ** (p + 1) / (p + 1) + a * abs(v) ** (q + 1) / (q + 1)
        return [du, -a * np.sign(v) * abs(v) ** q, dv, -b * np.sign(u) * abs(u) ** p,
                du * dv - H]
    return fun


def _integrate(p, q, a, b, su, sv, x_end=1.0, t_eval=None, events=None):
    return solve_ivp(_rhs(p, q, a, b), (0.0, x_end), [0.0, su, 0.0, sv, 0.0],
                     method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL,
                     t_eval=t_eval, events=events, dense_output=t_eval is None)


def _half_period(p, a, s, x_max=10.0):
    """First positive zero of u for the reduced equation u'' = -a |u|^(p-1) u, u'(0)=s."""

    def ev(x, y):
        return y[0]

    ev.terminal = True
    ev.direction = -1
    sol = solve_ivp(lambda x, y: [y[1], -a * np.sign(y[0]) * abs(y[0]) ** p],
                    (0.0, x_max), [0.0, s], method="DOP853", rtol=ODE_RTOL,
                    atol=ODE_ATOL, events=ev)
    hits = sol.t_events[0]
    return float(hits[0]) if hits.size else x_max


def _count_sign_changes(values):
    s = np.sign(values)
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


@dataclass
class ShootingResult:
    p: float
    q: float
    coeffs: tuple
    slope_u: float
    slope_v: float
    u: DiscreteField
    v: DiscreteField
    energy_I: float
    node_count_u: int
    boundary_u: float
    boundary_v: float

    def on_mesh(self, mesh):
        """Re-integrate and sample (u, v) at the nodes of a 1D mesh."""
        a, b = self.coeffs
        sol = _integrate(self.p, self.q, a, b, self.slope_u, self.slope_v,
                         t_eval=mesh.axis)
        return sol.y[0].copy(), sol.y[2].copy()


def _finish(p, q, a, b, su, sv, n_fine):
    mesh = Mesh(1, n_fine)
    t_eval = np.concatenate([[0.0], mesh.axis, [1.0]])
    sol = _integrate(p, q, a, b, su, sv, t_eval=t_eval)
    u, v = sol.y[0], sol.y[2]
    return ShootingResult(
        p=p, q=q, coeffs=(a, b), slope_u=su, slope_v=sv,
        u=DiscreteField(u[1:-1], mesh), v=DiscreteField(v[1:-1], mesh),
        energy_I=float(sol.y[4, -1]),
        node_count_u=_count_sign_changes(u[1:-1]),
        boundary_u=float(u[-1]), boundary_v=float(v[-1]))


def _symmetric_slope(p, a, target_nodes, bracket):
    lo, hi = bracket
    target = 1.0 / (target_nodes + 1)
    grid = np.geomspace(lo, hi, 61)
    vals = np.array([_half_period(p, a, s) - target for s in grid])
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if idx.size == 0:
        raise BracketFailure(f"no slope in [{lo}, {hi}] gives {target_nodes} nodes")
    i = idx[0]
    return brentq(lambda s: _half_period(p, a, s) - target, grid[i], grid[i + 1],
                  xtol=1e-15, rtol=1e-15, maxiter=200)


def _first_zeros(p, q, a, b, sigma, x_max=8.0):
    """First positive zeros of u and v for u'(0) = 1, v'(0) = sigma.

    A missing zero is returned as inf; once u and v have opposite signs the
    trajectory blows up, so at most one of them is then found.
    """

    def ev_u(x, y):
        return y[0]

    def ev_v(x, y):
        return y[2]

    ev_u.direction = ev_v.direction = -1
    while True:
        sol = solve_ivp(_rhs(p, q, a, b), (0.0, x_max), [0.0, 1.0, 0.0, sigma, 0.0],
                        method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL, events=[ev_u, ev_v])
        zu, zv = sol.t_events
        if zu.size or zv.size or sol.status != 0 or x_max > 1e3:
            break
        x_max *= 4
    if not (zu.size or zv.size):
        raise BracketFailure(f"no zero of u or v before x = {x_max:g} (sigma = {sigma:g})")
    return (float(zu[0]) if zu.size else np.inf), (float(zv[0]) if zv.size else np.inf)


def _scaled_slopes(p, q, a, b, target_nodes, bracket):
    """Initial slopes from a ground state with u'(0) = 1 and the scaling symmetry.

    If (u, v) solves the system then so does (mu^al u(mu x), mu^be v(mu x))
    with al = 2(q+1)/(pq-1), be = 2(p+1)/(pq-1).  A simultaneous zero of u
    and v at X reflects to an odd continuation, so the k-node solution is
    the ground state rescaled to have its zero at 1/(k+1).
    """
    if abs(p * q - 1) < 1e-12:
        raise BracketFailure("scaling reduction needs pq != 1")
    lo, hi = bracket

    def gap(log_sigma):
        zu, zv = _first_zeros(p, q, a, b, np.exp(log_sigma))
        if np.isinf(zu) or np.isinf(zv):
            return 1.0 if np.isinf(zu) else -1.0
        return np.log(zu) - np.log(zv)

    def safe_gap(t):
        try:
            return gap(t)
        except BracketFailure:
            return np.nan

    grid = np.linspace(np.log(lo), np.log(hi), 49)
    vals = np.array([safe_gap(t) for t in grid])
    with np.errstate(invalid="ignore"):
        idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if idx.size == 0:
        raise BracketFailure("no v'(0) makes the first zeros of u and v coincide")
    i = idx[0]
    t = brentq(gap, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15, maxiter=200)
    sigma = np.exp(t)
    X = _first_zeros(p, q, a, b, sigma)[0]
    mu = (target_nodes + 1) * X
    al = 2 * (q + 1) / (p * q - 1)
    be = 2 * (p + 1) / (p * q - 1)
    return mu ** (al + 1), mu ** (be + 1) * sigma


def shoot_1d(p, q, target_nodes, bracket=(1e-6, 1e6), coeffs=(1.0, 1.0), n_fine=4095,
             sigma_bracket=(1e-3, 1e3)):
    """Solution of the 1D system whose u has ``target_nodes`` interior sign changes.

    With p == q and equal coefficients the symmetric reduction u = v turns
    the problem into a scalar shooting on u'(0); otherwise the ratio of the
    initial slopes is fixed by a scalar root solve and the scale by the
    scaling symmetry of the system.
    """
    a, b = coeffs
    if p == q and a == b:
        s = _symmetric_slope(p, a, target_nodes, bracket)
        res = _finish(p, q, a, b, s, s, n_fine)
    else:
        su, sv = _scaled_slopes(p, q, a, b, target_nodes, sigma_bracket)
        res = _finish(p, q, a, b, su, sv, n_fine)
    if res.node_count_u != target_nodes:
        raise BracketFailure(f"found {res.node_count_u} nodes, wanted {target_nodes}")
    return res


def shoot_hamiltonian(spec, target_nodes, **kw):
    """shoot_1d with the coefficients of the eps = 0 Hamiltonian family."""
    if spec.eps:
        raise ValueError("shooting oracle covers eps = 0 only")
    return shoot_1d(spec.p, spec.q, target_nodes, coeffs=(spec.q + 1, spec.p + 1), **kw)


# ------------------------------------------------------------ primal Newton

def _primal_jacobian(spec, solver, u, v):
    huu, huv, hvv = hess_H(spec, u, v)
    L = solver.L
    return sp.bmat([[L - sp.diags(huv), -sp.diags(hvv)],
                    [-sp.diags(huu), L - sp.diags(huv)]], format="csc")


def newton_primal(spec, solver, u0, v0, tol=1e-10, maxiter=100, info=False):
    """Damped Newton on F(u, v) = (-Delta_h u - H_v, -Delta_h v - H_u).

    Converges when the discrete L2 residual is <= tol, or <= tol times the
    size of -Delta_h (u, v) when that is larger (the floating-point floor
    of the stencil on fine meshes).
    """
    mesh = solver.mesh
    u = np.array(u0, dtype=float)
    v = np.array(v0, dtype=float)
    n = mesh.size

    def resid(u, v):
        ru, rv = residual_arrays(spec, solver, u, v)
        return np.concatenate([ru, rv])

    def norm(r):
        return l2_norm(r, mesh)

    r = resid(u, v)
    steps = 0
    for steps in range(maxiter + 1):
        scale = l2_norm(solver.neg_laplacian(u), mesh) + l2_norm(solver.neg_laplacian(v), mesh)
        if norm(r) <= tol * max(1.0, scale):
            break
        if steps == maxiter:
            raise NonConvergence(f"primal Newton: residual {norm(r):.3e} after {maxiter} steps",
                                 best=(u, v))
        d = spsolve(_primal_jacobian(spec, solver, u, v), -r)
        lam, r0 = 1.0, norm(r)
        while True:
            un, vn = u + lam * d[:n], v + lam * d[n:]
            rn = resid(un, vn)
            if norm(rn) <= (1 - 1e-4 * lam) * r0 or lam < 1e-10:
                break
            lam /= 2
        u, v, r = un, vn, rn
    out = (DiscreteField(u, mesh), DiscreteField(v, mesh))
    if info:
        return out + ({"iterations": steps, "residual": norm(r)},)
    return out


# ------------------------------------------------------ brute-force conjugate

def brute_force_conjugate(spec, f, g, box_radius, grid_step, coarse=201, window=41):
    """Grid maximum of t f + s g - H(t, s) over [-R, R]^2, refined by zooming.

    The first pass covers the whole box; each later pass lays a window x
    window grid over the few cells around the current best point until the
    spacing reaches grid_step.  Raises BoundaryMaximum when the coarse
    maximizer sits on the box boundary.
    """

    def objective(T, S):
        return T * f + S * g - eval_H(spec, T, S)

    ax = np.linspace(-box_radius, box_radius, coarse)
    T, S = np.meshgrid(ax, ax, indexing="ij")
    vals = objective(T, S)
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    if i in (0, coarse - 1) or j in (0, coarse - 1):
        raise BoundaryMaximum(f"maximizer on the boundary of [-{box_radius}, {box_radius}]^2")
    step = ax[1] - ax[0]
    tc, sc, best = ax[i], ax[j], vals[i, j]
    while step > grid_step:
        half = 3 * step
        step = max(grid_step, 2 * half / (window - 1))
        k = int(np.ceil(half / step))
        offs = step * np.arange(-k, k + 1)
        T, S = np.meshgrid(tc + offs, sc + offs, indexing="ij")
        vals = objective(T, S)
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        tc, sc, best = T[i, j], S[i, j], vals[i, j]
    return float(best)


def brute_force_auto(spec, f, g, grid_step=1e-5):
    """brute_force_conjugate with the box doubled until the maximizer is interior."""
    R = 1.0
    while True:
        try:
            return brute_force_conjugate(spec, f, g, R, grid_step)
        except BoundaryMaximum:
            R *= 2
            if R > 1e8:
                raise
