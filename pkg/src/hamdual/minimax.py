"""Fountain and dual-fountain minimax searches for critical points of J.

Superlinear levels are realized by a local minimax iteration on the reduced
functional phi(x) = min_y J(x + y, x - y), where x collects the directions
on which the coupling term of J is negative and y those where it is
positive.  Sublinear levels minimize J over the tail space G_n^m.  Either
way the candidate is certified by Newton on the Galerkin gradient and then
polished on the full mesh.

Coefficient vectors z = (c_f, c_g) follow the convention of
``decomposition``: f = sum c_f[j] g_j, g = sum c_g[j] g_j.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq, minimize
from scipy.sparse.linalg import spsolve
from scipy.stats import norm, qmc

from .conjugate import (NEWTON_TOL, calibrate_growth, conjugate_arrays, grad_H,
                        hess_conjugate)
from .decomposition import SubspaceSpec, gap_constants
from .discretization import DiscreteField, l2_norm, lp_norm
from .errors import (BadSpec, DeformationStall, LevelOutOfBracket, NonConvergence,
                     RegimeMismatch, ScheduleFailure)
from .functional import DualPoint, gradJ_arrays
from .oracle import newton_primal

REGIMES = ("superlinear", "sublinear")


# ------------------------------------------------------------------ geometry

log = logging.getLogger(__name__)


def regime_of(p, q):
    """'superlinear' or 'sublinear' from the side of 1/(p+1) + 1/(q+1) = 1."""
    s = 1 / (p + 1) + 1 / (q + 1)
    if abs(s - 1) < 1e-12:
        raise RegimeMismatch(f"1/(p+1) + 1/(q+1) = 1 for (p, q) = ({p}, {q}); pq = 1 is excluded")
    return "superlinear" if s < 1 else "sublinear"


def choose_exponents(p, q, regime):
    """Scaling exponents (k, l) > 1 with k/(k+l) at the midpoint of its admissible interval."""
    actual = regime_of(p, q)
    if regime != actual:
        raise RegimeMismatch(f"(p, q) = ({p}, {q}) is {actual}, not {regime}")
    if regime == "superlinear":
        lo, hi = 1 / (q + 1), p / (p + 1)
    else:
        lo, hi = p / (p + 1), 1 / (q + 1)
    s = 0.5 * (lo + hi)
    T = 1 / min(s, 1 - s) + 1
    return s * T, (1 - s) * T


def scaled_embed(t, f, g, k, l):
    """(t^k f, t^l g); a DualPoint when given fields, a pair of arrays otherwise."""
    if t < 0:
        raise ValueError("scaling parameter must be non-negative")
    a, b = t ** k, t ** l
    if isinstance(f, DiscreteField):
        return DualPoint(f * a, g * b)
    return a * np.asarray(f, dtype=float), b * np.asarray(g, dtype=float)


def scaled_radius(spec, f, g, k, l, mesh):
    """The t with (f, g) = (t^k f1, t^l g1) and ||(f1, g1)||_X = 1."""
    nf, ng = lp_norm(f, spec.a, mesh), lp_norm(g, spec.b, mesh)
    if nf + ng == 0:
        return 0.0
    def excess(logt):
        t = np.exp(logt)
        return np.log(nf / t**k + ng / t**l)
    lo, hi = -1.0, 1.0
    while excess(lo) < 0:
        lo *= 2
    while excess(hi) > 0:
        hi *= 2
    return float(np.exp(brentq(excess, lo, hi, xtol=1e-14)))


def coeff_xnorm(spec, basis, z):
    f, g = basis.fields(z)
    return lp_norm(f, spec.a, basis.mesh) + lp_norm(g, spec.b, basis.mesh)


def _subspace_layout(subspace, basis):
    """(first mode, last mode, F-direction flag) of a pair subspace."""
    subspace.check(basis)
    if subspace.kind in ("E_n", "E_n_perp"):
        raise BadSpec("sphere samples live in pair subspaces (F_n, G_n, G_n_perp, G_n_m)")
    lo, hi = subspace.mode_range(basis)
    return lo, hi, subspace.kind == "F_n"


def sphere_sample(subspace, basis, count, seed, spec):
    """Antipodal low-discrepancy points on the unit X-sphere of a subspace.

    Returns an array of shape (count, 2 * top) of coefficient vectors over
    modes 1..top, where top is the last mode of the subspace.  Rows come in
    pairs z, -z.  Gaussian vectors are built from scrambled Sobol points,
    so the directions are uniform on the coefficient sphere.
    """
    if count < 2 or count % 2:
        raise ValueError("count must be a positive even number")
    lo, hi, is_F = _subspace_layout(subspace, basis)
    width = hi - lo + 1
    d = width if is_F else 2 * width
    half = count // 2
    sob = qmc.Sobol(d, scramble=True, seed=seed)
    U = sob.random_base2(int(np.ceil(np.log2(max(half, 2)))))[:half]
    Z = norm.ppf(np.clip(U, 1e-12, 1 - 1e-12))
    if d == 1:
        Z = np.where(Z >= 0, 1.0, -1.0)
    out = np.zeros((half, 2 * hi))
    lam = basis.eigenvalues[lo - 1:hi]
    if is_F:
        out[:, lo - 1:hi] = Z * lam
        out[:, hi + lo - 1:] = Z
    else:
        out[:, lo - 1:hi] = Z[:, :width]
        out[:, hi + lo - 1:] = Z[:, width:]
    for i in range(half):
        out[i] /= coeff_xnorm(spec, basis, out[i])
    res = np.empty((count, 2 * hi))
    res[0::2], res[1::2] = out, -out
    return res


def scale_coeffs(z, t, k, l):
    m = z.size // 2
    return np.concatenate([t**k * z[:m], t**l * z[m:]])


# -------------------------------------------------------- Galerkin functional

class GalerkinFunctional:
    """J restricted to the span of a set of modes, in coefficient coordinates."""

    def __init__(self, spec, basis, modes):
        self.spec = spec
        self.basis = basis
        self.modes = np.asarray(list(modes), dtype=int)
        idx = self.modes - 1
        self.G = basis.G[:, idx]
        self.lam = basis.eigenvalues[idx]
        self.w = basis.mesh.weight
        self.m = self.modes.size
        self._last = None  # (z bytes, f, g, H*, u, v) of the latest evaluation

    def fields(self, z):
        return self.G @ z[: self.m], self.G @ z[self.m:]

    def _conjugate(self, z):
        """Fields and conjugate data at z; repeats are cached and the coupled
        Newton ascent is warm-started from the previous maximizer."""
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        last = self._last
        if last is not None and last[0] == key:
            return last[1:]
        f, g = self.fields(z)
        start = None
        if not self.spec.closed_form and last is not None:
            start = (last[4], last[5])
        hs, u, v = conjugate_arrays(self.spec, f, g, start=start)
        self._last = (key, f, g, hs, u, v)
        return f, g, hs, u, v

    def value(self, z):
        hs = self._conjugate(z)[2]
        return float(self.w * hs.sum() - np.sum(z[: self.m] * z[self.m:] / self.lam))

    def value_grad(self, z):
        _, _, hs, u, v = self._conjugate(z)
        cf, cg = z[: self.m], z[self.m:]
        val = float(self.w * hs.sum() - np.sum(cf * cg / self.lam))
        grad = np.concatenate([self.w * (self.G.T @ u) - cg / self.lam,
                               self.w * (self.G.T @ v) - cf / self.lam])
        return val, grad

    def grad_scale(self, z):
        """Size of the conjugate part of the gradient, for relative stopping rules."""
        _, _, _, u, v = self._conjugate(z)
        return float(np.hypot(np.linalg.norm(self.w * (self.G.T @ u)),
                              np.linalg.norm(self.w * (self.G.T @ v))))

    def hessian(self, z):
        f, g, _, u, v = self._conjugate(z)
        dff, dfg, dgg = hess_conjugate(self.spec, f, g, uv=(u, v))
        G, w = self.G, self.w
        Q = np.diag(1 / self.lam)
        Hff = w * (G.T @ (dff[:, None] * G))
        Hfg = w * (G.T @ (dfg[:, None] * G)) - Q
        Hgg = w * (G.T @ (dgg[:, None] * G))
        return np.block([[Hff, Hfg], [Hfg.T, Hgg]])

    def lift(self, z, m_total):
        """Coefficients of z in the first m_total modes."""
        out = np.zeros(2 * m_total)
        out[self.modes - 1] = z[: self.m]
        out[m_total + self.modes - 1] = z[self.m:]
        return out

    def restrict(self, z_full):
        """Inverse of lift for a vector over modes 1..m_total."""
        mt = z_full.size // 2
        return np.concatenate([z_full[self.modes - 1], z_full[mt + self.modes - 1]])


@dataclass
class MinimaxOutcome:
    level_value: float
    witness: DualPoint
    iterations: int
    converged: bool
    coeffs: Optional[np.ndarray] = None
    galerkin_m: int = 0
    galerkin_grad_norm: float = np.nan
    full_grad_norm: float = np.nan
    level_estimate: float = np.nan
    extra: dict = field(default_factory=dict)


def _newton_coeffs(gj, z0, tol=1e-9, maxiter=100):
    """Damped Newton on the coefficient gradient; returns (z, steps, gradient norm)."""
    z = np.array(z0, dtype=float)
    _, g = gj.value_grad(z)
    gn = np.linalg.norm(g)
    for it in range(maxiter + 1):
        if gn <= tol * max(1.0, gj.grad_scale(z)):
            return z, it, gn
        if it == maxiter:
            break
        H = gj.hessian(z)
        try:
            d = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(H, -g, rcond=None)[0]
        s = 1.0
        while True:
            zn = z + s * d
            _, gnew = gj.value_grad(zn)
            if np.linalg.norm(gnew) <= (1 - 1e-4 * s) * gn or s < 1e-10:
                break
            s /= 2
        z, g, gn = zn, gnew, np.linalg.norm(gnew)
    raise NonConvergence(f"Galerkin Newton: gradient {gn:.3e} after {maxiter} steps", best=z)


def _full_grad_norm(spec, solver, f, g):
    df, dg, _, _ = gradJ_arrays(spec, solver, f, g)
    return float(np.hypot(l2_norm(df, solver.mesh), l2_norm(dg, solver.mesh)))


def newton_refine(candidate, galerkin_m, basis, spec, solver, tol=1e-9, maxiter=100):
    """Newton on the gradient of J restricted to G_m, started from the G_m projection."""
    gj = GalerkinFunctional(spec, basis, range(1, galerkin_m + 1))
    z0 = basis.coeffs(candidate.f.values, candidate.g.values, galerkin_m)
    return _refine_from(gj, z0, solver, tol, maxiter)


def _refine_from(gj, z0, solver, tol=1e-9, maxiter=100, level_estimate=np.nan,
                 allow_unconverged=False):
    """Galerkin Newton from z0 wrapped as an outcome.

    With allow_unconverged the last Newton iterate is returned (converged
    False) instead of raising; the searches use this because the full-mesh
    polish and certification decide anyway, and the Galerkin Hessian can be
    poorly conditioned where H fails to be C^2.
    """
    spec = gj.spec
    converged = True
    try:
        z, steps, gn = _newton_coeffs(gj, z0, tol, maxiter)
    except NonConvergence as exc:
        if not allow_unconverged:
            raise
        z, steps, converged = exc.best, maxiter, False
        gn = float(np.linalg.norm(gj.value_grad(z)[1]))
    f, g = gj.fields(z)
    mesh = gj.basis.mesh
    witness = DualPoint.from_arrays(f, g, mesh)
    return MinimaxOutcome(
        level_value=gj.value(z), witness=witness, iterations=steps, converged=converged,
        coeffs=z, galerkin_m=gj.m, galerkin_grad_norm=float(gn),
        full_grad_norm=_full_grad_norm(spec, solver, f, g), level_estimate=level_estimate)


# ------------------------------------------------------ reduced functional

class ReducedFunctional:
    """phi(x) = min_y J(x + y, x - y) on a GalerkinFunctional.

    With c_f = x + y and c_g = x - y the coupling term is
    -sum (x_j^2 - y_j^2) / lambda_j, so J is strictly convex in y and the
    inner minimum is unique.  Critical points of phi are exactly the
    critical points of J, and grad phi = dJ/dx at the inner minimizer.
    """

    def __init__(self, gj, tol=1e-12):
        self.gj = gj
        self.m = gj.m
        self.tol = tol
        self._y = np.zeros(gj.m)

    def z(self, x, y):
        return np.concatenate([x + y, x - y])

    def inner(self, x, y0=None):
        y = self._y.copy() if y0 is None else np.array(y0, dtype=float)
        gj, m = self.gj, self.m
        J, gz = gj.value_grad(self.z(x, y))
        # an iterative conjugate is only accurate to NEWTON_TOL
        tol = self.tol if gj.spec.closed_form else max(self.tol, 1e2 * NEWTON_TOL)
        for _ in range(200):
            gy = gz[:m] - gz[m:]
            if np.linalg.norm(gy) <= tol * max(1.0, np.linalg.norm(gz[:m] + gz[m:])):
                break
            H = gj.hessian(self.z(x, y))
            Hyy = H[:m, :m] - H[:m, m:] - H[m:, :m] + H[m:, m:]
            d = -np.linalg.solve(Hyy, gy)
            slope = gy @ d
            s = 1.0
            while True:
                Jn, gn = gj.value_grad(self.z(x, y + s * d))
                if Jn <= J + 1e-4 * s * slope or s < 1e-12:
                    break
                s /= 2
            if s < 1e-12:
                break  # at the noise floor of J
            y, J, gz = y + s * d, Jn, gn
        self._y = y
        return y, J, gz

    def value_grad(self, x):
        y, J, gz = self.inner(x)
        return J, gz[: self.m] + gz[self.m:]

    def hessian(self, x):
        """phi'' = H_xx - H_xy H_yy^-1 H_yx at the inner minimizer."""
        y = self.inner(x)[0]
        H = self.gj.hessian(self.z(x, y))
        m = self.m
        A, B, C = H[:m, :m], H[:m, m:], H[m:, m:]
        Hxx = A + B + B.T + C
        Hxy = A - B + B.T - C
        Hyy = A - B - B.T + C
        return Hxx - Hxy @ np.linalg.solve(Hyy, Hxy.T)


def _ascent_step(H, g):
    """Newton step for maximization with the Hessian made negative definite."""
    mu, V = np.linalg.eigh(H)
    floor = 1e-10 * max(np.max(np.abs(mu)), 1e-300)
    return V @ ((V.T @ g) / np.maximum(np.abs(mu), floor))


def peak_on_span(red, B, theta0, tol=1e-11, maxiter=100):
    """Local maximizer of phi(B theta) from theta0 (B has orthonormal columns)."""
    th = np.array(theta0, dtype=float)
    val, gx = red.value_grad(B @ th)
    for _ in range(maxiter):
        g = B.T @ gx
        if np.linalg.norm(g) * max(1.0, np.linalg.norm(th)) <= tol * max(1.0, abs(val)):
            break
        H = B.T @ red.hessian(B @ th) @ B
        d = _ascent_step(H, g)
        s = 1.0
        while True:
            vn, gn = red.value_grad(B @ (th + s * d))
            if vn >= val + 1e-4 * s * (g @ d) or s < 1e-12:
                break
            s /= 2
        if s < 1e-12 and vn < val:
            break
        th, val, gx = th + s * d, vn, gn
    return th, val, gx


def _ray_peak(red, x_dir):
    """Maximize phi(t x_dir) over t > 0 (x_dir a unit vector)."""
    ts = np.geomspace(1e-3, 1e5, 81)
    vals = np.array([red.value_grad(t * x_dir)[0] for t in ts])
    i = int(np.argmax(vals))
    th, val, _ = peak_on_span(red, x_dir[:, None], [ts[i]])
    return float(th[0]), val


def _orthonormal(vectors):
    Q, R = np.linalg.qr(np.column_stack(vectors))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1
    return Q * signs


def local_minimax(red, support, v0, tol=1e-3, maxiter=300, min_step=1e-10):
    """Local minimax iteration: peak selection on span(support, v), descent in v.

    The peak is a local maximum of phi on the span.  v then moves against
    the gradient of phi at the peak, preconditioned by the convex part of
    the reduced Hessian (phi'' plus the coupling curvature 2 / lambda),
    which keeps the step well scaled across modes.  Returns
    (peak x, phi value, iterations, relative gradient).
    """
    L = [np.asarray(w, dtype=float) for w in support]
    B = _orthonormal(L + [np.asarray(v0, dtype=float)])
    v = B[:, -1]
    tv, _ = _ray_peak(red, v)
    theta = np.zeros(B.shape[1])
    theta[-1] = tv
    theta, val, gx = peak_on_span(red, B, theta)
    ridge = 2 / red.gj.lam
    step = 1.0
    rel = np.inf
    for it in range(1, maxiter + 1):
        x = B @ theta
        g = gx - B @ (B.T @ gx)
        gnorm = np.linalg.norm(g)
        rel = gnorm * np.linalg.norm(x) / max(abs(val), 1e-300)
        log.debug("minimax step %d: level %.12g, relative gradient %.3e, step %.3g",
                  it, val, rel, step)
        if rel <= tol:
            return x, val, it, rel
        if theta[-1] <= 0:
            raise DeformationStall("peak left the half-space of the moving direction", best=x)
        P = red.hessian(x) + np.diag(ridge)
        P += 1e-12 * np.trace(P) / P.shape[0] * np.eye(P.shape[0])
        d = np.linalg.solve(P, g)
        d -= B @ (B.T @ d)
        d /= np.linalg.norm(d)
        rate = theta[-1] * (g @ d)
        s = min(1.0, 2 * step)
        while True:
            Bn = _orthonormal(L + [v - s * d])
            th0 = Bn.T @ x
            th_n, val_n, gx_n = peak_on_span(red, Bn, th0)
            if th_n[-1] > 0 and val_n <= val - 1e-4 * s * rate:
                break
            s /= 2
            if s < min_step:
                raise DeformationStall(
                    f"minimax level stopped decreasing at relative gradient {rel:.2e}", best=x)
        step = s
        B, v, theta, val, gx = Bn, Bn[:, -1], th_n, val_n, gx_n
    raise DeformationStall(f"no convergence after {maxiter} deformation steps "
                           f"(relative gradient {rel:.2e})", best=B @ theta)


# ------------------------------------------------------ schedule and bounds

@dataclass
class LinkingConfig:
    regime: str
    k: float
    l: float
    n: int
    m: Optional[int] = None
    r_n: float = np.nan
    rho_n: float = np.nan
    C_lower: float = np.nan
    C_upper: float = np.nan
    gamma: float = np.nan
    seed: int = 0
    sample_scale: int = 1

    def check(self, p, q):
        s = self.k / (self.k + self.l)
        if self.regime == "superlinear":
            ok = p / (p + 1) > s and q / (q + 1) > 1 - s
        else:
            ok = p / (p + 1) < s and q / (q + 1) < 1 - s
            if self.m is not None and self.m < 2 * self.n:
                raise BadSpec(f"sublinear levels need m >= 2n, got m={self.m}, n={self.n}")
        if not (self.k > 1 and self.l > 1 and ok):
            raise RegimeMismatch(f"exponents ({self.k}, {self.l}) violate the {self.regime} inequalities")
        if np.isfinite(self.r_n) and np.isfinite(self.rho_n) and not self.r_n < self.rho_n:
            raise ScheduleFailure(f"need r_n < rho_n, got {self.r_n} >= {self.rho_n}")

    @property
    def sample_count(self):
        return 16 * (2 * self.n + 1) * self.sample_scale

    def to_dict(self):
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


def sphere_factor(a, b):
    """min over x in [0, 1] of x^a + (1-x)^b: lower bound of the power sum on the unit X-sphere."""
    xs = np.linspace(0, 1, 20001)
    return float(np.min(xs**a + (1 - xs) ** b))


def calibrate_constants(spec, n_samples=10000, seed=0):
    """(C_lower, C_upper): half the empirical lower growth constant times the sphere factor, and A2."""
    A1, A2 = calibrate_growth(spec, n_samples=n_samples, seed=seed)
    return 0.5 * A1 * sphere_factor(spec.a, spec.b), A2


def _sampled_J(spec, basis, samples, t, k, l):
    top = samples.shape[1] // 2
    gj = GalerkinFunctional(spec, basis, range(1, top + 1))
    return np.array([gj.value(scale_coeffs(z, t, k, l)) for z in samples])


def radius_schedule(config, basis, spec, max_doublings=60):
    """(r_n, rho_n) from the gap-constant formulas plus the sampled sign conditions."""
    k, l, n = config.k, config.l, config.n
    ka, lb = k * spec.a, l * spec.b
    count = config.sample_count
    if config.regime == "superlinear":
        r = (config.C_lower / (2 * config.gamma)) ** (1 / (k + l - min(ka, lb)))
        Q = sphere_sample(SubspaceSpec("F_n", 2 * n + 1), basis, count, config.seed, spec)
        rho = 2 * r
        for _ in range(max_doublings):
            if _sampled_J(spec, basis, Q, rho, k, l).max() <= 0:
                return r, rho
            rho *= 2
        raise ScheduleFailure(f"sup of J on Q^{2 * n + 1} stayed positive up to rho={rho:g}")
    rho = (2 * config.gamma / config.C_lower) ** (1 / (max(ka, lb) - (k + l)))
    Q = sphere_sample(SubspaceSpec("F_n", 2 * n), basis, count, config.seed, spec)
    r = rho / 2
    for _ in range(max_doublings):
        if _sampled_J(spec, basis, Q, r, k, l).max() < 0:
            return r, rho
        r /= 2
    raise ScheduleFailure(f"sup of J on Q^{2 * n} stayed non-negative down to r={r:g}")


def linking_config(spec, basis, n, regime=None, m=None, seed=0, constants=None):
    """Exponents, calibrated constants, gap constant and radii for level n."""
    regime = regime or regime_of(spec.p, spec.q)
    k, l = choose_exponents(spec.p, spec.q, regime)
    C_lower, C_upper = constants if constants is not None else calibrate_constants(spec, seed=seed)
    if regime == "sublinear":
        if n < 2:
            raise BadSpec("sublinear levels start at n = 2 (the schedule uses gamma_{n-1})")
        gamma = gap_constants(basis, n - 1, spec.p, spec.q, seed=seed).gamma
        m = 2 * n + 4 if m is None else m
    else:
        gamma = gap_constants(basis, n, spec.p, spec.q, seed=seed).gamma
    cfg = LinkingConfig(regime, k, l, n, m, C_lower=C_lower, C_upper=C_upper,
                        gamma=gamma, seed=seed)
    cfg.check(spec.p, spec.q)
    cfg.r_n, cfg.rho_n = radius_schedule(cfg, basis, spec)
    cfg.check(spec.p, spec.q)
    return cfg


@dataclass
class LevelBounds:
    lower: float  # a_n (superlinear) or a~_n (sublinear)
    upper: float  # b_n or b~_n
    d_tilde: float = np.nan  # sublinear only

    def __iter__(self):
        return iter((self.lower, self.upper))


def _retract(z, t_max, spec, basis, k, l):
    f, g = basis.fields(z)
    t = scaled_radius(spec, f, g, k, l, basis.mesh)
    return z if t <= t_max else scale_coeffs(z, t_max / t, k, l)


def ball_infimum(spec, basis, m, rho, k, l, count, seed):
    """inf of J over the scaled ball of radius rho in G_m: samples, then projected descent."""
    gj = GalerkinFunctional(spec, basis, range(1, m + 1))
    dirs = sphere_sample(SubspaceSpec("G_n_m", 1, m), basis, count, seed, spec)
    best, zbest = np.inf, None
    for t in rho * 2.0 ** np.arange(-16, 1):
        for z in dirs:
            zt = scale_coeffs(z, t, k, l)
            val = gj.value(zt)
            if val < best:
                best, zbest = val, zt
    res = minimize(gj.value_grad, zbest, jac=True, method="BFGS",
                   options={"gtol": 1e-14, "maxiter": 500})
    z = _retract(res.x, rho, spec, basis, k, l)
    val = gj.value(z)
    if val >= best:
        return best, zbest
    # the unconstrained minimizer sits outside the ball: descend with retraction
    step = 1.0
    for _ in range(200):
        v0, g = gj.value_grad(z)
        zn = _retract(z - step * g, rho, spec, basis, k, l)
        vn = gj.value(zn)
        if vn < v0:
            z, step = zn, step * 1.5
        else:
            step /= 4
            if step < 1e-14:
                break
    return min(best, gj.value(z)), z


def level_bounds(config, basis, spec, solver=None):
    """Sampled sup / inf of J on the linking spheres at the scheduled radii."""
    k, l, n = config.k, config.l, config.n
    count = config.sample_count
    if config.regime == "superlinear":
        S = sphere_sample(SubspaceSpec("G_n_perp", n), basis, count, config.seed, spec)
        Q = sphere_sample(SubspaceSpec("F_n", 2 * n + 1), basis, count, config.seed, spec)
        return LevelBounds(float(_sampled_J(spec, basis, S, config.r_n, k, l).min()),
                           float(_sampled_J(spec, basis, Q, config.rho_n, k, l).max()))
    S = sphere_sample(SubspaceSpec("G_n_perp", n - 1), basis, count, config.seed, spec)
    Q = sphere_sample(SubspaceSpec("F_n", 2 * n), basis, count, config.seed, spec)
    m = config.m or 2 * n + 4
    d, _ = ball_infimum(spec, basis, m, config.rho_n, k, l, count, config.seed)
    return LevelBounds(float(_sampled_J(spec, basis, S, config.rho_n, k, l).min()),
                       float(_sampled_J(spec, basis, Q, config.r_n, k, l).max()), float(d))


# ------------------------------------------------------------------ searches

def _surface_samples(spec, basis, subspace, count, seed, rho, k, l, n_t=17):
    """J on a (t, direction) grid of a scaled ball; returns (directions, ts, values[t, dir]).

    The t-values are geometric, rho * 2^-(n_t - 1) ... rho, since level sets
    of J sit at very different scales in the two regimes.
    """
    dirs = sphere_sample(subspace, basis, count, seed, spec)
    ts = rho * 2.0 ** np.arange(-(n_t - 1), 1)
    vals = np.array([_sampled_J(spec, basis, dirs, t, k, l) for t in ts])
    return dirs, ts, vals


def fountain_search(config, basis, spec, solver, tol=1e-9):
    """Superlinear level n: sampled linking ball, minimax deformation, Newton in G_M.

    The ball B^{2n+1} is sampled on a (t, direction) grid; its sampled max is
    the undeformed level.  The surface is then deformed by the local minimax
    iteration on the reduced functional over the tail modes n..M (mountain
    pass in the tail, started from the sampled direction with the lowest
    ray maximum).  The peak is refined by Newton in G_M, M = 4(2n+1).
    """
    if config.regime != "superlinear":
        raise RegimeMismatch("fountain_search handles the superlinear regime")
    n, k, l = config.n, config.k, config.l
    M = 4 * (2 * n + 1)
    if M > basis.m_max:
        raise BadSpec(f"level {n} needs {M} modes, basis has {basis.m_max}")
    dirs, ts, vals = _surface_samples(spec, basis, SubspaceSpec("F_n", 2 * n + 1),
                                      config.sample_count, config.seed, config.rho_n, k, l)
    surface_max = float(vals.max())
    tail = GalerkinFunctional(spec, basis, range(n, M + 1))
    # x-coordinates of the sampled directions restricted to the tail modes
    top = dirs.shape[1] // 2
    xs = 0.5 * (dirs[:, n - 1:top] + dirs[:, top + n - 1:])
    ray_max = vals.max(axis=0)
    order = np.argsort(ray_max, kind="stable")
    v0 = None
    for i in order:
        if np.linalg.norm(xs[i]) > 1e-8:
            v0 = np.zeros(tail.m)
            v0[: xs.shape[1]] = xs[i] / np.linalg.norm(xs[i])
            break
    red = ReducedFunctional(tail)
    try:
        x, level_est, its, rel = local_minimax(red, [], v0)
    except DeformationStall as exc:
        raise DeformationStall(f"level {n}: {exc}", best=exc.best) from exc
    y = red.inner(x)[0]
    full = GalerkinFunctional(spec, basis, range(1, M + 1))
    try:
        out = _refine_from(full, tail.lift(red.z(x, y), M), solver, tol, level_estimate=level_est,
                           allow_unconverged=True)
    except NonConvergence as exc:
        raise DeformationStall(f"level {n}: Newton failed after deformation ({exc})",
                               best=exc.best) from exc
    out.iterations += its
    out.extra.update(surface_max=surface_max, deformation_steps=its,
                     deformation_rel_grad=float(rel))
    return out


def dual_fountain_search(n, m, basis, spec, solver, config=None, tol=1e-9, check_bracket=True):
    """Sublinear level n in G_m: min of J over the scaled ball of G_n^m, then Newton in G_m.

    The sampled (t, direction) grid of B^{n,m}_{rho_n} seeds a minimization
    of J over G_n^m; its value is the level estimate (the min over the
    undeformed ball), and Newton in G_m turns the minimizer into a critical
    point.  The refined level must lie in [d~_n - tol, b~_n].
    """
    if config is None:
        config = linking_config(spec, basis, n, "sublinear", m)
    if config.regime != "sublinear":
        raise RegimeMismatch("dual_fountain_search handles the sublinear regime")
    if m < 2 * n or m > basis.m_max:
        raise BadSpec(f"need 2n <= m <= m_max, got n={n}, m={m}")
    k, l = config.k, config.l
    dirs, ts, vals = _surface_samples(spec, basis, SubspaceSpec("G_n_m", n, m),
                                      config.sample_count, config.seed, config.rho_n, k, l)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    tail = GalerkinFunctional(spec, basis, range(n, m + 1))
    z0 = tail.restrict(scale_coeffs(dirs[j], ts[i], k, l))
    res = minimize(tail.value_grad, z0, jac=True, hess=tail.hessian, method="trust-exact",
                   options={"gtol": 1e-15, "maxiter": 500})
    level_est = float(min(res.fun, vals.min()))
    full = GalerkinFunctional(spec, basis, range(1, m + 1))
    try:
        out = _refine_from(full, tail.lift(res.x, m), solver, tol, level_estimate=level_est,
                           allow_unconverged=True)
    except NonConvergence as exc:
        raise DeformationStall(f"level {n}: Newton failed from the tail minimizer ({exc})",
                               best=exc.best) from exc
    out.iterations += int(res.nit)
    out.extra.update(sampled_min=float(vals.min()), tail_iterations=int(res.nit))
    if check_bracket:
        b = level_bounds(config, basis, spec, solver)
        out.extra.update(a_tilde=b.lower, b_tilde=b.upper, d_tilde=b.d_tilde)
        slack = 1e-9 * (1 + abs(b.d_tilde))
        if not (b.d_tilde - slack <= out.level_value <= b.upper and b.upper < 0):
            raise LevelOutOfBracket(
                f"level {out.level_value:.6e} outside [{b.d_tilde:.6e}, {b.upper:.6e}]",
                outcome=out)
    return out


# -------------------------------------------------------------------- polish

def _dual_newton(spec, solver, f0, g0, tol=1e-13, maxiter=100):
    """Newton on (L H*_f(f, g) - g, L H*_g(f, g) - f) over all nodes."""
    L, n, mesh = solver.L, solver.mesh.size, solver.mesh
    f, g = np.array(f0, dtype=float), np.array(g0, dtype=float)
    eye = sp.identity(n, format="csc")

    def resid(f, g):
        _, u, v = conjugate_arrays(spec, f, g)
        return np.concatenate([L @ u - g, L @ v - f])

    r = resid(f, g)
    for it in range(maxiter + 1):
        rn = l2_norm(r, mesh)
        scale = l2_norm(f, mesh) + l2_norm(g, mesh)
        if rn <= tol * max(scale, 1.0):
            return f, g, it
        if it == maxiter:
            break
        dff, dfg, dgg = hess_conjugate(spec, f, g)
        Jac = sp.bmat([[L @ sp.diags(dff), L @ sp.diags(dfg) - eye],
                       [L @ sp.diags(dfg) - eye, L @ sp.diags(dgg)]], format="csc")
        d = spsolve(Jac, -r)
        s = 1.0
        while True:
            fn, gn = f + s * d[:n], g + s * d[n:]
            rnew = resid(fn, gn)
            if l2_norm(rnew, mesh) <= (1 - 1e-4 * s) * rn or s < 1e-10:
                break
            s /= 2
        f, g, r = fn, gn, rnew
    raise NonConvergence(f"dual Newton: residual {l2_norm(r, mesh):.3e} after {maxiter} steps",
                         best=(f, g))


def polish_full(spec, solver, point):
    """Full-mesh Newton from a Galerkin critical point; returns (DualPoint, info, primal).

    Works on (u, v) when H is twice differentiable (p, q >= 1) and on
    (f, g) otherwise, where the conjugate is the smooth one.  ``primal`` is
    the polished (u, v) pair of fields in the first case and None otherwise.
    """
    mesh = solver.mesh
    f0, g0 = point.f.values, point.g.values
    if spec.p >= 1 and spec.q >= 1:
        _, u0, v0 = conjugate_arrays(spec, f0, g0)
        u, v, info = newton_primal(spec, solver, u0, v0, info=True)
        hu, hv = grad_H(spec, u.values, v.values)
        return DualPoint.from_arrays(hu, hv, mesh), {"variables": "primal", **info}, (u, v)
    f, g, its = _dual_newton(spec, solver, f0, g0)
    return DualPoint.from_arrays(f, g, mesh), {"variables": "dual", "iterations": its}, None
