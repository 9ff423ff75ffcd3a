"""Hamiltonian family H_eps, its gradient/Hessian and its Legendre-Fenchel conjugate.

    H(u, v) = |u|^(p+1) + |v|^(q+1) + eps |u|^alpha |v|^beta

All functions broadcast over numpy arrays; scalars go in and come out as
0-d results.  The conjugate is closed form when eps == 0 and otherwise
obtained by a vectorized damped Newton ascent of (t, s) -> t f + s g - H(t, s).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import H3Violation, InvalidHamiltonian, NonConvergence

# second derivatives of |t|^a with a < 2 blow up at 0
HESS_OFFSET = 1e-14
NEWTON_TOL = 1e-10
NEWTON_MAXITER = 200


def spow(x, a):
    """sign(x) |x|^a."""
    return np.sign(x) * np.abs(x) ** a


def _apow(x, a):
    if a < 0:
        return np.maximum(np.abs(x), HESS_OFFSET) ** a
    return np.abs(x) ** a


@dataclass(frozen=True)
class CustomHamiltonian:
    """User-supplied convex even Hamiltonian.

    Each callable takes broadcastable arrays (u, v); ``grad`` returns
    (H_u, H_v) and ``hess`` returns (H_uu, H_uv, H_vv).
    """

    H: Callable
    grad: Callable
    hess: Callable


@dataclass(frozen=True)
class HamiltonianSpec:
    p: float
    q: float
    eps: float = 0.0
    alpha: Optional[float] = None
    beta: Optional[float] = None
    theta: float = 0.5
    custom: Optional[CustomHamiltonian] = field(default=None, compare=False)

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise InvalidHamiltonian("exponents", "p and q must be positive")
        # alpha/(p+1) + beta/(q+1) = 1 with the weight split evenly
        if self.alpha is None:
            object.__setattr__(self, "alpha", (self.p + 1) / 2)
        if self.beta is None:
            object.__setattr__(self, "beta", (self.q + 1) / 2)

    @property
    def closed_form(self):
        return self.eps == 0 and self.custom is None

    @property
    def a(self):
        """Conjugate exponent 1 + 1/p (the f-side Lebesgue exponent)."""
        return 1 + 1 / self.p

    @property
    def b(self):
        return 1 + 1 / self.q

    def to_dict(self):
        return {"p": self.p, "q": self.q, "eps": self.eps, "alpha": self.alpha,
                "beta": self.beta, "theta": self.theta}


@dataclass(frozen=True)
class ConjugateValue:
    value: float
    argmax_u: float
    argmax_v: float


def eval_H(spec, u, v):
    if spec.custom is not None:
        return spec.custom.H(u, v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.abs(u) ** (spec.p + 1) + np.abs(v) ** (spec.q + 1)
    if spec.eps:
        out = out + spec.eps * np.abs(u) ** spec.alpha * np.abs(v) ** spec.beta
    return out


def grad_H(spec, u, v):
    if spec.custom is not None:
        return spec.custom.grad(u, v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    p, q = spec.p, spec.q
    hu = (p + 1) * spow(u, p)
    hv = (q + 1) * spow(v, q)
    if spec.eps:
        al, be = spec.alpha, spec.beta
        hu = hu + spec.eps * al * spow(u, al - 1) * np.abs(v) ** be
        hv = hv + spec.eps * be * np.abs(u) ** al * spow(v, be - 1)
    return hu, hv


def hess_H(spec, u, v):
    """(H_uu, H_uv, H_vv), with singular powers evaluated at |t| >= HESS_OFFSET."""
    if spec.custom is not None:
        return spec.custom.hess(u, v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    p, q = spec.p, spec.q
    huu = (p + 1) * p * _apow(u, p - 1)
    hvv = (q + 1) * q * _apow(v, q - 1)
    huv = np.zeros(np.broadcast(u, v).shape)
    if spec.eps:
        al, be, e = spec.alpha, spec.beta, spec.eps
        huu = huu + e * al * (al - 1) * _apow(u, al - 2) * np.abs(v) ** be
        hvv = hvv + e * be * (be - 1) * np.abs(u) ** al * _apow(v, be - 2)
        huv = huv + e * al * be * spow(u, al - 1) * spow(v, be - 1)
    return huu, huv, hvv


def conjugate_constant(p):
    """c_p with sup_t (t f - |t|^(p+1)) = c_p |f|^(1+1/p)."""
    return p * (p + 1) ** (-(p + 1) / p)


def _start(spec, f, g):
    return spow(f / (spec.p + 1), 1 / spec.p), spow(g / (spec.q + 1), 1 / spec.q)


def _axis_root(fun, x0):
    """Root of an increasing scalar function, bracketed outward from x0."""
    w = abs(x0) + 1.0
    lo, hi = x0 - w, x0 + w
    while fun(lo) > 0:
        lo -= 2 * (hi - lo)
    while fun(hi) < 0:
        hi += 2 * (hi - lo)
    return brentq(fun, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _axis_polish(spec, f, g, t, s, tol, sweeps=200):
    """Block coordinate ascent solving H_u(t, s) = f and H_v(t, s) = g one axis at a time.

    By convexity each partial derivative is increasing along its own axis,
    so every axis solve is a monotone root problem.  This converges where
    Newton oscillates, e.g. when H_uu is unbounded near u = 0.
    """
    scale = max(1.0, abs(f) + abs(g))
    for _ in range(sweeps):
        t = _axis_root(lambda x: float(grad_H(spec, x, s)[0]) - f, t)
        s = _axis_root(lambda y: float(grad_H(spec, t, y)[1]) - g, s)
        hu, hv = grad_H(spec, t, s)
        if np.hypot(hu - f, hv - g) <= tol * scale:
            break
    return t, s


def conjugate_arrays(spec, f, g, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER, start=None):
    """Vectorized H*(f, g) and its maximizer; returns (value, u, v) arrays.

    ``start`` optionally warm-starts the Newton ascent with a guess (u, v)
    of the same shape, e.g. the maximizer at a nearby (f, g).
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    f, g = np.broadcast_arrays(f, g)
    shape = f.shape
    f = f.ravel()
    g = g.ravel()
    if spec.closed_form:
        u, v = _start(spec, f, g)
        val = (conjugate_constant(spec.p) * np.abs(f) ** spec.a
               + conjugate_constant(spec.q) * np.abs(g) ** spec.b)
        return val.reshape(shape), u.reshape(shape), v.reshape(shape)

    if start is None:
        t, s = _start(spec, f, g)
    else:
        t, s = (np.array(x, dtype=float).ravel() for x in start)
    scale = np.maximum(1.0, np.abs(f) + np.abs(g))
    active = np.ones(f.shape, dtype=bool)
    for _ in range(maxiter):
        hu, hv = grad_H(spec, t, s)
        r1, r2 = f - hu, g - hv
        active = np.hypot(r1, r2) > tol * scale
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        ti, si, fi, gi = t[idx], s[idx], f[idx], g[idx]
        r1, r2 = r1[idx], r2[idx]
        a, b, c = hess_H(spec, ti, si)
        det = a * c - b * b
        ok = np.isfinite(det) & (det > 0)
        safe = np.where(ok, det, 1.0)
        d1 = np.where(ok, (c * r1 - b * r2) / safe, r1)
        d2 = np.where(ok, (a * r2 - b * r1) / safe, r2)
        phi0 = ti * fi + si * gi - eval_H(spec, ti, si)
        slope = r1 * d1 + r2 * d2
        lam = np.ones_like(ti)
        pending = np.ones_like(ti, dtype=bool)
        for _ in range(60):
            tn, sn = ti + lam * d1, si + lam * d2
            phi = tn * fi + sn * gi - eval_H(spec, tn, sn)
            good = phi >= phi0 + 1e-4 * lam * slope - 1e-15 * np.abs(phi0)
            pending &= ~good
            if not pending.any():
                break
            lam = np.where(pending, lam / 2, lam)
        t[idx] = ti + lam * d1
        s[idx] = si + lam * d2
    hu, hv = grad_H(spec, t, s)
    active = np.hypot(f - hu, g - hv) > tol * scale
    for i in np.nonzero(active)[0]:
        t[i], s[i] = _axis_polish(spec, f[i], g[i], t[i], s[i], tol)
        hu_i, hv_i = grad_H(spec, t[i], s[i])
        if np.hypot(f[i] - hu_i, g[i] - hv_i) > 1e3 * tol * scale[i]:
            raise NonConvergence(
                f"conjugate maximization failed at (f, g) = ({f[i]}, {g[i]})",
                best=(t[i], s[i]))
    val = f * t + g * s - eval_H(spec, t, s)
    return val.reshape(shape), t.reshape(shape), s.reshape(shape)


def conjugate_point(spec, f, g):
    val, u, v = conjugate_arrays(spec, f, g)
    return ConjugateValue(float(val), float(u), float(v))


def conjugate_value(spec, f, g):
    return conjugate_arrays(spec, f, g)[0]


def grad_conjugate(spec, f, g):
    """grad H*(f, g), i.e. the maximizer in the conjugate sup."""
    _, u, v = conjugate_arrays(spec, f, g)
    return u, v


def hess_conjugate(spec, f, g, uv=None):
    """(H*_ff, H*_fg, H*_gg) = inverse Hessian of H at grad H*(f, g)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if spec.closed_form:
        p, q = spec.p, spec.q
        dff = (1 / p) * (p + 1) ** (-1 / p) * _apow(f, 1 / p - 1)
        dgg = (1 / q) * (q + 1) ** (-1 / q) * _apow(g, 1 / q - 1)
        return dff, np.zeros(np.broadcast(f, g).shape), dgg
    u, v = grad_conjugate(spec, f, g) if uv is None else uv
    a, b, c = hess_H(spec, u, v)
    det = a * c - b * b
    det = np.where(det > 0, det, HESS_OFFSET)
    return c / det, -b / det, a / det


def biconjugate(spec, u, v, tol=1e-13, maxiter=500):
    """H**(u, v) = sup_(f, g) u f + v g - H*(f, g), by vectorized damped Newton in (f, g).

    Only H* and its derivatives enter, so agreement with H is an independent
    check of the conjugate.  Starts from (f, g) = (u, v).  Where the maximizer
    sits at a degenerate point of H* convergence is only linear, hence the
    generous iteration cap; converged points drop out of the loop.
    """
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    shape = u.shape
    u, v = u.ravel(), v.ravel()
    f, g = u.copy(), v.copy()
    val, x, y = conjugate_arrays(spec, f, g)
    phi = u * f + v * g - val
    active = np.arange(u.size)
    for _ in range(maxiter):
        r1, r2 = u[active] - x[active], v[active] - y[active]
        done = np.hypot(r1, r2) <= tol * np.maximum(1.0, np.abs(u[active]) + np.abs(v[active]))
        active, r1, r2 = active[~done], r1[~done], r2[~done]
        if active.size == 0:
            break
        fa, ga, ua, va, pa = f[active], g[active], u[active], v[active], phi[active]
        a, b, c = hess_conjugate(spec, fa, ga, uv=(x[active], y[active]))
        det = a * c - b * b
        ok = np.isfinite(det) & (det > 0)
        safe = np.where(ok, det, 1.0)
        d1 = np.where(ok, (c * r1 - b * r2) / safe, r1)
        d2 = np.where(ok, (a * r2 - b * r1) / safe, r2)
        slope = r1 * d1 + r2 * d2
        lam = np.ones_like(fa)
        pending = np.ones_like(fa, dtype=bool)
        for _ in range(60):
            vn, xn, yn = conjugate_arrays(spec, fa + lam * d1, ga + lam * d2)
            pn = ua * (fa + lam * d1) + va * (ga + lam * d2) - vn
            pending &= ~(pn >= pa + 1e-4 * lam * slope - 1e-15 * np.abs(pa))
            if not pending.any():
                break
            lam = np.where(pending, lam / 2, lam)
        f[active], g[active] = fa + lam * d1, ga + lam * d2
        phi[active], x[active], y[active] = pn, xn, yn
    return phi.reshape(shape)


# ----------------------------------------------------------------- validation

@dataclass
class ValidationReport:
    C1: float
    C2: float
    n_samples: int
    box: float


def _samples(n, box, rng):
    # mix uniform box points with log-scaled ones so small magnitudes get probed
    z = rng.uniform(-box, box, size=(n, 2))
    mag = np.exp(rng.uniform(np.log(1e-4), np.log(box), size=(n // 2, 1)))
    ang = rng.uniform(0, 2 * np.pi, size=(n // 2, 1))
    z[: n // 2] = mag * np.hstack([np.cos(ang), np.sin(ang)])
    return z


def validate(spec, box=3.0, n_samples=20000, seed=0):
    """Sampled checks of the coupling constraint, convexity, evenness and (H1)."""
    if spec.custom is None and spec.eps:
        if spec.alpha <= 1 or spec.beta <= 1:
            raise InvalidHamiltonian("coupling", "alpha and beta must exceed 1")
        s = spec.alpha / (spec.p + 1) + spec.beta / (spec.q + 1)
        if abs(s - 1) > 1e-12:
            raise InvalidHamiltonian(
                "coupling", f"alpha/(p+1) + beta/(q+1) = {s!r}, must equal 1")
    rng = np.random.default_rng(seed)
    z1 = _samples(n_samples, box, rng)
    z2 = _samples(n_samples, box, rng)
    mid = eval_H(spec, *(0.5 * (z1 + z2)).T)
    avg = 0.5 * (eval_H(spec, *z1.T) + eval_H(spec, *z2.T))
    bad = mid > avg + 1e-10
    if bad.any():
        i = int(np.argmax(mid - avg))
        raise InvalidHamiltonian("convexity", "midpoint convexity fails",
                                 point=(tuple(z1[i]), tuple(z2[i])))
    a, b, c = hess_H(spec, *z1.T)
    det = a * c - b * b
    bad = (a < 0) | (det < -1e-10 * (1 + np.abs(a * c)))
    if bad.any():
        i = int(np.nonzero(bad)[0][0])
        raise InvalidHamiltonian("convexity", "Hessian not positive semidefinite",
                                 point=tuple(z1[i]))
    h = eval_H(spec, *z1.T)
    hm = eval_H(spec, *(-z1).T)
    if np.any(h != hm):
        i = int(np.nonzero(h != hm)[0][0])
        raise InvalidHamiltonian("evenness", "H(-u,-v) != H(u,v)", point=tuple(z1[i]))
    u, v = z1.T
    hu, hv = grad_H(spec, u, v)
    au, av = np.abs(u), np.abs(v)
    pu, pv = au ** (spec.p + 1), av ** (spec.q + 1)
    cross = au ** spec.alpha * av ** spec.beta
    keep_u, keep_v = pu > 1e-300, pv > 1e-300
    low = min((hu * u / np.where(keep_u, pu, 1))[keep_u].min(),
              (hv * v / np.where(keep_v, pv, 1))[keep_v].min())
    up = max((hu * u / (pu + cross))[keep_u].max(),
             (hv * v / (pv + cross))[keep_v].max())
    if not (low > 0 and np.isfinite(up)):
        raise InvalidHamiltonian("H1", f"no positive lower constant (C1 = {low:g})")
    return ValidationReport(C1=float(low), C2=float(up), n_samples=n_samples, box=box)


def check_H3(spec, sample_box=10.0, n_samples=20000, seed=0):
    """Estimate (C3, C4) for theta H_u u + (1-theta) H_v v - H >= C3 P - C4.

    P = |u|^(p+1) + |v|^(q+1).  C3 is the smallest ratio LHS/P over the
    outer half of the sample box (where the constant C4 cannot help);
    C4 is then the smallest constant making every sample satisfy the
    inequality.  A non-positive C3 raises H3Violation.
    """
    rng = np.random.default_rng(seed)
    z = _samples(n_samples, sample_box, rng)
    z = np.vstack([z, [[0.0, 0.0]]])
    u, v = z.T
    hu, hv = grad_H(spec, u, v)
    lhs = spec.theta * hu * u + (1 - spec.theta) * hv * v - eval_H(spec, u, v)
    P = np.abs(u) ** (spec.p + 1) + np.abs(v) ** (spec.q + 1)
    outer = np.max(np.abs(z), axis=1) >= sample_box / 2
    ratio = lhs[outer] / P[outer]
    i = int(np.argmin(ratio))
    c3 = float(ratio[i])
    if c3 <= 0:
        raise H3Violation(z[outer][i])
    c4 = float(max(0.0, np.max(c3 * P - lhs)))
    return c3, c4


def calibrate_growth(spec, n_samples=10000, seed=0):
    """Empirical (A1, A2) with A1 <= H*(f,g) / (|f|^(1+1/p) + |g|^(1+1/q)) <= A2."""
    rng = np.random.default_rng(seed)
    mag = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=n_samples))
    ang = rng.uniform(0, 2 * np.pi, size=n_samples)
    f, g = mag * np.cos(ang), mag * np.sin(ang)
    val = conjugate_value(spec, f, g)
    ratio = val / (np.abs(f) ** spec.a + np.abs(g) ** spec.b)
    return float(ratio.min()), float(ratio.max())
