"""Invariant suite behind ``hamdual verify``.

Each group is a function of a shared context that returns a detail dict
and raises ``InvariantFailure`` (or any package error) when its check
fails.  ``run_checks`` runs them in order and collects a report.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .conjugate import (biconjugate, calibrate_growth, check_H3, conjugate_arrays, eval_H,
                        grad_H, validate)
from .decomposition import (SubspaceSpec, bilinear_bound_ratio, build_basis, gap_constants,
                            positivity_constant)
from .discretization import LaplacianSolver, apply_A
from .errors import HamdualError
from .functional import (energy_identity_gap, grad_J, gradJ_arrays, J_arrays, pde_residual,
                         recover_primal, DualPoint)
from .minimax import _sampled_J, choose_exponents, regime_of, sphere_sample
from .oracle import brute_force_auto


class InvariantFailure(HamdualError):
    pass


@dataclass
class Context:
    spec: object
    mesh: object
    seed: int = 0
    m_max: int = 40
    cache: dict = field(default_factory=dict)

    @property
    def rng(self):
        return np.random.default_rng(self.seed)

    @property
    def basis(self):
        if "basis" not in self.cache:
            self.cache["basis"] = build_basis(self.mesh, self.m_max)
        return self.cache["basis"]

    @property
    def solver(self):
        if "solver" not in self.cache:
            self.cache["solver"] = LaplacianSolver(self.mesh)
        return self.cache["solver"]

    @property
    def regime(self):
        return regime_of(self.spec.p, self.spec.q)


def _require(ok, message):
    if not ok:
        raise InvariantFailure(message)


def central_difference(fun, x, h=1e-6):
    """Central-difference gradient of a scalar function of a small vector."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        out[i] = (fun(x + e) - fun(x - e)) / (2 * e[i])
    return out


def _smooth_field(ctx, rng, modes=8, scale=1.0):
    c = rng.standard_normal(modes) / (1 + np.arange(modes))
    return scale * (ctx.basis.G[:, :modes] @ c)


# ---------------------------------------------------------------- groups

def hamiltonian_validation(ctx):
    rep = validate(ctx.spec, seed=ctx.seed)
    return {"C1": rep.C1, "C2": rep.C2, "samples": rep.n_samples}


def conjugate_brute_force(ctx, count=40):
    pts = ctx.rng.uniform(-5, 5, size=(count, 2))
    val = conjugate_arrays(ctx.spec, pts[:, 0], pts[:, 1])[0]
    ref = np.array([brute_force_auto(ctx.spec, f, g) for f, g in pts])
    err = float(np.max(np.abs(val - ref)))
    _require(err <= 1e-5, f"conjugate differs from grid maximum by {err:.3e}")
    return {"max_error": err, "points": count}


def fenchel_young(ctx, count=1000):
    f, g = ctx.rng.uniform(-5, 5, size=(2, count))
    val, u, v = conjugate_arrays(ctx.spec, f, g)
    # equality at the maximizer, and the gradient condition (f, g) = grad H(u, v)
    eq = np.abs(val + eval_H(ctx.spec, u, v) - f * u - g * v)
    hu, hv = grad_H(ctx.spec, u, v)
    inv = np.hypot(hu - f, hv - g) / (1 + np.hypot(f, g))
    # the inequality at points other than the maximizer
    s, t = ctx.rng.uniform(-3, 3, size=(2, count))
    slack = val + eval_H(ctx.spec, s, t) - f * s - g * t
    _require(eq.max() <= 1e-9, f"Fenchel-Young equality residual {eq.max():.3e}")
    _require(inv.max() <= 1e-8, f"argmax does not invert grad H ({inv.max():.3e})")
    _require(slack.min() >= -1e-9, f"Fenchel-Young inequality violated ({slack.min():.3e})")
    return {"equality": float(eq.max()), "inversion": float(inv.max()),
            "min_slack": float(slack.min())}


def conjugate_involution(ctx, size=61):
    ax = np.linspace(-3, 3, size)
    U, V = np.meshgrid(ax, ax)
    err = float(np.max(np.abs(biconjugate(ctx.spec, U, V) - eval_H(ctx.spec, U, V))))
    _require(err <= 1e-6, f"H** differs from H by {err:.3e}")
    return {"max_error": err, "grid": size}


def growth_constants(ctx):
    A1, A2 = calibrate_growth(ctx.spec, seed=ctx.seed)
    _require(0 < A1 <= A2 < np.inf, f"growth constants ({A1}, {A2}) are not a sandwich")
    out = {"A1": A1, "A2": A2}
    if ctx.regime == "superlinear":
        out["C3"], out["C4"] = check_H3(ctx.spec, seed=ctx.seed)
    return out


def grad_H_fd(ctx, count=60):
    pts = ctx.rng.uniform(-3, 3, size=(count, 2))
    worst = 0.0
    for z in pts:
        an = np.array(grad_H(ctx.spec, *z))
        fd = central_difference(lambda w: float(eval_H(ctx.spec, *w)), z)
        worst = max(worst, np.linalg.norm(an - fd) / max(np.linalg.norm(an), 1e-8))
    _require(worst <= 1e-5, f"grad H relative FD error {worst:.3e}")
    return {"max_rel_error": worst, "points": count}


def grad_conjugate_fd(ctx, count=60):
    pts = ctx.rng.uniform(-3, 3, size=(count, 2))
    worst = 0.0
    for z in pts:
        _, u, v = conjugate_arrays(ctx.spec, *z)
        an = np.array([float(u), float(v)])
        fd = central_difference(lambda w: float(conjugate_arrays(ctx.spec, *w)[0]), z)
        worst = max(worst, np.linalg.norm(an - fd) / max(np.linalg.norm(an), 1e-8))
    _require(worst <= 1e-5, f"grad H* relative FD error {worst:.3e}")
    return {"max_rel_error": worst, "points": count}


def grad_J_fd(ctx, count=50):
    rng = ctx.rng
    sol, w = ctx.solver, ctx.mesh.weight
    worst = 0.0
    for _ in range(count):
        f, g = _smooth_field(ctx, rng), _smooth_field(ctx, rng)
        df, dg, _, _ = gradJ_arrays(ctx.spec, sol, f, g)
        # directional derivative along a random smooth direction
        pf, pg = _smooth_field(ctx, rng), _smooth_field(ctx, rng)
        an = w * (np.dot(df, pf) + np.dot(dg, pg))
        h = 1e-6
        fd = (J_arrays(ctx.spec, sol, f + h * pf, g + h * pg)
              - J_arrays(ctx.spec, sol, f - h * pf, g - h * pg)) / (2 * h)
        scale = w * (np.linalg.norm(df) * np.linalg.norm(pf) + np.linalg.norm(dg) * np.linalg.norm(pg))
        worst = max(worst, abs(an - fd) / max(scale, 1e-12))
    _require(worst <= 1e-5, f"grad J relative FD error {worst:.3e}")
    return {"max_rel_error": float(worst), "points": count}


def grad_J_oddness(ctx, count=20):
    rng = ctx.rng
    for _ in range(count):
        pt = DualPoint.from_arrays(_smooth_field(ctx, rng), _smooth_field(ctx, rng), ctx.mesh)
        a, b = grad_J(ctx.spec, ctx.solver, pt), grad_J(ctx.spec, ctx.solver, -pt)
        _require(np.array_equal(a.f.values, -b.f.values) and np.array_equal(a.g.values, -b.g.values),
                 "grad J(-z) != -grad J(z)")
    return {"points": count}


def inverse_laplacian(ctx):
    mesh, sol = ctx.mesh, ctx.solver
    X = mesh.coords
    rhs = np.prod(np.sin(np.pi * X), axis=1)
    w = apply_A(sol, rhs)
    err = float(np.max(np.abs(w - rhs / (mesh.dim * np.pi**2))))
    _require(err <= 2 * mesh.h**2, f"eigenpair error {err:.3e} is not O(h^2)")
    rng = ctx.rng
    a, b = rng.standard_normal((2, mesh.size))
    back = float(np.max(np.abs(sol.A(sol.neg_laplacian(a)) - a)))
    asym = abs(np.dot(sol.A(a), b) - np.dot(a, sol.A(b))) / (1 + abs(np.dot(sol.A(a), b)))
    _require(back <= 1e-10, f"A(-Delta w) - w = {back:.3e}")
    _require(asym <= 1e-12, f"A is not symmetric ({asym:.3e})")
    return {"eigenpair_error": err, "roundtrip": back, "asymmetry": float(asym)}


def biorthogonality(ctx):
    B, sol, w = ctx.basis, ctx.solver, ctx.mesh.weight
    F = B.G * B.eigenvalues
    AG = np.column_stack([sol.A(B.G[:, j]) for j in range(B.m_max)])
    dev = float(np.max(np.abs(w * F.T @ AG - np.eye(B.m_max))))
    eig = float(np.max(np.abs(sol.neg_laplacian(B.G) - B.G * B.eigenvalues))
                / B.eigenvalues.max())
    _require(dev <= 1e-9, f"biorthogonality matrix off identity by {dev:.3e}")
    _require(eig <= 1e-9, f"basis columns are not discrete eigenvectors ({eig:.3e})")
    return {"deviation": dev, "eigen_residual": eig, "m_max": B.m_max}


def gap_constant_trend(ctx):
    ns = [n for n in (1, 5, 10, 20) if n < ctx.basis.m_max]
    gam = [gap_constants(ctx.basis, n, ctx.spec.p, ctx.spec.q, seed=ctx.seed).gamma for n in ns]
    _require(all(x > y for x, y in zip(gam, gam[1:])), f"gamma_n not decreasing: {gam}")
    # eigenvalues grow like j^2 only in 1D; in 2D the drop is much slower
    if ns[-1] == 20 and ctx.mesh.dim == 1:
        _require(gam[-1] < 0.1 * gam[0], f"gamma_20 = {gam[-1]:.3e} >= 0.1 gamma_1")
    return {"n": ns, "gamma": gam}


def pairing_bound(ctx, n=3):
    """Sampled |inner(f, A g)| against gamma_n times the norms on the complement."""
    gam = gap_constants(ctx.basis, n, ctx.spec.p, ctx.spec.q, seed=ctx.seed).gamma
    ratio = bilinear_bound_ratio(ctx.basis, n, ctx.spec.p, ctx.spec.q, count=1000, seed=ctx.seed)
    _require(ratio <= gam * (1 + 1e-6), f"pairing ratio {ratio:.6e} exceeds gamma_{n} = {gam:.6e}")
    return {"n": n, "ratio": ratio, "gamma": gam}


def positivity(ctx):
    top = min(20, ctx.basis.m_max)
    C = [positivity_constant(ctx.basis, n, ctx.spec.p, ctx.spec.q, seed=ctx.seed)
         for n in range(1, top + 1)]
    return {"C": C}


def energy_identity_controls(ctx):
    spec, sol, mesh = ctx.spec, ctx.solver, ctx.mesh
    zero = DualPoint.zeros(mesh)
    _require(energy_identity_gap(spec, sol, zero) == 0.0, "identity gap at zero is not 0")
    rng = ctx.rng
    gaps, res = [], []
    for _ in range(5):
        pt = DualPoint.from_arrays(_smooth_field(ctx, rng), _smooth_field(ctx, rng), mesh)
        u, v = recover_primal(spec, pt)
        J = J_arrays(spec, sol, pt.f.values, pt.g.values)
        gaps.append(energy_identity_gap(spec, sol, pt) / (1 + abs(J)))
        res.append(max(pde_residual(spec, sol, u, v)))
    _require(min(gaps) > 1e-6, f"identity gap {min(gaps):.3e} at a non-critical point")
    _require(min(res) > 1e-3, f"PDE residual {min(res):.3e} at a non-solution")
    return {"min_gap": min(gaps), "min_residual": min(res)}


def scaling_signature(ctx, n=2, count=20):
    """Exponent inequalities, and the sign of J far out along scaled rays."""
    spec, p, q = ctx.spec, ctx.spec.p, ctx.spec.q
    k, l = choose_exponents(p, q, ctx.regime)
    s = k / (k + l)
    if ctx.regime == "superlinear":
        _require(k > 1 and l > 1 and p / (p + 1) > s and q / (q + 1) > 1 - s,
                 f"exponents ({k}, {l}) violate the superlinear inequalities")
        dirs = sphere_sample(SubspaceSpec("F_n", n), ctx.basis, count, ctx.seed, spec)
        vals = [_sampled_J(spec, ctx.basis, dirs, t, k, l).max() for t in (1e2, 1e4, 1e6)]
        _require(vals[-1] < 0 and vals[0] > vals[1] > vals[2],
                 f"J does not fall off along scaled F_n rays: {vals}")
    else:
        _require(k > 1 and l > 1 and p / (p + 1) < s and q / (q + 1) < 1 - s,
                 f"exponents ({k}, {l}) violate the sublinear inequalities")
        dirs = sphere_sample(SubspaceSpec("G_n", n), ctx.basis, count, ctx.seed, spec)
        vals = [_sampled_J(spec, ctx.basis, dirs, t, 1, 1).min() for t in (1e2, 1e4, 1e6)]
        _require(vals[0] > 0 and vals[0] < vals[1] < vals[2],
                 f"J is not coercive along rays: {vals}")
    return {"k": k, "l": l, "far_values": [float(v) for v in vals]}


GROUPS = [
    ("hamiltonian_validation", hamiltonian_validation),
    ("conjugate_brute_force", conjugate_brute_force),
    ("fenchel_young", fenchel_young),
    ("conjugate_involution", conjugate_involution),
    ("growth_constants", growth_constants),
    ("grad_H_fd", grad_H_fd),
    ("grad_conjugate_fd", grad_conjugate_fd),
    ("grad_J_fd", grad_J_fd),
    ("grad_J_oddness", grad_J_oddness),
    ("inverse_laplacian", inverse_laplacian),
    ("biorthogonality", biorthogonality),
    ("gap_constant_trend", gap_constant_trend),
    ("pairing_bound", pairing_bound),
    ("positivity_constant", positivity),
    ("energy_identity_controls", energy_identity_controls),
    ("scaling_signature", scaling_signature),
]


@dataclass
class CheckResult:
    name: str
    status: str  # passed, failed or skipped
    detail: dict
    seconds: float = 0.0

    @property
    def passed(self):
        return self.status == "passed"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def run_checks(spec, mesh, seed=0, m_max=40, groups=None):
    """Run the invariant groups; a failed Hamiltonian validation skips the rest."""
    ctx = Context(spec, mesh, seed=seed, m_max=m_max)
    results = []
    for name, fn in groups or GROUPS:
        if results and results[0].name == "hamiltonian_validation" and not results[0].passed:
            results.append(CheckResult(name, "skipped", {"reason": "Hamiltonian rejected"}))
            continue
        t0 = time.perf_counter()
        try:
            detail = fn(ctx)
            status = "passed"
        except HamdualError as exc:
            detail = {"error": type(exc).__name__, "message": str(exc)}
            check = getattr(exc, "check", None)
            if check is not None:
                detail["check"] = check
            status = "failed"
        results.append(CheckResult(name, status, _jsonable(detail), time.perf_counter() - t0))
    return results


def report(results):
    failed = [r for r in results if r.status == "failed"]
    return {
        "passed": sum(r.passed for r in results),
        "failed": len(failed),
        "first_failure": failed[0].name if failed else None,
        "groups": [{"name": r.name, "status": r.status, "seconds": round(r.seconds, 3),
                    "detail": r.detail} for r in results],
    }
