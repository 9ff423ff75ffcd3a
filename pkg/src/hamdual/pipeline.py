"""Run minimax levels end to end: schedule, search, full-mesh polish, certification."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .decomposition import build_basis
from .discretization import LaplacianSolver
from .errors import DeformationStall
from .functional import SolutionRecord, distinct
from .minimax import (LevelBounds, LinkingConfig, MinimaxOutcome, calibrate_constants,
                      dual_fountain_search, fountain_search, level_bounds, linking_config,
                      polish_full, regime_of)


@dataclass
class Tolerances:
    identity: float = 1e-6
    residual: float = 1e-6
    newton: float = 1e-9


@dataclass
class LevelResult:
    record: SolutionRecord
    config: LinkingConfig
    outcome: MinimaxOutcome
    bounds: LevelBounds
    certified: bool
    distinct_from_previous: Optional[bool] = None
    polish: dict = field(default_factory=dict)

    def row(self):
        r = self.record
        return {
            "n": r.level_index,
            "m": r.galerkin_m,
            "J": r.J_value,
            "I": r.I_value,
            "identity_gap": r.identity_gap,
            "residual_u": r.residual_u,
            "residual_v": r.residual_v,
            "level_estimate": self.outcome.level_estimate,
            "galerkin_level": self.outcome.level_value,
            "distinct_from_previous": ("" if self.distinct_from_previous is None
                                       else int(self.distinct_from_previous)),
            "certified": int(self.certified),
        }


def certify(record, tol):
    """Energy identity and PDE residual checks on a polished solution."""
    return bool(record.identity_gap <= tol.identity * (1 + abs(record.J_value))
                and max(record.residual_u, record.residual_v) <= tol.residual)


class Solver:
    """Everything shared between levels of one run: mesh, basis, calibration."""

    def __init__(self, spec, mesh, m_max=40, seed=0, regime=None, tolerances=None):
        self.spec = spec
        self.mesh = mesh
        self.seed = seed
        self.regime = regime or regime_of(spec.p, spec.q)
        self.tol = tolerances or Tolerances()
        self.basis = build_basis(mesh, m_max)
        self.lap = LaplacianSolver(mesh)
        self.constants = calibrate_constants(spec, seed=seed)

    def level(self, n, m=None):
        spec, basis = self.spec, self.basis
        cfg = linking_config(spec, basis, n, self.regime, m=m, seed=self.seed,
                             constants=self.constants)
        try:
            out = self._search(cfg)
            resampled = False
        except DeformationStall:
            # one retry on a surface with twice the sphere directions
            cfg.sample_scale *= 2
            out = self._search(cfg)
            resampled = True
        out.extra["resampled"] = resampled
        if self.regime == "superlinear":
            bounds = level_bounds(cfg, basis, spec)
        else:
            bounds = LevelBounds(out.extra["a_tilde"], out.extra["b_tilde"],
                                 out.extra["d_tilde"])
        point, info, primal = polish_full(spec, self.lap, out.witness)
        rec = SolutionRecord.from_dual(spec, self.lap, point, out.galerkin_m, n, self.regime,
                                       primal=primal)
        return LevelResult(rec, cfg, out, bounds, certify(rec, self.tol), polish=info)

    def _search(self, cfg):
        if self.regime == "superlinear":
            return fountain_search(cfg, self.basis, self.spec, self.lap, tol=self.tol.newton)
        return dual_fountain_search(cfg.n, cfg.m, self.basis, self.spec, self.lap, config=cfg,
                                    tol=self.tol.newton)

    def run(self, levels, threads=1):
        """Solve each (n, m) in levels; results keep the input order."""
        levels = [(n, m) for n, m in levels]
        if threads > 1 and len(levels) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda nm: self.level(*nm), levels))
        else:
            results = [self.level(n, m) for n, m in levels]
        mark_distinct(results)
        return results


def mark_distinct(results):
    for prev, cur in zip(results, results[1:]):
        cur.distinct_from_previous = distinct(prev.record, cur.record)
    return results


def pairwise_distinct(records):
    """Boolean matrix of the distinctness rule over a list of SolutionRecords."""
    k = len(records)
    out = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = distinct(records[i], records[j])
    return out


def count_distinct(records):
    """Size of a greedy set of mutually distinct solutions, in input order."""
    chosen = []
    for r in records:
        if all(distinct(r, c) for c in chosen):
            chosen.append(r)
    return len(chosen)
