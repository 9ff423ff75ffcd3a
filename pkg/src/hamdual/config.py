"""JSON run configuration: parsing, defaults and validation."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .conjugate import HamiltonianSpec
from .discretization import Mesh
from .errors import ConfigError, HamdualError, RegimeMismatch
from .minimax import regime_of
from .pipeline import Tolerances

SCHEMA_VERSION = 1
REGIMES = ("auto", "superlinear", "sublinear")
_TOP_KEYS = {"schema_version", "domain", "hamiltonian", "regime", "levels", "tolerances",
             "seed", "output_dir", "m_max"}


@dataclass
class RunConfig:
    dim: int = 1
    n_per_axis: int = 255
    hamiltonian: dict = field(default_factory=lambda: {"p": 3.0, "q": 3.0, "eps": 0.0})
    regime: str = "auto"
    levels: list = field(default_factory=lambda: [[1, None], [2, None], [3, None]])
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    output_dir: str = "run"
    m_max: int = 40
    resolved_regime: Optional[str] = None

    @property
    def mesh(self):
        return Mesh(self.dim, self.n_per_axis)

    @property
    def spec(self):
        return HamiltonianSpec(**self.hamiltonian)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "domain": {"dim": self.dim, "n_per_axis": self.n_per_axis},
            "hamiltonian": dict(self.hamiltonian),
            "regime": self.regime,
            "levels": [{"n": n} if m is None else {"n": n, "m": m} for n, m in self.levels],
            "tolerances": asdict(self.tolerances),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "m_max": self.m_max,
        }


def _level(item):
    if isinstance(item, bool):
        raise ConfigError(f"bad level entry {item!r}")
    if isinstance(item, int):
        return [item, None]
    if isinstance(item, dict) and set(item) <= {"n", "m"} and "n" in item:
        return [item["n"], item.get("m")]
    raise ConfigError(f"level entries are integers or {{'n': .., 'm': ..}}, got {item!r}")


def parse_config(data):
    """RunConfig from a decoded JSON object; raises ConfigError on anything invalid."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    cfg = RunConfig()
    dom = data.get("domain", {})
    cfg.dim = dom.get("dim", cfg.dim)
    cfg.n_per_axis = dom.get("n_per_axis", cfg.n_per_axis)
    if "hamiltonian" in data:
        cfg.hamiltonian = dict(data["hamiltonian"])
    cfg.regime = data.get("regime", cfg.regime)
    if "levels" in data:
        if not isinstance(data["levels"], list):
            raise ConfigError("levels must be a list")
        cfg.levels = [_level(x) for x in data["levels"]]
    try:
        cfg.tolerances = Tolerances(**data.get("tolerances", {}))
    except TypeError as exc:
        raise ConfigError(f"bad tolerances: {exc}") from None
    cfg.seed = data.get("seed", cfg.seed)
    cfg.output_dir = data.get("output_dir", cfg.output_dir)
    cfg.m_max = data.get("m_max", cfg.m_max)
    check_config(cfg)
    return cfg


def load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(data)


def check_config(cfg):
    if cfg.dim not in (1, 2):
        raise ConfigError("domain.dim must be 1 or 2")
    n = cfg.n_per_axis
    if not (isinstance(n, int) and n >= 3 and (n + 1) & n == 0):
        raise ConfigError(f"n_per_axis must be 2^k - 1, got {n!r}")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError("seed must be an integer")
    if not isinstance(cfg.m_max, int) or not 1 <= cfg.m_max <= n ** cfg.dim:
        raise ConfigError(f"m_max must be an integer in [1, {n ** cfg.dim}]")
    if cfg.regime not in REGIMES:
        raise ConfigError(f"regime must be one of {REGIMES}")
    allowed = {"p", "q", "eps", "alpha", "beta", "theta"}
    if set(cfg.hamiltonian) - allowed or not {"p", "q"} <= set(cfg.hamiltonian):
        raise ConfigError(f"hamiltonian needs p and q and accepts only {sorted(allowed)}")
    try:
        spec = cfg.spec
        actual = regime_of(spec.p, spec.q)
    except RegimeMismatch as exc:
        raise ConfigError(str(exc)) from None
    except (HamdualError, TypeError) as exc:
        raise ConfigError(f"bad hamiltonian: {exc}") from None
    if cfg.regime != "auto" and cfg.regime != actual:
        raise ConfigError(f"(p, q) = ({spec.p}, {spec.q}) is {actual}, config says {cfg.regime}")
    cfg.resolved_regime = actual
    for n_lev, m in cfg.levels:
        if not isinstance(n_lev, int) or n_lev < 1:
            raise ConfigError(f"level n must be a positive integer, got {n_lev!r}")
        if actual == "sublinear":
            if n_lev < 2:
                raise ConfigError("sublinear levels start at n = 2")
            top = 2 * n_lev + 4 if m is None else m
            if not isinstance(top, int) or top < 2 * n_lev:
                raise ConfigError(f"sublinear level {n_lev} needs integer m >= 2n")
        else:
            top = 4 * (2 * n_lev + 1)
            if m is not None:
                raise ConfigError("m is only set for sublinear levels")
        if top > cfg.m_max:
            raise ConfigError(f"level {n_lev} needs {top} modes but m_max = {cfg.m_max}")
    return cfg
