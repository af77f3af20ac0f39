"""Run configuration: a flat ``key = value`` file, presets, validation and hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .exact import DEFAULT_BUDGET, FockSpace, SizingError

__all__ = ["RunConfig", "ConfigError", "PRESETS", "load_config", "parse_angle", "preset"]

MEASURES = ("trace", "relent")

# keys that change where or how fast results are written, not what they are
_UNHASHED = {"out", "jobs", "checkpoint"}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


_ANGLE = re.compile(r"^\s*([-+]?[0-9.eE+-]*(?:/[0-9.]+)?)\s*\*?\s*(pi)?\s*$")


def parse_angle(text) -> float:
    """Parse ``0.4``, ``0.1pi``, ``2/3pi`` or ``pi`` into radians."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower().replace("π", "pi")
    m = _ANGLE.match(s)
    if not m or (not m.group(1) and not m.group(2)):
        raise ValueError(f"cannot parse angle {text!r}")
    coef_text, has_pi = m.group(1), m.group(2)
    if coef_text in ("", "+"):
        coef = 1.0
    elif coef_text == "-":
        coef = -1.0
    elif "/" in coef_text:
        coef = float(Fraction(coef_text))
    else:
        coef = float(coef_text)
    return coef * math.pi if has_pi else coef


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run depends on.

    Initial states use the figure convention
    ``r = r_mod (-sin phi cos theta, -sin phi sin theta, -cos phi)`` in the
    spin frame; ``thetas`` and ``r_mods`` broadcast when given once.
    """

    mode: str = "lindblad"
    # system and weak-coupling bath
    delta: float = 1.0
    omega: float = 1.0
    gamma: float = 1.0
    gamma_dep: float = 0.0
    temperature: float = 0.0
    r_z_eq: Optional[float] = None
    # strong-coupling bath
    alpha: float = 0.0
    alphas: tuple = ()
    omega_c: float = 5.0
    omega_max: Optional[float] = None
    discretization: str = "logarithmic"
    log_base: float = 2.0
    geometry: str = "star"
    n_modes: int = 8
    n_max: int = 3
    truncation: str = "mode"
    budget: int = DEFAULT_BUDGET
    krylov_dim: int = 20
    check_convergence: bool = True
    # initial states and measures
    phis: tuple = ()
    thetas: tuple = (0.0,)
    r_mods: tuple = (1.0,)
    measures: tuple = MEASURES
    floor: float = 1e-12
    # time grid
    t_max: Optional[float] = None
    n_times: int = 1001
    # hemisphere scan
    n_pairs: int = 0
    r_mod: float = 1.0
    hemisphere: str = "excited"
    # bookkeeping
    seed: int = 0
    label: str = ""
    preset: str = ""
    out: str = "out"
    jobs: int = 1
    checkpoint: bool = False

    def __post_init__(self):
        self.validate()

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(msg, key)

        need(self.mode in ("lindblad", "exact"), "mode", f"must be lindblad or exact, got {self.mode!r}")
        need(self.delta > 0, "delta", "must be positive")
        need(self.omega > 0, "omega", "must be positive")
        need(self.gamma >= 0, "gamma", "must be non-negative")
        need(self.gamma_dep >= 0, "gamma_dep", "must be non-negative")
        need(self.temperature >= 0, "temperature", "must be non-negative")
        need(self.r_z_eq is None or -1 <= self.r_z_eq <= 1, "r_z_eq", "must lie in [-1, 1]")
        need(self.alpha >= 0, "alpha", "must be non-negative")
        need(all(a >= 0 for a in self.alphas), "alphas", "must be non-negative")
        need(self.omega_c > 0, "omega_c", "must be positive")
        need(self.omega_max is None or self.omega_max > 0, "omega_max", "must be positive")
        need(self.discretization in ("linear", "logarithmic", "log"), "discretization",
             "must be linear or logarithmic")
        need(self.log_base > 1, "log_base", "must exceed 1")
        need(self.geometry in ("star", "chain"), "geometry", "must be star or chain")
        need(self.n_modes >= 1, "n_modes", "must be at least 1")
        need(self.n_max >= 1, "n_max", "must be at least 1")
        need(self.truncation in ("mode", "total"), "truncation", "must be mode or total")
        need(self.krylov_dim >= 2, "krylov_dim", "must be at least 2")
        need(len(self.thetas) in (1, len(self.phis)) or not self.phis, "thetas",
             "give one value or one per phi")
        need(len(self.r_mods) in (1, len(self.phis)) or not self.phis, "r_mods",
             "give one value or one per phi")
        need(all(0 < r <= 1 for r in self.r_mods), "r_mods", "must lie in (0, 1]")
        need(len(self.measures) > 0 and all(m in MEASURES for m in self.measures), "measures",
             f"must be a non-empty subset of {MEASURES}")
        need(0 < self.floor <= 1e-3, "floor", "must lie in (0, 1e-3]")
        need(self.t_max is None or self.t_max > 0, "t_max", "must be positive")
        need(self.n_times >= 2, "n_times", "must be at least 2")
        need(self.n_pairs >= 0, "n_pairs", "must be non-negative")
        need(0 < self.r_mod <= 1, "r_mod", "must lie in (0, 1]")
        need(self.hemisphere in ("excited", "mixed"), "hemisphere", "must be excited or mixed")
        need(0 <= self.seed < 2 ** 64, "seed", "must be an unsigned 64-bit integer")
        need(self.jobs >= 1, "jobs", "must be at least 1")
        if self.mode == "exact":
            try:
                FockSpace(self.n_modes, self.n_max, self.budget, self.truncation)
            except SizingError as exc:
                raise ConfigError(str(exc), "n_max") from None

    # -- derived -----------------------------------------------------------

    @property
    def initial_states(self) -> list[tuple[float, float, float]]:
        """``(phi, theta, r_mod)`` per initial state."""
        n = len(self.phis)
        thetas = self.thetas if len(self.thetas) == n else self.thetas * n
        r_mods = self.r_mods if len(self.r_mods) == n else self.r_mods * n
        return [(float(p), float(t), float(r)) for p, t, r in zip(self.phis, thetas, r_mods)]

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    def hashed_dict(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical JSON of every result-affecting field."""
        text = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# text format

def _coerce(name: str, raw: str, annotation: str):
    raw = raw.strip()
    if "Optional" in annotation and raw.lower() in ("", "none", "null"):
        return None
    if name in ("phis", "thetas"):
        return tuple(parse_angle(x) for x in _split(raw))
    if "tuple" in annotation:
        items = _split(raw)
        if name == "measures":
            return tuple(items)
        return tuple(float(x) for x in items)
    if "bool" in annotation:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if "int" in annotation and "float" not in annotation:
        return int(raw)
    if "float" in annotation:
        return float(raw)
    return raw


def _split(raw: str) -> list[str]:
    raw = raw.strip().strip("[]()")
    return [x.strip() for x in raw.split(",") if x.strip()]


def parse_config_text(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Apply ``key = value`` lines on top of ``base`` (defaults when omitted)."""
    types = {f.name: (f.type if isinstance(f.type, str) else str(f.type)) for f in fields(RunConfig)}
    changes = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key", key)
        try:
            changes[key] = _coerce(key, raw, types[key])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}", key) from None
    if "preset" in changes and base is None:
        base = preset(changes["preset"])
    base = base or RunConfig()
    return base.replace(**changes)


def load_config(path, base: Optional[RunConfig] = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)


def dump_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config_text` (round-trips exactly)."""
    lines = []
    for k, v in cfg.to_dict().items():
        if v is None:
            v = "none"
        elif isinstance(v, list):
            v = ", ".join(repr(float(x)) if not isinstance(x, str) else x for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# presets

FIG_PHIS = tuple(k * 0.1 * math.pi for k in range(5))
DESK_LABEL = ("reduced-cutoff desk-scale variant: omega_c = 5 Delta, log-discretised star bath, "
              "per-mode Fock cutoff; not the omega_c = 60 Delta tensor-network setup")

_STRONG = dict(
    mode="exact", omega_c=5.0, omega_max=25.0, discretization="logarithmic", log_base=2.0,
    n_modes=8, n_max=3, phis=FIG_PHIS, t_max=10.0, n_times=101, label=DESK_LABEL,
)

PRESETS: dict[str, dict] = {
    # Gamma only sets the time unit; 0.05 keeps the T = 10 crossings off t = 0
    "fig2": dict(mode="lindblad", temperature=10.0, gamma=0.05,
                 phis=(0.5 * math.pi, 2 * math.pi / 3, math.pi), t_max=20.0, n_times=2001),
    "fig3a": dict(mode="lindblad", temperature=0.0, gamma=1.0, phis=FIG_PHIS, t_max=8.0, n_times=1601),
    "fig4a": dict(mode="lindblad", temperature=0.0, gamma=1.0, phis=FIG_PHIS, t_max=10.0, n_times=2001),
    "fig3b": dict(_STRONG, alpha=0.2),
    "fig3c": dict(_STRONG, alpha=0.4),
    "fig3d": dict(_STRONG, alpha=0.6),
    "fig4b": dict(_STRONG, alpha=0.2, measures=("trace", "relent")),
    "fig4c": dict(_STRONG, alpha=0.4, measures=("trace", "relent")),
    "fig4d": dict(_STRONG, alpha=0.6, measures=("trace", "relent")),
    "fig5": dict(_STRONG, alpha=0.6),
    # 7 modes so the n_max + 1 convergence check fits the budget
    "groundstate": dict(mode="exact", omega_c=5.0, omega_max=25.0, discretization="logarithmic",
                        n_modes=7, n_max=3, alphas=tuple(0.1 * k for k in range(9)), label=DESK_LABEL),
    "hemisphere": dict(mode="lindblad", temperature=0.0, gamma=1.0, n_pairs=500, r_mod=1.0,
                       measures=("trace",)),
    "hemisphere-relent": dict(mode="lindblad", temperature=0.0, gamma=1.0, n_pairs=100, r_mod=1.0,
                              measures=("relent",), t_max=8.0, n_times=2001),
}
for _name in ("fig3b", "fig3c", "fig3d"):
    PRESETS[_name]["measures"] = ("relent", "trace")


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}", "preset")
    return RunConfig(preset=name, **PRESETS[name])
