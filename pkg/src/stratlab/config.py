"""Run configuration: an INI file with sections, validated before any compute.

Layout::

    [run]        seed, output_dir, cache
    [group]      name (heisenberg | euclidean) or exponents/law/gauge_coeff
    [grid]       points, and h (lattice) or half_widths; dof_cap
    [weight]     kind (unit | power), alpha, p, average_within
    [family]     kind (gaussian-bump | band-limited-random | dilated-chain |
                 eigenvector-combo | mixed), count
    [t_grid]     min, max, count
    [balls]      scales or radii, through_origin
    [experiment <label>]  type = <experiment id>, plus its parameters
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import group as G
from . import lab
from .grid import Grid, lattice_grid

EXPERIMENTS = {
    "heat": "heat-semigroup suite (semigroup, contraction, mass, symmetry, scaling)",
    "poincare": "Poincare pseudo-inequality rate t^((1-s)/2)",
    "strong": "strong improved Sobolev inequality, theta = 1/q",
    "weak": "weak improved Sobolev inequality, beta = (1-sq)/(q-1)",
    "glr": "interpolation inequality with p > 1, theta = p/q",
    "pointwise": "pointwise maximal-function bound for negative powers",
    "lp": "Littlewood-Paley reconstruction and block growth",
    "weights": "A_p profile of the configured weight over dyadic radii",
    "threshold": "thresholding lemma items on random and ramp functions",
}

FAMILIES = lab.FAMILY_KINDS + ("mixed",)

# parameter name -> (type, default) per experiment
_PARAMS = {
    "heat": {"scaling_t": (float, 0.5)},
    "poincare": {"s": (float, 0.0)},
    "strong": {"q": (float, 2.0)},
    "weak": {"q": (float, 2.0), "s": (float, 0.25)},
    "glr": {"p": (float, 2.0), "q": (float, 4.0), "s1": (float, 1.0), "s": (float, 0.0)},
    "pointwise": {"p": (float, 2.0), "q": (float, 4.0), "s1": (float, 1.0), "s": (float, 0.0)},
    "lp": {"j_max": (int, 6), "q": (float, 2.0)},
    "weights": {"p": (float, 1.0)},
    "threshold": {"alpha": (float, 0.1), "M": (float, 12.0), "samples": (int, 1000)},
}


class ConfigError(ValueError):
    """Parse or validation failure; the message names the section and field."""


@dataclass
class ExperimentSpec:
    label: str
    kind: str
    params: dict


@dataclass
class RunConfig:
    spec: G.GroupSpec
    grid: Grid
    seed: int = 0
    output_dir: Path = Path("reports")
    cache: bool = True
    weight_kind: str = "unit"
    weight_alpha: float = 0.0
    weight_p: float = 1.0
    weight_average_within: Optional[float] = None
    family_kind: str = "gaussian-bump"
    family_count: int = 4
    t_grid: np.ndarray = field(default_factory=lambda: np.logspace(-4, 2, 121))
    ball_scales: int = 4
    ball_radii: Optional[tuple] = None
    ball_through_origin: bool = False
    experiments: list = field(default_factory=list)
    source: Optional[Path] = None


def _get(cp, section, key, typ, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        if typ is bool:
            return cp.getboolean(section, key)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {typ.__name__}") from None


def _floats(raw: str) -> list[float]:
    return [float(x) for x in raw.replace(",", " ").split()]


def parse_config(text: str, source: Optional[Path] = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(source or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None

    if not cp.has_section("group"):
        raise ConfigError("missing [group] section")
    try:
        spec = G.spec_from_config(dict(cp["group"]))
    except (G.GroupError, ValueError) as exc:
        raise ConfigError(f"[group] {exc}") from None

    if not cp.has_section("grid"):
        raise ConfigError("missing [grid] section")
    g = cp["grid"]
    if "points" not in g:
        raise ConfigError("[grid] points: required")
    try:
        points = [int(x) for x in g["points"].replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"[grid] points = {g['points']!r}: expected integers") from None
    dof_cap = _get(cp, "grid", "dof_cap", int, 250_000)
    try:
        if "h" in g:
            grid = lattice_grid(spec, points, _get(cp, "grid", "h", float, 0.5), dof_cap)
        elif "half_widths" in g:
            grid = Grid(spec, tuple(_floats(g["half_widths"])), tuple(points), dof_cap)
        else:
            raise ConfigError("[grid] needs h or half_widths")
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"[grid] {exc}") from None

    cfg = RunConfig(spec=spec, grid=grid, source=source)
    cfg.seed = _get(cp, "run", "seed", int, 0)
    cfg.output_dir = Path(_get(cp, "run", "output_dir", str, "reports"))
    cfg.cache = _get(cp, "run", "cache", bool, True)
    cfg.weight_kind = _get(cp, "weight", "kind", str, "unit")
    cfg.weight_alpha = _get(cp, "weight", "alpha", float, 0.0)
    cfg.weight_p = _get(cp, "weight", "p", float, 1.0)
    cfg.weight_average_within = _get(cp, "weight", "average_within", float, None)
    cfg.family_kind = _get(cp, "family", "kind", str, "gaussian-bump")
    cfg.family_count = _get(cp, "family", "count", int, 4)
    tmin = _get(cp, "t_grid", "min", float, 1e-4)
    tmax = _get(cp, "t_grid", "max", float, 1e2)
    tcount = _get(cp, "t_grid", "count", int, 121)
    if not 0 < tmin < tmax or tcount < 8:
        raise ConfigError(f"[t_grid] need 0 < min < max and count >= 8, got {tmin}, {tmax}, {tcount}")
    cfg.t_grid = np.logspace(math.log10(tmin), math.log10(tmax), tcount)
    cfg.ball_scales = _get(cp, "balls", "scales", int, 4)
    if cp.has_option("balls", "radii"):
        try:
            cfg.ball_radii = tuple(_floats(cp.get("balls", "radii")))
        except ValueError:
            raise ConfigError(f"[balls] radii = {cp.get('balls', 'radii')!r}: expected numbers") from None
    cfg.ball_through_origin = _get(cp, "balls", "through_origin", bool, False)

    for section in cp.sections():
        if not section.startswith("experiment"):
            continue
        label = section[len("experiment"):].strip() or "experiment"
        kind = cp.get(section, "type", fallback=label)
        if kind not in EXPERIMENTS:
            raise ConfigError(f"[{section}] type = {kind!r}: unknown experiment id; known: {', '.join(EXPERIMENTS)}")
        table = _PARAMS[kind]
        params = {}
        for key in cp[section]:
            if key != "type" and key not in table:
                raise ConfigError(f"[{section}] {key}: not a parameter of {kind} ({', '.join(table)})")
        for key, (typ, default) in table.items():
            params[key] = _get(cp, section, key, typ, default)
        cfg.experiments.append(ExperimentSpec(label, kind, params))
    if not cfg.experiments:
        raise ConfigError("no [experiment <label>] sections")
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def validate(cfg: RunConfig) -> None:
    """Reject every parameter combination the inequalities exclude."""
    N = cfg.spec.N
    if cfg.weight_kind not in ("unit", "power"):
        raise ConfigError(f"[weight] kind = {cfg.weight_kind!r}: expected unit or power")
    if cfg.weight_kind == "power" and cfg.weight_alpha <= -N:
        raise ConfigError(f"[weight] alpha = {cfg.weight_alpha}: violates α > −N (N = {N})")
    if cfg.weight_p < 1:
        raise ConfigError(f"[weight] p = {cfg.weight_p}: violates p ≥ 1")
    if cfg.ball_radii is not None and (not cfg.ball_radii or min(cfg.ball_radii) <= 0):
        raise ConfigError(f"[balls] radii = {cfg.ball_radii}: need positive radii")
    if cfg.weight_average_within is not None and cfg.weight_average_within <= 0:
        raise ConfigError(f"[weight] average_within = {cfg.weight_average_within}: must be positive")
    if cfg.family_kind not in FAMILIES:
        raise ConfigError(f"[family] kind = {cfg.family_kind!r}: expected one of {', '.join(FAMILIES)}")
    if cfg.family_count < 1:
        raise ConfigError(f"[family] count = {cfg.family_count}: must be >= 1")
    for e in cfg.experiments:
        where = f"[experiment {e.label}]"
        P = e.params
        try:
            if e.kind == "poincare" and not 0 <= P["s"] < 1:
                raise lab.ExperimentError(f"s = {P['s']} violates s ∈ [0,1)")
            if e.kind == "strong":
                lab.strong_parameters(P["q"])
            elif e.kind == "weak":
                lab.weak_parameters(P["q"], P["s"])
            elif e.kind in ("glr", "pointwise"):
                lab.glr_parameters(P["p"], P["q"], P["s1"], P["s"])
            elif e.kind == "lp":
                if P["j_max"] < 3:
                    raise lab.ExperimentError(f"j_max = {P['j_max']} violates j_max ≥ 3")
                if P["q"] < 1:
                    raise lab.ExperimentError(f"q = {P['q']} violates q ≥ 1")
            elif e.kind == "threshold":
                if P["alpha"] <= 0:
                    raise lab.ExperimentError(f"alpha = {P['alpha']} violates α > 0")
                if P["M"] <= 10:
                    raise lab.ExperimentError(f"M = {P['M']} violates M > 10")
            elif e.kind == "weights" and P["p"] < 1:
                raise lab.ExperimentError(f"p = {P['p']} violates p ≥ 1")
        except lab.ExperimentError as exc:
            raise ConfigError(f"{where} {exc}") from None
