"""Stratified group instances: group law, dilations, homogeneous gauge and balls.

Only step-two laws are supported, written in exponential coordinates as

    (x . y)_k = x_k + y_k + sum_{(k, i, j, c)} c * x_i * y_j

with the bilinear part antisymmetric, so the inverse of ``x`` is ``-x``.
The Heisenberg group H^1 is the single term ``(2, 0, 1, 1/2)`` together
with its antisymmetric partner ``(2, 1, 0, -1/2)``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class GroupError(ValueError):
    """Invalid group data or arguments."""


LawTerm = tuple[int, int, int, float]


@dataclass(frozen=True)
class GroupSpec:
    """One stratified group instance on R^n.

    Attributes:
        name: Label used in configs and cache keys.
        exponents: Dilation exponents ``a_1 <= ... <= a_n`` with ``a_1 = 1``.
        law: Bilinear terms ``(k, i, j, c)`` of the group law (0-based).
        gauge_coeff: Coefficient ``c`` in ``((x1^2+x2^2)^2 + c x3^2)^(1/4)``.
    """

    name: str
    exponents: tuple[int, ...]
    law: tuple[LawTerm, ...] = ()
    gauge_coeff: float = 16.0
    _bilinear: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = tuple(int(e) for e in self.exponents)
        object.__setattr__(self, "exponents", a)
        object.__setattr__(self, "law", tuple((int(k), int(i), int(j), float(c)) for k, i, j, c in self.law))
        n = len(a)
        if n < 1:
            raise GroupError("group dimension n must be >= 1")
        if a[0] != 1 or any(x > y for x, y in zip(a, a[1:])):
            raise GroupError(f"exponents must be non-decreasing with a_1 = 1, got {a}")
        if max(a) > 2:
            raise GroupError("only step-two groups (exponents in {1, 2}) are supported")
        if self.gauge_coeff <= 0:
            raise GroupError("gauge_coeff must be positive")
        B = np.zeros((n, n, n))
        for k, i, j, c in self.law:
            if not (0 <= k < n and 0 <= i < n and 0 <= j < n):
                raise GroupError(f"law term {(k, i, j, c)} out of range for n={n}")
            if a[k] != a[i] + a[j]:
                raise GroupError(f"law term {(k, i, j, c)} is not homogeneous: a_k != a_i + a_j")
            B[k, i, j] += c
        if not np.allclose(B, -np.transpose(B, (0, 2, 1)), atol=1e-15):
            raise GroupError("bilinear part of the law must be antisymmetric")
        object.__setattr__(self, "_bilinear", B)

    @property
    def n(self) -> int:
        return len(self.exponents)

    @property
    def m(self) -> int:
        """Number of degree-one generators."""
        return sum(1 for e in self.exponents if e == 1)

    @property
    def N(self) -> int:
        """Homogeneous dimension."""
        return sum(self.exponents)

    @property
    def is_abelian(self) -> bool:
        return not np.any(self._bilinear)

    @property
    def bilinear(self) -> np.ndarray:
        """Array ``B[k, i, j]`` with ``(x.y)_k = x_k + y_k + B[k] x . y``."""
        return self._bilinear

    def to_config(self) -> dict[str, str]:
        """Key-value block, inverse of :func:`spec_from_config`."""
        return {
            "name": self.name,
            "n": str(self.n),
            "exponents": ", ".join(str(e) for e in self.exponents),
            "law": "; ".join(f"{k} {i} {j} {c!r}" for k, i, j, c in self.law),
            "gauge_coeff": repr(self.gauge_coeff),
        }


def heisenberg(gauge_coeff: float = 16.0) -> GroupSpec:
    """H^1 with law ``x3 + y3 + (x1 y2 - y1 x2)/2``."""
    return GroupSpec("heisenberg", (1, 1, 2), ((2, 0, 1, 0.5), (2, 1, 0, -0.5)), gauge_coeff)


def euclidean(n: int) -> GroupSpec:
    return GroupSpec(f"euclidean{n}", (1,) * n)


def spec_from_config(block) -> GroupSpec:
    """Build a GroupSpec from a mapping with the keys of :meth:`GroupSpec.to_config`.

    ``name = heisenberg`` or ``name = euclidean`` with ``n`` are accepted as
    shorthands when no exponents are given.
    """
    name = block.get("name", "").strip()
    if "exponents" not in block:
        if name in ("heisenberg", "h1"):
            return heisenberg(float(block.get("gauge_coeff", 16.0)))
        if name.startswith("euclidean"):
            n = int(block.get("n", name[len("euclidean"):] or 1))
            return euclidean(n)
        raise GroupError(f"unknown group {name!r}; give exponents and law explicitly")
    exps = tuple(int(e) for e in str(block["exponents"]).replace(",", " ").split())
    law = []
    for term in str(block.get("law", "")).split(";"):
        if term.strip():
            k, i, j, c = term.split()
            law.append((int(k), int(i), int(j), float(c)))
    spec = GroupSpec(name or "custom", exps, tuple(law), float(block.get("gauge_coeff", 16.0)))
    if "n" in block and int(block["n"]) != spec.n:
        raise GroupError(f"n = {block['n']} does not match {spec.n} exponents")
    return spec


def spec_from_ini(text: str, section: str = "group") -> GroupSpec:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    return spec_from_config(cp[section])


def _points(spec: GroupSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n:
        raise GroupError(f"point has {x.shape[-1]} coordinates, group has n={spec.n}")
    return x


def multiply(spec: GroupSpec, x, y) -> np.ndarray:
    """Group product ``x . y``; broadcasts over leading axes."""
    x = _points(spec, x)
    y = _points(spec, y)
    out = x + y
    for k, i, j, c in spec.law:
        out[..., k] += c * x[..., i] * y[..., j]
    return out


def inverse(spec: GroupSpec, x) -> np.ndarray:
    return -_points(spec, x)


def dilate(spec: GroupSpec, alpha: float, x) -> np.ndarray:
    if not alpha > 0:
        raise GroupError(f"dilation factor must be positive, got {alpha}")
    x = _points(spec, x)
    return x * np.power(float(alpha), np.asarray(spec.exponents, dtype=float))


def gauge(spec: GroupSpec, x) -> np.ndarray:
    """Homogeneous gauge: Korányi-type on step two, Euclidean norm when abelian.

    For a step-two group the horizontal block enters as ``|x'|^4`` and the
    degree-two block as ``c |x''|^2`` so that ``gauge(dilate(a, x)) = a gauge(x)``.
    """
    x = _points(spec, x)
    if spec.is_abelian:
        return np.sqrt(np.sum(x * x, axis=-1))
    a = np.asarray(spec.exponents)
    # rescale by a homogeneous size so tiny coordinates do not underflow
    hor = np.max(np.abs(x[..., a == 1]), axis=-1)
    ver = np.sqrt(np.max(np.abs(x[..., a == 2]), axis=-1))
    s = np.maximum(hor, ver)
    safe = np.where(s > 0, s, 1.0)
    h = np.sum((x[..., a == 1] / safe[..., None]) ** 2, axis=-1)
    v = np.sum((x[..., a == 2] / safe[..., None] / safe[..., None]) ** 2, axis=-1)
    return np.where(s > 0, s * np.sqrt(np.sqrt(h * h + spec.gauge_coeff * v)), 0.0)


def ball_indicator(spec: GroupSpec, center, r: float) -> Callable[[np.ndarray], np.ndarray]:
    """Predicate ``y -> gauge(center^-1 . y) < r`` for the gauge ball B(center, r)."""
    if not r > 0:
        raise GroupError(f"ball radius must be positive, got {r}")
    c_inv = inverse(spec, center)

    def contains(y) -> np.ndarray:
        return gauge(spec, multiply(spec, c_inv, y)) < r

    return contains


def random_points(spec: GroupSpec, count: int, scale: float = 1.0, rng=None) -> np.ndarray:
    """Points with coordinate i drawn from N(0, scale^(2 a_i))."""
    rng = np.random.default_rng(rng)
    return rng.normal(size=(count, spec.n)) * np.power(scale, np.asarray(spec.exponents, dtype=float))


def unit_ball_volume(spec: GroupSpec, samples: int = 200_000, rng=None) -> float:
    """Monte-Carlo Lebesgue measure of B(0, 1)."""
    rng = np.random.default_rng(rng)
    # bounding box: |x_i| < 1 for horizontal, |x_k| < c^{-1/2} for degree two
    a = np.asarray(spec.exponents)
    half = np.where(a == 1, 1.0, 1.0 if spec.is_abelian else spec.gauge_coeff ** -0.5)
    pts = rng.uniform(-1.0, 1.0, size=(samples, spec.n)) * half
    frac = np.mean(gauge(spec, pts) < 1.0)
    return float(frac * np.prod(2 * half))


def fit_volume_exponent(spec: GroupSpec, radii: Sequence[float], samples: int = 100_000, rng=None) -> float:
    """Fit the exponent of r -> |B(0, r)| from independent Monte-Carlo estimates.

    Each radius samples its own bounding box ``prod (2 r^{a_i} w_i)`` so the
    homogeneity of the gauge is never used to produce the estimate.
    """
    rng = np.random.default_rng(rng)
    a = np.asarray(spec.exponents, dtype=float)
    w = np.where(a == 1, 1.0, 1.0 if spec.is_abelian else spec.gauge_coeff ** -0.5)
    vols = []
    for r in radii:
        half = w * np.power(r, a) * 1.05
        pts = rng.uniform(-1.0, 1.0, size=(samples, spec.n)) * half
        vols.append(np.mean(gauge(spec, pts) < r) * np.prod(2 * half))
    slope, _ = np.polyfit(np.log(radii), np.log(vols), 1)
    return float(slope)
