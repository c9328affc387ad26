"""Weighted Lebesgue, weak-Lebesgue, Sobolev and thermic Besov norms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gamma

from .grid import GridFunction, gradient_length
from .spectral import SpectralDecomposition, fractional_power
from .weights import Weight


class NormError(ValueError):
    pass


def default_t_grid() -> np.ndarray:
    """121 log-spaced times on ``[1e-4, 1e2]``."""
    return np.logspace(-4, 2, 121)


def _weights(f: GridFunction, w: Optional[Weight]) -> np.ndarray:
    cell = f.grid.cell_volume
    if w is None:
        return np.full(f.grid.size, cell)
    if w.grid != f.grid:
        raise NormError("weight and function live on different grids")
    return w.flat * cell


def lebesgue_norm(f: GridFunction, p: float, w: Optional[Weight] = None) -> float:
    """``(sum |f|^p w prod h)^{1/p}``; ``p = inf`` gives ``max |f|``."""
    if p < 1:
        raise NormError(f"Lebesgue norm needs p >= 1, got {p}")
    a = np.abs(f.flat)
    if math.isinf(p):
        return float(np.max(a))
    mu = _weights(f, w)
    if p == 1:
        return float(np.sum(a * mu))
    # scale out the maximum to keep a^p in range
    top = np.max(a)
    if top == 0:
        return 0.0
    return float(top * np.sum((a / top) ** p * mu) ** (1.0 / p))


def distribution_function(f: GridFunction, w: Optional[Weight] = None):
    """Sorted distinct ``|f|`` levels (descending) and ``w({|f| >= level})``."""
    a = np.abs(f.flat)
    mu = _weights(f, w)
    order = np.argsort(-a, kind="stable")
    levels = a[order]
    cum = np.cumsum(mu[order])
    # keep the last index of each run of equal levels
    last = np.r_[levels[1:] != levels[:-1], True]
    return levels[last], cum[last]


def lebesgue_norm_distribution(f: GridFunction, p: float, w: Optional[Weight] = None, levels: int = 200) -> float:
    """``(int_0^inf p s^{p-1} w({|f| > s}) ds)^{1/p}`` on log-spaced levels.

    Independent of :func:`lebesgue_norm`: the measure of each super-level set is
    recounted and the ``s``-integral is a trapezoid rule in ``log s``.
    """
    if p < 1 or math.isinf(p):
        raise NormError(f"distribution route needs 1 <= p < inf, got {p}")
    a = np.abs(f.flat)
    mu = _weights(f, w)
    top = float(np.max(a))
    if top == 0:
        return 0.0
    pos = a[a > 0]
    lo = float(np.min(pos))
    # below lo the super-level measure is constant: closed form lo^p * mu(|f|>0)
    s = np.geomspace(lo * (1 - 1e-12), top, levels)
    meas = np.array([np.sum(mu[a > si]) for si in s])
    integrand = p * s**p * meas  # ds = s dlog s
    total = trapezoid(integrand, np.log(s)) + lo**p * np.sum(mu[a > 0])
    return float(total ** (1.0 / p))


def weak_norm(f: GridFunction, p: float, w: Optional[Weight] = None, levels: Optional[int] = None) -> float:
    """``sup_s s w({|f| > s})^{1/p}``.

    With ``levels=None`` the supremum is exact: it is approached as ``s``
    rises to each attained value ``v`` of ``|f|``, where the set is
    ``{|f| >= v}``.  An integer ``levels`` samples that many log-spaced ``s``.
    """
    if p < 1:
        raise NormError(f"weak norm needs p >= 1, got {p}")
    a = np.abs(f.flat)
    if not np.any(a):
        return 0.0
    if math.isinf(p):
        return float(np.max(a))
    if levels is None:
        vals, meas = distribution_function(f, w)
        keep = vals > 0
        return float(np.max(vals[keep] * meas[keep] ** (1.0 / p)))
    mu = _weights(f, w)
    pos = a[a > 0]
    s = np.geomspace(np.min(pos), np.max(pos), levels) * (1 - 1e-12)
    return float(max(si * np.sum(mu[a > si]) ** (1.0 / p) for si in s))


def sobolev_norm(
    dec: SpectralDecomposition, f: GridFunction, s: float, p: float, w: Optional[Weight] = None, weak: bool = False
) -> float:
    """``|| D^{s/2} f ||`` in ``L^p(w)`` or ``L^{p,inf}(w)``; ``(s, p) = (1, 1)`` uses ``|grad f|``."""
    if s == 0:
        return weak_norm(f, p, w) if weak else lebesgue_norm(f, p, w)
    if (s, p) == (1, 1):
        g = gradient_length(f)
    elif 1 < p < math.inf:
        g = fractional_power(dec, f, s)
    else:
        raise NormError(f"unsupported Sobolev index (s, p) = ({s}, {p}); need 1 < p < inf or (s, p) = (1, 1)")
    return weak_norm(g, p, w) if weak else lebesgue_norm(g, p, w)


@dataclass(frozen=True)
class BesovValue:
    value: float
    t_arg: float
    boundary: bool

    def __float__(self):
        return self.value


def heat_sup_profile(dec: SpectralDecomposition, f: GridFunction, t_grid: Sequence[float]) -> np.ndarray:
    """``||H_t f||_inf`` for every ``t`` (one blocked product with ``Q``)."""
    t = np.asarray(t_grid, dtype=float)
    c = dec.coefficients(f)
    out = np.empty(len(t))
    for start in range(0, len(t), 32):
        tt = t[start:start + 32]
        block = np.exp(-np.outer(dec.eigenvalues, tt)) * c[:, None]
        out[start:start + 32] = np.max(np.abs(dec.eigenvectors @ block), axis=0)
    return out


def besov_negative_norm(
    dec: SpectralDecomposition, f: GridFunction, beta: float, t_grid: Optional[Sequence[float]] = None
) -> BesovValue:
    """``sup_t t^{beta/2} ||H_t f||_inf`` on the sampled ``t``, with its argmax.

    ``boundary`` is set when the sup sits on the first or last sample.
    """
    if beta <= 0:
        raise NormError(f"negative Besov norm needs beta > 0, got {beta}")
    t = np.asarray(default_t_grid() if t_grid is None else t_grid, dtype=float)
    if not np.any(f.flat):
        return BesovValue(0.0, float(t[0]), False)
    vals = t ** (beta / 2) * heat_sup_profile(dec, f, t)
    k = int(np.argmax(vals))
    return BesovValue(float(vals[k]), float(t[k]), k in (0, len(t) - 1))


def besov_general_norm(
    dec: SpectralDecomposition,
    f: GridFunction,
    s: float,
    p: float,
    q: float,
    m_order: int,
    t_grid: Optional[Sequence[float]] = None,
    w: Optional[Weight] = None,
) -> float:
    """``(int t^{(m - s/2) q} ||d_t^m H_t f||_{L^p(w)}^q dt/t)^{1/q}``, trapezoid in ``log t``."""
    if m_order <= s / 2:
        raise NormError(f"Besov order needs m > s/2, got m = {m_order}, s = {s}")
    if not 1 <= q < math.inf:
        raise NormError(f"Besov norm needs 1 <= q < inf, got {q}")
    if not np.any(f.flat):
        return 0.0
    t = np.asarray(np.logspace(-7, 4, 551) if t_grid is None else t_grid, dtype=float)
    lam = dec.eigenvalues
    c = dec.coefficients(f)
    vals = np.empty(len(t))
    for i, ti in enumerate(t):
        g = f.with_values(dec.synthesize((-lam) ** m_order * np.exp(-ti * lam) * c))
        vals[i] = ti ** (m_order - s / 2) * lebesgue_norm(g, p, w)
    return float(trapezoid(vals**q, np.log(t)) ** (1.0 / q))


def besov_eigen_closed_form(lam: float, s: float, q: float, m_order: int, lp_norm: float) -> float:
    """Closed form of :func:`besov_general_norm` on an eigenvector with ``L^p`` norm ``lp_norm``."""
    a = (m_order - s / 2) * q
    return float((lam ** (m_order * q) * gamma(a) / (q * lam) ** a) ** (1.0 / q) * lp_norm)
