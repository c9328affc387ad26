"""Muckenhoupt weights, gauge-ball families and maximal functions.

The supremum over all balls is replaced by a finite family: centres on a
coarsened lattice of nodes and a handful of dyadic radii.  Ball averages use
the discrete measure of ``B ∩ box``, so the average of a constant is exact.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import group as G
from .grid import Grid, GridFunction, group_convolve, interpolate


class WeightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Weight:
    """Positive grid function, optionally tagged with a claimed A_p class."""

    values: GridFunction
    name: str = "weight"
    alpha: Optional[float] = None
    declared_class: Optional[tuple[float, bool]] = None
    estimated_constant: Optional[float] = None

    def __post_init__(self):
        if not np.all(self.values.values > 0):
            raise WeightError("weights must be strictly positive")

    @property
    def grid(self) -> Grid:
        return self.values.grid

    @property
    def flat(self) -> np.ndarray:
        return self.values.flat

    def in_Ap(self, p: float) -> Optional[bool]:
        """Membership predicted for power weights: ``-N < a <= 0`` (p = 1), ``-N < a < N(p-1)``."""
        if self.alpha is None:
            return None
        N = self.grid.spec.N
        if p == 1:
            return -N < self.alpha <= 0
        return -N < self.alpha < N * (p - 1)


def unit_weight(grid: Grid) -> Weight:
    return Weight(grid.function(np.ones(grid.size)), "unit", 0.0, (1.0, True))


def power_weight(spec: G.GroupSpec, grid: Grid, alpha: float, subcells: int = 8,
                 average_within: Optional[float] = None) -> Weight:
    """Cell averages of ``rho(x)^alpha`` by the midpoint rule on ``subcells^n`` subcells.

    Averaging keeps the singular cell at the origin finite without a clamp
    and gives the weighted quadrature the right mass near the singularity;
    ``subcells=1`` falls back to ``max(rho, min(h)/2)^alpha`` at the nodes.
    With ``average_within`` only nodes of gauge below it are averaged and
    the rest keep their node value (relative error ``O((h/rho)^2)``).
    """
    if spec != grid.spec:
        raise WeightError("weight spec differs from the grid spec")
    if alpha <= -spec.N:
        raise WeightError(f"power weight needs alpha > -N = {-spec.N} (local integrability), got {alpha}")
    if subcells <= 1:
        eps = float(np.min(grid.h)) / 2
        vals = np.maximum(G.gauge(spec, grid.coords), eps) ** alpha
    else:
        u = (np.arange(subcells) + 0.5) / subcells - 0.5
        offs = np.stack(np.meshgrid(*[u * hh for hh in grid.h], indexing="ij"), axis=-1).reshape(-1, grid.ndim)
        rho = G.gauge(spec, grid.coords)
        near = np.ones(grid.size, dtype=bool) if average_within is None else rho < average_within
        x = grid.coords[near]
        acc = np.zeros(len(x))
        for o in offs:
            acc += G.gauge(spec, x + o) ** alpha
        vals = np.where(near, 0.0, np.where(rho > 0, rho, 1.0) ** alpha)
        vals[near] = acc / len(offs)
    w = Weight(grid.function(vals), f"rho^{alpha:g}", float(alpha))
    return Weight(w.values, w.name, w.alpha, (1.0, bool(w.in_Ap(1))))


# ---------------------------------------------------------------------------
# ball families


@dataclass(frozen=True, eq=False)
class BallFamily:
    """Gauge balls ``B(c, r)`` intersected with the box.

    ``centers[r]`` holds the node indices used as centres at radius ``r``.
    On lattice grids ``B(c, r)`` is enumerated as ``c . o`` over the lattice
    offsets ``o`` in ``B(0, r)`` (left invariance); otherwise every node is
    tested.
    """

    grid: Grid
    radii: tuple[float, ...]
    centers: dict

    def __post_init__(self):
        if len(self.radii) == 0 or any(len(self.centers.get(r, ())) == 0 for r in self.radii):
            raise WeightError("ball family is empty")
        if any(r <= 0 for r in self.radii):
            raise WeightError("ball radii must be positive")

    @functools.cached_property
    def _offsets(self) -> dict:
        out = {}
        grid = self.grid
        if not grid.is_lattice:
            return out
        spec = grid.spec
        a = np.asarray(spec.exponents)
        wdt = np.where(a == 1, 1.0, 1.0 if spec.is_abelian else spec.gauge_coeff ** -0.5)
        for r in self.radii:
            ext = [np.arange(-k, k + 1) * hh for k, hh in zip(np.floor(wdt * r**a / grid.h + 1).astype(int), grid.h)]
            o = np.stack(np.meshgrid(*ext, indexing="ij"), axis=-1).reshape(-1, grid.ndim)
            out[r] = o[G.gauge(spec, o) < r]
        return out

    def members(self, r: float, budget: int = 4_000_000):
        """Yield ``(center_ids, node_idx, valid)`` chunks; ``node_idx`` is ``(k, M)``."""
        grid = self.grid
        spec, x = grid.spec, grid.coords
        cids = np.asarray(self.centers[r])
        L, h, dims = np.asarray(grid.half_widths), grid.h, np.asarray(grid.points)
        if grid.is_lattice:
            io = np.rint(self._offsets[r] / h).astype(np.int64)
            mid = dims // 2
            strides = np.array([int(np.prod(dims[k + 1:])) for k in range(len(dims))])
            # law term (k, i, j, c) in index units: c h_i h_j / h_k is an integer on a lattice
            terms = [(k, i, j, c * h[i] * h[j] / h[k]) for k, i, j, c in spec.law]
            step = max(1, budget // len(io))
            for start in range(0, len(cids), step):
                ids = cids[start:start + step]
                ic = np.stack(np.unravel_index(ids, grid.points), axis=-1) - mid
                idx = ic[:, None, :] + io[None, :, :]
                for k, i, j, c in terms:
                    idx[..., k] += np.rint(c * np.multiply.outer(ic[:, i], io[:, j])).astype(np.int64)
                idx += mid
                ok = np.all((idx >= 0) & (idx < dims), axis=-1)
                yield ids, np.where(ok, idx @ strides, 0), ok
        else:
            step = max(1, budget // grid.size)
            allidx = np.arange(grid.size)
            for start in range(0, len(cids), step):
                ids = cids[start:start + step]
                ok = G.gauge(spec, G.multiply(spec, -x[ids][:, None, :], x[None, :, :])) < r
                yield ids, np.broadcast_to(allidx, ok.shape), ok

    def reduce(self, values: np.ndarray, r: float):
        """Per-centre ``(mean, min, count)`` of ``values`` over ``B(c, r) ∩ box``."""
        means, mins, counts = [], [], []
        for _, idx, ok in self.members(r):
            v = values[idx]
            cnt = ok.sum(axis=1)
            means.append(np.where(ok, v, 0.0).sum(axis=1) / cnt)
            mins.append(np.where(ok, v, np.inf).min(axis=1))
            counts.append(cnt)
        return np.concatenate(means), np.concatenate(mins), np.concatenate(counts)

    def averages(self, values: np.ndarray, r: float) -> np.ndarray:
        return self.reduce(values, r)[0]

    def measures(self, r: float) -> np.ndarray:
        return self.reduce(np.zeros(self.grid.size), r)[2] * self.grid.cell_volume

    def origin_fits(self, r: float) -> bool:
        """True when every ball of radius ``r`` through the origin lies inside the box.

        Such balls sit inside ``B(0, 2r)``; the check uses the gauge of the
        box faces along each axis.
        """
        spec = self.grid.spec
        face = []
        for ax, L in enumerate(self.grid.half_widths):
            e = np.zeros(self.grid.ndim)
            e[ax] = L
            face.append(float(G.gauge(spec, e)))
        return 2 * r <= min(face) + 1e-12


def dyadic_family(
    grid: Grid, radii: Optional[Sequence[float]] = None, stride: Optional[int] = None, scales: int = 4,
    through_origin: bool = False,
) -> BallFamily:
    """Dyadic radii (default ``2^k max(h)``) with centres on a coarsened lattice.

    Without an explicit ``stride`` the centre spacing grows with the radius,
    about ``r/2`` in gauge units per axis, so each scale sees the same
    relative pattern of positions.  ``through_origin`` keeps only centres
    within gauge ``r`` of the origin, the balls where a power weight attains
    its A_1 supremum.
    """
    if radii is None:
        radii = [float(np.max(grid.h[: grid.spec.m])) * 2.0**k for k in range(scales)]
    radii = tuple(float(r) for r in radii)
    spec = grid.spec
    a = np.asarray(spec.exponents)
    wdt = np.where(a == 1, 1.0, 1.0 if spec.is_abelian else spec.gauge_coeff ** -0.5)
    centers = {}
    for r in radii:
        if stride is None:
            st = np.maximum(1, np.floor(wdt * (r / 2) ** a / grid.h + 1e-9).astype(int))
        else:
            st = np.full(grid.ndim, int(stride))
        sel = []
        for m, s_ in zip(grid.points, st):
            c = m // 2
            sel.append(np.r_[np.arange(c, -1, -s_)[::-1], np.arange(c + s_, m, s_)])
        mesh = np.meshgrid(*sel, indexing="ij")
        ids = np.ravel_multi_index(tuple(m_.ravel() for m_ in mesh), grid.points)
        if through_origin:
            ids = ids[G.gauge(spec, grid.coords[ids]) <= r]
        centers[r] = ids
    return BallFamily(grid, radii, centers)


# ---------------------------------------------------------------------------
# maximal functions and A_p


def hl_maximal(f: GridFunction, family: BallFamily) -> GridFunction:
    """``sup`` over family balls containing ``x`` of the average of ``|f|``."""
    if family.grid != f.grid:
        raise WeightError("ball family and function live on different grids")
    a = np.abs(f.flat)
    out = np.zeros(f.grid.size)
    for r in family.radii:
        for _, idx, ok in family.members(r):
            avg = np.where(ok, a[idx], 0.0).sum(axis=1) / ok.sum(axis=1)
            vals = np.broadcast_to(avg[:, None], ok.shape)
            np.maximum.at(out, idx[ok], vals[ok])
    return f.with_values(out)


def muckenhoupt_profile(w: Weight, p: float, family: BallFamily) -> list[tuple[float, float]]:
    """``(radius, A_p expression)`` for each radius, maximised over centres.

    ``p = 1`` uses ``sup_{x in B} avg_B w / w(x) = avg_B w / min_B w``.
    """
    if p < 1:
        raise WeightError(f"A_p needs p >= 1, got {p}")
    if family.grid != w.grid:
        raise WeightError("ball family and weight live on different grids")
    v = w.flat
    rows = []
    for r in family.radii:
        avg, mins, _ = family.reduce(v, r)
        if p == 1:
            expr = avg / mins
        else:
            dual = family.averages(v ** (-1.0 / (p - 1)), r)
            expr = avg * dual ** (p - 1)
        rows.append((r, float(np.max(expr))))
    return rows


def muckenhoupt_constant(w: Weight, p: float, family: BallFamily) -> float:
    return max(c for _, c in muckenhoupt_profile(w, p, family))


def growth_factors(profile: Sequence[tuple[float, float]]) -> list[float]:
    """Growth of the constant per radius doubling between adjacent radii."""
    out = []
    for (r0, c0), (r1, c1) in zip(profile, profile[1:]):
        out.append(float((c1 / c0) ** (np.log(2) / np.log(r1 / r0))))
    return out


# ---------------------------------------------------------------------------
# phi-maximal function


def dilated_kernel(phi: GridFunction, t: float) -> GridFunction:
    """``phi_t(x) = t^{-N/2} phi(delta_{t^{-1/2}} x)`` resampled onto the grid."""
    spec = phi.grid.spec
    pts = G.dilate(spec, t**-0.5, phi.grid.coords)
    return phi.with_values(t ** (-spec.N / 2) * interpolate(phi, pts))


def phi_maximal(f: GridFunction, phi: GridFunction, t_grid: Sequence[float]) -> GridFunction:
    """``sup_t |f * phi_t|`` over the sampled ``t``."""
    out = np.zeros(f.grid.size)
    flags = set()
    for t in t_grid:
        conv = group_convolve(f, dilated_kernel(phi, t))
        flags |= conv.flags
        out = np.maximum(out, np.abs(conv.flat))
    return f.with_values(out, flags)
