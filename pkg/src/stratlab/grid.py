"""Box grids over a group, grid functions and the finite-difference calculus.

Derivatives are group differences: ``X_j`` at ``p`` compares ``f`` at
``p . (+-h_j e_j)``, ``Y_j`` at ``(+-h_j e_j) . p``.  When the grid is a
lattice for the group law (H^1 with ``h_3 = h_1 h_2 / 2``) every shifted
point is a node; otherwise values are multilinearly interpolated.  Outside
the box all functions are extended by zero.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import group as G
from .group import GroupSpec

DEFAULT_DOF_CAP = 250_000
SNAP = 1e-9


class GridError(ValueError):
    pass


class ResourceError(RuntimeError):
    """A grid or operator exceeds a configured size cap."""


@dataclass(frozen=True)
class Grid:
    """Origin-centred box ``prod [-L_i, L_i]`` with ``m_i`` (odd) nodes per axis."""

    spec: GroupSpec
    half_widths: tuple[float, ...]
    points: tuple[int, ...]
    dof_cap: int = DEFAULT_DOF_CAP

    def __post_init__(self):
        hw = tuple(float(x) for x in self.half_widths)
        pts = tuple(int(x) for x in self.points)
        object.__setattr__(self, "half_widths", hw)
        object.__setattr__(self, "points", pts)
        if len(hw) != self.spec.n or len(pts) != self.spec.n:
            raise GridError(f"grid needs {self.spec.n} half widths and point counts")
        if any(L <= 0 for L in hw):
            raise GridError("half widths must be positive")
        if any(m < 5 or m % 2 == 0 for m in pts):
            raise GridError(f"points per axis must be odd and >= 5, got {pts}")
        if self.size > self.dof_cap:
            raise ResourceError(f"grid {pts} has {self.size} dof, cap is {self.dof_cap}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def ndim(self) -> int:
        return len(self.points)

    @property
    def size(self) -> int:
        return math.prod(self.points)

    @functools.cached_property
    def h(self) -> np.ndarray:
        return np.array([2 * L / (m - 1) for L, m in zip(self.half_widths, self.points)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @functools.cached_property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(-L, L, m) for L, m in zip(self.half_widths, self.points)]

    @functools.cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, n)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=-1)

    @property
    def origin_index(self) -> int:
        return int(np.ravel_multi_index(tuple(m // 2 for m in self.points), self.points))

    @functools.cached_property
    def is_lattice(self) -> bool:
        """True when every generator step and its inverse map nodes onto nodes."""
        for v, _ in generator_steps(self):
            for sign in (1, -1):
                for pts in (G.multiply(self.spec, self.coords, sign * v), G.multiply(self.spec, sign * v, self.coords)):
                    u = pts / self.h
                    if np.max(np.abs(u - np.round(u))) > SNAP:
                        return False
        return True

    def function(self, values) -> "GridFunction":
        """Grid function from an array or from a callable on ``coords``."""
        if callable(values):
            values = values(self.coords)
        return GridFunction(self, np.asarray(values, dtype=float).reshape(self.shape))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def delta(self) -> "GridFunction":
        """Discrete unit mass at the origin."""
        v = np.zeros(self.size)
        v[self.origin_index] = 1.0 / self.cell_volume
        return self.function(v)

    def interior_mask(self, layers: int = 2) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for ax, m in enumerate(self.points):
            sl = [slice(None)] * self.ndim
            sl[ax] = np.r_[0:layers, m - layers:m]
            mask[tuple(sl)] = False
        return mask

    def descriptor(self) -> dict[str, str]:
        d = {f"group.{k}": v for k, v in self.spec.to_config().items()}
        d["half_widths"] = ", ".join(repr(x) for x in self.half_widths)
        d["points"] = ", ".join(str(x) for x in self.points)
        return d


def lattice_grid(spec: GroupSpec, points: Sequence[int], h: float, dof_cap: int = DEFAULT_DOF_CAP) -> Grid:
    """Grid with horizontal spacing ``h`` and degree-two spacing ``h^2/2``.

    For H^1 this makes the box a piece of the discrete Heisenberg lattice.
    """
    a = np.asarray(spec.exponents)
    hs = np.where(a == 1, h, h * h / 2)
    half = tuple(float(hh * (m - 1) / 2) for hh, m in zip(hs, points))
    return Grid(spec, half, tuple(points), dof_cap)


def default_grid(spec: Optional[GroupSpec] = None) -> Grid:
    """The H^1 acceptance platform: 17 x 17 x 25 lattice nodes, ``h = 1/2``."""
    spec = spec or G.heisenberg()
    return lattice_grid(spec, (17, 17, 25), 0.5)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples on a grid.  ``flags`` carries non-fatal warnings."""

    grid: Grid
    values: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise GridError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def interior_supported(self) -> bool:
        return not np.any(self.values[~self.grid.interior_mask()])

    def with_values(self, values, flags=()) -> "GridFunction":
        return GridFunction(self.grid, np.asarray(values).reshape(self.grid.shape), self.flags | frozenset(flags))

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __mul__(self, other):
        return self.with_values(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._other(other))

    def __neg__(self):
        return self.with_values(-self.values)

    def __abs__(self):
        return self.with_values(np.abs(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# interpolation


def _split_index(grid: Grid, pts: np.ndarray):
    u = (pts + np.asarray(grid.half_widths)) / grid.h
    r = np.round(u)
    u = np.where(np.abs(u - r) < SNAP, r, u)
    i0 = np.floor(u).astype(np.int64)
    return i0, u - i0


def interpolate(f: GridFunction, pts) -> np.ndarray:
    """Multilinear interpolation of ``f`` at arbitrary points (zero outside the box)."""
    grid = f.grid
    pts = np.asarray(pts, dtype=float)
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, grid.ndim)
    i0, fr = _split_index(grid, pts)
    dims = np.asarray(grid.points)
    out = np.zeros(len(pts))
    vals = f.flat
    for corner in itertools.product((0, 1), repeat=grid.ndim):
        c = np.asarray(corner)
        idx = i0 + c
        w = np.prod(np.where(c == 1, fr, 1.0 - fr), axis=1)
        ok = np.all((idx >= 0) & (idx < dims), axis=1) & (w > 0)
        if not np.any(ok):
            continue
        flat = np.ravel_multi_index(tuple(idx[ok].T), grid.points)
        out[ok] += w[ok] * vals[flat]
    return out.reshape(lead)


def interpolation_matrix(grid: Grid, pts) -> sp.csr_matrix:
    """Sparse ``P`` with ``P @ f.flat == interpolate(f, pts)``."""
    pts = np.asarray(pts, dtype=float).reshape(-1, grid.ndim)
    i0, fr = _split_index(grid, pts)
    dims = np.asarray(grid.points)
    rows, cols, data = [], [], []
    for corner in itertools.product((0, 1), repeat=grid.ndim):
        c = np.asarray(corner)
        idx = i0 + c
        w = np.prod(np.where(c == 1, fr, 1.0 - fr), axis=1)
        ok = np.all((idx >= 0) & (idx < dims), axis=1) & (w > 0)
        rows.append(np.nonzero(ok)[0])
        cols.append(np.ravel_multi_index(tuple(idx[ok].T), grid.points))
        data.append(w[ok])
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(len(pts), grid.size)
    )


def dilate_function(f: GridFunction, alpha: float) -> GridFunction:
    """Resample ``x -> f(delta_alpha x)`` onto the same grid."""
    pts = G.dilate(f.grid.spec, alpha, f.grid.coords)
    return f.with_values(interpolate(f, pts))


# ---------------------------------------------------------------------------
# vector fields


def _unit(grid: Grid, j: int) -> np.ndarray:
    v = np.zeros(grid.ndim)
    v[j] = grid.h[j]
    return v


@functools.lru_cache(maxsize=32)
def _field_matrix(grid: Grid, j: int, side: str) -> sp.csr_matrix:
    spec, x = grid.spec, grid.coords
    v = _unit(grid, j)
    if side == "left":
        fwd, bwd = G.multiply(spec, x, v), G.multiply(spec, x, -v)
    else:
        fwd, bwd = G.multiply(spec, v, x), G.multiply(spec, -v, x)
    P = interpolation_matrix(grid, fwd) - interpolation_matrix(grid, bwd)
    return (P / (2 * grid.h[j])).tocsr()


def _check_generator(grid: Grid, j: int):
    if not 1 <= j <= grid.spec.m:
        raise GridError(f"generator index must be in 1..{grid.spec.m}, got {j}")


def _field_result(f: GridFunction, values) -> GridFunction:
    flags = () if f.interior_supported else ("boundary-contamination",)
    return GridFunction(f.grid, values, f.flags | frozenset(flags))


def apply_vector_field(j: int, f: GridFunction) -> GridFunction:
    """Left-invariant ``X_j f`` (1-based ``j``) by central group differences."""
    _check_generator(f.grid, j)
    return _field_result(f, _field_matrix(f.grid, j - 1, "left") @ f.flat)


def right_vector_field(j: int, f: GridFunction) -> GridFunction:
    """Right-invariant ``Y_j f`` by central group differences."""
    _check_generator(f.grid, j)
    return _field_result(f, _field_matrix(f.grid, j - 1, "right") @ f.flat)


def vector_field_matrix(grid: Grid, j: int, right: bool = False) -> sp.csr_matrix:
    _check_generator(grid, j)
    return _field_matrix(grid, j - 1, "right" if right else "left")


def gradient_length(f: GridFunction) -> GridFunction:
    """Pointwise ``(sum_j (X_j f)^2)^(1/2)`` over the degree-one generators."""
    parts = [apply_vector_field(j, f) for j in range(1, f.grid.spec.m + 1)]
    sq = sum(p.values**2 for p in parts)
    flags = frozenset().union(*(p.flags for p in parts))
    return GridFunction(f.grid, np.sqrt(sq), flags)


# ---------------------------------------------------------------------------
# sub-Laplacian


def generator_steps(grid: Grid) -> list[tuple[np.ndarray, float]]:
    """Horizontal steps ``v`` and weights ``w`` with ``sum_v w (v . X)^2 = sum_j X_j^2``.

    Abelian groups use the coordinate steps only (the standard stencil).  On
    non-abelian groups the diagonal steps ``h_i e_i +- h_j e_j`` are added:
    without them the lattice splits into disconnected cosets of the
    subgroup generated by the coordinate steps.
    """
    spec = grid.spec
    m = spec.m
    hs = grid.h[:m]
    steps = []
    if spec.is_abelian or m < 2:
        for j in range(m):
            steps.append((_unit(grid, j), 1.0 / hs[j] ** 2))
        return steps
    wc = 1.0 / (4 * (m - 1) * float(np.max(hs)) ** 2)
    for j in range(m):
        steps.append((_unit(grid, j), (1.0 - 2 * (m - 1) * wc * hs[j] ** 2) / hs[j] ** 2))
    for i, j in itertools.combinations(range(m), 2):
        for sign in (1.0, -1.0):
            v = _unit(grid, i) + sign * _unit(grid, j)
            steps.append((v, wc))
    return steps


@functools.lru_cache(maxsize=8)
def difference_matrices(grid: Grid) -> tuple[sp.csr_matrix, ...]:
    """Weighted forward group differences ``B_v = sqrt(w) (T_v - I)``; ``D = sum B^T B``.

    Zero extension is applied on both sides: besides the rows for edges
    ``x -> x.v`` starting at nodes, each node ``y`` whose predecessor
    ``y.v^-1`` lies outside the box gets the row ``sqrt(w) f(y)``.  In 1-D
    this gives the symmetric Dirichlet stencil ``(-1, 2, -1) / h^2``.
    """
    eye = sp.identity(grid.size, format="csr")
    L = np.asarray(grid.half_widths) + SNAP
    out = []
    for v, w in generator_steps(grid):
        T = interpolation_matrix(grid, G.multiply(grid.spec, grid.coords, v))
        prev = G.multiply(grid.spec, grid.coords, -v)
        ghost = np.nonzero(np.any(np.abs(prev) > L, axis=1))[0]
        E = sp.csr_matrix((np.ones(len(ghost)), (np.arange(len(ghost)), ghost)), shape=(len(ghost), grid.size))
        out.append((math.sqrt(w) * sp.vstack([T - eye, E])).tocsr())
    return tuple(out)


@dataclass(frozen=True, eq=False)
class LinearOperator:
    matrix: sp.csr_matrix
    grid: Grid
    symmetric: bool

    def __matmul__(self, f):
        if isinstance(f, GridFunction):
            return f.with_values(self.matrix @ f.flat)
        return self.matrix @ f

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@functools.lru_cache(maxsize=8)
def sublaplacian(grid: Grid) -> LinearOperator:
    """``D = sum_v B_v^T B_v``: symmetric positive semi-definite by construction."""
    if grid.size > grid.dof_cap:
        raise ResourceError(f"grid {grid.points} exceeds dof cap {grid.dof_cap}")
    D = None
    for B in difference_matrices(grid):
        term = B.T @ B
        D = term if D is None else D + term
    D = sp.csr_matrix(D)
    D.sum_duplicates()
    D.eliminate_zeros()
    return LinearOperator(D, grid, True)


# ---------------------------------------------------------------------------
# convolution and integration


def group_convolve(f: GridFunction, g: GridFunction, chunk: int = 64) -> GridFunction:
    """Riemann sum of ``f * g (x) = int f(y) g(y^-1 . x) dy``.

    ``g`` is interpolated at the off-grid points ``y^-1 . x``; on lattice grids
    those are nodes.  The result is flagged when mass of ``g`` is carried
    outside the box.
    """
    grid = f.grid
    if g.grid != grid:
        raise GridError("convolution operands live on different grids")
    spec, x = grid.spec, grid.coords
    fv = f.flat
    support = np.nonzero(fv)[0]
    out = np.zeros(grid.size)
    lattice = grid.is_lattice
    gv = g.flat
    L, h, dims = np.asarray(grid.half_widths), grid.h, np.asarray(grid.points)
    for start in range(0, len(support), chunk):
        ids = support[start:start + chunk]
        pts = G.multiply(spec, -x[ids][:, None, :], x[None, :, :])
        if lattice:
            idx = np.rint((pts + L) / h).astype(np.int64)
            ok = np.all((idx >= 0) & (idx < dims), axis=-1)
            flat = np.ravel_multi_index(tuple(np.moveaxis(np.where(ok[..., None], idx, 0), -1, 0)), grid.points)
            vals = np.where(ok, gv[flat], 0.0)
        else:
            vals = interpolate(g, pts)
        out += fv[ids] @ vals
    out *= grid.cell_volume
    flags = set()
    if not (f.interior_supported and g.interior_supported):
        flags.add("support-overflow")
    return GridFunction(grid, out, flags)


def integrate(f: GridFunction, weight=None) -> float:
    """Riemann sum ``sum f(x_i) w(x_i) prod h``."""
    v = f.flat
    if weight is not None:
        v = v * _weight_values(weight)
    return float(np.sum(v) * f.grid.cell_volume)


def _weight_values(weight) -> np.ndarray:
    if isinstance(weight, GridFunction):
        return weight.flat
    vals = getattr(weight, "values", weight)
    if isinstance(vals, GridFunction):
        return vals.flat
    return np.asarray(vals, dtype=float).ravel()


# ---------------------------------------------------------------------------
# test-function helpers


def smooth_step(u):
    """C-infinity transition: 0 for ``u <= 0``, 1 for ``u >= 1``."""
    u = np.asarray(u, dtype=float)

    def g(v):
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    a, b = g(u), g(1.0 - u)
    return a / (a + b)


def box_cutoff(grid: Grid, margin: float = 0.35) -> np.ndarray:
    """Smooth window: 1 well inside, exactly 0 on the two outer layers of each axis."""
    w = np.ones(grid.size)
    for ax in range(grid.ndim):
        edge = grid.half_widths[ax] - 1.5 * grid.h[ax]
        width = margin * edge
        w *= smooth_step((edge - np.abs(grid.coords[:, ax])) / width)
    return w


def homogeneous_gaussian(grid: Grid, width: float, center=None, vertical: float = 1.0) -> GridFunction:
    """``F(delta_{1/width}(c^-1 . x))`` with ``F = exp(-|x'|^2 - vertical |x''|^2)``, windowed."""
    spec = grid.spec
    x = grid.coords
    if center is not None:
        x = G.multiply(spec, G.inverse(spec, center), x)
    y = G.dilate(spec, 1.0 / width, x)
    a = np.asarray(spec.exponents)
    q = np.sum(y[:, a == 1] ** 2, axis=1) + vertical * np.sum(y[:, a == 2] ** 2, axis=1)
    return grid.function(np.exp(-q) * box_cutoff(grid))


# ---------------------------------------------------------------------------
# I/O


def save_function(f: GridFunction, path) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (little-endian float64, C order) and ``<path>.hdr``."""
    path = Path(path)
    data, header = path.with_suffix(".bin"), path.with_suffix(".hdr")
    f.flat.astype("<f8").tofile(data)
    lines = [f"{k} = {v}" for k, v in f.grid.descriptor().items()]
    lines += ["dtype = float64-le", "order = C"]
    header.write_text("\n".join(lines) + "\n")
    return data, header


def load_function(path) -> GridFunction:
    path = Path(path)
    meta = {}
    for line in path.with_suffix(".hdr").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    spec = G.spec_from_config({k[6:]: v for k, v in meta.items() if k.startswith("group.")})
    half = tuple(float(s) for s in meta["half_widths"].split(","))
    pts = tuple(int(s) for s in meta["points"].split(","))
    grid = Grid(spec, half, pts)
    vals = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    if vals.size != grid.size:
        raise GridError(f"binary has {vals.size} values, header describes {grid.size}")
    return grid.function(vals)


def export_slice_csv(f: GridFunction, path, axes: tuple[int, int] = (0, 1)) -> Path:
    """CSV of the 2-D slice through the origin spanned by ``axes``."""
    grid = f.grid
    idx = [m // 2 for m in grid.points]
    sl = [slice(None) if ax in axes else idx[ax] for ax in range(grid.ndim)]
    if grid.ndim == 1:
        sl = [slice(None)]
    vals = f.values[tuple(sl)]
    path = Path(path)
    with path.open("w") as fh:
        names = [f"x{a + 1}" for a in axes[: grid.ndim]]
        fh.write(",".join(names + ["value"]) + "\n")
        if grid.ndim == 1:
            for xi, v in zip(grid.axes[0], vals):
                fh.write(f"{xi:.17g},{v:.17g}\n")
        else:
            a0, a1 = grid.axes[axes[0]], grid.axes[axes[1]]
            for i, xi in enumerate(a0):
                for j, yj in enumerate(a1):
                    fh.write(f"{xi:.17g},{yj:.17g},{vals[i, j]:.17g}\n")
    return path


