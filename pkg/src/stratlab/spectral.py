"""Functional calculus of the discrete sub-Laplacian.

Every operator ``m(tD)`` is evaluated as ``Q m(t Lambda) Q^T`` from one dense
eigendecomposition, which is cached on disk by content hash.  Eigenvalues
are stored in ascending order.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid
from scipy.special import gamma

from .grid import Grid, GridError, GridFunction, LinearOperator, ResourceError, sublaplacian

EIG_CAP = 14_000
CLAMP = 1e-10
NULL_TOL = 1e-12
CACHE_ENV = "STRATLAB_CACHE_DIR"


class DomainError(ValueError):
    """A multiplier or power is undefined on part of the spectrum."""


class NumericError(RuntimeError):
    """A solver or quadrature failed to converge."""


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """``D = Q diag(eigenvalues) Q^T`` with eigenvalues ascending and clamped at 0."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    grid: Grid

    def __post_init__(self):
        for a in (self.eigenvalues, self.eigenvectors):
            a.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def coefficients(self, f: GridFunction) -> np.ndarray:
        return self.eigenvectors.T @ f.flat

    def synthesize(self, coeffs) -> np.ndarray:
        return self.eigenvectors @ coeffs

    def eigenfunction(self, k: int) -> GridFunction:
        return self.grid.function(self.eigenvectors[:, k])

    def orthogonality_error(self) -> float:
        Q = self.eigenvectors
        return float(np.max(np.abs(Q.T @ Q - np.eye(self.size))))


def _operator_hash(op: LinearOperator) -> str:
    M = op.matrix.tocsr()
    M.sort_indices()
    h = hashlib.sha256()
    for k, v in sorted(op.grid.descriptor().items()):
        h.update(f"{k}={v};".encode())
    for a in (M.indptr, M.indices, M.data):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:24]


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "stratlab"))


def eigendecompose(
    op: LinearOperator, cap: int = EIG_CAP, cache: bool = True, cache_dir: Optional[Path] = None
) -> SpectralDecomposition:
    """Dense symmetric eigendecomposition, loaded from the cache when the hash matches."""
    n = op.matrix.shape[0]
    if n > cap:
        raise ResourceError(
            f"grid {op.grid.points} has {n} dof, above the eigendecomposition cap {cap}; use heat_stepping"
        )
    A = op.matrix.toarray() if sp.issparse(op.matrix) else np.asarray(op.matrix, dtype=float)
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(A), initial=0.0)):
        raise GridError("eigendecompose needs a symmetric operator")
    path = None
    if cache:
        d = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        path = d / f"eig-{_operator_hash(op)}.npz"
        if path.exists():
            with np.load(path) as z:
                return SpectralDecomposition(z["eigenvalues"], z["eigenvectors"], op.grid)
    lam, Q = sla.eigh(A)
    if lam.size and lam[0] < -CLAMP * max(1.0, lam[-1]):
        raise NumericError(f"operator is not positive semi-definite: eigenvalue {lam[0]:.3e}")
    lam = np.maximum(lam, 0.0)
    dec = SpectralDecomposition(lam, Q, op.grid)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, eigenvalues=lam, eigenvectors=Q)
        os.replace(tmp, path)
    return dec


def decompose_grid(grid: Grid, cache: bool = True, cache_dir: Optional[Path] = None) -> SpectralDecomposition:
    return eigendecompose(sublaplacian(grid), cache=cache, cache_dir=cache_dir)


# ---------------------------------------------------------------------------
# multipliers


@dataclass(frozen=True)
class Multiplier:
    """Scalar function ``lambda -> m(lambda)`` applied as ``m(t D)``."""

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    bounded: bool = True

    def __call__(self, lam) -> np.ndarray:
        return np.asarray(self.func(np.asarray(lam, dtype=float)), dtype=float)

    def __mul__(self, other: "Multiplier") -> "Multiplier":
        return Multiplier(f"{self.name}*{other.name}", lambda x: self(x) * other(x), self.bounded and other.bounded)


def apply_multiplier(dec: SpectralDecomposition, m: Multiplier, t: float, f: GridFunction) -> GridFunction:
    """``Q m(t Lambda) Q^T f``."""
    vals = m(t * dec.eigenvalues)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise DomainError(f"multiplier {m.name!r} is not finite at lambda = {dec.eigenvalues[k]!r} (t = {t!r})")
    return f.with_values(dec.synthesize(vals * dec.coefficients(f)))


def _exp_neg(lam):
    return np.exp(-lam)


HEAT = Multiplier("heat", _exp_neg)
IDENTITY = Multiplier("identity", np.ones_like)


def heat(dec: SpectralDecomposition, f: GridFunction, t: float) -> GridFunction:
    """``H_t f = e^{-tD} f``."""
    if t < 0:
        raise ValueError(f"heat time must be nonnegative, got {t}")
    if t == 0:
        return f
    return apply_multiplier(dec, HEAT, t, f)


def heat_stepping(op: LinearOperator, f: GridFunction, t: float, steps: int) -> GridFunction:
    """Crank-Nicolson approximation of ``e^{-tD} f`` with ``steps`` equal steps."""
    if t < 0 or steps < 1:
        raise ValueError("heat_stepping needs t >= 0 and steps >= 1")
    if t == 0:
        return f
    D = sp.csc_matrix(op.matrix)
    tau = t / steps
    eye = sp.identity(D.shape[0], format="csc")
    lu = spla.splu((eye + 0.5 * tau * D).tocsc())
    B = (eye - 0.5 * tau * D).tocsr()
    A = eye + 0.5 * tau * D
    u = f.flat.copy()
    for _ in range(steps):
        rhs = B @ u
        u = lu.solve(rhs)
        res = np.max(np.abs(A @ u - rhs))
        if not np.isfinite(res) or res > 1e-8 * max(1.0, np.max(np.abs(rhs))):
            raise NumericError(f"Crank-Nicolson solve did not converge: residual {res:.3e}")
    return f.with_values(u)


def fractional_power(dec: SpectralDecomposition, f: GridFunction, s: float) -> GridFunction:
    """``D^{s/2} f``; for ``s < 0`` ``f`` must avoid the numerical kernel of ``D``."""
    if s == 0:
        return f
    lam = dec.eigenvalues
    c = dec.coefficients(f)
    null = lam < NULL_TOL
    if s > 0:
        mult = np.where(null, 0.0, np.power(np.where(null, 1.0, lam), s / 2))
    else:
        if np.any(null) and np.max(np.abs(c[null])) > 1e-8 * max(1.0, np.linalg.norm(c)):
            raise DomainError("negative power applied to a function with a component on the kernel of D")
        mult = np.where(null, 0.0, np.power(np.where(null, 1.0, lam), s / 2))
    return f.with_values(dec.synthesize(mult * c))


def fractional_power_integral_oracle(
    dec: SpectralDecomposition, f: GridFunction, s: float, op: Optional[LinearOperator] = None, step: float = 0.05
) -> GridFunction:
    """``D^{s/2} f = Gamma(1 - s/2)^-1 int_0^inf t^{-s/2} D H_t f dt`` for ``0 < s < 2``.

    Trapezoid rule in ``u = log t``; ``D`` is applied as a sparse matvec, the
    heat flow through :func:`heat`.  The rule is rerun at twice the step and
    the two must agree, otherwise a NumericError is raised.
    """
    if not 0 < s < 2:
        raise ValueError(f"integral representation needs 0 < s < 2, got {s}")
    op = op or sublaplacian(dec.grid)
    pos = dec.eigenvalues[dec.eigenvalues >= NULL_TOL]
    lam_lo, lam_hi = float(pos[0]), float(pos[-1])
    a = 1.0 - s / 2
    # tails: t^a lam_hi < 1e-13 below, e^{-t lam_lo} < 1e-20 above
    u_lo = (math.log(1e-13) - math.log(lam_hi)) / a
    u_hi = math.log(50.0 / lam_lo)
    u = np.arange(u_lo, u_hi + step, step)
    Df = f.with_values(op.matrix @ f.flat)
    terms = np.array([math.exp(a * ui) * heat(dec, Df, math.exp(ui)).flat for ui in u])
    fine = trapezoid(terms, dx=step, axis=0) / gamma(a)
    coarse = trapezoid(terms[::2], dx=2 * step, axis=0) / gamma(a)
    scale = max(np.max(np.abs(fine)), 1e-300)
    if np.max(np.abs(fine - coarse)) > 1e-4 * scale:
        raise NumericError("integral representation quadrature did not converge")
    return f.with_values(fine)


# ---------------------------------------------------------------------------
# cutoffs


def smooth_transition(u) -> np.ndarray:
    """``S(u) = g(u) / (g(u) + g(1-u))`` with ``g(u) = exp(-1/u)`` for ``u > 0``."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        g1 = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        g2 = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return g1 / (g1 + g2)


def theta0(lam):
    """1 on ``[0, 1/2]``, 0 on ``[1, inf)``."""
    return smooth_transition(2.0 * (1.0 - np.asarray(lam, dtype=float)))


def theta1(lam):
    return 1.0 - theta0(lam)


def phi(lam):
    """1 on ``[0, 1/4]``, 0 on ``[1, inf)``."""
    return smooth_transition((1.0 - np.asarray(lam, dtype=float)) / 0.75)


def psi(lam):
    lam = np.asarray(lam, dtype=float)
    return theta0(lam / 2) - theta0(lam)


def _safe_div(num, lam):
    lam = np.asarray(lam, dtype=float)
    return np.where(lam > 0, num / np.where(lam > 0, lam, 1.0), 0.0)


def build_cutoffs(s: float = 0.0) -> dict[str, Multiplier]:
    """Cutoff and splitting multipliers; ``m`` depends on the smoothness ``s``.

    ``m(lam) = lam^{s/2-1} (1 - e^{-lam})`` splits as ``m0 = m theta0`` and
    ``m1 = m theta1``; for ``s = 0``, ``m1 = m_a - m_b``.
    """

    def m(lam):
        lam = np.asarray(lam, dtype=float)
        pos = lam > 0
        lp = np.where(pos, lam, 1.0)
        val = np.power(lp, s / 2 - 1) * -np.expm1(-lp)
        at0 = 1.0 if s == 0 else 0.0
        return np.where(pos, val, at0)

    return {
        "theta0": Multiplier("theta0", theta0),
        "theta1": Multiplier("theta1", theta1),
        "phi": Multiplier("phi", phi),
        "psi": Multiplier("psi", psi),
        "psi_tilde": Multiplier("psi_tilde", lambda x: _safe_div(psi(x), x)),
        "m": Multiplier("m", m, bounded=s <= 0),
        "m0": Multiplier("m0", lambda x: m(x) * theta0(x)),
        "m1": Multiplier("m1", lambda x: m(x) * theta1(x), bounded=s <= 0),
        "m_a": Multiplier("m_a", lambda x: _safe_div(theta1(x), x)),
        "m_b": Multiplier("m_b", lambda x: _safe_div(np.exp(-np.asarray(x, dtype=float)) * theta1(x), x)),
    }


def lp_multiplier(j: int) -> Multiplier:
    if j < 0:
        raise ValueError(f"block index must be >= 0, got {j}")
    return Multiplier(f"lp{j}", lambda lam: phi(lam / 4.0**j) - phi(lam * 4.0**j))


def lp_block(dec: SpectralDecomposition, f: GridFunction, j: int) -> GridFunction:
    """Band-pass ``(phi(2^{-2j} D) - phi(2^{2j} D)) f``; passes ``[2^{-2j}, 2^{2j}/4]`` untouched."""
    return apply_multiplier(dec, lp_multiplier(j), 1.0, f)


def positive_projection(dec: SpectralDecomposition, f: GridFunction) -> GridFunction:
    c = dec.coefficients(f)
    c[dec.eigenvalues < NULL_TOL] = 0.0
    return f.with_values(dec.synthesize(c))


# ---------------------------------------------------------------------------
# kernels


def kernel_of_multiplier(dec: SpectralDecomposition, m: Multiplier, t: float) -> GridFunction:
    """``m(tD)`` applied to the discrete unit mass at the origin."""
    return apply_multiplier(dec, m, t, dec.grid.delta())


def heat_kernel(dec: SpectralDecomposition, t: float) -> GridFunction:
    return kernel_of_multiplier(dec, HEAT, t)


def boundary_mass(f: GridFunction, layers: int = 2) -> float:
    """Integral of ``|f|`` over the outer ``layers`` of the box."""
    return float(np.sum(np.abs(f.values[~f.grid.interior_mask(layers)])) * f.grid.cell_volume)


def kernel_scaling_error(dec: SpectralDecomposition, t: float, alpha: float = 2.0) -> float:
    """Relative sup error of ``alpha^N h(delta_alpha x, alpha^2 t) = h(x, t)``.

    Compared on nodes ``x`` whose dilate ``delta_alpha x`` is itself a node of
    the box; the error is normalized by ``max h(., t)``.
    """
    from .group import dilate

    grid = dec.grid
    spec = grid.spec
    k_small = heat_kernel(dec, t)
    k_big = heat_kernel(dec, alpha * alpha * t)
    y = dilate(spec, alpha, grid.coords)
    u = (y + np.asarray(grid.half_widths)) / grid.h
    idx = np.rint(u).astype(np.int64)
    ok = np.all((np.abs(u - idx) < 1e-9) & (idx >= 0) & (idx < np.asarray(grid.points)), axis=1)
    flat = np.ravel_multi_index(tuple(idx[ok].T), grid.points)
    lhs = alpha**spec.N * k_big.flat[flat]
    rhs = k_small.flat[ok]
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(k_small.flat)))
