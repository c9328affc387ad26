import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stratlab import group as G
from stratlab.grid import GridError, LinearOperator, ResourceError, homogeneous_gaussian, lattice_grid, sublaplacian
from stratlab.spectral import (
    CACHE_ENV,
    IDENTITY,
    DomainError,
    Multiplier,
    apply_multiplier,
    build_cutoffs,
    decompose_grid,
    eigendecompose,
    fractional_power,
    fractional_power_integral_oracle,
    heat,
    heat_kernel,
    heat_stepping,
    kernel_scaling_error,
    lp_block,
    lp_multiplier,
    phi,
    positive_projection,
    psi,
    theta0,
    theta1,
)


def _band(dec, k=12, seed=0):
    c = np.random.default_rng(seed).normal(size=k)
    return dec.grid.function(dec.eigenvectors[:, :k] @ c)


def test_one_dimensional_laplacian_closed_form(tmp_path):
    h = 0.5
    g = lattice_grid(G.euclidean(1), (5,), h)
    dec = decompose_grid(g, cache_dir=tmp_path)
    k = np.arange(1, 6)
    assert np.allclose(dec.eigenvalues, 2 * (1 - np.cos(k * np.pi / 6)) / h**2)


def test_zero_operator(grid7):
    op = LinearOperator(sp.csr_matrix((grid7.size, grid7.size)), grid7, True)
    dec = eigendecompose(op, cache=False)
    assert not np.any(dec.eigenvalues)


def test_decomposition_residual_and_order(dec7):
    D = sublaplacian(dec7.grid).dense()
    Q, lam = dec7.eigenvectors, dec7.eigenvalues
    assert np.max(np.abs(D @ Q - Q * lam)) < 1e-8
    assert dec7.orthogonality_error() < 1e-10
    assert np.all(np.diff(lam) >= 0) and lam[0] >= 0


def test_psd_on_9cube(dec9):
    assert dec9.eigenvalues[0] >= -1e-10


def test_cache_roundtrip_and_env(grid7, tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    a = decompose_grid(grid7)
    files = list(tmp_path.glob("eig-*.npz"))
    assert len(files) == 1
    b = decompose_grid(grid7)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)


def test_errors(grid7, h1):
    with pytest.raises(ResourceError):
        eigendecompose(sublaplacian(grid7), cap=100, cache=False)
    A = sp.random(grid7.size, grid7.size, density=0.01, random_state=0, format="csr")
    with pytest.raises(GridError):
        eigendecompose(LinearOperator(A, grid7, False), cache=False)


def test_multiplier_identities(dec7):
    f = _band(dec7)
    assert np.allclose(apply_multiplier(dec7, IDENTITY, 1.0, f).flat, f.flat, atol=1e-12)
    lin = Multiplier("lin", lambda x: x)
    Df = sublaplacian(dec7.grid).matrix @ f.flat
    assert np.max(np.abs(apply_multiplier(dec7, lin, 1.0, f).flat - Df)) < 1e-10
    a = Multiplier("a", lambda x: np.exp(-x))
    b = Multiplier("b", lambda x: 1 / (1 + x))
    ab = apply_multiplier(dec7, a, 1.0, apply_multiplier(dec7, b, 1.0, f))
    ba = apply_multiplier(dec7, b, 1.0, apply_multiplier(dec7, a, 1.0, f))
    assert np.allclose(ab.flat, ba.flat, atol=1e-12)
    bad = Multiplier("blowup", lambda x: np.where(x > 5, np.inf, 1.0))
    with pytest.raises(DomainError, match="lambda"):
        apply_multiplier(dec7, bad, 1.0, f)


def test_heat_matches_taylor_series(h1, tmp_path):
    g = lattice_grid(h1, (5, 5, 5), 0.5)
    dec = decompose_grid(g, cache_dir=tmp_path)
    f = g.function(np.random.default_rng(3).normal(size=g.size))
    D = sublaplacian(g).dense()
    t = 0.05
    term, total = f.flat.copy(), f.flat.copy()
    for k in range(1, 80):
        term = -t * (D @ term) / k
        total = total + term
    assert np.max(np.abs(heat(dec, f, t).flat - total)) < 1e-8


def test_heat_semigroup_contraction_positivity(dec7):
    f = homogeneous_gaussian(dec7.grid, 0.8, None, 4.0)
    assert heat(dec7, f, 0.0) is f
    for t, s in ((0.1, 0.3), (0.5, 1.0)):
        assert np.max(np.abs(heat(dec7, heat(dec7, f, t), s).flat - heat(dec7, f, t + s).flat)) < 1e-8
        Ht = heat(dec7, f, t)
        assert Ht.max_abs() <= f.max_abs() * (1 + 1e-8)
        assert np.sum(np.abs(Ht.flat)) <= np.sum(np.abs(f.flat)) * (1 + 1e-8)
    K = heat_kernel(dec7, 0.2)
    assert K.flat.min() > -1e-12
    with pytest.raises(ValueError):
        heat(dec7, f, -1.0)


def test_heat_stepping_second_order(dec9):
    g = dec9.grid
    f = homogeneous_gaussian(g, 0.8, None, 4.0)
    op = sublaplacian(g)
    ref = heat(dec9, f, 0.1).flat
    assert heat_stepping(op, f, 0.0, 4) is f
    errs = []
    for steps in (16, 32, 64):
        u = heat_stepping(op, f, 0.1, steps).flat
        errs.append(np.linalg.norm(u - ref) / np.linalg.norm(ref))
    assert errs[-1] < 1e-4
    assert 3.0 < errs[0] / errs[1] < 5.0 and 3.0 < errs[1] / errs[2] < 5.0


def test_fractional_power(dec7):
    f = _band(dec7)
    assert fractional_power(dec7, f, 0) is f
    Df = sublaplacian(dec7.grid).matrix @ f.flat
    assert np.max(np.abs(fractional_power(dec7, f, 2).flat - Df)) < 1e-10
    back = fractional_power(dec7, fractional_power(dec7, f, 1), -1)
    assert np.max(np.abs(back.flat - positive_projection(dec7, f).flat)) < 1e-8


def test_fractional_power_integral_oracle(dec7):
    f = _band(dec7, 20)
    for s in (0.5, 1.0, 1.5):
        spectral = fractional_power(dec7, f, s).flat
        oracle = fractional_power_integral_oracle(dec7, f, s).flat
        assert np.max(np.abs(oracle - spectral)) < 1e-3 * np.max(np.abs(spectral))
    k = 5
    q = dec7.eigenfunction(k)
    out = fractional_power_integral_oracle(dec7, q, 1.0).flat
    assert np.allclose(out, dec7.eigenvalues[k] ** 0.5 * q.flat, atol=1e-6)
    with pytest.raises(ValueError):
        fractional_power_integral_oracle(dec7, f, 2.5)


def test_fractional_power_small_s_limit(dec7):
    f = _band(dec7)
    errs = [np.max(np.abs(fractional_power(dec7, f, s).flat - f.flat)) for s in (0.1, 0.01, 0.001)]
    assert errs[0] > errs[1] > errs[2]


def test_cutoff_values():
    assert theta0(0.25) == 1 and theta0(2) == 0
    assert phi(0.2) == 1 and phi(1.5) == 0
    lam = np.linspace(0, 50, 5001)
    assert np.max(np.abs(theta0(lam) + theta1(lam) - 1)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 12))
def test_psi_telescopes(lam, J):
    total = sum(psi(lam / 2.0**j) for j in range(J + 1))
    assert abs(total - (theta1(lam) - theta1(lam / 2.0 ** (J + 1)))) < 1e-12


def test_multiplier_split():
    cut = build_cutoffs(0.0)
    lam = np.geomspace(1e-3, 1e3, 400)
    assert np.allclose(cut["m0"](lam) + cut["m1"](lam), cut["m"](lam), atol=1e-14)
    assert np.allclose(cut["m1"](lam), cut["m_a"](lam) - cut["m_b"](lam), atol=1e-14)
    assert np.allclose(cut["psi_tilde"](lam) * lam, psi(lam), atol=1e-14)
    cut_s = build_cutoffs(0.5)
    assert not cut_s["m1"].bounded


def test_lp_blocks(dec7):
    m = lp_multiplier(2)
    band = np.geomspace(4.0**-2, 4.0**2 / 4, 50)
    assert np.allclose(m(band), 1.0)
    q = dec7.eigenfunction(10)
    j = next(j for j in range(10) if 4.0**-j <= dec7.eigenvalues[10] <= 4.0**j / 4)
    assert np.allclose(lp_block(dec7, q, j).flat, q.flat, atol=1e-12)
    with pytest.raises(ValueError):
        lp_multiplier(-1)


def test_kernel_scaling_on_resolved_line(tmp_path):
    # a fine 1-D grid resolves h(., t) and contains h(., 4t), so the dilation identity is visible
    g = lattice_grid(G.euclidean(1), (257,), 0.0625)
    dec = decompose_grid(g, cache_dir=tmp_path)
    assert kernel_scaling_error(dec, 0.5) < 1e-3
    coarse = lattice_grid(G.euclidean(1), (65,), 0.25)
    assert kernel_scaling_error(decompose_grid(coarse, cache_dir=tmp_path), 0.1) > kernel_scaling_error(dec, 0.1)
