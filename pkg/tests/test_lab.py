import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stratlab import group as G
from stratlab import lab
from stratlab.grid import dilate_function, homogeneous_gaussian, lattice_grid
from stratlab.spectral import decompose_grid, fractional_power


@pytest.fixture(scope="module")
def fam7(dec7):
    return lab.generate_family("gaussian-bump", dec7.grid, 0, 3, width_range=(0.8, 1.2)) + lab.generate_family(
        "band-limited-random", dec7.grid, 1, 2, dec=dec7)


# -- slope fits


def test_fit_scaling_slope_examples(rng):
    t = np.logspace(-3, 0, 20)
    s, hw = lab.fit_scaling_slope(t, t**0.5)
    assert s == pytest.approx(0.5, abs=1e-12) and hw < 1e-10
    assert lab.fit_scaling_slope(t, 3 * t)[0] == pytest.approx(1.0)
    noisy = t**0.5 * (1 + 0.01 * rng.normal(size=t.size))
    assert 0.45 <= lab.fit_scaling_slope(t, noisy)[0] <= 0.55
    with pytest.raises(lab.ExperimentError):
        lab.fit_scaling_slope(t[:7], t[:7])
    with pytest.raises(lab.ExperimentError):
        lab.fit_scaling_slope(t, -t)
    with pytest.raises(lab.ExperimentError, match="8 points"):
        lab.fit_scaling_slope(t, t, (1e-3, 2e-3))


# -- parameters


def test_parameter_relations():
    assert lab.strong_parameters(2) == pytest.approx((0.5, 1.0))
    assert lab.weak_parameters(2, 0.25) == pytest.approx((0.5, 0.5))
    assert lab.glr_parameters(2, 4, 1, 0) == pytest.approx((0.5, 1.0))
    assert lab.t_alpha(0.5, 1.0) == pytest.approx(4.0)
    with pytest.raises(lab.ExperimentError, match=r"q ∈ \(1,∞\)"):
        lab.strong_parameters(1.0)
    with pytest.raises(lab.ExperimentError, match=r"s ∈ \(0, 1/q\)"):
        lab.weak_parameters(2, 0.5)
    with pytest.raises(lab.ExperimentError, match="p < q"):
        lab.glr_parameters(4, 2, 1, 0)
    with pytest.raises(lab.ExperimentError, match="s < s₁"):
        lab.glr_parameters(2, 4, 1, 1.5)


# -- thresholding


def test_threshold_examples():
    a = 0.3
    out = lab.threshold_values(np.array([0.5 * a, 2 * a, 20 * a]), a, 12)
    assert np.allclose(out, [0, a, 11 * a])
    assert not np.any(lab.threshold_values(np.zeros(5), a, 12))
    with pytest.raises(lab.ExperimentError):
        lab.threshold_values(np.ones(3), 0.0, 12)
    with pytest.raises(lab.ExperimentError):
        lab.threshold_values(np.ones(3), 1.0, 10)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)), st.floats(1e-3, 10), st.floats(10.5, 40))
def test_threshold_odd_bounded_and_items(v, a, M):
    fa = lab.threshold_values(v, a, M)
    assert np.array_equal(lab.threshold_values(-v, a, M), -fa)
    assert np.all(np.abs(fa) <= (M - 1) * a * (1 + 1e-12))
    big = np.abs(v) > 5 * a
    assert np.all(np.abs(fa[big]) > 4 * a)
    low = np.abs(v) <= M * a
    assert np.all(np.abs(v - fa)[low] <= a * (1 + 1e-12))


def test_taboo_check_ramp_and_small(grid9):
    a, M = 0.1, 12.0
    ramp = grid9.function(grid9.coords[:, 0] * 0.8)
    res = lab.taboo_check(ramp, a, M)
    assert res["item1"] and res["item2"] and res["item3"]
    assert res["item3_nodes"] > 0
    small = grid9.function(0.05 * np.sin(grid9.coords[:, 0]))
    fa = lab.threshold(small, a, M)
    assert not np.any(fa.flat)
    assert lab.taboo_check(small, a, M)["item3_error"] == 0


# -- families


def test_generate_family(dec7, grid7):
    fam = lab.generate_family("gaussian-bump", grid7, 0, 4)
    assert len(fam) == 4
    assert all(f.interior_supported for f in fam.functions())
    other = lab.generate_family("gaussian-bump", grid7, 1, 4)
    assert not np.allclose(fam.functions()[0].flat, other.functions()[0].flat)
    again = lab.generate_family("gaussian-bump", grid7, 0, 4)
    assert all(np.array_equal(a.flat, b.flat) for a, b in zip(fam.functions(), again.functions()))
    chain = lab.generate_family("dilated-chain", grid7, 0, links=2, base_width=1.2)
    fs = chain.functions()
    assert np.array_equal(fs[1].flat, dilate_function(fs[0], 2.0).flat)
    assert [mid for mid, _ in chain.chain()] == ["dilated-chain-0", "dilated-chain-1", "dilated-chain-2"]
    band = lab.generate_family("band-limited-random", grid7, 0, 3, dec=dec7)
    assert len(band) == 3 and all(f.interior_supported for f in band.functions())
    combo = lab.generate_family("eigenvector-combo", grid7, 0, 2, dec=dec7)
    assert len(combo) == 2
    with pytest.raises(lab.ExperimentError, match="unknown family"):
        lab.generate_family("spiral", grid7)
    with pytest.raises(lab.ExperimentError):
        lab.generate_family("band-limited-random", grid7)


def test_geometric_width_ladder():
    w = lab._bump_widths(4, 1.0, 8.0)
    assert np.allclose(w, [1, 2, 4, 8])


# -- homogeneity and harness invariants


def test_ratios_invariant_under_scaling(dec7, fam7):
    scaled = lab.TestFunctionFamily("scaled", tuple((m, 10.0 * f, k) for m, f, k in fam7.members), {})
    runs = [
        lambda fam: lab.strong_sobolev_experiment(dec7, fam, None, 2.0),
        lambda fam: lab.strong_sobolev_experiment(dec7, fam, None, 4.0),
        lambda fam: lab.weak_sobolev_experiment(dec7, fam, None, 2.0, 0.25),
        lambda fam: lab.glr_experiment(dec7, fam, None, 2.0, 4.0, 1.0, 0.0),
    ]
    for run in runs:
        a, b = run(fam7).ratios, run(scaled).ratios
        assert np.allclose(a, b, rtol=1e-10)
    f = fam7.functions()[0]
    p1 = lab.pointwise_interpolation_check(dec7, f)
    p2 = lab.pointwise_interpolation_check(dec7, 7.0 * f)
    assert p1.constant == pytest.approx(p2.constant, rel=1e-10)


def test_constant_monotone_under_enlargement(dec7, fam7):
    sub = lab.TestFunctionFamily("sub", fam7.members[:2], {})
    big = lab.strong_sobolev_experiment(dec7, fam7, None, 2.0).constant
    small = lab.strong_sobolev_experiment(dec7, sub, None, 2.0).constant
    assert big >= small


def test_weak_not_above_strong(dec7, fam7):
    rep = lab.weak_sobolev_experiment(dec7, fam7, None, 2.0, 0.25)
    assert rep.verdicts["weak<=strong@s=0"]
    assert np.all(rep.ratios > 0) and np.all(np.isfinite(rep.ratios))


def test_weight_class_is_checked(dec7, fam7):
    from stratlab.weights import power_weight

    with pytest.raises(lab.ExperimentError, match="A_1"):
        lab.strong_sobolev_experiment(dec7, fam7, power_weight(dec7.grid.spec, dec7.grid, 1.0), 2.0)


def test_degenerate_inputs(dec7):
    z = dec7.grid.zeros()
    with pytest.raises(lab.ExperimentError, match="gradient"):
        lab.poincare_experiment(dec7, z)
    with pytest.raises(lab.ExperimentError, match="nonzero"):
        lab.pointwise_interpolation_check(dec7, z)
    with pytest.raises(lab.ExperimentError):
        lab.lp_approximation_check(dec7, z, 2)


# -- Poincare, LP, pointwise


def test_poincare_profile_vanishes_at_small_t(default_dec):
    g = default_dec.grid
    f = homogeneous_gaussian(g, 1.4, None, 4.0)
    t = np.logspace(-5, -2, 12)
    R = lab.poincare_profile(default_dec, f, None, 0.0, t)
    assert np.all(np.diff(R) > 0) and R[0] < 1e-3


def test_lp_eigenvector_reproduced(dec7):
    k = 12
    q = dec7.eigenfunction(k)
    rep = lab.lp_approximation_check(dec7, q, 6, 2.0)
    lam = dec7.eigenvalues[k]
    j0 = next(j for j in range(7) if 4.0**-j <= lam <= 4.0**j / 4)
    assert all(e < 1e-12 for e in rep.extras["errors"][j0:])
    assert rep.verdicts["monotone"]


def test_pointwise_bump_and_abelian(dec7, tmp_path):
    f = homogeneous_gaussian(dec7.grid, 1.0, None, 4.0)
    rep = lab.pointwise_interpolation_check(dec7, f)
    assert math.isfinite(rep.constant) and rep.passed
    g = lattice_grid(G.euclidean(1), (65,), 0.125)
    dec = decompose_grid(g, cache_dir=tmp_path)
    f1 = homogeneous_gaussian(g, 0.8)
    rep1 = lab.pointwise_interpolation_check(dec, f1)
    assert math.isfinite(rep1.constant) and rep1.verdicts["outliers-on-boundary"]


def test_threshold_diagnostic_tabulates(dec7):
    f = homogeneous_gaussian(dec7.grid, 1.0, None, 4.0)
    d = lab.threshold_diagnostic(dec7, f, 2.0, 12.0, levels=16)
    for key in ("I", "I1", "I2", "q_log_M_grad", "I2_bound"):
        assert math.isfinite(d[key]) and d[key] >= 0
