"""Acceptance suite on the default 17x17x25 Heisenberg grid.

Each test records one line per criterion; the lines are printed in the
``acceptance criteria`` section of the terminal summary.
"""

import time

import numpy as np
import pytest

from stratlab import group as G
from stratlab import lab
from stratlab.cli import main
from stratlab.grid import homogeneous_gaussian, lattice_grid, sublaplacian
from stratlab.spectral import (
    decompose_grid,
    fractional_power,
    fractional_power_integral_oracle,
    heat,
    heat_kernel,
)
from stratlab.weights import dyadic_family, growth_factors, muckenhoupt_profile, power_weight, unit_weight

pytestmark = pytest.mark.acceptance


def _failed(rep):
    return [k for k, v in rep.verdicts.items() if not v]


@pytest.fixture(scope="module")
def dec(default_dec):
    return default_dec


@pytest.fixture(scope="module")
def mixed(dec):
    return lab.mixed_family(dec.grid, dec, 0)


@pytest.fixture(scope="module")
def w_minus2(dec):
    return power_weight(dec.grid.spec, dec.grid, -2.0)


# -- 1. heat semigroup


@pytest.fixture(scope="module")
def heat_report(dec):
    return lab.heat_suite(dec)


def test_c1_heat_semigroup_contraction_mass_symmetry(heat_report, record):
    rep = heat_report
    rows = {r[0]: r[1] for r in rep.rows}
    keys = ("semigroup", "contraction", "mass", "symmetry")
    ok = all(rep.verdicts[k] for k in keys) and rep.runtime < 300
    record(1, ok, "semigroup {semigroup:.1e}, contraction {contraction:.1e}, mass {mass:.1e}, "
                  "symmetry {symmetry:.1e}".format(**rows) + f", {rep.runtime:.0f}s")
    assert ok, rep.rows


def test_c1_heat_kernel_dilation_scaling(heat_report, record):
    err = dict((r[0], r[1]) for r in heat_report.rows)["scaling"]
    record(1, err < 0.05, f"kernel scaling error {err:.3f} (tol 0.05)")
    assert err < 0.05


# -- 2. spectral calculus oracles on 5^3


def test_c2_spectral_oracles(h1, tmp_path, record):
    t0 = time.perf_counter()
    g = lattice_grid(h1, (5, 5, 5), 0.5)
    d = decompose_grid(g, cache_dir=tmp_path)
    f = g.function(np.random.default_rng(3).normal(size=g.size))
    D = sublaplacian(g).dense()
    taylor_err = 0.0
    for t in (0.01, 0.05, 0.1):
        term, total = f.flat.copy(), f.flat.copy()
        for k in range(1, 120):
            term = -t * (D @ term) / k
            total = total + term
        taylor_err = max(taylor_err, float(np.max(np.abs(heat(d, f, t).flat - total))))
    frac_err = 0.0
    for s in (0.5, 1.0, 1.5):
        spectral = fractional_power(d, f, s).flat
        oracle = fractional_power_integral_oracle(d, f, s).flat
        frac_err = max(frac_err, float(np.max(np.abs(oracle - spectral)) / np.max(np.abs(spectral))))
    dt = time.perf_counter() - t0
    ok = taylor_err < 1e-8 and frac_err < 1e-3 and dt < 60
    record(2, ok, f"Taylor {taylor_err:.1e}, integral oracle {frac_err:.1e} rel, {dt:.1f}s")
    assert ok


# -- 3. Poincare scaling


@pytest.mark.parametrize("weighted", [False, True], ids=["unit", "rho-2"])
@pytest.mark.parametrize("s", [0.0, 0.25, 0.5])
def test_c3_poincare_scaling(dec, w_minus2, s, weighted, record):
    fam = lab.generate_family("gaussian-bump", dec.grid, 0, 5)
    rep = lab.poincare_experiment(dec, fam, w_minus2 if weighted else None, s)
    slopes = [a for a, _ in rep.extras["slopes"]]
    record(3, rep.passed, f"s={s:g} w={'rho^-2' if weighted else '1'}: slopes {min(slopes):.2f}..{max(slopes):.2f} "
                          f"(target {(1 - s) / 2:g}), spread {rep.spread():.2f}")
    assert rep.passed, _failed(rep)


# -- 4. strong inequality


@pytest.mark.parametrize("weighted", [False, True], ids=["unit", "rho-2"])
@pytest.mark.parametrize("q", [2.0, 4.0])
def test_c4_strong_inequality(dec, mixed, w_minus2, q, weighted, record):
    assert len(mixed) == 12
    rep = lab.strong_sobolev_experiment(dec, mixed, w_minus2 if weighted else None, q)
    drift = max(rep.extras["chain_drift"])
    record(4, rep.passed, f"q={q:g} w={'rho^-2' if weighted else '1'}: C {rep.constant:.3f}, "
                          f"spread {rep.spread():.2f}, drift {drift:.1%}")
    assert rep.passed, _failed(rep)


# -- 5. weak inequality


def test_c5_weak_inequality(dec, mixed, record):
    rep = lab.weak_sobolev_experiment(dec, mixed, None, 2.0, 0.25)
    drift = max(rep.extras["chain_drift"])
    record(5, rep.passed, f"C {rep.constant:.3f}, spread {rep.spread():.2f}, drift {drift:.1%}, "
                          f"weak<=strong@s=0 {rep.verdicts['weak<=strong@s=0']}")
    assert rep.passed, _failed(rep)


# -- 6. GLR inequality and pointwise bound


@pytest.mark.parametrize("alpha", [0.0, -1.0], ids=["unit", "rho-1"])
def test_c6_glr_inequality(dec, mixed, alpha, record):
    w = power_weight(dec.grid.spec, dec.grid, alpha) if alpha else None
    rep = lab.glr_experiment(dec, mixed, w, 2.0, 4.0, 1.0, 0.0)
    drift = max(rep.extras["chain_drift"])
    record(6, rep.passed, f"w={'rho^-1' if alpha else '1'}: C {rep.constant:.3f}, spread {rep.spread():.2f}, "
                          f"drift {drift:.1%}")
    assert rep.passed, _failed(rep)


def test_c6_pointwise_bound(dec, mixed, record):
    rep = lab.pointwise_interpolation_check(dec, mixed.members[0][1], 4.0, 1.0, 0.0, p=2.0)
    cov = rep.extras["coverage"]
    record(6, rep.passed and cov >= 0.999, f"pointwise C {rep.constant:.3f}, coverage {cov:.4f}")
    assert rep.passed and cov >= 0.999, _failed(rep)


# -- 7. weights


@pytest.fixture(scope="module")
def a1_setup():
    # B(0, 16) must fit so that every ball of radius 8 through the origin is whole
    big = lattice_grid(G.heisenberg(), (65, 65, 1025), 0.5, dof_cap=10**7)
    balls = dyadic_family(big, radii=[1, 2, 4, 8], through_origin=True)
    return big, balls


def _a1_profile(w, balls):
    assert all(balls.origin_fits(r) for r in balls.radii)
    return muckenhoupt_profile(w, 1.0, balls)


def test_c7_unit_weight_exact(a1_setup, record):
    big, balls = a1_setup
    prof = _a1_profile(unit_weight(big), balls)
    ok = len(prof) == 4 and all(c == pytest.approx(1.0, abs=1e-14) for _, c in prof)
    record(7, ok, f"unit A_1 profile {[round(c, 15) for _, c in prof]}")
    assert ok


def test_c7_inverse_square_stable(a1_setup, record):
    big, balls = a1_setup
    prof = _a1_profile(power_weight(big.spec, big, -2.0, average_within=4.0), balls)
    g = growth_factors(prof)
    ok = len(prof) == 4 and max(g) < 2.0
    record(7, ok, "rho^-2 growth " + ", ".join(f"{x:.2f}" for x in g))
    assert ok, prof


def test_c7_linear_power_unstable(a1_setup, record):
    big, balls = a1_setup
    prof = _a1_profile(power_weight(big.spec, big, 1.0, average_within=4.0), balls)
    g = growth_factors(prof)
    ok = len(prof) == 4 and min(g) >= 2.0
    record(7, ok, "rho^+1 growth " + ", ".join(f"{x:.3f}" for x in g))
    assert ok, prof


def test_c7_phi_maximal_lemma(dec, record):
    g = dec.grid
    phi = heat_kernel(dec, 0.25)
    fs = [(f"b{i}", homogeneous_gaussian(g, w, np.array([0.3 * i, -0.2 * i, 0.05 * i]), 4.0))
          for i, w in enumerate((1.0, 1.4, 2.0))]
    rep = lab.phi_lemma_check(fs, phi, [0.25, 0.5, 1.0, 2.0])
    record(7, rep.passed, "phi-lemma constants " + ", ".join(f"{r:.2f}" for r in rep.ratios))
    assert rep.passed, rep.rows


# -- 8. thresholding


def test_c8_thresholding(dec, record):
    g = dec.grid
    rng = np.random.default_rng(8)
    a, M = 0.1, 12.0
    ok12 = True
    for _ in range(1000):
        v = rng.normal(scale=rng.uniform(0.05, 3.0), size=g.size)
        ok12 &= all(lab.threshold_items(v, a, M))
    worst, nodes = 0.0, 0
    for slope in (0.3, 0.8, 2.5):
        ramp = g.function(slope * g.coords[:, 0] + 0.1 * g.coords[:, 2])
        res = lab.taboo_check(ramp, a, M)
        ok12 &= res["item1"] and res["item2"]
        worst, nodes = max(worst, res["item3_error"]), nodes + res["item3_nodes"]
    ok = ok12 and worst < 1e-8 and nodes > 0
    record(8, ok, f"items 1-2 on 1000 random: {ok12}; item 3 max error {worst:.1e} on {nodes} node checks")
    assert ok


# -- 9. Littlewood-Paley


@pytest.mark.parametrize("q", [2.0, 4.0])
def test_c9_littlewood_paley(dec, mixed, q, record):
    for mid, f, _ in mixed.members[::4]:
        rep = lab.lp_approximation_check(dec, f, 6, q)
        cap = rep.params["exponent_cap"]
        record(9, rep.passed, f"q={q:g} {mid}: slope {rep.slope:.3f} (cap {cap + 0.2:.2f}), "
                              f"full-coverage error {max(rep.extras['errors'][j] for j in rep.extras['full_coverage']):.1e}")
        assert rep.passed, _failed(rep)


# -- 10. determinism


def test_c10_determinism(tmp_path, dec, record, capsys):
    cfg = tmp_path / "det.ini"
    cfg.write_text(
        "[run]\nseed = 5\n\n[group]\nname = heisenberg\n\n[grid]\npoints = 17 17 25\nhalf_widths = 4 4 1.5\n\n"
        "[family]\nkind = mixed\n\n[experiment strong]\ntype = strong\nq = 2\n\n"
        "[experiment weak]\ntype = weak\nq = 2\ns = 0.25\n", encoding="utf-8")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        main(["--output-dir", str(out), "run", str(cfg)])
        outs.append(out)
    capsys.readouterr()
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = bool(names) and all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    record(10, same, f"{len(names)} CSVs byte-identical across two runs: {same}")
    assert same
