import json

import numpy as np
import pytest

from topoedge.errors import ConfigError
from topoedge.oracle import (
    convergence_study,
    direction_gap_m3,
    eigenstructure_check,
    flux_continuity,
    lemma_check,
    sweep_values,
    tau_sweep,
    tensor_bounds_check,
    tensor_suites,
    validate_topo_gradient,
)
from topoedge.symtensor import SymTensor, quadratic_form_comps


# ---------------------------------------------------------------------------
# topological gradient


@pytest.fixture(scope="module")
def topo_report():
    return validate_topo_gradient(eps_list=(0.2, 0.1))


def test_topo_gradient_ratio_approaches_one(topo_report):
    r = topo_report
    assert all(d < 0 for d in r.measured_dJ)
    assert all(p < 0 for p in r.predicted_dJ)
    e = r.errors()
    assert e[1] < e[0] and e[1] <= 0.1
    assert r.n_list == [100, 400]
    assert all(h <= eps**2 / 4 * (1 + 1e-12) for h, eps in zip(r.h_list, r.eps_list))


def test_topo_gradient_minimizer_identity(topo_report):
    # at both minimizers J = (|f|^2 - <u, f>) / 2, so dJ has a second, independent expression
    np.testing.assert_allclose(topo_report.identity_dJ, topo_report.measured_dJ, rtol=1e-8)


def test_topo_gradient_report_formats(topo_report):
    lines = topo_report.to_csv().splitlines()
    assert lines[0].startswith("eps,h,n,measured_dJ") and len(lines) == 3
    assert json.loads(topo_report.to_json())["eps_list"] == [0.2, 0.1]


def test_topo_gradient_at_critical_point():
    # at a point where all second derivatives vanish the leading term is zero:
    # the change is of higher order than eps^3
    f = lambda X, Y: np.sin(2 * np.pi * X) + np.sin(2 * np.pi * Y)
    r = validate_topo_gradient(f=f, y=(0.5, 0.5), eps_list=(0.3, 0.2, 0.15))
    assert max(abs(p) for p in r.predicted_dJ) <= 1e-20
    scaled = [abs(d) / e**3 for d, e in zip(r.measured_dJ, r.eps_list)]
    assert scaled[0] > scaled[1] > scaled[2]


def test_topo_gradient_linear_in_kappa_minus_one():
    vals = []
    for kappa in (0.9, 0.99, 0.999):
        r = validate_topo_gradient(kappa=kappa, eps_list=(0.2,))
        vals.append(r.measured_dJ[0] / (kappa - 1))
    np.testing.assert_allclose(vals, vals[0], rtol=0.02)
    # kappa = 1 changes nothing
    assert validate_topo_gradient(kappa=1.0, eps_list=(0.2,)).measured_dJ[0] == pytest.approx(0.0, abs=1e-15)


def test_topo_gradient_validation():
    with pytest.raises(ConfigError):
        validate_topo_gradient(eps_list=(0.1, 0.2))
    with pytest.raises(ConfigError):
        validate_topo_gradient(eps_list=(0.2,), cells_per_width=2)
    with pytest.raises(ConfigError):
        validate_topo_gradient(eps_list=(0.2,), kappa=0.0)


# ---------------------------------------------------------------------------
# convergence


@pytest.mark.parametrize("kind,floor", [("smoother_m1", 1.8), ("smoother_m2", 1.5), ("diffusion", 1.8)])
def test_convergence_orders(kind, floor):
    t = convergence_study(kind)
    assert len(t.rows) == 4 and t.rows[0].order is None
    assert min(t.orders) >= floor
    assert all(a.error > b.error for a, b in zip(t.rows, t.rows[1:]))


def test_convergence_m3_short():
    t = convergence_study("smoother_m3", h_list=(1 / 32, 1 / 64, 1 / 128))
    assert t.orders[-1] >= 1.5


def test_convergence_csv():
    t = convergence_study("smoother_m1", h_list=(1 / 16, 1 / 32))
    lines = t.to_csv().splitlines()
    assert len(lines) == 3 and lines[0].split(",")[0] == "h"


def test_convergence_unknown_kind():
    with pytest.raises(ConfigError):
        convergence_study("smoother_m4")


def test_flux_continuity():
    assert flux_continuity(256) <= 0.02
    assert flux_continuity(64, 1.0, 5.0) <= 0.02


# ---------------------------------------------------------------------------
# direction sweeps


def test_tau_sweep_hessian():
    angle, vmax = tau_sweep(SymTensor(2, [1.0, 0.0, 2.0]), 0.25)
    assert vmax == pytest.approx(17.0, rel=1e-12)
    assert min(angle, np.pi - angle) <= 1e-12


def test_tau_sweep_isotropic_is_flat():
    _, vals = sweep_values(SymTensor(2, [1.0, 0.0, 1.0]), 0.1)
    np.testing.assert_allclose(vals, vals[0], rtol=1e-12)
    # for an isotropic Hessian the value is l^2 + l^2 / kappa
    assert vals[0] == pytest.approx(11.0, rel=1e-12)


def test_tau_sweep_resolution():
    with pytest.raises(ConfigError):
        tau_sweep(SymTensor(1, [1.0, 0.0]), 0.1, n_angles=100)


def test_direction_gap_m3(rng):
    for _ in range(20):
        T = SymTensor(3, rng.normal(size=4))
        g = direction_gap_m3(T, 0.01)
        assert g["sweep_max"] >= max(g["kernel_value"], g["kernel_perp_value"]) * (1 - 1e-6)  # 0.05 degree grid
        theta = g["sweep_angle"]
        val = quadratic_form_comps(np.array([np.cos(theta), np.sin(theta)]), 0.01, np.asarray(T.comps))
        assert val == pytest.approx(g["sweep_max"], rel=1e-12)
    with pytest.raises(ConfigError):
        direction_gap_m3(SymTensor(2, [1.0, 0.0, 1.0]), 0.1)


# ---------------------------------------------------------------------------
# randomized tensor suites


def test_tensor_suites_pass():
    results = tensor_suites(seed=3)
    assert [r["name"] for r in results] == ["bounds", "eigenstructure", "lemma_m2"]
    assert all(r["passed"] for r in results), results


def test_tensor_suite_details():
    b = tensor_bounds_check(n=2000, seed=1)
    assert b["samples"] == 2000 and b["lower_margin"] >= 0 and b["upper_margin"] >= 0
    assert eigenstructure_check(n=30, seed=1)["max_residual"] <= 1e-12
    lem = lemma_check(n=30, seed=1)
    assert lem["max_rel_value_error"] <= 1e-6 and lem["max_angle_error_deg"] <= 0.1
