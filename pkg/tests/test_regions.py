from dataclasses import replace

import numpy as np
import pytest

from fdharvest import covopt, regions
from fdharvest.covopt import blocks_from_design
from fdharvest.model import random_channels, table1_instance
from fdharvest.regions import (
    convex_hull_upper,
    direction_grid,
    near_polyline,
    pareto_filter,
)
from fdharvest.stats import rates_and_energies


def test_pareto_examples():
    assert pareto_filter([(1, 1), (2, 0), (0, 2)]) == [0, 1, 2]
    assert pareto_filter([(1, 1), (1, 1)]) == [0]
    assert pareto_filter([(1, 1), (0.5, 0.5)]) == [0]


def test_direction_grids():
    lin = direction_grid(10)
    assert lin[0] == (1.0, 0.0) and lin[-1] == (0.0, 1.0)
    assert lin[4][0] == pytest.approx(5 / 9)
    ang = direction_grid(10, "angle")
    assert ang[0] == (1.0, 0.0) and ang[-1] == (0.0, 1.0)
    assert all(abs(sum(a) - 1) < 1e-15 for a in lin + ang)
    with pytest.raises(ValueError):
        direction_grid(1)


def test_near_polyline():
    curve = np.array([[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]])
    assert near_polyline(curve, (1.0, 1.0), 0.01)
    assert near_polyline(curve, (0.5, 1.5), 0.01)  # on a segment, not a vertex
    assert not near_polyline(curve, (1.5, 1.5), 0.02)


def test_convex_hull_upper():
    pts = np.array([[2.0, 0.2], [1.5, 1.5], [0.2, 2.0], [0.9, 0.9]])
    hull = convex_hull_upper(pts)
    assert not any(np.allclose(h, [0.9, 0.9]) for h in hull)
    assert any(np.allclose(h, [1.5, 1.5]) for h in hull)
    assert np.all(np.diff(hull[:, 0]) >= 0)


@pytest.fixture(scope="module")
def bc_sweep():
    inst = table1_instance(Psi=(0.0, 0.0))
    return inst, regions.scan_rate_region("bc-region", inst, 10)


def test_bc_sweep_rows_and_reference_points(bc_sweep):
    inst, sw = bc_sweep
    assert len(sw.points) == 20
    assert all(p.ok for p in sw.points)
    assert near_polyline(sw.curve("proper"), (1.01813503649715, 0.814508537769263), 0.02)
    assert near_polyline(sw.curve("improper"), (1.100031825722, 0.880025974083981), 0.02)


def test_closure(bc_sweep):
    inst, sw = bc_sweep
    for p in sw.points:
        rep = rates_and_energies(inst, p.design)
        np.testing.assert_allclose(rep.R, p.values, rtol=1e-10, atol=1e-12)


def test_improper_dominates_per_direction(bc_sweep):
    _, sw = bc_sweep
    for pp, pi in zip(sw.select("proper"), sw.select("improper")):
        assert pp.weights == pi.weights
        assert pi.Lambda >= pp.gamma - 1e-12


def test_failed_direction_is_reported_not_raised():
    inst = table1_instance(Psi=(50.0, 50.0))
    sw = regions.scan_rate_region("bc-region", inst, 3, signaling=("proper",))
    assert len(sw.points) == 3
    assert all(p.status.startswith("infeasible") for p in sw.points)


def test_parallel_map_keeps_order():
    inst = table1_instance(Psi=(0.0, 0.0))
    a = regions.scan_rate_region("bc-region", inst, 4, signaling=("proper",))
    b = regions.scan_rate_region("bc-region", inst, 4, signaling=("proper",), workers=3)
    assert [p.weights for p in a.points] == [p.weights for p in b.points]
    np.testing.assert_allclose([p.values for p in a.points], [p.values for p in b.points], rtol=1e-9)


def test_ts_endpoints_match_ps_extremes():
    inst = table1_instance(kappa=0.0, Sigma=(0.0, 0.0))
    ts = regions.ts_rate_energy(inst, 0, Sigma=(0.0, 0.0))
    ps = regions.ps_rate_energy(inst, 0, n_directions=2, eta_points=5, Sigma=(0.0, 0.0), signaling=("proper",))
    id_pt, eh_pt = ps.points[0], ps.points[-1]
    assert id_pt.eta == 1.0 and eh_pt.eta == 0.0
    assert ts.id_point.values == id_pt.values
    assert ts.eh_point.values == eh_pt.values
    assert ts.id_point.values[0] == pytest.approx(1.0, abs=1e-3)
    assert ts.eh_point.values[1] == pytest.approx(6.0, abs=1e-3)
    mid = ts.line(3)[1]
    np.testing.assert_allclose(mid, 0.5 * (np.array(ts.id_point.values) + np.array(ts.eh_point.values)))


def test_cross_rate_endpoint_recovers_single_rate():
    inst = table1_instance()
    cross = regions.cross_rate_energy(inst, 1, 0, n_directions=2, signaling=("proper",))
    r_cross = cross.points[0].values[0]
    single = covopt.chebyshev_bisect(covopt.scenario_d2d(inst, (0.0, 1.0)), inst)
    assert r_cross == pytest.approx(single.objectives[1], abs=1e-5)


def test_cross_both_roles_labels():
    inst = table1_instance()
    sw = regions.cross_rate_energy(inst, 1, 0, n_directions=2, signaling=("proper",), both_roles=True)
    assert {p.labels for p in sw.points} == {("R'_2", "E'_1"), ("R'_1", "E'_2")}


def test_joint_concentrated_weight_recovers_d2d_endpoint():
    inst = table1_instance(Sigma=(0.0, 0.0))
    p = regions.joint_region(inst, (1, 0, 0, 0, 0, 0), signaling=("proper",))[0]
    single = covopt.chebyshev_bisect(covopt.scenario_d2d(inst, (1.0, 0.0), (0.0, 0.0)), inst)
    assert p.values[0] == pytest.approx(single.objectives[0], abs=1e-5)


def test_joint_symmetric_instance_equal_rates():
    base = random_channels(3)
    ch = base.channels
    u, v, g, gb, gs = ch.h_B[0], ch.h_D[0, 0], ch.g_peer[0], ch.g_B[0], ch.g_self[0]
    sym = replace(ch, h_B=np.array([u, u]), h_D=np.array([[v, v], [v, v]]), g_peer=np.array([g, g]),
                  g_B=np.array([gb, gb]), g_self=np.array([gs, gs]))
    inst = replace(base, channels=sym)
    p = regions.joint_region(inst, (1 / 6,) * 6, signaling=("proper",))[0]
    rates = np.array(p.values[:4])
    assert np.ptp(rates) <= 1e-3
    assert abs(p.values[4] - p.values[5]) <= 1e-3 * max(p.values[4:])


def test_joint_improper_sum_rate_gain():
    inst = table1_instance(Psi=(0.0, 0.0), Sigma=(0.0, 0.0))
    pp, pi = regions.joint_region(inst, (1 / 6,) * 6)
    assert sum(pi.values[:4]) > sum(pp.values[:4])
    np.testing.assert_allclose(pi.values[4:], pp.values[4:], rtol=1e-12)


def test_d2d_stored_values_match_design():
    inst = table1_instance()
    sw = regions.scan_rate_region("d2d-region", inst, 3)
    for p in sw.points:
        if p.signaling == "proper":
            sc = covopt.scenario_d2d(inst, p.weights)
            np.testing.assert_allclose(sc.values(blocks_from_design(inst, p.design)), p.values, rtol=1e-10)
        rep = rates_and_energies(inst, p.design)
        np.testing.assert_allclose(rep.Rd, p.values, rtol=1e-10)
