import numpy as np
import pytest

from fdharvest.covopt import chebyshev_bisect, scenario_cellular, scenario_d2d
from fdharvest.model import random_channels, table1_instance
from fdharvest.pseudoopt import (
    ImproperRow,
    ImproperSystem,
    PreconditionError,
    beamformers_of,
    build_improper_system,
    improper_bisect,
    improper_design,
    pseudo_cov_from_s,
    validity_margins,
)
from fdharvest.stats import StreamCovariance, TxDesign, rates_and_energies


def _proper_stage(inst, alpha=(0.5, 0.5), kind="cellular"):
    sc = scenario_cellular(inst, alpha) if kind == "cellular" else scenario_d2d(inst, alpha)
    res = chebyshev_bisect(sc, inst)
    return sc, res


@pytest.fixture(scope="module")
def table1_stage():
    inst = table1_instance(Psi=(6.0, 6.0))
    sc, res = _proper_stage(inst)
    system = build_improper_system(sc, beamformers_of(inst, res.design), inst.config.K)
    return inst, sc, res, system


def test_interference_free_single_user_structure():
    inst = random_channels(2, K=1).with_config(Psi=0.0)
    sc = scenario_cellular(inst, (1.0,))
    T = {"B1": inst.channels.h_B[0] * np.sqrt(inst.config.P_B), "D1": np.zeros(2, complex), "D2": np.zeros(2, complex)}
    system = build_improper_system(sc, T, 1)
    assert system.streams == ["B1"]
    row = system.rows[0]
    assert np.all(row.b == 0)
    assert np.count_nonzero(row.a) == 1
    res = improper_bisect(system)
    assert np.all(res.S == 0) and res.Lambda == pytest.approx(system.proper_value())
    assert res.value == pytest.approx(system.proper_value())


def test_zero_kappa_removes_self_entries():
    inst = table1_instance(kappa=0.0)
    sc, res = _proper_stage(inst, kind="d2d")
    system = build_improper_system(sc, beamformers_of(inst, res.design), 2)
    for row in system.rows:
        if row.label.startswith("R'_"):
            j = int(row.label[-1]) - 1
            own = system.streams.index(f"D{j + 1}") if f"D{j + 1}" in system.streams else None
            if own is not None:
                assert row.a[own] == 0 and row.b[own] == 0


def test_a_vector_matches_stats_pseudo_variance(table1_stage):
    inst, sc, res, system = table1_stage
    rng = np.random.default_rng(0)
    bounds = system.norms2
    for _ in range(20):
        s = bounds * rng.uniform(0, 1, bounds.size) * np.exp(1j * rng.uniform(0, 2 * np.pi, bounds.size))
        d = res.design.with_pseudo(*_pseudo_arrays(inst, system, s))
        rep = rates_and_energies(inst, d)
        for row in system.rows:
            st = _stats_for(row.label, rep)
            assert abs(np.vdot(row.a, s)) == pytest.approx(abs(st.Cyhat) / st.Cy, abs=1e-10)
            assert abs(np.vdot(row.b, s)) == pytest.approx(abs(st.Cwhat) / st.Cw, abs=1e-10)


def _pseudo_arrays(inst, system, s):
    pc = pseudo_cov_from_s(s, system)
    cfg = inst.config
    Chat_B = np.array([pc.get(f"B{k + 1}", np.zeros((cfg.N, cfg.N), complex)) for k in range(cfg.K)])
    Chat_D = np.array([pc.get(f"D{j + 1}", np.zeros((cfg.M, cfg.M), complex)) for j in range(2)])
    return Chat_B, Chat_D


def _stats_for(label, rep):
    idx = int(label.split("_")[1]) - 1
    return rep.d2d[idx] if label.startswith("R'") else rep.cellular[idx]


def test_improper_never_hurts_and_rates_match(table1_stage):
    inst, sc, res, system = table1_stage
    out = improper_bisect(system)
    assert out.Lambda >= system.proper_value() - 1e-12
    assert out.value >= system.proper_value() - 1e-12
    d = improper_design(inst, res.design, out)
    rep = rates_and_energies(inst, d)
    vals = [rep.R[k] / a for k, a in enumerate(sc.alpha)]
    assert min(vals) == pytest.approx(out.value, rel=1e-9)
    # energies are untouched by the pseudo-covariances
    np.testing.assert_allclose(rep.E, rates_and_energies(inst, res.design).E, rtol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_lambda_at_least_gamma_random(seed):
    inst = random_channels(seed).with_config(Psi=(1.0, 1.0))
    sc, res = _proper_stage(inst, (0.6, 0.4))
    system = build_improper_system(sc, beamformers_of(inst, res.design), 2)
    out = improper_bisect(system, seed=seed)
    assert out.Lambda >= system.proper_value() - 1e-12
    assert out.value >= system.proper_value() - 1e-12
    ok, margins = validity_margins(system, np.outer(out.s, out.s.conj()))
    assert ok, margins


def _toy_system(n2=1.5):
    # one stream, two rates pulling |s| in opposite directions
    rows = [
        ImproperRow("R_1", a=np.array([0.2]), b=np.array([0.5]), Cy=3.0, Cw=1.5, noise=1.0,
                    rate_proper=1.0, weight=0.5),
        ImproperRow("R_2", a=np.array([0.45]), b=np.array([0.1]), Cy=2.5, Cw=1.2, noise=1.0,
                    rate_proper=1.05, weight=0.5),
    ]
    return ImproperSystem(["B1"], {"B1": np.array([np.sqrt(n2), 0.0], complex)}, rows)


def test_one_dimensional_toy_against_disc_grid():
    n2 = 1.5
    system = _toy_system(n2)
    # 2000-point polar grid over |s| <= ||t||^2; the value depends on |s| only,
    # so the points go into the radius
    r = np.linspace(0, n2, 400)
    phi = np.linspace(0, 2 * np.pi, 5, endpoint=False)
    s = (r[:, None] * np.exp(1j * phi[None, :])).ravel()[:, None]
    assert s.shape[0] == 2000
    vals = np.min([(row.rate_proper + row.gain_vec(s)) / row.weight for row in system.rows], axis=0)
    oracle = float(np.max(vals))
    out = improper_bisect(system)
    assert out.value == pytest.approx(oracle, abs=1e-3)
    assert out.value >= oracle - 1e-9  # the grid cannot beat the optimiser


def test_validity_margins_zero_and_violation(table1_stage):
    _, _, _, system = table1_stage
    L = system.size
    ok, margins = validity_margins(system, np.zeros((L, L)))
    assert ok
    for row, (ma, mb) in zip(system.rows, margins):
        assert ma == pytest.approx(1 - row.noise**2 / row.Cy**2)
        assert mb == pytest.approx(1 - row.noise**2 / row.Cw**2)
    big = 1e3 * np.diag(system.norms2**2)
    ok, margins = validity_margins(system, big)
    assert not ok and min(min(m) for m in margins) < 0


def test_pseudo_cov_zero_and_boundary(table1_stage):
    _, _, _, system = table1_stage
    zero = pseudo_cov_from_s(np.zeros(system.size, complex), system)
    assert all(np.all(C == 0) for C in zero.values())
    s = system.norms2.astype(complex)
    for blk, Chat in pseudo_cov_from_s(s, system).items():
        t = system.t[blk]
        aug = StreamCovariance(np.outer(t, t.conj()), Chat).augmented()
        assert abs(np.linalg.eigvalsh(aug).min()) <= 1e-9


def test_pseudo_cov_random_admissible_valid(table1_stage):
    _, _, _, system = table1_stage
    rng = np.random.default_rng(1)
    for _ in range(1000):
        s = system.norms2 * np.sqrt(rng.uniform(0, 1, system.size)) * np.exp(1j * rng.uniform(0, 2 * np.pi, system.size))
        for blk, Chat in pseudo_cov_from_s(s, system).items():
            t = system.t[blk]
            assert StreamCovariance(np.outer(t, t.conj()), Chat).is_valid()


def test_pseudo_cov_bound_violation(table1_stage):
    _, _, _, system = table1_stage
    with pytest.raises(ValueError, match="exceeds"):
        pseudo_cov_from_s(2 * system.norms2.astype(complex), system)


def test_precondition_needs_beamformers():
    inst = table1_instance()
    d = TxDesign(np.array([np.eye(2), np.eye(2)], complex), np.zeros((2, 2, 2), complex))
    with pytest.raises(PreconditionError):
        beamformers_of(inst, d)
