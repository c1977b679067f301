"""Acceptance criteria on the Table I instance.

Each check prints one PASS/FAIL line with the measured value and the target,
then asserts the same condition.  Reference coordinates are fixed benchmark
data; analytic targets are stated next to their derivation.
"""

import math
import time

import numpy as np
import pytest

from fdharvest import regions
from fdharvest.covopt import chebyshev_bisect, feasibility_profile, scenario_cellular, scenario_d2d
from fdharvest.model import random_channels, table1_instance
from fdharvest.pseudoopt import (
    ImproperRow,
    ImproperSystem,
    beamformers_of,
    build_improper_system,
    improper_bisect,
    improper_design,
    validity_margins,
)
from fdharvest.regions import direction_grid, near_polyline
from fdharvest.sdp import SdpProblem, solve
from fdharvest.stats import LinkStats, augmented_rate_check

LOG2_5 = math.log2(5.0)
LOG2_3 = math.log2(3.0)


def _rel(a, b):
    return abs(a - b) / abs(b)


def _endpoint(sweep, signaling, axis):
    """Value along ``axis`` at the direction concentrated on that axis."""
    target = tuple(1.0 if i == axis else 0.0 for i in range(2))
    p = next(p for p in sweep.select(signaling) if p.weights == target)
    return p.values[axis]


def _cheb(values, weights):
    return min(v / w for v, w in zip(values, weights) if w > 0)


# ----------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def bc_free():
    inst = table1_instance(Psi=(0.0, 0.0))
    t0 = time.perf_counter()
    sweep = regions.scan_rate_region("bc-region", inst, 10)
    return inst, sweep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def bc_harvest():
    inst = table1_instance(Psi=(6.0, 6.0))
    return inst, regions.scan_rate_region("bc-region", inst, 10)


@pytest.fixture(scope="module")
def random_stages():
    out = []
    for seed in range(100):
        inst = random_channels(seed).with_config(Psi=(0.5, 0.5))
        sc = scenario_cellular(inst, (0.6, 0.4))
        res = chebyshev_bisect(sc, inst, seed=seed)
        system = build_improper_system(sc, beamformers_of(inst, res.design), inst.config.K)
        imp = improper_bisect(system, seed=seed)
        out.append((inst, res, system, imp))
    return out


# ---------------------------------------------------------------- criterion 1


def test_1_axis_endpoints(bc_free, verdict):
    _, sweep, _ = bc_free
    ok = True
    for sig in ("proper", "improper"):
        for axis in (0, 1):
            r = _endpoint(sweep, sig, axis)
            ok &= verdict(f"1 {sig} R_{axis + 1}", abs(r - LOG2_5) <= 1e-3,
                          f"endpoint {r:.6f} vs log2(5)={LOG2_5:.6f} (tol 1e-3)")
    assert ok


def test_1_runtime_per_direction(bc_free, verdict):
    _, sweep, _ = bc_free
    worst = max(p.runtime for p in sweep.points)
    assert verdict("1 runtime", worst < 10.0, f"slowest direction {worst:.2f} s (limit 10 s)")


# ---------------------------------------------------------------- criterion 2


@pytest.mark.parametrize("signaling, point", [
    ("proper", (1.01813503649715, 0.814508537769263)),
    ("improper", (1.100031825722, 0.880025974083981)),
])
def test_2_interior_points(bc_free, verdict, signaling, point):
    _, sweep, _ = bc_free
    hit = near_polyline(sweep.curve(signaling), point, 0.02)
    near = min(sweep.curve(signaling), key=lambda q: np.hypot(*(q - point)))
    assert verdict(f"2 {signaling}", hit,
                   f"boundary contains ({point[0]:.4f}, {point[1]:.4f}) within 2%; "
                   f"nearest vertex ({near[0]:.4f}, {near[1]:.4f})")


# ---------------------------------------------------------------- criterion 3


def test_3_proper_endpoint_with_harvesting(bc_harvest, verdict):
    _, sweep = bc_harvest
    r = _endpoint(sweep, "proper", 0)
    target = 1.22238501128129
    assert verdict("3 proper endpoint", _rel(r, target) <= 0.02,
                   f"R_1 {r:.4f} vs {target:.4f} (tol 2%)")


def test_3_improper_endpoint_with_harvesting(bc_harvest, verdict):
    _, sweep = bc_harvest
    r = _endpoint(sweep, "improper", 0)
    target = 1.38149365207228
    assert verdict("3 improper endpoint", _rel(r, target) <= 0.03,
                   f"R_1 {r:.4f} vs {target:.4f} (tol 3%)")


def test_3_improper_dominates(bc_harvest, verdict):
    _, sweep = bc_harvest
    pairs = list(zip(sweep.select("proper"), sweep.select("improper")))
    margins = [_cheb(pi.values, pi.weights) - _cheb(pp.values, pp.weights) for pp, pi in pairs]
    ok = len(pairs) == 10 and min(margins) >= -1e-9
    assert verdict("3 dominance", ok, f"{len(pairs)} directions, min improper-minus-proper {min(margins):.3g}")


# ---------------------------------------------------------------- criterion 4


@pytest.mark.parametrize("label, kappa, rsi, target", [
    ("Tx noise + RSI", 1e-6, 1.0, 1.0),
    ("no impairment", 0.0, 0.0, LOG2_3),
])
def test_4_single_link_endpoints(verdict, label, kappa, rsi, target):
    inst = table1_instance(kappa=kappa, sigma2_rsi=rsi, Sigma=(0.7, 0.7))
    sc = scenario_d2d(inst, (1.0, 0.0), (0.0, 0.0), bs_silent=True)
    r = chebyshev_bisect(sc, inst).objectives[0]
    assert verdict(f"4 {label}", abs(r - target) <= 1e-3, f"R'_1 {r:.6f} vs {target:.6f} (tol 1e-3)")


def test_4_improper_d2d_endpoint_example(verdict):
    # Worked example of the D2D region under cellular QoS, reported alongside criterion 4
    inst = table1_instance(kappa=1e-6, sigma2_rsi=1.0, Sigma=(0.7, 0.7))
    sweep = regions.scan_rate_region("d2d-region", inst, 2)
    r = _endpoint(sweep, "improper", 0)
    target = 0.638294906942206
    assert verdict("4 example improper D2D endpoint", _rel(r, target) <= 0.03,
                   f"R'_1 {r:.4f} vs {target:.4f} (tol 3%)")


# ---------------------------------------------------------------- criterion 5


@pytest.fixture(scope="module")
def ps_ts():
    inst = table1_instance(kappa=0.0, sigma2_rsi=1.0, Sigma=(0.0, 0.0))
    ps = regions.ps_rate_energy(inst, 0, n_directions=10, eta_points=101, Sigma=(0.0, 0.0),
                                signaling=("proper",))
    ts = regions.ts_rate_energy(inst, 0, Sigma=(0.0, 0.0))
    return ps, ts


def test_5_pure_id(ps_ts, verdict):
    ps, _ = ps_ts
    r = ps.points[0].values[0]
    assert verdict("5 pure-ID", abs(r - 1.0) <= 1e-3, f"R' {r:.6f} vs 1.0 (tol 1e-3)")


def test_5_pure_eh(ps_ts, verdict):
    ps, _ = ps_ts
    e = ps.points[-1].values[1]
    assert verdict("5 pure-EH", abs(e - 6.0) <= 1e-3, f"E' {e:.6f} vs 6.0 (tol 1e-3)")


def test_5_ps_above_ts(ps_ts, verdict):
    ps, ts = ps_ts
    gaps = [p.values[1] - ts.at_rate(p.values[0]) for p in ps.select("proper")]
    worst = min(gaps)
    assert verdict("5 PS >= TS", worst >= -1e-6,
                   f"min over {len(gaps)} points of E'_PS - E'_TS = {worst:.4f}")


# ---------------------------------------------------------------- criterion 6


def test_6_cross_rate_energy(verdict):
    inst = table1_instance(Sigma=(0.5, 0.5))
    sweep = regions.cross_rate_energy(inst, info=1, energy=0, n_directions=10, Sigma=(0.5, 0.5),
                                      signaling=("proper",))
    point = (0.915584606749126, 1.92538175029877)
    curve = sweep.curve("proper")
    near = min(curve, key=lambda q: np.hypot(*(q - point)))
    assert verdict("6 cross proper", near_polyline(curve, point, 0.03),
                   f"boundary contains ({point[0]:.4f}, {point[1]:.4f}) within 3%; "
                   f"nearest vertex ({near[0]:.4f}, {near[1]:.4f})")


# ---------------------------------------------------------------- criterion 7


@pytest.fixture(scope="module")
def dpc_sweep(bc_free):
    inst, _, _ = bc_free
    return regions.scan_dpc_region(inst, 10)


def test_7_dpc_reference_point(dpc_sweep, verdict):
    point = (1.10811632747017, 1.38514035966482)
    hit = near_polyline(dpc_sweep.curve("dpc"), point, 0.02)
    assert verdict("7 DPC point", hit, f"boundary contains ({point[0]:.4f}, {point[1]:.4f}) within 2%")


def test_7_dpc_dominates_tin(bc_free, dpc_sweep, verdict):
    _, sweep, _ = bc_free
    margins = [_cheb(d.values, d.weights) - _cheb(t.values, t.weights)
               for d, t in zip(dpc_sweep.select("dpc"), sweep.select("proper"))]
    ok = len(margins) == 10 and min(margins) >= -1e-6
    assert verdict("7 DPC >= TIN", ok, f"{len(margins)} directions, min DPC-minus-TIN {min(margins):.3g}")


# ---------------------------------------------------------------- criterion 8


def test_8a_determinant_identity(verdict):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(1000):
        Cw = rng.uniform(0.1, 10)
        Cy = Cw + rng.uniform(0, 10)
        Cwhat = Cw * rng.uniform(0, 0.999) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        Cyhat = Cy * rng.uniform(0, 0.999) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        worst = max(worst, augmented_rate_check(LinkStats(Cy, Cyhat, Cw, Cwhat)))
    assert verdict("8a determinant identity", worst <= 1e-10, f"max gap {worst:.2e} over 1000 draws (tol 1e-10)")


def test_8b_sdp_oracle(verdict):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 6))
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        H = 0.5 * (A + A.conj().T)
        P = float(rng.uniform(0.5, 5))
        p = SdpProblem()
        p.add_block("X", n)
        p.add({"X": np.eye(n)}, "<=", P, "power")
        p.set_objective({"X": H}, "max")
        sol = solve(p)
        lam = np.linalg.eigvalsh(H)
        worst = max(worst, abs(sol.objective - P * max(lam[-1], 0.0)) / (P * np.abs(lam).max()))
    assert verdict("8b SDP oracle", worst <= 1e-6, f"max relative error {worst:.2e} over 100 H (tol 1e-6)")


def test_8c_step_function(verdict):
    inst = table1_instance()
    bad = []
    for alpha in direction_grid(10):
        sc = scenario_cellular(inst, alpha)
        prof = feasibility_profile(sc, np.linspace(0.0, 1.2 * sc.gamma_hi(), 20))
        cut = prof.index(False) if False in prof else len(prof)
        if not (all(prof[:cut]) and not any(prof[cut:])):
            bad.append(alpha)
    assert verdict("8c bisection monotone", not bad, f"{len(bad)} non-monotone directions of 10")


def test_8d_validity_margins(random_stages, verdict):
    worst = min(min(min(m) for m in validity_margins(system, imp.S)[1]) for _, _, system, imp in random_stages)
    assert verdict("8d margins", worst >= -1e-9, f"min margin {worst:.3g} over {len(random_stages)} instances")


def test_8e_augmented_psd_reconstruction(random_stages, bc_free, verdict):
    designs = [improper_design(inst, res.design, imp) for inst, res, _, imp in random_stages]
    designs += [p.design for p in bc_free[1].select("improper")]
    worst = 0.0
    for d in designs:
        for st in d.bs_streams + d.d2d_streams:
            aug = st.augmented()
            worst = min(worst, float(np.linalg.eigvalsh(0.5 * (aug + aug.conj().T)).min()))
    assert verdict("8e augmented PSD", worst >= -1e-9, f"min eigenvalue {worst:.2e} over {len(designs)} designs")


def test_8f_lambda_at_least_gamma(random_stages, verdict):
    gaps = [imp.Lambda - system.proper_value() for _, _, system, imp in random_stages]
    ok = verdict("8f improper never hurts", min(gaps) >= -1e-12, f"min Lambda - Gamma {min(gaps):.3g}")
    inst = random_channels(2, K=1).with_config(Psi=0.0)
    sc = scenario_cellular(inst, (1.0,))
    res = chebyshev_bisect(sc, inst)
    system = build_improper_system(sc, {"B1": res.design.t_B[0], "D1": np.zeros(2, complex),
                                        "D2": np.zeros(2, complex)}, 1)
    imp = improper_bisect(system)
    gap = abs(imp.Lambda - system.proper_value())
    ok &= verdict("8f interference-free equality", gap <= 1e-9, f"|Lambda - Gamma| {gap:.2e}")
    assert ok


def test_8g_grid_oracle(verdict):
    n2 = 1.5
    rows = [
        ImproperRow("R_1", a=np.array([0.2]), b=np.array([0.5]), Cy=3.0, Cw=1.5, noise=1.0,
                    rate_proper=1.0, weight=0.5),
        ImproperRow("R_2", a=np.array([0.45]), b=np.array([0.1]), Cy=2.5, Cw=1.2, noise=1.0,
                    rate_proper=1.05, weight=0.5),
    ]
    system = ImproperSystem(["B1"], {"B1": np.array([np.sqrt(n2), 0.0], complex)}, rows)
    r = np.linspace(0, n2, 400)
    phi = np.linspace(0, 2 * np.pi, 5, endpoint=False)
    s = (r[:, None] * np.exp(1j * phi[None, :])).ravel()[:, None]
    oracle = float(np.max(np.min([(row.rate_proper + row.gain_vec(s)) / row.weight for row in rows], axis=0)))
    got = improper_bisect(system).value
    assert verdict("8g disc grid", abs(got - oracle) <= 1e-3,
                   f"solver {got:.6f} vs {s.shape[0]}-point grid {oracle:.6f} (tol 1e-3)")


# ---------------------------------------------------------------- criterion 9


def test_9_joint_improper_sum_rate(verdict):
    inst = table1_instance(Psi=(0.0, 0.0), Sigma=(0.0, 0.0))
    pp, pi = regions.joint_region(inst, (1 / 6,) * 6)
    gain = sum(pi.values[:4]) - sum(pp.values[:4])
    assert verdict("9 joint sum rate", gain > 0, f"improper minus proper sum rate {gain:.4f} (must be > 0)")


# -------------------------------------------------------------------- runtime


def test_runtime_full_sweep(bc_free, verdict):
    _, sweep, elapsed = bc_free
    assert verdict("runtime", elapsed < 300 and len(sweep.points) == 20,
                   f"10-direction both-signaling sweep {elapsed:.1f} s (limit 300 s)")
