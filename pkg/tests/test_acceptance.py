"""End-to-end acceptance checks; each test carries the number of the criterion it covers."""

import time

import numpy as np
import pytest

from sma_hybrid import hybrid_wire as hw
from sma_hybrid.benchmark import RunSetup, run_benchmark, run_coupled
from sma_hybrid.calibration import FitSpec, analyze_isotherm, fit, simulate_isotherm
from sma_hybrid.hybrid_wire import EDGES, HybridWireState, WireSystem, phase_fraction_rate
from sma_hybrid.material import WireInput, default_params, sigma_A, sigma_M, x_M4, x_M5
from sma_hybrid.scenarios import StepSpec, loop_areas, resample, scenario_inputs, sinusoid
from sma_hybrid.solver import Constant, SolverOptions, simulate
from sma_hybrid.structure import BeamParams, CoupledSystem, jacobian, wire_lengths

P = default_params()
BP = BeamParams()
SEED = 1
N_SCENARIOS = 30
T_END = 100.0


def criterion(number, title):
    return pytest.mark.criterion(number, title)


@pytest.fixture(scope="module")
def setup():
    return RunSetup(BP, P, T_E=298.0, t_end=T_END)


@pytest.fixture(scope="module")
def batch(setup):
    start = time.perf_counter()
    report = run_benchmark(setup, N_SCENARIOS, SEED, ("hybrid", "mas"), repetitions=3)
    return report, time.perf_counter() - start


@pytest.fixture(scope="module")
def hybrid_runs(setup):
    inputs = scenario_inputs(SEED, N_SCENARIOS, StepSpec(t_end=T_END))
    return [run_coupled(setup, "hybrid", u)[:2] for u in inputs]


@pytest.fixture(scope="module")
def sweep():
    system = CoupledSystem(BP, P, T_E=298.0)
    signal = sinusoid(2.0, 1e-3)
    t = np.linspace(0.0, 3000.0, 6001)
    traj = simulate(system, system.initial_state(), signal, 3000.0,
                    opts=SolverOptions(atol=system.atol()), sample_times=t)
    return system, traj, signal, t


# --- 1 --------------------------------------------------------------------------------

@criterion(1, "substitution identities on a 100x100 grid")
def test_substitution_identities(record_property):
    start = time.perf_counter()
    worst = 0.0
    for eps in np.linspace(0.0, 0.12, 100):
        for T in np.linspace(280.0, 360.0, 100):
            for xm_fn, s_fn in ((x_M4, sigma_A), (x_M5, sigma_M)):
                x = xm_fn(P, eps, T)
                s = (eps - P.eps_T * x) / (x / P.E_M + (1 - x) / P.E_A)
                worst = max(worst, abs(s - s_fn(P, T)) / s_fn(P, T))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max rel error {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-6
    assert elapsed < 1.0


# --- 2 --------------------------------------------------------------------------------

@criterion(2, "isothermal hysteresis at 292/315/338 K")
def test_isothermal_hysteresis(record_property):
    start = time.perf_counter()
    feats = {T: analyze_isotherm(simulate_isotherm(P, T)) for T in (292.0, 315.0, 338.0)}
    elapsed = time.perf_counter() - start
    f = feats[315.0]
    record_property("detail", f"gap {f['plateau_gap'] / 1e6:.3f} MPa, E_A {f['E_austenite'] / 1e9:.3f} GPa, "
                              f"E_M {f['E_martensite'] / 1e9:.3f} GPa, {elapsed:.1f} s")
    assert f["has_plateau"]
    assert f["plateau_gap"] == pytest.approx(P.delta_sigma, rel=0.01)
    assert f["E_austenite"] == pytest.approx(P.E_A, rel=0.01)
    assert f["E_martensite"] == pytest.approx(P.E_M, rel=0.01)
    for T in (292.0, 338.0):
        for key in ("loading_plateau", "unloading_plateau"):
            shift = feats[T][key] - f[key]
            assert shift == pytest.approx(P.sigma_T * (T - 315.0), rel=0.02)
    assert elapsed < 30.0


# --- 3, 4 ---------------------------------------------------------------------------------

@criterion(3, "hybrid vs MAS tip angle within 2% of range on 30 scenarios")
def test_hybrid_mas_equivalence(batch, record_property):
    report, elapsed = batch
    assert len(report.ok) == N_SCENARIOS, [s.error for s in report.scenarios if s.error]
    worst = max(s.max_discrepancy for s in report.ok)
    record_property("detail", f"max discrepancy {100 * worst:.3f}% of range, batch {elapsed:.0f} s")
    assert all(s.alpha_range > 0 for s in report.ok)
    assert worst <= 0.02
    assert elapsed < 600.0


@criterion(4, "median hybrid time <= 0.5x MAS time")
def test_runtime_ratio(batch, record_property):
    report, _ = batch
    ratio = report.ratio
    record_property("detail", f"hybrid {report.median_time('hybrid'):.3f} s, MAS {report.median_time('mas'):.3f} s, "
                              f"ratio {ratio:.3f}")
    print(f"achieved runtime ratio {ratio:.3f}")
    assert ratio <= 0.5


# --- 5 --------------------------------------------------------------------------------

@criterion(5, "input-output hysteresis loop under a 1 mHz sweep")
def test_hysteresis_loop(sweep, record_property):
    system, traj, signal, t = sweep
    assert traj.termination == "time-horizon"
    alpha = resample(traj, 2, t)
    J = np.array([signal(s) for s in t])
    areas = loop_areas(J, alpha, t, 1000.0)
    record_property("detail", "loop areas " + ", ".join(f"{a:.4g}" for a in areas) + " rad W")
    assert len(areas) == 3
    assert all(abs(a) > 1e-4 for a in areas)
    later = np.sign(areas[1:])
    assert np.all(later == later[0])


# --- 6 --------------------------------------------------------------------------------

def _wire_modes(d):
    return (int(d[1]), int(d[3]))


def _check_semantics(system, traj):
    """Returns the largest phase-fraction jump across any recorded jump."""
    assert traj.termination == "time-horizon"
    worst = 0.0
    for rec in traj.jumps:
        wire, index = rec.jump
        before, after = _wire_modes(rec.d_before), _wire_modes(rec.d_after)
        k = wire - 1
        assert (before[k], after[k]) in EDGES
        assert (before[k], after[k]) == hw.JUMP_EDGES[index]
        assert before[1 - k] == after[1 - k]
        pre = np.flatnonzero((traj.t == rec.t) & (traj.j == rec.j))
        post = np.flatnonzero((traj.t == rec.t) & (traj.j == rec.j + 1))
        assert len(pre) and len(post)
        x_pre = system.wire_phase_fractions(traj.z[pre[-1]], traj.d[pre[-1]])
        x_post = system.wire_phase_fractions(traj.z[post[0]], traj.d[post[0]])
        worst = max(worst, abs(x_post[k] - x_pre[k]), abs(x_post[1 - k] - x_pre[1 - k]))
    for z, d, u in zip(traj.z, traj.d, traj.u):
        assert system.in_flow_set(z, d, u, tol=1e-8) or system.enabled_jumps(z, d, u)
    return worst


@criterion(6, "hybrid semantics on the acceptance scenarios")
def test_hybrid_semantics(hybrid_runs, sweep, setup, record_property):
    worst, jumps = 0.0, 0
    runs = list(hybrid_runs) + [(sweep[1], sweep[0])]
    assert all(traj.termination != "zeno-guard" for traj, _ in runs)
    for traj, system in runs:
        worst = max(worst, _check_semantics(system, traj))
        jumps += traj.n_jumps
    record_property("detail", f"{len(runs)} runs, {jumps} jumps, max phase-fraction jump {worst:.1e}")
    assert jumps > 0
    assert worst <= 1e-9
    # fixed policy: a rerun reproduces every jump and sample bit for bit
    u = scenario_inputs(SEED, 1, StepSpec(t_end=T_END))[0]
    a, _, _ = run_coupled(setup, "hybrid", u)
    b, _, _ = run_coupled(setup, "hybrid", u)
    assert [(r.t, r.jump) for r in a.jumps] == [(r.t, r.jump) for r in b.jumps]
    np.testing.assert_array_equal(a.z, b.z)


# --- 7 --------------------------------------------------------------------------------

@criterion(7, "numerical cross-checks")
def test_jacobian_against_finite_differences():
    rng = np.random.default_rng(11)
    h = 1e-7
    worst = 0.0
    for _ in range(100):
        q = np.array([rng.uniform(-1e-3, 1e-3), rng.uniform(-5e-3, 5e-3), rng.uniform(-0.4, 0.4)])
        Jq = jacobian(BP, q)
        for k in range(3):
            dq = np.zeros(3)
            dq[k] = h
            fd = (np.array(wire_lengths(BP, q + dq)) - np.array(wire_lengths(BP, q - dq))) / (2 * h)
            scale = np.maximum(np.abs(fd), 1e-3)
            worst = max(worst, float(np.max(np.abs(Jq[:, k] - fd) / scale)))
    assert worst <= 1e-6


@criterion(7, "numerical cross-checks")
def test_power_balance_at_every_sample(hybrid_runs, record_property):
    worst = 0.0
    for traj, system in hybrid_runs[:5]:
        for z, d in zip(traj.z, traj.d):
            res, scale = system.power_residual(z, d)
            if scale > 0:
                worst = max(worst, abs(res) / scale)
    record_property("detail", f"power residual {worst:.1e}")
    assert worst <= 1e-12


def _partials(p, eps, T, forward):
    """Hand-derived gradient of the algebraic phase fraction x = E_M (E_A eps - s) / S.

    s is the transformation stress of the branch and S = (E_A - E_M) s + E_A E_M eps_T;
    both are affine in T with slope sigma_T and (E_A - E_M) sigma_T.
    """
    s = sigma_A(p, T) if forward else sigma_M(p, T)
    S = (p.E_A - p.E_M) * s + p.E_A * p.E_M * p.eps_T
    num = p.E_A * eps - s
    d_eps = p.E_M * p.E_A / S
    d_T = p.E_M * (-p.sigma_T * S - num * (p.E_A - p.E_M) * p.sigma_T) / S**2
    return d_eps, d_T


@criterion(7, "numerical cross-checks")
def test_transformation_rate_consistency_along_flows(hybrid_runs, record_property):
    worst, n = 0.0, 0
    for traj, system in hybrid_runs:
        w = system.wire
        for z, d, u in zip(traj.z, traj.d, traj.u):
            v1, v2 = system.bundle_velocities(z)
            J1, J2 = (max(u, 0.0), 0.0) if u > 0 else (0.0, max(-u, 0.0))
            for eps, T, x3, q, v, J in ((z[6], z[7], d[0], d[1], v1, J1), (z[8], z[9], d[2], d[3], v2, J2)):
                if q not in (4, 5):
                    continue
                state = HybridWireState(eps, T, x3, q)
                wu = WireInput(v, J / BP.n, system.T_E)
                deps, dT, _, _ = hw.flow_map(w, state, wu)
                phi = phase_fraction_rate(w, state, wu)
                g_eps, g_T = _partials(w, eps, T, q == 4)
                total = g_eps * deps + g_T * dT
                scale = max(abs(phi), abs(g_eps * deps) + abs(g_T * dT), 1e-15)
                worst = max(worst, abs(phi - total) / scale)
                n += 1
    record_property("detail", f"{n} transformation samples, rel error {worst:.1e}")
    assert n > 0
    assert worst <= 1e-6


@criterion(7, "numerical cross-checks")
def test_thermal_fixed_point():
    J, T_E = 0.1, 298.0
    T_star = T_E + J / (P.lam * P.A_s)
    tau = P.heat_capacity / (P.lam * P.A_s)
    traj = simulate(WireSystem(P), (np.array([0.0, T_E]), (0.0, 1)), Constant((0.0, J, T_E)), 10 * tau)
    assert traj.z[-1, 1] == pytest.approx(T_star, rel=1e-3)
    assert abs(traj.z[-1, 1] - T_star) <= 1e-3 * (T_star - T_E)


# --- 8 --------------------------------------------------------------------------------

@criterion(8, "calibration round trip from +-20% guesses")
def test_calibration_round_trip(record_property):
    start = time.perf_counter()
    temps = (292.0, 315.0, 338.0)
    curves = [simulate_isotherm(P, T, n_samples=201) for T in temps]
    spec = FitSpec()
    signs = np.random.default_rng(3).choice([-1.0, 1.0], size=len(spec.free))
    guess = P.with_values(**{n: getattr(P, n) * (1 + 0.2 * s) for n, s in zip(spec.free, signs)})
    res = fit(curves, spec, guess)
    elapsed = time.perf_counter() - start
    errors = {n: getattr(res.params, n) / getattr(P, n) - 1 for n in spec.free}
    record_property("detail", f"max rel error {max(map(abs, errors.values())):.1e}, {elapsed:.1f} s")
    assert res.diagnostics["converged"]
    for name, err in errors.items():
        assert abs(err) <= 0.02, name
    assert elapsed < 300.0
