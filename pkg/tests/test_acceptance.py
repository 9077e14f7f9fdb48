"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict which is echoed in an
"acceptance criteria" section at the end of the pytest run.  Run alone with
``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import json
import math
import sys

import numpy as np
import pytest

from conftest import bump, record
from spmlattice import (
    LatticeVector,
    ModelParams,
    PhiSpec,
    absorbing_radius,
    absorption_experiment,
    apply_A,
    apply_B,
    apply_Bstar,
    check_continuous_dependence,
    energy_report,
    inner_product,
    integrate,
    norm_l2,
    nullity_experiment,
    ou_path,
    pullback_attraction,
    sample_wiener,
    suggested_constants,
    temperedness_of_R,
    verify_growth,
    verify_monotonicity,
)
from spmlattice.attractor import pullback_path, sample_ball
from spmlattice.cli import main
from spmlattice.dynamics import cocycle_defect

pytestmark = pytest.mark.acceptance

# Reference model for the pullback experiments.
N_REF = 64


def reference_params(alpha=0.5, half_width=N_REF):
    return ModelParams.build(half_width, lam=1.0, p=2.0, alpha=alpha, g=bump(half_width, 2.0))


def test_criterion_01_operator_identities():
    rng = np.random.default_rng(1)
    worst_energy = worst_adjoint = worst_bound = 0.0
    for n in (4, 16, 64):
        for _ in range(1000):
            scale = 10.0 ** rng.uniform(-3, 3)
            u = LatticeVector(scale * rng.standard_normal(2 * n + 1))
            w = LatticeVector(rng.standard_normal(2 * n + 3))
            bu = apply_B(u)
            e_lhs, e_rhs = inner_product(apply_A(u), u), norm_l2(bu) ** 2
            worst_energy = max(worst_energy, abs(e_lhs - e_rhs) / e_rhs)
            adj = abs(inner_product(bu, w) - inner_product(u, apply_Bstar(w)))
            worst_adjoint = max(worst_adjoint, adj / (norm_l2(bu) * norm_l2(w)))
            worst_bound = max(worst_bound, e_lhs / norm_l2(u) ** 2)
    ok = worst_energy <= 1e-12 and worst_adjoint <= 1e-12 and worst_bound <= 4.0
    record(1, ok, f"energy rel {worst_energy:.1e}, adjoint rel {worst_adjoint:.1e}, max (Au,u)/|u|^2 {worst_bound:.6f}")
    assert ok


def test_criterion_02_phi_conditions():
    verdicts = {}
    for p in (1.2, 1.5, 2.0, 3.0, 5.0):
        spec = PhiSpec(p=p)
        c1, c2, k = suggested_constants(spec)
        verdicts[p] = verify_growth(spec, c1, c2).passed and verify_monotonicity(spec, k, 0.0).passed
    spec2 = PhiSpec(p=2.0)
    broken_c2 = not verify_growth(spec2, 2.0, 2.0).passed
    broken_k = not verify_monotonicity(spec2, 1.0, 0.0).passed
    ok = all(verdicts.values()) and broken_c2 and broken_k
    record(2, ok, f"suggested constants pass for p in {sorted(p for p, v in verdicts.items() if v)}; "
                  f"c2=2 detected {broken_c2}, k=1 detected {broken_k}")
    assert ok


def test_criterion_03_ou_fidelity():
    T, dt = 1e4, 0.01
    variances, ratios, means = [], [], []
    for seed in range(20):
        ou = ou_path(sample_wiener(seed, -50.0, T, dt))
        fwd = ou.window(0.0, T)
        variances.append(float(np.var(fwd)))
        ratios.append(abs(ou.at(T)) / T)
        means.append(abs(ou.integral(0.0, T)) / T)
    var_err = max(abs(v - 0.5) / 0.5 for v in variances)
    ok = var_err <= 0.05 and max(ratios) < 0.05 and max(means) < 0.05
    record(3, ok, f"max |Var z - 1/2|/(1/2) {var_err:.3f}, max |z(T)|/T {max(ratios):.1e}, "
                  f"max |mean z| {max(means):.1e} over 20 seeds")
    assert ok


def test_criterion_04_cocycle():
    n = 32
    params = ModelParams.build(n, lam=1.0, p=2.0, alpha=0.5, g=bump(n, 2.0))
    rng = np.random.default_rng(4)
    defects = []
    for seed in range(10):
        w = sample_wiener(seed, -50.0, 2.0, 0.01)
        v0 = LatticeVector(2.0 * rng.standard_normal(2 * n + 1))
        defects.append(cocycle_defect(0.5, 0.5, w, v0, params, 1e-9))
    ok = max(defects) <= 1e-5
    record(4, ok, f"max relative cocycle defect {max(defects):.2e} over 10 seeds")
    assert ok


def test_criterion_05_deterministic_decay():
    rng = np.random.default_rng(5)
    worst = -np.inf
    for trial in range(10):
        n = 16
        lam = float(rng.uniform(0.3, 2.0))
        params = ModelParams.build(n, lam=lam, p=float(rng.uniform(1.2, 4.0)), alpha=0.0)
        v0 = LatticeVector(float(rng.uniform(0.1, 5.0)) * rng.standard_normal(2 * n + 1))
        ou = ou_path(sample_wiener(trial, -10.0, 5.0, 0.01))
        traj = integrate(v0, ou, params, 5.0, tol=1e-9)
        nsq = np.sum(traj.states**2, axis=1)
        worst = max(worst, float(np.max(nsq - np.exp(-lam * traj.times) * nsq[0])))
    # single site v' = -v - 3 v|v| against fixed-step RK4 with h = 1e-6
    y, h = 1.0, 1e-6
    f = lambda y: -y - 3.0 * y * abs(y)  # noqa: E731
    for _ in range(1_000_000):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    single = ModelParams.build(0, lam=1.0, p=2.0, alpha=0.0)
    got = integrate(LatticeVector([1.0]), ou_path(sample_wiener(0, 0.0, 1.0, 0.01)), single, 1.0, tol=1e-12)
    gap = abs(got.final.values[0] - y)
    ok = worst <= 1e-9 and gap <= 1e-8
    record(5, ok, f"max |v|^2 - e^(-lam t)|v0|^2 = {worst:.1e}; single site vs RK4(1e-6) {gap:.1e} "
                  f"(closed form 1/(4e-3) off by {abs(y - 1 / (4 * math.e - 3)):.1e})")
    assert ok


def test_criterion_06_energy_inequality():
    rng = np.random.default_rng(6)
    worst, interior, runs = np.inf, np.inf, 0
    for run in range(100):
        n = int(rng.integers(3, 17))
        sites = np.arange(-n, n + 1)
        g = float(rng.uniform(0, 2)) * np.exp(-(sites - rng.integers(-2, 3)) ** 2 / (2 * rng.uniform(0.5, 3) ** 2))
        if run % 4 == 0:
            g = np.zeros_like(g)
        a = float(rng.uniform(0, 0.5)) * np.exp(-np.abs(sites) * rng.uniform(0.2, 1.0))
        params = ModelParams.build(n, lam=float(rng.uniform(0.3, 2.0)), p=float(rng.uniform(1.3, 4.0)),
                                   alpha=float(rng.uniform(0.0, 1.0)), g=g, a=a)
        v0 = LatticeVector(float(rng.uniform(0.1, 3.0)) * rng.standard_normal(2 * n + 1))
        ou = ou_path(sample_wiener(1000 + run, -50.0, 2.0, 0.01))
        rep = energy_report(integrate(v0, ou, params, 2.0, tol=1e-9))
        worst = min(worst, rep.min_residual)
        interior = min(interior, float(rep.residual[1:].min()))
        runs += 1
    ok = worst >= -1e-6
    record(6, ok, f"min energy residual {worst:.3e} (min over t > 0: {interior:.3e}) over {runs} randomized runs")
    assert ok


def test_criterion_07_absorption():
    params = reference_params()
    times = [1.0, 2.0, 5.0, 10.0, 20.0]
    rep = absorption_experiment(10.0, times, list(range(20)), params, dt=0.01, tol=1e-7, horizon=50.0)
    stoch_ok = all(rep.inside[s][-1] for s in rep.seeds)
    # unforced deterministic case: R = 1 and |phi|^2 <= e^{-lambda t} B^2
    det = absorption_experiment(10.0, list(np.arange(0.25, 6.01, 0.25)), [0],
                                ModelParams.build(16, lam=1.0, p=2.0, alpha=0.0), tol=1e-8)
    closed = 2.0 * math.log(10.0)
    observed = det.absorption_time[0]
    det_ok = (observed is not None and observed <= 1.1 * closed
              and abs(det.bound_time[0] - closed) <= 0.1 * closed)
    ok = stoch_ok and det_ok
    worst = max(rep.max_norm[s][-1] / math.sqrt(rep.radius_sq[s]) for s in rep.seeds)
    record(7, ok, f"20/20 seeds inside at t=20: {stoch_ok} (max |phi|/R {worst:.3f}); "
                  f"alpha=0 absorbed by t={observed}, bound time {det.bound_time[0]:.3f} vs closed form {closed:.3f}")
    assert ok


def test_criterion_08_radius_quadrature():
    params = reference_params()
    diffs = []
    for seed in range(10):
        ou = pullback_path(seed, 110.0, 0.01)
        diffs.append(abs(absorbing_radius(ou, params, 100.0).R_squared - absorbing_radius(ou, params, 50.0).R_squared))
    ou = pullback_path(0, 110.0, 0.01)
    unforced = absorbing_radius(ou, ModelParams.build(N_REF), 50.0).R_squared
    n = 10
    g, a = bump(n, 1.5), 0.3 * np.exp(-np.abs(np.arange(-n, n + 1)))
    det = ModelParams.build(n, lam=0.8, alpha=0.0, g=g, a=a)
    closed = 1.0 + (8.0 * g @ g / 0.8 + 2.0 * a.sum()) / 0.8
    det_err = abs(absorbing_radius(ou, det, 100.0).R_squared - closed)
    ok = max(diffs) < 1e-8 and unforced == 1.0 and det_err <= 1e-10
    record(8, ok, f"max horizon-doubling change {max(diffs):.1e}; unforced R^2 = {unforced}; "
                  f"alpha=0 closed form error {det_err:.1e}")
    assert ok


def test_criterion_09_radius_temperedness():
    params = reference_params()
    t_list = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
    rep = temperedness_of_R(list(range(10)), [0.1], t_list, params, dt=0.01, horizon=50.0)
    worst = max(rep.decay_ratio.values())
    ok = worst <= 1e-2
    record(9, ok, f"max e^(-0.1 t)R^2 ratio t=100 vs t=1: {worst:.2e} over 10 seeds")
    assert ok


def test_criterion_10_tail_nullity():
    n = 32
    g = np.where(np.abs(np.arange(-n, n + 1)) <= 5, 1.0, 0.0)
    params = ModelParams.build(n, lam=1.0, p=2.0, alpha=0.5, g=g)
    times = [5.0, 10.0, 20.0, 40.0]
    rep = nullity_experiment(1e-3, times, [0, 1, 2], params, dt=0.01, tol=1e-8, horizon=50.0)
    ladders = {s: rep.extra["min_I0"][s] for s in rep.seeds}
    # non-increasing, settled over the last two times, and well inside the truncation
    ok = all(
        all(b <= a for a, b in zip(m, m[1:])) and m[-1] == m[-2] and m[-1] <= n // 2
        for m in ladders.values()
    )
    record(10, ok, f"minimal I0 for eps^2=1e-6 at t=5,10,20,40: {ladders}")
    assert ok


def test_criterion_11_pullback_attraction():
    params = reference_params()
    A = sample_ball(N_REF, 1.0, 0, 4)
    B = sample_ball(N_REF, 10.0, 1, 4)
    rep = pullback_attraction(A, B, [1.0, 2.0, 5.0, 10.0, 20.0], list(range(5)), params, dt=0.01, tol=1e-8)
    final = {s: rep.distances[s]["mutual"][-1] for s in rep.seeds}
    ok = all(d < 1e-4 for d in final.values())
    record(11, ok, f"max mutual semi-distance at t=20: {max(final.values()):.2e} over 5 seeds")
    assert ok


def test_criterion_12_continuous_dependence():
    rng = np.random.default_rng(12)
    n = 16
    failures, margins, rhos = 0, [], []
    for run in range(50):
        params = ModelParams.build(n, lam=float(rng.uniform(0.5, 2.0)), p=float(rng.uniform(1.5, 3.0)),
                                   alpha=float(rng.uniform(0.0, 1.0)), g=bump(n, float(rng.uniform(1, 4))))
        u0 = LatticeVector(float(rng.uniform(0.2, 1.5)) * rng.standard_normal(2 * n + 1))
        delta = 10.0 ** rng.uniform(-8, -1) * rng.standard_normal(2 * n + 1)
        ou = ou_path(sample_wiener(run, -50.0, 1.0, 0.01))
        rep = check_continuous_dependence(u0, u0 + LatticeVector(delta), ou, params, 1.0, tol=1e-10)
        failures += not rep.holds
        margins.append(rep.sup_diff_sq / rep.bound)
        rhos.append(rep.rho)
    ok = failures == 0
    record(12, ok, f"{50 - failures}/50 runs within e^(rho T)|u0-v0|^2, max sup/bound {max(margins):.2e}, "
                   f"rho in [{min(rhos):.1f}, {max(rhos):.1f}]")
    assert ok


def test_criterion_13_reproducibility(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": {"half_width": 16, "g": {"profile": "gaussian-bump", "width": 2.0}},
        "noise": {"seeds": [0, 1], "horizon": 20.0},
        "experiment": {"T": 1.0, "pullback_times": [1.0, 2.0], "n_random": 2},
    }))
    same = []
    for cmd in ("simulate", "absorb"):
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{cmd}_{rep}"
            assert main([cmd, "--config", str(cfg), "--out", str(out), "--emit-plot-data"]) == 0
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir() if p.suffix == ".csv")
        same.append(bool(names) and all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in names))
    ok = all(same)
    record(13, ok, f"repeated simulate/absorb CSV outputs byte-identical: {same}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
