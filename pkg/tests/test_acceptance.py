"""Acceptance criteria 1-10, one test each.

Every test records a single ``criterion N: PASS|FAIL ...`` line, printed
immediately and repeated in the pytest terminal summary.
"""

import itertools
import time

import numpy as np

import test_properties as props
from conftest import ACCEPTANCE_LINES, unit_spec
from latticeh2.densities import per_site_variance
from latticeh2.oracle import build_full_system, h2_per_site, per_theta_variance
from latticeh2.scaling import (Strategy, TuneReference, comm_window, fit_exponent, lemma5_check, log_ratio_spread,
                               sweep_variance)
from latticeh2.sim import empirical_variance, platoon_system, simulate_sde


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def rel(a, b):
    return abs(a - b) / abs(b)


def test_criterion_01_oracle_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    variants = [("static", 0.0), ("dapi_noiseless", 0.0), ("dapi_noisy", 0.05)]
    for (ctrl, eps), d, L, out in itertools.product(variants, (1, 2), (4, 8, 16), ("global", "local")):
        spec = unit_spec(d=d, L=L, controller=ctrl, epsilon=eps)
        closed = per_site_variance(spec, out).V_N
        blocks = per_theta_variance(spec, out)
        full = h2_per_site(build_full_system(spec, out))
        worst = max(worst, rel(blocks, closed), rel(full, closed), rel(full, blocks))
    elapsed = time.perf_counter() - t0
    record(1, worst < 1e-7 and elapsed < 30,
           f"36 cases, worst pairwise rel err {worst:.2e} (< 1e-7), {elapsed:.1f} s (< 30 s)")


def test_criterion_02_analytic_ladder():
    worst = 0.0
    for N in 2 ** np.arange(2, 11):
        spec = unit_spec(L=int(N))
        worst = max(worst, rel(per_site_variance(spec).V_N, (N**2 - 1) / (24 * N)),
                    rel(per_site_variance(spec, "local").V_N, (N - 1) / (2 * N)))
    record(2, worst < 1e-10, f"N = 4..1024, worst rel err {worst:.2e} (< 1e-10)")


def test_criterion_03_slopes_d1():
    t0 = time.perf_counter()
    L_list = [2**k for k in range(6, 13)]
    static = fit_exponent(sweep_variance(unit_spec(), L_list)).slope
    noiseless = fit_exponent(sweep_variance(unit_spec(controller="dapi_noiseless"), L_list)).slope
    noisy = unit_spec(controller="dapi_noisy", epsilon=0.05)
    eta_global = fit_exponent(sweep_variance(noisy, L_list), lambda r: r.report.V_eta).slope
    eta_local = fit_exponent(sweep_variance(noisy, L_list, "local"), lambda r: r.report.V_eta).slope
    elapsed = time.perf_counter() - t0
    ok = (abs(static - 1) <= 0.15 and abs(noiseless) < 0.1 and abs(eta_global - 3) <= 0.15
          and abs(eta_local - 1) <= 0.15 and elapsed < 120)
    record(3, ok, f"slopes static {static:.3f} (1), noiseless {noiseless:.4f} (0), "
                  f"V_eta global {eta_global:.3f} (3), V_eta local {eta_local:.3f} (1), {elapsed:.1f} s")


def test_criterion_04_log_cases_d2():
    t0 = time.perf_counter()
    L_list = [8, 16, 32, 64]
    top = slice(len(L_list) // 2, None)

    def spread(rows, pick):
        return log_ratio_spread([r.N for r in rows][top], [pick(r) for r in rows][top])

    static = spread(sweep_variance(unit_spec(d=2), L_list), lambda r: r.report.V_N)
    noisy = {c0: spread(sweep_variance(unit_spec(d=2, controller="dapi_noisy", epsilon=0.05, c0=c0), L_list,
                                       "local"), lambda r: r.report.V_eta) for c0 in (1.0, 5.0)}
    elapsed = time.perf_counter() - t0
    record(4, static < 0.10 and noisy[5.0] < 0.10 and elapsed < 120,
           f"V/log N spread static global {static:.1%}, V_eta local (c0=5) {noisy[5.0]:.1%} (< 10%); "
           f"at c0=1 the V_eta spread is {noisy[1.0]:.1%}")


def test_criterion_05_grow_averaging_gain():
    template = unit_spec(L=16, controller="dapi_noisy", epsilon=0.1)
    ref = TuneReference(L_ref=16, abar_ref=template.a.beta)
    L_list = [16, 32, 64, 128, 256, 512, 1024]
    local = sweep_variance(template, L_list, "local", Strategy.GROW_AVERAGING_GAIN, ref)
    ratio = max(r.report.V_N for r in local) / local[0].report.V_N
    glob = sweep_variance(template, L_list, "global", Strategy.GROW_AVERAGING_GAIN, ref)
    slope = fit_exponent(glob).slope
    record(5, ratio <= 2.0 and abs(slope - 1) <= 0.15,
           f"local max V_N / V_N(L_ref) = {ratio:.3f} (<= 2), global slope {slope:.3f} (1 +- 0.15)")


def test_criterion_06_centralized_equals_static():
    worst = 0.0
    for (d, L), eps, out in itertools.product([(1, 10), (1, 50), (2, 5), (2, 7)], (0.0, 0.3), ("global", "local")):
        s = h2_per_site(build_full_system(unit_spec(d=d, L=L), out))
        c = h2_per_site(build_full_system(unit_spec(d=d, L=L, controller="centralized", epsilon=eps), out))
        worst = max(worst, rel(c, s))
    record(6, worst < 1e-6, f"N in {{10, 25, 49, 50}}, eps in {{0, 0.3}}, worst rel err {worst:.2e} (< 1e-6)")


def test_criterion_07_window_bound():
    L_list = [2**k for k in range(3, 10)]
    rows = lemma5_check(1.0, 1.0, L_list)
    chain = all(r.symbol_at_thetamin >= r.lower_bound >= r.delta for r in rows)
    fit = fit_exponent(L_list, [r.fixed_window_symbol for r in rows])
    # fit_exponent fits log V against log L; the fixed window decays, so the slope is negative
    slope = fit.slope
    record(7, chain and abs(slope + 2) <= 0.1,
           f"|a(2pi/L)| >= bound >= delta={rows[0].delta:.4f} for L=8..512: {chain}; "
           f"fixed-window slope {slope:.4f} (-2 +- 0.1)")


def test_criterion_08_ring_simulation():
    spec = unit_spec(L=10)
    exact = per_site_variance(spec).V_N
    T, dt = 4100.0, 0.01
    est = []
    for seed in range(8):
        tr = simulate_sde(spec, dt, T, seed=seed, record_every=5)
        est.append(empirical_variance(tr))
    tc = tr.time_constant
    mean, sd = float(np.mean(est)), float(np.std(est, ddof=1))
    record(8, T >= 2000 * tc and rel(mean, exact) < 0.10,
           f"mean {mean:.4f} vs closed form {exact:.4f} ({rel(mean, exact):+.1%} off, < 10%), "
           f"seed spread sd/mean {sd / mean:.1%}, T = {T / tc:.0f} time constants")


def test_criterion_09_platoon():
    t0 = time.perf_counter()
    cbar = 0.5
    q = comm_window(100, cbar)
    base = platoon_system(100, 0.5, 1.5, g_o=1.0, seed=0)
    ctrl = dict(c0=1.0, epsilon=0.5, a_min=0.25)
    near = base.with_controller("dapi_noisy", q_A=1, **ctrl)
    wide = base.with_controller("dapi_noisy", q_A=q, **ctrl)
    dt, seed = 0.1, 1
    v_static = empirical_variance(simulate_sde(base, dt, 100_000.0, seed=seed, record_every=10))
    # the q_A = 1 system relaxes over ~6e6 s; a run from rest underestimates its stationary variance
    v_near = empirical_variance(simulate_sde(near, dt, 20_000.0, seed=seed, record_every=10), min_time_constants=0)
    v_wide = empirical_variance(simulate_sde(wide, dt, 180_000.0, seed=seed, record_every=10))
    exact = {name: h2_per_site(s.state_space()) for name, s in (("static", base), ("wide", wide))}
    ratio = v_wide / v_static
    elapsed = time.perf_counter() - t0
    record(9, v_static < v_near and 0.5 <= ratio <= 2.0,
           f"static {v_static:.2f} < q_A=1 {v_near:.1f}; q_A={q} / static = {ratio:.3f} (within x2); "
           f"stationary H2 static {exact['static']:.2f}, q_A={q} {exact['wide']:.2f}; {elapsed:.0f} s")


def test_criterion_10_property_suites():
    suites = [props.test_eps_squared_scaling, props.test_beta_scaling_static, props.test_symbol_even,
              props.test_lyapunov_residual, props.test_trajectory_bit_reproducible]
    failed = []
    for suite in suites:
        try:
            suite()
        except Exception as exc:  # noqa: BLE001
            failed.append(f"{suite.__name__}: {type(exc).__name__}")
    record(10, not failed, f"{len(suites)} suites x 100 randomized cases"
                           + (f"; failures: {failed}" if failed else ", all green"))
