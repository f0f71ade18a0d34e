"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import time

import numpy as np
from oracles import capped_simplex_oracle, joint_projection_oracle, simplex_oracle
from optcache import benchmark as bm
from optcache.config import Experiment, parse_config
from optcache.core import CacheNetwork, paper_bipartite, single_cache
from optcache.predictors import PredictorSpec, SimulatedStream, simulate
from optcache.projection import (CappedSimplexSpec, JointPolytopeSpec, project_capped_simplex,
                                 project_joint, project_simplex)
from optcache.sim import PolicySpec, evaluate, run_policy
from optcache.spaces import make_space
from optcache.workloads import (TraceSpec, ZipfSpec, batch, empirical_popularity, load_trace,
                                write_synthetic_trace, zipf_probabilities, zipf_stream)

ZIPF = 1.1


def zipf_sim(N, T, specs, seed=0, B=1):
    base = zipf_stream(ZipfSpec(N, ZIPF, seed), T * B)
    sim = simulate(base, zipf_probabilities(N, ZIPF), specs, seed=seed)
    if B > 1:
        sim = SimulatedStream(batch(sim.stream, B), sim.predictions)
    return sim


def run(sim, kind, net, checkpoints=None, batch_size=1, **kw):
    tr = run_policy(sim, PolicySpec(kind, **kw), make_space(net, batch=batch_size))
    return evaluate(tr, checkpoints)


# --------------------------------------------------------------------------


def test_1_perfect_predictions_give_nonpositive_regret(criterion):
    t0 = time.perf_counter()
    ev = run(zipf_sim(50, 2000, [PredictorSpec("oracle")]), "obc", single_cache(50, 5))
    elapsed = time.perf_counter() - t0
    R = ev.column("regret")
    ok = bool(np.all(R <= 1e-9)) and elapsed < 30
    criterion(1, ok, f"max_t R_t = {R.max():.3e} (<= 1e-9), R_T = {R[-1]:.3e}, {elapsed:.1f} s (< 30 s)")
    assert ok


def test_2_data_dependent_envelope(criterion):
    JC, worst, n = 5.0, np.inf, 0
    for rho in (0.0, 0.3, 0.7):
        for seed in range(5):
            ev = run(zipf_sim(50, 2000, [PredictorSpec("follow-prob", rho=rho)], seed=seed),
                     "obc", single_cache(50, 5))
            t = ev.column("t")
            env = 2 * np.sqrt(1 + JC) * np.sqrt(ev.column("h_cum")) + 1e-6 * t
            worst = min(worst, float(np.min(env - ev.column("regret"))))
            n += 1
    ok = worst >= 0
    criterion(2, ok, f"{n} runs, min over checkpoints of envelope - R_t = {worst:.3f} (>= 0)")
    assert ok


def test_3_worst_case_rate(criterion):
    JC, w, T = 5.0, 1.0, 2000
    ev = run(zipf_sim(50, T, [PredictorSpec("adversarial")]), "obc", single_cache(50, 5))
    t, R, avg = ev.column("t"), ev.column("regret"), ev.column("avg_regret")
    env = 2 * np.sqrt(2) * w * np.sqrt(JC + 1) * np.sqrt(t)
    ratio = avg[-1] / avg[t == T // 10][0]
    ok = bool(np.all(R <= env)) and ratio < 0.5
    criterion(3, ok, f"min(env - R_t) = {np.min(env - R):.2f} (>= 0), "
                     f"avg regret T / (T/10) = {ratio:.3f} (< 0.5)")
    assert ok


def test_4_projections_match_grid_search(criterion):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    err = {"capped": 0.0, "simplex": 0.0, "joint": 0.0}
    for _ in range(200):
        d = int(rng.integers(1, 9))
        v = rng.normal(0.4, 1.0, d)
        K = float(rng.uniform(0, d))
        out = project_capped_simplex(v, CappedSimplexSpec(d, K))
        err["capped"] = max(err["capped"], np.abs(out - capped_simplex_oracle(v, K)).max())
        err["simplex"] = max(err["simplex"], np.abs(project_simplex(v) - simplex_oracle(v)).max())
    shapes = [(1, 1, 1), (2, 1, 1), (1, 1, 2), (1, 2, 2), (2, 1, 2), (1, 1, 3), (4, 1, 1)]
    for k in range(200):
        N, I, J = shapes[k % len(shapes)]  # N J + N I J <= 8 variables
        conn = rng.random((I, J)) < 0.7
        conn[:, 0] = True
        net = CacheNetwork(rng.uniform(0.2, 1.5, J), conn, np.ones((N, I, J)))
        v = rng.normal(0.4, 0.8, net.dim)
        out, rep = project_joint(v, JointPolytopeSpec(net))
        y, z, _ = joint_projection_oracle(v[:N * J].reshape(N, J), v[N * J:].reshape(N, I, J),
                                          net.capacity, net.connectivity)
        err["joint"] = max(err["joint"], np.abs(out.y - y).max(), np.abs(out.z - z).max())
    elapsed = time.perf_counter() - t0
    ok = max(err.values()) <= 2e-3 and elapsed < 60
    criterion(4, ok, "max errors " + ", ".join(f"{k} {v:.1e}" for k, v in err.items())
              + f" (<= 2e-3), {elapsed:.1f} s (< 60 s)")
    assert ok


def oec_config(predictor, N=200, C=20, T=5000, seed=0):
    return parse_config({
        "seed": seed,
        "network": {"N": N, "C": C},
        "workload": {"kind": "zipf", "T": T},
        "predictors": [predictor],
        "policy": {"kind": "oec", "a": 1.0, "beta": 0.5},
        "budget": {"prices": {"kind": "uniform", "s_max": 1.0},
                   "budgets": {"kind": "normal", "mean": 0.5, "std": 0.05, "scale": 10.0}},
    })


def test_5_elastic_violation_vanishes(criterion):
    lines, ok = [], True
    for pred in ({"kind": "oracle"}, {"kind": "zero"}, {"kind": "follow-prob", "rho": 0.5}):
        exp = Experiment(oec_config(pred))
        tr = run_policy(exp.sim, exp.policy, exp.space(), exp.prices, exp.budgets)
        ev = evaluate(tr, None, exp.prices, exp.budgets, s_max=exp.s_max)
        V, Venv = ev.column("violation"), ev.column("bound_thm2_V")
        live = ~np.isnan(Venv)
        rate = V[-1] / exp.horizon
        env_ok = bool(np.all(V[live] <= Venv[live]))
        ok &= rate < 1e-2 and env_ok
        lines.append(f"{pred['kind']}: V_T/T = {rate:.2e}, envelope holds at {live.sum()} checkpoints: {env_ok}")
    criterion(5, ok, "; ".join(lines))
    assert ok


def test_6_elastic_without_prices_is_obc(criterion):
    checks = []
    for net in (single_cache(40, 4), paper_bipartite(15, 2.0)):
        T = 300
        base = zipf_stream(ZipfSpec(net.num_files, ZIPF, 0), T, num_locations=net.num_locations)
        sim = simulate(base, zipf_probabilities(net.num_files, ZIPF),
                       [PredictorSpec("follow-prob", rho=0.5)], seed=0)
        prices = np.zeros((T, net.num_caches))
        budgets = np.full(T, 1e12)
        a = run_policy(sim, PolicySpec("obc"), make_space(net), record_digests=True)
        b = run_policy(sim, PolicySpec("oec"), make_space(net), prices, budgets, record_digests=True)
        checks.append(a.digests == b.digests and bool(np.all(b.lam == 0.0)))
    ok = all(checks)
    criterion(6, ok, f"bit-identical decisions and lambda = 0 on single cache / bipartite: {checks}")
    assert ok


def xc_case(sim, net):
    ev = evaluate(run_policy(sim, PolicySpec("xc"), make_space(net)))
    R, env, t = ev.column("regret"), ev.column("bound_thm3"), ev.column("t")
    u = np.array(ev.summary["weights"])
    holds = bool(R[-1] <= env[-1] + 1e-6 * t[-1])
    top = bool(u[2] > max(u[0], u[1]))
    return holds and top, f"R_T = {R[-1]:.1f}, envelope {env[-1]:.1f}, u_T = {np.round(u, 3).tolist()}"


def test_7_experts_envelope_and_tracking(criterion, tmp_path):
    T = 10_000
    experts = [PredictorSpec("follow-prob", rho=0.02), PredictorSpec("follow-prob", rho=0.20)]
    ok_z, d_z = xc_case(zipf_sim(10_000, T, experts), single_cache(10_000, 1))
    path = tmp_path / "trace.csv"
    write_synthetic_trace(path, 1000, T, exponent=0.8, epoch=500, seed=0)
    trace = load_trace(TraceSpec(str(path)))
    sim = simulate(trace.stream, empirical_popularity(trace.stream, trace.num_files), experts, seed=0)
    ok_t, d_t = xc_case(sim, single_cache(trace.num_files, 10))
    ok = ok_z and ok_t
    criterion(7, ok, f"zipf {d_z}; trace {d_t}")
    assert ok


def test_8_alternating_predictions_ordering(criterion):
    T, N, C = 10_000, 10_000, 100
    sim = zipf_sim(N, T, [PredictorSpec("alternating", period=1)])
    R = {k: run(sim, k, single_cache(N, C), checkpoints=[T]).summary["regret"]
         for k in ("obc", "xc", "ogd")}
    r_xc, r_ogd = R["obc"] / R["xc"], R["obc"] / R["ogd"]
    ok = 0 < r_xc < 0.9 and 0 < r_ogd < 0.7
    criterion(8, ok, f"R_T(obc)/R_T(xc) = {r_xc:.3f} (< 0.9), R_T(obc)/R_T(ogd) = {r_ogd:.3f} (< 0.7)")
    assert ok


def test_9_capacity_and_batch_scaling(criterion):
    # envelope scaling in C and B
    h = np.array([10.0, 100.0])
    scale_C = [bm.bound_thm1(C, h) / np.sqrt(C + 1) for C in (1.0, 10.0, 100.0)]
    scale_B = [bm.bound_thm1(10.0, h, B) / np.sqrt(10.0 + B) for B in (1, 5, 20)]
    env_ok = all(np.allclose(s, scale_C[0]) for s in scale_C) and \
        all(np.allclose(s, scale_B[0]) for s in scale_B)
    # OGD regret grows with capacity at fixed T
    N, T = 10_000, 10_000
    sim = zipf_sim(N, T, [PredictorSpec("zero")])
    R = [run(sim, "ogd", single_cache(N, C), checkpoints=[T]).summary["regret"] for C in (50, 100, 150)]
    mono = bool(np.all(np.diff(R) >= 0))
    # batched runs stay inside the envelope built with D(B)
    batched = []
    for B in (1, 5, 20):
        for rho in (0.25, 0.75):
            s = zipf_sim(1000, 2000, [PredictorSpec("follow-prob", rho=rho)], B=B)
            ev = run(s, "obc", single_cache(1000, 10), batch_size=B)
            batched.append(bool(np.all(ev.column("regret") <= ev.column("bound_thm1")
                                       + 1e-6 * ev.column("t"))))
    ok = env_ok and mono and all(batched)
    criterion(9, ok, f"envelope scaling {env_ok}; OGD R_T for C = 50/100/150: "
                     f"{', '.join(f'{r:.1f}' for r in R)}; batched envelope holds in "
                     f"{sum(batched)}/{len(batched)} runs")
    assert ok


def test_10_full_scale_single_cache(criterion):
    N, C, T = 10_000, 100, 10_000
    t0 = time.perf_counter()
    base = zipf_stream(ZipfSpec(N, ZIPF, 0), T)
    pop = zipf_probabilities(N, ZIPF)
    s7 = simulate(base, pop, [PredictorSpec("follow-prob", rho=0.7)], seed=0)
    s0 = simulate(base, pop, [PredictorSpec("follow-prob", rho=0.0)], seed=0)
    cps = bm.default_checkpoints(T)
    e7 = run(s7, "obc", single_cache(N, C), cps)
    eg = run(s7, "ogd", single_cache(N, C), cps)
    e0 = run(s0, "obc", single_cache(N, C), cps)
    elapsed = time.perf_counter() - t0
    avg = e0.column("avg_regret")
    shrink = avg[-1] / avg[e0.column("t") == 1000][0]
    u7, ug = e7.summary["avg_utility"], eg.summary["avg_utility"]
    ok = elapsed < 600 and u7 >= ug and shrink <= 0.5
    criterion(10, ok, f"{elapsed:.1f} s (< 600 s); avg utility obc(0.7) {u7:.3f} >= ogd {ug:.3f}; "
                      f"obc(0) avg regret t=10k / t=1k = {shrink:.3f} (<= 0.5)")
    assert ok
