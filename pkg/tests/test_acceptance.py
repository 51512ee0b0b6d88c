"""Acceptance gate: one test per shipped guarantee, one printed line each.

Every test prints `ACCEPTANCE <n> PASS|FAIL <name>: <detail>` so a plain
pytest run of this module doubles as a checklist.  The designs are pinned
by seed; thresholds and runtime bounds are part of the guarantee.
"""

import csv
import filecmp
import math
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats
from sklearn.metrics import adjusted_rand_score

from netclust import FitConfig
from netclust.cli import main as cli_main
from netclust.kernels import KernelConfig, correction_term, planar_gaussian
from netclust.model import (ModelContext, dahl_select, point_estimate, run_mcmc,
                            sample_state_from_prior, stick_breaking,
                            update_concentration, update_memberships,
                            update_sticks, update_theta, update_centers,
                            ChainState)
from netclust.network import EventSet, pixelate, shortest_path_dist
from netclust.sim import sim_mixture, sim_poisson
from netclust.sumstats import envelope_pvalue, multitype_pcf

import sys
assess_mod = sys.modules.get("netclust.assess") or __import__(
    "netclust.assess", fromlist=["assess"])


@pytest.fixture
def announce(capsys):
    def _announce(num, ok, name, detail):
        tag = "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"ACCEPTANCE {num:2d} {tag} {name}: {detail}")
    return _announce


def quadrature_kernels(net, step, seed=0):
    """Dense midpoint-rule point set: a near-exact stand-in for the Monte
    Carlo correction (relative error ~1e-6 at 2 m spacing)."""
    segs, fracs = [], []
    for i in range(net.n_segments):
        m = max(1, int(np.ceil(net.lengths[i] / step)))
        segs.append(np.full(m, i))
        fracs.append((np.arange(m) + 0.5) / m)
    pts = net.points_from_arrays(np.concatenate(segs), np.concatenate(fracs))
    return KernelConfig(pts, seed, net.total_length)


# -- shared synthetic-recovery artifacts (criteria 4 and 8) -------------------


RECOVERY_W_S = 150.0
RECOVERY_W_T = 0.1


@pytest.fixture(scope="module")
def recovery(grid10):
    centers = grid10.points_from_arrays(np.array([0, 44, 98]),
                                        np.array([0.5, 0.5, 0.5]))
    center_t = np.array([0.2, 0.5, 0.8])
    truth = sim_mixture(grid10, centers, center_t, RECOVERY_W_S, RECOVERY_W_T,
                        np.ones(3) / 3, 500, rng=np.random.default_rng(12))
    cfg = FitConfig(max_clusters=10, iterations=5000, thin=5, seed=4,
                    mc_points=1000, pixel_rows=10, pixel_cols=10,
                    concentration_rate=5.0)
    t0 = time.perf_counter()
    run = run_mcmc(truth.events, grid10, cfg)
    wall = time.perf_counter() - t0
    return {"net": grid10, "truth": truth, "centers": centers, "cfg": cfg,
            "run": run, "wall": wall}


def test_01_kernel_normalization(grid10, announce):
    """Corrected spatial kernel integrates to one along the network for 50
    random (pixel-representative, bandwidth) pairs, within three standard
    errors of its own 1000-point Monte Carlo correction."""
    t0 = time.perf_counter()
    mc = KernelConfig.draw(grid10, 1000, seed=14)
    quad = quadrature_kernels(grid10, 0.5)
    reps = pixelate(grid10, 10, 10).rep_points
    rng = np.random.default_rng(14)
    length = grid10.total_length
    worst = 0.0
    for _ in range(50):
        cxy = reps.xy[int(rng.integers(0, len(reps)))]
        w = float(rng.uniform(100.0, 1000.0))
        corr = correction_term(mc, cxy, w)
        kappa = planar_gaussian(quad.mc_points.xy, cxy, w).ravel()
        integral = (length / quad.n_points) * kappa.sum() / corr
        kap_mc = planar_gaussian(mc.mc_points.xy, cxy, w).ravel()
        se = length * kap_mc.std(ddof=1) / math.sqrt(mc.n_points) / corr
        worst = max(worst, abs(integral - 1.0) / se)
    wall = time.perf_counter() - t0
    ok = worst < 3.0 and wall < 60.0
    announce(1, ok, "kernel normalization",
             f"worst |integral-1| = {worst:.2f} MC standard errors "
             f"over 50 pairs ({wall:.1f}s)")
    assert worst < 3.0
    assert wall < 60.0


def test_02_conjugate_conditionals(grid5, make_events, announce):
    """Stick and concentration updates reproduce their closed-form Beta and
    Gamma conditionals: moments over 1e5 draws, plus an exact Beta(4, 1)
    replay for the three-member, unit-concentration toy case."""
    t0 = time.perf_counter()
    n_draws = 100_000

    events = make_events(grid5, [0, 1, 2, 5, 8, 9, 14, 20, 22, 30, 40, 50],
                         [0.5] * 12, list(np.linspace(0.1, 0.9, 12)))
    cfg = FitConfig(max_clusters=3, iterations=10, seed=0, mc_points=100,
                    pixel_rows=6, pixel_cols=6)
    ctx = ModelContext.build(events, grid5, cfg)
    g = np.array([0] * 4 + [1] * 6 + [2] * 2)
    seg, off = np.array([0, 12, 23]), np.array([0.5, 0.5, 0.5])
    state = ChainState(200.0, 0.2, 1.5, np.array([0.5, 0.5, 1.0]),
                       stick_breaking(np.array([0.5, 0.5, 1.0])), g,
                       seg, off, grid5.points_from_arrays(seg, off).xy,
                       np.array([0.3, 0.5, 0.7]))

    rng = np.random.default_rng(8)
    draws = np.empty((n_draws, 2))
    for b in range(n_draws):
        draws[b] = update_sticks(state, ctx, rng).U[:2]
    # U_0 ~ Beta(1+4, 1.5+8), U_1 ~ Beta(1+6, 1.5+2)
    checks = []
    for col, (a, bb) in enumerate([(5.0, 9.5), (7.0, 3.5)]):
        mean_t = a / (a + bb)
        var_t = a * bb / ((a + bb) ** 2 * (a + bb + 1.0))
        z_mean = abs(draws[:, col].mean() - mean_t) / math.sqrt(var_t / n_draws)
        m2 = draws[:, col] ** 2
        m2_t = var_t + mean_t ** 2
        z_m2 = abs(m2.mean() - m2_t) / (m2.std(ddof=1) / math.sqrt(n_draws))
        checks.extend([z_mean, z_m2])

    state_u = replace(state, U=np.array([0.3, 0.5, 1.0]))
    rate = 2.0 - float(np.log1p(-state_u.U[:-1]).sum())
    cfg2 = FitConfig(max_clusters=3, iterations=10, seed=0, mc_points=100,
                     pixel_rows=6, pixel_cols=6, concentration_rate=2.0)
    ctx2 = ModelContext.build(events, grid5, cfg2)
    bu = np.empty(n_draws)
    for b in range(n_draws):
        bu[b] = update_concentration(state_u, ctx2, rng).b_u
    mean_t, var_t = 3.0 / rate, 3.0 / rate ** 2
    checks.append(abs(bu.mean() - mean_t) / math.sqrt(var_t / n_draws))
    m2 = bu ** 2
    checks.append(abs(m2.mean() - (var_t + mean_t ** 2)) /
                  (m2.std(ddof=1) / math.sqrt(n_draws)))

    # exact replay: 3 members in the first of two components, none after,
    # b_u = 1 -> the free stick is one Beta(4, 1) variate
    ev3 = make_events(grid5, [0, 0, 0], [0.2, 0.5, 0.8], [0.2, 0.5, 0.8])
    cfg3 = FitConfig(max_clusters=2, iterations=10, seed=0, mc_points=100,
                     pixel_rows=6, pixel_cols=6)
    ctx3 = ModelContext.build(ev3, grid5, cfg3)
    seg2, off2 = np.array([0, 1]), np.array([0.5, 0.5])
    toy = ChainState(200.0, 0.2, 1.0, np.array([0.5, 1.0]),
                     stick_breaking(np.array([0.5, 1.0])),
                     np.zeros(3, dtype=np.int64), seg2, off2,
                     grid5.points_from_arrays(seg2, off2).xy,
                     np.array([0.5, 0.5]))
    got = update_sticks(toy, ctx3, np.random.default_rng(99)).U[0]
    want = np.random.default_rng(99).beta(np.array([4.0]), np.array([1.0]))[0]
    exact = got == want

    wall = time.perf_counter() - t0
    worst_z = max(checks)
    ok = worst_z < 3.0 and exact and wall < 60.0
    announce(2, ok, "conjugate conditionals",
             f"worst moment z = {worst_z:.2f} over 1e5 draws, Beta(4,1) replay "
             f"{'exact' if exact else 'MISMATCH'} ({wall:.1f}s)")
    assert worst_z < 3.0
    assert exact
    assert wall < 60.0


def test_03_joint_distribution_check(grid5, announce):
    """Prior-data coherence of the full sweep (Geweke-style): 5000 replicates
    each start at an exact prior draw, simulate events from the model, apply
    ten production sweeps, and the final (w_s, w_t, b_u) must still be prior
    draws.  The kernel correction uses dense quadrature so the only source of
    discrepancy is the update logic itself."""
    t0 = time.perf_counter()
    cfg = FitConfig(max_clusters=10, iterations=10, seed=33, mc_points=200,
                    pixel_rows=8, pixel_cols=8, step_log_ws=0.3,
                    step_log_wt=0.3, weight_mode="raw")
    rng = np.random.default_rng(202)
    ev0 = sim_poisson(grid5, n=100, rng=rng)
    ctx0 = replace(ModelContext.build(ev0, grid5, cfg),
                   kernels=quadrature_kernels(grid5, 2.0, cfg.seed))

    def resim(state, rng):
        centers = grid5.points_from_arrays(state.center_seg, state.center_off)
        return sim_mixture(grid5, centers, state.center_t, state.w_s,
                           state.w_t, state.q, len(state.g), rng,
                           memberships=state.g, truncate_time=False).events

    n_reps, n_sweeps = 5000, 10
    ws = np.empty(n_reps)
    wt = np.empty(n_reps)
    bu = np.empty(n_reps)
    for r in range(n_reps):
        state = sample_state_from_prior(ctx0, rng)
        ev = resim(state, rng)
        for _ in range(n_sweeps):
            ctx = replace(ctx0, xy=np.array(ev.xy, dtype=float),
                          t=np.array(ev.t, dtype=float))
            state, _ = update_theta(state, ctx, rng)
            state, _ = update_memberships(state, ctx, rng)
            state = update_sticks(state, ctx, rng)
            state = update_concentration(state, ctx, rng)
            state, _ = update_centers(state, ctx, rng)
            ev = resim(state, rng)
        ws[r], wt[r], bu[r] = state.w_s, state.w_t, state.b_u

    probs = np.arange(0.05, 0.96, 0.05)
    discs = {}
    for name, draws, cdf in [
            ("w_s", ws, lambda x: (x - 100.0) / 900.0),
            ("w_t", wt, lambda x: x),
            ("b_u", bu, lambda x: stats.gamma.cdf(x, 1.0, scale=1.0))]:
        u = cdf(draws)
        discs[name] = max(abs(np.mean(u <= p) - p) for p in probs)
    wall = time.perf_counter() - t0
    worst = max(discs.values())
    ok = worst < 0.05 and wall < 1200.0
    announce(3, ok, "joint distribution check",
             "max quantile discrepancy "
             + ", ".join(f"{k} {v:.3f}" for k, v in discs.items())
             + f" over {n_reps} effective draws ({wall:.0f}s)")
    assert worst < 0.05
    assert wall < 1200.0


def test_04_synthetic_recovery(recovery, announce):
    """Three planted clusters (w_s=150 m, w_t=0.1, 500 events) on the 10x10
    grid are recovered after 5000 iterations: Dahl partition ARI >= 0.8,
    bandwidth posterior means within 30%, centers within 2*w_s by network
    distance."""
    run = recovery["run"]
    net = recovery["net"]
    idx, labels = dahl_select(run)
    ari = adjusted_rand_score(recovery["truth"].memberships, labels)
    mean_ws, mean_wt = run.w_s.mean(), run.w_t.mean()
    est = point_estimate(run)
    used = np.unique(labels)
    dists = []
    for k in range(3):
        tp = recovery["centers"][k]
        dists.append(min(
            shortest_path_dist(net, tp, net.point(int(est.center_seg[j]),
                                                  float(est.center_off[j])))
            for j in used))
    worst_dist = max(dists)
    wall = recovery["wall"]
    ok = (ari >= 0.8
          and abs(mean_ws - RECOVERY_W_S) <= 0.3 * RECOVERY_W_S
          and abs(mean_wt - RECOVERY_W_T) <= 0.3 * RECOVERY_W_T
          and worst_dist < 2.0 * RECOVERY_W_S
          and wall < 1800.0)
    announce(4, ok, "synthetic recovery",
             f"ARI {ari:.3f}, posterior means w_s {mean_ws:.0f} w_t "
             f"{mean_wt:.3f}, worst center distance {worst_dist:.0f} m "
             f"({wall:.0f}s fit)")
    assert ari >= 0.8
    assert abs(mean_ws - RECOVERY_W_S) <= 0.3 * RECOVERY_W_S
    assert abs(mean_wt - RECOVERY_W_T) <= 0.3 * RECOVERY_W_T
    assert worst_dist < 2.0 * RECOVERY_W_S
    assert wall < 1800.0


def exhaustive_dahl(G):
    """Exact-rational minimum of the co-clustering squared loss over draws."""
    B, N = G.shape
    co = [[Fraction(0)] * N for _ in range(N)]
    for b in range(B):
        for i in range(N):
            for j in range(N):
                if G[b, i] == G[b, j]:
                    co[i][j] += Fraction(1, B)
    losses = []
    for b in range(B):
        loss = Fraction(0)
        for i in range(N):
            for j in range(N):
                loss += (Fraction(int(G[b, i] == G[b, j])) - co[i][j]) ** 2
        losses.append(loss)
    return losses


def test_05_dahl_oracle(announce):
    """dahl_select agrees with exhaustive loss minimization on ten random
    small chains (exact rational arithmetic; ties resolved by equal loss)."""
    rng = np.random.default_rng(3)
    all_ok = True
    for _ in range(10):
        B = int(rng.integers(2, 6))
        N = int(rng.integers(2, 7))
        G = rng.integers(0, 3, size=(B, N))
        picked, _ = dahl_select(G)
        losses = exhaustive_dahl(G)
        all_ok &= losses[picked] == min(losses)
    announce(5, all_ok, "Dahl oracle",
             "selected draw attains the exhaustive minimum loss on 10/10 chains")
    assert all_ok


def test_06_kfunction_calibration(grid10, announce):
    """Envelope p-values are calibrated under homogeneous Poisson data
    (P(p <= 0.05) <= 0.12 over 100 replicates, m=49) and powerful against
    the planted-cluster generator (p <= 0.05 in at least 90 of 100)."""
    t0 = time.perf_counter()
    r_grid = np.linspace(17.5, 350.0, 20)
    t_grid = np.linspace(0.025, 0.25, 10)

    rng = np.random.default_rng(606)
    null_p = np.array([
        envelope_pvalue(sim_poisson(grid10, n=200, rng=rng), grid10,
                        r_grid, t_grid, m=49, rng=rng).p_value
        for _ in range(100)])
    null_rate = float(np.mean(null_p <= 0.05))

    centers = grid10.points_from_arrays(np.array([0, 44, 98]),
                                        np.array([0.5, 0.5, 0.5]))
    center_t = np.array([0.2, 0.5, 0.8])
    rng = np.random.default_rng(77)
    hits = 0
    for _ in range(100):
        truth = sim_mixture(grid10, centers, center_t, RECOVERY_W_S,
                            RECOVERY_W_T, np.ones(3) / 3, 200, rng)
        p = envelope_pvalue(truth.events, grid10, r_grid, t_grid,
                            m=49, rng=rng).p_value
        hits += p <= 0.05
    wall = time.perf_counter() - t0
    ok = null_rate <= 0.12 and hits >= 90 and wall < 1800.0
    announce(6, ok, "K-function calibration",
             f"null P(p<=0.05) = {null_rate:.2f}, planted detections "
             f"{hits}/100 ({wall:.0f}s)")
    assert null_rate <= 0.12
    assert hits >= 90
    assert wall < 1800.0


def test_07_pcf_independence_and_attraction(grid10, announce):
    """Mean multitype pcf of independent Poisson pairs stays within 0.2 of
    one on the middle half of the radius grid (500 replicates); jittered
    copies show attraction (pcf > 1 at the smallest radius) in >= 95%."""
    t0 = time.perf_counter()
    r_grid = np.linspace(7.5, 300.0, 40)
    rng = np.random.default_rng(55)

    curves = np.array([
        multitype_pcf(sim_poisson(grid10, n=100, rng=rng),
                      sim_poisson(grid10, n=100, rng=rng),
                      grid10, r_grid).g
        for _ in range(500)])
    mid = slice(10, 30)
    max_dev = float(np.abs(curves.mean(axis=0) - 1.0)[mid].max())

    hits = 0
    for _ in range(500):
        e1 = sim_poisson(grid10, n=100, rng=rng)
        off2 = np.clip(e1.offset + rng.normal(0.0, 10.0, size=len(e1)) /
                       grid10.lengths[e1.seg], 0.0, 1.0)
        e2 = EventSet.from_points(grid10.points_from_arrays(e1.seg, off2), e1.t)
        hits += multitype_pcf(e1, e2, grid10, r_grid).g[0] > 1.0
    share = hits / 500.0
    wall = time.perf_counter() - t0
    ok = max_dev < 0.2 and share >= 0.95
    announce(7, ok, "pcf independence and attraction",
             f"middle-half max |mean-1| = {max_dev:.3f}, attraction detected "
             f"in {100 * share:.0f}% of jittered pairs ({wall:.0f}s)")
    assert max_dev < 0.2
    assert share >= 0.95


def test_08_assessment_pipeline(recovery, announce):
    """Theoretical cube proportions from the recovery fit sum to one, the
    observed ones sum to one exactly, and the two columns correlate at 0.9+."""
    ctx = ModelContext.build(recovery["truth"].events, recovery["net"],
                             recovery["cfg"])
    table = assess_mod.assess(recovery["run"], recovery["truth"].events,
                              recovery["net"], ctx.kernels)
    summary = assess_mod.assess_scatter(table)
    theory_sum = float(table.p_theory.sum())
    obs_sum = float(table.p_obs.sum())
    corr = summary.correlation
    ok = abs(theory_sum - 1.0) <= 1e-6 and obs_sum == 1.0 and corr >= 0.9
    announce(8, ok, "assessment pipeline",
             f"theory sum {theory_sum:.9f}, observed sum {obs_sum}, "
             f"Pearson r = {corr:.3f}")
    assert abs(theory_sum - 1.0) <= 1e-6
    assert obs_sum == 1.0
    assert corr >= 0.9


def test_09_determinism(grid5, tmp_path, announce):
    """Two CLI fits with the same seed write byte-identical samples, centers
    and memberships files."""
    net_csv = str(tmp_path / "net.csv")
    with open(net_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seg_id", "x1", "y1", "x2", "y2"])
        for i in range(grid5.n_segments):
            x1, y1 = grid5.vertices[grid5.segments[i, 0]]
            x2, y2 = grid5.vertices[grid5.segments[i, 1]]
            w.writerow([i, x1, y1, x2, y2])
    sim_dir = str(tmp_path / "sim")
    assert cli_main(["simulate", "--network", net_csv, "--out", sim_dir,
                     "--mode", "uniform", "--n", "120", "--seed", "3"]) == 0
    fit_args = ["fit", "--network", net_csv, "--events",
                f"{sim_dir}/events.csv", "--seed", "7", "--iters", "100",
                "--max-clusters", "5", "--thin", "2", "--mc-points", "200",
                "--pixel-rows", "8", "--pixel-cols", "8"]
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli_main(fit_args + ["--out", a]) == 0
    assert cli_main(fit_args + ["--out", b]) == 0
    same = all(filecmp.cmp(f"{a}/{name}", f"{b}/{name}", shallow=False)
               for name in ("samples.csv", "centers.csv", "memberships.csv"))
    announce(9, same, "determinism",
             "same-seed runs byte-identical across samples, centers, memberships")
    assert same


def test_10_long_mode(capsys):
    """Full-data replication is an optional long mode, not a gate: the
    published event data are not shipped with this repository."""
    with capsys.disabled():
        print("ACCEPTANCE 10 SKIP long mode: full observational dataset not "
              "distributed; see README for how to run it")
    pytest.skip("full observational dataset not distributed")
