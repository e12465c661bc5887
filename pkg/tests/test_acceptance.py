"""Acceptance gate: one test per release criterion.

Each test computes its criterion, records a PASS/FAIL line for the
terminal summary, and then asserts both the quality bound and the
stated wall-clock budget.
"""

import time

import numpy as np
import pytest

import msbd
from msbd import harness
from msbd.landscape import (
    core_radius,
    hessian_w,
    local_minimizer_w,
    verify_geometry,
)
from msbd.losses import LossConfig
from msbd.imaging import (
    aligned_relative_error,
    blur_stack,
    deblur_channels,
    sample_bg_kernel_stack,
    synthesize_image,
)
from msbd.solver import SolverConfig, run_mgd, run_with_restarts
from msbd.sphere import (
    random_basin_point,
    random_sphere_point,
    region_membership,
    reparam,
    retract_step,
    riemannian_gradient,
)

from conftest import record_acceptance
import oracles


def relative_gap(got, want):
    return np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-300))


def test_gradients_match_finite_differences():
    t0 = time.perf_counter()
    n, p, theta = 12, 4, 0.3
    rng = np.random.default_rng(424242)
    worst_logcosh = 0.0
    worst_l4 = 0.0
    for inst in range(20):
        mu = 0.05 if inst % 2 == 0 else 0.5
        g = msbd.synthesize_filter(n, 3.0, seed=100 + inst)
        X = msbd.sample_bernoulli_gaussian(n, p, theta, seed=200 + inst)
        Y = msbd.generate_observations(g, X)
        R = msbd.build_preconditioner(Y, theta)
        Rd = oracles.dense_inverse_sqrt_covariance(Y.Y, theta)
        h = rng.normal(size=n)
        h /= np.linalg.norm(h)
        cfg = LossConfig(mu=mu, theta=theta)

        grad = msbd.euclidean_gradient(h, Y, R, cfg)
        fd = oracles.fd_gradient(lambda v: oracles.ambient_logcosh_loss(v, Y.Y, Rd, mu), h)
        worst_logcosh = max(worst_logcosh, float(relative_gap(grad, fd)))

        _, grad4 = msbd.l4_loss_gradient(h, Y, R, cfg)
        fd4 = oracles.fd_gradient(lambda v: oracles.ambient_l4_loss(v, Y.Y, Rd), h)
        worst_l4 = max(worst_l4, float(relative_gap(grad4, fd4)))
    elapsed = time.perf_counter() - t0
    ok = worst_logcosh <= 1e-6 and worst_l4 <= 1e-6 and elapsed < 5.0
    record_acceptance(
        "gradient-vs-fd",
        ok,
        f"worst rel err logcosh {worst_logcosh:.3e}, l4 {worst_l4:.3e} "
        f"(bound 1e-6), {elapsed:.1f}s (budget 5s)",
    )
    assert worst_logcosh <= 1e-6
    assert worst_l4 <= 1e-6
    assert elapsed < 5.0


def test_circulant_ops_match_dense_oracles():
    t0 = time.perf_counter()
    sizes = (4, 8, 12, 16, 24, 32)
    worst = 0.0
    for inst in range(20):
        n = sizes[inst % len(sizes)]
        rng = np.random.default_rng(300 + inst)

        g = rng.normal(size=n)
        x = rng.normal(size=n)
        got = msbd.conv_apply(g, x)
        want = oracles.dense_circulant(g) @ x
        worst = max(worst, float(np.max(np.abs(got - want)) / np.linalg.norm(want)))

        filt = msbd.synthesize_filter(n, 4.0, seed=300 + inst)
        inv = msbd.inverse_filter(filt).coeffs
        inv_dense = oracles.dense_inverse_filter(filt.coeffs)
        worst = max(worst, float(np.max(np.abs(inv - inv_dense)) / np.linalg.norm(inv_dense)))

        X = msbd.sample_bernoulli_gaussian(n, 6, 0.3, seed=400 + inst)
        R = msbd.build_preconditioner(X.X, 0.3)
        Rd = oracles.dense_inverse_sqrt_covariance(X.X, 0.3)
        R_dense = np.column_stack([R.apply(np.eye(n)[:, j]) for j in range(n)])
        worst = max(worst, float(np.max(np.abs(R_dense - Rd)) / np.linalg.norm(Rd)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 5.0
    record_acceptance(
        "circulant-oracles",
        ok,
        f"worst rel err {worst:.3e} (bound 1e-8), {elapsed:.1f}s (budget 5s)",
    )
    assert worst <= 1e-8
    assert elapsed < 5.0


def test_iterates_stay_tangent_and_unit_norm():
    n, p, theta, eta = 32, 64, 0.3, 0.05
    g = msbd.synthesize_filter(n, 2.0, seed=0)
    X = msbd.sample_bernoulli_gaussian(n, p, theta, seed=0)
    Y = msbd.generate_observations(g, X)
    R = msbd.build_preconditioner(Y, theta)
    cfg = LossConfig(mu=0.05, theta=theta)
    h = random_sphere_point(n, seed=5).h
    worst_tangency = 0.0
    worst_norm_dev = 0.0
    for _ in range(100):
        egrad = msbd.euclidean_gradient(h, Y, R, cfg)
        rgrad = riemannian_gradient(h, egrad)
        bound = 1e-12 * np.linalg.norm(egrad)
        tangency = abs(float(h @ rgrad))
        worst_tangency = max(worst_tangency, tangency / max(bound / 1e-12, 1e-300))
        assert tangency <= bound
        h = retract_step(h, rgrad, eta).h
        worst_norm_dev = max(worst_norm_dev, abs(np.linalg.norm(h) - 1.0))
        assert abs(np.linalg.norm(h) - 1.0) <= 1e-9
    ok = worst_tangency <= 1e-12 and worst_norm_dev <= 1e-9
    record_acceptance(
        "tangency-retraction",
        ok,
        f"worst |h.grad|/||grad|| {worst_tangency:.3e} (bound 1e-12), "
        f"worst norm deviation {worst_norm_dev:.3e} (bound 1e-9), 100 steps",
    )
    assert ok


def test_small_instance_recovery():
    t0 = time.perf_counter()
    n, p, theta = 3, 30, 0.3
    wins = 0
    for seed in range(10):
        g = msbd.synthesize_filter(n, 2.0, seed=seed)
        X = msbd.sample_bernoulli_gaussian(n, p, theta, seed=seed)
        Y = msbd.generate_observations(g, X)
        cfg = SolverConfig(theta=theta, seed=seed)
        hit = False
        for r in range(4):
            h0 = random_sphere_point(n, seed=seed * 1000 + r)
            res = run_mgd(Y, h0, cfg, g_true=g)
            if any(err is not None and err < 1e-2 for _, err in res.trajectory):
                hit = True
                break
        wins += hit
    elapsed = time.perf_counter() - t0
    ok = wins >= 9 and elapsed < 10.0
    record_acceptance(
        "small-instance-recovery",
        ok,
        f"{wins}/10 trials reached error < 1e-2 within 200 iterations "
        f"(need 9), {elapsed:.1f}s (budget 10s)",
    )
    assert wins >= 9
    assert elapsed < 10.0


@pytest.fixture(scope="module")
def conditioned_recovery_rates():
    """Shared runs: success rates for both losses on the same seeds."""
    n, p, theta, kappa = 64, 512, 0.3, 8.0
    out = {}
    for kind in ("logcosh", "l4"):
        t0 = time.perf_counter()
        wins = 0
        for seed in range(10):
            g = msbd.synthesize_filter(n, kappa, seed=seed)
            X = msbd.sample_bernoulli_gaussian(n, p, theta, seed=seed)
            Y = msbd.generate_observations(g, X)
            cfg = SolverConfig(theta=theta, seed=seed, loss_kind=kind)
            res = run_with_restarts(Y, cfg)
            ok, _ = msbd.success_indicator(res.g_inv_hat, g)
            wins += bool(ok)
        out[kind] = (wins / 10.0, time.perf_counter() - t0)
    return out


def test_conditioned_recovery_rate(conditioned_recovery_rates):
    rate, elapsed = conditioned_recovery_rates["logcosh"]
    ok = rate >= 0.8 and elapsed < 300.0
    record_acceptance(
        "conditioned-recovery",
        ok,
        f"success rate {rate:.2f} over 10 trials (need 0.8), "
        f"{elapsed:.1f}s (budget 300s)",
    )
    assert rate >= 0.8
    assert elapsed < 300.0


def test_logcosh_rate_dominates_l4(conditioned_recovery_rates):
    rate_logcosh, _ = conditioned_recovery_rates["logcosh"]
    rate_l4, elapsed = conditioned_recovery_rates["l4"]
    ok = rate_logcosh >= rate_l4
    record_acceptance(
        "loss-dominance",
        ok,
        f"logcosh rate {rate_logcosh:.2f} >= l4 rate {rate_l4:.2f} "
        f"on the same 10 seeds ({elapsed:.1f}s for the l4 half)",
    )
    assert rate_logcosh >= rate_l4


def test_random_initialization_coverage():
    t0 = time.perf_counter()
    fractions = {}
    for n in (8, 64, 256):
        xi0 = 1.0 / (4.0 * np.log(n))
        hits = sum(
            region_membership(random_sphere_point(n, seed=s), xi0) is not None
            for s in range(10000)
        )
        fractions[n] = hits / 10000.0
    elapsed = time.perf_counter() - t0
    ok = all(f >= 0.485 for f in fractions.values()) and elapsed < 10.0
    record_acceptance(
        "basin-coverage",
        ok,
        "fractions " + ", ".join(f"n={n}: {f:.3f}" for n, f in fractions.items())
        + f" (need 0.485 each), {elapsed:.1f}s (budget 10s)",
    )
    assert all(f >= 0.485 for f in fractions.values())
    assert elapsed < 10.0


def test_implicit_basin_stay():
    t0 = time.perf_counter()
    n, p, theta, xi0, eta = 16, 1024, 0.2, 0.1, 0.01
    cfg = LossConfig(mu=0.05, theta=theta)
    stays = 0
    for run in range(100):
        X = msbd.sample_bernoulli_gaussian(n, p, theta, seed=5000 + run)
        h0, lab = random_basin_point(n, xi0, seed=run)
        h = h0.h.copy()
        ok_run = True
        for _ in range(200):
            grad = msbd.euclidean_gradient(h, X.X, None, cfg)
            h = retract_step(h, riemannian_gradient(h, grad), eta).h
            label = region_membership(h, xi0)
            if label is None or (label.index, label.sign) != (lab.index, lab.sign):
                ok_run = False
                break
        stays += ok_run
    elapsed = time.perf_counter() - t0
    ok = stays == 100 and elapsed < 60.0
    record_acceptance(
        "implicit-stay",
        ok,
        f"{stays}/100 runs kept every iterate in the starting basin "
        f"(need 100), {elapsed:.1f}s (budget 60s)",
    )
    assert stays == 100
    assert elapsed < 60.0


def test_landscape_geometry_margins():
    t0 = time.perf_counter()
    n, p, theta, mu, xi0 = 8, 4096, 0.3, 0.05, 0.5
    annulus, core = verify_geometry(n, p, theta, 1.0, xi0, mu, 200, seed=11)

    X = msbd.sample_bernoulli_gaussian(n, p, theta, seed=11)
    cfg = LossConfig(mu=mu, theta=theta)

    def phi(w):
        h, _ = reparam(w)
        return msbd.loss_value(h, X.X, None, cfg)

    rng = np.random.default_rng(7)
    r2 = core_radius(mu)
    worst_ratio = 0.0
    for _ in range(10):
        direction = rng.normal(size=n - 1)
        direction /= np.linalg.norm(direction)
        w = direction * rng.uniform(0.2 * r2, r2)
        H = hessian_w(w, X.X, None, cfg)
        fd = oracles.fd_hessian(phi, w, eps=1e-4)
        bound = 1e-4 * (1.0 + np.linalg.norm(H))
        worst_ratio = max(worst_ratio, float(np.max(np.abs(H - fd))) / bound)
    elapsed = time.perf_counter() - t0
    ok = (
        annulus.violations == 0
        and annulus.min_directional_gradient > 0.0
        and core.violations == 0
        and core.min_hessian_eig > 0.0
        and worst_ratio <= 1.0
        and elapsed < 120.0
    )
    record_acceptance(
        "geometry-verification",
        ok,
        f"annulus min slope {annulus.min_directional_gradient:.3f} with "
        f"{annulus.violations} violations; core min eig {core.min_hessian_eig:.2f} "
        f"with {core.violations} violations; worst fd ratio {worst_ratio:.3f} "
        f"(bound 1), {elapsed:.1f}s (budget 120s)",
    )
    assert annulus.violations == 0
    assert annulus.min_directional_gradient > 0.0
    assert core.violations == 0
    assert core.min_hessian_eig > 0.0
    assert worst_ratio <= 1.0
    assert elapsed < 120.0


def test_minimizer_shrinks_with_sample_count():
    t0 = time.perf_counter()
    n, theta = 8, 0.3
    cfg = LossConfig(mu=0.05, theta=theta)
    medians = []
    for p in (512, 2048, 8192):
        norms = [
            float(np.linalg.norm(
                local_minimizer_w(msbd.sample_bernoulli_gaussian(n, p, theta, seed=s).X, None, cfg)
            ))
            for s in range(10)
        ]
        medians.append(float(np.median(norms)))
    elapsed = time.perf_counter() - t0
    ok = medians[0] > medians[1] > medians[2]
    record_acceptance(
        "minimizer-shrinkage",
        ok,
        "median ||w*|| " + " > ".join(f"{m:.2e}" for m in medians)
        + f" across p=512,2048,8192 ({elapsed:.1f}s)",
    )
    assert medians[0] > medians[1] > medians[2]


def test_imaging_pipeline_accuracy():
    t0 = time.perf_counter()
    image = synthesize_image(32, 32, 4.0, seed=0)
    kernels = sample_bg_kernel_stack(32, 32, 200, 0.1, seed=1)
    observations = blur_stack(image, kernels)
    cfg = SolverConfig(theta=0.1, seed=0, restarts=4)
    result = deblur_channels(observations, cfg)
    err = aligned_relative_error(result.recovered, image)
    elapsed = time.perf_counter() - t0
    ok = err <= 0.1 and elapsed < 300.0
    record_acceptance(
        "imaging-pipeline",
        ok,
        f"aligned relative error {err:.4f} (bound 0.1), "
        f"{elapsed:.1f}s (budget 300s)",
    )
    assert err <= 0.1
    assert elapsed < 300.0


def test_grid_parallel_determinism(tmp_path):
    t0 = time.perf_counter()
    grid = harness.ExperimentGrid(
        axes={"theta": [0.2, 0.99], "p": [2048]},
        fixed={"n": 8, "kappa": 1.0},
        trials_per_cell=10,
        base_seed=0,
        solver=SolverConfig(theta=0.2),
    )
    serial = harness.run_phase_grid(grid, workers=1)
    parallel = harness.run_phase_grid(grid, workers=2)
    a_path, b_path = tmp_path / "serial.csv", tmp_path / "parallel.csv"
    harness.emit_results(serial, a_path)
    harness.emit_results(parallel, b_path)
    identical = a_path.read_bytes() == b_path.read_bytes()
    rates = {r.theta: r.rate for r in serial.sorted_rows()}
    elapsed = time.perf_counter() - t0
    ok = identical
    record_acceptance(
        "grid-determinism",
        ok,
        f"1 vs 2 workers byte-identical: {identical}; rates by theta {rates} "
        f"({elapsed:.1f}s)",
    )
    assert identical
