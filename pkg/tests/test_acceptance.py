"""End-to-end acceptance criteria.

Each test logs one ``PASS``/``FAIL`` line (shown in the terminal summary and,
with ``-s``, inline) and then asserts the same condition. Run with::

    pytest tests/test_acceptance.py -s
"""
import math
import time

import numpy as np
import pytest

from bipde import autodiff as ad
from bipde import burgers_fd as bf
from bipde import poisson as ps
from bipde import rbf
from bipde import zernike as zk
from bipde.cli import main as cli_main
from bipde.harness import ExperimentConfig, export_results, run_rbf_noise_cases, sweep, train

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

BURGERS_GRIDS = ["20", "40", "80", "160", "320", "640"]
SUITE_BUDGET_S = 60 * 60
_suite = {}


@pytest.fixture(scope="module", autouse=True)
def suite_clock():
    _suite["start"] = time.perf_counter()
    yield


def record(log, n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    log.append(line)
    return ok


def leaf(x):
    return ad.Tensor(x, requires_grad=True)


# -- 1: autodiff integrity --------------------------------------------------------------

def _op_checks(rng):
    """Worst relative FD error per registered op over 20 random draws."""
    unary = {"neg": ad.neg, "exp": ad.exp, "tanh": ad.tanh, "sigmoid": ad.sigmoid,
             "sin": ad.sin, "cos": ad.cos, "square": ad.square}
    worst = {}
    for _ in range(20):
        x0 = rng.normal(size=5)
        for name, op in unary.items():
            worst[name] = max(worst.get(name, 0), ad.grad_check(lambda t: ad.sum(op(t)), x0))
        pos = rng.uniform(0.5, 2.0, size=5)
        for name in ("sqrt", "log"):
            op = getattr(ad, name)
            worst[name] = max(worst.get(name, 0), ad.grad_check(lambda t: ad.sum(op(t)), pos))
        away = np.where(np.abs(x0) < 1e-3, 0.5, x0)
        worst["relu"] = max(worst.get("relu", 0),
                            ad.grad_check(lambda t: ad.sum(ad.relu(t) * t), away))
        worst["absolute"] = max(worst.get("absolute", 0),
                                ad.grad_check(lambda t: ad.sum(ad.absolute(t)), away))
        a0 = rng.normal(size=4)
        b0 = rng.uniform(0.5, 2.0, size=4) * rng.choice([-1, 1], size=4)
        for name in ("add", "sub", "mul", "div"):
            op = getattr(ad, name)
            err = ad.grad_check(lambda ts: ad.sum(op(ts[0], ts[1]) * ts[0]), [a0, b0])
            worst[name] = max(worst.get(name, 0), err)
        A0, B0 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        worst["matmul"] = max(worst.get("matmul", 0),
                              ad.grad_check(lambda ts: ad.sum(ad.square(ts[0] @ ts[1])), [A0, B0]))

    def structural(t):
        a = ad.transpose(ad.reshape(t, (4, 3)))
        c = ad.concatenate([a, t[:, :2] * 2.0], axis=1)
        d = ad.broadcast_to(ad.sum(t, axis=0).reshape((1, 4)), (3, 4))
        return ad.sum(ad.square(c)) + ad.mean(ad.sin(ad.stack([t, d], axis=0)))
    worst["structural"] = ad.grad_check(structural, rng.normal(size=(3, 4)))
    rows, cols = np.array([0, 1, 1, 0, 1]), np.array([0, 1, 1, 1, 0])
    worst["scatter"] = ad.grad_check(
        lambda t: ad.sum(ad.square(ad.scatter(t, rows, cols, 2, 2))), rng.normal(size=5))
    M = rng.normal(size=(4, 4))
    spd = M @ M.T + 4 * np.eye(4)
    worst["linear_solve"] = ad.grad_check(lambda t: ad.sum(ad.linear_solve(t, np.ones(4))), spd)
    worst["lstsq_solve"] = ad.grad_check(
        lambda ts: ad.sum(ad.square(ad.lstsq_solve(ts[0], ts[1]))),
        [rng.normal(size=(6, 3)), rng.normal(size=6)])
    return worst


def _layer_checks(rng):
    """Relative FD error of each solver layer, unrolled where it steps in time."""
    out = {}
    g = ps.Grid2D(0.0, 1.0, 0.0, 1.0, 8, 8)
    f2, bc = rng.normal(size=g.shape), rng.normal(size=g.shape)
    out["poisson_2d"] = ad.grad_check(
        lambda D: ad.sum(ps.solve_2d(ps.PoissonProblem(g, D, f2, bc))),
        rng.uniform(0.5, 2.0, size=g.shape))
    g1 = ps.Grid1D(0.0, 1.0, 12)
    out["poisson_1d"] = ad.grad_check(
        lambda D: ad.sum(ad.square(ps.solve_1d(D, np.sin(np.pi * g1.x), 0.2, 0.2, g1))),
        rng.uniform(0.5, 2.0, size=12))
    x = np.linspace(-1, 1, 40)
    op = bf.build_cfd6(40, x[1] - x[0])
    w = rng.normal(size=40)
    out["burgers_10_steps"] = ad.grad_check(
        lambda ts: ad.sum(bf.roll_forward(bf.initial_condition(x), 10, op, ts[0], ts[1], 1e-3)[-1] * w),
        [np.array(0.1 / np.pi), np.array(1.0)])
    cfg = rbf.RBFConfig(N_s=8, N_d=24)
    pts = cfg.collocation()
    wr = rng.normal(size=24)

    def rollout(ts):
        mats = rbf.build_matrices(cfg, ts[2], ts[3])
        return ad.sum(rbf.rbf_rollout(-np.sin(np.pi * pts), 3, mats, ts[0], ts[1], 1e-3) * wr)
    out["rbf_3_steps"] = ad.grad_check(
        rollout, [np.array(0.05), np.array(1.0),
                  np.linspace(-0.9, 0.9, 8) + rng.uniform(-0.05, 0.05, 8), rng.uniform(0.2, 0.4, 8)])
    return out


def _adjoint_error(rng):
    worst = 0.0
    for _ in range(10):
        M = rng.normal(size=(4, 4))
        A0 = M @ M.T + 4 * np.eye(4)
        A, b = leaf(A0), leaf(rng.normal(size=4))
        x = ad.linear_solve(A, b)
        ad.backward(ad.sum(x))
        s = np.linalg.solve(A0.T, np.ones(4))
        worst = max(worst, np.abs(b.grad - s).max(), np.abs(A.grad + np.outer(s, x.data)).max())
    return worst


def test_criterion_1_autodiff(acceptance_log):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    ops, layers, adj = _op_checks(rng), _layer_checks(rng), _adjoint_error(rng)
    elapsed = time.perf_counter() - t0
    op_max, layer_max = max(ops.values()), max(layers.values())
    ok = op_max <= 1e-5 and layer_max <= 1e-4 and adj <= 1e-6 and elapsed < 60
    record(acceptance_log, 1, ok,
           f"ops max rel {op_max:.2e} (<= 1e-5, {len(ops)} ops), layers max rel {layer_max:.2e} "
           f"(<= 1e-4), adjoint {adj:.1e} (<= 1e-6), {elapsed:.1f} s (< 60 s)")
    assert ok, (ops, layers)


# -- 2: discretization orders -----------------------------------------------------------

def _orders(errs):
    errs = np.asarray(errs)
    return np.log2(errs[:-1] / errs[1:])


def test_criterion_2_orders(acceptance_log):
    t0 = time.perf_counter()
    e1 = []
    for n in (17, 33, 65, 129):
        g = ps.Grid1D(0.0, 1.0, n)
        u = ps.solve_1d(np.ones(n), np.pi**2 * np.sin(np.pi * g.x), 0.0, 0.0, g).data
        e1.append(np.abs(u - np.sin(np.pi * g.x)).max())
    e2 = []
    for n in (17, 33, 65):
        g = ps.Grid2D(0.0, 1.0, 0.0, 1.0, n, n)
        X, Y = g.mesh()
        exact = np.sin(np.pi * X) * np.sin(np.pi * Y)
        u = ps.solve_2d(ps.PoissonProblem(g, np.ones(g.shape), 2 * np.pi**2 * exact), full=True).data
        e2.append(np.abs(u - exact).max())
    ecfd, row_sum = [], 0.0
    for N in (20, 40, 80):
        x = np.linspace(-1, 1, N)
        op = bf.build_cfd6(N, x[1] - x[0])
        ecfd.append(np.abs(op.D1 @ np.sin(x) - np.cos(x))[2:-2].max())
        row_sum = max(row_sum, np.abs(op.D1 @ np.ones(N)).max())
    erk = []
    for dt in (0.1, 0.05, 0.025):
        U = ad.Tensor(np.ones(1))
        for _ in range(round(1 / dt)):
            U = bf.tvd_rk3_step(U, lambda V: -V, dt, pin_ends=False)
        erk.append(abs(U.data[0] - math.exp(-1.0)))
    elapsed = time.perf_counter() - t0
    o1, o2, ocfd, ork = _orders(e1), _orders(e2), _orders(ecfd), _orders(erk)
    ok = (np.all(np.abs(o1 - 2) <= 0.2) and np.all(np.abs(o2 - 2) <= 0.2) and ocfd.min() >= 5.5
          and np.all(np.abs(ork - 3) <= 0.1) and row_sum <= 1e-10 and elapsed < 120)
    fmt = lambda o: "/".join(f"{v:.2f}" for v in o)
    record(acceptance_log, 2, ok,
           f"Poisson 1D {fmt(o1)}, 2D {fmt(o2)} (2 +/- 0.2); CFD6 {fmt(ocfd)} (>= 5.5); "
           f"RK3 {fmt(ork)} (3 +/- 0.1); row sum {row_sum:.1e} (<= 1e-10); {elapsed:.1f} s (< 120 s)")
    assert ok


# -- 3: Zernike --------------------------------------------------------------------------

# (n, m, radial polynomial) rows of the reference table up to order 4
ZERNIKE_TABLE = [
    (0, 0, lambda r: np.ones_like(r)),
    (1, 1, lambda r: r),
    (2, 0, lambda r: 2 * r**2 - 1),
    (2, 2, lambda r: r**2),
    (3, 1, lambda r: 3 * r**3 - 2 * r),
    (3, 3, lambda r: r**3),
    (4, 0, lambda r: 6 * r**4 - 6 * r**2 + 1),
    (4, 2, lambda r: 4 * r**4 - 3 * r**2),
    (4, 4, lambda r: r**4),
]


def test_criterion_3_zernike(acceptance_log):
    t0 = time.perf_counter()
    rho = np.array([0.0, 0.2, 0.45, 0.8, 1.0])
    theta = np.array([0.0, 0.7, 2.1, 3.5, 5.9])
    x, y = rho * np.cos(theta), rho * np.sin(theta)
    table_err = 0.0
    for n, m, R in ZERNIKE_TABLE:
        table_err = max(table_err, np.abs(zk.radial(n, m, rho) - R(rho)).max())
        even = zk.evaluate_mode(n, m, "even", x, y)
        table_err = max(table_err, np.abs(even - R(rho) * np.cos(m * theta)).max())
        if m > 0:
            odd = zk.evaluate_mode(n, m, "odd", x, y)
            table_err = max(table_err, np.abs(odd - R(rho) * np.sin(m * theta)).max())
    basis = zk.ZernikeBasis(4)
    quad = zk.polar_quadrature(400, 400)
    r_q, t_q, w_q = quad
    Z = basis._matrix_polar(r_q, t_q)
    gram = (Z * w_q[:, None]).T @ Z
    off = np.abs(gram - np.diag(np.diag(gram))).max()
    rng = np.random.default_rng(3)
    trip = 0.0
    for _ in range(3):
        c = rng.normal(size=len(basis))
        f = lambda xx, yy: zk.reconstruct_field(c, basis, xx, yy).data
        trip = max(trip, np.abs(zk.project_moments(f, basis, quad).values - c).max())
    elapsed = time.perf_counter() - t0
    ok = table_err <= 1e-12 and off <= 1e-6 and trip <= 1e-6 and elapsed < 60
    record(acceptance_log, 3, ok,
           f"table rows max err {table_err:.1e} (<= 1e-12), off-diagonal {off:.1e} (<= 1e-6), "
           f"round trip {trip:.1e} (<= 1e-6), {elapsed:.1f} s (< 60 s)")
    assert ok


# -- 4: Case I ----------------------------------------------------------------------------

def test_criterion_4_case_one(acceptance_log):
    cfg = ExperimentConfig("poisson_case1", {"grid_n": 32})
    t0 = time.perf_counter()
    res = train(cfg)
    elapsed = time.perf_counter() - t0
    steps = cfg["epochs"]  # full batch: one Adam step per epoch
    err = res.report.section("fit").max_rel_D
    ok = err <= 0.05 and steps <= 2000 and elapsed < 300
    record(acceptance_log, 4, ok,
           f"max relative D error {err:.2e} (<= 5e-2) after {steps} steps (<= 2000), "
           f"{elapsed:.1f} s (< 300 s)")
    assert ok


# -- 5, 6: Burgers ------------------------------------------------------------------------

def test_criterion_5_burgers_two_unknowns(acceptance_log):
    cfg = ExperimentConfig("burgers_sweep", {"n_x": 640, "unknowns": 2})
    t0 = time.perf_counter()
    fit = train(cfg).report.section("fit")
    elapsed = time.perf_counter() - t0
    nu, gamma = fit.param("nu"), fit.param("gamma")
    ok = nu.rel_error <= 0.05 and gamma.rel_error <= 0.01 and elapsed < 600
    record(acceptance_log, 5, ok,
           f"nu {nu.mean:.7f} rel err {nu.rel_error:.1e} (<= 5e-2), gamma {gamma.mean:.7f} "
           f"rel err {gamma.rel_error:.1e} (<= 1e-2), {elapsed:.1f} s (< 600 s)")
    assert ok


def _sweep_errors(unknowns, name):
    cfg = ExperimentConfig("burgers_sweep", {"unknowns": unknowns})
    cells = sweep(cfg, {"n_x": BURGERS_GRIDS})
    errs = []
    for cell in cells:
        assert cell.report is not None, cell.error
        errs.append(cell.report.section("fit").param(name).rel_error)
    return np.array(errs)


def test_criterion_6_burgers_trend(acceptance_log):
    t0 = time.perf_counter()
    nu_err = _sweep_errors(1, "nu")
    gamma_err = _sweep_errors(2, "gamma")
    elapsed = time.perf_counter() - t0
    decreasing = bool(np.all(np.diff(nu_err) < 0))
    ratios = gamma_err[:-1] / gamma_err[1:]
    halving = bool(np.all(np.abs(ratios - 2.0) <= 0.5))
    ok = decreasing and halving and elapsed < 900
    record(acceptance_log, 6, ok,
           f"one-unknown nu errors {', '.join(f'{e:.2e}' for e in nu_err)} "
           f"(strictly decreasing: {decreasing}); two-unknown gamma error ratios "
           f"{', '.join(f'{r:.3g}' for r in ratios)} (2 +/- 0.5: {halving}); "
           f"{elapsed:.1f} s (< 900 s)")
    assert ok


# -- 7: RBF ---------------------------------------------------------------------------------

def test_criterion_7_rbf(acceptance_log):
    t0 = time.perf_counter()
    cells = run_rbf_noise_cases(("baseline", "case1"))
    elapsed = time.perf_counter() - t0
    for cell in cells:
        assert cell.report is not None, cell.error
    base, case1 = (c.report.section("fit").param("nu") for c in cells)
    ok = base.rel_error <= 0.05 and case1.rel_error <= 0.10 and elapsed < 600
    record(acceptance_log, 7, ok,
           f"noiseless nu {base.mean:.5f} rel err {base.rel_error:.1e} (<= 5e-2); case 1 nu "
           f"{case1.mean:.5f} rel err {case1.rel_error:.1e} (<= 1e-1); {elapsed:.1f} s (< 600 s)")
    assert ok


# -- 8: 1D inverse transform ----------------------------------------------------------------

def test_criterion_8_inverse_1d(acceptance_log):
    t0 = time.perf_counter()
    r2 = {}
    for noise in (0.0, 0.025):
        cfg = ExperimentConfig("poisson_inverse_1d", {"epochs": 200, "noise_std": noise})
        r2[noise] = train(cfg).report.section("test").r2
    elapsed = time.perf_counter() - t0
    clean, noisy = min(r2[0.0].values()), min(r2[0.025].values())
    ok = clean >= 0.98 and noisy >= 0.93 and elapsed < 900
    fmt = lambda d: ", ".join(f"{k} {v:.4f}" for k, v in d.items())
    record(acceptance_log, 8, ok,
           f"held-out R2 clean [{fmt(r2[0.0])}] (>= 0.98), noisy [{fmt(r2[0.025])}] (>= 0.93); "
           f"{elapsed:.1f} s (< 900 s)")
    assert ok


# -- 9: determinism -------------------------------------------------------------------------

def test_criterion_9_manifest_rerun(acceptance_log, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    export_results(train(ExperimentConfig("poisson_case1", {"grid_n": 32})), first)
    assert cli_main(["train", "--config", str(first / "manifest.txt"), "--out", str(second)]) == 0
    train_same = (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()

    cfg = ExperimentConfig("burgers_sweep", {"n_x": 40, "unknowns": 2, "epochs": 50})
    export_results(sweep(cfg, {"n_x": ["20", "40"]}), tmp_path / "s1",
                   ExperimentConfig(cfg.kind, cfg.values, {"n_x": ["20", "40"]}))
    assert cli_main(["sweep", "--config", str(tmp_path / "s1" / "manifest.txt"),
                     "--out", str(tmp_path / "s2")]) == 0
    sweep_same = ((tmp_path / "s1" / "results.csv").read_bytes()
                  == (tmp_path / "s2" / "results.csv").read_bytes())
    ok = train_same and sweep_same
    record(acceptance_log, 9, ok,
           f"train manifest rerun identical: {train_same}; sweep manifest rerun identical: {sweep_same}")
    assert ok


# -- 10: total time -------------------------------------------------------------------------

def test_criterion_10_suite_time(acceptance_log):
    elapsed = time.perf_counter() - _suite["start"]
    ok = elapsed < SUITE_BUDGET_S
    record(acceptance_log, 10, ok, f"acceptance suite {elapsed / 60:.1f} min (< 60 min)")
    assert ok
