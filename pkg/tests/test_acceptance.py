"""Acceptance criteria for the package, one test per criterion.

Each test prints a single ``criterion N PASS|FAIL`` line (also collected
into the pytest terminal summary).  Run this file directly with
``python tests/test_acceptance.py`` to get only those lines.
"""

import time

import numpy as np
import pytest

import helpers
from oracles import brute_unit_min, random_orthogonal
from transync import (
    PointCloud,
    Transform,
    TransformClass,
    append_homogeneous_row,
    build_z,
    extract_null_basis,
    gpa_iterative_mean,
    gpa_sync,
    project_class,
    project_orthogonal,
    reconstruct_pairwise,
    scale_arithmetic,
    scale_geometric,
    solve_aop,
    synchronise,
)
from transync.simulate import (
    GppConfig,
    NoiseConfig,
    add_gaussian_noise,
    drop_points,
    gen_ground_truth,
    gen_shapes,
    load_shape_source,
    run_gpp_experiment,
    run_noise_experiment,
    transform_error,
)

CLASSES = list(TransformClass)
PROJECTED = [TransformClass.SIMILARITY, TransformClass.EUCLIDEAN, TransformClass.RIGID]
SHAPE_SOURCE = {"kind": "synthetic", "K": 100, "n": 98, "d": 2, "deform_level": 3, "noise_level": 3}


def report(n, title, ok, detail):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    helpers.ACCEPTANCE_LINES[n] = line
    assert ok, line


def by_label(rows):
    return {(r.grid_value, r.method_or_signal): r.mean_error for r in rows}


def noise_means(grid, vary, **kw):
    cfg = NoiseConfig(vary=vary, grid=tuple(grid), ground_truths=20, noise_draws=5, seed=2024, **kw)
    return by_label(run_noise_experiment(cfg))


@pytest.fixture(scope="module")
def shape_pool():
    return load_shape_source(SHAPE_SOURCE, 0)


def test_c01_exact_recovery():
    start = time.perf_counter()
    worst_err, worst_null, min_gap = 0.0, 0.0, np.inf
    k, d = 30, 3
    for cls in CLASSES:
        for g in range(50):
            truth = gen_ground_truth(k, d, cls, np.random.default_rng([1, CLASSES.index(cls), g]))
            z = build_z(truth.pairwise)
            if cls.kind.value == "homogeneous":
                z = append_homogeneous_row(z, k, d)
            sv = np.linalg.svd(z, compute_uv=False)
            norm = sv[0]
            worst_null = max(worst_null, sv[-d:].max() / norm)
            min_gap = min(min_gap, sv[-d - 1] / norm)
            rec = reconstruct_pairwise(synchronise(truth.pairwise))
            worst_err = max(worst_err, transform_error(rec, truth.pairwise))
    elapsed = time.perf_counter() - start
    ok = worst_err < 1e-8 and worst_null < 1e-8 and min_gap > 1e-3 and elapsed < 10
    report(1, "exact recovery", ok,
           f"max e={worst_err:.2e}, max tail/|Z|={worst_null:.2e}, min 4th/|Z|={min_gap:.2e}, {elapsed:.1f}s")


@pytest.mark.slow
def test_c02_denoising_over_sigma():
    start = time.perf_counter()
    grid = (0.05, 0.1, 0.2, 0.3, 0.5)
    m = noise_means(grid, "sigma", k=30, d=3)
    elapsed = time.perf_counter() - start
    worst = max(m[(s, f"{c.value}:synced")] / m[(s, f"{c.value}:noisy")] for s in grid for c in CLASSES)
    ok = worst < 1 and elapsed < 120
    report(2, "denoising at every sigma", ok, f"max synced/noisy ratio {worst:.3f}, {elapsed:.1f}s")


@pytest.mark.slow
def test_c03_more_objects_help():
    start = time.perf_counter()
    m = noise_means((10, 60), "k", d=3, sigma=0.5)
    elapsed = time.perf_counter() - start
    ratios = {c.value: m[(60, f"{c.value}:synced")] / m[(10, f"{c.value}:synced")] for c in CLASSES}
    ok = max(ratios.values()) < 1 and elapsed < 180
    detail = ", ".join(f"{c} {r:.3f}" for c, r in ratios.items())
    report(3, "synced error k=60 below k=10", ok, f"ratio {detail}, {elapsed:.1f}s")


@pytest.mark.slow
def test_c04_dimension_trend():
    start = time.perf_counter()
    m = noise_means((2, 7), "d", k=30, sigma=0.2)
    elapsed = time.perf_counter() - start
    ok = elapsed < 180
    parts = []
    for c in CLASSES:
        dn = m[(7, f"{c.value}:noisy")] - m[(2, f"{c.value}:noisy")]
        ds = m[(7, f"{c.value}:synced")] - m[(2, f"{c.value}:synced")]
        ok &= dn > 0 and ds > 0 and ds < dn
        parts.append(f"{c.value} +{ds:.3f}/+{dn:.3f}")
    report(4, "synced error grows slower with d", ok, f"synced/unsynced increase {', '.join(parts)}, {elapsed:.1f}s")


@pytest.mark.slow
def test_c05_missing_points(shape_pool):
    start = time.perf_counter()
    rows = run_gpp_experiment(GppConfig(axis="eta", grid=(0.0, 0.35, 0.7), k=30, draws=50, seed=11), shape_pool)
    elapsed = time.perf_counter() - start
    m = by_label(rows)
    a = m[(0.7, "sync")] <= 2 * m[(0.0, "sync")]
    b = m[(0.7, "reference")] > m[(0.7, "sync")]
    report(5, "GPA with missing points", a and b and elapsed < 600,
           f"sync {m[(0.0, 'sync')]:.4f} -> {m[(0.7, 'sync')]:.4f}, reference at 0.7 {m[(0.7, 'reference')]:.4f}, "
           f"{elapsed:.1f}s")


@pytest.mark.slow
def test_c06_wrong_correspondences(shape_pool):
    start = time.perf_counter()
    rows = run_gpp_experiment(GppConfig(axis="nu", grid=(0.0, 0.35, 0.7), k=30, draws=50, seed=12), shape_pool)
    elapsed = time.perf_counter() - start
    m = by_label(rows)
    a = m[(0.7, "sync")] <= 1.5 * m[(0.0, "sync")]
    b = m[(0.7, "sync")] < m[(0.7, "reference")] and m[(0.7, "sync")] < m[(0.7, "itermean")]
    report(6, "GPA with wrong correspondences", a and b and elapsed < 900,
           f"sync {m[(0.0, 'sync')]:.4f} -> {m[(0.7, 'sync')]:.4f}, at 0.7 reference {m[(0.7, 'reference')]:.4f} "
           f"itermean {m[(0.7, 'itermean')]:.4f}, {elapsed:.1f}s")


def test_c07_aop_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst, least_common = 0.0, np.inf
    for cls in PROJECTED:
        for masked in (False, True):
            for _ in range(1000):
                n, d = int(rng.integers(8, 21)), int(rng.integers(2, 4))
                x = rng.standard_normal((n, d))
                t0 = helpers.random_in_class(d, cls, rng)
                y = x @ t0.linear + t0.translation
                mx = my = np.ones(n, bool)
                if masked:
                    while True:
                        mx, my = rng.random(n) > 0.25, rng.random(n) > 0.25
                        if (mx & my).sum() >= 5:
                            break
                    x[~mx] = rng.standard_normal(((~mx).sum(), d)) * 100
                    y[~my] = rng.standard_normal(((~my).sum(), d)) * 100
                common = mx & my
                least_common = min(least_common, common.sum())
                t = solve_aop(PointCloud(x, mx), PointCloud(y, my), cls)
                r = np.linalg.norm((x @ t.linear + t.translation - y)[common])
                worst = max(worst, r)
    elapsed = time.perf_counter() - start
    report(7, "AOP exact relations", worst < 1e-9 and elapsed < 5,
           f"max residual {worst:.2e} over 6000 instances (>= {least_common} common points), {elapsed:.1f}s")


def test_c08_projection_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    orth, det_err, idem, gm_ok, eq_gap = 0.0, 0.0, 0.0, True, 0.0
    for q in range(10_000):
        d = 2 + q % 2
        while True:
            A = rng.standard_normal((d, d))
            if np.linalg.cond(A) < 1e8:
                break
        Q = project_orthogonal(A)
        orth = max(orth, np.linalg.norm(Q.T @ Q - np.eye(d)) / d)
        t = Transform.from_parts(A, rng.standard_normal(d))
        for cls in PROJECTED:
            p = project_class(t, cls)
            idem = max(idem, np.abs(project_class(p, cls).matrix - p.matrix).max())
            if cls is TransformClass.RIGID:
                det_err = max(det_err, abs(np.linalg.det(p.linear) - 1))
        sv = np.linalg.svd(A, compute_uv=False)
        gap = scale_arithmetic(sv) - scale_geometric(sv)
        if np.ptp(sv) > 1e-6 * sv.mean():
            gm_ok &= gap > 0
        equal = rng.uniform(0.1, 10) * np.ones(d)
        eq_gap = max(eq_gap, abs(scale_arithmetic(equal) - scale_geometric(equal)))
    elapsed = time.perf_counter() - start
    ok = orth <= 1e-12 and det_err <= 1e-10 and idem <= 1e-10 and gm_ok and eq_gap <= 1e-12 and elapsed < 10
    report(8, "projection suite", ok,
           f"max |Q'Q-I|/d={orth:.1e}, max |det-1|={det_err:.1e}, idempotence {idem:.1e}, "
           f"AM>GM on distinct sv {gm_ok}, equal-sv gap {eq_gap:.1e}, {elapsed:.1f}s")


@pytest.mark.slow
def test_c09_brute_force_small_instances():
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    worst = -np.inf
    count = 0
    for cls in (TransformClass.LINEAR, TransformClass.AFFINE):
        for _ in range(4):
            truth = gen_ground_truth(3, 1, cls, rng)
            noisy = add_gaussian_noise(truth.pairwise, 0.1, rng)
            z = build_z(noisy)
            if cls is TransformClass.AFFINE:
                z = append_homogeneous_row(z, 3, 1)
            ours = np.linalg.norm(z @ extract_null_basis(z, 1).basis)
            brute = brute_unit_min(z, 1_000_000, rng)
            worst = max(worst, (ours - brute) / np.linalg.norm(z, 2))
            count += 1
    elapsed = time.perf_counter() - start
    # the refined search can land on the optimum itself, so allow rounding-level slack
    ok = worst <= 1e-12 and elapsed < 30
    report(9, "null basis vs brute force", ok,
           f"max (ours - brute)/|Z| = {worst:.1e} over {count} instances, {elapsed:.1f}s")


def _interleaved_best(fns, repeats):
    best = [np.inf] * len(fns)
    for _ in range(repeats):
        for i, f in enumerate(fns):
            t0 = time.perf_counter()
            f()
            best[i] = min(best[i], time.perf_counter() - t0)
    return best


def test_c10_sync_faster_than_iterative_mean(shape_pool):
    rng = np.random.default_rng(10)
    gpa_sync(shape_pool[:30])
    gpa_iterative_mean(shape_pool[:30], init=0)
    sync_t, iter_t, per_eta = [], [], {}
    for eta in np.round(np.arange(0.0, 0.71, 0.1), 1):
        for _ in range(3):
            subset = [shape_pool[i] for i in rng.choice(len(shape_pool), 30, replace=False)]
            shapes = drop_points(subset, eta, rng)
            init = int(rng.integers(30))
            s, it = _interleaved_best(
                [lambda: gpa_sync(shapes), lambda: gpa_iterative_mean(shapes, tol=1e-8, max_iter=100, init=init)],
                repeats=9,
            )
            sync_t.append(s)
            iter_t.append(it)
            per_eta.setdefault(eta, []).append((s, it))
    ok = max(sync_t) < 1.0 and np.mean(sync_t) < np.mean(iter_t)
    detail = " ".join(f"{eta}:{1e3 * np.mean([a for a, _ in v]):.1f}/{1e3 * np.mean([b for _, b in v]):.1f}"
                      for eta, v in per_eta.items())
    report(10, "sync GPA runtime", ok,
           f"mean {1e3 * np.mean(sync_t):.2f} ms vs itermean {1e3 * np.mean(iter_t):.2f} ms, "
           f"max sync {1e3 * max(sync_t):.2f} ms; per eta sync/itermean ms {detail}")


if __name__ == "__main__":
    pool = load_shape_source(SHAPE_SOURCE, 0)
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn(pool) if fn.__code__.co_argcount else fn()
            except AssertionError:
                pass
