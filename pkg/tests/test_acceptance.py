"""End-to-end acceptance run at the documented sample sizes.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest

from rarita_kit.checks import REGISTRY, SuiteConfig, check_rng, chart_points, run_check, run_suite
from rarita_kit.flow import FlowConfig, gradient_check, initial_fields, run_flow
from rarita_kit.lattice import LatticeGeometry, SpinorHomField, U1Connection
from rarita_kit.moduli import (
    PSI1,
    chart_embed,
    mu_kernel_matrix,
    normal_kernel_matrix,
    normal_spinor,
    w_split,
)

FULL = SuiteConfig(samples=10_000)

CRITERIA = {
    1: ["spinor_hom.w1_w2_moment_vanishing"],
    2: ["moduli.chart_validity"],
    3: ["moduli.kernel_matrix_rank"],
    4: [
        "moduli.frame_rank_profile",
        "moduli.frame_orthogonality",
        "moduli.kernel_rows_orthogonal_equal_norm",
        "moduli.normal_line_circle_invariance",
    ],
    5: ["moduli.displayed_symbol_determinant", "moduli.symbol_det_closed_form", "moduli.symbol_scan_positive"],
    6: ["lattice.dirac_self_adjoint", "lattice.plane_wave_order", "lattice.residual_gauge_invariance"],
    7: ["lattice.haydys_constant_family"],
    8: ["lattice.fueter_linearization"],
    9: ["flow.gradient_fd", "flow.energy_monotone", "flow.l4_constraint"],
}


def run_named(names, config=FULL):
    start = time.perf_counter()
    results = [run_check(REGISTRY[n], config) for n in names]
    elapsed = time.perf_counter() - start
    for r in results:
        print(f"{r.name}: passed={r.passed} worst={r.worst_error} tol={r.tolerance:.1e} {r.details}")
    return results, elapsed


def assert_all_pass(results):
    failed = {r.name: r.worst_error for r in results if not r.passed}
    assert not failed, f"failed checks: {failed}"


@pytest.mark.criterion(1, "W1/W2 moment-map vanishing")
def test_criterion_1_moment_vanishing():
    results, elapsed = run_named(CRITERIA[1])
    assert_all_pass(results)
    assert results[0].samples >= 2 * 10_000
    assert elapsed < 1.0


@pytest.mark.criterion(2, "chart validity and kernel solution")
def test_criterion_2_chart_validity():
    results, _ = run_named(CRITERIA[2])
    assert_all_pass(results)
    rng = check_rng(0, "acceptance.kernel_solution")
    p = chart_points(rng, 10_000)
    first = p.chart == PSI1
    s1, s2 = w_split(chart_embed(p))
    other = np.where(first[:, None], s2, s1)
    got = np.stack([other[:, 0].real, other[:, 0].imag, other[:, 1].real, other[:, 1].imag], axis=-1)
    expect = p.lam[:, None] * np.stack([p.b, -p.a, p.d, -p.c], axis=-1)
    assert np.array_equal(got[first], expect[first])


@pytest.mark.criterion(3, "mu-kernel and normal-kernel rank exactly three")
def test_criterion_3_rank():
    results, _ = run_named(CRITERIA[3])
    assert_all_pass(results)
    rng = check_rng(0, "acceptance.rank")
    p = chart_points(rng, 1000)
    ns = normal_spinor(p)
    for mat, ker in (
        (mu_kernel_matrix(p.dominant()), np.stack([p.b, -p.a, p.d, -p.c], axis=-1)),
        (normal_kernel_matrix(p), np.stack([ns[:, 0].real, ns[:, 0].imag, ns[:, 1].real, ns[:, 1].imag], axis=-1)),
    ):
        sv = np.linalg.svd(mat, compute_uv=False)
        assert np.all(sv[:, 2] / sv[:, 0] > 1e-10)
        unit = ker / np.linalg.norm(ker, axis=-1, keepdims=True)
        sigma4 = np.linalg.norm(np.einsum("nij,nj->ni", mat, unit), axis=-1)
        assert np.all(sigma4 < 1e-12)


@pytest.mark.criterion(4, "frame orthogonality and rank invariants")
def test_criterion_4_frame_ledger():
    results, _ = run_named(CRITERIA[4])
    assert_all_pass(results)
    assert all(r.samples >= 1000 for r in results)


@pytest.mark.criterion(5, "symbol determinant closed form and positivity scan")
def test_criterion_5_symbol():
    results, elapsed = run_named(CRITERIA[5])
    assert_all_pass(results)
    assert elapsed < 30.0


@pytest.mark.criterion(6, "lattice Dirac symmetry, plane-wave order, residual gauge invariance")
def test_criterion_6_discrete_operators():
    results, _ = run_named(CRITERIA[6])
    assert_all_pass(results)


@pytest.mark.criterion(7, "forward and backward correspondence on the constant family")
def test_criterion_7_haydys():
    results, _ = run_named(CRITERIA[7])
    assert_all_pass(results)


@pytest.mark.criterion(8, "Fueter linearization against finite differences")
def test_criterion_8_linearization():
    results, _ = run_named(CRITERIA[8])
    assert_all_pass(results)
    assert results[0].worst_error <= 1e-6


@pytest.mark.criterion(9, "flow gradient, monotone energy on seeded runs, suite runtime")
def test_criterion_9_flow_gradient_and_checks():
    results, _ = run_named(CRITERIA[9])
    assert_all_pass(results)
    geom = LatticeGeometry.from_length(8, 2 * np.pi)
    rng = np.random.default_rng(99)
    a = U1Connection(geom, 0.3 * rng.standard_normal((8, 8, 8, 3)))
    psi = SpinorHomField(geom, 0.3 * (rng.standard_normal((8, 8, 8, 2, 3)) + 1j * rng.standard_normal((8, 8, 8, 2, 3))))
    for eps in (0.0, 0.5, 1.0):
        assert gradient_check(a, psi, eps, 10, rng) <= 1e-6


@pytest.mark.criterion(9, "flow gradient, monotone energy on seeded runs, suite runtime")
@pytest.mark.parametrize("seed", range(10))
def test_criterion_9_monotone_seeded_runs(seed):
    config = FlowConfig(epsilon_schedule=(1.0, 0.3, 0.1), step=0.2, max_iters=10, grad_tol=1e-8, seed=1000 + seed, n=8)
    a0, psi0 = initial_fields(config)
    report, _, _ = run_flow(config, (a0, psi0))
    for stage in range(3):
        e = np.array([r["energy"] for r in report.trace if r["stage"] == stage])
        assert np.all(np.diff(e) <= 0.0)
    assert max(r["l4_violation"] for r in report.trace) <= 1e-12


@pytest.mark.criterion(9, "flow gradient, monotone energy on seeded runs, suite runtime")
def test_criterion_9_full_suite_runtime():
    names = sorted({n for group in CRITERIA.values() for n in group})
    start = time.perf_counter()
    report = run_suite(FULL, names, threads=1)
    elapsed = time.perf_counter() - start
    print(f"criteria 1-9 suite: {elapsed:.1f} s, {report['summary']['passed']}/{report['summary']['total']} passed")
    assert elapsed < 600.0
