import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from rarita_kit import reference as ref
from rarita_kit.moduli import (
    PSI1,
    PSI2,
    SYMBOL_DET_CONSTANT,
    WmuChartPoint,
    chart_embed,
    circle_action,
    circle_generator,
    displayed_det_closed_form,
    displayed_det_normalization,
    displayed_symbol_matrix,
    frame_at,
    mu_kernel_matrix,
    normal_in_kernel,
    normal_kernel_matrix,
    normal_spinor,
    quotient_project,
    symbol_degenerate_covector,
    symbol_det_orthonormal,
    symbol_matrix,
    symbol_quadratic,
    tangent_rank_profile,
    w1_element,
    w2_element,
    w_compose,
    w_split,
)
from rarita_kit.spinor_hom import (
    clifford_contract,
    inner,
    iota,
    iota_component,
    moment_diff,
    moment_map,
    moment_norm,
    norm,
    project_threehalf,
    to_real,
)

coord = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
charts = st.sampled_from([PSI1, PSI2])


@st.composite
def chart_point(draw):
    x = [draw(coord) for _ in range(4)]
    if sum(v * v for v in x) < 1e-2:
        x[0] = 1.0
    return WmuChartPoint(*x, draw(st.floats(-5, 5)), draw(charts))


def random_points(rng, n, chart=None):
    x = rng.standard_normal((n, 5))
    x[:, 4] *= 2
    tag = chart if chart is not None else np.where(rng.random(n) < 0.5, PSI1, PSI2)
    return WmuChartPoint.from_array(x, tag)


def single(p, k):
    return WmuChartPoint(p.a[k], p.b[k], p.c[k], p.d[k], p.lam[k], str(np.asarray(p.chart)[k]) if np.ndim(p.chart) else p.chart)


def rand_s(rng, n=None):
    shape = (2,) if n is None else (n, 2)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# --- W decomposition -------------------------------------------------------


def test_w_summands_in_ker_c_and_split(rng):
    s1, s2 = rand_s(rng, 100), rand_s(rng, 100)
    psi = w_compose(s1, s2)
    assert np.allclose(clifford_contract(w1_element(s1)), 0, atol=1e-14)
    assert np.allclose(clifford_contract(w2_element(s2)), 0, atol=1e-14)
    r1, r2 = w_split(psi)
    assert np.allclose(r1, s1) and np.allclose(r2, s2)


def test_w_dimension_and_span(rng):
    # W1 + W2 is all of ker c: real dimension 8.
    basis = [w1_element(np.array(v)) for v in ([1, 0], [1j, 0], [0, 1], [0, 1j])]
    basis += [w2_element(np.array(v)) for v in ([1, 0], [1j, 0], [0, 1], [0, 1j])]
    mat = np.array([to_real(b) for b in basis])
    assert np.linalg.matrix_rank(mat) == 8
    psi = project_threehalf(rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3)))
    assert np.allclose(w_compose(*w_split(psi)), psi, atol=1e-14)


def test_w_split_rejects_non_w(rng):
    with pytest.raises(ValueError):
        w_split(iota(rand_s(rng)))


def test_w_closed_forms(rng):
    x = rng.standard_normal(8)
    s1 = np.array([x[0] + 1j * x[1], x[2] + 1j * x[3]])
    s2 = np.array([x[4] + 1j * x[5], x[6] + 1j * x[7]])
    assert np.array_equal(w1_element(s1), ref.w1_display(*x[:4]))
    assert np.allclose(w_compose(s1, s2), ref.w_display(*x), atol=0)


# --- charts ----------------------------------------------------------------


@settings(max_examples=200)
@given(chart_point())
def test_chart_satisfies_defining_equations(p):
    psi = chart_embed(p)
    r2 = p.radius_sq() * (1 + p.lam**2)
    assert moment_norm(moment_map(psi)) <= 1e-12 * r2
    assert np.abs(clifford_contract(psi)).max() <= 1e-12 * np.sqrt(r2)


def test_chart_closed_form(rng):
    for _ in range(10):
        a, b, c, d, lam = rng.standard_normal(5)
        assert np.allclose(chart_embed(WmuChartPoint(a, b, c, d, lam)), ref.chart_display(a, b, c, d, lam), atol=0)


def test_kernel_solution_reproduced(rng):
    p = random_points(rng, 1000, PSI1)
    s1, s2 = w_split(chart_embed(p))
    a, b, c, d = p.a, p.b, p.c, p.d
    got = np.stack([s2[:, 0].real, s2[:, 0].imag, s2[:, 1].real, s2[:, 1].imag], axis=-1)
    assert np.array_equal(got, p.lam[:, None] * np.stack([b, -a, d, -c], axis=-1))
    kern = np.einsum("nij,nj->ni", mu_kernel_matrix(s1), np.stack([b, -a, d, -c], axis=-1))
    assert np.array_equal(kern, np.zeros_like(kern))


def test_mu_kernel_matrix_literal_rows():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    m = mu_kernel_matrix(np.array([a + b * 1j, c + d * 1j]))
    assert np.array_equal(m, [[a, b, -c, -d], [c, d, a, b], [d, -c, -b, a]])


def test_chart_transition(rng):
    p = random_points(rng, 50, PSI1)
    s = p.dominant()
    s2 = -1j * p.lam[:, None] * s
    q = WmuChartPoint(s2[:, 0].real, s2[:, 0].imag, s2[:, 1].real, s2[:, 1].imag, -1 / p.lam, PSI2)
    assert np.allclose(chart_embed(p), chart_embed(q), atol=1e-12)


def test_chart_rejects_degenerate_and_unknown():
    with pytest.raises(ValueError):
        chart_embed(WmuChartPoint(0.0, 0.0, 0.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        chart_embed(WmuChartPoint(1.0, 0.0, 0.0, 0.0, 1.0, "psi3_dominant"))


# --- quotient projection ---------------------------------------------------


def orbit_distance(u, v):
    """Independent oracle: minimize |circle_action(t, u) - v| over t numerically."""
    res = minimize_scalar(lambda t: norm(circle_action(t, u) - v), bounds=(-np.pi, np.pi), method="bounded", options={"xatol": 1e-12})
    grid = min(norm(circle_action(t, u) - v) for t in np.linspace(-np.pi, np.pi, 721))
    return min(res.fun, grid) if grid > res.fun else res.fun


def test_quotient_project_lands_on_orbit(rng):
    p = random_points(rng, 40)
    theta = rng.uniform(0, 2 * np.pi, 40)
    psi = circle_action(theta, chart_embed(p))
    q = quotient_project(psi)
    back = chart_embed(q)
    for k in range(40):
        assert orbit_distance(back[k], psi[k]) <= 1e-6 * norm(psi[k])


def test_quotient_project_is_circle_invariant(rng):
    p = random_points(rng, 200)
    psi = chart_embed(p)
    q0 = quotient_project(psi)
    q1 = quotient_project(circle_action(rng.uniform(0, 2 * np.pi, 200), psi))
    assert np.allclose(q0.as_array(), q1.as_array(), atol=1e-12)
    assert np.array_equal(q0.chart, q1.chart)


def test_quotient_project_scalar_point(rng):
    q = quotient_project(chart_embed(WmuChartPoint(0.3, -1.0, 0.2, 0.5, 0.4)))
    assert isinstance(q.chart, str) and q.chart == PSI1
    assert abs(q.lam - 0.4) < 1e-14


def test_quotient_project_rejects_invalid(rng):
    with pytest.raises(ValueError):
        quotient_project(np.zeros((2, 3), dtype=complex))
    with pytest.raises(ValueError):
        quotient_project(w_compose(rand_s(rng), rand_s(rng)))


def test_circle_generator_is_orbit_derivative(rng):
    psi = chart_embed(random_points(rng, 10))
    t = 1e-6
    fd = (circle_action(t, psi) - circle_action(-t, psi)) / (2 * t)
    assert np.allclose(circle_generator(psi), fd, atol=1e-9)


def test_scalar_phase_leaves_w(rng):
    # e^{i t} psi is not in ker c for this Clifford convention; the circle on W^mu is circle_action.
    psi = chart_embed(random_points(rng, 1))
    assert np.abs(clifford_contract(1j * psi)).max() > 1e-3
    assert np.allclose(clifford_contract(circle_action(0.7, psi)), 0, atol=1e-14)


# --- frames ----------------------------------------------------------------


def test_partials_match_chart_derivatives(rng):
    p = random_points(rng, 20)
    f = frame_at(p)
    x = p.as_array()
    t = 1e-6
    for k, vec in enumerate(f.tangent()):
        e = np.zeros(5)
        e[k] = t
        fd = (chart_embed(WmuChartPoint.from_array(x + e, p.chart)) - chart_embed(WmuChartPoint.from_array(x - e, p.chart))) / (2 * t)
        assert np.allclose(vec, fd, atol=1e-8)


def test_tangent_frame_closed_forms(rng):
    a, b, c, d, lam = rng.standard_normal(5)
    f = frame_at(WmuChartPoint(a, b, c, d, lam))
    for key, val in ref.frame_display(a, b, c, d, lam).items():
        assert np.allclose(getattr(f, key), val, atol=0), key
    assert np.allclose(f.killing, ref.killing_display(a, b, c, d, lam), atol=0)


def test_rank_profile(rng):
    p = random_points(rng, 100)
    for k in range(100):
        assert tangent_rank_profile(single(p, k)) == (5, 4, 9)


def test_tangent_vectors_in_w_and_ker_dmu(rng):
    p = random_points(rng, 200)
    f = frame_at(p)
    psi = chart_embed(p)
    scale = p.radius_sq() * (1 + p.lam**2)
    for v in f.tangent() + [f.killing, f.d_lambda_tilde]:
        assert np.max(np.abs(clifford_contract(v))) <= 1e-12 * np.max(scale)
        assert np.max(moment_norm(moment_diff(psi, v)) / scale) <= 1e-12


def test_normal_frame_properties(rng):
    p = random_points(rng, 500)
    f = frame_at(p)
    assert np.max(normal_in_kernel(p) / (p.radius_sq() * (1 + p.lam**2))) <= 1e-12
    assert np.allclose(f.n, iota(iota_component(f.n)), atol=1e-12)
    for v in (f.i_n, f.j_n, f.k_n):
        assert np.allclose(norm(v), norm(f.n))


def test_frame_orthogonality(rng):
    p = random_points(rng, 1000)
    f = frame_at(p)

    def cos(x, y):
        return np.max(np.abs(inner(x, y)) / (norm(x) * norm(y)))

    part = f.tangent()[:4]
    for i in range(4):
        for j in range(i + 1, 4):
            assert cos(part[i], part[j]) <= 1e-12
    for v in f.normal():
        assert cos(f.killing, v) <= 1e-12
    for v in (f.i_n, f.j_n, f.k_n):
        assert cos(f.d_lambda_tilde, v) <= 1e-12
    for v in part:
        assert cos(f.d_lambda_tilde, v) <= 1e-12


def test_normal_line_circle_invariant(rng):
    p = random_points(rng, 300)
    theta = rng.uniform(0, 2 * np.pi, 300)
    s = np.exp(1j * theta)[:, None] * p.dominant()
    q = WmuChartPoint(s[:, 0].real, s[:, 0].imag, s[:, 1].real, s[:, 1].imag, p.lam, p.chart)
    moved = circle_action(theta, frame_at(p).n)
    n1 = frame_at(q).n
    coef = inner(n1, moved) / inner(moved, moved)
    assert np.max(norm(n1 - coef[:, None, None] * moved) / norm(n1)) <= 1e-12


def test_normal_kernel_matrix(rng):
    p = random_points(rng, 1000)
    m = normal_kernel_matrix(p)
    ns = normal_spinor(p)
    k = np.stack([ns[:, 0].real, ns[:, 0].imag, ns[:, 1].real, ns[:, 1].imag], axis=-1)
    sv = np.linalg.svd(m, compute_uv=False)
    assert np.min(sv[:, 2] / sv[:, 0]) > 1e-10
    assert np.max(np.linalg.norm(np.einsum("nij,nj->ni", m, k), axis=-1) / sv[:, 0]) < 1e-12 * np.max(np.linalg.norm(k, axis=-1))
    g = m @ np.swapaxes(m, -1, -2)
    diag = np.diagonal(g, axis1=-2, axis2=-1)
    assert np.allclose(g, diag[:, :, None] * np.eye(3), atol=1e-12 * diag.max())
    assert np.allclose(diag, diag[:, :1], rtol=1e-12)


def test_mu_kernel_rows_orthogonal_equal_norm(rng):
    s = rand_s(rng, 1000)
    m = mu_kernel_matrix(s)
    g = m @ np.swapaxes(m, -1, -2)
    r2 = np.sum(np.abs(s) ** 2, axis=-1)
    assert np.allclose(g, r2[:, None, None] * np.eye(3), atol=1e-12 * r2.max())


def test_normal_system_display_entry_is_a_sign_slip(rng):
    # As displayed, the (3, 4) entry breaks the kernel relation; flipping its sign restores it.
    a, b, c, d, lam = rng.standard_normal(5)
    disp = ref.normal_system_display(a, b, c, d, lam)
    sol = ref.normal_solution_display(a, b, c, d, lam)
    assert abs((disp @ sol)[2]) > 1e-3
    assert np.allclose((disp @ sol)[:2], 0, atol=1e-14)
    fixed = normal_kernel_matrix(WmuChartPoint(a, b, c, d, lam))
    assert np.allclose(fixed @ sol, 0, atol=1e-14)
    diff = fixed - disp
    assert np.count_nonzero(np.abs(diff) > 1e-15) == 1 and abs(diff[2, 3]) > 0


def test_displayed_normal_frame_is_not_in_iota_image(rng):
    # The displayed N, IN, JN, KN are inconsistent with the iota closed form above.
    a, b, c, d, lam = rng.standard_normal(5)
    for key, val in ref.normal_frame_display(a, b, c, d, lam).items():
        assert norm(val - iota(iota_component(val))) > 0.1 * norm(val), key


def test_displayed_d_lambda_tilde_is_tangent_but_not_orthogonalized(rng):
    a, b, c, d, lam = rng.standard_normal(5)
    p = WmuChartPoint(a, b, c, d, lam)
    f = frame_at(p)
    disp = ref.d_lambda_tilde_display(a, b, c, d, lam)
    basis = np.array([to_real(v) for v in f.tangent()]).T
    coef, *_ = np.linalg.lstsq(basis, to_real(disp), rcond=None)
    assert np.linalg.norm(basis @ coef - to_real(disp)) <= 1e-12 * norm(disp)
    assert max(abs(inner(disp, v)) for v in f.tangent()[:4]) > 1e-3


# --- symbol ----------------------------------------------------------------


def test_displayed_symbol_literal_and_det(rng):
    p = random_points(rng, 10_000)
    det = displayed_symbol_matrix(p).det / displayed_det_normalization(p)
    assert np.max(np.abs(det - displayed_det_closed_form(p)) / displayed_det_closed_form(p)) <= 1e-10


def test_displayed_det_normalization_symbolic():
    a, b, c, d, lam = sp.symbols("a b c d lam", real=True)
    l2 = lam**2
    m = sp.Matrix(
        [
            [-2 * (l2 + 1) * b, 2 * (l2 + 1) * a, -2 * (l2 + 1) * d, 2 * (l2 + 1) * c],
            [2 * (2 * l2 + 1) * c - 2 * lam * d, -2 * (2 * l2 + 1) * d - 2 * lam * c, -2 * (2 * l2 + 1) * a + 2 * lam * b, 2 * (2 * l2 + 1) * b + 2 * lam * a],
            [-2 * (l2 + 2) * d + 2 * lam * c, -2 * (l2 + 2) * c - 2 * lam * d, 2 * (l2 + 2) * b - 2 * lam * a, 2 * (l2 + 2) * a + 2 * lam * b],
            [a, b, c, d],
        ]
    )
    closed = 2 * (a**2 + b**2 + c**2 + d**2) ** 2 * (1 + l2) ** 2
    assert sp.simplify(m.det() / closed) == 8 * (1 + l2)
    num = displayed_symbol_matrix(WmuChartPoint(0.3, -0.7, 1.1, 0.2, 0.9)).m
    subs = {a: 0.3, b: -0.7, c: 1.1, d: 0.2, lam: 0.9}
    assert np.allclose(num, np.array(m.subs(subs), dtype=float), atol=1e-15)


def test_symbol_det_closed_form_both_charts(rng):
    for chart in (PSI1, PSI2):
        p = random_points(rng, 5000, chart)
        xi = rng.standard_normal((5000, 3))
        xi /= np.linalg.norm(xi, axis=-1, keepdims=True)
        det = symbol_matrix(p, xi).det
        closed = symbol_det_orthonormal(p, xi)
        assert np.max(np.abs(det - closed) / np.maximum(closed, 1e-8)) <= 1e-10


def test_symbol_det_constant_frozen():
    assert SYMBOL_DET_CONSTANT == pytest.approx(9 / (2 * np.sqrt(2)), rel=1e-15)


def test_symbol_scan_positive(rng):
    p = random_points(rng, 10_000)
    xi = rng.standard_normal((10_000, 3))
    xi /= np.linalg.norm(xi, axis=-1, keepdims=True)
    sm = symbol_matrix(p, xi)
    assert sm.det.min() > 0
    assert np.linalg.svd(sm.m, compute_uv=False)[:, -1].min() > 0


def test_symbol_vanishes_on_one_covector_line(rng):
    # Clifford multiplication by this covector maps the partials into the complement of T',
    # so the restricted symbol is zero there (det ~ Q^2 vanishes to fourth order).
    p = random_points(rng, 200)
    line = symbol_degenerate_covector(p)
    line /= np.linalg.norm(line, axis=-1, keepdims=True)
    assert np.max(np.abs(symbol_matrix(p, line).m)) < 1e-12
    assert np.allclose(symbol_quadratic(p, line), 0, atol=1e-14)
    tilt = line + 0.1 * np.array([1.0, 0.0, 0.0])
    assert np.all(np.linalg.svd(symbol_matrix(p, tilt).m, compute_uv=False)[:, -1] > 1e-4)


def test_degenerate_covector_consistent_under_transition(rng):
    p = random_points(rng, 20, PSI1)
    s2 = -1j * p.lam[:, None] * p.dominant()
    q = WmuChartPoint(s2[:, 0].real, s2[:, 0].imag, s2[:, 1].real, s2[:, 1].imag, -1 / p.lam, PSI2)
    u, v = symbol_degenerate_covector(p), symbol_degenerate_covector(q)
    cross = np.cross(u, v)
    assert np.allclose(cross, 0, atol=1e-12 * np.max(np.abs(u)) * np.max(np.abs(v)))


def test_lambda_zero_slice_constant(rng):
    x = rng.standard_normal((1000, 4))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    p = WmuChartPoint(x[:, 0], x[:, 1], x[:, 2], x[:, 3], np.zeros(1000))
    det = displayed_symbol_matrix(p).det / displayed_det_normalization(p)
    assert np.allclose(det, 2.0, rtol=1e-12)


def test_scaling_of_displayed_and_orthonormal_symbols(rng):
    p = random_points(rng, 1, PSI1)
    xi = np.array([[0.3, -0.5, 0.8]])
    base_sig = np.linalg.svd(displayed_symbol_matrix(p).m, compute_uv=False)[0, -1]
    base_orth = symbol_matrix(p, xi).m
    for t in (0.5, 2.0, 7.0):
        q = WmuChartPoint(t * p.a, t * p.b, t * p.c, t * p.d, p.lam, PSI1)
        sig = np.linalg.svd(displayed_symbol_matrix(q).m, compute_uv=False)[0, -1]
        assert sig == pytest.approx(t * base_sig, rel=1e-12)
        assert displayed_symbol_matrix(q).det[0] == pytest.approx(t**4 * displayed_symbol_matrix(p).det[0], rel=1e-12)
        assert np.allclose(symbol_matrix(q, xi).m, base_orth, atol=1e-12)
