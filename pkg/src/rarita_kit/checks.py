"""The verification suite behind ``rarita-kit verify``.

Every check is an independent function of a seeded generator and the suite
configuration.  It returns the worst observed error, the number of samples and
a details dict.  Checks run in a thread pool; results are aggregated in name
order so the report bytes depend only on the configuration.
"""

from __future__ import annotations

import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import reference as ref
from .clifford_core import AXES, clifford_act, left_unit, quat_mul, quat_to_spinor
from .flow import FlowConfig, energy, gradient_check, initial_fields, run_flow
from .lattice import (
    LatticeGeometry,
    SpinorHomField,
    U1Connection,
    clifford_field,
    dirac_twisted,
    fueter_linearization,
    fueter_map,
    fueter_residual,
    gauge_transform,
    haydys_backward,
    haydys_forward,
    l2_inner,
    l2_norm,
    l4_norm,
    rarita_schwinger,
    residuals,
)
from .moduli import (
    PSI1,
    PSI2,
    WmuChartPoint,
    chart_embed,
    circle_action,
    displayed_det_closed_form,
    displayed_det_normalization,
    displayed_symbol_matrix,
    frame_at,
    mu_kernel_matrix,
    normal_kernel_matrix,
    normal_spinor,
    symbol_degenerate_covector,
    symbol_det_orthonormal,
    symbol_matrix,
    w1_element,
    w2_element,
    w_compose,
    w_split,
)
from .spinor_hom import (
    IOTA_NORM_SQ,
    clifford_contract,
    hk_combination,
    inner,
    iota,
    iota_adjoint,
    iota_component,
    moment_diff,
    moment_map,
    moment_norm,
    norm,
    project_threehalf,
    to_real,
)

THREADS_ENV = "RARITA_KIT_THREADS"
RNG_NAME = "numpy.random.Philox"
DEFAULT_TOL_EXACT = 1e-12
DEFAULT_TOL_FD = 1e-8
DEFAULT_SAMPLES = 10_000

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


@dataclass(frozen=True)
class SuiteConfig:
    samples: int = DEFAULT_SAMPLES
    tol_exact: float = DEFAULT_TOL_EXACT
    tol_fd: float = DEFAULT_TOL_FD
    seed: int = 0
    output_dir: str = "."

    def __post_init__(self):
        if int(self.samples) != self.samples or self.samples < 1:
            raise ValueError(f"samples must be an integer >= 1, got {self.samples}")
        if not self.tol_exact > 0:
            raise ValueError(f"tol_exact must be > 0, got {self.tol_exact}")
        if not self.tol_fd > 0:
            raise ValueError(f"tol_fd must be > 0, got {self.tol_fd}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def geometric_samples(self) -> int:
        return max(1, self.samples // 10)


@dataclass
class Outcome:
    worst_error: float
    samples: int
    details: dict = field(default_factory=dict)
    passed: bool | None = None


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    tol_kind: str | None  # "exact", "fd" or None for fixed thresholds
    factor: float
    fn: Callable[[np.random.Generator, SuiteConfig], Outcome]

    def threshold(self, config: SuiteConfig) -> float:
        if self.tol_kind == "exact":
            return self.factor * config.tol_exact
        if self.tol_kind == "fd":
            return self.factor * config.tol_fd
        return self.factor

    def default_threshold(self) -> float:
        return self.threshold(SuiteConfig())


@dataclass
class CheckResult:
    name: str
    anchor: str
    passed: bool
    worst_error: float
    samples: int
    tolerance: float
    failure_kind: str | None
    details: dict


REGISTRY: dict[str, Check] = {}


def check(name: str, anchor: str, tol_kind: str | None, factor: float = 1.0):
    def register(fn):
        if name in REGISTRY:
            raise ValueError(f"duplicate check {name}")
        REGISTRY[name] = Check(name, anchor, tol_kind, factor, fn)
        return fn

    return register


def check_rng(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return np.random.Generator(np.random.Philox(ss))


# --- samplers --------------------------------------------------------------


def _spinors(rng, n: int) -> np.ndarray:
    return rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))


def _psis(rng, n: int) -> np.ndarray:
    return rng.standard_normal((n, 2, 3)) + 1j * rng.standard_normal((n, 2, 3))


def _units(rng, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def chart_points(rng, n: int, lam_scale: float = 2.0) -> WmuChartPoint:
    x = rng.standard_normal((n, 4))
    lam = lam_scale * rng.standard_normal(n)
    chart = np.where(rng.random(n) < 0.5, PSI1, PSI2)
    return WmuChartPoint(x[:, 0], x[:, 1], x[:, 2], x[:, 3], lam, chart)


def _abs_max(x) -> float:
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def _geom(n: int = 8) -> LatticeGeometry:
    return LatticeGeometry.from_length(n, 2 * np.pi)


def _random_fields(rng, geom: LatticeGeometry, a_scale: float = 0.5):
    n = geom.n
    a = U1Connection(geom, a_scale * rng.standard_normal((n, n, n, 3)))
    v = rng.standard_normal((n, n, n, 2, 3)) + 1j * rng.standard_normal((n, n, n, 2, 3))
    return a, SpinorHomField(geom, v)


# --- clifford_core ---------------------------------------------------------


@check("clifford.unit_square", "Clifford multiplication by a unit imaginary quaternion squares to -1", "exact")
def _unit_square(rng, cfg):
    v = _units(rng, cfg.samples)
    s = _spinors(rng, cfg.samples)
    err = np.linalg.norm(clifford_act(v, clifford_act(v, s)) + s, axis=-1) / np.linalg.norm(s, axis=-1)
    return Outcome(float(err.max()), cfg.samples)


@check("clifford.norm_multiplicative", "quaternion norm is multiplicative", "exact")
def _norm_mult(rng, cfg):
    p = rng.standard_normal((cfg.samples, 4))
    q = rng.standard_normal((cfg.samples, 4))
    np_, nq = np.linalg.norm(p, axis=-1), np.linalg.norm(q, axis=-1)
    err = np.abs(np.linalg.norm(quat_mul(p, q), axis=-1) - np_ * nq) / (np_ * nq)
    return Outcome(float(err.max()), cfg.samples)


@check(
    "clifford.intertwines_left_multiplication",
    "the quaternion-to-spinor identification turns left multiplication by I, J, K into the Clifford action",
    "exact",
)
def _intertwine(rng, cfg):
    units = {"I": np.array([0, 1, 0, 0.0]), "J": np.array([0, 0, 1, 0.0]), "K": np.array([0, 0, 0, 1.0])}
    basis = np.eye(4)
    worst = 0.0
    for ax in AXES:
        lhs = quat_to_spinor(quat_mul(np.broadcast_to(units[ax], basis.shape), basis))
        worst = max(worst, _abs_max(lhs - left_unit(ax, quat_to_spinor(basis))))
    return Outcome(worst, 4 * len(AXES))


@check(
    "clifford.convention_matches_reference",
    "iota, W1, W, the chart, the tangent frame and the Killing field agree entrywise with their closed forms",
    "exact",
)
def _convention(rng, cfg):
    m = cfg.geometric_samples
    p = chart_points(rng, m)
    p = WmuChartPoint(p.a, p.b, p.c, p.d, p.lam, PSI1)
    a, b, c, d, lam = p.a, p.b, p.c, p.d, p.lam
    s = p.dominant()
    x2 = rng.standard_normal((m, 4))
    s2 = x2[:, 0::2] + 1j * x2[:, 1::2]
    fr = frame_at(p)
    disp = ref.frame_display(a, b, c, d, lam)
    pairs = {
        "iota": (iota(s), ref.iota_display(a, b, c, d)),
        "w1": (w1_element(s), ref.w1_display(a, b, c, d)),
        "w": (w_compose(s, s2), ref.w_display(a, b, c, d, *x2.T)),
        "chart": (chart_embed(p), ref.chart_display(a, b, c, d, lam)),
        "killing": (fr.killing, ref.killing_display(a, b, c, d, lam)),
    }
    for key, val in disp.items():
        pairs[key] = (getattr(fr, key), val)
    errs = {k: _abs_max(x - y) for k, (x, y) in pairs.items()}
    return Outcome(max(errs.values()), m, {"per_display": errs})


# --- spinor_hom ------------------------------------------------------------


@check(
    "spinor_hom.orthogonal_decomposition",
    "psi splits orthogonally into an iota(H) part and a ker c part",
    "exact",
)
def _orth_decomp(rng, cfg):
    psi = _psis(rng, cfg.samples)
    par = iota(iota_component(psi))
    perp = project_threehalf(psi)
    scale = inner(psi, psi)
    err = np.maximum.reduce(
        [
            norm(psi - par - perp) / np.sqrt(scale),
            np.abs(inner(par, perp)) / scale,
            np.linalg.norm(clifford_contract(perp), axis=-1) / np.sqrt(scale),
        ]
    )
    return Outcome(float(err.max()), cfg.samples)


@check("spinor_hom.iota_norm_ratio", "iota scales squared norms by a fixed constant", "exact")
def _iota_ratio(rng, cfg):
    s = _spinors(rng, cfg.samples)
    ss = np.sum(np.abs(s) ** 2, axis=-1)
    err = np.abs(inner(iota(s), iota(s)) / ss - IOTA_NORM_SQ)
    adj = np.linalg.norm(iota_adjoint(iota(s)) - IOTA_NORM_SQ * s, axis=-1) / np.sqrt(ss)
    return Outcome(float(max(err.max(), adj.max())), cfg.samples, {"constant": IOTA_NORM_SQ})


@check("spinor_hom.moment_u1_invariance", "the moment map is invariant under the circle action", "exact")
def _mu_inv(rng, cfg):
    m = cfg.geometric_samples
    psi = _psis(rng, m)
    theta = rng.uniform(0, 2 * np.pi, m)
    mu = moment_map(psi)
    scale = inner(psi, psi)
    scalar = moment_norm(moment_map(np.exp(1j * theta)[:, None, None] * psi) - mu) / scale
    circle = moment_norm(moment_map(circle_action(theta, psi)) - mu) / scale
    return Outcome(float(max(scalar.max(), circle.max())), m)


@check(
    "spinor_hom.killing_direction_degeneracy",
    "the orbit direction of the circle lies in the kernel of d mu",
    "exact",
)
def _killing_degen(rng, cfg):
    m = cfg.geometric_samples
    psi = _psis(rng, m)
    scale = inner(psi, psi)
    e1 = moment_norm(moment_diff(psi, 1j * psi)) / scale
    e2 = moment_norm(moment_diff(psi, psi * np.array([1j, -1j, -1j]))) / scale
    return Outcome(float(max(e1.max(), e2.max())), m)


@check(
    "spinor_hom.hk_section_squares",
    "a unit combination of the hyperkahler triple squares to -1",
    "exact",
)
def _hk_square(rng, cfg):
    m = cfg.geometric_samples
    v = _units(rng, m)
    psi = _psis(rng, m)
    err = norm(hk_combination(v, hk_combination(v, psi)) + psi) / norm(psi)
    return Outcome(float(err.max()), m)


@check("spinor_hom.w1_w2_moment_vanishing", "mu vanishes identically on W1 and on W2", "exact")
def _w_mu(rng, cfg):
    s = _spinors(rng, cfg.samples)
    ss = np.sum(np.abs(s) ** 2, axis=-1)
    e1 = moment_norm(moment_map(w1_element(s))) / ss
    e2 = moment_norm(moment_map(w2_element(s))) / ss
    return Outcome(float(max(e1.max(), e2.max())), 2 * cfg.samples)


# --- aquaternionic moduli --------------------------------------------------


@check(
    "moduli.chart_validity",
    "chart points satisfy mu = 0 and c = 0, with the second spinor given by the kernel solution",
    "exact",
)
def _chart_validity(rng, cfg):
    p = chart_points(rng, cfg.samples)
    psi = chart_embed(p)
    r2 = p.radius_sq()
    e_mu = moment_norm(moment_map(psi)) / r2
    e_c = np.linalg.norm(clifford_contract(psi), axis=-1) / np.sqrt(r2)
    s1, s2 = w_split(psi)
    dom = np.where((p.chart == PSI1)[:, None], s1, s2)
    oth = np.where((p.chart == PSI1)[:, None], s2, s1)
    a, b, c, d = p.a, p.b, p.c, p.d
    expect = p.lam[:, None] * np.stack([b, -a, d, -c], axis=-1)
    got = np.stack([oth[:, 0].real, oth[:, 0].imag, oth[:, 1].real, oth[:, 1].imag], axis=-1)
    e_sol = np.max(np.abs(got - expect), axis=-1) / (np.sqrt(r2) * (1 + np.abs(p.lam)))
    kern = np.einsum("nij,nj->ni", mu_kernel_matrix(dom), np.stack([b, -a, d, -c], axis=-1))
    e_ker = np.max(np.abs(kern), axis=-1) / r2
    details = {
        "mu": float(e_mu.max()),
        "c": float(e_c.max()),
        "kernel_solution": float(e_sol.max()),
        "kernel_product": float(e_ker.max()),
    }
    return Outcome(max(details.values()), cfg.samples, details)


def _rank3_stats(mat: np.ndarray, kernel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sv = np.linalg.svd(mat, compute_uv=False)
    kernel = kernel / np.linalg.norm(kernel, axis=-1, keepdims=True)
    resid = np.linalg.norm(np.einsum("nij,nj->ni", mat, kernel), axis=-1) / sv[:, 0]
    return sv[:, 2] / sv[:, 0], resid


@check(
    "moduli.kernel_matrix_rank",
    "the mu-kernel and normal-kernel systems have rank exactly three",
    "exact",
)
def _kernel_rank(rng, cfg):
    m = cfg.geometric_samples
    p = chart_points(rng, m)
    x = rng.standard_normal((m, 4))
    s1 = x[:, 0::2] + 1j * x[:, 1::2]
    k1 = np.stack([x[:, 1], -x[:, 0], x[:, 3], -x[:, 2]], axis=-1)
    r1, z1 = _rank3_stats(mu_kernel_matrix(s1), k1)
    ns = normal_spinor(p)
    k2 = np.stack([ns[:, 0].real, ns[:, 0].imag, ns[:, 1].real, ns[:, 1].imag], axis=-1)
    r2, z2 = _rank3_stats(normal_kernel_matrix(p), k2)
    ratio = float(min(r1.min(), r2.min()))
    worst = float(max(z1.max(), z2.max()))
    # rank must also be at least 3; a collapsed sigma_3 fails regardless of the kernel residual
    verdict = None if ratio > 1e-10 else False
    return Outcome(worst, 2 * m, {"min_sigma3_over_sigma1": ratio, "max_sigma4_relative": worst}, verdict)


@check(
    "moduli.kernel_rows_orthogonal_equal_norm",
    "the rows of both kernel systems are mutually orthogonal with equal norms",
    "exact",
)
def _rows_orth(rng, cfg):
    m = cfg.geometric_samples
    p = chart_points(rng, m)
    worst = 0.0
    for mat in (mu_kernel_matrix(p.dominant()), normal_kernel_matrix(p)):
        g = mat @ np.swapaxes(mat, -1, -2)
        diag = np.diagonal(g, axis1=-2, axis2=-1)
        scale = diag.mean(axis=-1)
        off = g - diag[..., None] * np.eye(3)
        worst = max(worst, float(np.max(np.abs(off).max(axis=(-2, -1)) / scale)))
        worst = max(worst, float(np.max(np.ptp(diag, axis=-1) / scale)))
    return Outcome(worst, 2 * m)


def _frame_vectors(fr) -> np.ndarray:
    return np.stack([to_real(v) for v in fr.tangent() + fr.normal()], axis=-2)


@check(
    "moduli.frame_rank_profile",
    "tangent frame has rank 5, normal frame rank 4, and together rank 9",
    None,
    0.0,
)
def _frame_rank(rng, cfg):
    m = cfg.geometric_samples
    fr = frame_at(chart_points(rng, m))
    vec = _frame_vectors(fr)

    def ranks(block):
        sv = np.linalg.svd(block, compute_uv=False)
        return np.sum(sv > 1e-10 * sv[:, :1], axis=-1), sv[..., -1] / sv[..., 0]

    rt, gt = ranks(vec[:, :5])
    rn, gn = ranks(vec[:, 5:])
    ra, ga = ranks(vec)
    bad = int(np.sum((rt != 5) | (rn != 4) | (ra != 9)))
    details = {"min_relative_gap": float(min(gt.min(), gn.min(), ga.min())), "mismatches": bad}
    return Outcome(float(bad), m, details)


@check(
    "moduli.frame_orthogonality",
    "partials mutually orthogonal; Killing orthogonal to N, IN, JN, KN; corrected lambda-direction orthogonal to IN, JN, KN",
    "exact",
)
def _frame_orth(rng, cfg):
    m = cfg.geometric_samples
    fr = frame_at(chart_points(rng, m))
    pairs = [(x, y) for i, x in enumerate(fr.tangent()[:4]) for y in fr.tangent()[i + 1 : 4]]
    pairs += [(fr.killing, v) for v in fr.normal()]
    pairs += [(fr.d_lambda_tilde, v) for v in (fr.i_n, fr.j_n, fr.k_n)]
    worst = max(float(np.max(np.abs(inner(x, y)) / (norm(x) * norm(y)))) for x, y in pairs)
    return Outcome(worst, m, {"pairs": len(pairs)})


@check("moduli.normal_line_circle_invariance", "the normal line is invariant under the circle action", "exact")
def _normal_circle(rng, cfg):
    m = cfg.geometric_samples
    p = chart_points(rng, m)
    theta = rng.uniform(0, 2 * np.pi, m)
    n0 = frame_at(p).n
    rot = WmuChartPoint.from_array(p.as_array(), p.chart)
    s = np.exp(1j * theta)[:, None] * rot.dominant()
    rot = WmuChartPoint(s[:, 0].real, s[:, 0].imag, s[:, 1].real, s[:, 1].imag, p.lam, p.chart)
    psi_err = norm(chart_embed(rot) - circle_action(theta, chart_embed(p))) / norm(chart_embed(p))
    n1 = frame_at(rot).n
    moved = circle_action(theta, n0)
    coef = inner(n1, moved) / inner(moved, moved)
    line_err = norm(n1 - coef[:, None, None] * moved) / norm(n1)
    return Outcome(float(max(psi_err.max(), line_err.max())), m)


@check(
    "moduli.displayed_symbol_determinant",
    "the 4x4 symbol display has determinant 2 r^4 (1 + lam^2)^2 after the frozen normalization",
    "exact",
    100.0,
)
def _displayed_det(rng, cfg):
    p = chart_points(rng, cfg.samples)
    det = displayed_symbol_matrix(p).det / displayed_det_normalization(p)
    closed = displayed_det_closed_form(p)
    err = np.abs(det - closed) / closed
    return Outcome(float(err.max()), cfg.samples)


@check(
    "moduli.symbol_det_closed_form",
    "the orthonormal symbol determinant equals Q(xi)^2 / (c (1 + lam^2)^2)",
    "exact",
    100.0,
)
def _symbol_closed(rng, cfg):
    p = chart_points(rng, cfg.samples)
    xi = _units(rng, cfg.samples)
    det = symbol_matrix(p, xi).det
    closed = symbol_det_orthonormal(p, xi)
    err = np.abs(det - closed) / np.maximum(np.abs(closed), 1e-8)
    return Outcome(float(err.max()), cfg.samples)


@check(
    "moduli.symbol_scan_positive",
    "the symbol determinant and smallest singular value are positive on random (p, xi)",
    None,
    0.0,
)
def _symbol_scan(rng, cfg):
    p = chart_points(rng, cfg.samples)
    xi = _units(rng, cfg.samples)
    sm = symbol_matrix(p, xi)
    sig = np.linalg.svd(sm.m, compute_uv=False)[:, -1]
    line = symbol_degenerate_covector(p)
    line = line / np.linalg.norm(line, axis=-1, keepdims=True)
    degenerate = float(np.max(np.abs(symbol_matrix(p, line).det)))
    details = {
        "min_det": float(sm.det.min()),
        "min_sigma_min": float(sig.min()),
        "max_abs_det_on_degenerate_covector": degenerate,
    }
    ok = bool(sm.det.min() > 0 and sig.min() > 0)
    return Outcome(0.0 if ok else float(-min(sm.det.min(), 0.0) + (sig.min() <= 0)), cfg.samples, details, ok)


# --- lattice operators -----------------------------------------------------


@check("lattice.dirac_self_adjoint", "the lattice twisted Dirac operator is symmetric", "exact", 100.0)
def _dirac_sa(rng, cfg):
    geom = _geom(8)
    worst = 0.0
    trials = 5
    for _ in range(trials):
        a, f = _random_fields(rng, geom)
        _, g = _random_fields(rng, geom)
        df, dg = dirac_twisted(a, f).value, dirac_twisted(a, g).value
        lhs, rhs = l2_inner(geom, df, g.value), l2_inner(geom, f.value, dg)
        scale = l2_norm(geom, df) * l2_norm(geom, g.value) + l2_norm(geom, f.value) * l2_norm(geom, dg)
        worst = max(worst, abs(lhs - rhs) / scale)
    return Outcome(worst, trials)


def plane_wave_errors(sizes=(8, 16, 32), k=(1, 1, -1), seed_spinor=None) -> list[float]:
    """Relative L^2 error of the lattice Dirac operator on a plane wave, per lattice size."""
    k = np.asarray(k, dtype=float)
    psi0 = seed_spinor if seed_spinor is not None else np.array([[1 + 0.5j, -0.3j, 0.7], [0.2, 1 - 1j, 0.4j]])
    out = []
    for n in sizes:
        geom = _geom(n)
        phase = np.exp(1j * geom.coordinates() @ k)[..., None, None]
        f = SpinorHomField(geom, phase * psi0)
        disc = dirac_twisted(U1Connection.zero(geom), f).value
        cont = sum(clifford_field(j, 1j * k[j] * f.value) for j in range(3))
        out.append(l2_norm(geom, disc - cont) / l2_norm(geom, cont))
    return out


@check(
    "lattice.plane_wave_order",
    "on plane waves the lattice Dirac operator converges to the continuum symbol at second order",
    None,
    0.0,
)
def _plane_wave(rng, cfg):
    sizes = (8, 16, 32)
    errs = plane_wave_errors(sizes)
    orders = [float(np.log2(errs[i] / errs[i + 1])) for i in range(len(errs) - 1)]
    ok = min(orders) >= 1.9
    return Outcome(max(0.0, 1.9 - min(orders)), len(sizes), {"errors": errs, "orders": orders}, ok)


@check(
    "lattice.residual_gauge_invariance",
    "rs and curvature residuals are invariant under per-site gauge transformations",
    "exact",
    100.0,
)
def _gauge_res(rng, cfg):
    geom = _geom(8)
    trials = 3
    per: dict[str, float] = {}
    for _ in range(trials):
        a, psi = _random_fields(rng, geom)
        psi = psi.with_value(project_threehalf(psi.value))
        theta = rng.uniform(0, 2 * np.pi, (geom.n,) * 3)
        a2, psi2 = gauge_transform(theta, a, psi)
        for mode, eps in (("rssw", 0.0), ("blowup", 0.5), ("degenerate", None)):
            r1 = residuals(a, psi, eps, mode).as_dict()
            r2 = residuals(a2, psi2, eps, mode).as_dict()
            for key in ("rs_residual", "curvature_residual"):
                label = f"{mode}.{key}"
                err = abs(r1[key] - r2[key]) / max(r1[key], 1.0)
                per[label] = max(per.get(label, 0.0), err)
    return Outcome(max(per.values()), trials, {"per_residual": dict(sorted(per.items()))})


@check(
    "lattice.rs_output_orthogonal_to_iota",
    "the Rarita-Schwinger output is pointwise orthogonal to iota(H)",
    "exact",
)
def _rs_orth(rng, cfg):
    geom = _geom(8)
    a, psi = _random_fields(rng, geom)
    psi = psi.with_value(project_threehalf(psi.value))
    out = rarita_schwinger(a, psi).value
    err = np.linalg.norm(iota_adjoint(out), axis=-1) / np.sqrt(inner(out, out)).max()
    return Outcome(float(err.max()), geom.n**3)


@check(
    "lattice.haydys_constant_family",
    "constant W^mu sections give Fueter zeros and lift back to degenerate-system solutions",
    "exact",
    100.0,
)
def _haydys(rng, cfg):
    geom = _geom(8)
    trials = 8
    worst = {"fueter_residual": 0.0, "backward_residuals": 0.0, "forward_roundtrip": 0.0}
    pts = chart_points(rng, trials)
    for t in range(trials):
        if t == 0:
            x = _spinors(rng, 1)[0]
            value = np.broadcast_to(w1_element(x), (geom.n,) * 3 + (2, 3)).copy()
        else:
            p = WmuChartPoint(pts.a[t], pts.b[t], pts.c[t], pts.d[t], pts.lam[t], str(pts.chart[t]))
            value = np.broadcast_to(chart_embed(p), (geom.n,) * 3 + (2, 3)).copy()
        psi = SpinorHomField(geom, value)
        psi = psi.with_value(psi.value / l4_norm(psi))
        a = U1Connection.zero(geom)
        b, phi = haydys_forward(a, psi)
        worst["fueter_residual"] = max(worst["fueter_residual"], fueter_residual(b, phi))
        b2, psi2 = haydys_backward(b, phi)
        res = residuals(b2, psi2, None, "degenerate").as_dict()
        worst["backward_residuals"] = max(worst["backward_residuals"], max(res.values()))
        orbit = quotient_distance(psi.value, psi2.value)
        worst["forward_roundtrip"] = max(worst["forward_roundtrip"], orbit)
    return Outcome(max(worst.values()), trials, worst)


def quotient_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Max over sites of the distance between the circle orbits through u and v (sites share one angle)."""
    # The optimal angle solves a 1-D problem; circle_action is diag(e^{it}, e^{-it}, e^{-it}) on columns.
    p = np.sum(np.conj(u[..., 0]) * v[..., 0])
    q = np.sum(np.conj(u[..., 1:]) * v[..., 1:])
    t = np.angle(p + np.conj(q))
    diff = circle_action(t, u) - v
    return float(np.sqrt(inner(diff, diff).max() / max(inner(v, v).max(), 1e-300)))


@check(
    "lattice.fueter_linearization",
    "the finite-difference linearization of the Fueter map equals the Dirac operator on the variation",
    "fd",
    100.0,
)
def _fueter_lin(rng, cfg):
    geom = _geom(8)
    n = geom.n
    trials = 10
    worst = 0.0
    step = 1e-5
    for _ in range(trials):
        base = rng.standard_normal((n, n, n, 5))
        base[..., :4] += 2.0 * np.sign(base[..., :4])
        chart = np.where(rng.random((n, n, n)) < 0.5, PSI1, PSI2)
        b = U1Connection(geom, 0.5 * rng.standard_normal((n, n, n, 3)))
        v = rng.standard_normal((n, n, n, 5))
        plus = fueter_map(b, WmuChartPoint.from_array(base + step * v, chart)).value
        minus = fueter_map(b, WmuChartPoint.from_array(base - step * v, chart)).value
        fd = (plus - minus) / (2 * step)
        lin = fueter_linearization(b, WmuChartPoint.from_array(base, chart), v).value
        worst = max(worst, l2_norm(geom, fd - lin) / l2_norm(geom, lin))
    return Outcome(worst, trials)


# --- flow solver -----------------------------------------------------------


@lru_cache(maxsize=4)
def _smoke_run(seed: int):
    config = FlowConfig(epsilon_schedule=(1.0, 0.3), step=0.2, max_iters=8, grad_tol=1e-8, seed=seed)
    report, _, _ = run_flow(config)
    return report


@check("flow.energy_monotone", "accepted descent steps never increase the energy within a stage", "exact")
def _energy_monotone(rng, cfg):
    report = _smoke_run(int(cfg.seed))
    worst = 0.0
    rows = report.trace
    for prev, cur in zip(rows, rows[1:]):
        if prev["stage"] == cur["stage"]:
            worst = max(worst, (cur["energy"] - prev["energy"]) / max(abs(prev["energy"]), 1.0))
    return Outcome(max(worst, 0.0), len(rows), {"stages": [s["status"] for s in report.stages]})


@check("flow.l4_constraint", "every iterate has unit L4 norm after renormalization", "exact")
def _l4_constraint(rng, cfg):
    report = _smoke_run(int(cfg.seed))
    return Outcome(max(r["l4_violation"] for r in report.trace), len(report.trace))


@check("flow.energy_gauge_invariance", "the flow energy is invariant under per-site gauge transformations", "exact", 100.0)
def _energy_gauge(rng, cfg):
    geom = _geom(8)
    a, psi = initial_fields(FlowConfig((1.0,), 0.1, 0, 0.0, int(rng.integers(2**63))))
    worst = {}
    for eps in (0.0, 0.5):
        theta = rng.uniform(0, 2 * np.pi, (geom.n,) * 3)
        a2, psi2 = gauge_transform(theta, a, psi)
        e1, e2 = energy(a, psi, eps), energy(a2, psi2, eps)
        worst[f"epsilon={eps}"] = abs(e1 - e2) / max(abs(e1), 1.0)
    return Outcome(max(worst.values()), 2, {"per_epsilon": worst})


@check("flow.gradient_fd", "the energy gradient matches central finite differences", "fd", 100.0)
def _gradient_fd(rng, cfg):
    geom = _geom(8)
    a, psi = _random_fields(rng, geom, a_scale=0.3)
    psi = psi.with_value(0.3 * psi.value)
    worst = 0.0
    for eps in (0.0, 0.5):
        worst = max(worst, gradient_check(a, psi, eps, 10, rng))
    return Outcome(worst, 20)


# --- report ----------------------------------------------------------------

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rarita-kit verification report",
    "type": "object",
    "required": ["tool", "version", "rng", "config", "summary", "checks"],
    "additionalProperties": False,
    "properties": {
        "tool": {"const": "rarita-kit"},
        "version": {"type": "string"},
        "rng": {"type": "string"},
        "config": {
            "type": "object",
            "required": ["samples", "tol_exact", "tol_fd", "seed"],
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "tol_exact": {"type": "number", "exclusiveMinimum": 0},
                "tol_fd": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "summary": {
            "type": "object",
            "required": ["total", "passed", "failed", "exit_code"],
            "properties": {
                "total": {"type": "integer"},
                "passed": {"type": "integer"},
                "failed": {"type": "integer"},
                "exit_code": {"enum": [0, 1]},
                "failed_checks": {"type": "array", "items": {"type": "string"}},
            },
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "anchor", "passed", "worst_error", "samples", "tolerance", "failure_kind", "details"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "pattern": "^[a-z_]+\\.[a-z0-9_]+$"},
                    "anchor": {"type": "string", "minLength": 1},
                    "passed": {"type": "boolean"},
                    "worst_error": {"type": ["number", "null"]},
                    "samples": {"type": "integer", "minimum": 0},
                    "tolerance": {"type": "number"},
                    "failure_kind": {"enum": [None, "tolerance", "formula"]},
                    "details": {"type": "object"},
                },
            },
        },
    },
}

META_CHECKS = ("cli.exit_code_contract", "cli.report_schema")


def exit_code_for(results: list[CheckResult]) -> int:
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def run_check(chk: Check, config: SuiteConfig) -> CheckResult:
    outcome = chk.fn(check_rng(config.seed, chk.name), config)
    thr = chk.threshold(config)
    err = float(outcome.worst_error)
    if outcome.passed is None:
        passed = bool(np.isfinite(err) and err <= thr)
    else:
        passed = bool(outcome.passed)
    kind = None
    if not passed:
        kind = "tolerance" if (chk.tol_kind is not None and err <= chk.default_threshold()) else "formula"
    return CheckResult(
        name=chk.name,
        anchor=chk.anchor,
        passed=passed,
        worst_error=err if np.isfinite(err) else None,
        samples=int(outcome.samples),
        tolerance=thr,
        failure_kind=kind,
        details=_jsonable(outcome.details),
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    return obj


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return max(1, min(4, os.cpu_count() or 1))
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def build_report(config: SuiteConfig, results: list[CheckResult]) -> dict:
    from . import __version__

    failed = [r.name for r in results if not r.passed]
    return {
        "tool": "rarita-kit",
        "version": __version__,
        "rng": RNG_NAME,
        "config": {"samples": int(config.samples), "tol_exact": config.tol_exact, "tol_fd": config.tol_fd, "seed": int(config.seed)},
        "summary": {
            "total": len(results),
            "passed": len(results) - len(failed),
            "failed": len(failed),
            "exit_code": EXIT_OK if not failed else EXIT_CHECK_FAILED,
            "failed_checks": failed,
        },
        "checks": [asdict(r) for r in results],
    }


def _meta_results(config: SuiteConfig, results: list[CheckResult]) -> list[CheckResult]:
    """Schema and exit-code self checks; computed over the report of the module checks."""
    placeholders = [CheckResult(name, "self check", True, 0.0, 0, 0.0, None, {}) for name in META_CHECKS]
    draft = build_report(config, sorted(results + placeholders, key=lambda r: r.name))
    errors = sorted(e.message for e in jsonschema.Draft202012Validator(REPORT_SCHEMA).iter_errors(draft))
    names = [r.name for r in results]
    schema_ok = not errors and len(set(names)) == len(names)
    fake_pass = [CheckResult("x.a", "", True, 0.0, 1, 1.0, None, {})]
    fake_fail = fake_pass + [CheckResult("x.b", "", False, 1.0, 1, 0.0, "formula", {})]
    contract = {
        "all_pass": exit_code_for(fake_pass) == EXIT_OK,
        "any_fail": exit_code_for(fake_fail) == EXIT_CHECK_FAILED,
        "distinct_codes": len({EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO}) == 4,
        "report_matches_results": draft["summary"]["exit_code"] == exit_code_for(results),
    }
    return [
        CheckResult(
            "cli.exit_code_contract",
            "exit status 0 iff every check passes; configuration and I/O errors have their own codes",
            all(contract.values()),
            0.0 if all(contract.values()) else 1.0,
            len(contract),
            0.0,
            None if all(contract.values()) else "formula",
            contract,
        ),
        CheckResult(
            "cli.report_schema",
            "the report validates against the documented schema with unique check names",
            schema_ok,
            float(len(errors)),
            1,
            0.0,
            None if schema_ok else "formula",
            {"schema_errors": errors[:10]},
        ),
    ]


def run_suite(config: SuiteConfig, names: list[str] | None = None, threads: int | None = None) -> dict:
    selected = sorted(names) if names is not None else sorted(REGISTRY)
    unknown = [n for n in selected if n not in REGISTRY]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}")
    workers = threads if threads is not None else thread_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda n: run_check(REGISTRY[n], config), selected))
    results = sorted(results + _meta_results(config, results), key=lambda r: r.name)
    return build_report(config, results)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def validate_report(report: dict) -> None:
    jsonschema.validate(report, REPORT_SCHEMA, cls=jsonschema.Draft202012Validator)


def write_report(report: dict, out_dir, filename: str = "verify_report.json") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / filename
    path.write_text(report_json(report))
    return path
