"""Explicit geometry of W^mu (nonzero 3/2-spinors with mu = 0) and W_0 = W^mu / S^1.

W = ker c splits as W1 + W2 with

    W1 = {I* (x) Is - J* (x) Js},    W2 = {I* (x) Is - K* (x) Ks}.

Writing psi = w1(s1) + w2(s2), the zero set of mu is s2 = -i lam s1 (chart
``psi1_dominant``) or s1 = -i lam s2 (chart ``psi2_dominant``).  The dominant
spinor is stored as (a + b i, c + d i).

The circle acting on W^mu is psi -> psi diag(e^{i t}, e^{-i t}, e^{-i t}),
which rotates both s1 and s2 by e^{i t} and leaves lam fixed.  Scalar
multiplication by e^{i t} does not preserve W with this Clifford convention.

All functions broadcast over leading batch dimensions of the chart fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clifford_core import left_unit
from .spinor_hom import (
    clifford_contract,
    columnwise,
    hk_apply,
    inner,
    iota,
    moment_diff,
    moment_map,
    moment_norm,
    norm,
    to_real,
)

PSI1 = "psi1_dominant"
PSI2 = "psi2_dominant"
CHART_TOL = 1e-10


@dataclass(frozen=True)
class WmuChartPoint:
    a: np.ndarray | float
    b: np.ndarray | float
    c: np.ndarray | float
    d: np.ndarray | float
    lam: np.ndarray | float
    chart: np.ndarray | str = PSI1

    @classmethod
    def from_array(cls, arr, chart=PSI1) -> "WmuChartPoint":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3], arr[..., 4], chart)

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.a, self.b, self.c, self.d, self.lam), axis=-1).astype(float)

    def dominant(self) -> np.ndarray:
        a, b, c, d = np.broadcast_arrays(self.a, self.b, self.c, self.d)
        return np.stack([a + 1j * b, c + 1j * d], axis=-1)

    def radius_sq(self) -> np.ndarray:
        return np.asarray(self.a) ** 2 + np.asarray(self.b) ** 2 + np.asarray(self.c) ** 2 + np.asarray(self.d) ** 2


@dataclass(frozen=True)
class FrameBundle:
    d_a: np.ndarray
    d_b: np.ndarray
    d_c: np.ndarray
    d_d: np.ndarray
    d_lambda: np.ndarray
    killing: np.ndarray
    n: np.ndarray
    i_n: np.ndarray
    j_n: np.ndarray
    k_n: np.ndarray
    d_lambda_tilde: np.ndarray

    def tangent(self) -> list[np.ndarray]:
        return [self.d_a, self.d_b, self.d_c, self.d_d, self.d_lambda]

    def normal(self) -> list[np.ndarray]:
        return [self.n, self.i_n, self.j_n, self.k_n]

    def t_prime(self) -> list[np.ndarray]:
        return [self.i_n, self.j_n, self.k_n, self.d_lambda_tilde]


@dataclass(frozen=True)
class SymbolMatrix:
    m: np.ndarray
    det: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.det is None:
            object.__setattr__(self, "det", np.linalg.det(self.m))


def w1_element(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=complex)
    zero = np.zeros_like(s)
    return np.stack([left_unit("I", s), -left_unit("J", s), zero], axis=-1)


def w2_element(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=complex)
    zero = np.zeros_like(s)
    return np.stack([left_unit("I", s), zero, -left_unit("K", s)], axis=-1)


def w_compose(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    return w1_element(s1) + w2_element(s2)


def w_split(psi: np.ndarray, tol: float = CHART_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Recover (s1, s2) with psi = w1(s1) + w2(s2).

    Reads s1 off the J column and s2 off the K column.
    """
    psi = np.asarray(psi, dtype=complex)
    scale = np.maximum(1.0, norm(psi))
    if np.any(np.linalg.norm(clifford_contract(psi), axis=-1) > tol * scale):
        raise ValueError("input is not a 3/2-spinor: clifford contraction exceeds tolerance")
    s1 = np.stack([-np.conj(psi[..., 1, 1]), np.conj(psi[..., 0, 1])], axis=-1)
    s2 = np.stack([-1j * np.conj(psi[..., 1, 2]), 1j * np.conj(psi[..., 0, 2])], axis=-1)
    return s1, s2


def mu_kernel_matrix(s1: np.ndarray) -> np.ndarray:
    """Linear system in (a2, b2, c2, d2) expressing mu(w1(s1) + w2(s2)) = 0."""
    s1 = np.asarray(s1, dtype=complex)
    a, b, c, d = s1[..., 0].real, s1[..., 0].imag, s1[..., 1].real, s1[..., 1].imag
    rows = [
        [a, b, -c, -d],
        [c, d, a, b],
        [d, -c, -b, a],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def _chart_parts(p: WmuChartPoint) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = p.dominant()
    lam = np.asarray(p.lam, dtype=float)
    is2 = np.asarray(p.chart) == PSI2
    return s, lam, np.broadcast_to(is2, s.shape[:-1])


def _check_point(p: WmuChartPoint) -> None:
    if np.any(p.radius_sq() == 0.0):
        raise ValueError("chart degenerates at (a, b, c, d) = 0")
    charts = np.unique(np.asarray(p.chart))
    if not set(charts.tolist()) <= {PSI1, PSI2}:
        raise ValueError(f"unknown chart tag(s): {sorted(set(charts.tolist()) - {PSI1, PSI2})}")


def chart_embed(p: WmuChartPoint) -> np.ndarray:
    _check_point(p)
    s, lam, is2 = _chart_parts(p)
    other = -1j * lam[..., None] * s
    s1 = np.where(is2[..., None], other, s)
    s2 = np.where(is2[..., None], s, other)
    return w_compose(s1, s2)


def circle_action(theta, psi: np.ndarray) -> np.ndarray:
    """psi -> psi diag(e^{i t}, e^{-i t}, e^{-i t}), the S^1 acting on W^mu."""
    theta = np.asarray(theta, dtype=float)
    ph = np.exp(1j * theta)[..., None]
    diag = np.concatenate([ph, np.conj(ph), np.conj(ph)], axis=-1)
    return np.asarray(psi, dtype=complex) * diag[..., None, :]


def circle_generator(psi: np.ndarray) -> np.ndarray:
    return circle_action(0.0, psi) * np.array([1j, -1j, -1j])


def frame_at(p: WmuChartPoint) -> FrameBundle:
    _check_point(p)
    s, lam, is2 = _chart_parts(p)
    partials = []
    for k in range(4):
        unit = np.zeros(4)
        unit[k] = 1.0
        shape = s.shape[:-1]
        e = WmuChartPoint(*(np.full(shape, unit[j]) for j in range(4)), lam, p.chart)
        partials.append(_embed_unchecked(e))
    d_lam = np.where(is2[..., None, None], w1_element(-1j * s), w2_element(-1j * s))
    psi = chart_embed(p)
    n = iota((lam[..., None] + 1j) * s)
    return FrameBundle(
        d_a=partials[0],
        d_b=partials[1],
        d_c=partials[2],
        d_d=partials[3],
        d_lambda=d_lam,
        killing=circle_generator(psi),
        n=n,
        i_n=hk_apply("I", n),
        j_n=hk_apply("J", n),
        k_n=hk_apply("K", n),
        d_lambda_tilde=_residual_after_projection(d_lam, partials),
    )


def _embed_unchecked(p: WmuChartPoint) -> np.ndarray:
    s, lam, is2 = _chart_parts(p)
    other = -1j * lam[..., None] * s
    return w_compose(np.where(is2[..., None], other, s), np.where(is2[..., None], s, other))


def _residual_after_projection(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    gram = np.stack([np.stack([inner(x, y) for y in basis], axis=-1) for x in basis], axis=-2)
    rhs = np.stack([inner(x, v) for x in basis], axis=-1)
    coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return v - sum(coef[..., k, None, None] * basis[k] for k in range(len(basis)))


def normal_kernel_matrix(p: WmuChartPoint) -> np.ndarray:
    """Linear system in the spinor s for d mu(iota(s)) = 0 at chart_embed(p).

    Row r is half the r-th Pauli component of d mu(iota(s)), with the third
    row negated; the kernel is spanned by (lam + i) times the dominant spinor.
    """
    _check_point(p)
    a, b, c, d = (np.asarray(t, dtype=float) for t in (p.a, p.b, p.c, p.d))
    lam = np.asarray(p.lam, dtype=float)
    a, b, c, d, lam = np.broadcast_arrays(a, b, c, d, lam)
    rows = [
        [a + lam * b, b - lam * a, -c - lam * d, -d + lam * c],
        [c + lam * d, d - lam * c, a + lam * b, b - lam * a],
        [d - lam * c, -c - lam * d, -b + lam * a, a + lam * b],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def normal_spinor(p: WmuChartPoint) -> np.ndarray:
    s, lam, _ = _chart_parts(p)
    return (lam[..., None] + 1j) * s


def clifford_symbol(xi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Clifford multiplication by xi on the spinor factor of psi."""
    xi = np.asarray(xi, dtype=float)
    return sum(
        xi[..., k, None, None] * columnwise(lambda s, ax=ax: left_unit(ax, s), psi)
        for k, ax in enumerate("IJK")
    )


def orthonormalize(vectors: list[np.ndarray]) -> list[np.ndarray]:
    """Fixed-order Gram-Schmidt; keeps orientation continuous in the inputs."""
    out: list[np.ndarray] = []
    for v in vectors:
        for u in out:
            v = v - inner(v, u)[..., None, None] * u
        out.append(v / norm(v)[..., None, None])
    return out


def symbol_matrix(p: WmuChartPoint, xi) -> SymbolMatrix:
    """Clifford multiplication by xi from span{d_a..d_d} to T' = IN + JN + KN + span{d_lambda_tilde}.

    Both frames are orthonormalized.  The T' frame is ordered (IN, JN, KN, -d_lambda_tilde);
    the sign on the last vector fixes the orientation so that the determinant is positive.
    """
    frames = frame_at(p)
    domain = orthonormalize([frames.d_a, frames.d_b, frames.d_c, frames.d_d])
    target = orthonormalize([frames.i_n, frames.j_n, frames.k_n, -frames.d_lambda_tilde])
    images = [clifford_symbol(xi, e) for e in domain]
    m = np.stack([np.stack([inner(t, img) for img in images], axis=-1) for t in target], axis=-2)
    return SymbolMatrix(m)


def symbol_degenerate_covector(p: WmuChartPoint) -> np.ndarray:
    """The covector direction on which ``symbol_matrix`` vanishes identically.

    (0, lam, 1) in chart psi1_dominant and (0, 1, -lam) in psi2_dominant; these agree
    under the chart transition lam -> -1/lam.
    """
    _, lam, is2 = _chart_parts(p)
    one = np.ones_like(lam)
    first = np.stack([0 * lam, lam, one], axis=-1)
    second = np.stack([0 * lam, one, -lam], axis=-1)
    return np.where(is2[..., None], second, first)


def symbol_quadratic(p: WmuChartPoint, xi) -> np.ndarray:
    """Q(xi) with det symbol_matrix proportional to Q^2; Q vanishes only on the degenerate covector."""
    xi = np.asarray(xi, dtype=float)
    _, lam, is2 = _chart_parts(p)
    cross = np.where(is2, xi[..., 2] + lam * xi[..., 1], xi[..., 1] - lam * xi[..., 2])
    return (1 + lam**2) * xi[..., 0] ** 2 + cross**2


def symbol_det_orthonormal(p: WmuChartPoint, xi) -> np.ndarray:
    """Closed form of ``det symbol_matrix(p, xi)`` = Q(xi)^2 / ((9 / (2 sqrt 2)) (1 + lam^2)^2).

    Independent of (a, b, c, d) and of the chart.
    """
    lam = np.asarray(p.lam, dtype=float)
    return symbol_quadratic(p, xi) ** 2 / (SYMBOL_DET_CONSTANT * (1 + lam**2) ** 2)


# sqrt(27/8) * sqrt(3): |IN|^3 |d_lambda_tilde| / (|d_a|^4 (1 + lam^2)^2 r^4) in raw frames.
SYMBOL_DET_CONSTANT = 4.5 / np.sqrt(2.0)


def displayed_symbol_matrix(p: WmuChartPoint) -> SymbolMatrix:
    """Literal transcription of the published 4x4 symbol display (regression target)."""
    a, b, c, d, lam = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (p.a, p.b, p.c, p.d, p.lam)))
    l2 = lam**2
    rows = [
        [-2 * (l2 + 1) * b, 2 * (l2 + 1) * a, -2 * (l2 + 1) * d, 2 * (l2 + 1) * c],
        [
            2 * (2 * l2 + 1) * c - 2 * lam * d,
            -2 * (2 * l2 + 1) * d - 2 * lam * c,
            -2 * (2 * l2 + 1) * a + 2 * lam * b,
            2 * (2 * l2 + 1) * b + 2 * lam * a,
        ],
        [
            -2 * (l2 + 2) * d + 2 * lam * c,
            -2 * (l2 + 2) * c - 2 * lam * d,
            2 * (l2 + 2) * b - 2 * lam * a,
            2 * (l2 + 2) * a + 2 * lam * b,
        ],
        [a, b, c, d],
    ]
    m = np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
    return SymbolMatrix(m)


def displayed_det_closed_form(p: WmuChartPoint) -> np.ndarray:
    """2 r^4 (1 + lam^2)^2, the published determinant value."""
    lam = np.asarray(p.lam, dtype=float)
    return 2.0 * p.radius_sq() ** 2 * (1 + lam**2) ** 2


def displayed_det_normalization(p: WmuChartPoint) -> np.ndarray:
    """Frozen factor det(display) / closed form = 8 (1 + lam^2) (computed symbolically once)."""
    return 8.0 * (1 + np.asarray(p.lam, dtype=float) ** 2)


def quotient_project(psi: np.ndarray, tol: float = CHART_TOL) -> WmuChartPoint:
    """Gauge-fixed chart coordinates of the S^1-orbit through psi.

    The chart is psi1_dominant iff |s1| >= |s2|; the circle is then used to make the
    largest-magnitude component of the dominant spinor real and positive.
    """
    psi = np.asarray(psi, dtype=complex)
    scale = norm(psi)
    if np.any(scale == 0.0):
        raise ValueError("psi = 0 is excluded from W^mu")
    if np.any(moment_norm(moment_map(psi)) > tol * scale**2):
        raise ValueError("psi violates mu = 0 beyond tolerance")
    s1, s2 = w_split(psi, tol)
    use1 = np.linalg.norm(s1, axis=-1) >= np.linalg.norm(s2, axis=-1)
    dom = np.where(use1[..., None], s1, s2)
    oth = np.where(use1[..., None], s2, s1)
    lam = np.real(np.sum(np.conj(dom) * 1j * oth, axis=-1)) / np.sum(np.abs(dom) ** 2, axis=-1)
    k = np.argmax(np.abs(dom), axis=-1)
    pivot = np.take_along_axis(dom, k[..., None], axis=-1)
    dom = dom * np.exp(-1j * np.angle(pivot))
    chart = np.where(use1, PSI1, PSI2)
    if chart.ndim == 0:
        chart = str(chart)
    return WmuChartPoint(dom[..., 0].real, dom[..., 0].imag, dom[..., 1].real, dom[..., 1].imag, lam, chart)


def tangent_rank_profile(p: WmuChartPoint, rel_tol: float = 1e-10) -> tuple[int, int, int]:
    """Ranks of the tangent frame, the normal frame and their union (single point)."""
    f = frame_at(p)

    def rank(vs):
        sv = np.linalg.svd(np.stack([to_real(v) for v in vs]), compute_uv=False)
        return int(np.sum(sv > rel_tol * sv[0]))

    return rank(f.tangent()), rank(f.normal()), rank(f.tangent() + f.normal())


def normal_in_kernel(p: WmuChartPoint) -> np.ndarray:
    """|d mu(n)| at chart_embed(p); zero when n is tangent to the level set."""
    return moment_norm(moment_diff(chart_embed(p), frame_at(p).n))
