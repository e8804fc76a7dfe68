"""Periodic cubic lattice discretization on the flat 3-torus.

Fields are stored as numpy arrays with three leading site axes:

* SpinorHomField values: ``(n, n, n, 2, 3)`` complex
* U1Connection components: ``(n, n, n, 3)`` real, ``a[..., k]`` living on the
  link from x to x + e_k

The U(1) gauge group acts on the spinor factor by right multiplication by
``exp(theta I)``, i.e. ``diag(e^{i theta}, e^{-i theta})`` on the two spinor
rows.  This is the circle that commutes with the Clifford action, so the Dirac
operator is gauge covariant and symmetric.  Parallel transport uses link
variables ``U_k(x) = exp(h a_k(x) I)``; to first order in h the covariant
derivative is the central difference plus ``a_k`` times the generator.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clifford_core import AXES, left_unit
from .moduli import (
    WmuChartPoint,
    chart_embed,
    frame_at,
    orthonormalize,
    quotient_project,
)
from .spinor_hom import clifford_contract, columnwise, inner, moment_map, project_threehalf

# Hermitian images of I, J, K: -i times right multiplication by the unit.
SIGMA = np.array(
    [
        [[1, 0], [0, -1]],
        [[0, 1j], [-1j, 0]],
        [[0, 1], [1, 0]],
    ],
    dtype=complex,
)

MODES = ("rssw", "blowup", "degenerate")


@dataclass(frozen=True)
class LatticeGeometry:
    n: int
    h: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 4, got {self.n}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")

    @classmethod
    def from_length(cls, n: int, length: float) -> "LatticeGeometry":
        return cls(n, length / n)

    @property
    def length(self) -> float:
        return self.n * self.h

    @property
    def volume_element(self) -> float:
        return self.h**3

    def coordinates(self) -> np.ndarray:
        """Site positions, shape ``(n, n, n, 3)``."""
        x = np.arange(self.n) * self.h
        return np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class SpinorHomField:
    geometry: LatticeGeometry
    value: np.ndarray

    def __post_init__(self):
        n = self.geometry.n
        if self.value.shape != (n, n, n, 2, 3):
            raise ValueError(f"spinor-hom field must have shape {(n, n, n, 2, 3)}, got {self.value.shape}")
        if not np.all(np.isfinite(self.value)):
            raise ValueError("spinor-hom field has non-finite entries")

    def with_value(self, value: np.ndarray) -> "SpinorHomField":
        return SpinorHomField(self.geometry, value)


@dataclass(frozen=True)
class U1Connection:
    geometry: LatticeGeometry
    a: np.ndarray

    def __post_init__(self):
        n = self.geometry.n
        if self.a.shape != (n, n, n, 3):
            raise ValueError(f"connection must have shape {(n, n, n, 3)}, got {self.a.shape}")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("connection has non-finite entries")

    @classmethod
    def zero(cls, geometry: LatticeGeometry) -> "U1Connection":
        n = geometry.n
        return cls(geometry, np.zeros((n, n, n, 3)))


@dataclass(frozen=True)
class Residuals:
    rs_residual: float
    curvature_residual: float
    kerc_residual: float
    l4_constraint: float

    def as_dict(self) -> dict:
        return {
            "rs_residual": self.rs_residual,
            "curvature_residual": self.curvature_residual,
            "kerc_residual": self.kerc_residual,
            "l4_constraint": self.l4_constraint,
        }


def _same_geometry(*objs) -> LatticeGeometry:
    geom = objs[0].geometry
    for o in objs[1:]:
        if o.geometry != geom:
            raise ValueError(f"geometry mismatch: {geom} vs {o.geometry}")
    return geom


def shift(arr: np.ndarray, k: int, step: int) -> np.ndarray:
    """``shift(f, k, +1)(x) = f(x + e_k)``."""
    return np.roll(arr, -step, axis=k)


def gauge_phase(theta: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Right multiplication of the spinor factor by exp(theta I)."""
    ph = np.exp(1j * np.asarray(theta))[..., None]
    return np.asarray(psi, dtype=complex) * np.concatenate([ph, np.conj(ph)], axis=-1)[..., None]


def forward_gradient(geometry: LatticeGeometry, theta: np.ndarray) -> np.ndarray:
    """Lattice-exact d theta on links: (theta(x + e_k) - theta(x)) / h."""
    return np.stack([(shift(theta, k, 1) - theta) / geometry.h for k in range(3)], axis=-1)


def gauge_transform(
    theta: np.ndarray, a: U1Connection, psi: SpinorHomField
) -> tuple[U1Connection, SpinorHomField]:
    """(A, psi) -> (A - d theta, exp(theta I) psi); every residual is built to be invariant."""
    geom = _same_geometry(a, psi)
    return (
        U1Connection(geom, a.a - forward_gradient(geom, theta)),
        psi.with_value(gauge_phase(theta, psi.value)),
    )


def covariant_derivative(a: U1Connection, f: SpinorHomField) -> list[np.ndarray]:
    geom = _same_geometry(a, f)
    h = geom.h
    out = []
    for k in range(3):
        link = h * a.a[..., k]
        fwd = gauge_phase(link, shift(f.value, k, 1))
        bwd = gauge_phase(-shift(link, k, -1), shift(f.value, k, -1))
        out.append((fwd - bwd) / (2 * h))
    return out


def clifford_field(k: int, value: np.ndarray) -> np.ndarray:
    """Clifford action of the k-th coordinate covector on the spinor factor."""
    return columnwise(lambda s: left_unit(AXES[k], s), value)


def dirac_twisted(a: U1Connection, f: SpinorHomField) -> SpinorHomField:
    nabla = covariant_derivative(a, f)
    return f.with_value(sum(clifford_field(k, nabla[k]) for k in range(3)))


def kerc_violation(f: SpinorHomField) -> float:
    return l2_norm_spinor(f.geometry, clifford_contract(f.value))


def rarita_schwinger(
    a: U1Connection, f: SpinorHomField, *, tol: float = 1e-10, variant: str = "pi_d"
) -> SpinorHomField:
    """Q_A = pi o D on inputs in ker c.  ``variant='pi_d_pi'`` also projects the input first."""
    if variant not in ("pi_d", "pi_d_pi"):
        raise ValueError(f"unknown variant {variant!r}")
    scale = max(1.0, l2_norm(f.geometry, f.value))
    if kerc_violation(f) > tol * scale:
        raise ValueError("rarita_schwinger input is not in ker c")
    if variant == "pi_d_pi":
        f = f.with_value(project_threehalf(f.value))
    return f.with_value(project_threehalf(dirac_twisted(a, f).value))


_CYCLIC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def _fwd(geometry: LatticeGeometry, g: np.ndarray, k: int) -> np.ndarray:
    return (shift(g, k, 1) - g) / geometry.h


def _fwd_adjoint(geometry: LatticeGeometry, g: np.ndarray, k: int) -> np.ndarray:
    return (shift(g, k, -1) - g) / geometry.h


def _clover(g: np.ndarray, i: int, j: int, step: int) -> np.ndarray:
    """Average over the four plaquettes of the (i, j)-plane touching a site (step=-1) or its adjoint (step=+1)."""
    gi = shift(g, i, step)
    return 0.25 * (g + gi + shift(g, j, step) + shift(gi, j, step))


def curl(geometry: LatticeGeometry, a: np.ndarray) -> np.ndarray:
    """Site-centred curl: clover average of plaquette curvatures.

    Plaquettes are built from link differences, so the curl of a lattice
    gradient vanishes identically.
    """
    out = []
    for _, i, j in _CYCLIC:
        plaq = _fwd(geometry, a[..., j], i) - _fwd(geometry, a[..., i], j)
        out.append(_clover(plaq, i, j, -1))
    return np.stack(out, axis=-1)


def curl_adjoint(geometry: LatticeGeometry, w: np.ndarray) -> np.ndarray:
    out = np.zeros(w.shape[:-1] + (3,))
    for k, i, j in _CYCLIC:
        u = _clover(w[..., k], i, j, +1)
        out[..., j] += _fwd_adjoint(geometry, u, i)
        out[..., i] -= _fwd_adjoint(geometry, u, j)
    return out


def to_moment(v: np.ndarray) -> np.ndarray:
    return np.einsum("...k,kij->...ij", np.asarray(v, dtype=float), SIGMA)


def from_moment(m: np.ndarray) -> np.ndarray:
    """Inverse of ``to_moment`` on traceless hermitian matrices."""
    return 0.5 * np.real(np.einsum("...ij,kji->...k", m, SIGMA))


def curvature_star(a: U1Connection) -> np.ndarray:
    return to_moment(curl(a.geometry, a.a))


def l2_norm(geometry: LatticeGeometry, value: np.ndarray) -> float:
    """L^2 norm with the half-trace pointwise norm (SpinorHom and MomentValue fields)."""
    return float(np.sqrt(geometry.volume_element * 0.5 * np.sum(np.abs(value) ** 2)))


def l2_norm_spinor(geometry: LatticeGeometry, value: np.ndarray) -> float:
    return float(np.sqrt(geometry.volume_element * np.sum(np.abs(value) ** 2)))


def l2_inner(geometry: LatticeGeometry, u: np.ndarray, v: np.ndarray) -> float:
    return float(geometry.volume_element * np.sum(inner(u, v)))


def l4_norm(f: SpinorHomField) -> float:
    pointwise_sq = 0.5 * np.sum(np.abs(f.value) ** 2, axis=(-2, -1))
    return float((f.geometry.volume_element * np.sum(pointwise_sq**2)) ** 0.25)


def curvature_term(a: U1Connection, psi: SpinorHomField, epsilon: float | None, mode: str) -> np.ndarray:
    mu = moment_map(psi.value)
    if mode == "degenerate":
        return -mu
    scale = 1.0 if mode == "rssw" else epsilon**2
    return scale * curvature_star(a) - mu


def residuals(a: U1Connection, psi: SpinorHomField, epsilon: float = 0.0, mode: str = "blowup") -> Residuals:
    geom = _same_geometry(a, psi)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if epsilon is not None and epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    q = project_threehalf(dirac_twisted(a, psi).value)
    return Residuals(
        rs_residual=l2_norm(geom, q),
        curvature_residual=l2_norm(geom, curvature_term(a, psi, epsilon, mode)),
        kerc_residual=kerc_violation(psi),
        l4_constraint=abs(l4_norm(psi) - 1.0),
    )


def fueter_map(b: U1Connection, phi: WmuChartPoint) -> SpinorHomField:
    """The (unprojected) Fueter operator: Dirac operator applied to the lifted section."""
    return dirac_twisted(b, SpinorHomField(b.geometry, chart_embed(phi)))


def fueter_linearization(b: U1Connection, phi: WmuChartPoint, v: np.ndarray) -> SpinorHomField:
    """D applied to the variation d(chart_embed)_phi(v), v of shape (n, n, n, 5)."""
    fr = frame_at(phi)
    lift = sum(v[..., k, None, None] * t for k, t in enumerate(fr.tangent()))
    return dirac_twisted(b, SpinorHomField(b.geometry, lift))


def t_prime_coefficients(phi: WmuChartPoint, value: np.ndarray) -> np.ndarray:
    fr = frame_at(phi)
    basis = orthonormalize([fr.i_n, fr.j_n, fr.k_n, -fr.d_lambda_tilde])
    return np.stack([inner(t, value) for t in basis], axis=-1)


def fueter_residual(b: U1Connection, phi: WmuChartPoint) -> float:
    coef = t_prime_coefficients(phi, fueter_map(b, phi).value)
    return float(np.sqrt(b.geometry.volume_element * np.sum(coef**2)))


def haydys_forward(a: U1Connection, psi: SpinorHomField) -> tuple[U1Connection, WmuChartPoint]:
    """Induced Fueter data: B = A and the gauge-fixed quotient section."""
    return a, quotient_project(psi.value)


def haydys_backward(b: U1Connection, phi: WmuChartPoint, normalize: bool = True) -> tuple[U1Connection, SpinorHomField]:
    psi = SpinorHomField(b.geometry, chart_embed(phi))
    if normalize:
        psi = psi.with_value(psi.value / l4_norm(psi))
    return b, psi


# --- checkpoints -----------------------------------------------------------

MAGIC = b"RKFIELD\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIIdII")
_KINDS = {"spinor_hom": (1, (2, 3)), "u1_connection": (2, (3,)), "moment": (3, (2, 2))}
_KIND_BY_CODE = {code: (name, shape) for name, (code, shape) in _KINDS.items()}


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, geometry: LatticeGeometry, kind: str, values: np.ndarray, metadata: dict | None = None) -> Path:
    """Header (magic, version, n, h, kind, per-site count) then little-endian complex128 data.

    A JSON sidecar ``<path>.meta.json`` carries free-form metadata.
    """
    if kind not in _KINDS:
        raise CheckpointError(f"unknown field kind {kind!r}")
    code, site_shape = _KINDS[kind]
    n = geometry.n
    expected = (n, n, n) + site_shape
    values = np.asarray(values)
    if values.shape != expected:
        raise CheckpointError(f"{kind} values must have shape {expected}, got {values.shape}")
    path = Path(path)
    count = int(np.prod(site_shape))
    payload = np.ascontiguousarray(values, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, float(geometry.h), code, count))
        fh.write(payload.tobytes(order="C"))
    meta = {"kind": kind, "n": n, "h": float(geometry.h), "version": VERSION}
    meta.update(metadata or {})
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_checkpoint(path) -> tuple[LatticeGeometry, str, np.ndarray, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, n, h, code, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if code not in _KIND_BY_CODE:
        raise CheckpointError(f"{path}: unknown field kind code {code}")
    kind, site_shape = _KIND_BY_CODE[code]
    if count != int(np.prod(site_shape)):
        raise CheckpointError(f"{path}: per-site count {count} does not match kind {kind}")
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != n**3 * count:
        raise CheckpointError(f"{path}: expected {n**3 * count} values, found {body.size}")
    values = body.reshape((n, n, n) + site_shape).astype(complex)
    if kind == "u1_connection":
        values = values.real.copy()
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return LatticeGeometry(n, h), kind, values, meta
