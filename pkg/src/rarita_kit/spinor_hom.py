"""The spinor-hom space S = Hom(C (x) Im H, H) as 2x3 complex matrices.

Column ``k`` of a SpinorHom is its value on the k-th basis covector (I, J, K);
rows are the two spinor components.  Batched arrays have shape ``(..., 2, 3)``.

The real inner product is ``(A, B) = 1/2 Re tr(A B*)``.  Under it
``|iota(s)|^2 = 3/2 |s|^2`` where ``|s|^2`` is the Euclidean norm on C^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .clifford_core import AXES, left_unit, right_unit

# |iota(s)|^2 / |s|^2 for the half-trace inner product (brute-force checked in tests).
IOTA_NORM_SQ = 1.5


def columnwise(f: Callable[[np.ndarray], np.ndarray], psi: np.ndarray) -> np.ndarray:
    """Apply a spinor map to every column of ``psi``."""
    cols = np.swapaxes(np.asarray(psi, dtype=complex), -1, -2)
    return np.swapaxes(f(cols), -1, -2)


def inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * np.real(np.sum(a * np.conj(b), axis=(-2, -1)))


def norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(inner(a, a))


def hermitian_pairing(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``1/2 tr(a b*)``."""
    return 0.5 * np.sum(a * np.conj(b), axis=(-2, -1))


def to_real(psi: np.ndarray) -> np.ndarray:
    """Real 12-vector whose Euclidean product is the SpinorHom inner product."""
    psi = np.asarray(psi, dtype=complex)
    flat = psi.reshape(psi.shape[:-2] + (6,))
    return np.sqrt(0.5) * np.concatenate([flat.real, flat.imag], axis=-1)


def from_real(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float) / np.sqrt(0.5)
    return (v[..., :6] + 1j * v[..., 6:]).reshape(v.shape[:-1] + (2, 3))


def real_matrix(op: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """12x12 matrix of a real-linear map on S in the ``to_real`` coordinates."""
    basis = from_real(np.eye(12))
    return to_real(op(basis)).T


def clifford_contract(psi: np.ndarray) -> np.ndarray:
    """c(psi) = sum_k e_k . psi(e_k)."""
    psi = np.asarray(psi, dtype=complex)
    return sum(left_unit(ax, psi[..., :, k]) for k, ax in enumerate(AXES))


def iota(s: np.ndarray) -> np.ndarray:
    """iota(s) = I* (x) Is + J* (x) Js + K* (x) Ks."""
    s = np.asarray(s, dtype=complex)
    return np.stack([left_unit(ax, s) for ax in AXES], axis=-1)


def iota_adjoint(psi: np.ndarray) -> np.ndarray:
    """Adjoint of ``iota`` for the half-trace product on S and Re<,> on C^2."""
    return -0.5 * clifford_contract(psi)


def iota_component(psi: np.ndarray) -> np.ndarray:
    """The spinor s with ``iota(s)`` the orthogonal projection of psi onto iota(H)."""
    return iota_adjoint(psi) / IOTA_NORM_SQ


def project_threehalf(psi: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto W = ker c."""
    psi = np.asarray(psi, dtype=complex)
    return psi - iota(iota_component(psi))


def hk_apply(which: str, psi: np.ndarray) -> np.ndarray:
    """Hyperkahler structure: right multiplication of the H-factor by the conjugate unit.

    ``hk_apply(I) hk_apply(J) = hk_apply(K)``; each map is complex-linear, an
    isometry, and preserves both W and iota(H).
    """
    return columnwise(lambda s: -right_unit(which, s), psi)


def hk_combination(v: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """``v_1 I_S + v_2 J_S + v_3 K_S`` applied to psi (v broadcast over batch)."""
    v = np.asarray(v, dtype=float)
    return sum(v[..., k, None, None] * hk_apply(ax, psi) for k, ax in enumerate(AXES))


@dataclass(frozen=True)
class HyperkahlerTriple:
    i_s: Callable[[np.ndarray], np.ndarray]
    j_s: Callable[[np.ndarray], np.ndarray]
    k_s: Callable[[np.ndarray], np.ndarray]


HK_TRIPLE = HyperkahlerTriple(
    i_s=lambda psi: hk_apply("I", psi),
    j_s=lambda psi: hk_apply("J", psi),
    k_s=lambda psi: hk_apply("K", psi),
)


def moment_map(psi: np.ndarray) -> np.ndarray:
    """mu(psi) = psi psi* - 1/2 tr(psi psi*) id."""
    psi = np.asarray(psi, dtype=complex)
    m = psi @ np.conj(np.swapaxes(psi, -1, -2))
    return _traceless(m)


def moment_diff(psi: np.ndarray, h: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    h = np.asarray(h, dtype=complex)
    m = psi @ np.conj(np.swapaxes(h, -1, -2))
    return _traceless(m + np.conj(np.swapaxes(m, -1, -2)))


def moment_norm(m: np.ndarray) -> np.ndarray:
    """Half-trace norm on 2x2 matrices, so the Pauli matrices are orthonormal."""
    return np.sqrt(0.5 * np.real(np.sum(m * np.conj(m), axis=(-2, -1))))


def _traceless(m: np.ndarray) -> np.ndarray:
    tr = m[..., 0, 0] + m[..., 1, 1]
    out = m.copy()
    out[..., 0, 0] -= 0.5 * tr
    out[..., 1, 1] -= 0.5 * tr
    return out
