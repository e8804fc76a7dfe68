"""Quaternions, 2-component spinors and the Clifford action of Cl(3).

Conventions fixed here are used by every other module:

* Hamilton product with ``I*J = K``, ``J*K = I``, ``K*I = J``.
* ``q = a + bI + cJ + dK`` is identified with the spinor ``(a + b i, c + d i)``.
  The complex scalar ``i`` on C^2 is therefore left multiplication by ``I``.
* The Clifford action of an imaginary quaternion ``v`` on a spinor is left
  multiplication by ``v`` transported through that identification.  It is
  real-linear; the ``J`` and ``K`` parts are conjugate-linear over C.

Array functions accept arbitrary leading batch dimensions: quaternions are
``(..., 4)`` real arrays, imaginary quaternions ``(..., 3)`` and spinors
``(..., 2)`` complex arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AXES = ("I", "J", "K")


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "Quaternion":
        w, x, y, z = (float(t) for t in np.asarray(arr, dtype=float))
        return cls(w, x, y, z)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def conj(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return quat_mul(self, other)

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(self.as_array() + other.as_array())


@dataclass(frozen=True)
class ImQuaternion:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def as_quaternion(self) -> Quaternion:
        return Quaternion(0.0, self.x, self.y, self.z)


ONE = Quaternion(1.0)
QI = Quaternion(0.0, 1.0)
QJ = Quaternion(0.0, 0.0, 1.0)
QK = Quaternion(0.0, 0.0, 0.0, 1.0)


def quat_mul_arrays(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Batched Hamilton product of ``(..., 4)`` arrays."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=-1,
    )


def quat_mul(p, q):
    """Hamilton product.  Dataclass inputs give a dataclass, arrays give arrays."""
    if isinstance(p, Quaternion) and isinstance(q, Quaternion):
        return Quaternion.from_array(quat_mul_arrays(p.as_array(), q.as_array()))
    return quat_mul_arrays(_qarr(p), _qarr(q))


def quat_to_spinor(q) -> np.ndarray:
    """``a + bI + cJ + dK`` to ``(a + b i, c + d i)``."""
    arr = _qarr(q)
    return arr[..., 0::2] + 1j * arr[..., 1::2]


def spinor_to_quat(s, as_dataclass: bool = False):
    s = np.asarray(s, dtype=complex)
    arr = np.stack([s[..., 0].real, s[..., 0].imag, s[..., 1].real, s[..., 1].imag], axis=-1)
    if as_dataclass:
        return Quaternion.from_array(arr)
    return arr


def left_unit(axis: str, s: np.ndarray) -> np.ndarray:
    """Left multiplication by the unit ``axis`` on spinors ``(..., 2)``."""
    z1, z2 = s[..., 0], s[..., 1]
    if axis == "I":
        return 1j * s
    if axis == "J":
        return np.stack([-np.conj(z2), np.conj(z1)], axis=-1)
    if axis == "K":
        return np.stack([-1j * np.conj(z2), 1j * np.conj(z1)], axis=-1)
    raise ValueError(f"unknown axis {axis!r}")


def right_unit(axis: str, s: np.ndarray) -> np.ndarray:
    """Right multiplication by the unit ``axis``; complex-linear on C^2."""
    z1, z2 = s[..., 0], s[..., 1]
    if axis == "I":
        return np.stack([1j * z1, -1j * z2], axis=-1)
    if axis == "J":
        return np.stack([-z2, z1], axis=-1)
    if axis == "K":
        return np.stack([1j * z2, 1j * z1], axis=-1)
    raise ValueError(f"unknown axis {axis!r}")


def clifford_act(v, s) -> np.ndarray:
    """Clifford multiplication of the imaginary quaternion ``v`` on spinor ``s``."""
    v = _imarr(v)
    s = np.asarray(s, dtype=complex)
    out = 0
    for k, axis in enumerate(AXES):
        out = out + v[..., k, None] * left_unit(axis, s)
    return out


def clifford_matrix(v) -> np.ndarray:
    """The real 4x4 matrix of ``clifford_act(v, .)`` in the basis (1, I, J, K)."""
    cols = [spinor_to_quat(clifford_act(v, quat_to_spinor(e))) for e in np.eye(4)]
    return np.stack(cols, axis=-1)


def _qarr(q) -> np.ndarray:
    if isinstance(q, Quaternion):
        return q.as_array()
    if isinstance(q, ImQuaternion):
        return q.as_quaternion().as_array()
    return np.asarray(q, dtype=float)


def _imarr(v) -> np.ndarray:
    if isinstance(v, ImQuaternion):
        return v.as_array()
    if isinstance(v, Quaternion):
        if v.w != 0.0:
            raise ValueError("Clifford action needs an imaginary quaternion")
        return v.as_array()[1:]
    return np.asarray(v, dtype=float)
