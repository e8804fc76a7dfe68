"""Literal reference matrices used to pin sign conventions.

Each function transcribes a closed-form 2x3 (or 3x4) matrix exactly as it is
commonly displayed for this construction, in the dominant-chart coordinates
(a, b, c, d, lam).  Several of the normal-frame displays contain sign slips;
the test suite records which ones the library reproduces and which it cannot.
Inputs are scalars or broadcastable arrays.
"""

from __future__ import annotations

import numpy as np


def _m(rows):
    return np.stack([np.stack(np.broadcast_arrays(*r), axis=-1) for r in rows], axis=-2).astype(complex)


def iota_display(a, b, c, d):
    return _m([[-b + a * 1j, -c + d * 1j, -d - c * 1j], [-d + c * 1j, a - b * 1j, b + a * 1j]])


def w1_display(a, b, c, d):
    z = 0 * np.asarray(a, dtype=float)
    return _m([[-b + a * 1j, c - d * 1j, z], [-d + 1j * c, -a + b * 1j, z]])


def w_display(a1, b1, c1, d1, a2, b2, c2, d2):
    return _m(
        [
            [-(b1 + b2) + (a1 + a2) * 1j, c1 - d1 * 1j, d2 + c2 * 1j],
            [-(d1 + d2) + (c1 + c2) * 1j, -a1 + b1 * 1j, -b2 - a2 * 1j],
        ]
    )


def chart_display(a, b, c, d, lam):
    return _m(
        [
            [-(b - lam * a) + (a + lam * b) * 1j, c - d * 1j, -lam * c + lam * d * 1j],
            [-(d - lam * c) + (c + lam * d) * 1j, -a + b * 1j, lam * a - lam * b * 1j],
        ]
    )


def frame_display(a, b, c, d, lam):
    z = 0 * np.asarray(lam, dtype=float)
    one = z + 1
    return {
        "d_a": _m([[lam + 1j, z, z], [z, -one, lam]]),
        "d_b": _m([[-1 + lam * 1j, z, z], [z, 1j * one, -lam * 1j]]),
        "d_c": _m([[z, one, -lam], [lam + 1j, z, z]]),
        "d_d": _m([[z, -1j * one, lam * 1j], [-1 + lam * 1j, z, z]]),
        "d_lambda": _m([[a + b * 1j + z, z, -c + d * 1j + z], [c + d * 1j + z, z, a - b * 1j + z]]),
    }


def killing_display(a, b, c, d, lam):
    return _m(
        [
            [-b * lam - a + (-b + a * lam) * 1j, -d - c * 1j, lam * d + lam * c * 1j],
            [-lam * d - c + (-d + lam * c) * 1j, b + a * 1j, -lam * b - lam * a * 1j],
        ]
    )


def moment_test_directions(a, b, c, d):
    """Three tangent directions whose d mu images are linearly independent."""
    z = 0 * np.asarray(a, dtype=float)
    return [
        _m([[-b + a * 1j, z, -d + c * 1j], [d - c * 1j, z, -b - a * 1j]]),
        _m([[-d + c * 1j, z, b + a * 1j], [-b + a * 1j, z, -d - c * 1j]]),
        _m([[c + d * 1j, z, a - b * 1j], [-a - b * 1j, z, c - d * 1j]]),
    ]


def normal_system_display(a, b, c, d, lam):
    """As displayed, including the (3, 4) entry ``-a + lam b``."""
    rows = [
        [a + lam * b, b - lam * a, -c - lam * d, -d + lam * c],
        [c + lam * d, d - lam * c, a + lam * b, b - lam * a],
        [d - lam * c, -c - lam * d, -b + lam * a, -a + lam * b],
    ]
    return np.stack([np.stack(np.broadcast_arrays(*r), axis=-1) for r in rows], axis=-2).astype(float)


def normal_solution_display(a, b, c, d, lam):
    return np.stack(np.broadcast_arrays(-b + lam * a, a + lam * b, -d + lam * c, c + lam * d), axis=-1)


def normal_frame_display(a, b, c, d, lam):
    """N, IN, JN, KN as displayed (the stray subscript in one entry read as c)."""
    i = 1j
    return {
        "n": _m(
            [
                [-a - lam * b + i * (-b + lam * a), d - lam * c + i * (c - lam * d), -c - lam * d + i * (-d + lam * c)],
                [-c - lam * d + i * (-d + lam * c), -b + lam * a + i * (-a - lam * b), a + lam * b + i * (-b + lam * a)],
            ]
        ),
        "i_n": _m(
            [
                [b - lam * a + i * (a + lam * b), -c - lam * d + i * (d - lam * c), -d + lam * c + i * (c + lam * d)],
                [d - lam * c + i * (-c - lam * d), a + lam * b + i * (-b + lam * a), b - lam * a + i * (a + lam * b)],
            ]
        ),
        "j_n": _m(
            [
                [c + lam * d + i * (-d + lam * c), b - lam * a + i * (a + lam * b), -a - lam * b + i * (-b + lam * a)],
                [-a - lam * b + i * (b - lam * a), d - lam * c + i * (c + lam * d), -c - lam * d + i * (-d + lam * c)],
            ]
        ),
        "k_n": _m(
            [
                [d - lam * c + i * (c + lam * d), a + lam * b + i * (b - lam * a), b - lam * a + i * (a + lam * b)],
                [-b - lam * a + i * (-a - lam * b), c + lam * d + i * (d - lam * c), d - lam * c + i * (-c - lam * d)],
            ]
        ),
    }


def d_lambda_tilde_display(a, b, c, d, lam):
    return _m(
        [
            [a + lam * b + 1j * (b - lam * a), -lam * c + 1j * lam * d, -c + 1j * d],
            [c + lam * d + 1j * (d - lam * c), lam * a - 1j * lam * b, a - 1j * b],
        ]
    )
