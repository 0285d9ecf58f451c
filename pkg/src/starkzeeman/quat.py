"""Quaternion algebra on numpy arrays.

A quaternion z0 + z1 i + z2 j + z3 k is stored as the last axis of an array of
shape (..., 4).  Purely imaginary quaternions are stored as (..., 3) arrays and
embedded on demand.  All functions broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PURE_TOL = 1e-10

ONE = np.array([1.0, 0.0, 0.0, 0.0])
I = np.array([0.0, 1.0, 0.0, 0.0])
J = np.array([0.0, 0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 0.0, 1.0])


def as_quat(a) -> np.ndarray:
    """Return `a` as a float array with quaternion last axis, embedding 3-vectors."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1:] == (3,):
        return embed(a)
    if a.shape[-1:] != (4,):
        raise ValueError(f"expected trailing axis of length 3 or 4, got shape {a.shape}")
    return a


def embed(v) -> np.ndarray:
    """Embed a pure quaternion (..., 3) into (..., 4) with zero scalar part."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (4,))
    out[..., 1:] = v
    return out


def pure_part(z) -> np.ndarray:
    """Imaginary part of z as (..., 3)."""
    return np.asarray(z, dtype=float)[..., 1:]


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a*b."""
    a = as_quat(a)
    b = as_quat(b)
    a0, a1, a2, a3 = np.moveaxis(a, -1, 0)
    b0, b1, b2, b3 = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ],
        axis=-1,
    )


def quat_conj(a) -> np.ndarray:
    a = as_quat(a)
    out = -a
    out[..., 0] = a[..., 0]
    return out


def quat_norm2(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.sum(a * a, axis=-1)


def quat_norm(a) -> np.ndarray:
    return np.sqrt(quat_norm2(a))


def quat_dot(a, b) -> np.ndarray:
    """Euclidean inner product Re(conj(a) b) on the last axis."""
    return np.sum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float), axis=-1)


def mul_i(z) -> np.ndarray:
    """Left multiplication by i, a cheap special case used everywhere."""
    z = np.asarray(z, dtype=float)
    return np.stack([-z[..., 1], z[..., 0], -z[..., 3], z[..., 2]], axis=-1)


def exp_i(theta) -> np.ndarray:
    """e^{i theta} as a quaternion array."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape + (4,))
    out[..., 0] = np.cos(theta)
    out[..., 1] = np.sin(theta)
    return out


def is_pure(z, tol: float = PURE_TOL) -> np.ndarray:
    """Scalar part below tol, scaled by |z| once |z| exceeds one."""
    z = as_quat(z)
    scale = np.maximum(1.0, quat_norm(z))
    return np.abs(z[..., 0]) <= tol * scale


def left_matrix(a) -> np.ndarray:
    """4x4 matrix L with L @ b == quat_mul(a, b)."""
    a = as_quat(a)
    a0, a1, a2, a3 = np.moveaxis(a, -1, 0)
    rows = [
        [a0, -a1, -a2, -a3],
        [a1, a0, -a3, a2],
        [a2, a3, a0, -a1],
        [a3, -a2, a1, a0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def right_matrix(b) -> np.ndarray:
    """4x4 matrix R with R @ a == quat_mul(a, b)."""
    b = as_quat(b)
    b0, b1, b2, b3 = np.moveaxis(b, -1, 0)
    rows = [
        [b0, -b1, -b2, -b3],
        [b1, b0, b3, -b2],
        [b2, -b3, b0, b1],
        [b3, b2, -b1, b0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def to_complex_pair(z) -> np.ndarray:
    """Write z = u + v j with complex u = z0 + i z1, v = z2 + i z3; returns (..., 2) complex."""
    z = np.asarray(z, dtype=float)
    return np.stack([z[..., 0] + 1j * z[..., 1], z[..., 2] + 1j * z[..., 3]], axis=-1)


def from_complex_pair(c) -> np.ndarray:
    c = np.asarray(c)
    return np.stack([c[..., 0].real, c[..., 0].imag, c[..., 1].real, c[..., 1].imag], axis=-1)


@dataclass(frozen=True)
class Quaternion:
    """Scalar quaternion value for readable one-off computations."""

    re: float
    im: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        vals = (self.re, *self.im)
        if len(self.im) != 3 or not np.all(np.isfinite(vals)):
            raise ValueError("quaternion components must be four finite reals")
        object.__setattr__(self, "re", float(self.re))
        object.__setattr__(self, "im", tuple(float(x) for x in self.im))

    @classmethod
    def from_array(cls, a) -> Quaternion:
        a = as_quat(a)
        return cls(a[0], (a[1], a[2], a[3]))

    def to_array(self) -> np.ndarray:
        return np.array([self.re, *self.im])

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Quaternion.from_array(self.to_array() * other)
        return Quaternion.from_array(quat_mul(self.to_array(), _arr(other)))

    def __rmul__(self, other):
        return self * other

    def __add__(self, other):
        return Quaternion.from_array(self.to_array() + _arr(other))

    def __sub__(self, other):
        return Quaternion.from_array(self.to_array() - _arr(other))

    def __neg__(self):
        return Quaternion.from_array(-self.to_array())

    def conj(self) -> Quaternion:
        return Quaternion(self.re, tuple(-x for x in self.im))

    def norm(self) -> float:
        return float(quat_norm(self.to_array()))


@dataclass(frozen=True)
class PureQuaternion:
    """Element of the imaginary quaternions, identified with R^3."""

    im: tuple[float, float, float]

    def __post_init__(self):
        if len(self.im) != 3 or not np.all(np.isfinite(self.im)):
            raise ValueError("pure quaternion needs three finite reals")
        object.__setattr__(self, "im", tuple(float(x) for x in self.im))

    def to_array(self) -> np.ndarray:
        return np.array(self.im)

    def as_quaternion(self) -> Quaternion:
        return Quaternion(0.0, self.im)


def _arr(x) -> np.ndarray:
    if isinstance(x, (Quaternion,)):
        return x.to_array()
    if isinstance(x, PureQuaternion):
        return embed(x.to_array())
    return as_quat(x)
