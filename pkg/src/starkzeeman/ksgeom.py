"""Kustaanheimo-Stiefel geometry: the map z -> conj(z) i z and its lift to T*H."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .quat import (
    as_quat,
    embed,
    exp_i,
    is_pure,
    mul_i,
    quat_conj,
    quat_dot,
    quat_mul,
    quat_norm,
    quat_norm2,
    to_complex_pair,
)

BL_TOL = 1e-9


@dataclass(frozen=True)
class PhasePoint:
    """Position and momentum in R^3 (pure quaternions)."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(3))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))


@dataclass(frozen=True)
class KSPhasePoint:
    """Point (z, w) of T*H."""

    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", as_quat(self.z).reshape(4))
        object.__setattr__(self, "w", as_quat(self.w).reshape(4))

    @property
    def bl(self) -> float:
        return float(bl(self.z, self.w))

    @property
    def physical(self) -> bool:
        scale = max(1.0, float(quat_norm(self.z) * quat_norm(self.w)))
        return abs(self.bl) <= BL_TOL * scale


def ks_map(z) -> np.ndarray:
    """Phi(z) = conj(z) i z, returned as a (..., 3) pure quaternion."""
    z = np.asarray(z, dtype=float)
    z0, z1, z2, z3 = np.moveaxis(z, -1, 0)
    return np.stack(
        [
            z0 * z0 + z1 * z1 - z2 * z2 - z3 * z3,
            2.0 * (z1 * z2 - z0 * z3),
            2.0 * (z0 * z2 + z1 * z3),
        ],
        axis=-1,
    )


def ks_diff(z, v) -> np.ndarray:
    """dPhi(z) v = conj(v) i z + conj(z) i v, as (..., 3)."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    z0, z1, z2, z3 = np.moveaxis(z, -1, 0)
    v0, v1, v2, v3 = np.moveaxis(v, -1, 0)
    return 2.0 * np.stack(
        [
            z0 * v0 + z1 * v1 - z2 * v2 - z3 * v3,
            z1 * v2 + z2 * v1 - z0 * v3 - z3 * v0,
            z0 * v2 + z2 * v0 + z1 * v3 + z3 * v1,
        ],
        axis=-1,
    )


def ks_jacobian(z) -> np.ndarray:
    """Matrix of dPhi(z), shape (..., 3, 4)."""
    z = np.asarray(z, dtype=float)
    z0, z1, z2, z3 = np.moveaxis(z, -1, 0)
    rows = [
        [z0, z1, -z2, -z3],
        [-z3, z2, z1, -z0],
        [z2, z3, z0, z1],
    ]
    return 2.0 * np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def ks_diff_transpose(z, v) -> np.ndarray:
    """Adjoint of dPhi(z) applied to a pure v: -2 i z v."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] == (4,):
        if not np.all(is_pure(v)):
            raise ContractError("ks_diff_transpose needs a pure quaternion v")
        v = v[..., 1:]
    return -2.0 * mul_i(quat_mul(z, embed(v)))


def bl(z, w) -> np.ndarray:
    """BL(z, w) = Re(conj(z) i w)."""
    return quat_dot(z, mul_i(w))


def ks_lift(z, w) -> PhasePoint:
    """(q, p) = (conj(z) i z, conj(z) i w / (2|z|^2)).

    Raises DomainError at z = 0 and ContractError when BL(z, w) is not zero,
    since the momentum then has a scalar part.
    """
    z = as_quat(z).reshape(4)
    w = as_quat(w).reshape(4)
    q, p, b = ks_lift_arrays(z, w)
    scale = max(1.0, float(quat_norm(z) * quat_norm(w)))
    if abs(b) > BL_TOL * scale:
        raise ContractError(f"non-physical lift: BL = {float(b):.3e}")
    return PhasePoint(q, p)


def ks_lift_arrays(z, w):
    """Vectorized lift; returns (q, p, bl) where p drops the scalar part bl/(2|z|^2)."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    n2 = quat_norm2(z)
    if np.any(n2 == 0.0):
        raise DomainError("ks_lift undefined at z = 0")
    m = quat_mul(quat_conj(z), mul_i(w))
    p = m[..., 1:] / (2.0 * n2[..., None])
    return ks_map(z), p, m[..., 0]


def ks_momentum_lift(z, p) -> np.ndarray:
    """The covector w = -2 i z p with ks_lift(z, w) = (Phi(z), p) and BL = 0."""
    return ks_diff_transpose(z, p)


def fiber_rotate(theta, z, w=None):
    """Left multiplication by e^{i theta}; returns z' or (z', w')."""
    u = exp_i(theta)
    zr = quat_mul(u, z)
    if w is None:
        return zr
    return zr, quat_mul(u, w)


def ks_section(q) -> np.ndarray:
    """A preimage of q under the KS map with a fixed phase convention.

    The rotation taking q/|q| to i is built from axis and angle, the
    antipodal case uses the half turn about j.  The result is then rotated
    in the fiber so that z0 + i z1 is real positive (or z2 + i z3 when the
    first pair vanishes).
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] == (4,):
        q = q[..., 1:]
    r = np.linalg.norm(q, axis=-1)
    if np.any(r == 0.0):
        raise DomainError("ks_section undefined at q = 0")
    qh = q / r[..., None]
    # u with conj(u) i u = qh, i.e. u qh conj(u) = i
    axis = np.cross(qh, np.array([1.0, 0.0, 0.0]))
    s = np.linalg.norm(axis, axis=-1)
    c = qh[..., 0]
    ang = np.arctan2(s, c)
    safe = s > 1e-300
    ax = np.where(safe[..., None], axis / np.where(safe, s, 1.0)[..., None], 0.0)
    u = np.concatenate([np.cos(ang / 2)[..., None], np.sin(ang / 2)[..., None] * ax], axis=-1)
    anti = (~safe) & (c < 0)
    u = np.where(anti[..., None], np.array([0.0, 0.0, 1.0, 0.0]), u)
    z = np.sqrt(r)[..., None] * u
    return normalize_phase(z)


def fiber_phase(z) -> np.ndarray:
    """Angle theta with e^{-i theta} z having z0 + i z1 real positive (fallback z2 + i z3)."""
    c = to_complex_pair(z)
    a = np.abs(c[..., 0])
    scale = np.linalg.norm(np.asarray(z, dtype=float), axis=-1)
    use_u = a > 1e-12 * np.maximum(scale, 1e-300)
    return np.where(use_u, np.angle(c[..., 0]), np.angle(c[..., 1]))


def normalize_phase(z) -> np.ndarray:
    return fiber_rotate(-fiber_phase(z), z)
