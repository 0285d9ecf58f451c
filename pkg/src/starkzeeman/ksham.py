"""Kustaanheimo-Stiefel regularization of time-independent systems.

K_c(z, w) = |w|^2/8 + |z|^2 (E(q) - c + |A(q)|^2/2) - <conj(z) i w, A(q)>/2 - k,  q = Phi(z),
which equals |q| (H_A - c) on the physical sector BL = 0.  The flow uses the
canonical equations z' = dK/dw, w' = -dK/dz and physical time dt = |z|^2 dtau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, DomainError, NumericalError, UnsupportedError
from .flow import RegularizedTrajectory
from .ksgeom import (
    BL_TOL,
    PhasePoint,
    bl,
    ks_diff_transpose,
    ks_lift_arrays,
    ks_map,
    ks_momentum_lift,
    ks_section,
)
from .quat import embed, mul_i, quat_conj, quat_mul, quat_norm, quat_norm2
from .systems import StarkZeemanSystem


@dataclass(frozen=True)
class KSRegConfig:
    energy: float
    bl_tolerance: float = BL_TOL

    def __post_init__(self):
        if not self.bl_tolerance > 0:
            raise ConfigError("bl_tolerance must be positive")


def _require_autonomous(sys: StarkZeemanSystem):
    if sys.time_dependent:
        raise UnsupportedError("KS regularization needs a time-independent system")


def ks_hamiltonian(sys: StarkZeemanSystem, cfg: KSRegConfig, z, w) -> np.ndarray:
    _require_autonomous(sys)
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    q = ks_map(z)
    a = sys.vector_potential(q)
    e = sys.electric(0.0, q)
    m = quat_mul(quat_conj(z), mul_i(w))[..., 1:]
    g = e - cfg.energy + 0.5 * np.sum(a * a, axis=-1)
    return (0.125 * quat_norm2(w) + quat_norm2(z) * g - 0.5 * np.sum(m * a, axis=-1)
            - sys.coulomb)


def ks_gradients(sys: StarkZeemanSystem, cfg: KSRegConfig, z, w):
    """(dK/dz, dK/dw)."""
    _require_autonomous(sys)
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    q = ks_map(z)
    a = sys.vector_potential(q)
    jac = sys.vector_potential_jacobian(q)
    e = sys.electric(0.0, q)
    ge = sys.electric_grad(0.0, q)
    m = quat_mul(quat_conj(z), mul_i(w))[..., 1:]
    g = e - cfg.energy + 0.5 * np.sum(a * a, axis=-1)
    jta = np.einsum("...ji,...j->...i", jac, a)
    jtm = np.einsum("...ji,...j->...i", jac, m)
    ea = embed(a)
    dz = (2.0 * g[..., None] * z
          + quat_norm2(z)[..., None] * ks_diff_transpose(z, ge + jta)
          + 0.5 * mul_i(quat_mul(w, ea))
          - 0.5 * ks_diff_transpose(z, jtm))
    dw = 0.25 * w + 0.5 * mul_i(quat_mul(z, ea))
    return dz, dw


def project_physical(z, w, bl_tolerance: float = BL_TOL, eps: float = 0.0) -> PhasePoint:
    """Physical state of (z, w); rejects collisions and states off BL = 0."""
    z = np.asarray(z, dtype=float)
    nz = float(quat_norm(z))
    if nz <= eps or nz == 0.0:
        raise DomainError("z is at the collision; no physical state")
    b = float(bl(z, w))
    scale = max(1.0, nz * float(quat_norm(w)))
    if abs(b) > bl_tolerance * scale:
        raise DomainError(f"non-physical KS state: BL = {b:.3e}")
    q, p, _ = ks_lift_arrays(z, w)
    return PhasePoint(q, p)


def integrate_ks(sys: StarkZeemanSystem, cfg: KSRegConfig, z0, w0, span, tol: float = 1e-10,
                 t_eval=None) -> RegularizedTrajectory:
    """Flow of K_c in R^8 together with physical time."""
    _require_autonomous(sys)
    z0 = np.asarray(z0, dtype=float).reshape(4)
    w0 = np.asarray(w0, dtype=float).reshape(4)
    k0 = float(ks_hamiltonian(sys, cfg, z0, w0))
    if abs(k0) > 1e-8:
        raise ConfigError(f"initial state is off the zero level: K_c = {k0:.3e}")
    b0 = float(bl(z0, w0))
    if abs(b0) > cfg.bl_tolerance * max(1.0, float(quat_norm(z0) * quat_norm(w0))):
        raise ConfigError(f"initial state violates BL = 0: BL = {b0:.3e}")

    def rhs(tau, y):
        z, w = y[:4], y[4:8]
        dz, dw = ks_gradients(sys, cfg, z, w)
        return np.concatenate([dw, -dz, [z @ z]])

    sol = solve_ivp(rhs, span, np.concatenate([z0, w0, [0.0]]), method="DOP853", rtol=tol,
                    atol=tol, t_eval=t_eval, dense_output=True)
    if sol.status == -1:
        raise NumericalError(f"KS integration failed: {sol.message}",
                             {"tau": float(sol.t[-1]), "y": sol.y[:, -1].tolist()})
    z, w = sol.y[:4].T, sol.y[4:8].T
    kc = ks_hamiltonian(sys, cfg, z, w)
    bls = bl(z, w)
    drift = float(np.max(np.abs(bls - b0)))
    if drift > 100 * cfg.bl_tolerance * max(1.0, float(np.max(quat_norm(z) * quat_norm(w)))):
        raise NumericalError("trajectory left the physical sector", {"bl_drift": drift})
    nz = quat_norm(z)
    ok = nz > 1e-6 * nz.max()
    q = np.full((z.shape[0], 3), np.nan)
    p = np.full((z.shape[0], 3), np.nan)
    qq, pp, _ = ks_lift_arrays(z[ok], w[ok])
    q[ok], p[ok] = qq, pp
    meta = {"method": "DOP853", "tolerance": tol, "steps": int(sol.t.size - 1), "nfev": int(sol.nfev),
            "energy": cfg.energy}
    return RegularizedTrajectory(sol.t, np.hstack([z, w]), sol.y[8], q, p, {"Kc": kc, "BL": bls}, meta,
                                 ("z0", "z1", "z2", "z3", "w0", "w1", "w2", "w3"))


def ks_initial_state(q, p):
    """Lift a physical state to (z, w) on BL = 0 using the fixed section."""
    z = ks_section(q)
    return z, ks_momentum_lift(z, p)

