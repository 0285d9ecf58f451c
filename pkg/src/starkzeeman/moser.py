"""Moser regularization: switch (q, p) -> (x, y) = (-p, q), then lift through the
inverse stereographic projection to T*S^3, where |q| (H - c) extends smoothly
across collisions (the north pole of the base sphere).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, NumericalError, UnsupportedError
from .flow import RegularizedTrajectory
from .ksgeom import PhasePoint
from .systems import StarkZeemanSystem


@dataclass(frozen=True)
class MoserState:
    """Base point on S^3 and a cofiber covector orthogonal to it."""

    base: np.ndarray
    cofiber: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).reshape(4))
        object.__setattr__(self, "cofiber", np.asarray(self.cofiber, dtype=float).reshape(4))

    def constraint_error(self) -> float:
        return max(abs(self.base @ self.base - 1.0), abs(self.base @ self.cofiber))


def encode_arrays(q, p):
    """Vectorized encoding; returns (xi, eta) with trailing axis 4."""
    x = -np.asarray(p, dtype=float)
    y = np.asarray(q, dtype=float)
    r2 = np.sum(x * x, axis=-1)[..., None]
    xy = np.sum(x * y, axis=-1)[..., None]
    xi = np.concatenate([2 * x / (1 + r2), (r2 - 1) / (1 + r2)], axis=-1)
    eta = np.concatenate([0.5 * (1 + r2) * y - xy * x, xy], axis=-1)
    return xi, eta


def decode_arrays(xi, eta):
    """Inverse of encode_arrays away from the north pole; returns (q, p)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    s = (1.0 - xi[..., 3])[..., None]
    x = xi[..., :3] / s
    y = eta[..., :3] * s + eta[..., 3:] * xi[..., :3]
    return y, -x


def moser_encode(x: PhasePoint) -> MoserState:
    xi, eta = encode_arrays(x.q, x.p)
    return MoserState(xi, eta)


def moser_decode(s: MoserState) -> PhasePoint:
    if s.base[3] >= 1.0:
        raise ConfigError("the north pole encodes a collision; no physical state")
    q, p = decode_arrays(s.base, s.cofiber)
    return PhasePoint(q, p)


def project(xi, eta):
    """Nearest point on the constraint set |xi| = 1, <xi, eta> = 0."""
    xi = xi / np.linalg.norm(xi, axis=-1, keepdims=True)
    eta = eta - np.sum(xi * eta, axis=-1, keepdims=True) * xi
    return xi, eta


def _require_autonomous(sys: StarkZeemanSystem):
    if sys.time_dependent:
        raise UnsupportedError("Moser regularization needs a time-independent system")


def _parts(sys, c, xi, eta):
    xt = xi[..., :3]
    s = 1.0 - xi[..., 3]
    a = np.linalg.norm(eta, axis=-1)
    q = s[..., None] * eta[..., :3] + eta[..., 3:] * xt
    av = sys.vector_potential(q)
    g = 0.5 * np.sum(av * av, axis=-1) + sys.electric(0.0, q) - c
    return xt, s, a, q, av, g


def moser_hamiltonian(sys: StarkZeemanSystem, c: float, s) -> np.ndarray:
    """Smooth extension of |q| (H_A - c) to T*S^3.

    On the constraint set, with s = 1 - xi4, a = |eta| and q = s eta~ + eta4 xi~:
        H_M = a (1 + xi4)/2 + a <xi~, A(q)> + a s (|A|^2/2 + E - c) - k.
    """
    _require_autonomous(sys)
    if isinstance(s, MoserState):
        xi, eta = s.base, s.cofiber
    else:
        xi, eta = s
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    xt, sv, a, q, av, g = _parts(sys, c, xi, eta)
    return (0.5 * a * (1 + xi[..., 3]) + a * np.sum(xt * av, axis=-1) + a * sv * g
            - sys.coulomb)


def moser_gradients(sys: StarkZeemanSystem, c: float, xi, eta):
    """Ambient gradients (dH/dxi, dH/deta) of the extension above."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    xt, s, a, q, av, g = _parts(sys, c, xi, eta)
    jac = sys.vector_potential_jacobian(q)
    grad_g = np.einsum("...ji,...j->...i", jac, av) + sys.electric_grad(0.0, q)
    # gradient in q of a <xi~, A(q)> + a s G(q)
    gq = a[..., None] * np.einsum("...ji,...j->...i", jac, xt) + (a * s)[..., None] * grad_g
    d_xt = a[..., None] * av + eta[..., 3:] * gq
    d_x4 = 0.5 * a - a * g - np.sum(eta[..., :3] * gq, axis=-1)
    bracket = 0.5 * (1 + xi[..., 3]) + np.sum(xt * av, axis=-1) + s * g
    d_eta = (eta / a[..., None]) * bracket[..., None]
    d_eta = d_eta + np.concatenate([s[..., None] * gq, np.sum(xt * gq, axis=-1)[..., None]], axis=-1)
    return np.concatenate([d_xt, d_x4[..., None]], axis=-1), d_eta


def moser_vector_field(sys: StarkZeemanSystem, c: float, xi, eta):
    """Hamiltonian field on T*S^3 in the ambient chart, with Dirac multipliers
    keeping |xi| = 1 and <xi, eta> = 0."""
    hx, he = moser_gradients(sys, c, xi, eta)
    l2 = -np.sum(xi * he, axis=-1, keepdims=True)
    l1 = np.sum(he * eta, axis=-1, keepdims=True) - np.sum(xi * hx, axis=-1, keepdims=True)
    return he + l2 * xi, -hx - l1 * xi - l2 * eta


def integrate_moser(sys: StarkZeemanSystem, c: float, s0: MoserState, span, tol: float = 1e-10,
                    t_eval=None, segments: int = 20) -> RegularizedTrajectory:
    """Flow of H_M in the fictitious time tau with dt/dtau = |q|.

    The span is split into `segments` pieces; the state is projected back onto
    the constraint set between them and the largest pre-projection violation is
    reported as meta["constraint_drift"].
    """
    _require_autonomous(sys)
    h0 = float(moser_hamiltonian(sys, c, s0))
    if abs(h0) > 1e-8:
        raise ConfigError(f"initial state is off the zero level: H_M = {h0:.3e}")
    t0, t1 = map(float, span)
    edges = np.linspace(t0, t1, segments + 1)
    if t_eval is None:
        t_eval = np.linspace(t0, t1, 20 * segments + 1)
    t_eval = np.asarray(t_eval, dtype=float)

    def rhs(tau, y):
        xi, eta = y[:4], y[4:8]
        dxi, deta = moser_vector_field(sys, c, xi, eta)
        s = 1.0 - xi[3]
        q = s * eta[:3] + eta[3] * xi[:3]
        return np.concatenate([dxi, deta, [np.linalg.norm(q)]])

    y = np.concatenate([s0.base, s0.cofiber, [0.0]])
    taus, ys = [], []
    drift = 0.0
    nfev = 0
    for k in range(segments):
        a, b = edges[k], edges[k + 1]
        last = k == segments - 1
        sel = t_eval[(t_eval >= a) & ((t_eval <= b) if last else (t_eval < b))]
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=tol, atol=tol,
                        t_eval=np.union1d(sel, [b]))
        if sol.status == -1:
            raise NumericalError(f"Moser integration failed: {sol.message}", {"tau": float(sol.t[-1])})
        nfev += sol.nfev
        keep = np.isin(sol.t, sel)
        taus.append(sol.t[keep])
        ys.append(sol.y.T[keep])
        yb = sol.y[:, -1]
        xi, eta = yb[:4], yb[4:8]
        drift = max(drift, abs(xi @ xi - 1.0), abs(xi @ eta))
        xi, eta = project(xi, eta)
        y = np.concatenate([xi, eta, yb[8:]])
    tau = np.concatenate(taus)
    ya = np.vstack(ys)
    xi, eta = project(ya[:, :4], ya[:, 4:8])
    hm = moser_hamiltonian(sys, c, (xi, eta))
    q = np.full((tau.size, 3), np.nan)
    p = np.full((tau.size, 3), np.nan)
    ok = xi[:, 3] < 1.0 - 1e-12
    q[ok], p[ok] = decode_arrays(xi[ok], eta[ok])
    meta = {"method": "DOP853", "tolerance": tol, "nfev": int(nfev), "energy": c,
            "constraint_drift": float(drift)}
    return RegularizedTrajectory(tau, np.hstack([xi, eta]), ya[:, 8], q, p, {"HM": hm}, meta,
                                 ("xi1", "xi2", "xi3", "xi4", "eta1", "eta2", "eta3", "eta4"))
