"""Stark-Zeeman systems: Coulomb attraction, a magnetic one-form A and an electric potential E_t.

Newton's equation reads  q'' = B(q) q' - grad V_t(q)  with  V_t = -k/|q| + E_t  and
B_ij = dA_j/dq_i - dA_i/dq_j.  The Coulomb strength k is 1 except for the
restricted problems, where the regularized body has mass mu.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq, root

from .errors import ConfigError, DomainError, NumericalError, UnsupportedError
from .ksgeom import PhasePoint

Field = Callable[[object, np.ndarray], np.ndarray]
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TimeDependentGauge:
    """The same physics written with a time-dependent primitive A_t.

    H = 1/2 |p - A_t(q)|^2 - k/|q| + W_t(q).  Used to test gauge invariance.
    """

    vector_potential: Callable[[float, np.ndarray], np.ndarray]
    vector_potential_jacobian: Callable[[float, np.ndarray], np.ndarray]
    electric: Callable[[float, np.ndarray], np.ndarray]
    electric_grad: Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StarkZeemanSystem:
    """Fields of a Stark-Zeeman system.

    electric(t, q), electric_grad(t, q) and electric_tdot(t, q) accept q of shape
    (..., 3) and t broadcastable to q.shape[:-1].  vector_potential(q) returns the
    one-form coefficients and vector_potential_jacobian(q) the matrix dA_i/dq_j.
    """

    name: str
    electric: Field
    electric_grad: Field
    electric_tdot: Field
    vector_potential: Callable[[np.ndarray], np.ndarray]
    vector_potential_jacobian: Callable[[np.ndarray], np.ndarray]
    domain: Callable[[np.ndarray], np.ndarray]
    coulomb: float = 1.0
    time_dependent: bool = False
    params: dict = field(default_factory=dict, compare=False)
    td_gauge: TimeDependentGauge | None = field(default=None, compare=False)

    def magnetic(self, q) -> np.ndarray:
        jac = self.vector_potential_jacobian(np.asarray(q, dtype=float))
        return np.swapaxes(jac, -1, -2) - jac

    def potential(self, t, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return -self.coulomb / np.linalg.norm(q, axis=-1) + self.electric(t, q)

    def potential_grad(self, t, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        r = np.linalg.norm(q, axis=-1)[..., None]
        return self.coulomb * q / r**3 + self.electric_grad(t, q)


def _zeros_scalar(t, q):
    return np.zeros(np.shape(q)[:-1])


def _zeros_vec(t, q):
    return np.zeros(np.shape(q))


def _everywhere(q):
    return np.ones(np.shape(q)[:-1], dtype=bool)


def _zero_potential(q):
    return np.zeros(np.shape(q))


def _zero_jac(q):
    return np.zeros(np.shape(q) + (3,))


def _rotation_potential(c: float, shift: float):
    """A = (-c x2, c x1 + shift, 0), the Coriolis one-form of a rotating frame."""

    def a(q):
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape)
        out[..., 0] = -c * q[..., 1]
        out[..., 1] = c * q[..., 0] + shift
        return out

    jac0 = np.zeros((3, 3))
    jac0[0, 1] = -c
    jac0[1, 0] = c

    def jac(q):
        return np.broadcast_to(jac0, np.shape(q) + (3,)).copy()

    return a, jac


def kepler() -> StarkZeemanSystem:
    return StarkZeemanSystem(
        "kepler", _zeros_scalar, _zeros_vec, _zeros_scalar, _zero_potential, _zero_jac, _everywhere
    )


def rkp() -> StarkZeemanSystem:
    """Rotating Kepler problem with planar centrifugal term -(x1^2 + x2^2)/2."""

    def e(t, q):
        q = np.asarray(q, dtype=float)
        return -0.5 * (q[..., 0] ** 2 + q[..., 1] ** 2)

    def ge(t, q):
        q = np.asarray(q, dtype=float)
        out = -q.copy()
        out[..., 2] = 0.0
        return out

    a, jac = _rotation_potential(1.0, 0.0)
    return StarkZeemanSystem("rkp", e, ge, _zeros_scalar, a, jac, _everywhere)


def _ball_domain(radius: float, exclusion: float):
    def dom(q):
        q = np.asarray(q, dtype=float)
        r = np.linalg.norm(q, axis=-1)
        rb = np.sqrt((q[..., 0] + 1.0) ** 2 + q[..., 1] ** 2 + q[..., 2] ** 2)
        return (r < radius) & (rb > exclusion)

    return dom


def _cr3bp_l1(mu: float) -> float:
    """Position on the x-axis of the collinear point between the primaries."""

    def dv(x):
        # derivative along x of V for q = (x, 0, 0), -1 < x < 0
        a1 = 1.0 - mu
        return mu * np.sign(x) / x**2 - (x + a1) + (1.0 - mu) * np.sign(x + 1.0) / (x + 1.0) ** 2

    return brentq(dv, -1.0 + 1e-9, -1e-9, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def cr3bp(mu: float = 0.01, domain_radius: float | None = None,
          exclusion_radius: float | None = None) -> StarkZeemanSystem:
    """Restricted three-body problem centred at the body of mass mu."""
    mu = float(mu)
    if not 0.0 < mu < 1.0:
        raise ConfigError(f"cr3bp needs 0 < mu < 1, got {mu}")
    a1 = 1.0 - mu

    def e(t, q):
        q = np.asarray(q, dtype=float)
        rb = np.sqrt((q[..., 0] + 1.0) ** 2 + q[..., 1] ** 2 + q[..., 2] ** 2)
        return -0.5 * ((q[..., 0] + a1) ** 2 + q[..., 1] ** 2) - (1.0 - mu) / rb

    def ge(t, q):
        q = np.asarray(q, dtype=float)
        d = q.copy()
        d[..., 0] += 1.0
        rb = np.linalg.norm(d, axis=-1)[..., None]
        out = (1.0 - mu) * d / rb**3
        out[..., 0] -= q[..., 0] + a1
        out[..., 1] -= q[..., 1]
        return out

    a, jac = _rotation_potential(1.0, a1)
    dom, params = _restricted_domain(mu, domain_radius, exclusion_radius)
    params["mu"] = mu
    return StarkZeemanSystem("cr3bp", e, ge, _zeros_scalar, a, jac, dom, coulomb=mu, params=params)


def _restricted_domain(mu, domain_radius, exclusion_radius):
    xl1 = _cr3bp_l1(mu)
    rad = abs(xl1) if domain_radius is None else float(domain_radius)
    exc = (1.0 - abs(xl1)) if exclusion_radius is None else float(exclusion_radius)
    if rad <= 0 or exc < 0:
        raise ConfigError("domain radii must be positive")
    return _ball_domain(rad, exc), {"domain_radius": rad, "exclusion_radius": exc}


def bcr4bp(mu: float = 0.01, m_s: float = 0.05, omega_b2: float = 0.1, omega_r: float = TWO_PI,
           nu: float = 0.1, l: float = 3.0, alpha: float = 0.0, domain_radius: float | None = None,
           exclusion_radius: float | None = None) -> StarkZeemanSystem:
    """Bicircular restricted four-body problem in the time-independent gauge.

    A(x) = (-(w+1) x2, (w+1) x1 + a1, 0) with w = omega_b2, which differs from the
    physical primitive A_t by the gradient of
        f_t(x) = w nu sin(th) x1 + w (a1 - nu cos(th)) x2,   th = omega_r t + alpha.
    The electric potential carries the compensating term d f_t / dt.
    """
    mu, m_s, w, wr, nu, l, alpha = map(float, (mu, m_s, omega_b2, omega_r, nu, l, alpha))
    if not 0.0 < mu < 1.0:
        raise ConfigError(f"bcr4bp needs 0 < mu < 1, got {mu}")
    if m_s < 0.0 or l <= 0.0:
        raise ConfigError("bcr4bp needs m_s >= 0 and l > 0")
    ncyc = wr / TWO_PI
    if abs(ncyc - round(ncyc)) > 1e-9:
        raise ConfigError("omega_r must be an integer multiple of 2 pi so that E_t is 1-periodic")
    a1 = 1.0 - mu
    c = w + 1.0

    def theta(t):
        return wr * np.asarray(t, dtype=float) + alpha

    def a_t(t, q):
        q = np.asarray(q, dtype=float)
        th = theta(t)
        out = np.zeros(np.broadcast_shapes(q.shape, np.shape(th) + (3,)))
        out[..., 0] = -c * q[..., 1] + w * nu * np.sin(th)
        out[..., 1] = c * (q[..., 0] + a1) - w * nu * np.cos(th)
        return out

    def a_t_dot(t, q):
        th = theta(t)
        out = np.zeros(np.broadcast_shapes(np.shape(q), np.shape(th) + (3,)))
        out[..., 0] = w * nu * wr * np.cos(th)
        out[..., 1] = w * nu * wr * np.sin(th)
        return out

    def sun_offset(t, q):
        q = np.asarray(q, dtype=float)
        th = theta(t)
        d = np.array(np.broadcast_to(q, np.broadcast_shapes(q.shape, np.shape(th) + (3,))))
        d[..., 0] += a1 - l * np.cos(th)
        d[..., 1] -= l * np.sin(th)
        return d

    def sun_velocity(t):
        th = theta(t)
        return np.stack([-l * wr * np.sin(th), l * wr * np.cos(th), np.zeros_like(th)], axis=-1)

    def primary_b(q):
        d = np.array(q, dtype=float)
        d[..., 0] += 1.0
        return d

    def w_t(t, q):
        """Electric potential in the time-dependent gauge (no Coulomb term)."""
        at = a_t(t, q)
        rb = np.linalg.norm(primary_b(q), axis=-1)
        rs = np.linalg.norm(sun_offset(t, q), axis=-1)
        return -0.5 * np.sum(at * at, axis=-1) - (1.0 - mu) / rb - m_s / rs

    def w_t_grad(t, q):
        at = a_t(t, q)
        db = primary_b(q)
        ds = sun_offset(t, q)
        rb = np.linalg.norm(db, axis=-1)[..., None]
        rs = np.linalg.norm(ds, axis=-1)[..., None]
        g = (1.0 - mu) * db / rb**3 + m_s * ds / rs**3
        g = g + np.zeros_like(at)
        # grad of -|A_t|^2/2 is -J^T A_t with J = [[0,-c,0],[c,0,0],[0,0,0]]
        g[..., 0] -= c * at[..., 1]
        g[..., 1] += c * at[..., 0]
        return g

    def w_t_dot(t, q):
        at = a_t(t, q)
        ds = sun_offset(t, q)
        rs = np.linalg.norm(ds, axis=-1)
        sv = sun_velocity(t)
        return -np.sum(at * a_t_dot(t, q), axis=-1) - m_s * np.sum(ds * sv, axis=-1) / rs**3

    def df_dt(t, q):
        q = np.asarray(q, dtype=float)
        th = theta(t)
        return w * nu * wr * (np.cos(th) * q[..., 0] + np.sin(th) * q[..., 1])

    def df_dt_grad(t, q):
        th = theta(t)
        out = np.zeros(np.broadcast_shapes(np.shape(q), np.shape(th) + (3,)))
        out[..., 0] = w * nu * wr * np.cos(th)
        out[..., 1] = w * nu * wr * np.sin(th)
        return out

    def df_dt_dot(t, q):
        q = np.asarray(q, dtype=float)
        th = theta(t)
        return w * nu * wr**2 * (-np.sin(th) * q[..., 0] + np.cos(th) * q[..., 1])

    def e(t, q):
        return w_t(t, q) + df_dt(t, q)

    def ge(t, q):
        return w_t_grad(t, q) + df_dt_grad(t, q)

    def edot(t, q):
        return w_t_dot(t, q) + df_dt_dot(t, q)

    a, jac = _rotation_potential(c, a1)
    jac_t = _rotation_potential(c, 0.0)[1]
    dom, params = _restricted_domain(mu, domain_radius, exclusion_radius)
    params.update(mu=mu, m_s=m_s, omega_b2=w, omega_r=wr, nu=nu, l=l, alpha=alpha)
    gauge = TimeDependentGauge(a_t, lambda t, q: jac_t(q), w_t, w_t_grad)
    return StarkZeemanSystem("bcr4bp", e, ge, edot, a, jac, dom, coulomb=mu, time_dependent=True,
                             params=params, td_gauge=gauge)


BUILTINS = {"kepler": kepler, "rkp": rkp, "cr3bp": cr3bp, "bcr4bp": bcr4bp}


def builtin_system(name: str, params: dict | None = None, **kwargs) -> StarkZeemanSystem:
    if name not in BUILTINS:
        raise ConfigError(f"unknown system {name!r}; choose from {sorted(BUILTINS)}")
    p = dict(params or {})
    p.update(kwargs)
    try:
        return BUILTINS[name](**p)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None


def load_system(spec) -> StarkZeemanSystem:
    """From a JSON file path, a dict {"name", "params"} or a builtin name."""
    if isinstance(spec, dict):
        return builtin_system(spec.get("name", ""), spec.get("params", {}))
    path = Path(str(spec))
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise ConfigError(f"system file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid system JSON: {exc}") from None
        return load_system(data)
    return builtin_system(str(spec))


def richardson_gradient(f: Callable[[np.ndarray], np.ndarray], q: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences at h and h/2 combined by Richardson extrapolation."""
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape)
    for i in range(q.shape[-1]):
        e = np.zeros(q.shape[-1])
        e[i] = 1.0
        d1 = (f(q + h * e) - f(q - h * e)) / (2 * h)
        d2 = (f(q + 0.5 * h * e) - f(q - 0.5 * h * e)) / h
        out[..., i] = (4 * d2 - d1) / 3
    return out


def custom_system(name: str, electric: Field, vector_potential=None, *, electric_grad=None,
                  electric_tdot=None, vector_potential_jacobian=None, domain=None,
                  coulomb: float = 1.0, time_dependent: bool = False, fd_step: float = 1e-6) -> StarkZeemanSystem:
    """Build a system from callables; missing derivatives fall back to Richardson differences."""
    if vector_potential is None:
        vector_potential = _zero_potential
        if vector_potential_jacobian is None:
            vector_potential_jacobian = _zero_jac
    if electric_grad is None:
        def electric_grad(t, q):
            return richardson_gradient(lambda x: electric(t, x), q, fd_step)
    if electric_tdot is None:
        if time_dependent:
            def electric_tdot(t, q):
                d1 = (electric(t + fd_step, q) - electric(t - fd_step, q)) / (2 * fd_step)
                d2 = (electric(t + fd_step / 2, q) - electric(t - fd_step / 2, q)) / fd_step
                return (4 * d2 - d1) / 3
        else:
            electric_tdot = _zeros_scalar
    if vector_potential_jacobian is None:
        def vector_potential_jacobian(q):
            q = np.asarray(q, dtype=float)
            cols = [richardson_gradient(lambda x, i=i: vector_potential(x)[..., i], q, fd_step) for i in range(3)]
            return np.stack(cols, axis=-2)
    return StarkZeemanSystem(name, electric, electric_grad, electric_tdot, vector_potential,
                             vector_potential_jacobian, domain or _everywhere, coulomb=coulomb,
                             time_dependent=time_dependent)


def magnetic_matrix(sys: StarkZeemanSystem, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if not np.all(sys.domain(q)):
        raise DomainError(f"q outside the domain of {sys.name}")
    return sys.magnetic(q)


def hamiltonian(sys: StarkZeemanSystem, t: float, x: PhasePoint, gauge: str = "coupled") -> float:
    """1/2|p|^2 + V (twisted) or 1/2|p - A(q)|^2 + V (coupled)."""
    q, p = x.q, x.p
    if np.linalg.norm(q) == 0.0:
        raise DomainError("the Hamiltonian is singular at q = 0")
    if gauge == "coupled":
        v = p - sys.vector_potential(q)
    elif gauge == "twisted":
        v = p
    else:
        raise ConfigError(f"unknown gauge {gauge!r}")
    return float(0.5 * v @ v + sys.potential(t, q))


def hill_membership(sys: StarkZeemanSystem, c: float, q) -> np.ndarray:
    if sys.time_dependent:
        raise UnsupportedError("Hill regions need a time-independent system")
    q = np.asarray(q, dtype=float)
    if np.any(np.linalg.norm(q, axis=-1) == 0.0):
        raise DomainError("q = 0 is the collision point")
    return sys.potential(0.0, q) <= c


def critical_energy(sys: StarkZeemanSystem, radii=None, angles: int = 16) -> float:
    """Smallest critical value of V, searched in the q3 = 0 plane from many starts.

    Returns +inf when every start escapes to infinity, as for Kepler where grad V
    never vanishes.
    """
    if sys.time_dependent:
        raise UnsupportedError("critical_energy needs a time-independent system")
    radii = np.geomspace(0.05, 3.0, 12) if radii is None else np.asarray(radii, dtype=float)

    def grad2(x):
        q = np.array([x[0], x[1], 0.0])
        return sys.potential_grad(0.0, q)[:2]

    found = []
    escaped = 0
    failures = []
    for r in radii:
        for a in np.linspace(0, TWO_PI, angles, endpoint=False):
            x0 = r * np.array([np.cos(a), np.sin(a)])
            with np.errstate(all="ignore"):
                sol = root(grad2, x0, method="hybr", options={"xtol": 1e-13})
            x = sol.x
            rr = float(np.hypot(*x))
            ok = np.all(np.isfinite(x)) and rr > 1e-6 and rr < 20.0 * max(r, 1.0)
            if ok and np.linalg.norm(grad2(x)) < 1e-9 and np.isfinite(sys.potential(0.0, [x[0], x[1], 0.0])):
                found.append((float(sys.potential(0.0, np.array([x[0], x[1], 0.0]))), x))
            elif not ok:
                escaped += 1
            else:
                failures.append((r, float(a), sol.message))
    if found:
        return min(v for v, _ in found)
    if escaped == len(radii) * angles or not failures:
        return float("inf")
    raise NumericalError("no critical point converged", {"failures": failures[:10]})
