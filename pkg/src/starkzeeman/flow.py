"""Direct integration of Stark-Zeeman dynamics and the generalized energy."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, DomainError, NumericalError
from .ksgeom import PhasePoint
from .loops import cumulative_integral
from .systems import StarkZeemanSystem, TimeDependentGauge

R_STOP = 1e-4


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution.  `p` holds velocities for Newton and twisted runs and
    canonical momenta for coupled runs; `v` always holds velocities."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray
    energies: np.ndarray
    meta: dict = field(default_factory=dict)
    dense: object = field(default=None, repr=False, compare=False)
    extra: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def collided(self) -> bool:
        return bool(self.meta.get("collision", False))

    def states(self) -> list[PhasePoint]:
        return [PhasePoint(q, p) for q, p in zip(self.q, self.p)]

    def sample(self, t) -> np.ndarray:
        """Dense-output state vector at times t, shape (len(t), dim)."""
        if self.dense is None:
            raise NumericalError("trajectory has no dense output")
        return np.asarray(self.dense(np.atleast_1d(t))).T

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            cols = ["t", "q1", "q2", "q3", "p1", "p2", "p3", "energy"]
            extra = sorted(self.extra)
            w.writerow(cols + extra)
            for k in range(self.times.size):
                row = [self.times[k], *self.q[k], *self.p[k], self.energies[k]]
                for key in extra:
                    row.extend(np.atleast_1d(self.extra[key][k]).tolist())
                w.writerow([repr(float(x)) for x in row])

    def summary(self) -> dict:
        return {
            "t_start": float(self.times[0]),
            "t_end": float(self.times[-1]),
            "samples": int(self.times.size),
            "energy_drift": float(np.max(np.abs(self.energies - self.energies[0]))),
            **{k: v for k, v in self.meta.items() if isinstance(v, (int, float, str, bool))},
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)


def _collision_event(r_stop: float):
    def ev(t, y):
        return np.linalg.norm(y[:3]) - r_stop

    ev.terminal = True
    ev.direction = -1
    return ev


def _solve(rhs, t_span, y0, tol, events=None, t_eval=None, max_step=np.inf):
    if not tol > 0:
        raise ConfigError("tolerance must be positive")
    sol = solve_ivp(rhs, t_span, y0, method="DOP853", rtol=tol, atol=tol, dense_output=True,
                    events=events, t_eval=t_eval, max_step=max_step)
    if sol.status == -1:
        raise NumericalError(f"integration failed: {sol.message}",
                             {"t": float(sol.t[-1]), "y": sol.y[:, -1].tolist()})
    return sol


def _meta(sol, tol, **kw) -> dict:
    collided = sol.status == 1
    return {
        "steps": int(sol.t.size - 1),
        "nfev": int(sol.nfev),
        "tolerance": float(tol),
        "method": "DOP853",
        "collision": bool(collided),
        "t_collision": float(sol.t[-1]) if collided else None,
        **kw,
    }


def _check_start(sys: StarkZeemanSystem, q0):
    q0 = np.asarray(q0, dtype=float).reshape(3)
    if np.linalg.norm(q0) == 0.0:
        raise DomainError("initial position is the collision point")
    return q0


def integrate_newton(sys: StarkZeemanSystem, q0, v0, t_span, tol: float = 1e-10,
                     r_stop: float = R_STOP, t_eval=None) -> Trajectory:
    """q'' = B(q) q' - k q/|q|^3 - grad E_t(q), stopped when |q| < r_stop."""
    q0 = _check_start(sys, q0)
    v0 = np.asarray(v0, dtype=float).reshape(3)

    def rhs(t, y):
        q, v = y[:3], y[3:]
        return np.concatenate([v, sys.magnetic(q) @ v - sys.potential_grad(t, q)])

    sol = _solve(rhs, t_span, np.concatenate([q0, v0]), tol, [_collision_event(r_stop)], t_eval)
    q, v = sol.y[:3].T, sol.y[3:].T
    en = 0.5 * np.sum(v * v, axis=1) + sys.potential(sol.t, q)
    return Trajectory(sol.t, q, v, v, en, _meta(sol, tol, gauge="newton"), sol.sol)


def integrate_hamiltonian(sys: StarkZeemanSystem, x0: PhasePoint, gauge: str = "coupled",
                          t_span=(0.0, 1.0), tol: float = 1e-10, r_stop: float = R_STOP,
                          t_eval=None) -> Trajectory:
    """Hamiltonian flow of 1/2|p - A|^2 + V (coupled) or of 1/2|p|^2 + V with the
    twisted symplectic form (twisted)."""
    q0 = _check_start(sys, x0.q)
    if gauge == "coupled":
        def rhs(t, y):
            q, p = y[:3], y[3:]
            v = p - sys.vector_potential(q)
            jac = sys.vector_potential_jacobian(q)
            return np.concatenate([v, jac.T @ v - sys.potential_grad(t, q)])
    elif gauge == "twisted":
        def rhs(t, y):
            q, p = y[:3], y[3:]
            return np.concatenate([p, sys.magnetic(q) @ p - sys.potential_grad(t, q)])
    else:
        raise ConfigError(f"unknown gauge {gauge!r}")
    sol = _solve(rhs, t_span, np.concatenate([q0, x0.p]), tol, [_collision_event(r_stop)], t_eval)
    q, p = sol.y[:3].T, sol.y[3:].T
    v = p - sys.vector_potential(q) if gauge == "coupled" else p
    en = 0.5 * np.sum(v * v, axis=1) + sys.potential(sol.t, q)
    return Trajectory(sol.t, q, p, v, en, _meta(sol, tol, gauge=gauge), sol.sol)


def integrate_time_dependent_gauge(gauge: TimeDependentGauge, coulomb: float, x0: PhasePoint,
                                   t_span, tol: float = 1e-10, r_stop: float = R_STOP,
                                   t_eval=None) -> Trajectory:
    """Canonical flow of 1/2|p - A_t(q)|^2 - k/|q| + W_t(q)."""
    q0 = np.asarray(x0.q, dtype=float)

    def rhs(t, y):
        q, p = y[:3], y[3:]
        v = p - gauge.vector_potential(t, q)
        jac = gauge.vector_potential_jacobian(t, q)
        r = np.linalg.norm(q)
        return np.concatenate([v, jac.T @ v - coulomb * q / r**3 - gauge.electric_grad(t, q)])

    sol = _solve(rhs, t_span, np.concatenate([q0, x0.p]), tol, [_collision_event(r_stop)], t_eval)
    q, p = sol.y[:3].T, sol.y[3:].T
    v = p - gauge.vector_potential(sol.t, q)
    en = 0.5 * np.sum(v * v, axis=1) - coulomb / np.linalg.norm(q, axis=1) + gauge.electric(sol.t, q)
    return Trajectory(sol.t, q, p, v, en, _meta(sol, tol, gauge="time-dependent"), sol.sol)


def resample(traj: Trajectory, n: int, sys: StarkZeemanSystem | None = None) -> Trajectory:
    """Uniform resampling on [t0, t1] (n points, endpoint excluded) via dense output.

    Coupled-gauge trajectories need `sys` to turn momenta back into velocities.
    """
    t = np.linspace(traj.times[0], traj.times[-1], n, endpoint=False)
    y = traj.sample(t)
    q, p = y[:, :3], y[:, 3:6]
    if traj.meta.get("gauge") == "coupled":
        if sys is None:
            raise ConfigError("resampling a coupled trajectory needs the system")
        v = p - sys.vector_potential(q)
    elif traj.meta.get("gauge") == "time-dependent":
        raise ConfigError("resample does not support time-dependent gauges")
    else:
        v = p
    return Trajectory(t, q, p, v, np.interp(t, traj.times, traj.energies), traj.meta, traj.dense)


@dataclass(frozen=True)
class RegularizedTrajectory:
    """Solution of a regularized flow in the fictitious time tau.

    `coords` holds the regularized state (z, w) or (base, cofiber); `t_phys` the
    reconstructed physical time; `q`, `p` the physical projection (NaN where
    undefined, e.g. at collisions); `invariants` named conserved quantities.
    """

    tau: np.ndarray
    coords: np.ndarray
    t_phys: np.ndarray
    q: np.ndarray
    p: np.ndarray
    invariants: dict
    meta: dict = field(default_factory=dict)
    columns: tuple = ()

    def drift(self, name: str) -> float:
        v = self.invariants[name]
        return float(np.max(np.abs(v - v[0])))

    def write_csv(self, path) -> None:
        names = sorted(self.invariants)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", *self.columns, *names, "t_phys", "q1", "q2", "q3", "p1", "p2", "p3"])
            for k in range(self.tau.size):
                row = [self.tau[k], *self.coords[k], *(self.invariants[n][k] for n in names),
                       self.t_phys[k], *self.q[k], *self.p[k]]
                w.writerow([repr(float(x)) for x in row])

    def summary(self) -> dict:
        out = {
            "tau_end": float(self.tau[-1]),
            "t_phys_end": float(self.t_phys[-1]),
            "samples": int(self.tau.size),
        }
        out.update({f"{n}_drift": self.drift(n) for n in self.invariants})
        out.update({k: v for k, v in self.meta.items() if isinstance(v, (int, float, str, bool))})
        return out


@dataclass(frozen=True)
class EnergySeries:
    """Generalized energy at sample times; `confident` masks out points near collisions."""

    times: np.ndarray
    values: np.ndarray
    confident: np.ndarray

    @property
    def std(self) -> float:
        return float(np.std(self.values[self.confident]))

    @property
    def mean(self) -> float:
        return float(np.mean(self.values[self.confident]))


def generalized_energy(sys: StarkZeemanSystem, data, v=None, times=None, *, dt_dparam=None,
                       confident=None, period_end: float | None = None) -> EnergySeries:
    """E(t) = 1/2|q'|^2 - k/|q| + int_t^T dE_s/ds(q(s)) ds + E_t(q(t)).

    `data` is a Trajectory or an array of positions (then `v` and `times` are
    required).  With `dt_dparam` the samples are taken to be uniform in a loop
    parameter and the tail integral is done spectrally in that parameter;
    otherwise it is a trapezoid rule in t up to `period_end` (default: last time).
    """
    if isinstance(data, Trajectory):
        q, v, times = data.q, data.v, data.times
    else:
        q = np.asarray(data, dtype=float)
        if v is None or times is None:
            raise ConfigError("positions need velocities and times")
        v = np.asarray(v, dtype=float)
        times = np.asarray(times, dtype=float)
    r = np.linalg.norm(q, axis=1)
    if confident is None:
        confident = r > 1e-3 * r.max()
    confident = np.asarray(confident, dtype=bool) & np.all(np.isfinite(v), axis=1)
    edot = sys.electric_tdot(times, q)
    if dt_dparam is not None:
        f = edot * np.asarray(dt_dparam, dtype=float)
        cum = cumulative_integral(f)
        total = float(np.mean(f))
        tail = total - cum
    else:
        end = times[-1] if period_end is None else float(period_end)
        t_ext = np.append(times, end) if end > times[-1] else times
        f_ext = np.append(edot, edot[0]) if end > times[-1] else edot
        seg = 0.5 * (f_ext[1:] + f_ext[:-1]) * np.diff(t_ext)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        tail = (cum[-1] - cum)[: times.size]
    vv = np.where(confident[:, None], v, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = 0.5 * np.sum(vv * vv, axis=1) - sys.coulomb / r + tail + sys.electric(times, q)
    vals = np.where(confident, vals, np.nan)
    return EnergySeries(times, vals, confident)
