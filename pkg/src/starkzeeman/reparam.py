"""Reparametrizations between z-time tau and physical time t, and the loop transform.

t_z(tau) = |z|^{-2}_{L^2} int_0^tau |z|^2 and tau_q(t) proportional to int_0^t 1/|q|.
q_z = Phi(z o tau_z) maps a quaternion loop to a physical loop; lift_loop goes back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import minimize_scalar

from .errors import DomainError
from .ksgeom import fiber_rotate, ks_map, ks_section
from .loops import TWO_PI, Loop, cumulative_integral
from .quat import quat_norm, quat_norm2, to_complex_pair

ZERO_EPS = 1e-7


@dataclass(frozen=True)
class MonotoneCircleMap:
    """Non-decreasing map of [0, 1] onto itself, known on the grid k/N.

    With `density` (samples of the normalized derivative, mean one) the map is
    evaluated spectrally; otherwise it is interpolated by a monotone cubic.
    """

    values: np.ndarray
    slopes: np.ndarray | None = None
    density: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 3 or v[0] != 0.0 or v[-1] != 1.0:
            raise DomainError("circle map values must run from 0 to 1")
        if np.any(np.diff(v) < -1e-14):
            raise DomainError("circle map values must be non-decreasing")
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.size - 1

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    def _coef(self):
        c = getattr(self, "_c", None)
        if c is None:
            d = np.asarray(self.density, dtype=float)
            c = np.fft.fft(d) / d.size
            object.__setattr__(self, "_c", c)
        return c

    def _interp(self):
        f = getattr(self, "_f", None)
        if f is None:
            if self.slopes is not None:
                f = CubicHermiteSpline(self.grid, self.values, self.slopes)
            else:
                f = PchipInterpolator(self.grid, self.values)
            object.__setattr__(self, "_f", f)
        return f

    def _eval01(self, x: np.ndarray) -> np.ndarray:
        if self.density is not None:
            return _spectral_antiderivative(self._coef(), x)
        return self._interp()(x)

    def __call__(self, x) -> np.ndarray:
        """Evaluate, extending to R as a degree-one circle map."""
        x = np.asarray(x, dtype=float)
        fl = np.floor(x)
        fr = x - fl
        return fl + self._eval01(fr)

    def derivative(self, x) -> np.ndarray:
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        if self.density is not None:
            return _spectral_value(self._coef(), x)
        return self._interp().derivative()(x)

    def inverse(self, y) -> np.ndarray:
        """Solve map(x) = y for y in [0, 1] by safeguarded Newton inside the grid bracket."""
        y = np.asarray(y, dtype=float)
        shape = y.shape
        y = y.ravel()
        v = self.values
        g = self.grid
        k = np.clip(np.searchsorted(v, y, side="right") - 1, 0, self.N - 1)
        lo = g[k].copy()
        hi = g[k + 1].copy()
        dv = v[k + 1] - v[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(dv > 0, (y - v[k]) / dv, 0.5)
        x = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
        for _ in range(100):
            r = self._eval01(x) - y
            lo = np.where(r < 0, x, lo)
            hi = np.where(r > 0, x, hi)
            d = self.derivative(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - r / d
            bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            if np.all(np.abs(xn - x) <= 1e-15):
                x = xn
                break
            x = xn
        return x.reshape(shape)


def _spectral_value(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = coef.size
    k = np.fft.fftfreq(n, d=1.0 / n)
    ph = np.exp(1j * TWO_PI * np.outer(np.atleast_1d(x), k))
    ph[:, n // 2] = np.cos(np.pi * n * np.atleast_1d(x))
    return (ph @ coef).real.reshape(np.shape(x))


def _spectral_antiderivative(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    """int_0^x of the trigonometric interpolant with coefficients coef."""
    n = coef.size
    x1 = np.atleast_1d(x)
    k = np.fft.fftfreq(n, d=1.0 / n)
    nz = k != 0
    ik = 1j * TWO_PI * k[nz]
    ph = (np.exp(np.outer(x1, ik)) - 1.0) / ik
    ph_full = np.zeros((x1.size, n), dtype=complex)
    ph_full[:, nz] = ph
    ph_full[:, n // 2] = np.sin(np.pi * n * x1) / (np.pi * n)
    out = coef[0].real * x1 + (ph_full @ coef).real
    return out.reshape(np.shape(x))


def time_from_param(z: Loop) -> MonotoneCircleMap:
    """t_z for a quaternion loop."""
    rho = quat_norm2(z.samples)
    n = float(np.mean(rho))
    if not n > 0.0:
        raise DomainError("time_from_param needs a loop with positive L2 norm")
    dens = rho / n
    vals = np.append(cumulative_integral(dens), 1.0)
    vals[0] = 0.0
    vals = np.maximum.accumulate(np.clip(vals, 0.0, 1.0))
    return MonotoneCircleMap(vals, np.append(dens, dens[0]), dens)


def param_from_time(q: Loop) -> MonotoneCircleMap:
    """tau_q for a pure quaternion loop sampled uniformly in t."""
    rho = np.linalg.norm(q.samples.reshape(q.N, -1), axis=1)
    if np.all(rho == 0.0):
        raise DomainError("1/|q| is not integrable on an identically zero loop")
    zero = rho <= ZERO_EPS * rho.max()
    if not np.any(zero):
        inv = 1.0 / rho
        dens = inv / np.mean(inv)
        vals = np.append(cumulative_integral(dens), 1.0)
        vals[0] = 0.0
        vals = np.maximum.accumulate(np.clip(vals, 0.0, 1.0))
        return MonotoneCircleMap(vals, np.append(dens, dens[0]), dens)
    if np.any(zero & np.roll(zero, 1)):
        raise DomainError("q vanishes on a subinterval; 1/|q| is not integrable")
    # near a transverse collision |q|^{3/2} is linear in t; integrate 1/|q| exactly under that model
    h = 1.0 / q.N
    r0 = rho
    r1 = np.roll(rho, -1)
    a = np.sqrt(r0)
    b = np.sqrt(r1)
    den = r1**1.5 - r0**1.5
    with np.errstate(divide="ignore", invalid="ignore"):
        piece = np.where(np.abs(r1 - r0) > 1e-10 * np.maximum(r0, r1),
                         3.0 * h * (b - a) / den, h / np.maximum(r0, 1e-300))
    cum = np.concatenate([[0.0], np.cumsum(piece)])
    return MonotoneCircleMap(cum / cum[-1])


def tz_values(z: Loop) -> np.ndarray:
    """t_z on the sample grid (length N)."""
    rho = quat_norm2(z.samples)
    return cumulative_integral(rho / np.mean(rho))


def reconstruct_q(z: Loop) -> Loop:
    """Sigma(z): Phi(z(tau_z(t))) sampled uniformly in t."""
    tz = time_from_param(z)
    t = np.arange(z.N) / z.N
    tau = tz.inverse(t)
    return Loop(ks_map(z.evaluate(tau)))


def find_zeros(z: Loop, eps: float = ZERO_EPS) -> list[tuple[float, float]]:
    """Zeros of a quaternion loop as (tau, |z'(tau)|), refined between samples."""
    rho = quat_norm2(z.samples)
    scale = float(np.sqrt(rho.max()))
    if scale == 0.0:
        raise DomainError("identically zero loop")
    n = z.N
    dz = z.derivative()
    out = []
    cand = np.nonzero((rho <= np.roll(rho, 1)) & (rho < np.roll(rho, -1)))[0]
    for k in cand:
        lo, hi = (k - 1) / n, (k + 1) / n
        res = minimize_scalar(lambda s: float(quat_norm2(z.evaluate(s))[0]), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-14})
        s = float(res.x)
        if np.sqrt(max(res.fun, 0.0)) <= eps * scale:
            out.append((s % 1.0, float(quat_norm(dz.evaluate(s))[0])))
    return out


def lift_loop(q: Loop, return_info: bool = False):
    """z_q with Phi(z_q(tau)) = q(t_q(tau)), with a continuous fiber phase.

    The returned loop is twisted by the holonomy of the phase choice.  With
    `return_info`, also returns a dict recording zeros and the fiber jumps
    right after them (flagged above 0.1 rad).
    """
    tq = param_from_time(q)
    tau = np.arange(q.N) / q.N
    t = tq.inverse(tau)
    qs = q.evaluate(t)
    rho = np.linalg.norm(qs, axis=1)
    zero = rho <= ZERO_EPS * rho.max()
    z = np.zeros((q.N, 4))
    nz = ~zero
    z[nz] = ks_section(qs[nz])
    jumps = []
    for m in range(1, q.N + 1):
        zm = z[m % q.N] if m < q.N else z[0]
        if m >= 2:
            pred = 2 * z[m - 1] - z[m - 2]
        else:
            pred = z[m - 1]
        th = _align_angle(zm, pred)
        aligned = fiber_rotate(th, zm)
        if m < q.N:
            z[m] = aligned
            if zero[m - 1] and not zero[m]:
                jumps.append(_fiber_misfit(aligned, pred))
        else:
            twist = th
    loop = Loop(z, twist)
    if not return_info:
        return loop
    info = {
        "zeros": np.nonzero(zero)[0].tolist(),
        "post_zero_jumps": jumps,
        "flagged": bool(any(j > 0.1 for j in jumps)),
    }
    return loop, info


def _align_angle(z, target) -> float:
    """theta minimizing |e^{i theta} z - target|."""
    a = to_complex_pair(z)
    b = to_complex_pair(target)
    s = np.sum(np.conj(a) * b)
    return float(np.angle(s)) if abs(s) > 0 else 0.0


def _fiber_misfit(z, target) -> float:
    nz = np.linalg.norm(z)
    nt = np.linalg.norm(target)
    if nz == 0 or nt == 0:
        return 0.0
    c = np.clip(np.dot(z, target) / (nz * nt), -1.0, 1.0)
    return float(np.arccos(c))
