"""Uniformly sampled loops over S^1 and their spectral calculus.

Quaternion loops may carry a twist theta, meaning z(tau + 1) = e^{i theta} z(tau).
Since the KS map is invariant under this action, a twisted z-loop still
projects to a closed q-loop.  The Kepler circle R e^{j pi tau} has twist pi.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .quat import from_complex_pair, to_complex_pair

TWO_PI = 2.0 * np.pi


def _wrap_twist(theta: float) -> float:
    t = float(np.mod(theta, TWO_PI))
    return 0.0 if np.isclose(t, TWO_PI, rtol=0, atol=1e-14) else t


@dataclass(frozen=True)
class Loop:
    """N samples at tau_k = k/N of a periodic (or twisted periodic) function."""

    samples: np.ndarray
    twist: float = 0.0
    _spec: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        n = s.shape[0]
        if n < 8 or n % 2:
            raise DomainError(f"loops need an even sample count >= 8, got {n}")
        if not np.all(np.isfinite(s)):
            raise DomainError("loop samples must be finite")
        tw = _wrap_twist(self.twist)
        if tw != 0.0 and s.shape[1:] != (4,):
            raise DomainError("only quaternion loops may be twisted")
        object.__setattr__(self, "twist", tw)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def tau(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    @property
    def is_quaternion(self) -> bool:
        return self.samples.shape[1:] == (4,)

    def with_samples(self, samples) -> Loop:
        return Loop(samples, self.twist)

    def __add__(self, other: Loop) -> Loop:
        return Loop(self.samples + _samples(other), self.twist)

    def __sub__(self, other: Loop) -> Loop:
        return Loop(self.samples - _samples(other), self.twist)

    def __mul__(self, c: float) -> Loop:
        return Loop(self.samples * float(c), self.twist)

    __rmul__ = __mul__

    def derivative(self, order: int = 1) -> Loop:
        return Loop(spectral_derivative(self.samples, self.twist, order), self.twist)

    def inner(self, other) -> float:
        return l2_inner(self.samples, _samples(other))

    def norm2(self) -> float:
        return l2_inner(self.samples, self.samples)

    def norm(self) -> float:
        return float(np.sqrt(self.norm2()))

    def evaluate(self, tau) -> np.ndarray:
        """Trigonometric interpolant at arbitrary tau (twist applied outside [0, 1))."""
        return spectral_evaluate(self.samples, self.twist, tau)

    def resample(self, n: int) -> Loop:
        return Loop(self.evaluate(np.arange(n) / n), self.twist)


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Loop) else np.asarray(x, dtype=float)


def l2_inner(a, b) -> float:
    """Discrete L^2 pairing: mean over samples of the pointwise dot product."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    prod = a * b
    if prod.ndim > 1:
        prod = prod.reshape(prod.shape[0], -1).sum(axis=1)
    return float(np.mean(prod))


def frequencies(n: int, twist: float = 0.0) -> np.ndarray:
    """Angular frequencies 2 pi k + theta in FFT order."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    return TWO_PI * k + twist


def _forward(samples: np.ndarray, twist: float):
    """Fourier coefficients of the periodic part; complex pair form when twisted."""
    n = samples.shape[0]
    if twist == 0.0:
        return np.fft.fft(samples, axis=0) / n
    c = to_complex_pair(samples)
    tau = np.arange(n) / n
    c = c * np.exp(-1j * twist * tau)[:, None]
    return np.fft.fft(c, axis=0) / n


def _backward(coef: np.ndarray, twist: float) -> np.ndarray:
    n = coef.shape[0]
    g = np.fft.ifft(coef * n, axis=0)
    if twist == 0.0:
        return g.real
    tau = np.arange(n) / n
    return from_complex_pair(g * np.exp(1j * twist * tau)[:, None])


def _bcast(v: np.ndarray, like: np.ndarray) -> np.ndarray:
    return v.reshape((-1,) + (1,) * (like.ndim - 1))


def spectral_derivative(samples, twist: float = 0.0, order: int = 1) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    coef = _forward(samples, twist)
    mult = 1j * frequencies(n, twist)
    if twist == 0.0:
        mult[n // 2] = 0.0
    coef = coef * _bcast(mult**order, coef)
    return _backward(coef, twist)


def spectral_evaluate(samples, twist: float, tau) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    coef = _forward(samples, twist)
    om = frequencies(n, twist)
    phase = np.exp(1j * np.outer(tau, om))
    if twist == 0.0:
        # split the Nyquist mode symmetrically so the interpolant stays real
        phase[:, n // 2] = np.cos(0.5 * TWO_PI * n * tau)
    flat = coef.reshape(n, -1)
    vals = (phase @ flat).reshape((tau.size,) + coef.shape[1:])
    if twist == 0.0:
        return vals.real
    # vals already includes the twist factor through om
    return from_complex_pair(vals)


def cumulative_integral(f) -> np.ndarray:
    """F(tau_k) = int_0^{tau_k} f for a periodic real f sampled on the uniform grid.

    Exact for trigonometric polynomials resolved by the grid.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    coef = np.fft.fft(f, axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    tau = np.arange(n) / n
    ik = 1j * TWO_PI * k
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(k != 0, 1.0 / ik, 0.0)
    inv[n // 2] = 0.0
    c = coef * _bcast(inv, coef)
    osc = np.fft.ifft(c * n, axis=0).real - np.sum(c, axis=0).real
    return _bcast(tau, f) * coef[0].real + osc


def tail_integral(f) -> np.ndarray:
    """int_tau^1 f on the grid, as the exact adjoint of cumulative_integral.

    mean(g * cumulative_integral(x)) == mean(x * T) with T = tail_integral(g) plus the
    constant mean(tau g) - mean_tau_weighted(g).  When mean(f) != 0 the tail jumps at
    tau = 0 and this is its Fourier series (midpoint value at the seam).
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    coef = np.fft.fft(f, axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(k != 0, 1.0 / (1j * TWO_PI * k), 0.0)
    inv[n // 2] = 0.0
    flipped = np.roll(coef[::-1], 1, axis=0)
    g = _bcast(inv, coef) * (flipped - coef[0])
    return np.fft.fft(g, axis=0).real + mean_tau_weighted(f)


def mean_tau_weighted(f) -> float:
    """int_0^1 tau f(tau) dtau for a periodic real f (spectral)."""
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    coef = np.fft.fft(f) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    mask = k != 0
    mask[n // 2] = False
    return float((coef[0] / 2 + np.sum(coef[mask] / (1j * TWO_PI * k[mask]))).real)


def smooth_random_loop(rng: np.random.Generator, n: int, modes: int = 4, amplitude: float = 1.0,
                       dim: int = 4, twist: float = 0.0) -> Loop:
    """Random band-limited loop with `modes` frequencies on each side."""
    tau = np.arange(n) / n
    out = np.zeros((n, dim))
    for m in range(-modes, modes + 1):
        a = rng.normal(size=dim) / (1 + abs(m)) ** 2
        b = rng.normal(size=dim) / (1 + abs(m)) ** 2
        out += np.outer(np.cos(TWO_PI * m * tau), a) + np.outer(np.sin(TWO_PI * m * tau), b)
    out *= amplitude
    if twist and dim == 4:
        # carry the band-limited loop into the twisted class
        c = to_complex_pair(out) * np.exp(1j * twist * tau)[:, None]
        out = from_complex_pair(c)
    return Loop(out, twist)


def write_loop_csv(path, loop: Loop, kind: str = "z", column0=None) -> None:
    """Write `tau,z0..z3` (kind 'z') or `t,q1,q2,q3` (kind 'q')."""
    s = loop.samples.reshape(loop.N, -1)
    if kind == "z":
        header = ["tau"] + [f"z{i}" for i in range(s.shape[1])]
    else:
        header = ["t"] + [f"q{i + 1}" for i in range(s.shape[1])]
    x0 = loop.tau if column0 is None else column0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, row in zip(x0, s):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_loop_csv(path, twist: float = 0.0) -> Loop:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"loop file not found: {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Loop(data[:, 1:], twist)
