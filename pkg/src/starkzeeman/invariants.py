"""Numerical identity suites behind `check-invariants`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bov
from .ksgeom import bl, fiber_rotate, ks_diff, ks_diff_transpose, ks_lift_arrays, ks_map
from .loops import Loop, smooth_random_loop, spectral_derivative
from .quat import embed, exp_i, mul_i, quat_conj, quat_mul, quat_norm, quat_norm2
from .reparam import reconstruct_q
from .systems import builtin_system, magnetic_matrix


@dataclass(frozen=True)
class Result:
    name: str
    passed: bool
    value: float
    threshold: float


def _res(name, value, threshold):
    value = float(value)
    return Result(name, bool(value < threshold), value, threshold)


def suite_ksgeom(rng: np.random.Generator, count: int = 10_000) -> list[Result]:
    z = rng.normal(size=(count, 4))
    theta = rng.uniform(0, 2 * np.pi, size=count)
    v = rng.normal(size=(count, 3))
    u = rng.normal(size=(count, 4))
    q = ks_map(z)
    full = quat_mul(quat_conj(z), mul_i(z))
    r2 = quat_norm2(z)
    out = [
        _res("norm_squares", np.max(np.abs(np.linalg.norm(q, axis=1) - r2) / r2), 1e-12),
        _res("pure_image", np.max(np.abs(full[:, 0]) / r2), 1e-12),
        _res("fiber_invariance", np.max(np.linalg.norm(ks_map(quat_mul(exp_i(theta), z)) - q, axis=1) / r2), 1e-12),
    ]
    dt = ks_diff_transpose(z, v)
    ref = -2.0 * mul_i(quat_mul(z, embed(v)))
    out.append(_res("transpose_formula", np.max(np.linalg.norm(dt - ref, axis=1) / (quat_norm(z) * np.linalg.norm(v, axis=1))), 1e-12))
    lhs = np.sum(ks_diff(z, u) * v, axis=1)
    rhs = np.sum(u * dt, axis=1)
    scale = quat_norm(z) * quat_norm(u) * np.linalg.norm(v, axis=1)
    out.append(_res("transpose_adjoint", np.max(np.abs(lhs - rhs) / scale), 1e-12))
    return out


def random_bl_curve(rng: np.random.Generator, n: int):
    """Random closed (z, w) curve avoiding z = 0, projected onto BL = 0."""
    z = smooth_random_loop(rng, n, 4, 0.3).samples + np.array([1.0, 0.0, 0.0, 0.0])
    w = smooth_random_loop(rng, n, 4, 1.0).samples
    w = w + (bl(z, w) / quat_norm2(z))[:, None] * mul_i(z)
    return Loop(z), Loop(w)


def pullback_error(z: Loop, w: Loop) -> float:
    q, p, _ = ks_lift_arrays(z.samples, w.samples)
    dq = spectral_derivative(q, 0.0, 1)
    lhs = float(np.mean(np.sum(p * dq, axis=1)))
    zp = spectral_derivative(z.samples, 0.0, 1)
    wp = spectral_derivative(w.samples, 0.0, 1)
    rhs = 0.5 * float(np.mean(np.sum(w.samples * zp - z.samples * wp, axis=1)))
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def suite_lift(rng: np.random.Generator, curves: int = 5, n: int = 512) -> list[Result]:
    errs = [pullback_error(*random_bl_curve(rng, n)) for _ in range(curves)]
    z = smooth_random_loop(rng, 256, 3, 0.5, 4, np.pi)
    qz = reconstruct_q(z)
    # int dt / |q| over one period equals 1/||z||^2
    recon = abs(np.mean(1.0 / np.linalg.norm(qz.samples, axis=1)) - 1.0 / z.norm2()) * z.norm2()
    return [_res("pullback_one_form", max(errs), 1e-8), _res("reconstruction_identity", recon, 1e-6)]


def gradient_error(sys, z: Loop, d: Loop, steps=(1e-3, 5e-4, 2.5e-4, 1.25e-4)):
    """Relative errors of central differences against <grad B, d> over an h sweep."""
    an = bov.action_gradient(sys, z).gradient.inner(d)
    errs = []
    for h in steps:
        fd = (bov.action_value(sys, z + d * h).value - bov.action_value(sys, z - d * h).value) / (2 * h)
        errs.append(abs(fd - an) / abs(an))
    return np.array(errs)


def suite_bov(rng: np.random.Generator) -> list[Result]:
    out = []
    for name in ("kepler", "rkp", "bcr4bp"):
        sys = builtin_system(name)
        z = smooth_random_loop(rng, 64, 3, 0.5, 4, np.pi)
        d = smooth_random_loop(rng, 64, 3, 1.0, 4, np.pi)
        errs = gradient_error(sys, z, d)
        out.append(_res(f"gradient_{name}", errs[-1], 1e-6))
        th = rng.uniform(0, 2 * np.pi)
        rep = bov.action_gradient(sys, z)
        rot = bov.action_gradient(sys, Loop(fiber_rotate(th, z.samples), z.twist))
        gdiff = np.max(np.abs(rot.gradient.samples - fiber_rotate(th, rep.gradient.samples)))
        out.append(_res(f"equivariance_{name}", max(abs(rot.value - rep.value) / abs(rep.value),
                                                    gdiff / np.max(np.abs(rep.gradient.samples))), 1e-12))
    return out


def suite_systems(rng: np.random.Generator, points: int = 1000) -> list[Result]:
    out = []
    for name in ("rkp", "cr3bp", "bcr4bp"):
        sys = builtin_system(name)
        q = rng.uniform(-0.5, 0.5, size=(points, 3))
        q = q[sys.domain(q)] if name != "rkp" else q
        b = magnetic_matrix(sys, q)
        out.append(_res(f"skew_{name}", np.max(np.abs(b + np.swapaxes(b, 1, 2))), 1e-14))
    cr = builtin_system("cr3bp", mu=0.01)
    bc = builtin_system("bcr4bp", mu=0.01, m_s=0.0, omega_b2=0.0)
    q = rng.uniform(-0.5, 0.5, size=(points, 3))
    q = q[cr.domain(q)]
    t = rng.uniform(0, 1, size=q.shape[0])
    diff = max(np.max(np.abs(cr.electric(t, q) - bc.electric(t, q))),
               np.max(np.abs(cr.electric_grad(t, q) - bc.electric_grad(t, q))),
               np.max(np.abs(cr.vector_potential(q) - bc.vector_potential(q))))
    out.append(_res("bcr4bp_reduces_to_cr3bp", diff, 1e-12))
    return out


SUITES = {"ksgeom": suite_ksgeom, "lift": suite_lift, "bov": suite_bov, "systems": suite_systems}


def run_suite(name: str, rng: np.random.Generator) -> list[Result]:
    return SUITES[name](rng)
