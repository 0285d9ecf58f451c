import numpy as np
import pytest

from starkzeeman.errors import ConfigError, DomainError, UnsupportedError
from starkzeeman.flow import integrate_newton
from starkzeeman.ksgeom import PhasePoint, bl, ks_lift_arrays, ks_map
from starkzeeman.ksham import (
    KSRegConfig,
    integrate_ks,
    ks_gradients,
    ks_hamiltonian,
    ks_initial_state,
    project_physical,
)
from starkzeeman.quat import ONE, I, J, mul_i, quat_norm2
from starkzeeman.systems import builtin_system, hamiltonian


def _physical(rng, n):
    z = rng.normal(size=(n, 4))
    w = rng.normal(size=(n, 4))
    iz = mul_i(z)
    w = w - (np.sum(w * iz, axis=1) / quat_norm2(z))[:, None] * iz
    return z, w


def test_ks_hamiltonian_examples():
    kep = builtin_system("kepler")
    w = np.array([1.0, 2.0, 0.0, -1.0])
    assert ks_hamiltonian(kep, KSRegConfig(-0.3), np.zeros(4), w) == pytest.approx(w @ w / 8 - 1)
    z = np.sqrt(2) * ONE
    assert ks_hamiltonian(kep, KSRegConfig(-0.5), z, np.zeros(4)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("name", ["kepler", "rkp", "cr3bp"])
def test_pullback_identity(name, rng):
    sys = builtin_system(name)
    z, w = _physical(rng, 200)
    z *= 0.3
    q, p, _ = ks_lift_arrays(z, w)
    keep = sys.domain(q)
    c = -0.7
    kc = ks_hamiltonian(sys, KSRegConfig(c), z[keep], w[keep])
    h = np.array([hamiltonian(sys, 0.0, PhasePoint(a, b), "coupled") for a, b in zip(q[keep], p[keep])])
    ref = np.linalg.norm(q[keep], axis=1) * (h - c)
    assert np.max(np.abs(kc - ref)) < 1e-10 * max(1.0, np.max(np.abs(ref)))


@pytest.mark.parametrize("name", ["kepler", "rkp", "cr3bp"])
def test_gradients_match_difference_quotients(name, rng):
    sys = builtin_system(name)
    cfg = KSRegConfig(-1.2)
    z = 0.3 * rng.normal(size=4)
    z = z if sys.domain(ks_map(z)) else 0.1 * z
    w = rng.normal(size=4)
    dz, dw = ks_gradients(sys, cfg, z, w)
    h = 1e-6
    for k in range(4):
        e = np.eye(4)[k]
        fz = (ks_hamiltonian(sys, cfg, z + h * e, w) - ks_hamiltonian(sys, cfg, z - h * e, w)) / (2 * h)
        fw = (ks_hamiltonian(sys, cfg, z, w + h * e) - ks_hamiltonian(sys, cfg, z, w - h * e)) / (2 * h)
        assert fz == pytest.approx(dz[k], abs=1e-7)
        assert fw == pytest.approx(dw[k], abs=1e-7)


def test_ks_flow_matches_direct_rkp():
    sys = builtin_system("rkp")
    q0, v0 = np.array([0.4, 0.1, 0.05]), np.array([0.0, 1.0, 0.1])
    p0 = v0 + sys.vector_potential(q0)
    c = hamiltonian(sys, 0.0, PhasePoint(q0, p0))
    z0, w0 = ks_initial_state(q0, p0)
    ks = integrate_ks(sys, KSRegConfig(c), z0, w0, (0, 3), tol=1e-11, t_eval=np.linspace(0, 3, 61))
    direct = integrate_newton(sys, q0, v0, (0, ks.t_phys[-1] + 1e-9), tol=1e-12)
    assert np.max(np.linalg.norm(ks.q - direct.sample(ks.t_phys)[:, :3], axis=1)) < 1e-6
    assert ks.drift("BL") < 1e-9 and ks.drift("Kc") < 1e-9


def test_radial_collision_bounces():
    kep = builtin_system("kepler")
    z0, w0 = ks_initial_state([1.0, 0, 0], [0, 0, 0])
    tau = np.linspace(0, 5, 4001)
    ks = integrate_ks(kep, KSRegConfig(-1.0), z0, w0, (0, 5), tol=1e-12, t_eval=tau)
    nz = np.linalg.norm(ks.coords[:, :4], axis=1)
    assert nz.min() < 1e-2
    q = ks_map(ks.coords[:, :4])
    assert np.max(np.abs(q[:, 1:])) < 1e-10 and q[:, 0].min() > -1e-12
    # z oscillates harmonically through 0, so q1 = cos^2(tau / sqrt 2) bounces back to 1
    assert np.max(np.abs(q[:, 0] - np.cos(tau / np.sqrt(2)) ** 2)) < 1e-9
    assert ks.drift("Kc") < 1e-9


def test_project_physical():
    x = project_physical(ONE, 2 * J)
    assert np.allclose(x.q, [1, 0, 0]) and np.allclose(x.p, [0, 0, 1])
    with pytest.raises(DomainError):
        project_physical(np.zeros(4), J)
    with pytest.raises(DomainError):
        project_physical(ONE, I)
    assert bl(ONE, I) == -1.0


def test_rejections():
    kep = builtin_system("kepler")
    with pytest.raises(UnsupportedError):
        ks_hamiltonian(builtin_system("bcr4bp"), KSRegConfig(-1.0), ONE, J)
    with pytest.raises(ConfigError):
        integrate_ks(kep, KSRegConfig(-1.0), ONE, I, (0, 1))
    with pytest.raises(ConfigError):
        integrate_ks(kep, KSRegConfig(5.0), ONE, J, (0, 1))
    with pytest.raises(ConfigError):
        KSRegConfig(-1.0, bl_tolerance=0.0)
