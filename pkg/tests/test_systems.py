import json

import numpy as np
import pytest

from starkzeeman.errors import ConfigError, DomainError, UnsupportedError
from starkzeeman.ksgeom import PhasePoint
from starkzeeman.systems import (
    BUILTINS,
    builtin_system,
    critical_energy,
    custom_system,
    hamiltonian,
    hill_membership,
    load_system,
    magnetic_matrix,
    richardson_gradient,
)


def _points(sys, rng, n=1000, scale=0.6):
    q = rng.uniform(-scale, scale, size=(n, 3))
    q = q[np.linalg.norm(q, axis=1) > 0.05]
    return q[sys.domain(q)]


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_fields_match_difference_quotients(name, rng):
    sys = builtin_system(name)
    q = _points(sys, rng, 50)
    t = rng.uniform(0, 1, size=q.shape[0])
    g = richardson_gradient(lambda x: sys.electric(t, x), q, 1e-5)
    assert np.allclose(sys.electric_grad(t, q), g, atol=1e-8)
    h = 1e-5
    td = (sys.electric(t + h, q) - sys.electric(t - h, q)) / (2 * h)
    assert np.allclose(sys.electric_tdot(t, q), td, atol=1e-7)
    if not sys.time_dependent:
        assert np.all(sys.electric_tdot(t, q) == 0.0)
    jac = np.stack([richardson_gradient(lambda x, i=i: sys.vector_potential(x)[..., i], q, 1e-5)
                    for i in range(3)], axis=-2)
    assert np.allclose(sys.vector_potential_jacobian(q), jac, atol=1e-8)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_magnetic_is_skew(name, rng):
    sys = builtin_system(name)
    b = sys.magnetic(_points(sys, rng))
    assert np.max(np.abs(b + np.swapaxes(b, -1, -2))) == 0.0


def test_builtin_magnetic_values():
    kep = builtin_system("kepler")
    q = np.array([0.06, -0.04, 0.02])
    assert np.all(kep.vector_potential(q) == 0) and kep.electric(0.0, q) == 0
    assert np.all(magnetic_matrix(kep, q) == 0)
    b = magnetic_matrix(builtin_system("rkp"), q)
    assert b[0, 1] == 2.0 and b[1, 0] == -2.0
    assert b[0, 2] == b[1, 2] == 0.0
    assert np.allclose(builtin_system("rkp").vector_potential(q), [0.04, 0.06, 0.0])
    w = 0.1
    b = magnetic_matrix(builtin_system("bcr4bp", omega_b2=w), q)
    assert abs(b[0, 1]) == pytest.approx(2 * (w + 1))


def test_magnetic_matrix_rejects_outside_domain():
    with pytest.raises(DomainError):
        magnetic_matrix(builtin_system("cr3bp", mu=0.01), [-1.0, 0.0, 0.0])


def test_bcr4bp_reduces_to_cr3bp(rng):
    cr = builtin_system("cr3bp", mu=0.01)
    bc = builtin_system("bcr4bp", mu=0.01, m_s=0.0, omega_b2=0.0)
    q = _points(cr, rng)
    t = rng.uniform(0, 1, size=q.shape[0])
    assert np.max(np.abs(cr.electric(t, q) - bc.electric(t, q))) < 1e-12
    assert np.max(np.abs(cr.vector_potential(q) - bc.vector_potential(q))) < 1e-12


def test_bcr4bp_gauges_differ_by_a_gradient(rng):
    sys = builtin_system("bcr4bp")
    g = sys.td_gauge
    q = _points(sys, rng, 20)
    for t in (0.0, 0.37):
        diff = g.vector_potential(t, q) - sys.vector_potential(q)
        assert np.allclose(np.diff(diff, axis=0), 0.0, atol=1e-14)
        # the curl is unchanged
        jt = g.vector_potential_jacobian(t, q)
        assert np.allclose(np.swapaxes(jt, -1, -2) - jt, sys.magnetic(q))


def test_bcr4bp_rejects_fractional_frequency():
    with pytest.raises(ConfigError):
        builtin_system("bcr4bp", omega_r=3.0)


def test_hamiltonian_examples(rng):
    kep = builtin_system("kepler")
    assert hamiltonian(kep, 0.0, PhasePoint([2.0, 0, 0], [0, 0, 0])) == pytest.approx(-0.5)
    rkp = builtin_system("rkp")
    assert hamiltonian(rkp, 0.0, PhasePoint([1.0, 0, 0], [0, 1.0, 0]), "coupled") == pytest.approx(-1.5)
    for name in ("rkp", "cr3bp", "bcr4bp"):
        sys = builtin_system(name)
        q = _points(sys, rng, 200)
        for qq in q[:50]:
            v = rng.normal(size=3)
            hc = hamiltonian(sys, 0.2, PhasePoint(qq, v + sys.vector_potential(qq)), "coupled")
            ht = hamiltonian(sys, 0.2, PhasePoint(qq, v), "twisted")
            assert hc == pytest.approx(ht, abs=1e-12)
    with pytest.raises(ConfigError):
        hamiltonian(kep, 0.0, PhasePoint([1.0, 0, 0], [0, 0, 0]), "other")


def test_hill_membership():
    kep = builtin_system("kepler")
    assert hill_membership(kep, -1.0, [0.5, 0, 0])
    assert not hill_membership(kep, -2.0, [1.0, 0, 0])
    with pytest.raises(UnsupportedError):
        hill_membership(builtin_system("bcr4bp"), -1.0, [0.5, 0, 0])


def test_critical_energies():
    assert critical_energy(builtin_system("kepler")) == np.inf
    assert critical_energy(builtin_system("rkp")) == pytest.approx(-1.5, abs=1e-12)
    cr = builtin_system("cr3bp", mu=0.01)
    c0 = critical_energy(cr)
    # brute-force grid on the segment between the primaries
    x = np.linspace(-1.0, 0.0, 1_000_002)[1:-1]
    v = cr.potential(0.0, np.stack([x, 0 * x, 0 * x], axis=1))
    assert c0 == pytest.approx(v.max(), abs=1e-9)
    with pytest.raises(UnsupportedError):
        critical_energy(builtin_system("bcr4bp"))


def test_cr3bp_equal_masses_boundary():
    cr = builtin_system("cr3bp", mu=0.5)
    c0 = critical_energy(cr)
    x = np.linspace(-1.0, 0.0, 20001)[1:-1]
    v = cr.potential(0.0, np.stack([x, 0 * x, 0 * x], axis=1))
    l1 = x[np.argmax(v)]
    assert hill_membership(cr, c0 + 1e-6, [l1, 0, 0])
    assert not hill_membership(cr, c0 - 1e-3, [l1, 0, 0])


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        builtin_system("nope")
    with pytest.raises(ConfigError):
        builtin_system("cr3bp", mu=2.0)
    with pytest.raises(ConfigError):
        builtin_system("kepler", mu=0.1)
    path = tmp_path / "sys.json"
    path.write_text(json.dumps({"name": "cr3bp", "params": {"mu": 0.02}}), encoding="utf-8")
    assert load_system(str(path)).params["mu"] == 0.02
    assert load_system("rkp").name == "rkp"
    with pytest.raises(ConfigError):
        load_system(str(tmp_path / "missing.json"))


def test_custom_system_fallbacks(rng):
    sys = custom_system("stark", lambda t, q: 0.3 * q[..., 2])
    q = rng.normal(size=(5, 3))
    assert np.allclose(sys.electric_grad(0.0, q), [0, 0, 0.3], atol=1e-9)
    assert np.all(sys.magnetic(q) == 0)
