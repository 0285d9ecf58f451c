import numpy as np
import pytest

from starkzeeman.errors import ContractError, DomainError
from starkzeeman.ksgeom import (
    KSPhasePoint,
    bl,
    fiber_rotate,
    ks_diff,
    ks_diff_transpose,
    ks_jacobian,
    ks_lift,
    ks_map,
    ks_momentum_lift,
    ks_section,
)
from starkzeeman.quat import ONE, I, J, K, quat_norm2


def test_ks_map_examples():
    assert np.allclose(ks_map(ONE), [1, 0, 0])
    for th in (0.3, 1.7, 4.0):
        assert np.allclose(ks_map([np.cos(th), np.sin(th), 0, 0]), [1, 0, 0])
    assert np.allclose(ks_map(ONE + K), [0, -2, 0])


def test_ks_diff_examples(rng):
    assert np.allclose(ks_diff(ONE, ONE), [2, 0, 0])
    assert np.allclose(ks_diff(ONE, J), [0, 0, 2])
    z = rng.normal(size=(50, 4))
    assert np.allclose(ks_diff(z, z), 2 * ks_map(z))


def test_ks_diff_matches_difference_quotient(rng):
    z = rng.normal(size=4)
    v = rng.normal(size=4)
    h = 1e-6
    fd = (ks_map(z + h * v) - ks_map(z - h * v)) / (2 * h)
    assert np.allclose(ks_diff(z, v), fd, atol=1e-8)
    assert np.allclose(ks_jacobian(z) @ v, ks_diff(z, v))


def test_transpose_examples_and_adjoint(rng):
    assert np.allclose(ks_diff_transpose(ONE, [1, 0, 0]), [2, 0, 0, 0])
    assert np.allclose(ks_diff_transpose(J, [1, 0, 0]), [0, 0, -2, 0])
    z = rng.normal(size=(1000, 4))
    u = rng.normal(size=(1000, 4))
    v = rng.normal(size=(1000, 3))
    lhs = np.sum(ks_diff(z, u) * v, axis=1)
    rhs = np.sum(u * ks_diff_transpose(z, v), axis=1)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs))


def test_transpose_rejects_non_pure():
    with pytest.raises(ContractError):
        ks_diff_transpose(ONE, [1.0, 0.0, 0.0, 0.0])


def test_bl_examples():
    assert bl(ONE, J) == 0.0
    assert bl(ONE, I) == -1.0
    assert bl(I, ONE) == 1.0


def test_lift_examples():
    x = ks_lift(ONE, 2 * J)
    assert np.allclose(x.q, [1, 0, 0])
    assert np.allclose(x.p, [0, 0, 1])
    th = 0.8
    z, w = fiber_rotate(th, ONE, 2 * J)
    y = ks_lift(z, w)
    assert np.allclose(y.q, x.q) and np.allclose(y.p, x.p)
    assert not KSPhasePoint(ONE, I).physical
    with pytest.raises(ContractError):
        ks_lift(ONE, I)
    with pytest.raises(DomainError):
        ks_lift(np.zeros(4), J)


def test_momentum_lift_inverts_lift(rng):
    z = rng.normal(size=4)
    p = rng.normal(size=3)
    w = ks_momentum_lift(z, p)
    assert abs(bl(z, w)) < 1e-12
    assert np.allclose(ks_lift(z, w).p, p)


def test_section_examples(rng):
    assert np.allclose(ks_section([1.0, 0, 0]), ONE)
    assert np.allclose(ks_section([4.0, 0, 0]), 2 * ONE)
    z = ks_section([0.0, -2.0, 0.0])
    assert quat_norm2(z) == pytest.approx(2.0)
    assert np.allclose(ks_map(z), [0, -2, 0])
    q = rng.normal(size=(200, 3))
    assert np.allclose(ks_map(ks_section(q)), q)
    assert np.allclose(ks_map(ks_section([-1.0, 0, 0])), [-1, 0, 0])
    with pytest.raises(DomainError):
        ks_section([0.0, 0.0, 0.0])


def test_fiber_rotation(rng):
    z, w = rng.normal(size=(2, 50, 4))
    assert np.allclose(fiber_rotate(0.0, z), z)
    zr = fiber_rotate(np.pi, ONE)
    assert np.allclose(zr, -ONE) and np.allclose(ks_map(zr), [1, 0, 0])
    th = rng.uniform(0, 6, size=50)
    zr, wr = fiber_rotate(th, z, w)
    assert np.allclose(bl(zr, wr), bl(z, w))
