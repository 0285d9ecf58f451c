import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from starkzeeman.quat import (
    ONE,
    I,
    J,
    K,
    PureQuaternion,
    Quaternion,
    as_quat,
    embed,
    exp_i,
    from_complex_pair,
    is_pure,
    left_matrix,
    quat_conj,
    quat_mul,
    quat_norm,
    quat_norm2,
    right_matrix,
    to_complex_pair,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
quats = arrays(np.float64, 4, elements=finite)


def test_defining_relations():
    assert np.allclose(quat_mul(I, J), K)
    assert np.allclose(quat_mul(J, K), I)
    assert np.allclose(quat_mul(K, I), J)
    for u in (I, J, K):
        assert np.allclose(quat_mul(u, u), -ONE)


def test_hand_product():
    # ki = j and ik = -j, so the order matters
    assert np.allclose(quat_mul(ONE + K, I), I + J)
    assert np.allclose(quat_mul(I, ONE + K), I - J)
    z = np.array([0.3, -1.0, 2.0, 0.5])
    assert np.allclose(quat_mul(ONE, z), z)


def test_conjugation_examples():
    assert np.allclose(quat_conj(ONE), ONE)
    assert np.allclose(quat_conj(I), -I)
    assert np.allclose(quat_conj(ONE + 2 * J), ONE - 2 * J)


@given(quats, quats)
@settings(max_examples=50)
def test_matrix_representations(a, b):
    ab = quat_mul(a, b)
    assert np.allclose(left_matrix(a) @ b, ab, atol=1e-9 * (1 + np.abs(ab).max()))
    assert np.allclose(right_matrix(b) @ a, ab, atol=1e-9 * (1 + np.abs(ab).max()))


@given(quats, quats)
@settings(max_examples=50)
def test_norm_multiplicative_and_conj_antihomomorphic(a, b):
    scale = 1 + quat_norm2(a) * quat_norm2(b)
    assert abs(quat_norm2(quat_mul(a, b)) - quat_norm2(a) * quat_norm2(b)) < 1e-9 * scale
    lhs = quat_conj(quat_mul(a, b))
    rhs = quat_mul(quat_conj(b), quat_conj(a))
    assert np.allclose(lhs, rhs, atol=1e-9 * np.sqrt(scale))


def test_z_zbar_is_norm(rng):
    z = rng.normal(size=(100, 4))
    p = quat_mul(z, quat_conj(z))
    assert np.allclose(p[:, 0], quat_norm2(z))
    assert np.allclose(p[:, 1:], 0.0, atol=1e-14)


def test_exp_i_and_complex_pair(rng):
    z = rng.normal(size=(20, 4))
    th = rng.uniform(0, 6, size=20)
    rotated = quat_mul(exp_i(th), z)
    c = to_complex_pair(z) * np.exp(1j * th)[:, None]
    assert np.allclose(rotated, from_complex_pair(c))
    assert np.allclose(quat_norm(exp_i(th)), 1.0)


def test_pure_checks():
    assert is_pure(embed([1.0, 2.0, 3.0]))
    assert not is_pure(ONE)
    assert np.allclose(as_quat([1.0, 2.0, 3.0]), [0.0, 1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        as_quat([1.0, 2.0])


def test_value_types():
    a = Quaternion(1.0, (0.0, 0.0, 1.0))
    assert np.allclose((a * Quaternion(0.0, (1.0, 0.0, 0.0))).to_array(), I + J)
    assert a.conj().im == (0.0, 0.0, -1.0)
    assert a.norm() == pytest.approx(np.sqrt(2))
    p = PureQuaternion((1.0, 2.0, 3.0))
    assert p.as_quaternion().re == 0.0
    with pytest.raises(ValueError):
        PureQuaternion((1.0, np.inf, 0.0))
