import numpy as np
import pytest

from app.models import tensor as T
from app.models.tensor import SymTensor


def test_deviator_is_traceless(rng):
    t = rng.normal(size=(5, 6))
    assert np.allclose(T.trace(T.deviator(t)), 0.0, atol=1e-14)


@pytest.mark.parametrize(
    "t, expected",
    [
        (T.IDENTITY, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        (np.zeros(6), [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ([3.0, 0.0, 0.0, 0.0, 0.0, 0.0], [2.0, -1.0, -1.0, 0.0, 0.0, 0.0]),
    ],
)
def test_deviator_examples(t, expected):
    assert np.allclose(T.deviator(t), expected)


@pytest.mark.parametrize(
    "t, expected",
    [
        (np.zeros(6), 0.0),
        (T.IDENTITY, np.sqrt(3.0)),
        ([0.0, 0.0, 0.0, 1.0, 0.0, 0.0], np.sqrt(2.0)),
    ],
)
def test_norm_examples(t, expected):
    assert T.frobenius_norm(t) == pytest.approx(expected)


def test_norm_splits_into_deviatoric_and_volumetric_parts(rng):
    for t in rng.normal(size=(20, 6)):
        total = T.frobenius_norm(t) ** 2
        split = T.frobenius_norm(T.deviator(t)) ** 2 + T.trace(t) ** 2 / 3.0
        assert split == pytest.approx(total, rel=1e-12)
        assert np.allclose(T.deviator(t) + T.trace(t) / 3.0 * T.IDENTITY, t)


def test_contract_matches_matrix_product(rng):
    a, b = rng.normal(size=6), rng.normal(size=6)
    expected = np.sum(T.to_matrix(a) * T.to_matrix(b))
    assert T.contract(a, b) == pytest.approx(expected)


def test_matrix_round_trip(rng):
    t = rng.normal(size=6)
    assert np.allclose(T.from_matrix(T.to_matrix(t)), t)


def test_mandel_preserves_norm(rng):
    t = rng.normal(size=6)
    assert np.linalg.norm(T.to_mandel(t)) == pytest.approx(T.frobenius_norm(t))
    assert np.allclose(T.from_mandel(T.to_mandel(t)), t)


def test_engineering_shear_is_doubled():
    eps = np.array([0.1, 0.2, 0.0, 0.05, 0.0, 0.0])
    v = T.strain_to_voigt(eps)
    assert v[3] == pytest.approx(0.1)
    assert np.allclose(T.strain_from_voigt(v), eps)


def test_voigt_moduli_consistent_with_mandel(rng):
    a = rng.normal(size=(6, 6))
    c_mandel = a + a.T
    d = T.mandel_to_voigt_moduli(c_mandel)
    eps = rng.normal(size=6)
    sigma_from_voigt = d @ T.strain_to_voigt(eps)
    sigma_from_mandel = T.from_mandel(c_mandel @ T.to_mandel(eps))
    assert np.allclose(sigma_from_voigt, sigma_from_mandel)
    assert np.allclose(T.voigt_to_mandel_moduli(d), c_mandel)


def test_plane_strain_embedding():
    eps = T.plane_strain(1e-3, -2e-3, 4e-3)
    assert np.allclose(eps, [1e-3, -2e-3, 0.0, 2e-3, 0.0, 0.0])


def test_sym_tensor_is_immutable():
    t = SymTensor.identity()
    with pytest.raises(ValueError):
        t.c[0] = 2.0
    assert t.trace() == pytest.approx(3.0)
    assert (t * 2.0).trace() == pytest.approx(6.0)
    assert t.deviator().norm() == pytest.approx(0.0)
    assert np.allclose((t - t).c, 0.0)
