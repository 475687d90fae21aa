"""
Symmetric second-order tensor algebra.

Tensors are stored as 6 components in the order 11, 22, 33, 12, 13, 23 with
shear entries unscaled. Every function accepts a single tensor of shape (6,)
or a batch of shape (..., 6). Engineering factors (2 on strain shears) and
Mandel factors (sqrt 2) are applied only by the explicit conversion helpers.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

ArrayLike = Union[np.ndarray, "SymTensor", list, tuple]

SQRT2 = np.sqrt(2.0)
SQRT23 = np.sqrt(2.0 / 3.0)

IDENTITY = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
_NORM_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
_MANDEL = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])
_ENGINEERING = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

# (row, col) of each component in the 3x3 matrix
_INDEX = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


def _arr(t: ArrayLike) -> np.ndarray:
    if isinstance(t, SymTensor):
        return t.c
    return np.asarray(t, dtype=float)


def trace(t: ArrayLike) -> np.ndarray:
    c = _arr(t)
    return c[..., 0] + c[..., 1] + c[..., 2]


def deviator(t: ArrayLike) -> np.ndarray:
    """Remove the isotropic part: dev(T) = T - tr(T)/3 I."""
    c = _arr(t)
    return c - (trace(c) / 3.0)[..., None] * IDENTITY


def contract(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """Full double contraction A:B (shear pairs counted twice)."""
    return np.sum(_arr(a) * _arr(b) * _NORM_WEIGHTS, axis=-1)


def frobenius_norm(t: ArrayLike) -> np.ndarray:
    return np.sqrt(contract(t, t))


def to_matrix(t: ArrayLike) -> np.ndarray:
    c = _arr(t)
    m = np.empty(c.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(_INDEX):
        m[..., i, j] = c[..., k]
        m[..., j, i] = c[..., k]
    return m


def from_matrix(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    sym = 0.5 * (m + np.swapaxes(m, -1, -2))
    return np.stack([sym[..., i, j] for i, j in _INDEX], axis=-1)


def strain_to_voigt(t: ArrayLike) -> np.ndarray:
    """Engineering strain vector (shear entries are gammas)."""
    return _arr(t) * _ENGINEERING


def strain_from_voigt(v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float) / _ENGINEERING


def stress_to_voigt(t: ArrayLike) -> np.ndarray:
    return _arr(t).copy()


def stress_from_voigt(v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float).copy()


def to_mandel(t: ArrayLike) -> np.ndarray:
    return _arr(t) * _MANDEL


def from_mandel(v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float) / _MANDEL


def mandel_to_voigt_moduli(c_mandel: np.ndarray) -> np.ndarray:
    """Convert Mandel moduli to moduli acting on engineering strain vectors."""
    inv = 1.0 / _MANDEL
    return c_mandel * inv[:, None] * inv[None, :]


def voigt_to_mandel_moduli(d: np.ndarray) -> np.ndarray:
    return d * _MANDEL[:, None] * _MANDEL[None, :]


def plane_strain(exx, eyy, gxy) -> np.ndarray:
    """Embed in-plane engineering strains into a full 6-component tensor."""
    exx, eyy, gxy = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (exx, eyy, gxy)))
    out = np.zeros(exx.shape + (6,))
    out[..., 0] = exx
    out[..., 1] = eyy
    out[..., 3] = 0.5 * gxy
    return out


@dataclass(frozen=True)
class SymTensor:
    """Immutable wrapper used at API boundaries; solvers work on raw arrays."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(6)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def zero(cls) -> "SymTensor":
        return cls(np.zeros(6))

    @classmethod
    def identity(cls) -> "SymTensor":
        return cls(IDENTITY)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "SymTensor":
        return cls(from_matrix(m))

    def deviator(self) -> "SymTensor":
        return SymTensor(deviator(self.c))

    def trace(self) -> float:
        return float(trace(self.c))

    def norm(self) -> float:
        return float(frobenius_norm(self.c))

    def matrix(self) -> np.ndarray:
        return to_matrix(self.c)

    def __add__(self, other: "SymTensor") -> "SymTensor":
        return SymTensor(self.c + _arr(other))

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        return SymTensor(self.c - _arr(other))

    def __mul__(self, scalar: float) -> "SymTensor":
        return SymTensor(self.c * float(scalar))

    __rmul__ = __mul__
