"""
Bilinear quadrilateral (Q4) kinematics with 2x2 Gauss quadrature.

B matrices have 6 rows so they act directly on the 6-component strain
layout: rows for zz, xz and yz are zero under plane strain and the xy row
produces the engineering shear gamma_xy.
"""

from dataclasses import dataclass

import numpy as np

from app.errors import MeshError
from app.models import tensor as T

_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)

# natural coordinates of the element corners, counter-clockwise
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def shape_functions(xi: float, eta: float):
    """Values (4,) and natural derivatives (4, 2) of the Q4 shape functions."""
    n = 0.25 * (1.0 + _CORNERS[:, 0] * xi) * (1.0 + _CORNERS[:, 1] * eta)
    dn = np.empty((4, 2))
    dn[:, 0] = 0.25 * _CORNERS[:, 0] * (1.0 + _CORNERS[:, 1] * eta)
    dn[:, 1] = 0.25 * _CORNERS[:, 1] * (1.0 + _CORNERS[:, 0] * xi)
    return n, dn


_DN_NAT = np.stack([shape_functions(x, e)[1] for x, e in GAUSS_POINTS])  # (4 gauss, 4 nodes, 2)


def element_geometry(coords: np.ndarray):
    """Jacobian determinants (ne, 4) and physical derivatives (ne, 4, 4, 2).

    ``coords`` holds element corner coordinates with shape (ne, 4, 2).
    """
    jac = np.einsum("gac,eak->egck", _DN_NAT, coords)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(det <= 0.0):
        bad = np.argwhere(det <= 0.0)[0]
        raise MeshError(f"non-positive Jacobian in element {bad[0]} at gauss point {bad[1]}")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    dndx = np.einsum("gac,egkc->egak", _DN_NAT, inv)
    return det, dndx


def b_matrices(dndx: np.ndarray) -> np.ndarray:
    """Strain-displacement matrices (ne, ng, 6, 8) for engineering strains."""
    ne, ng = dndx.shape[:2]
    b = np.zeros((ne, ng, 6, 8))
    dx = dndx[..., 0]
    dy = dndx[..., 1]
    b[..., 0, 0::2] = dx
    b[..., 1, 1::2] = dy
    b[..., 3, 0::2] = dy
    b[..., 3, 1::2] = dx
    return b


@dataclass
class Quadrature:
    """Per-point geometric data of a whole mesh."""

    b: np.ndarray  # (ne, 4, 6, 8)
    weight_detj: np.ndarray  # (ne, 4)
    dofs: np.ndarray  # (ne, 8) global dof indices

    @classmethod
    def from_mesh(cls, nodes: np.ndarray, elements: np.ndarray) -> "Quadrature":
        coords = nodes[elements]
        det, dndx = element_geometry(coords)
        dofs = np.empty((elements.shape[0], 8), dtype=np.int64)
        dofs[:, 0::2] = 2 * elements
        dofs[:, 1::2] = 2 * elements + 1
        return cls(b=b_matrices(dndx), weight_detj=det * GAUSS_WEIGHTS, dofs=dofs)

    @property
    def n_points(self) -> int:
        return self.weight_detj.size

    def strains(self, u_full: np.ndarray) -> np.ndarray:
        """Strain tensors (ne, 4, 6) from a full nodal displacement vector."""
        ue = u_full[self.dofs]
        return T.strain_from_voigt(np.einsum("egij,ej->egi", self.b, ue))
