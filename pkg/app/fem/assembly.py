"""
Global assembly for plane-strain Q4 meshes.

All operators are returned on the free dofs only; ``DofMap`` converts
between free and full vectors.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from app.errors import InvalidInput, SingularSystemError
from app.fem.element import GAUSS_POINTS, shape_functions
from app.fem.mesh import Mesh2D

logger = logging.getLogger(__name__)


@dataclass
class DofMap:
    """Two dofs (ux, uy) per node, split into free and constrained sets."""

    n_nodes: int
    constrained: np.ndarray
    free: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: Mesh2D, fixed: Optional[Dict[str, Sequence[int]]] = None) -> "DofMap":
        """``fixed`` maps node-set names to the constrained components (0=x, 1=y)."""
        constrained = []
        for name, comps in (fixed or {}).items():
            if name not in mesh.node_sets:
                raise InvalidInput(f"unknown node set '{name}'")
            nodes = mesh.node_sets[name]
            for comp in comps:
                constrained.append(2 * nodes + int(comp))
        cons = np.unique(np.concatenate(constrained)) if constrained else np.zeros(0, dtype=np.int64)
        free = np.setdiff1d(np.arange(2 * mesh.n_nodes), cons)
        return cls(n_nodes=mesh.n_nodes, constrained=cons, free=free)

    @property
    def n_total(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_free(self) -> int:
        return self.free.size

    def node_dofs(self, node: int) -> Tuple[int, int]:
        return 2 * node, 2 * node + 1

    def free_index(self, dof: int) -> int:
        """Position of a global dof inside the free vector."""
        pos = np.searchsorted(self.free, dof)
        if pos >= self.free.size or self.free[pos] != dof:
            raise InvalidInput(f"dof {dof} is constrained")
        return int(pos)

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(u_free.shape[:-1] + (self.n_total,))
        u[..., self.free] = u_free
        return u

    def restrict(self, v_full: np.ndarray) -> np.ndarray:
        return v_full[..., self.free]


def assemble_stiffness(
    mesh: Mesh2D, dofmap: DofMap, moduli: np.ndarray, thickness: float = 1.0
) -> sparse.csr_matrix:
    """K = t * sum B^T D B over all Gauss points.

    ``moduli`` is a single (6, 6) matrix or one per point, (ne, 4, 6, 6).
    """
    q = mesh.quadrature
    d = np.broadcast_to(np.asarray(moduli, dtype=float), q.weight_detj.shape + (6, 6))
    ke = np.einsum("egia,egij,egjb,eg->eab", q.b, d, q.b, thickness * q.weight_detj, optimize=True)
    rows = np.repeat(q.dofs, 8, axis=1).ravel()
    cols = np.tile(q.dofs, (1, 8)).ravel()
    k_full = sparse.coo_matrix((ke.ravel(), (rows, cols)), shape=(dofmap.n_total, dofmap.n_total)).tocsr()
    k = k_full[dofmap.free][:, dofmap.free]
    # symmetrize round-off from the per-point products
    return ((k + k.T) * 0.5).tocsr()


def assemble_internal_force(
    mesh: Mesh2D, dofmap: DofMap, stresses: np.ndarray, thickness: float = 1.0, full: bool = False
) -> np.ndarray:
    """f_int = t * sum B^T sigma, with sigma given per point as (ne, 4, 6)."""
    q = mesh.quadrature
    fe = np.einsum("egia,egi,eg->ea", q.b, stresses, thickness * q.weight_detj, optimize=True)
    f = np.bincount(q.dofs.ravel(), weights=fe.ravel(), minlength=dofmap.n_total)
    return f if full else dofmap.restrict(f)


def assemble_external_force(
    mesh: Mesh2D,
    dofmap: DofMap,
    tractions: Optional[Dict[str, Iterable[float]]] = None,
    body_forces: Optional[Iterable[float]] = None,
    thickness: float = 1.0,
    full: bool = False,
) -> np.ndarray:
    """Consistent nodal loads.

    ``tractions`` maps edge-set names to a constant (tx, ty) force per unit
    edge length; ``body_forces`` is a force per unit volume.
    """
    f = np.zeros(dofmap.n_total)
    for name, vec in (tractions or {}).items():
        if name not in mesh.edge_sets:
            raise InvalidInput(f"traction on undefined boundary set '{name}'")
        t = np.asarray(vec, dtype=float)
        edges = mesh.edge_sets[name]
        lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
        for comp in range(2):
            half = 0.5 * lengths * t[comp]
            np.add.at(f, 2 * edges[:, 0] + comp, half)
            np.add.at(f, 2 * edges[:, 1] + comp, half)
    if body_forces is not None:
        b = np.asarray(body_forces, dtype=float)
        q = mesh.quadrature
        n_at = np.stack([shape_functions(x, e)[0] for x, e in GAUSS_POINTS])  # (4 gauss, 4 nodes)
        nodal = np.einsum("ga,eg->ea", n_at, thickness * q.weight_detj)
        for comp in range(2):
            np.add.at(f, 2 * mesh.elements.ravel() + comp, (nodal * b[comp]).ravel())
    return f if full else dofmap.restrict(f)


class Factorization:
    """Sparse LU of a constrained system matrix, reusable across right-hand sides."""

    def __init__(self, matrix: sparse.spmatrix):
        self.shape = matrix.shape
        try:
            self._lu = spla.splu(sparse.csc_matrix(matrix))
        except RuntimeError as e:
            raise SingularSystemError(f"factorization failed: {e}") from e

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for one (n,) or several (k, n) right-hand sides."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.ndim == 1:
            x = self._lu.solve(rhs)
        else:
            x = self._lu.solve(np.ascontiguousarray(rhs.T)).T
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("solution is not finite; system matrix is singular")
        return x
