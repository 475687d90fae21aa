"""
Discrete problems seen by both solvers.

A problem exposes a constant elastic operator K, a unit load pattern f_hat,
and a constitutive evaluation. Internal forces always split as

    f_int(u, state) = K u - g(state)

where g is the eigen force of the inelastic strains. The PGD solver works
only with K, f_hat and g; the incremental solver uses the full evaluation.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from app.errors import LocalConvergenceError, ReturnMapError
from app.fem.assembly import DofMap, Factorization, assemble_external_force, assemble_internal_force, assemble_stiffness
from app.fem.beam import BeamSection, SpringLayout, beam_stiffness, deflection_at, section_forces, spring_forces
from app.fem.mesh import Mesh2D
from app.models import material as mat
from app.models.material import InternalState, MaterialParams, SpringState
from app.models.tensor import contract, frobenius_norm

logger = logging.getLogger(__name__)


@dataclass
class Evaluation:
    f_int: np.ndarray
    state: Any
    tangent: Optional[sparse.spmatrix]
    n_plastic: int


class DiscreteProblem(ABC):
    """Common interface of the plate and pile models."""

    name: str = "problem"

    @property
    @abstractmethod
    def n_dofs(self) -> int:
        ...

    @property
    @abstractmethod
    def load_pattern(self) -> np.ndarray:
        ...

    @property
    @abstractmethod
    def stiffness(self) -> sparse.csr_matrix:
        ...

    @cached_property
    def factorization(self) -> Factorization:
        return Factorization(self.stiffness)

    @abstractmethod
    def virgin_state(self):
        ...

    @abstractmethod
    def copy_state(self, state):
        ...

    @abstractmethod
    def evaluate(self, u: np.ndarray, state_old, tangent: bool = True) -> Evaluation:
        ...

    @abstractmethod
    def update_state(self, u: np.ndarray, state_old, step: int = -1):
        """Constitutive update only (no forces, no tangent)."""

    @abstractmethod
    def eigen_force(self, state) -> np.ndarray:
        ...

    @abstractmethod
    def stored_energy(self, u: np.ndarray, state) -> Tuple[float, float]:
        """(elastic, hardening) stored energy."""

    @abstractmethod
    def dissipation(self, state) -> float:
        ...

    @abstractmethod
    def algorithmic_dissipation(self, u_old, state_old, u_new, state_new) -> float:
        """Energy lost by the backward-Euler rule over one step."""

    @abstractmethod
    def probes(self, u: np.ndarray) -> Dict[str, float]:
        ...

    def state_probes(self, state) -> Dict[str, float]:
        return {}

    @abstractmethod
    def state_arrays(self, state) -> Dict[str, np.ndarray]:
        ...

    def state_from_arrays(self, data: Dict[str, np.ndarray]):
        raise NotImplementedError

    def metadata(self) -> Dict[str, Any]:
        return {"problem": self.name, "n_dofs": self.n_dofs}


class PlateProblem(DiscreteProblem):
    """Plane-strain Q4 model with a clamped edge and a uniform edge traction.

    The load pattern is the traction on ``load_set`` normalized to a unit
    resultant in y, so the load factor equals the resultant force.
    """

    name = "plane-strain"

    def __init__(
        self,
        mesh: Mesh2D,
        material: MaterialParams,
        thickness: float = 1.0,
        fixed: Optional[Dict[str, Sequence[int]]] = None,
        load_set: str = "top",
        probe_node: Optional[int] = None,
    ):
        self.mesh = mesh
        self.material = material
        self.thickness = float(thickness)
        self.dofmap = DofMap.from_mesh(mesh, fixed if fixed is not None else {"bottom": (0, 1)})
        self.load_set = load_set
        if probe_node is None and "top_left" in mesh.node_sets:
            probe_node = int(mesh.node_sets["top_left"][0])
        self.probe_node = probe_node
        self._weights = self.thickness * mesh.quadrature.weight_detj

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_free

    @cached_property
    def load_pattern(self) -> np.ndarray:
        edges = self.mesh.edge_sets[self.load_set]
        length = np.linalg.norm(self.mesh.nodes[edges[:, 1]] - self.mesh.nodes[edges[:, 0]], axis=1).sum()
        return assemble_external_force(self.mesh, self.dofmap, tractions={self.load_set: (0.0, 1.0 / length)})

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        return assemble_stiffness(self.mesh, self.dofmap, mat.elastic_moduli(self.material), self.thickness)

    def virgin_state(self) -> InternalState:
        return InternalState.virgin((self.mesh.n_elements, 4))

    def copy_state(self, state: InternalState) -> InternalState:
        return state.copy()

    def strains(self, u: np.ndarray) -> np.ndarray:
        return self.mesh.quadrature.strains(self.dofmap.expand(u))

    def evaluate(self, u: np.ndarray, state_old: InternalState, tangent: bool = True) -> Evaluation:
        result = mat.return_map(self.strains(u), state_old, self.material, compute_tangent=tangent)
        f_int = assemble_internal_force(self.mesh, self.dofmap, result.sigma, self.thickness)
        k_tan = assemble_stiffness(self.mesh, self.dofmap, result.d_tan, self.thickness) if tangent else None
        return Evaluation(f_int=f_int, state=result.new_state, tangent=k_tan, n_plastic=int(result.plastic_active.sum()))

    def update_state(self, u: np.ndarray, state_old: InternalState, step: int = -1) -> InternalState:
        eps = self.strains(u)
        try:
            return mat.return_map(eps, state_old, self.material, compute_tangent=False).new_state
        except LocalConvergenceError as e:
            element, gauss = self._locate_failure(eps, state_old)
            raise ReturnMapError(element, gauss, step, e) from e

    def _locate_failure(self, eps: np.ndarray, state_old: InternalState) -> Tuple[int, int]:
        for element in range(eps.shape[0]):
            for gauss in range(eps.shape[1]):
                try:
                    mat.return_map(eps[element, gauss], state_old.point((element, gauss)), self.material, False)
                except LocalConvergenceError:
                    return element, gauss
        return -1, -1

    def eigen_force(self, state: InternalState) -> np.ndarray:
        sig = mat.elastic_stress(state.eps_p + state.eps_r, self.material)
        return assemble_internal_force(self.mesh, self.dofmap, sig, self.thickness)

    def stored_energy(self, u: np.ndarray, state: InternalState) -> Tuple[float, float]:
        eps = self.strains(u)
        elastic = float(np.sum(self._weights * mat.elastic_energy(eps, state, self.material)))
        hardening = float(np.sum(self._weights * mat.hardening_energy(state, self.material)))
        return elastic, hardening

    def dissipation(self, state: InternalState) -> float:
        return float(np.sum(self._weights * state.dissipation_cum))

    def algorithmic_dissipation(self, u_old, state_old, u_new, state_new) -> float:
        d_eps_e = (self.strains(u_new) - state_new.eps_p - state_new.eps_r) - (
            self.strains(u_old) - state_old.eps_p - state_old.eps_r
        )
        dens = 0.5 * contract(mat.elastic_stress(d_eps_e, self.material), d_eps_e)
        return float(np.sum(self._weights * dens))

    def probes(self, u: np.ndarray) -> Dict[str, float]:
        if self.probe_node is None:
            return {}
        u_full = self.dofmap.expand(u)
        return {"probe_ux": float(u_full[2 * self.probe_node]), "probe_uy": float(u_full[2 * self.probe_node + 1])}

    def state_probes(self, state: InternalState) -> Dict[str, float]:
        """Inelastic strain measures at the most strained Gauss point."""
        return {
            "max_kappa": float(state.kappa.max()),
            "max_eps_r": float(frobenius_norm(state.eps_r).max()),
        }

    def state_arrays(self, state: InternalState) -> Dict[str, np.ndarray]:
        return state.to_arrays()

    def state_from_arrays(self, data) -> InternalState:
        return InternalState.from_arrays(data)

    def metadata(self) -> Dict[str, Any]:
        meta = super().metadata()
        meta.update(
            {
                "n_nodes": self.mesh.n_nodes,
                "n_elements": self.mesh.n_elements,
                "mesh_seed": self.mesh.seed,
                "thickness": self.thickness,
                "element": "Q4, 2x2 Gauss, plane strain",
            }
        )
        return meta


class PileProblem(DiscreteProblem):
    """Free Hermite beam on nodal Winkler springs, loaded laterally at the head."""

    name = "winkler-beam"

    def __init__(self, section: BeamSection, layout: SpringLayout):
        self.section = section
        self.layout = layout
        self.k_beam = beam_stiffness(section)
        self._spring_k = layout.params.E * layout.tributary

    @property
    def n_dofs(self) -> int:
        return self.section.n_dofs

    @cached_property
    def load_pattern(self) -> np.ndarray:
        f = np.zeros(self.n_dofs)
        f[0] = 1.0
        return f

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        diag = np.zeros(self.n_dofs)
        diag[self.layout.dofs] = self._spring_k
        return (self.k_beam + sparse.diags(diag)).tocsr()

    def virgin_state(self) -> SpringState:
        return SpringState.virgin(self.layout.nodes.size)

    def copy_state(self, state: SpringState) -> SpringState:
        return state.copy()

    def evaluate(self, u: np.ndarray, state_old: SpringState, tangent: bool = True) -> Evaluation:
        forces, res = spring_forces(u[self.layout.dofs], state_old, self.layout)
        f_int = self.k_beam @ u
        f_int[self.layout.dofs] += forces
        k_tan = None
        if tangent:
            diag = np.zeros(self.n_dofs)
            diag[self.layout.dofs] = res.tangent * self.layout.tributary
            k_tan = (self.k_beam + sparse.diags(diag)).tocsr()
        return Evaluation(f_int=f_int, state=res.new_state, tangent=k_tan, n_plastic=int(res.plastic_active.sum()))

    def update_state(self, u: np.ndarray, state_old: SpringState, step: int = -1) -> SpringState:
        return mat.spring_return_map(u[self.layout.dofs], state_old, self.layout.params).new_state

    def eigen_force(self, state: SpringState) -> np.ndarray:
        g = np.zeros(self.n_dofs)
        g[self.layout.dofs] = self._spring_k * (state.eps_p + state.eps_r)
        return g

    def stored_energy(self, u: np.ndarray, state: SpringState) -> Tuple[float, float]:
        w_e = u[self.layout.dofs] - state.eps_p - state.eps_r
        elastic = 0.5 * float(u @ (self.k_beam @ u)) + 0.5 * float(np.sum(self._spring_k * w_e ** 2))
        hardening = float(np.sum(self.layout.tributary * mat.spring_hardening_energy(state, self.layout.params)))
        return elastic, hardening

    def dissipation(self, state: SpringState) -> float:
        return float(np.sum(self.layout.tributary * state.dissipation_cum))

    def algorithmic_dissipation(self, u_old, state_old, u_new, state_new) -> float:
        du = u_new - u_old
        dw_e = (u_new[self.layout.dofs] - state_new.eps_p - state_new.eps_r) - (
            u_old[self.layout.dofs] - state_old.eps_p - state_old.eps_r
        )
        return 0.5 * float(du @ (self.k_beam @ du)) + 0.5 * float(np.sum(self._spring_k * dw_e ** 2))

    def probes(self, u: np.ndarray) -> Dict[str, float]:
        return {"head_deflection": float(u[0]), "head_rotation": float(u[1])}

    def state_probes(self, state: SpringState) -> Dict[str, float]:
        return {"max_kappa": float(state.kappa.max()), "max_eps_r": float(np.abs(state.eps_r).max())}

    def profiles(self, u: np.ndarray, depths: Sequence[float]) -> Dict[str, np.ndarray]:
        moment, shear = section_forces(self.section, u, depths)
        return {"displacement": deflection_at(self.section, u, depths), "shear": shear, "moment": moment}

    def state_arrays(self, state: SpringState) -> Dict[str, np.ndarray]:
        return state.to_arrays()

    def state_from_arrays(self, data) -> SpringState:
        return SpringState(**{k: np.array(data[k]) for k in ("eps_p", "kappa", "eps_r", "lambda_cum", "dissipation_cum")})

    def metadata(self) -> Dict[str, Any]:
        meta = super().metadata()
        meta.update(
            {
                "n_nodes": self.section.n_nodes,
                "n_springs": int(self.layout.nodes.size),
                "EI": self.section.EI,
                "element": "Hermite Euler-Bernoulli beam, nodal springs",
            }
        )
        return meta
