"""
Euler-Bernoulli beam on elastoplastic Winkler springs.

The beam axis is the depth coordinate x, measured downward from the head
(x = 0). Each node carries a lateral deflection w and a rotation w'.
Springs sit at every node except the head; spring k represents the
segment of length h = L / n_elements directly above it and takes its
material from the layer containing the segment midpoint.

Units: m, kN. Soil layer moduli are subgrade moduli per unit pile length
(kN/m^2); a spring's force is its scalar stress times its tributary length.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from app.errors import InvalidInput
from app.models.material import MaterialParams, SpringParams, SpringResult, SpringState, spring_return_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BeamSection:
    """Hollow circular pile section."""

    E: float = 2.1e8
    r_outer: float = 1.0
    r_inner: float = 0.92
    length: float = 15.0
    n_elements: int = 45

    def __post_init__(self):
        if self.E <= 0:
            raise InvalidInput("beam modulus must be positive")
        if not 0.0 <= self.r_inner < self.r_outer:
            raise InvalidInput("section radii must satisfy 0 <= r_inner < r_outer")
        if self.length <= 0.0:
            raise InvalidInput("zero-length beam rejected")
        if self.n_elements < 1:
            raise InvalidInput("beam needs at least one element")

    @property
    def I(self) -> float:
        return np.pi * (self.r_outer ** 4 - self.r_inner ** 4) / 4.0

    @property
    def EI(self) -> float:
        return self.E * self.I

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    def node_depths(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_nodes)


@dataclass
class SoilLayerTable:
    """Ordered (top, bottom, material) intervals partitioning the pile depth."""

    layers: List[Tuple[float, float, MaterialParams]] = field(default_factory=list)

    def validate(self, length: float) -> "SoilLayerTable":
        if not self.layers:
            raise InvalidInput("soil layer table is empty")
        tops = [l[0] for l in self.layers]
        bottoms = [l[1] for l in self.layers]
        if abs(tops[0]) > 1e-12 or abs(bottoms[-1] - length) > 1e-9 * max(length, 1.0):
            raise InvalidInput(f"soil layers must cover [0, {length}]")
        for (t, b, _), nxt in zip(self.layers, tops[1:] + [None]):
            if b <= t:
                raise InvalidInput(f"soil layer [{t}, {b}] is empty")
            if nxt is not None and abs(nxt - b) > 1e-9:
                raise InvalidInput("soil layers overlap or leave a gap")
        return self

    def material_at(self, depth: float) -> MaterialParams:
        for top, bottom, mat in self.layers:
            if top <= depth < bottom:
                return mat
        if abs(depth - self.layers[-1][1]) < 1e-12:
            return self.layers[-1][2]
        raise InvalidInput(f"depth {depth} outside the soil layer table")


def element_stiffness(EI: float, h: float) -> np.ndarray:
    if h <= 0.0:
        raise InvalidInput("zero-length beam element rejected")
    return (EI / h ** 3) * np.array(
        [
            [12.0, 6.0 * h, -12.0, 6.0 * h],
            [6.0 * h, 4.0 * h ** 2, -6.0 * h, 2.0 * h ** 2],
            [-12.0, -6.0 * h, 12.0, -6.0 * h],
            [6.0 * h, 2.0 * h ** 2, -6.0 * h, 4.0 * h ** 2],
        ]
    )


def beam_stiffness(section: BeamSection, depths: Optional[np.ndarray] = None) -> sparse.csr_matrix:
    """Unconstrained Hermite stiffness; dof order (w0, w0', w1, w1', ...)."""
    x = section.node_depths() if depths is None else np.asarray(depths, dtype=float)
    h = np.diff(x)
    if np.any(h <= 0.0):
        raise InvalidInput("zero-length beam element rejected")
    ne = h.size
    ke = np.stack([element_stiffness(section.EI, hi) for hi in h])
    dofs = 2 * np.arange(ne)[:, None] + np.arange(4)[None, :]
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    n = 2 * (ne + 1)
    return sparse.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


@dataclass
class SpringLayout:
    """Spring positions, tributary lengths and per-spring constants."""

    nodes: np.ndarray
    tributary: np.ndarray
    params: SpringParams

    @property
    def dofs(self) -> np.ndarray:
        return 2 * self.nodes

    @classmethod
    def build(cls, section: BeamSection, layers: SoilLayerTable, soil_modulus_factor: float = 1.0) -> "SpringLayout":
        layers.validate(section.length)
        x = section.node_depths()
        nodes = np.arange(1, section.n_nodes)
        trib = np.diff(x)
        mids = x[1:] - 0.5 * trib
        mats = [layers.material_at(m) for m in mids]
        params = SpringParams.from_materials(mats).scaled(np.full(nodes.size, soil_modulus_factor))
        return cls(nodes=nodes, tributary=trib, params=params)


def spring_forces(
    deflections: np.ndarray, states: SpringState, layout: SpringLayout
) -> Tuple[np.ndarray, SpringResult]:
    """Nodal spring forces (force units) and the updated spring states.

    ``deflections`` are the lateral displacements at the spring nodes.
    """
    result = spring_return_map(deflections, states, layout.params)
    return result.sigma * layout.tributary, result


def section_forces(section: BeamSection, u: np.ndarray, depths: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Bending moment M = EI w'' and shear V = -EI w''' at sampled depths."""
    x = section.node_depths()
    depths = np.asarray(depths, dtype=float)
    e = np.clip(np.searchsorted(x, depths, side="right") - 1, 0, section.n_elements - 1)
    h = x[e + 1] - x[e]
    s = depths - x[e]
    ue = np.stack([u[2 * e], u[2 * e + 1], u[2 * e + 2], u[2 * e + 3]], axis=-1)
    d2 = np.stack(
        [-6.0 / h ** 2 + 12.0 * s / h ** 3, -4.0 / h + 6.0 * s / h ** 2, 6.0 / h ** 2 - 12.0 * s / h ** 3, -2.0 / h + 6.0 * s / h ** 2],
        axis=-1,
    )
    d3 = np.stack([12.0 / h ** 3, 6.0 / h ** 2, -12.0 / h ** 3, 6.0 / h ** 2], axis=-1)
    moment = section.EI * np.sum(d2 * ue, axis=-1)
    shear = -section.EI * np.sum(d3 * ue, axis=-1)
    return moment, shear


def deflection_at(section: BeamSection, u: np.ndarray, depths: Sequence[float]) -> np.ndarray:
    """Hermite-interpolated lateral deflection at sampled depths."""
    x = section.node_depths()
    depths = np.asarray(depths, dtype=float)
    e = np.clip(np.searchsorted(x, depths, side="right") - 1, 0, section.n_elements - 1)
    h = x[e + 1] - x[e]
    r = (depths - x[e]) / h
    n = np.stack([1 - 3 * r ** 2 + 2 * r ** 3, h * (r - 2 * r ** 2 + r ** 3), 3 * r ** 2 - 2 * r ** 3, h * (r ** 3 - r ** 2)], axis=-1)
    ue = np.stack([u[2 * e], u[2 * e + 1], u[2 * e + 2], u[2 * e + 3]], axis=-1)
    return np.sum(n * ue, axis=-1)
