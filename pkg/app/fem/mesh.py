"""
Quadrilateral meshes: container, validation, JSON I/O and the built-in
generator for a square plate with a circular hole.

JSON mesh schema (version 1)::

    {
      "schema_version": 1,
      "nodes": [[x, y], ...],            # mm
      "elements": [[n0, n1, n2, n3], ...],  # counter-clockwise
      "node_sets": {"name": [node, ...]},
      "edge_sets": {"name": [[na, nb], ...]},
      "seed": 0
    }
"""

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from app.errors import MeshError
from app.fem.element import Quadrature

logger = logging.getLogger(__name__)

MESH_SCHEMA_VERSION = 1


@dataclass
class Mesh2D:
    nodes: np.ndarray
    elements: np.ndarray
    node_sets: Dict[str, np.ndarray] = field(default_factory=dict)
    edge_sets: Dict[str, np.ndarray] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.elements = np.asarray(self.elements, dtype=np.int64).reshape(-1, 4)
        self.node_sets = {k: np.asarray(v, dtype=np.int64).ravel() for k, v in self.node_sets.items()}
        self.edge_sets = {k: np.asarray(v, dtype=np.int64).reshape(-1, 2) for k, v in self.edge_sets.items()}

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def quadrature(self) -> Quadrature:
        return Quadrature.from_mesh(self.nodes, self.elements)

    def validate(self) -> "Mesh2D":
        n = self.n_nodes
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            raise MeshError("element connectivity references missing nodes")
        for name, ids in list(self.node_sets.items()) + list(self.edge_sets.items()):
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise MeshError(f"boundary set '{name}' references missing nodes")
        # raises on non-positive Jacobians
        _ = self.quadrature
        return self

    def element_areas(self) -> np.ndarray:
        return self.quadrature.weight_detj.sum(axis=1)

    def find_node(self, x: float, y: float) -> int:
        return int(np.argmin(np.hypot(self.nodes[:, 0] - x, self.nodes[:, 1] - y)))

    def to_dict(self) -> dict:
        return {
            "schema_version": MESH_SCHEMA_VERSION,
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "node_sets": {k: v.tolist() for k, v in self.node_sets.items()},
            "edge_sets": {k: v.tolist() for k, v in self.edge_sets.items()},
            "seed": self.seed,
        }

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, data: dict) -> "Mesh2D":
        version = data.get("schema_version", MESH_SCHEMA_VERSION)
        if version != MESH_SCHEMA_VERSION:
            raise MeshError(f"unsupported mesh schema version {version}")
        try:
            mesh = cls(
                nodes=data["nodes"],
                elements=data["elements"],
                node_sets=data.get("node_sets", {}),
                edge_sets=data.get("edge_sets", {}),
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise MeshError(f"malformed mesh data: {e}") from e
        return mesh.validate()

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Mesh2D":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise MeshError(f"cannot read mesh file {path}: {e}") from e
        return cls.from_dict(data)


def rectangle(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> Mesh2D:
    """Structured mesh of [0, lx] x [0, ly] with bottom/top/left/right sets."""
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    elements = [[nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)] for j in range(ny) for i in range(nx)]
    bottom = [nid(i, 0) for i in range(nx + 1)]
    top = [nid(i, ny) for i in range(nx + 1)]
    left = [nid(0, j) for j in range(ny + 1)]
    right = [nid(nx, j) for j in range(ny + 1)]
    return Mesh2D(
        nodes=nodes,
        elements=elements,
        node_sets={"bottom": bottom, "top": top, "left": left, "right": right},
        edge_sets={
            "bottom": [[bottom[i], bottom[i + 1]] for i in range(nx)],
            "top": [[top[i], top[i + 1]] for i in range(nx)],
            "left": [[left[j], left[j + 1]] for j in range(ny)],
            "right": [[right[j], right[j + 1]] for j in range(ny)],
        },
    ).validate()


def plate_with_hole(
    width: float = 30.0,
    height: float = 30.0,
    radius: float = 6.0,
    n_tangential: int = 16,
    n_radial: int = 12,
    grading: float = 1.0,
    center: Optional[Tuple[float, float]] = None,
    jitter: float = 0.0,
    seed: int = 0,
) -> Mesh2D:
    """O-grid of four zones around a circular hole.

    Zone k spans the hole angles [-135 + 90k, -45 + 90k] degrees and maps to
    one side of the square (bottom, right, top, left). Node (i, j) sits at
    tangential index i in [0, 4 n_tangential) and radial index j in
    [0, n_radial]; its id is j * 4 * n_tangential + i.

    Sets: ``bottom`` and ``top`` (outer sides, node and edge sets),
    ``hole`` (j = 0) and ``top_left`` (the single corner node).
    """
    if min(n_tangential, n_radial) < 1:
        raise MeshError("plate mesh needs at least one element per direction")
    if not 0.0 < radius < 0.5 * min(width, height):
        raise MeshError("hole radius must be positive and fit inside the plate")
    cx, cy = center if center is not None else (0.5 * width, 0.5 * height)
    nt, nr = n_tangential, n_radial
    ring = 4 * nt

    corners = np.array(
        [
            [cx - 0.5 * width, cy - 0.5 * height],
            [cx + 0.5 * width, cy - 0.5 * height],
            [cx + 0.5 * width, cy + 0.5 * height],
            [cx - 0.5 * width, cy + 0.5 * height],
        ]
    )
    i = np.arange(ring)
    theta = np.deg2rad(-135.0 + 360.0 * i / ring)
    inner = np.column_stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)])
    zone, s = i // nt, (i % nt) / nt
    outer = corners[zone] + s[:, None] * (corners[(zone + 1) % 4] - corners[zone])

    r = (np.arange(nr + 1) / nr) ** grading
    nodes = (1.0 - r)[:, None, None] * inner[None] + r[:, None, None] * outer[None]

    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        spacing = np.linalg.norm(outer - inner, axis=1)[None, :, None] / nr
        noise = rng.uniform(-1.0, 1.0, size=nodes.shape) * jitter * spacing
        noise[0] = 0.0
        noise[-1] = 0.0
        nodes = nodes + noise
    nodes = nodes.reshape(-1, 2)

    def nid(ii, jj):
        return jj * ring + ii % ring

    ii, jj = np.meshgrid(np.arange(ring), np.arange(nr), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    elements = np.column_stack([nid(ii, jj), nid(ii, jj + 1), nid(ii + 1, jj + 1), nid(ii + 1, jj)])

    bottom = np.array([nid(k, nr) for k in range(0, nt + 1)])
    top = np.array([nid(k, nr) for k in range(2 * nt, 3 * nt + 1)])
    mesh = Mesh2D(
        nodes=nodes,
        elements=elements,
        node_sets={
            "bottom": bottom,
            "top": top,
            "hole": np.arange(ring),
            "top_left": [nid(3 * nt, nr)],
        },
        edge_sets={
            "bottom": np.column_stack([bottom[:-1], bottom[1:]]),
            "top": np.column_stack([top[:-1], top[1:]]),
        },
        seed=seed,
    )
    logger.debug(f"plate mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements (seed {seed})")
    return mesh.validate()
