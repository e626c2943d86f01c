"""Triangle meshes carrying vertex images in a contact target.

A :class:`SurfaceMesh` stores combinatorics plus optional per-vertex
parameters; a :class:`DiscreteImmersion` adds per-vertex target points.  For
toroidal parameter domains the parameters live on a fundamental domain and
faces crossing the seam are unwrapped locally; a Legendrian coordinate with
nonzero monodromy (the lift of a Lagrangian torus has one) is corrected per
crossing by the stored monodromy, so edge and face computations see the true
immersion rather than the branch jump.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GeometryDomainError

TARGETS = ("stiefel", "heisenberg")
POINT_DIM = {"stiefel": 8, "heisenberg": 5}


class SurfaceMesh:
    """Oriented manifold triangle mesh with optional parameter coordinates."""

    def __init__(
        self,
        triangles,
        n_vertices,
        uv=None,
        genus=0,
        boundary_loops=(),
        uv_periods=None,
        generator_loops=(),
    ):
        self.triangles = np.asarray(triangles, int).reshape(-1, 3)
        self.n_vertices = int(n_vertices)
        self.uv = None if uv is None else np.asarray(uv, float).reshape(self.n_vertices, 2)
        self.genus = int(genus)
        self.boundary_loops = [list(map(int, loop)) for loop in boundary_loops]
        self.uv_periods = None if uv_periods is None else (
            float(uv_periods[0]) if uv_periods[0] else 0.0,
            float(uv_periods[1]) if uv_periods[1] else 0.0,
        )
        self.generator_loops = [list(map(int, loop)) for loop in generator_loops]
        self._build_adjacency()
        self._validate()

    # -- construction ------------------------------------------------------

    def _build_adjacency(self):
        tri = self.triangles
        # Canonical undirected edges and face->edge incidence.
        raw = np.concatenate([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]])
        canon = np.sort(raw, axis=1)
        self.edges, inverse = np.unique(canon, axis=0, return_inverse=True)
        self.face_edges = inverse.reshape(3, -1).T  # face f, local edge k (opposite corner k)
        n_e = len(self.edges)
        edge_faces = [[] for _ in range(n_e)]
        for f in range(len(tri)):
            for k in range(3):
                edge_faces[self.face_edges[f, k]].append(f)
        self.edge_faces = edge_faces
        self.face_neighbors = -np.ones((len(tri), 3), int)
        for f in range(len(tri)):
            for k in range(3):
                fs = edge_faces[self.face_edges[f, k]]
                if len(fs) == 2:
                    self.face_neighbors[f, k] = fs[0] if fs[1] == f else fs[1]
        self.boundary_edge_mask = np.array([len(fs) == 1 for fs in edge_faces])
        self.vertex_neighbors = [set() for _ in range(self.n_vertices)]
        for a, b in self.edges:
            self.vertex_neighbors[a].add(int(b))
            self.vertex_neighbors[b].add(int(a))
        self.boundary_vertices = set()
        for e, is_b in enumerate(self.boundary_edge_mask):
            if is_b:
                self.boundary_vertices.update(map(int, self.edges[e]))

    def _validate(self):
        tri = self.triangles
        if tri.size and (tri.min() < 0 or tri.max() >= self.n_vertices):
            raise GeometryDomainError("triangle index out of range")
        directed = set()
        for f in tri:
            for k in range(3):
                e = (int(f[k]), int(f[(k + 1) % 3]))
                if e in directed:
                    raise GeometryDomainError(f"directed edge {e} repeated: mesh not consistently oriented")
                directed.add(e)
        for e, fs in enumerate(self.edge_faces):
            if len(fs) > 2:
                raise GeometryDomainError(f"edge {tuple(self.edges[e])} borders {len(fs)} faces")
        chi = self.n_vertices - len(self.edges) + len(tri)
        n_comp = len(self.components())
        expected = 2 * n_comp - 2 * self.genus - len(self.boundary_loops)
        if chi != expected:
            raise GeometryDomainError(
                f"Euler characteristic {chi} inconsistent with genus {self.genus}, "
                f"{n_comp} components and {len(self.boundary_loops)} boundary loops "
                f"(expected {expected})"
            )

    # -- parameter-domain unwrapping ----------------------------------------

    def wraps(self, uv_from, uv_to):
        """Integer period crossings taking uv_to into uv_from's chart."""
        if self.uv_periods is None:
            return np.zeros(np.shape(uv_to), int) if np.ndim(uv_to) else 0
        d = np.asarray(uv_to, float) - np.asarray(uv_from, float)
        w = np.zeros_like(d)
        for axis in (0, 1):
            p = self.uv_periods[axis]
            if p:
                w[..., axis] = np.round(d[..., axis] / p)
        return w.astype(int)

    def corner_uv_local(self):
        """(F, 3, 2) per-face uv with corners 1, 2 unwrapped into corner 0's chart,
        and the matching (F, 3, 2) integer wraps that were removed."""
        if self.uv is None:
            raise GeometryDomainError("mesh carries no uv parameters")
        uv = self.uv[self.triangles]  # (F, 3, 2)
        wraps = np.zeros_like(uv)
        if self.uv_periods is not None:
            base = uv[:, [0], :]
            w = self.wraps(np.broadcast_to(base, uv.shape), uv)
            periods = np.array([self.uv_periods[0] or 0.0, self.uv_periods[1] or 0.0])
            uv = uv - w * periods
            wraps = w
        return uv, wraps.astype(int)

    def interior_vertices(self):
        return [v for v in range(self.n_vertices) if v not in self.boundary_vertices]

    def components(self):
        """Connected components as vertex-index lists."""
        seen = np.zeros(self.n_vertices, bool)
        out = []
        for start in range(self.n_vertices):
            if seen[start]:
                continue
            stack, comp = [start], []
            seen[start] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for u in self.vertex_neighbors[v]:
                    if not seen[u]:
                        seen[u] = True
                        stack.append(u)
            out.append(comp)
        return out


@dataclass
class DiscreteImmersion:
    """A mesh with vertex images in one of the two targets."""

    mesh: SurfaceMesh
    target: str
    positions: np.ndarray
    legendrian_tol: float = 1e-8
    phi_monodromy: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.target not in TARGETS:
            raise GeometryDomainError(f"unknown target {self.target!r}")
        dim = POINT_DIM[self.target]
        self.positions = np.asarray(self.positions, float).reshape(self.mesh.n_vertices, dim)
        self.phi_monodromy = (float(self.phi_monodromy[0]), float(self.phi_monodromy[1]))
        if not np.all(np.isfinite(self.positions)):
            raise GeometryDomainError("positions contain non-finite values")

    # -- point invariants ---------------------------------------------------

    def vertex_invariant_defect(self):
        if self.target == "heisenberg":
            return 0.0
        a, b = self.positions[:, :4], self.positions[:, 4:]
        return float(
            max(
                np.max(np.abs(np.sum(a * a, axis=1) - 1.0)),
                np.max(np.abs(np.sum(b * b, axis=1) - 1.0)),
                np.max(np.abs(np.sum(a * b, axis=1))),
            )
        )

    def with_positions(self, positions):
        return DiscreteImmersion(
            mesh=self.mesh,
            target=self.target,
            positions=positions,
            legendrian_tol=self.legendrian_tol,
            phi_monodromy=self.phi_monodromy,
        )

    # -- seam-corrected differences ------------------------------------------

    def edge_vectors(self):
        """Seam-corrected coordinate differences along canonical edges (tail -> head)."""
        m = self.mesh
        tails, heads = m.edges[:, 0], m.edges[:, 1]
        delta = self.positions[heads] - self.positions[tails]
        if self.target == "heisenberg" and m.uv_periods is not None and m.uv is not None:
            w = m.wraps(m.uv[tails], m.uv[heads])
            delta[:, 0] -= w[:, 0] * self.phi_monodromy[0] + w[:, 1] * self.phi_monodromy[1]
        return delta

    def corner_positions(self):
        """(F, 3, dim) positions with corners 1, 2 moved into corner 0's branch."""
        m = self.mesh
        pos = self.positions[m.triangles].copy()
        if self.target == "heisenberg" and m.uv_periods is not None and m.uv is not None:
            _, wraps = m.corner_uv_local()
            pos[:, :, 0] -= (
                wraps[:, :, 0] * self.phi_monodromy[0]
                + wraps[:, :, 1] * self.phi_monodromy[1]
            )
        return pos

    # -- serialization --------------------------------------------------------

    def to_json(self):
        m = self.mesh
        data = {
            "target": self.target,
            "vertices": [[float(c) for c in row] for row in self.positions],
            "triangles": [[int(i) for i in row] for row in m.triangles],
            "genus": m.genus,
            "boundary_loops": m.boundary_loops,
            "legendrian_tol": self.legendrian_tol,
        }
        if m.uv is not None:
            data["uv"] = [[float(c) for c in row] for row in m.uv]
        if m.uv_periods is not None:
            data["uv_periods"] = list(m.uv_periods)
        if self.phi_monodromy != (0.0, 0.0):
            data["phi_monodromy"] = list(self.phi_monodromy)
        if m.generator_loops:
            data["generator_loops"] = m.generator_loops
        return data

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, sort_keys=True)
            f.write("\n")

    @staticmethod
    def from_json(data):
        vertices = np.asarray(data["vertices"], float)
        mesh = SurfaceMesh(
            triangles=data["triangles"],
            n_vertices=len(vertices),
            uv=data.get("uv"),
            genus=data.get("genus", 0),
            boundary_loops=data.get("boundary_loops", []),
            uv_periods=data.get("uv_periods"),
            generator_loops=data.get("generator_loops", []),
        )
        return DiscreteImmersion(
            mesh=mesh,
            target=data["target"],
            positions=vertices,
            legendrian_tol=float(data.get("legendrian_tol", 1e-8)),
            phi_monodromy=tuple(data.get("phi_monodromy", (0.0, 0.0))),
        )

    @staticmethod
    def load(path):
        with open(path) as f:
            return DiscreteImmersion.from_json(json.load(f))
