"""Triangle meshes: the minimal surface machinery the voxelizer needs.

Meshes are plain vertex/triangle arrays. Closed components must be wound
consistently outward from the material, so signed volumes (divergence
theorem) add up to the enclosed material volume; internal cavities are
separate components wound the other way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64, mm
    triangles: np.ndarray  # (T, 3) int32 vertex indices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise InvalidArgumentError("triangle indices out of range")

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def signed_volume(self) -> float:
        """Enclosed volume in mm^3 via the divergence theorem (outward winding positive)."""
        v = self.vertices
        a = v[self.triangles[:, 0]]
        b = v[self.triangles[:, 1]]
        c = v[self.triangles[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=np.float64), self.triangles)


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    verts, tris, base = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + base)
        base += len(m.vertices)
    return TriangleMesh(np.concatenate(verts, axis=0), np.concatenate(tris, axis=0))


def weld_vertices(mesh: TriangleMesh, tol_mm: float = 1e-9) -> TriangleMesh:
    """Merge coincident vertices (quantized at tol_mm) and drop degenerate triangles."""
    keys = np.round(mesh.vertices / tol_mm).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    verts = mesh.vertices[first]
    tris = inverse[mesh.triangles]
    ok = (
        (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    )
    return TriangleMesh(verts, tris[ok])


def _directed_edges(triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=0
    )
    return e


def is_watertight(mesh: TriangleMesh) -> bool:
    """True iff every undirected edge is shared by exactly two consistently wound triangles."""
    if len(mesh.triangles) == 0:
        return False
    edges = _directed_edges(mesh.triangles)
    # Consistent winding: each directed edge appears exactly once ...
    directed = edges[:, 0].astype(np.int64) * len(mesh.vertices) + edges[:, 1]
    if len(np.unique(directed)) != len(directed):
        return False
    # ... and its reverse exists, so each undirected edge has multiplicity two.
    undirected = np.sort(edges, axis=1)
    _, counts = np.unique(
        undirected[:, 0].astype(np.int64) * len(mesh.vertices) + undirected[:, 1],
        return_counts=True,
    )
    return bool(np.all(counts == 2))


def connected_components(mesh: TriangleMesh) -> list[np.ndarray]:
    """Triangle index arrays, one per edge-connected component."""
    n_v = len(mesh.vertices)
    parent = np.arange(n_v)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for t in mesh.triangles:
        a, b, c = (int(x) for x in t)
        ra, rb, rc = find(a), find(b), find(c)
        parent[rb] = ra
        parent[rc] = ra
    roots = np.array([find(int(t[0])) for t in mesh.triangles])
    return [np.nonzero(roots == r)[0] for r in np.unique(roots)]


def euler_characteristic(vertices: np.ndarray, triangles: np.ndarray) -> int:
    """V - E + F for the surface patch made of `triangles` (2 for a closed genus-0 component)."""
    used = np.unique(triangles)
    n_v = len(used)
    edges = np.sort(_directed_edges(triangles), axis=1)
    n_e = len(np.unique(edges[:, 0].astype(np.int64) * len(vertices) + edges[:, 1]))
    return n_v - n_e + len(triangles)


def write_stl_ascii(mesh: TriangleMesh, path, name: str = "mesh") -> None:
    v = mesh.vertices
    with open(path, "w") as f:
        f.write(f"solid {name}\n")
        for t in mesh.triangles:
            a, b, c = v[t[0]], v[t[1]], v[t[2]]
            n = np.cross(b - a, c - a)
            norm = np.linalg.norm(n)
            n = n / norm if norm > 0 else n
            f.write(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
            f.write("    outer loop\n")
            for p in (a, b, c):
                f.write(f"      vertex {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            f.write("    endloop\n")
            f.write("  endfacet\n")
        f.write(f"endsolid {name}\n")


# ---------------------------------------------------------------------------
# Simple closed primitives (phantoms for tests and calibration)
# ---------------------------------------------------------------------------

def make_box(lo, hi) -> TriangleMesh:
    """Axis-aligned box [lo, hi] as 12 outward-wound triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ]
    )
    t = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # z = z0, normal -z
            [4, 5, 6], [4, 6, 7],  # z = z1, normal +z
            [0, 1, 5], [0, 5, 4],  # y = y0, normal -y
            [3, 7, 6], [3, 6, 2],  # y = y1, normal +y
            [0, 4, 7], [0, 7, 3],  # x = x0, normal -x
            [1, 2, 6], [1, 6, 5],  # x = x1, normal +x
        ],
        dtype=np.int32,
    )
    return TriangleMesh(v, t)


def make_uv_sphere(center, radius_mm: float, n_theta: int = 128, n_phi: int = 64) -> TriangleMesh:
    """Latitude/longitude sphere; n_theta segments around, n_phi from pole to pole."""
    center = np.asarray(center, dtype=np.float64)
    verts = [center + np.array([0.0, 0.0, radius_mm])]
    for j in range(1, n_phi):
        phi = np.pi * j / n_phi
        for i in range(n_theta):
            th = 2.0 * np.pi * i / n_theta
            verts.append(
                center
                + radius_mm
                * np.array([np.sin(phi) * np.cos(th), np.sin(phi) * np.sin(th), np.cos(phi)])
            )
    verts.append(center + np.array([0.0, 0.0, -radius_mm]))
    verts = np.array(verts)

    tris = []
    def ring(j):  # first vertex index of latitude ring j (1-based rings)
        return 1 + (j - 1) * n_theta

    for i in range(n_theta):
        tris.append([0, ring(1) + i, ring(1) + (i + 1) % n_theta])
    for j in range(1, n_phi - 1):
        for i in range(n_theta):
            a = ring(j) + i
            b = ring(j) + (i + 1) % n_theta
            c = ring(j + 1) + i
            d = ring(j + 1) + (i + 1) % n_theta
            tris.append([a, c, d])
            tris.append([a, d, b])
    south = len(verts) - 1
    for i in range(n_theta):
        tris.append([south, ring(n_phi - 1) + (i + 1) % n_theta, ring(n_phi - 1) + i])
    return TriangleMesh(verts, np.array(tris, dtype=np.int32))
