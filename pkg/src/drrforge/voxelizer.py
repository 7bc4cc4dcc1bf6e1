"""Occupancy voxelization and CT carving.

Inside/outside is decided by ray-parity counting along +x: a voxel center is
inside iff a ray from it toward -infinity in x crosses the surface an odd
number of times. Rows of voxel centers are perturbed by a fixed sub-voxel
epsilon in y and z so rays never graze triangle edges or vertices exactly,
which keeps the test deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleGridsError, InvalidArgumentError, VoxelizationIntegrityError
from .geometry import RigidTransform
from .mesh import TriangleMesh

KIND_HU = "hu"
KIND_OCCUPANCY = "occupancy"
KIND_ATTENUATION = "attenuation"
_KINDS = (KIND_HU, KIND_OCCUPANCY, KIND_ATTENUATION)

AIR_HU = -1000.0

# Ray perturbation, in units of voxel spacing; two different irrational-ish
# offsets so edge and vertex ties in y and z cannot coincide.
_EPS_Y = 3.70123e-4
_EPS_Z = 6.10789e-4


@dataclass
class VoxelVolume:
    """Axis-aligned scalar grid; origin_mm is the world position of voxel (0,0,0)'s center."""

    dims: tuple[int, int, int]
    spacing_mm: np.ndarray
    origin_mm: np.ndarray
    values: np.ndarray  # (nx, ny, nz)
    kind: str

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing_mm = np.asarray(self.spacing_mm, dtype=np.float64).reshape(3)
        self.origin_mm = np.asarray(self.origin_mm, dtype=np.float64).reshape(3)
        if any(d <= 0 for d in self.dims):
            raise InvalidArgumentError(f"dims must be positive, got {self.dims}")
        if np.any(self.spacing_mm <= 0):
            raise InvalidArgumentError(f"spacing must be > 0, got {self.spacing_mm}")
        if self.kind not in _KINDS:
            raise InvalidArgumentError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        self.values = np.ascontiguousarray(self.values)
        if self.values.shape != self.dims:
            raise InvalidArgumentError(
                f"values shape {self.values.shape} does not match dims {self.dims}"
            )
        if self.kind == KIND_OCCUPANCY:
            bad = ~np.isin(self.values, (0, 1))
            if bad.any():
                raise InvalidArgumentError("occupancy volumes may only contain 0 and 1")

    def same_grid(self, other: "VoxelVolume") -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing_mm, other.spacing_mm, atol=1e-9)
            and np.allclose(self.origin_mm, other.origin_mm, atol=1e-9)
        )

    def center_mm(self) -> np.ndarray:
        return self.origin_mm + (np.array(self.dims) - 1) * self.spacing_mm / 2.0

    def voxel_volume_mm3(self) -> float:
        return float(np.prod(self.spacing_mm))


def voxelize_mesh(
    mesh: TriangleMesh,
    spacing_mm,
    padding_mm: float = 1.0,
    *,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
) -> VoxelVolume:
    """Rasterize a closed mesh into an occupancy grid that tightly bounds it plus padding.

    Pass `bounds` to force the pre-padding extent (e.g. a shared grid for
    several meshes); it must cover the mesh.
    """
    spacing = np.asarray(spacing_mm, dtype=np.float64).reshape(-1)
    if spacing.size == 1:
        spacing = np.repeat(spacing, 3)
    if np.any(spacing <= 0):
        raise InvalidArgumentError("spacing must be > 0")
    if len(mesh.triangles) == 0:
        raise InvalidArgumentError("cannot voxelize an empty mesh")

    lo, hi = mesh.bounds if bounds is None else (
        np.asarray(bounds[0], dtype=np.float64),
        np.asarray(bounds[1], dtype=np.float64),
    )
    lo = lo - padding_mm
    hi = hi + padding_mm
    dims = np.maximum(np.ceil((hi - lo) / spacing).astype(int), 1)
    origin = lo + spacing / 2.0
    nx, ny, nz = (int(d) for d in dims)

    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    # Perturbed (y, z) coordinates of each row of voxel centers.
    eps_y = _EPS_Y * spacing[1]
    eps_z = _EPS_Z * spacing[2]

    # Candidate (triangle, row) pairs from the triangles' y/z bounding boxes.
    def row_range(vals, origin_c, h, n, eps):
        lo_i = np.ceil((vals.min(axis=1) - eps - origin_c) / h).astype(np.int64)
        hi_i = np.floor((vals.max(axis=1) - eps - origin_c) / h).astype(np.int64)
        return np.clip(lo_i, 0, n - 1), np.clip(hi_i, -1, n - 1)

    ys = np.stack([p0[:, 1], p1[:, 1], p2[:, 1]], axis=1)
    zs = np.stack([p0[:, 2], p1[:, 2], p2[:, 2]], axis=1)
    y_lo, y_hi = row_range(ys, origin[1], spacing[1], ny, eps_y)
    z_lo, z_hi = row_range(zs, origin[2], spacing[2], nz, eps_z)
    n_y = np.maximum(y_hi - y_lo + 1, 0)
    n_z = np.maximum(z_hi - z_lo + 1, 0)
    counts = n_y * n_z
    keep = counts > 0
    if not keep.any():
        values = np.zeros((nx, ny, nz), dtype=np.uint8)
        return VoxelVolume((nx, ny, nz), spacing, origin, values, KIND_OCCUPANCY)

    tri_idx = np.repeat(np.nonzero(keep)[0], counts[keep])
    # Enumerate the (iy, iz) lattice inside each triangle's bbox.
    local = np.concatenate([np.arange(c) for c in counts[keep]])
    iy = y_lo[tri_idx] + local // n_z[tri_idx]
    iz = z_lo[tri_idx] + local % n_z[tri_idx]

    py = origin[1] + iy * spacing[1] + eps_y
    pz = origin[2] + iz * spacing[2] + eps_z

    a_y, a_z = p0[tri_idx, 1], p0[tri_idx, 2]
    b_y, b_z = p1[tri_idx, 1], p1[tri_idx, 2]
    c_y, c_z = p2[tri_idx, 1], p2[tri_idx, 2]

    # Signed areas of the projected sub-triangles; the row point is inside iff
    # all three share the sign of the full projected area (strict test; the
    # epsilon offsets keep points off edges).
    d0 = (b_y - a_y) * (pz - a_z) - (b_z - a_z) * (py - a_y)
    d1 = (c_y - b_y) * (pz - b_z) - (c_z - b_z) * (py - b_y)
    d2 = (a_y - c_y) * (pz - c_z) - (a_z - c_z) * (py - c_y)
    denom = (b_y - a_y) * (c_z - a_z) - (b_z - a_z) * (c_y - a_y)
    pos = (d0 > 0) & (d1 > 0) & (d2 > 0) & (denom > 0)
    neg = (d0 < 0) & (d1 < 0) & (d2 < 0) & (denom < 0)
    hit = pos | neg

    tri_idx = tri_idx[hit]
    iy, iz = iy[hit], iz[hit]
    w0 = d1[hit] / denom[hit]
    w1 = d2[hit] / denom[hit]
    w2 = d0[hit] / denom[hit]
    x_cross = w0 * p0[tri_idx, 0] + w1 * p1[tri_idx, 0] + w2 * p2[tri_idx, 0]

    # Group crossings per row, pair them up, and fill voxel centers in between.
    row = iy.astype(np.int64) * nz + iz
    order = np.lexsort((x_cross, row))
    row = row[order]
    x_cross = x_cross[order]

    row_ids, row_starts, row_counts = np.unique(row, return_index=True, return_counts=True)
    odd_rows = int(np.sum(row_counts % 2 != 0))
    if odd_rows > max(1e-4 * len(row_ids), 0):
        raise VoxelizationIntegrityError(
            f"{odd_rows} of {len(row_ids)} rows have odd crossing counts; mesh not watertight"
        )

    # Pair sorted crossings (enter, exit) within each even-count row.
    within = np.arange(len(row)) - np.repeat(row_starts, row_counts)
    even_row = np.repeat(row_counts % 2 == 0, row_counts)
    enter_x = x_cross[even_row & (within % 2 == 0)]
    exit_x = x_cross[even_row & (within % 2 == 1)]
    pair_rows = row[even_row & (within % 2 == 0)]
    if len(pair_rows) == 0:
        values = np.zeros((nx, ny, nz), dtype=np.uint8)
        return VoxelVolume((nx, ny, nz), spacing, origin, values, KIND_OCCUPANCY)

    i_enter = np.ceil((enter_x - origin[0]) / spacing[0]).astype(np.int64)
    i_exit = np.floor((exit_x - origin[0]) / spacing[0]).astype(np.int64) + 1
    i_enter = np.clip(i_enter, 0, nx)
    i_exit = np.clip(i_exit, 0, nx)
    ok = i_exit > i_enter

    diff = np.zeros(ny * nz * (nx + 1), dtype=np.int32)
    flat_e = pair_rows[ok] * (nx + 1) + i_enter[ok]
    flat_x = pair_rows[ok] * (nx + 1) + i_exit[ok]
    np.add.at(diff, flat_e, 1)
    np.add.at(diff, flat_x, -1)
    filled = np.cumsum(diff.reshape(ny * nz, nx + 1), axis=1)[:, :nx] > 0

    values = np.ascontiguousarray(
        filled.reshape(ny, nz, nx).transpose(2, 0, 1).astype(np.uint8)
    )
    return VoxelVolume((nx, ny, nz), spacing, origin, values, KIND_OCCUPANCY)


def resample_occupancy_to_grid(
    occ: VoxelVolume,
    target: VoxelVolume,
    pose: RigidTransform,
    supersample: int = 2,
) -> VoxelVolume:
    """Transfer occupancy onto the target grid; `pose` maps source coords into target coords.

    A target voxel is occupied iff any of its supersample^3 sub-points maps into
    an occupied source voxel (conservative union, nearest-neighbor lookup).
    """
    if occ.kind != KIND_OCCUPANCY:
        raise InvalidArgumentError(f"source must be occupancy, got {occ.kind!r}")
    k = int(supersample)
    if k < 1:
        raise InvalidArgumentError("supersample must be >= 1")

    inv = pose.inverse()
    out = np.zeros(target.dims, dtype=np.uint8)

    # Restrict to the target-index bounding box of the transformed source extent.
    src_lo = occ.origin_mm - occ.spacing_mm / 2.0
    src_hi = occ.origin_mm + (np.array(occ.dims) - 0.5) * occ.spacing_mm
    corners = np.array(
        [[x, y, z] for x in (src_lo[0], src_hi[0]) for y in (src_lo[1], src_hi[1])
         for z in (src_lo[2], src_hi[2])]
    )
    tc = pose.apply(corners)
    idx_lo = np.floor((tc.min(axis=0) - target.origin_mm) / target.spacing_mm).astype(int) - 1
    idx_hi = np.ceil((tc.max(axis=0) - target.origin_mm) / target.spacing_mm).astype(int) + 1
    idx_lo = np.maximum(idx_lo, 0)
    idx_hi = np.minimum(idx_hi, np.array(target.dims) - 1)
    if np.any(idx_lo > idx_hi):
        return VoxelVolume(target.dims, target.spacing_mm, target.origin_mm, out, KIND_OCCUPANCY)

    gx = np.arange(idx_lo[0], idx_hi[0] + 1)
    gy = np.arange(idx_lo[1], idx_hi[1] + 1)
    gz = np.arange(idx_lo[2], idx_hi[2] + 1)
    ix, iy, iz = np.meshgrid(gx, gy, gz, indexing="ij")
    centers = (
        target.origin_mm
        + np.stack([ix, iy, iz], axis=-1).reshape(-1, 3) * target.spacing_mm
    )

    offsets = (np.arange(k) + 0.5) / k - 0.5  # sub-cell centers in voxel units
    hit = np.zeros(len(centers), dtype=bool)
    for dx in offsets:
        for dy in offsets:
            for dz in offsets:
                pts = centers + np.array([dx, dy, dz]) * target.spacing_mm
                src = inv.apply(pts)
                sidx = np.rint((src - occ.origin_mm) / occ.spacing_mm).astype(np.int64)
                inb = np.all((sidx >= 0) & (sidx < np.array(occ.dims)), axis=1)
                if inb.any():
                    s = sidx[inb]
                    vals = occ.values[s[:, 0], s[:, 1], s[:, 2]]
                    hit[inb] |= vals > 0
    out[ix.ravel(), iy.ravel(), iz.ravel()] = hit.astype(np.uint8)
    return VoxelVolume(target.dims, target.spacing_mm, target.origin_mm, out, KIND_OCCUPANCY)


def carve_drill(ct: VoxelVolume, tool_occ: VoxelVolume, air_hu: float = AIR_HU) -> VoxelVolume:
    """Replace CT values with air wherever the occupancy is set; input untouched."""
    if ct.kind != KIND_HU:
        raise InvalidArgumentError(f"carve input must be HU, got {ct.kind!r}")
    if tool_occ.kind != KIND_OCCUPANCY:
        raise InvalidArgumentError(f"carve mask must be occupancy, got {tool_occ.kind!r}")
    if not ct.same_grid(tool_occ):
        raise IncompatibleGridsError("CT and occupancy grids differ in dims/spacing/origin")
    carved = ct.values.copy()
    carved[tool_occ.values > 0] = air_hu
    return VoxelVolume(ct.dims, ct.spacing_mm, ct.origin_mm, carved, KIND_HU)


def hu_to_attenuation(ct: VoxelVolume, mu_water_per_mm: float = 0.02) -> VoxelVolume:
    """Linear attenuation mu = mu_water * (1 + HU/1000), clamped at zero, in 1/mm."""
    if ct.kind != KIND_HU:
        raise InvalidArgumentError(f"expected HU volume, got {ct.kind!r}")
    mu = np.maximum(mu_water_per_mm * (1.0 + ct.values.astype(np.float64) / 1000.0), 0.0)
    return VoxelVolume(ct.dims, ct.spacing_mm, ct.origin_mm, mu.astype(np.float32), KIND_ATTENUATION)


def occupancy_to_attenuation(occ: VoxelVolume, mu_per_mm: float) -> VoxelVolume:
    """Constant-material attenuation volume (metal parts are not HU-derived)."""
    if occ.kind != KIND_OCCUPANCY:
        raise InvalidArgumentError(f"expected occupancy volume, got {occ.kind!r}")
    mu = occ.values.astype(np.float32) * np.float32(mu_per_mm)
    return VoxelVolume(occ.dims, occ.spacing_mm, occ.origin_mm, mu, KIND_ATTENUATION)


def occupancy_union(a: VoxelVolume, b: VoxelVolume) -> VoxelVolume:
    if a.kind != KIND_OCCUPANCY or b.kind != KIND_OCCUPANCY:
        raise InvalidArgumentError("union needs two occupancy volumes")
    if not a.same_grid(b):
        raise IncompatibleGridsError("occupancy grids differ")
    return VoxelVolume(a.dims, a.spacing_mm, a.origin_mm,
                       np.maximum(a.values, b.values), KIND_OCCUPANCY)


def occupancy_minus(a: VoxelVolume, b: VoxelVolume) -> VoxelVolume:
    if a.kind != KIND_OCCUPANCY or b.kind != KIND_OCCUPANCY:
        raise InvalidArgumentError("difference needs two occupancy volumes")
    if not a.same_grid(b):
        raise IncompatibleGridsError("occupancy grids differ")
    vals = a.values.copy()
    vals[b.values > 0] = 0
    return VoxelVolume(a.dims, a.spacing_mm, a.origin_mm, vals, KIND_OCCUPANCY)
