"""Line-integral DRR rendering, mask/landmark projection, belief maps.

Rays are marched with a fixed step and trilinear interpolation inside each
volume's voxel-center hull; per-volume contributions add, so rendering a
list of volumes equals the pixel-wise sum of rendering them one at a time.
Pixels are independent, which keeps the parallel kernel bit-deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .cdm_model import CdmPosedModel
from .errors import InvalidArgumentError
from .geometry import CameraPose, ProjectionGeometry, RigidTransform, project_point
from .voxelizer import KIND_OCCUPANCY, VoxelVolume

KIND_LINE_INTEGRAL = "line_integral"
KIND_NORMALIZED = "normalized"
KIND_PROBABILITY = "probability"
KIND_MASK = "mask"
_IMAGE_KINDS = (KIND_LINE_INTEGRAL, KIND_NORMALIZED, KIND_PROBABILITY, KIND_MASK)


@dataclass
class Image2D:
    """Detector-plane image; values indexed [v_row, u_col]."""

    values: np.ndarray
    pixel_size_mm: float
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise InvalidArgumentError(f"image must be 2D, got shape {self.values.shape}")
        if self.kind not in _IMAGE_KINDS:
            raise InvalidArgumentError(f"kind must be one of {_IMAGE_KINDS}, got {self.kind!r}")
        if self.kind == KIND_MASK:
            bad = ~np.isin(self.values, (0, 1))
            if bad.any():
                raise InvalidArgumentError("mask images may only contain 0 and 1")
        if self.kind == KIND_NORMALIZED and self.values.size:
            vmin, vmax = float(self.values.min()), float(self.values.max())
            constant = vmin == vmax == 0.0
            if not constant and not (
                math.isclose(vmin, -1.0, abs_tol=1e-6) and math.isclose(vmax, 1.0, abs_tol=1e-6)
            ):
                raise InvalidArgumentError(
                    f"normalized image must span [-1, 1] (or be all zero), got [{vmin}, {vmax}]"
                )

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BeliefMapParams:
    sigma_px: float = 5.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma_px) and self.sigma_px > 0):
            raise InvalidArgumentError("sigma_px must be > 0")


@njit(cache=True, parallel=True)
def _march_all_pixels(values, origin, spacing, src, det00, du, dv, rows, cols, step, out):
    nx, ny, nz = values.shape
    lox, loy, loz = origin[0], origin[1], origin[2]
    hix = lox + (nx - 1) * spacing[0]
    hiy = loy + (ny - 1) * spacing[1]
    hiz = loz + (nz - 1) * spacing[2]
    for iv in prange(rows):
        for iu in range(cols):
            px = det00[0] + iu * du[0] + iv * dv[0]
            py = det00[1] + iu * du[1] + iv * dv[1]
            pz = det00[2] + iu * du[2] + iv * dv[2]
            dx = px - src[0]
            dy = py - src[1]
            dz = pz - src[2]
            length = math.sqrt(dx * dx + dy * dy + dz * dz)
            dx /= length
            dy /= length
            dz /= length

            t_near = 0.0
            t_far = length
            miss = False
            for axis in range(3):
                if axis == 0:
                    d, s, lo, hi = dx, src[0], lox, hix
                elif axis == 1:
                    d, s, lo, hi = dy, src[1], loy, hiy
                else:
                    d, s, lo, hi = dz, src[2], loz, hiz
                if abs(d) < 1e-12:
                    if s < lo or s > hi:
                        miss = True
                        break
                else:
                    ta = (lo - s) / d
                    tb = (hi - s) / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > t_near:
                        t_near = ta
                    if tb < t_far:
                        t_far = tb
            if miss or t_far <= t_near:
                out[iv, iu] = 0.0
                continue

            n = int(math.ceil((t_far - t_near) / step))
            if n < 1:
                n = 1
            dt = (t_far - t_near) / n
            acc = 0.0
            for i in range(n):
                tm = t_near + (i + 0.5) * dt
                gx = (src[0] + tm * dx - lox) / spacing[0]
                gy = (src[1] + tm * dy - loy) / spacing[1]
                gz = (src[2] + tm * dz - loz) / spacing[2]
                ix = int(math.floor(gx))
                iy = int(math.floor(gy))
                iz = int(math.floor(gz))
                if ix < 0:
                    ix = 0
                if iy < 0:
                    iy = 0
                if iz < 0:
                    iz = 0
                if ix > nx - 2:
                    ix = nx - 2 if nx >= 2 else 0
                if iy > ny - 2:
                    iy = ny - 2 if ny >= 2 else 0
                if iz > nz - 2:
                    iz = nz - 2 if nz >= 2 else 0
                fx = gx - ix
                fy = gy - iy
                fz = gz - iz
                if fx < 0.0:
                    fx = 0.0
                if fy < 0.0:
                    fy = 0.0
                if fz < 0.0:
                    fz = 0.0
                if fx > 1.0:
                    fx = 1.0
                if fy > 1.0:
                    fy = 1.0
                if fz > 1.0:
                    fz = 1.0
                jx = ix + 1 if nx >= 2 else ix
                jy = iy + 1 if ny >= 2 else iy
                jz = iz + 1 if nz >= 2 else iz
                c000 = values[ix, iy, iz]
                c100 = values[jx, iy, iz]
                c010 = values[ix, jy, iz]
                c110 = values[jx, jy, iz]
                c001 = values[ix, iy, jz]
                c101 = values[jx, iy, jz]
                c011 = values[ix, jy, jz]
                c111 = values[jx, jy, jz]
                c00 = c000 * (1 - fx) + c100 * fx
                c10 = c010 * (1 - fx) + c110 * fx
                c01 = c001 * (1 - fx) + c101 * fx
                c11 = c011 * (1 - fx) + c111 * fx
                c0 = c00 * (1 - fy) + c10 * fy
                c1 = c01 * (1 - fy) + c11 * fy
                acc += (c0 * (1 - fz) + c1 * fz) * dt
            out[iv, iu] = acc


def _raycast_one(vol: VoxelVolume, pose: RigidTransform, cam: CameraPose,
                 g: ProjectionGeometry, step_mm: float | None) -> np.ndarray:
    inv = pose.inverse()
    src = inv.apply(cam.source_position)
    du_w = cam.detector_u_axis * g.pixel_size_mm
    dv_w = cam.detector_v_axis * g.pixel_size_mm
    det00_w = (
        cam.detector_center
        - du_w * (g.detector_cols - 1) / 2.0
        - dv_w * (g.detector_rows - 1) / 2.0
    )
    det00 = inv.apply(det00_w)
    du = inv.rotation @ du_w
    dv = inv.rotation @ dv_w
    step = float(step_mm) if step_mm is not None else 0.5 * float(np.min(vol.spacing_mm))
    if step <= 0:
        raise InvalidArgumentError("step_mm must be > 0")
    out = np.zeros((g.detector_rows, g.detector_cols), dtype=np.float64)
    _march_all_pixels(
        np.ascontiguousarray(vol.values, dtype=np.float32),
        vol.origin_mm, vol.spacing_mm, src, det00, du, dv,
        g.detector_rows, g.detector_cols, step, out,
    )
    return out


def raycast_line_integrals(
    vols: list[tuple[VoxelVolume, RigidTransform]],
    cam: CameraPose,
    g: ProjectionGeometry,
    step_mm: float | None = None,
) -> Image2D:
    """Sum of path integrals of attenuation through each posed volume, per pixel.

    With step_mm omitted, each volume is marched at half its own minimum
    voxel spacing.
    """
    if not vols:
        raise InvalidArgumentError("need at least one volume")
    total = np.zeros((g.detector_rows, g.detector_cols), dtype=np.float64)
    for vol, pose in vols:
        total += _raycast_one(vol, pose, cam, g, step_mm)
    return Image2D(total, g.pixel_size_mm, KIND_LINE_INTEGRAL)


def project_mask(
    notch_region_occ: tuple[VoxelVolume, RigidTransform],
    cam: CameraPose,
    g: ProjectionGeometry,
    step_mm: float | None = None,
) -> Image2D:
    """Binary silhouette: pixel is 1 iff the ray accumulates any occupancy path length."""
    occ, pose = notch_region_occ
    if occ.kind != KIND_OCCUPANCY:
        raise InvalidArgumentError(f"expected occupancy volume, got {occ.kind!r}")
    acc = _raycast_one(occ, pose, cam, g, step_mm)
    return Image2D((acc > 0.0).astype(np.uint8), g.pixel_size_mm, KIND_MASK)


def render_landmarks(
    model: CdmPosedModel,
    pose: RigidTransform,
    cam: CameraPose,
    g: ProjectionGeometry,
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Project the centerline start and end points; proximal first."""
    prox = project_point(cam, g, pose.apply(model.landmark_proximal))
    dist = project_point(cam, g, pose.apply(model.landmark_distal))
    return prox, dist


def belief_map(pt: tuple[float, float], params: BeliefMapParams, cols: int, rows: int) -> Image2D:
    """Unnormalized Gaussian bump (peak = amplitude) centered at a sub-pixel landmark."""
    u, v = float(pt[0]), float(pt[1])
    x = np.arange(cols, dtype=np.float64)
    y = np.arange(rows, dtype=np.float64)
    gx = (x - u) ** 2
    gy = (y - v) ** 2
    vals = params.amplitude * np.exp(-(gy[:, None] + gx[None, :]) / (2.0 * params.sigma_px**2))
    return Image2D(vals, 1.0, KIND_PROBABILITY)


def normalize_line_integrals(img: Image2D) -> tuple[Image2D, float, float]:
    """Affine map of a line-integral image onto [-1, 1]; returns (image, min, max)."""
    if img.kind != KIND_LINE_INTEGRAL:
        raise InvalidArgumentError(f"expected line-integral image, got {img.kind!r}")
    vmin = float(img.values.min())
    vmax = float(img.values.max())
    if vmax == vmin:
        out = np.zeros_like(img.values, dtype=np.float64)
    else:
        out = 2.0 * (img.values - vmin) / (vmax - vmin) - 1.0
    return Image2D(out, img.pixel_size_mm, KIND_NORMALIZED), vmin, vmax


def add_poisson_noise(img: Image2D, photons_n0: float, rng_seed: int) -> Image2D:
    """Photon counting noise in the line-integral domain; deterministic given the seed."""
    if img.kind != KIND_LINE_INTEGRAL:
        raise InvalidArgumentError(f"expected line-integral image, got {img.kind!r}")
    if photons_n0 <= 0:
        raise InvalidArgumentError("photons_n0 must be > 0")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    lam = photons_n0 * np.exp(-img.values)
    counts = np.maximum(rng.poisson(lam), 1)
    return Image2D(-np.log(counts / photons_n0), img.pixel_size_mm, KIND_LINE_INTEGRAL)
