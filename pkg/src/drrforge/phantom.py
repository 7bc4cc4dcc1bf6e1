"""Synthetic lower-limb CT phantom.

Patient CTs are not distributable, so desk-scale runs use a procedural
phantom: a soft-tissue ellipsoid containing two cortical-bone tubes with
trabecular cores, on an air background. The tube axes are known, so the
per-femur tool alignment transforms are computed rather than configured.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import RigidTransform
from .voxelizer import KIND_HU, VoxelVolume

HU_AIR = -1000.0
HU_SOFT_TISSUE = 40.0
HU_TRABECULAR = 200.0
HU_CORTICAL = 1200.0


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (160, 160, 200)
    spacing_mm: float = 1.0
    tissue_semi_axes_mm: tuple[float, float, float] = (70.0, 60.0, 95.0)
    bone_outer_radius_mm: float = 15.0
    bone_wall_mm: float = 5.0
    bone_length_mm: float = 170.0
    bone_offset_x_mm: float = 35.0


def make_phantom_ct(spec: PhantomSpec = PhantomSpec()) -> VoxelVolume:
    """Deterministic HU phantom; values are exactly {air, soft, trabecular, cortical}."""
    nx, ny, nz = spec.dims
    h = spec.spacing_mm
    # Native coordinates: voxel (0,0,0) center at the origin.
    x = np.arange(nx) * h
    y = np.arange(ny) * h
    z = np.arange(nz) * h
    cx, cy, cz = (nx - 1) * h / 2.0, (ny - 1) * h / 2.0, (nz - 1) * h / 2.0

    gx = (x - cx)[:, None, None]
    gy = (y - cy)[None, :, None]
    gz = (z - cz)[None, None, :]

    values = np.full(spec.dims, HU_AIR, dtype=np.float32)

    ax, ay, az = spec.tissue_semi_axes_mm
    tissue = (gx / ax) ** 2 + (gy / ay) ** 2 + (gz / az) ** 2 <= 1.0
    values[tissue] = HU_SOFT_TISSUE

    r_out = spec.bone_outer_radius_mm
    r_in = r_out - spec.bone_wall_mm
    half_len = spec.bone_length_mm / 2.0
    in_z = np.abs(gz) <= half_len
    for sx in (+1.0, -1.0):
        r2 = (gx - sx * spec.bone_offset_x_mm) ** 2 + gy**2
        shell = (r2 <= r_out**2) & in_z
        core = (r2 <= r_in**2) & in_z
        values[shell & ~core] = HU_CORTICAL
        values[core] = HU_TRABECULAR

    return VoxelVolume(spec.dims, (h, h, h), (0.0, 0.0, 0.0), values, KIND_HU)


def phantom_alignments(spec: PhantomSpec = PhantomSpec(),
                       active_length_mm: float = 26.0) -> dict[str, RigidTransform]:
    """Tool base pose per femur side, in CT-native coordinates.

    The tube axis runs along +z inside each bone core; the notched section
    is centered on the bone mid-plane. Patient left is +x.
    """
    nx, ny, nz = spec.dims
    h = spec.spacing_mm
    cx, cy, cz = (nx - 1) * h / 2.0, (ny - 1) * h / 2.0, (nz - 1) * h / 2.0
    out = {}
    for side, sx in (("left", +1.0), ("right", -1.0)):
        t = np.array([cx + sx * spec.bone_offset_x_mm, cy, cz - active_length_mm / 2.0])
        out[side] = RigidTransform(np.eye(3), t)
    return out


def write_alignment_file(alignments: dict[str, RigidTransform], path) -> Path:
    """Sidecar JSON consumed by the generator: Euler angles (deg) + translation (mm)."""
    path = Path(path)
    doc = {}
    for side, tf in alignments.items():
        # All phantom alignments are pure translations; keep the general form anyway.
        doc[side] = {
            "rotation_matrix": [[float(v) for v in row] for row in tf.rotation],
            "translation_mm": [float(v) for v in tf.translation],
        }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path


def read_alignment_file(path) -> dict[str, RigidTransform]:
    doc = json.loads(Path(path).read_text())
    out = {}
    for side, entry in doc.items():
        out[side] = RigidTransform(
            np.array(entry["rotation_matrix"], dtype=np.float64),
            np.array(entry["translation_mm"], dtype=np.float64),
        )
    return out
