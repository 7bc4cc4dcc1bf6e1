"""Rigid transforms and the C-arm projection model.

Conventions (fixed for the whole pipeline and recorded in sample metadata):

* Units are millimeters and degrees everywhere at the interface; radians
  never cross module boundaries.
* World frame: the orbit isocenter sits at the origin and the patient
  longitudinal axis is +z.
* Euler angles are extrinsic X-then-Y-then-Z, i.e. R = Rz(rz) @ Ry(ry) @ Rx(rx).
* Integer pixel coordinates address pixel centers; the detector center
  projects to ((cols-1)/2, (rows-1)/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateOrbitError, InvalidArgumentError, ProjectionBehindSourceError

EULER_CONVENTION = "extrinsic-xyz"

_ORTHO_TOL = 1e-9


def _as_vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape != (3,):
        raise InvalidArgumentError(f"{name} must be a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite, got {a}")
    return a


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform: x_out = rotation @ x_in + translation (mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise InvalidArgumentError(f"rotation must be 3x3, got {rot.shape}")
        if not np.all(np.isfinite(rot)):
            raise InvalidArgumentError("rotation must be finite")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-8:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-8:
            raise InvalidArgumentError("rotation must have determinant +1")
        t = _as_vec3(self.translation, "translation")
        rot.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self * other (other is applied first)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many points (N, 3)."""
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation


def _rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rigid_from_euler(rx_deg: float, ry_deg: float, rz_deg: float, t) -> RigidTransform:
    """Build a rigid transform from extrinsic XYZ Euler angles (degrees) and a translation (mm)."""
    for name, a in (("rx_deg", rx_deg), ("ry_deg", ry_deg), ("rz_deg", rz_deg)):
        if not math.isfinite(a):
            raise InvalidArgumentError(f"{name} must be finite, got {a}")
    rot = _rot_z(rz_deg) @ _rot_y(ry_deg) @ _rot_x(rx_deg)
    return RigidTransform(rot, _as_vec3(t, "t"))


@dataclass(frozen=True)
class ProjectionGeometry:
    """C-arm imaging geometry: distances in mm, orbit angles in degrees."""

    source_to_detector_mm: float = 1200.0
    source_to_isocenter_mm: float = 450.0
    lao_rao_deg: float = 0.0
    cran_caud_deg: float = 90.0
    detector_cols: int = 512
    detector_rows: int = 512
    pixel_size_mm: float = 0.62

    def __post_init__(self):
        sdd, sid = self.source_to_detector_mm, self.source_to_isocenter_mm
        if not (math.isfinite(sdd) and math.isfinite(sid) and sdd > sid > 0):
            raise InvalidArgumentError(
                f"need source_to_detector > source_to_isocenter > 0, got SDD={sdd}, SID={sid}"
            )
        if self.detector_cols <= 0 or self.detector_rows <= 0:
            raise InvalidArgumentError("detector dimensions must be positive")
        if not (math.isfinite(self.pixel_size_mm) and self.pixel_size_mm > 0):
            raise InvalidArgumentError("pixel_size_mm must be positive")
        if not (math.isfinite(self.lao_rao_deg) and math.isfinite(self.cran_caud_deg)):
            raise InvalidArgumentError("orbit angles must be finite")


@dataclass(frozen=True)
class CameraPose:
    """World-frame realization of the orbit: source point, detector center, detector axes."""

    source_position: np.ndarray
    detector_center: np.ndarray
    detector_u_axis: np.ndarray
    detector_v_axis: np.ndarray

    def __post_init__(self):
        for name in ("source_position", "detector_center", "detector_u_axis", "detector_v_axis"):
            v = _as_vec3(getattr(self, name), name)
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    @property
    def ray_direction(self) -> np.ndarray:
        """Unit vector from the source toward the detector center."""
        d = self.detector_center - self.source_position
        return d / np.linalg.norm(d)


def camera_from_orbit(g: ProjectionGeometry) -> CameraPose:
    """Realize orbit angles as a camera pose around the isocenter (world origin).

    The source starts at (0, -SID, 0) for the neutral pose (alpha=0,
    beta=90 degrees) and is rotated by Rx(beta - 90) then Rz(alpha).
    The detector v axis is the patient +z axis projected onto the detector
    plane; u completes the right-handed pair u = v x ray_direction.
    """
    alpha = g.lao_rao_deg
    beta = g.cran_caud_deg
    sid = g.source_to_isocenter_mm
    sdd = g.source_to_detector_mm

    rot = _rot_z(alpha) @ _rot_x(beta - 90.0)
    source = rot @ np.array([0.0, -sid, 0.0])

    ray = -source / sid  # from source through the isocenter
    detector_center = source + sdd * ray

    z_axis = np.array([0.0, 0.0, 1.0])
    v = z_axis - np.dot(z_axis, ray) * ray
    v_norm = np.linalg.norm(v)
    if v_norm < 1e-9:
        raise DegenerateOrbitError(
            f"source is aligned with the patient axis (cran_caud={beta} deg); v axis undefined"
        )
    v = v / v_norm
    u = np.cross(v, ray)
    return CameraPose(source, detector_center, u, v)


def project_point(cam: CameraPose, g: ProjectionGeometry, p_world) -> tuple[float, float]:
    """Perspective-project a world point (mm) to continuous detector pixels (u, v)."""
    p = _as_vec3(p_world, "p_world")
    ray = cam.ray_direction
    depth = float(np.dot(p - cam.source_position, ray))
    if depth <= 0.0:
        raise ProjectionBehindSourceError(f"point has non-positive view depth {depth:.6g} mm")
    scale = g.source_to_detector_mm / depth
    hit = cam.source_position + (p - cam.source_position) * scale
    offset = hit - cam.detector_center
    u_px = float(np.dot(offset, cam.detector_u_axis)) / g.pixel_size_mm + (g.detector_cols - 1) / 2.0
    v_px = float(np.dot(offset, cam.detector_v_axis)) / g.pixel_size_mm + (g.detector_rows - 1) / 2.0
    return u_px, v_px
