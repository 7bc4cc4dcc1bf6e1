"""Notched-tube manipulator model.

Shape is a 5-vector of control angles; a natural cubic spline over the
normalized tube length turns them into 26 per-notch bend angles. Forward
kinematics chains one rigid link per notch, bending about the local x axis
only (single-plane device). Meshes are generated procedurally as swept
tubes so the voxelizer sees watertight geometry:

* outer solid: base + shaft + notched section, one closed component;
* channel cavity: a closed inner tube wound inward (material-outward),
  giving the body its hollow instrument channel;
* tool: solid cylinder following the bent centerline, tip flush with the
  distal landmark;
* notch region: the notched section alone, used as the segmentation target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, MeshDegeneracyError
from .geometry import RigidTransform
from .mesh import TriangleMesh, merge_meshes, weld_vertices

NOTCH_COUNT = 26
CONTROL_POINTS = 5

# Channel cavity stops this far short of either tube end so the body mesh
# stays a set of closed genus-0 components.
_CAVITY_END_MARGIN_MM = 1.0


@dataclass(frozen=True)
class CdmShape:
    """Bend parameterization: one control angle per spline control point, degrees."""

    control_angles_deg: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.control_angles_deg, dtype=np.float64).reshape(-1)
        if a.shape != (CONTROL_POINTS,):
            raise InvalidArgumentError(
                f"need exactly {CONTROL_POINTS} control angles, got {a.shape[0]}"
            )
        if not np.all(np.isfinite(a)):
            raise InvalidArgumentError("control angles must be finite")
        a.flags.writeable = False
        object.__setattr__(self, "control_angles_deg", a)

    @staticmethod
    def straight() -> "CdmShape":
        return CdmShape(np.zeros(CONTROL_POINTS))


@dataclass(frozen=True)
class CdmGeometrySpec:
    """Tube dimensions in mm. Defaults model a 6 mm tube with a 4 mm channel."""

    outer_diameter_mm: float = 6.0
    channel_diameter_mm: float = 4.0
    notch_count: int = NOTCH_COUNT
    notch_pitch_mm: float = 1.0
    base_length_mm: float = 5.0
    shaft_length_mm: float = 50.0
    tool_diameter_mm: float = 3.5
    notch_depth_fraction: float = 0.9  # fraction of the wall thickness removed per notch
    notch_width_mm: float = 0.5
    profile_segments: int = 64  # vertices around the swept cross-section

    def __post_init__(self):
        if self.notch_count != NOTCH_COUNT:
            raise InvalidArgumentError(f"notch_count is fixed at {NOTCH_COUNT}")
        if not 0 < self.channel_diameter_mm < self.outer_diameter_mm:
            raise InvalidArgumentError("need 0 < channel diameter < outer diameter")
        for name in ("notch_pitch_mm", "base_length_mm", "shaft_length_mm", "tool_diameter_mm",
                     "notch_width_mm"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if not 0 < self.notch_depth_fraction < 1:
            raise InvalidArgumentError("notch_depth_fraction must be in (0, 1)")
        if self.notch_width_mm >= self.notch_pitch_mm:
            raise InvalidArgumentError("notch_width_mm must be smaller than notch_pitch_mm")
        if self.tool_diameter_mm > self.channel_diameter_mm:
            raise InvalidArgumentError("tool must fit inside the channel")
        if self.profile_segments < 12:
            raise InvalidArgumentError("profile_segments must be at least 12")

    @property
    def proximal_length_mm(self) -> float:
        return self.base_length_mm + self.shaft_length_mm

    @property
    def active_length_mm(self) -> float:
        return self.notch_count * self.notch_pitch_mm


@dataclass
class CdmPosedModel:
    """Kinematic state in tube-local coordinates (base interface at the origin)."""

    notch_frames: list[RigidTransform]  # 27: base interface + one per notch
    centerline: np.ndarray              # (27, 3) mm
    landmark_proximal: np.ndarray       # centerline[0]
    landmark_distal: np.ndarray         # centerline[26]
    body_mesh: TriangleMesh | None = None
    tool_mesh: TriangleMesh | None = None


@dataclass
class CdmMeshSet:
    """All closed meshes the rendering pipeline consumes, tube-local mm."""

    body: TriangleMesh          # outer solid + channel cavity (hollow wall)
    tool: TriangleMesh
    outer_solid: TriangleMesh   # body silhouette with the channel filled (drill carving)
    notch_region: TriangleMesh  # notched section only (segmentation target)


# ---------------------------------------------------------------------------
# Spline over control angles
# ---------------------------------------------------------------------------

def _natural_spline_second_derivs(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Second derivatives of the natural cubic interpolant (zero at both ends)."""
    n = len(xs)
    h = np.diff(xs)
    m = np.zeros(n)
    if n > 2:
        a = np.zeros((n - 2, n - 2))
        rhs = np.zeros(n - 2)
        for i in range(1, n - 1):
            k = i - 1
            if k > 0:
                a[k, k - 1] = h[i - 1]
            a[k, k] = 2.0 * (h[i - 1] + h[i])
            if k < n - 3:
                a[k, k + 1] = h[i]
            rhs[k] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1])
        m[1:-1] = np.linalg.solve(a, rhs)
    return m


def _natural_spline_eval(xs: np.ndarray, ys: np.ndarray, m: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
    h = xs[idx + 1] - xs[idx]
    lo = xs[idx + 1] - x
    hi = x - xs[idx]
    return (
        m[idx] * lo**3 / (6.0 * h)
        + m[idx + 1] * hi**3 / (6.0 * h)
        + (ys[idx] / h - m[idx] * h / 6.0) * lo
        + (ys[idx + 1] / h - m[idx + 1] * h / 6.0) * hi
    )


def control_positions() -> np.ndarray:
    """Normalized arc positions of the control points: equally spaced on [0, 1]."""
    return np.linspace(0.0, 1.0, CONTROL_POINTS)


def notch_positions() -> np.ndarray:
    """Normalized arc positions of the notch centers: (j - 1/2)/26 for j = 1..26."""
    return (np.arange(1, NOTCH_COUNT + 1) - 0.5) / NOTCH_COUNT


def spline_joint_angles(shape: CdmShape) -> np.ndarray:
    """Per-notch bend angles (degrees): natural cubic spline through the control angles."""
    xs = control_positions()
    ys = shape.control_angles_deg
    m = _natural_spline_second_derivs(xs, ys)
    return _natural_spline_eval(xs, ys, m, notch_positions())


# ---------------------------------------------------------------------------
# Forward kinematics
# ---------------------------------------------------------------------------

def forward_kinematics(shape: CdmShape, spec: CdmGeometrySpec) -> CdmPosedModel:
    """Chain one rigid link per notch: translate one pitch along local z, bend about local x."""
    phis = np.radians(spline_joint_angles(shape))
    pitch = spec.notch_pitch_mm

    frames = [RigidTransform.identity()]
    for phi in phis:
        c, s = math.cos(phi), math.sin(phi)
        step = RigidTransform(
            np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]),
            np.array([0.0, 0.0, 0.0]),
        )
        advance = RigidTransform(np.eye(3), np.array([0.0, 0.0, pitch]))
        frames.append(frames[-1].compose(advance).compose(step))

    centerline = np.array([f.translation for f in frames])
    return CdmPosedModel(
        notch_frames=frames,
        centerline=centerline,
        landmark_proximal=centerline[0].copy(),
        landmark_distal=centerline[-1].copy(),
    )


# ---------------------------------------------------------------------------
# Swept-tube meshes
# ---------------------------------------------------------------------------

def _base_profile(n: int, radius: float) -> tuple[np.ndarray, np.ndarray]:
    # Offset half a step so no vertex sits exactly on the +-y notch axes.
    theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
    return radius * np.cos(theta), radius * np.sin(theta)


def _notched_y(py: np.ndarray, y_cut: float, side: int) -> np.ndarray:
    return np.minimum(py, y_cut) if side > 0 else np.maximum(py, -y_cut)


def _sweep(stations, frames, n: int) -> TriangleMesh:
    """Stitch rings described as (frame_idx, z_local, px, py, miter_tan) into a closed tube."""
    rings = []
    for frame_idx, z_local, px, py, miter_tan in stations:
        z = z_local + py * miter_tan
        pts = np.column_stack([px, py, z])
        rings.append(frames[frame_idx].apply(pts))
    rings = np.array(rings)  # (R, n, 3)
    n_rings = len(rings)

    verts = rings.reshape(-1, 3)
    tris = []
    for k in range(n_rings - 1):
        a0 = k * n
        b0 = (k + 1) * n
        for i in range(n):
            j = (i + 1) % n
            tris.append([a0 + i, a0 + j, b0 + j])
            tris.append([a0 + i, b0 + j, b0 + i])

    # End caps: fans around the ring centroids (end profiles are full circles).
    c_start = len(verts)
    verts = np.vstack([verts, rings[0].mean(axis=0), rings[-1].mean(axis=0)])
    c_end = c_start + 1
    last = (n_rings - 1) * n
    for i in range(n):
        j = (i + 1) % n
        tris.append([c_start, j, i])
        tris.append([c_end, last + i, last + j])

    return weld_vertices(TriangleMesh(verts, np.array(tris, dtype=np.int32)))


def _flip(mesh: TriangleMesh) -> TriangleMesh:
    return TriangleMesh(mesh.vertices, mesh.triangles[:, [0, 2, 1]])


def _check_bend_clearance(phis_rad: np.ndarray, spec: CdmGeometrySpec) -> None:
    # Miter joints displace ring vertices by r*tan(|phi|/2) along the tube; they must
    # not reach the nearest notch-wall ring on either side of the junction.
    r = spec.outer_diameter_mm / 2.0
    gap = (spec.notch_pitch_mm - spec.notch_width_mm) / 2.0
    worst = np.max(np.abs(np.tan(phis_rad / 2.0))) * r
    if worst >= 0.95 * gap:
        raise MeshDegeneracyError(
            f"bend angles too large for the ring spacing: miter displacement "
            f"{worst:.3f} mm vs clearance {gap:.3f} mm"
        )


def build_mesh_set(shape: CdmShape, spec: CdmGeometrySpec) -> CdmMeshSet:
    """Build all posed meshes in tube-local coordinates."""
    model = forward_kinematics(shape, spec)
    phis = np.radians(spline_joint_angles(shape))
    _check_bend_clearance(phis, spec)

    n = spec.profile_segments
    pitch = spec.notch_pitch_mm
    r_outer = spec.outer_diameter_mm / 2.0
    r_channel = spec.channel_diameter_mm / 2.0
    r_tool = spec.tool_diameter_mm / 2.0
    wall = r_outer - r_channel
    y_cut = r_outer - spec.notch_depth_fraction * wall
    w = spec.notch_width_mm
    frames = model.notch_frames

    px_o, py_o = _base_profile(n, r_outer)
    px_c, py_c = _base_profile(n, r_channel)
    px_t, py_t = _base_profile(n, r_tool)
    miters = np.tan(phis / 2.0)

    def notched_stations(first_frame_station):
        stations = [first_frame_station]
        for j in range(1, NOTCH_COUNT + 1):
            f = j - 1
            side = 1 if j % 2 == 1 else -1
            py_notch = _notched_y(py_o, y_cut, side)
            z_lo, z_hi = 0.5 * pitch - 0.5 * w, 0.5 * pitch + 0.5 * w
            stations.append((f, z_lo, px_o, py_o, 0.0))
            stations.append((f, z_lo, px_o, py_notch, 0.0))
            stations.append((f, z_hi, px_o, py_notch, 0.0))
            stations.append((f, z_hi, px_o, py_o, 0.0))
            if j < NOTCH_COUNT:
                stations.append((f, pitch, px_o, py_o, miters[j - 1]))
        stations.append((NOTCH_COUNT - 1, pitch, px_o, py_o, 0.0))
        return stations

    outer_solid = _sweep(
        notched_stations((0, -spec.proximal_length_mm, px_o, py_o, 0.0)), frames, n
    )
    notch_region = _sweep(notched_stations((0, 0.0, px_o, py_o, 0.0)), frames, n)

    def straight_tube(px, py, z_start, z_end_local):
        stations = [(0, z_start, px, py, 0.0)]
        for j in range(1, NOTCH_COUNT):
            stations.append((j - 1, pitch, px, py, miters[j - 1]))
        stations.append((NOTCH_COUNT - 1, z_end_local, px, py, 0.0))
        return _sweep(stations, frames, n)

    m = _CAVITY_END_MARGIN_MM
    cavity = _flip(
        straight_tube(px_c, py_c, -spec.proximal_length_mm + m, pitch - m)
    )
    tool = straight_tube(px_t, py_t, -spec.proximal_length_mm, pitch)

    body = merge_meshes([outer_solid, cavity])
    return CdmMeshSet(body=body, tool=tool, outer_solid=outer_solid, notch_region=notch_region)


def build_cdm_meshes(shape: CdmShape, spec: CdmGeometrySpec) -> tuple[TriangleMesh, TriangleMesh]:
    """Posed body (hollow notched tube + base + shaft) and inserted-tool meshes."""
    ms = build_mesh_set(shape, spec)
    return ms.body, ms.tool


def posed_model_with_meshes(shape: CdmShape, spec: CdmGeometrySpec) -> CdmPosedModel:
    model = forward_kinematics(shape, spec)
    model.body_mesh, model.tool_mesh = build_cdm_meshes(shape, spec)
    return model
