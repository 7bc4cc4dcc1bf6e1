"""End-to-end dataset pipeline: configuration, on-disk schema, generation.

On-disk layout per sample: `<out>/<split>/<ct>_<side>_<index>/` holding
`image.f32raw` (float32 LE, row-major), `mask.u8raw`, `belief_0.f32raw`,
`belief_1.f32raw` and `meta.json`. Everything needed to re-render the
sample (the full parameter draw, geometry, conventions) lives in the
metadata, and regeneration with the same config and seed is bit-identical.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cdm_model import CdmGeometrySpec, build_mesh_set, forward_kinematics
from .errors import DataFormatError, GenerationFailureRateError, InvalidArgumentError
from .geometry import (
    EULER_CONVENTION,
    ProjectionGeometry,
    RigidTransform,
    camera_from_orbit,
    rigid_from_euler,
)
from .phantom import read_alignment_file
from .projector import (
    BeliefMapParams,
    Image2D,
    KIND_LINE_INTEGRAL,
    KIND_MASK,
    KIND_NORMALIZED,
    KIND_PROBABILITY,
    add_poisson_noise,
    belief_map,
    normalize_line_integrals,
    project_mask,
    raycast_line_integrals,
    render_landmarks,
)
from .sampler import (
    SampleConfig,
    SampleRanges,
    SplitManifest,
    derive_seed,
    make_split,
    sample_configuration,
)
from .volume_io import read_ct
from .voxelizer import (
    VoxelVolume,
    carve_drill,
    hu_to_attenuation,
    occupancy_minus,
    occupancy_to_attenuation,
    resample_occupancy_to_grid,
    voxelize_mesh,
)

log = logging.getLogger(__name__)

SCHEMA = "drrforge-sample/1"
MAX_FAILURE_RATE = 0.01


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectorConfig:
    cols: int = 512
    rows: int = 512
    pixel_size_mm: float = 0.62
    sdd_mm: float = 1200.0


@dataclass(frozen=True)
class VoxelConfig:
    cdm_spacing_mm: float = 0.1  # high resolution so notches survive voxelization
    supersample: int = 2
    padding_mm: float = 1.0


@dataclass(frozen=True)
class RenderConfig:
    step_mm: float | None = None  # None: half of each volume's min spacing
    mu_water_per_mm: float = 0.02
    mu_body_per_mm: float = 2.2  # constant metal attenuation, not HU-derived
    mu_tool_per_mm: float = 3.0
    belief_sigma_px: float = 5.0


@dataclass(frozen=True)
class NoiseConfig:
    enabled: bool = False
    photons_n0: float = 1.0e6


@dataclass(frozen=True)
class OutputConfig:
    write_previews: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    cdm: CdmGeometrySpec = field(default_factory=CdmGeometrySpec)
    ranges: SampleRanges = field(default_factory=SampleRanges)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    voxel: VoxelConfig = field(default_factory=VoxelConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    workers: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True) + "|" + __version__
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    @staticmethod
    def from_dict(doc: dict) -> "PipelineConfig":
        sections = {
            "cdm": CdmGeometrySpec,
            "ranges": SampleRanges,
            "detector": DetectorConfig,
            "voxel": VoxelConfig,
            "render": RenderConfig,
            "noise": NoiseConfig,
            "output": OutputConfig,
        }
        unknown = set(doc) - set(sections) - {"workers"}
        if unknown:
            raise DataFormatError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, cls in sections.items():
            if name not in doc:
                continue
            entry = doc[name]
            if not isinstance(entry, dict):
                raise DataFormatError(f"config section '{name}' must be an object")
            fields = {f.name for f in dataclasses.fields(cls)}
            bad = set(entry) - fields
            if bad:
                raise DataFormatError(f"unknown keys in config section '{name}': {sorted(bad)}")
            entry = {
                k: tuple(v) if isinstance(v, list) else v
                for k, v in entry.items()
            }
            try:
                kwargs[name] = cls(**entry)
            except (TypeError, InvalidArgumentError) as e:
                raise DataFormatError(f"bad config section '{name}': {e}") from e
        if "workers" in doc:
            kwargs["workers"] = int(doc["workers"])
        return PipelineConfig(**kwargs)

    @staticmethod
    def from_json(path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise DataFormatError(f"cannot parse config {path}: {e}") from e
        return PipelineConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# Sample records
# ---------------------------------------------------------------------------

@dataclass
class SampleRecord:
    image: Image2D
    mask: Image2D
    landmarks_px: tuple[tuple[float, float], tuple[float, float]]
    belief_maps: tuple[Image2D, Image2D]
    config: SampleConfig
    normalization: tuple[float, float]
    pipeline_version: str
    config_hash: str
    alignment: RigidTransform | None = None


def _meta_document(record: SampleRecord, cfg: PipelineConfig) -> dict:
    c = record.config
    doc = {
        "schema": SCHEMA,
        "pipeline_version": record.pipeline_version,
        "config_hash": record.config_hash,
        "sample_id": c.sample_id,
        "config": c.to_dict(),
        "geometry": {
            "sdd_mm": c.sdd_mm,
            "sid_mm": c.sid_mm,
            "lao_rao_deg": c.lao_rao_deg,
            "cran_caud_deg": c.cran_caud_deg,
            "detector_cols": cfg.detector.cols,
            "detector_rows": cfg.detector.rows,
            "pixel_size_mm": cfg.detector.pixel_size_mm,
        },
        "conventions": {
            "euler": EULER_CONVENTION,
            "units": "mm-degrees",
            "image_order": "row-major",
        },
        "cdm_geometry": dataclasses.asdict(cfg.cdm),
        "belief_sigma_px": cfg.render.belief_sigma_px,
        "normalization": {"min": record.normalization[0], "max": record.normalization[1]},
        "landmarks_px": [list(p) for p in record.landmarks_px],
        "files": {
            "image": {"name": "image.f32raw", "dtype": "float32", "shape": [record.image.rows, record.image.cols]},
            "mask": {"name": "mask.u8raw", "dtype": "uint8", "shape": [record.mask.rows, record.mask.cols]},
            "beliefs": [
                {"name": f"belief_{i}.f32raw", "dtype": "float32",
                 "shape": [bm.rows, bm.cols]}
                for i, bm in enumerate(record.belief_maps)
            ],
        },
    }
    if record.alignment is not None:
        doc["alignment"] = {
            "rotation_matrix": [[float(v) for v in row] for row in record.alignment.rotation],
            "translation_mm": [float(v) for v in record.alignment.translation],
        }
    return doc


def write_sample_record(record: SampleRecord, out_dir, cfg: PipelineConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "image.f32raw").write_bytes(
        np.asarray(record.image.values, dtype="<f4").tobytes()
    )
    (out / "mask.u8raw").write_bytes(np.asarray(record.mask.values, dtype=np.uint8).tobytes())
    for i, bm in enumerate(record.belief_maps):
        (out / f"belief_{i}.f32raw").write_bytes(np.asarray(bm.values, dtype="<f4").tobytes())
    meta = _meta_document(record, cfg)
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    if cfg.output.write_previews:
        _write_preview(record, out)
    return out


def _write_preview(record: SampleRecord, out: Path) -> None:
    from PIL import Image  # optional dependency, previews only

    img8 = np.clip((record.image.values + 1.0) * 127.5, 0, 255).astype(np.uint8)
    Image.fromarray(img8).save(out / "image.png")
    Image.fromarray((record.mask.values * 255).astype(np.uint8)).save(out / "mask.png")


def read_sample_record(sample_dir, expected_config_hash: str | None = None) -> SampleRecord:
    """Read a record back, re-validating shapes, value domains and the config hash."""
    out = Path(sample_dir)
    meta_path = out / "meta.json"
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataFormatError(f"cannot parse {meta_path}: {e}") from e
    if meta.get("schema") != SCHEMA:
        raise DataFormatError(f"{meta_path}: unexpected schema {meta.get('schema')!r}")
    if expected_config_hash is not None and meta.get("config_hash") != expected_config_hash:
        raise DataFormatError(f"{meta_path}: config hash mismatch")

    def read_raw(entry, dtype):
        path = out / entry["name"]
        rows, cols = entry["shape"]
        raw = np.fromfile(path, dtype=dtype)
        if raw.size != rows * cols:
            raise DataFormatError(f"{path}: expected {rows * cols} values, got {raw.size}")
        return raw.reshape(rows, cols)

    files = meta["files"]
    image = Image2D(
        read_raw(files["image"], "<f4").astype(np.float64),
        meta["geometry"]["pixel_size_mm"], KIND_NORMALIZED,
    )
    mask = Image2D(read_raw(files["mask"], np.uint8), meta["geometry"]["pixel_size_mm"], KIND_MASK)
    beliefs = tuple(
        Image2D(read_raw(e, "<f4").astype(np.float64), 1.0, KIND_PROBABILITY)
        for e in files["beliefs"]
    )
    landmarks = tuple(tuple(float(x) for x in p) for p in meta["landmarks_px"])
    for (u, v), bm in zip(landmarks, beliefs):
        if 0 <= u < mask.cols and 0 <= v < mask.rows:
            r, c = divmod(int(np.argmax(bm.values)), bm.cols)
            if abs(c - u) > 1.0 or abs(r - v) > 1.0:
                raise DataFormatError(
                    f"{meta_path}: belief-map argmax ({c}, {r}) inconsistent with landmark ({u}, {v})"
                )
    alignment = None
    if "alignment" in meta:
        alignment = RigidTransform(
            np.array(meta["alignment"]["rotation_matrix"]),
            np.array(meta["alignment"]["translation_mm"]),
        )
    return SampleRecord(
        image=image,
        mask=mask,
        landmarks_px=landmarks,  # type: ignore[arg-type]
        belief_maps=beliefs,  # type: ignore[arg-type]
        config=SampleConfig.from_dict(meta["config"]),
        normalization=(meta["normalization"]["min"], meta["normalization"]["max"]),
        pipeline_version=meta["pipeline_version"],
        config_hash=meta["config_hash"],
        alignment=alignment,
    )


def record_is_valid(sample_dir, expected_config_hash: str) -> bool:
    try:
        read_sample_record(sample_dir, expected_config_hash)
        return True
    except (DataFormatError, FileNotFoundError, OSError):
        return False


# ---------------------------------------------------------------------------
# Rendering one sample
# ---------------------------------------------------------------------------

def render_sample(
    ct: VoxelVolume,
    alignment: RigidTransform,
    cfg: PipelineConfig,
    scfg: SampleConfig,
) -> SampleRecord:
    """Full pipeline for one parameter draw: pose, voxelize, carve, render, annotate."""
    det = cfg.detector
    g = ProjectionGeometry(
        source_to_detector_mm=scfg.sdd_mm,
        source_to_isocenter_mm=scfg.sid_mm,
        lao_rao_deg=scfg.lao_rao_deg,
        cran_caud_deg=scfg.cran_caud_deg,
        detector_cols=det.cols,
        detector_rows=det.rows,
        pixel_size_mm=det.pixel_size_mm,
    )
    cam = camera_from_orbit(g)

    # World: isocenter at the origin; the CT is centered there, then shifted
    # by the sampled volume translation. The tool rides inside the CT.
    ct_pose = RigidTransform(
        np.eye(3), np.asarray(scfg.volume_translation_mm) - ct.center_mm()
    )
    perturb = rigid_from_euler(*scfg.cdm_rotation_deg, scfg.cdm_translation_mm)
    cdm_pose = ct_pose.compose(alignment).compose(perturb)

    model = forward_kinematics(scfg.shape, cfg.cdm)
    meshes = build_mesh_set(scfg.shape, cfg.cdm)

    h = cfg.voxel.cdm_spacing_mm
    pad = cfg.voxel.padding_mm
    lo = np.minimum(meshes.outer_solid.bounds[0], meshes.tool.bounds[0])
    hi = np.maximum(meshes.outer_solid.bounds[1], meshes.tool.bounds[1])
    shared = dict(bounds=(lo, hi))
    body_occ = voxelize_mesh(meshes.body, h, pad, **shared)
    tool_occ = voxelize_mesh(meshes.tool, h, pad, **shared)
    outer_occ = voxelize_mesh(meshes.outer_solid, h, pad, **shared)
    notch_occ = voxelize_mesh(meshes.notch_region, h, pad, **shared)
    body_metal = occupancy_minus(body_occ, tool_occ)  # tool wins shared voxels

    # Drilling by omission: CT values vanish wherever the tube or tool sits.
    to_ct = ct_pose.inverse().compose(cdm_pose)
    carve_occ = resample_occupancy_to_grid(outer_occ, ct, to_ct, cfg.voxel.supersample)
    ct_att = hu_to_attenuation(carve_drill(ct, carve_occ), cfg.render.mu_water_per_mm)

    vols = [
        (ct_att, ct_pose),
        (occupancy_to_attenuation(body_metal, cfg.render.mu_body_per_mm), cdm_pose),
        (occupancy_to_attenuation(tool_occ, cfg.render.mu_tool_per_mm), cdm_pose),
    ]
    img = raycast_line_integrals(vols, cam, g, cfg.render.step_mm)
    if cfg.noise.enabled:
        img = add_poisson_noise(img, cfg.noise.photons_n0, derive_seed(scfg.rng_seed, "noise"))
    normalized, vmin, vmax = normalize_line_integrals(img)

    mask = project_mask((notch_occ, cdm_pose), cam, g, cfg.render.step_mm)
    landmarks = render_landmarks(model, cdm_pose, cam, g)
    params = BeliefMapParams(sigma_px=cfg.render.belief_sigma_px)
    beliefs = tuple(belief_map(p, params, det.cols, det.rows) for p in landmarks)

    return SampleRecord(
        image=normalized,
        mask=mask,
        landmarks_px=landmarks,
        belief_maps=beliefs,  # type: ignore[arg-type]
        config=scfg,
        normalization=(vmin, vmax),
        pipeline_version=__version__,
        config_hash=cfg.config_hash(),
        alignment=alignment,
    )


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

def _load_alignment(ct_path: Path, side: str) -> RigidTransform:
    sidecar = ct_path.parent / (ct_path.stem.removesuffix(".mhd") + ".alignment.json")
    if not sidecar.exists():
        raise DataFormatError(
            f"no alignment file for {ct_path} (expected {sidecar}); "
            "write one next to the CT or generate a phantom"
        )
    alignments = read_alignment_file(sidecar)
    if side not in alignments:
        raise DataFormatError(f"{sidecar} has no entry for femur side '{side}'")
    return alignments[side]


_CT_CACHE: dict[str, VoxelVolume] = {}


def _render_task(args) -> tuple[str, str | None]:
    """Worker entry: returns (sample_id, error message or None)."""
    (ct_path, side, index, master_seed, cfg_doc, out_dir) = args
    try:
        cfg = PipelineConfig.from_dict(cfg_doc)
        ct_path = Path(ct_path)
        ct_id = ct_path.stem
        key = str(ct_path)
        if key not in _CT_CACHE:
            _CT_CACHE[key] = read_ct(ct_path)
        ct = _CT_CACHE[key]
        alignment = _load_alignment(ct_path, side)
        scfg = sample_configuration(master_seed, ct_id, side, index, cfg.ranges)
        record = render_sample(ct, alignment, cfg, scfg)
        write_sample_record(record, out_dir, cfg)
        return scfg.sample_id, None
    except Exception as e:  # per-sample failures are logged and skipped
        return f"{Path(ct_path).stem}_{side}_{index:04d}", f"{type(e).__name__}: {e}"


def generate_dataset(
    cfg: PipelineConfig,
    ct_paths: list,
    out_dir,
    master_seed: int = 0,
    samples_per_femur: int = 1000,
    workers: int | None = None,
) -> SplitManifest:
    """Render every manifest sample to disk; resumable and deterministic.

    Existing records whose config hash matches are skipped. Per-sample
    failures are logged; the run fails if more than 1% of samples fail.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ct_paths = sorted(Path(p) for p in ct_paths)
    ids = [p.stem for p in ct_paths]
    if len(set(ids)) != len(ids):
        raise InvalidArgumentError(f"duplicate CT ids in {ids}")
    by_id = dict(zip(ids, ct_paths))

    manifest = make_split(ids, samples_per_femur, master_seed)
    cfg_hash = cfg.config_hash()
    workers = int(workers if workers is not None else cfg.workers)

    tasks = []
    skipped = 0
    for split_name in ("train", "val", "test"):
        for sid in getattr(manifest, f"{split_name}_samples"):
            ct_id, side, idx = sid.rsplit("_", 2)
            sample_dir = out / split_name / sid
            if sample_dir.exists() and record_is_valid(sample_dir, cfg_hash):
                skipped += 1
                continue
            tasks.append((str(by_id[ct_id]), side, int(idx), master_seed, cfg.to_dict(), sample_dir))

    failures: list[tuple[str, str]] = []
    done = 0
    if workers <= 1:
        results = map(_render_task, tasks)
    else:
        pool = concurrent.futures.ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_render_task, tasks)
    for sid, err in results:
        done += 1
        if err is not None:
            failures.append((sid, err))
            log.error("sample %s failed: %s", sid, err)
        elif done % 50 == 0:
            log.info("rendered %d/%d samples", done, len(tasks))
    if workers > 1:
        pool.shutdown()

    total = len(tasks) + skipped
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    run_info = {
        "config": cfg.to_dict(),
        "config_hash": cfg_hash,
        "pipeline_version": __version__,
        "master_seed": master_seed,
        "samples_per_femur": samples_per_femur,
        "ct_ids": ids,
        "n_samples": total,
        "n_failed": len(failures),
        "failures": [{"sample_id": s, "error": e} for s, e in failures],
    }
    (out / "run.json").write_text(json.dumps(run_info, indent=2, sort_keys=True))

    if total and len(failures) / total > MAX_FAILURE_RATE:
        raise GenerationFailureRateError(
            f"{len(failures)} of {total} samples failed (> {MAX_FAILURE_RATE:.0%})"
        )
    return manifest
