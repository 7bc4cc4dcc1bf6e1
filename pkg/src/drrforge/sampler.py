"""Deterministic random sampling of render configurations and dataset splits.

Each sample's random draw is seeded by a hash of (master seed, ct id, femur
side, sample index), so any sample can be regenerated independently and in
any order, on any platform.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np

from .cdm_model import CdmShape
from .errors import InvalidArgumentError

FEMUR_SIDES = ("left", "right")

SDD_MM = 1200.0  # fixed source-to-detector distance


@dataclass(frozen=True)
class SampleRanges:
    """Uniform sampling ranges. The tube-pose perturbation ranges are this
    pipeline's choice (applied about the per-CT alignment) and are recorded
    in sample metadata."""

    sid_mm: tuple[float, float] = (400.0, 500.0)
    lao_rao_deg: tuple[float, float] = (0.0, 360.0)  # sampled half-open
    cran_caud_deg: tuple[float, float] = (75.0, 105.0)
    volume_translation_mm: float = 20.0
    control_angle_deg: float = 7.9
    cdm_rotation_deg: float = 5.0
    cdm_translation_mm: float = 5.0


@dataclass(frozen=True)
class SampleConfig:
    """One rendered sample's full provenance."""

    ct_id: str
    femur_side: str
    sample_index: int
    rng_seed: int
    sid_mm: float
    lao_rao_deg: float
    cran_caud_deg: float
    volume_translation_mm: tuple[float, float, float]
    cdm_rotation_deg: tuple[float, float, float]
    cdm_translation_mm: tuple[float, float, float]
    control_angles_deg: tuple[float, ...]
    sdd_mm: float = SDD_MM

    @property
    def shape(self) -> CdmShape:
        return CdmShape(np.array(self.control_angles_deg))

    @property
    def sample_id(self) -> str:
        return sample_id(self.ct_id, self.femur_side, self.sample_index)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "SampleConfig":
        return SampleConfig(
            ct_id=d["ct_id"],
            femur_side=d["femur_side"],
            sample_index=int(d["sample_index"]),
            rng_seed=int(d["rng_seed"]),
            sid_mm=float(d["sid_mm"]),
            lao_rao_deg=float(d["lao_rao_deg"]),
            cran_caud_deg=float(d["cran_caud_deg"]),
            volume_translation_mm=tuple(d["volume_translation_mm"]),
            cdm_rotation_deg=tuple(d["cdm_rotation_deg"]),
            cdm_translation_mm=tuple(d["cdm_translation_mm"]),
            control_angles_deg=tuple(d["control_angles_deg"]),
            sdd_mm=float(d.get("sdd_mm", SDD_MM)),
        )


def sample_id(ct_id: str, femur_side: str, sample_index: int) -> str:
    return f"{ct_id}_{femur_side}_{sample_index:04d}"


def derive_seed(master_seed: int, *parts) -> int:
    """64-bit counter-based seed from a hash of the identifying tuple."""
    text = "|".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def sample_configuration(
    master_seed: int,
    ct_id: str,
    femur_side: str,
    sample_index: int,
    ranges: SampleRanges = SampleRanges(),
) -> SampleConfig:
    """Draw one configuration; identical inputs give bit-identical outputs."""
    if femur_side not in FEMUR_SIDES:
        raise InvalidArgumentError(f"femur_side must be one of {FEMUR_SIDES}")
    seed = derive_seed(master_seed, ct_id, femur_side, sample_index)
    rng = np.random.Generator(np.random.PCG64(seed))

    # Draw order is part of the reproducibility contract; do not reorder.
    sid = rng.uniform(*ranges.sid_mm)
    alpha = rng.uniform(ranges.lao_rao_deg[0], ranges.lao_rao_deg[1])  # [0, 360)
    beta = rng.uniform(*ranges.cran_caud_deg)
    vol_t = rng.uniform(-ranges.volume_translation_mm, ranges.volume_translation_mm, 3)
    cdm_r = rng.uniform(-ranges.cdm_rotation_deg, ranges.cdm_rotation_deg, 3)
    cdm_t = rng.uniform(-ranges.cdm_translation_mm, ranges.cdm_translation_mm, 3)
    taus = rng.uniform(-ranges.control_angle_deg, ranges.control_angle_deg, 5)

    return SampleConfig(
        ct_id=ct_id,
        femur_side=femur_side,
        sample_index=int(sample_index),
        rng_seed=seed,
        sid_mm=float(sid),
        lao_rao_deg=float(alpha),
        cran_caud_deg=float(beta),
        volume_translation_mm=tuple(float(x) for x in vol_t),
        cdm_rotation_deg=tuple(float(x) for x in cdm_r),
        cdm_translation_mm=tuple(float(x) for x in cdm_t),
        control_angles_deg=tuple(float(x) for x in taus),
    )


@dataclass
class SplitManifest:
    train_cts: list[str]
    test_cts: list[str]
    train_samples: list[str]
    val_samples: list[str]
    test_samples: list[str]

    def split_of(self, sid: str) -> str:
        if sid in self._index("train"):
            return "train"
        if sid in self._index("val"):
            return "val"
        if sid in self._index("test"):
            return "test"
        raise InvalidArgumentError(f"unknown sample id {sid}")

    def _index(self, which: str) -> set:
        cache = getattr(self, f"_{which}_set", None)
        if cache is None:
            cache = set(getattr(self, f"{which}_samples"))
            setattr(self, f"_{which}_set", cache)
        return cache

    def to_dict(self) -> dict:
        return {
            "train_cts": self.train_cts,
            "test_cts": self.test_cts,
            "train_samples": self.train_samples,
            "val_samples": self.val_samples,
            "test_samples": self.test_samples,
        }

    @staticmethod
    def from_dict(d: dict) -> "SplitManifest":
        return SplitManifest(
            train_cts=list(d["train_cts"]),
            test_cts=list(d["test_cts"]),
            train_samples=list(d["train_samples"]),
            val_samples=list(d["val_samples"]),
            test_samples=list(d["test_samples"]),
        )


def make_split(ct_ids: list[str], samples_per_femur: int = 1000, master_seed: int = 0) -> SplitManifest:
    """Split CTs ceil(0.8 n) : rest into train : test, then the training-pool
    samples 10:1 into train : validation (remainder goes to train)."""
    ct_ids = list(ct_ids)
    if len(set(ct_ids)) != len(ct_ids):
        raise InvalidArgumentError("ct_ids contains duplicates")
    if len(ct_ids) < 2:
        raise InvalidArgumentError("need at least 2 CT ids to split")
    if samples_per_femur < 1:
        raise InvalidArgumentError("samples_per_femur must be >= 1")

    rng = np.random.Generator(np.random.PCG64(derive_seed(master_seed, "ct-split")))
    order = rng.permutation(len(ct_ids))
    shuffled = [ct_ids[i] for i in order]
    n_train = int(np.ceil(0.8 * len(ct_ids)))
    train_cts = sorted(shuffled[:n_train])
    test_cts = sorted(shuffled[n_train:])

    def ids_for(cts):
        return [
            sample_id(ct, side, i)
            for ct in cts
            for side in FEMUR_SIDES
            for i in range(samples_per_femur)
        ]

    pool = ids_for(train_cts)
    rng = np.random.Generator(np.random.PCG64(derive_seed(master_seed, "sample-split")))
    pool = [pool[i] for i in rng.permutation(len(pool))]
    n_val = len(pool) // 11
    val_samples = sorted(pool[:n_val])
    train_samples = sorted(pool[n_val:])
    test_samples = ids_for(test_cts)
    return SplitManifest(train_cts, test_cts, train_samples, val_samples, test_samples)
