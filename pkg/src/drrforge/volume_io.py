"""Volume file formats.

Native format: a JSON header next to a little-endian float32 raw file in
x-fastest order. MetaImage (.mhd + .raw, or .mha with local data) import is
supported for CT input; HU values pass through unmodified.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .voxelizer import VoxelVolume

_MET_TYPES = {
    "MET_CHAR": np.int8,
    "MET_UCHAR": np.uint8,
    "MET_SHORT": np.int16,
    "MET_USHORT": np.uint16,
    "MET_INT": np.int32,
    "MET_UINT": np.uint32,
    "MET_FLOAT": np.float32,
    "MET_DOUBLE": np.float64,
}


def write_volume(vol: VoxelVolume, base_path) -> Path:
    """Write `<base>.json` + `<base>.raw`; returns the header path."""
    base = Path(base_path)
    base.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "dims": list(vol.dims),
        "spacing_mm": [float(x) for x in vol.spacing_mm],
        "origin_mm": [float(x) for x in vol.origin_mm],
        "kind": vol.kind,
        "dtype": "float32",
        "order": "x-fastest",
        "raw_file": base.name + ".raw",
    }
    data = np.asarray(vol.values, dtype="<f4").ravel(order="F")
    (base.parent / (base.name + ".raw")).write_bytes(data.tobytes())
    header_path = base.parent / (base.name + ".json")
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True))
    return header_path


def read_volume(header_path) -> VoxelVolume:
    path = Path(header_path)
    try:
        header = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataFormatError(f"cannot parse volume header {path}: {e}") from e
    for key in ("dims", "spacing_mm", "origin_mm", "kind", "raw_file"):
        if key not in header:
            raise DataFormatError(f"volume header {path} is missing field '{key}'")
    dims = tuple(int(d) for d in header["dims"])
    raw_path = path.parent / header["raw_file"]
    if not raw_path.exists():
        raise DataFormatError(f"raw file {raw_path} referenced by {path} does not exist")
    raw = np.fromfile(raw_path, dtype="<f4")
    expected = dims[0] * dims[1] * dims[2]
    if raw.size != expected:
        raise DataFormatError(
            f"raw file {raw_path} has {raw.size} values, dims {dims} need {expected}"
        )
    values = np.ascontiguousarray(raw.reshape(dims, order="F"))
    return VoxelVolume(dims, header["spacing_mm"], header["origin_mm"], values, header["kind"])


def _parse_mhd_header(text: str, path: Path) -> dict:
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
        if key.strip() == "ElementDataFile":
            break
    return fields


def read_metaimage(path) -> VoxelVolume:
    """Read a MetaImage volume (.mhd with sidecar raw, or .mha with local data)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise DataFormatError(f"cannot read {path}: {e}") from e

    # Header is the text up to and including the ElementDataFile line.
    marker = b"ElementDataFile"
    pos = blob.find(marker)
    if pos < 0:
        raise DataFormatError(f"{path}: required field 'ElementDataFile' not found")
    header_end = blob.find(b"\n", pos)
    header_end = len(blob) if header_end < 0 else header_end + 1
    fields = _parse_mhd_header(blob[:header_end].decode("ascii", errors="replace"), path)

    ndims = fields.get("NDims", "3")
    if ndims.strip() != "3":
        raise DataFormatError(f"{path}: NDims must be 3, got {ndims}")
    if fields.get("CompressedData", "False").lower() == "true":
        raise DataFormatError(f"{path}: CompressedData is not supported")
    channels = fields.get("ElementNumberOfChannels", "1")
    if channels.strip() != "1":
        raise DataFormatError(f"{path}: ElementNumberOfChannels must be 1, got {channels}")

    try:
        dims = tuple(int(x) for x in fields["DimSize"].split())
    except (KeyError, ValueError) as e:
        raise DataFormatError(f"{path}: bad or missing field 'DimSize'") from e
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise DataFormatError(f"{path}: field 'DimSize' must be three positive ints, got {dims}")

    def vec3(name, default):
        if name not in fields:
            return default
        try:
            v = [float(x) for x in fields[name].split()]
        except ValueError as e:
            raise DataFormatError(f"{path}: bad field '{name}': {fields[name]!r}") from e
        if len(v) != 3:
            raise DataFormatError(f"{path}: field '{name}' must have three values")
        return v

    spacing = vec3("ElementSpacing", None) or vec3("ElementSize", [1.0, 1.0, 1.0])
    origin = vec3("Offset", None) or vec3("Origin", None) or vec3("Position", [0.0, 0.0, 0.0])

    etype = fields.get("ElementType", "MET_FLOAT")
    if etype not in _MET_TYPES:
        raise DataFormatError(f"{path}: unsupported field 'ElementType' = {etype}")
    dtype = np.dtype(_MET_TYPES[etype])
    msb = fields.get("BinaryDataByteOrderMSB", fields.get("ElementByteOrderMSB", "False"))
    dtype = dtype.newbyteorder(">" if msb.lower() == "true" else "<")

    datafile = fields["ElementDataFile"]
    if datafile.upper() == "LOCAL":
        raw = blob[header_end:]
    else:
        raw_path = path.parent / datafile
        if not raw_path.exists():
            raise DataFormatError(f"{path}: ElementDataFile {raw_path} does not exist")
        raw = raw_path.read_bytes()

    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(raw) < expected:
        raise DataFormatError(
            f"{path}: raw data truncated, got {len(raw)} bytes, dims {dims} need {expected}"
        )
    values = np.frombuffer(raw[:expected], dtype=dtype).astype(np.float32)
    values = np.ascontiguousarray(values.reshape(dims, order="F"))
    return VoxelVolume(dims, spacing, origin, values, "hu")


def write_metaimage(vol: VoxelVolume, path) -> Path:
    """Write an .mhd header plus sidecar .raw (float32, little-endian)."""
    path = Path(path)
    if path.suffix != ".mhd":
        raise DataFormatError(f"expected an .mhd path, got {path}")
    path.parent.mkdir(parents=True, exist_ok=True)
    raw_name = path.stem + ".raw"
    header = "\n".join(
        [
            "ObjectType = Image",
            "NDims = 3",
            "BinaryData = True",
            "BinaryDataByteOrderMSB = False",
            "CompressedData = False",
            f"DimSize = {vol.dims[0]} {vol.dims[1]} {vol.dims[2]}",
            f"ElementSpacing = {vol.spacing_mm[0]:g} {vol.spacing_mm[1]:g} {vol.spacing_mm[2]:g}",
            f"Offset = {vol.origin_mm[0]:g} {vol.origin_mm[1]:g} {vol.origin_mm[2]:g}",
            "ElementType = MET_FLOAT",
            f"ElementDataFile = {raw_name}",
            "",
        ]
    )
    path.write_text(header)
    data = np.asarray(vol.values, dtype="<f4").ravel(order="F")
    (path.parent / raw_name).write_bytes(data.tobytes())
    return path


def read_ct(path) -> VoxelVolume:
    """Read a CT volume in MetaImage or native header+raw format."""
    path = Path(path)
    if path.suffix in (".mhd", ".mha"):
        return read_metaimage(path)
    if path.suffix == ".json":
        vol = read_volume(path)
        if vol.kind != "hu":
            raise DataFormatError(f"{path}: CT volume must have kind 'hu', got {vol.kind!r}")
        return vol
    raise DataFormatError(f"{path}: unsupported CT format (expected .mhd, .mha or .json)")
