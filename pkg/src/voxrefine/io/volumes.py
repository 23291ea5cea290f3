# Dense label volumes on disk: flat little-endian array, x slowest-varying,
# plus a `<path>.hdr` sidecar of key=value lines
import numpy as np
from pathlib import Path
from typing import Dict, Optional, Tuple

from voxrefine.errors import DatasetNotFound, ParseError
from voxrefine.voxel.grid import GridGeometry

_DTYPES = {"uint8": "<u1", "uint16": "<u2", "float32": "<f4"}


def header_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".hdr")


def write_volume(path, volume: np.ndarray, geom: GridGeometry, kind: str,
                 seed: Optional[int] = None) -> None:
    volume = np.asarray(volume)
    if volume.shape[:3] != tuple(geom.dims):
        raise ValueError(f"volume {volume.shape} does not match dims {geom.dims}")
    if volume.dtype.name not in _DTYPES:
        raise ValueError(f"unsupported volume dtype {volume.dtype}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    volume.astype(_DTYPES[volume.dtype.name]).tofile(path)
    fields = {
        "kind": kind,
        "dtype": volume.dtype.name,
        "dims": " ".join(str(d) for d in volume.shape),
        "scale": geom.scale,
        "origin": " ".join(repr(float(o)) for o in geom.origin),
        "voxel_size": repr(float(geom.voxel_size)),
        "dims_scale1": " ".join(str(d) for d in geom.dims_scale1),
        "seed": "none" if seed is None else seed,
    }
    with open(header_path(path), "w") as f:
        for key, value in fields.items():
            f.write(f"{key}={value}\n")


def read_header(path) -> Dict[str, str]:
    hdr = header_path(path)
    if not hdr.is_file():
        raise DatasetNotFound(f"missing header: {hdr}")
    fields = {}
    with open(hdr) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{hdr}: bad header line '{line}'")
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    missing = {"kind", "dtype", "dims", "scale", "origin", "voxel_size"} - set(fields)
    if missing:
        raise ParseError(f"{hdr}: missing {sorted(missing)}")
    return fields


def read_volume(path) -> Tuple[np.ndarray, GridGeometry, Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFound(f"missing volume: {path}")
    fields = read_header(path)
    try:
        dims = tuple(int(d) for d in fields["dims"].split())
        dtype = _DTYPES[fields["dtype"]]
        scale = int(fields["scale"])
        origin = tuple(float(o) for o in fields["origin"].split())
        voxel_size = float(fields["voxel_size"])
        dims1 = tuple(int(d) for d in fields.get("dims_scale1", "").split()) \
            or tuple(d * scale for d in dims[:3])
    except (KeyError, ValueError) as e:
        raise ParseError(f"{header_path(path)}: {e}")
    expected = int(np.prod(dims)) * np.dtype(dtype).itemsize
    size = path.stat().st_size
    if size != expected:
        raise ParseError(f"{path}: {size} bytes, header promises {expected}")
    geom = GridGeometry(origin, voxel_size, dims1, scale)
    volume = np.fromfile(path, dtype=dtype).reshape(dims).astype(fields["dtype"])
    return volume, geom, fields
