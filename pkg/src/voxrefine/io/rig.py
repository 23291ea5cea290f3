# Camera rigs as JSON: {"cameras": [{name, image_size, intrinsics, extrinsics}]}
import json
from pathlib import Path
from typing import List

from voxrefine.errors import DatasetNotFound, ParseError
from voxrefine.fusion.camera import CameraModel
from voxrefine.generation.classes import RES_DIR


def load_rig(path=RES_DIR / "nuscenes_ring_rig.json") -> List[CameraModel]:
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFound(f"missing rig file: {path}")
    try:
        with open(path) as f:
            cameras = json.load(f)["cameras"]
        return [CameraModel.from_dict(c) for c in cameras]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad rig description ({e})")


def save_rig(rig: List[CameraModel], path) -> None:
    with open(path, "w") as f:
        json.dump({"cameras": [cam.to_dict() for cam in rig]}, f, indent=2)
