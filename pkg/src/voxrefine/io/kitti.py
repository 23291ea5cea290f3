# KITTI / SemanticKITTI readers: velodyne sweeps, odometry calibration and
# the voxelized semantic scene completion labels
import logging
import numpy as np
from pathlib import Path
from scipy.spatial.transform import Rotation
from typing import Dict, List, Tuple

from voxrefine.errors import DatasetNotFound, ParseError
from voxrefine.fusion.camera import CameraModel
from voxrefine.generation.classes import ClassTable
from voxrefine.lidar.pointcloud import PointCloud

logger = logging.getLogger(__name__)

SEMANTICKITTI_DIMS = (256, 256, 32)
KITTI_IMAGE_SIZE = (1241, 376)


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFound(f"missing file: {path}")
    return path


def _read_exact(path, dtype, count: int) -> np.ndarray:
    # The whole file as `count` items of `dtype`, or ParseError
    path = _require(path)
    itemsize = np.dtype(dtype).itemsize
    size = path.stat().st_size
    if size != count * itemsize:
        raise ParseError(f"{path}: {size} bytes, expected {count * itemsize}")
    return np.fromfile(path, dtype=dtype)


def read_velodyne(path) -> PointCloud:
    # Little-endian float32 (x, y, z, intensity) quadruples, no header
    path = _require(path)
    size = path.stat().st_size
    if size % 16:
        raise ParseError(f"{path}: {size} bytes is not a whole number of points")
    points = np.fromfile(path, dtype="<f4").reshape(-1, 4).astype(np.float64)
    if not np.all(np.isfinite(points)):
        raise ParseError(f"{path}: non-finite coordinates")
    return PointCloud(points, np.zeros(3))


def read_calib(path) -> Dict[str, np.ndarray]:
    # {"P2": 3x4 projection, "Tr": 4x4 velodyne -> rectified camera 0}
    path = _require(path)
    entries = {}
    with open(path) as f:
        for line in f:
            if ":" not in line:
                continue
            key, values = line.split(":", 1)
            try:
                entries[key.strip()] = np.array([float(v) for v in values.split()])
            except ValueError:
                raise ParseError(f"{path}: bad numbers for {key.strip()}")
    for key in ("P2", "Tr"):
        if key not in entries or entries[key].size != 12:
            raise ParseError(f"{path}: missing or malformed {key}")
    tr = np.eye(4)
    tr[:3, :] = entries["Tr"].reshape(3, 4)
    # Stored rotations are only orthonormal to printed precision
    tr[:3, :3] = Rotation.from_matrix(tr[:3, :3]).as_matrix()
    return {"P2": entries["P2"].reshape(3, 4), "Tr": tr}


def camera_from_calib(calib: Dict[str, np.ndarray], image_size=KITTI_IMAGE_SIZE) -> CameraModel:
    # Left colour camera in the velodyne frame
    P2 = calib["P2"]
    K = P2[:, :3].copy()
    cam2_from_cam0 = np.eye(4)
    cam2_from_cam0[:3, 3] = np.linalg.solve(K, P2[:, 3])
    return CameraModel(K, cam2_from_cam0 @ calib["Tr"], image_size, name="image_2")


def read_voxel_labels(path, dims=SEMANTICKITTI_DIMS) -> np.ndarray:
    # uint16 little-endian per voxel, x slowest-varying
    return _read_exact(path, "<u2", int(np.prod(dims))).reshape(dims)


def read_voxel_mask(path, dims=SEMANTICKITTI_DIMS) -> np.ndarray:
    # Bit-packed, most significant bit first
    n = int(np.prod(dims))
    packed = _read_exact(path, np.uint8, -(-n // 8))
    return np.unpackbits(packed, bitorder="big")[:n].reshape(dims).astype(bool)


def pack_voxel_mask(mask: np.ndarray) -> bytes:
    return np.packbits(np.asarray(mask, dtype=bool).ravel(), bitorder="big").tobytes()


def list_frames(root, sequence: str) -> List[str]:
    voxels = Path(root) / "sequences" / sequence / "voxels"
    if not voxels.is_dir():
        raise DatasetNotFound(f"missing directory: {voxels}")
    return sorted(p.stem for p in voxels.glob("*.label"))


def load_frame(root, sequence: str, frame: str, classes: ClassTable,
               dims=SEMANTICKITTI_DIMS) -> Tuple[PointCloud, np.ndarray, CameraModel]:
    # (sweep, training-id labels with invalid voxels set to ignore, camera)
    seq = Path(root) / "sequences" / sequence
    pc = read_velodyne(seq / "velodyne" / f"{frame}.bin")
    labels = classes.remap(read_voxel_labels(seq / "voxels" / f"{frame}.label", dims))
    invalid_path = seq / "voxels" / f"{frame}.invalid"
    if invalid_path.is_file():
        labels[read_voxel_mask(invalid_path, dims)] = classes.ignore
    camera = camera_from_calib(read_calib(seq / "calib.txt"))
    logger.debug("loaded %s/%s: %d points", sequence, frame, len(pc))
    return pc, labels, camera
