# Pinhole cameras: projection, visibility and bilinear sampling of 2D
# feature maps. Pixel (0, 0) is the centre of the top-left pixel.
import numpy as np
from dataclasses import dataclass
from scipy.spatial.transform import Rotation
from typing import Dict, List, Optional, Sequence, Set, Tuple

from voxrefine.errors import ShapeError

NEAR_PLANE = 0.1  # meters


@dataclass
class CameraModel:
    intrinsics: np.ndarray  # 3x3, zero skew
    extrinsics: np.ndarray  # 4x4 world -> camera
    image_size: Tuple[int, int]  # (W, H)
    name: str = ""

    def __post_init__(self) -> None:
        self.intrinsics = np.asarray(self.intrinsics, dtype=np.float64).reshape(3, 3)
        self.extrinsics = np.asarray(self.extrinsics, dtype=np.float64).reshape(4, 4)
        self.image_size = (int(self.image_size[0]), int(self.image_size[1]))
        K = self.intrinsics
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if abs(K[0, 1]) > 0:
            raise ValueError("skewed intrinsics are not supported")
        R = self.rotation
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1) > 1e-6:
            raise ValueError("extrinsic rotation is not a proper rotation")

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsics[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsics[:3, 3]

    @property
    def center(self) -> np.ndarray:
        # Camera centre in world coordinates
        return -self.rotation.T @ self.translation

    @classmethod
    def from_pinhole(cls, fx: float, fy: float, cx: float, cy: float,
                     extrinsics: np.ndarray, image_size, name="") -> "CameraModel":
        K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(K, extrinsics, image_size, name)

    def to_dict(self) -> Dict:
        return {"name": self.name, "intrinsics": self.intrinsics.tolist(),
                "extrinsics": self.extrinsics.tolist(),
                "image_size": list(self.image_size)}

    @classmethod
    def from_dict(cls, d: Dict) -> "CameraModel":
        return cls(d["intrinsics"], d["extrinsics"], d["image_size"], d.get("name", ""))


def look_extrinsics(position: Sequence[float], yaw: float, pitch: float = 0.0) -> np.ndarray:
    # World -> camera for a camera at `position` looking along `yaw` (about
    # world z, x forward) tilted down by `pitch`. Camera frame: x right,
    # y down, z forward.
    cam_from_body = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    world_from_body = Rotation.from_euler("ZY", [yaw, pitch]).as_matrix()
    R = cam_from_body @ world_from_body.T
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = -R @ np.asarray(position, dtype=np.float64)
    return T


def ring_rig(n_cameras=6, fov_deg=70.0, image_size=(64, 48),
             position=(0.0, 0.0, 1.5), pitch=0.0) -> List[CameraModel]:
    # Cameras evenly spaced in yaw, sharing one centre; neighbouring frusta
    # overlap when fov exceeds 360 / n_cameras
    W, H = image_size
    f = (W / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    rig = []
    for i in range(n_cameras):
        yaw = 2.0 * np.pi * i / n_cameras
        rig.append(CameraModel.from_pinhole(f, f, (W - 1) / 2.0, (H - 1) / 2.0,
                                            look_extrinsics(position, yaw, pitch),
                                            image_size, name=f"cam{i}"))
    return rig


def to_camera(cam: CameraModel, p_world: np.ndarray) -> np.ndarray:
    p = np.asarray(p_world, dtype=np.float64)
    return p @ cam.rotation.T + cam.translation


def project_points(cam: CameraModel, p_world: np.ndarray):
    # Batched projection: (uv (N, 2), depth (N,), hit mask (N,))
    p_world = np.asarray(p_world, dtype=np.float64).reshape(-1, 3)
    pc = to_camera(cam, p_world)
    depth = pc[:, 2]
    front = depth > NEAR_PLANE
    safe = np.where(front, depth, 1.0)
    K = cam.intrinsics
    u = K[0, 0] * pc[:, 0] / safe + K[0, 2]
    v = K[1, 1] * pc[:, 1] / safe + K[1, 2]
    W, H = cam.image_size
    hit = front & (u >= 0) & (u < W) & (v >= 0) & (v < H)
    return np.stack([u, v], axis=1), depth, hit


def project(cam: CameraModel, p_world) -> Optional[Tuple[float, float, float]]:
    uv, depth, hit = project_points(cam, p_world)
    if not hit[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(depth[0])


def visible_cameras(rig: List[CameraModel], p_world) -> Set[int]:
    return {i for i, cam in enumerate(rig) if project(cam, p_world) is not None}


def visibility_matrix(rig: List[CameraModel], p_world: np.ndarray) -> np.ndarray:
    # (N, n_cameras) hit mask
    p_world = np.asarray(p_world, dtype=np.float64).reshape(-1, 3)
    if not rig:
        return np.zeros((len(p_world), 0), dtype=bool)
    return np.stack([project_points(cam, p_world)[2] for cam in rig], axis=1)


def backproject(cam: CameraModel, u, v, depth) -> np.ndarray:
    K = cam.intrinsics
    u, v, depth = np.asarray(u, float), np.asarray(v, float), np.asarray(depth, float)
    pc = np.stack([(u - K[0, 2]) / K[0, 0] * depth,
                   (v - K[1, 2]) / K[1, 1] * depth, depth], axis=-1)
    return (pc - cam.translation) @ cam.rotation


def pixel_rays(cam: CameraModel, stride=1) -> np.ndarray:
    # Unit world-space directions through every `stride`-th pixel centre
    W, H = cam.image_size
    us, vs = np.meshgrid(np.arange(0, W, stride), np.arange(0, H, stride), indexing="xy")
    far = backproject(cam, us.ravel(), vs.ravel(), np.ones(us.size))
    d = far - cam.center
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def roundtrip_check(cam: CameraModel, p_world) -> float:
    # Pixel residual of project -> backproject -> project
    first = project(cam, p_world)
    if first is None:
        raise ValueError("point does not project into the image")
    u, v, depth = first
    again = project(cam, backproject(cam, u, v, depth))
    if again is None:
        return float("inf")
    return float(np.hypot(again[0] - u, again[1] - v))


class FeatureMap2D:
    def __init__(self, maps: Sequence[np.ndarray]) -> None:
        # One (H, W, C) array per camera
        self.maps = [np.asarray(m, dtype=np.float64) for m in maps]
        if not self.maps:
            raise ShapeError("feature maps need at least one camera")
        widths = {m.shape[-1] for m in self.maps}
        if any(m.ndim != 3 for m in self.maps) or len(widths) != 1:
            raise ShapeError("feature maps must be (H, W, C) with a shared C")

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def channels(self) -> int:
        return self.maps[0].shape[-1]

    @classmethod
    def constant(cls, rig: List[CameraModel], value) -> "FeatureMap2D":
        value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        return cls([np.broadcast_to(value, (c.image_size[1], c.image_size[0], len(value))).copy()
                    for c in rig])


def sample_points(fmap: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Batched bilinear sampling of an (H, W, C) map; taps outside read zero
    H, W, C = fmap.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    shape = u.shape
    u, v = u.ravel(), v.ravel()
    u0, v0 = np.floor(u), np.floor(v)
    du, dv = u - u0, v - v0
    u0, v0 = u0.astype(np.int64), v0.astype(np.int64)
    out = np.zeros((len(u), C))
    for ou, ov, w in ((0, 0, (1 - du) * (1 - dv)), (1, 0, du * (1 - dv)),
                      (0, 1, (1 - du) * dv), (1, 1, du * dv)):
        uu, vv = u0 + ou, v0 + ov
        ok = (uu >= 0) & (uu < W) & (vv >= 0) & (vv < H) & (w != 0)
        out[ok] += w[ok, None] * fmap[vv[ok], uu[ok]]
    return out.reshape(shape + (C,))


def bilinear_sample(maps: FeatureMap2D, cam_id: int, u: float, v: float) -> np.ndarray:
    return sample_points(maps.maps[cam_id], np.array([u]), np.array([v]))[0]


def gather_image_features(rig: List[CameraModel], maps: FeatureMap2D,
                          p_world: np.ndarray) -> np.ndarray:
    # Mean over the visible cameras of the feature sampled at each point's
    # projection; zero for points no camera sees
    p_world = np.asarray(p_world, dtype=np.float64).reshape(-1, 3)
    out = np.zeros((len(p_world), maps.channels))
    hits = np.zeros(len(p_world))
    for i, cam in enumerate(rig):
        uv, _, hit = project_points(cam, p_world)
        if np.any(hit):
            out[hit] += sample_points(maps.maps[i], uv[hit, 0], uv[hit, 1])
            hits[hit] += 1
    seen = hits > 0
    out[seen] /= hits[seen, None]
    return out
