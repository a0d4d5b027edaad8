"""Pinhole camera with a rigid world-to-camera transform.

Screen convention: x grows rightward, y grows DOWNWARD, pixel centers sit at
integer + 0.5.  Camera space is right-handed with +z pointing into the scene,
so visible points have z > 0.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ProjectiveCamera:
    focal: float
    principal: tuple          # (cx, cy) pixels
    image_size: tuple         # (H, W) pixels
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal length must be positive")
        if min(self.image_size) < 1:
            raise ValueError("image size must be at least 1x1")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))

    def world_to_camera(self, points):
        return points @ self.rotation.T + self.translation

    def to_dict(self):
        return {
            "focal": float(self.focal),
            "principal": [float(v) for v in self.principal],
            "image_size": [int(v) for v in self.image_size],
            "rotation": np.asarray(self.rotation).tolist(),
            "translation": np.asarray(self.translation).tolist(),
        }

    @staticmethod
    def from_dict(d):
        return ProjectiveCamera(
            focal=d["focal"],
            principal=tuple(d["principal"]),
            image_size=tuple(d["image_size"]),
            rotation=np.asarray(d["rotation"], dtype=np.float64),
            translation=np.asarray(d["translation"], dtype=np.float64),
        )


# Default intrinsics: 1015 px focal at 224x224, scaled linearly with size.
DEFAULT_FOCAL_224 = 1015.0
DEFAULT_CAMERA_DISTANCE = 10.0


def default_camera(image_size=224, distance=DEFAULT_CAMERA_DISTANCE):
    """Camera on the +z world axis looking back at the origin.

    The model convention is y up / z toward the viewer, so the world-to-camera
    rotation flips y (screen y grows downward) and z (camera looks along -z).
    """
    h = w = int(image_size)
    focal = DEFAULT_FOCAL_224 * image_size / 224.0
    rot = np.diag([1.0, -1.0, -1.0])
    return ProjectiveCamera(
        focal=focal,
        principal=(w / 2.0, h / 2.0),
        image_size=(h, w),
        rotation=rot,
        translation=np.array([0.0, 0.0, distance]),
    )


def project(vertices, camera):
    """Project world points (N, 3) to screen (N, 3) = (x px, y px, camera z).

    Returns (screen, in_front) where in_front marks points with positive
    camera-space depth; screen x/y of flagged points are not meaningful.
    """
    pts = np.asarray(vertices, dtype=np.float64)
    cam = camera.world_to_camera(pts)
    z = cam[..., 2]
    in_front = z > 1e-9
    safe_z = np.where(in_front, z, 1.0)
    x = camera.focal * cam[..., 0] / safe_z + camera.principal[0]
    y = camera.focal * cam[..., 1] / safe_z + camera.principal[1]
    return np.stack([x, y, z], axis=-1), in_front
