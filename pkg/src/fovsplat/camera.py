"""Pinhole cameras, display geometry, and eccentricity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with a rigid world-to-camera transform.

    ``rotation`` and ``translation`` map world points into the camera frame
    (``p_cam = R @ p_world + t``); +z looks forward. Intrinsics are in pixels.
    """

    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.05
    far: float = 100.0

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera resolution must be positive")
        if not (0.0 < self.near < self.far):
            raise ValueError("need 0 < near < far")

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.rotation.T + self.translation

    @classmethod
    def look_at(
        cls,
        eye,
        target,
        up=(0.0, 1.0, 0.0),
        *,
        fov_deg: float = 50.0,
        width: int = 128,
        height: int = 128,
        near: float = 0.05,
        far: float = 100.0,
    ) -> "Camera":
        """Camera at ``eye`` looking toward ``target``.

        ``fov_deg`` is the vertical field of view; fx = fy (square pixels).
        """
        eye = np.asarray(eye, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        fwd = target - eye
        n = np.linalg.norm(fwd)
        if n < 1e-12:
            raise ValueError("eye and target coincide")
        fwd = fwd / n
        upv = np.asarray(up, dtype=np.float64)
        right = np.cross(fwd, upv)
        rn = np.linalg.norm(right)
        if rn < 1e-9:
            # up parallel to view direction: pick another axis
            upv = np.array([0.0, 0.0, 1.0]) if abs(fwd[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
            right = np.cross(fwd, upv)
            rn = np.linalg.norm(right)
        right = right / rn
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd])  # rows: camera axes in world coords
        t = -R @ eye
        f = 0.5 * height / math.tan(math.radians(fov_deg) * 0.5)
        return cls(
            rotation=R,
            translation=t,
            fx=f,
            fy=f,
            cx=width * 0.5,
            cy=height * 0.5,
            width=width,
            height=height,
            near=near,
            far=far,
        )

    @classmethod
    def orbit(
        cls,
        azimuth_deg: float,
        tilt_deg: float,
        radius: float,
        target=(0.0, 0.0, 0.0),
        **kwargs,
    ) -> "Camera":
        """Camera on a cap around ``target``, looking inward.

        ``tilt_deg`` is measured from the world +z axis, ``azimuth_deg``
        rotates around it. tilt=0 looks straight down +z onto the target.
        """
        az = math.radians(azimuth_deg)
        tl = math.radians(tilt_deg)
        offset = np.array(
            [
                radius * math.sin(tl) * math.cos(az),
                radius * math.sin(tl) * math.sin(az),
                radius * math.cos(tl),
            ]
        )
        target = np.asarray(target, dtype=np.float64)
        return cls.look_at(target + offset, target, **kwargs)


@dataclass(frozen=True)
class DisplayGeometry:
    """Display raster plus the gaze point that anchors eccentricity."""

    width: int
    height: int
    pixels_per_degree: float = 20.0
    gaze: tuple[float, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("display resolution must be positive")
        if self.pixels_per_degree <= 0:
            raise ValueError("pixels_per_degree must be positive")
        gaze = self.gaze
        if gaze is None:
            gaze = (self.width / 2.0, self.height / 2.0)
        gaze = (float(gaze[0]), float(gaze[1]))
        if not (0.0 <= gaze[0] <= self.width and 0.0 <= gaze[1] <= self.height):
            raise ValueError("gaze must lie within the display")
        object.__setattr__(self, "gaze", gaze)

    def with_gaze(self, gx: float, gy: float) -> "DisplayGeometry":
        return DisplayGeometry(self.width, self.height, self.pixels_per_degree, (gx, gy))


def eccentricity_of(pixel, display: DisplayGeometry) -> float:
    """Angular distance of ``pixel`` from the gaze point, in degrees."""
    gx, gy = display.gaze
    return math.hypot(pixel[0] - gx, pixel[1] - gy) / display.pixels_per_degree


def eccentricity_map(display: DisplayGeometry) -> np.ndarray:
    """Per-pixel eccentricity (degrees), evaluated at pixel centers."""
    xs = np.arange(display.width, dtype=np.float64) + 0.5
    ys = np.arange(display.height, dtype=np.float64) + 0.5
    gx, gy = display.gaze
    dx = xs[None, :] - gx
    dy = ys[:, None] - gy
    return np.hypot(dx, dy) / display.pixels_per_degree
