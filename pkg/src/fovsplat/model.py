"""Scene model: Gaussian points with a hierarchical quality-bound structure.

A point participates in quality levels 1..m (its quality bound). Level l+1's
point set is by construction a strict subset of level l's. For every level
2..m a point carries an override record holding the only level-dependent
parameters: opacity and the DC spherical-harmonic coefficients (4 scalars).
Override records are kept dense and sorted by (point, level); a record that
was never trained simply repeats the base values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-6
QUAT_RENORM_TOL = 1e-3


class ModelValidationError(ValueError):
    """A model field violates an invariant; names the offending point."""


def sh_coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


def sh_degree_from_count(count: int) -> int:
    degree = int(round(count**0.5)) - 1
    if sh_coeff_count(degree) != count or not 0 <= degree <= 3:
        raise ModelValidationError(f"unsupported SH coefficient count {count}")
    return degree


def override_offsets(quality_bound: np.ndarray) -> np.ndarray:
    """Prefix offsets into the dense override table; length N+1."""
    counts = np.maximum(quality_bound.astype(np.int64) - 1, 0)
    out = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=out[1:])
    return out


@dataclass
class FrModel:
    """Struct-of-arrays Gaussian point model with foveation levels.

    Arrays are float64 internally; the fsplat file stores float32, so any
    loaded model round-trips bit-exactly.
    """

    positions: np.ndarray  # (N, 3)
    scales: np.ndarray  # (N, 3) per-axis sigma, > 0
    rotations: np.ndarray  # (N, 4) unit quaternions (w, x, y, z)
    opacities: np.ndarray  # (N,) in [0, 1]
    sh: np.ndarray  # (N, K, 3), K = (degree + 1)^2
    quality_bound: np.ndarray  # (N,) int32 in [1, level_count]
    level_count: int = 1
    override_opacity: np.ndarray = field(default=None)  # type: ignore[assignment]
    override_sh_dc: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(n)
        sh = np.asarray(self.sh, dtype=np.float64)
        if n == 0:
            k = sh.shape[1] if sh.ndim == 3 else 1
            sh = sh.reshape(0, k, 3)
        else:
            sh = sh.reshape(n, -1, 3)
        self.sh = sh
        self.quality_bound = np.asarray(self.quality_bound, dtype=np.int32).reshape(n)
        m = int(override_offsets(self.quality_bound)[-1])
        if self.override_opacity is None:
            self.override_opacity = np.empty(0, dtype=np.float64)
        if self.override_sh_dc is None:
            self.override_sh_dc = np.empty((0, 3), dtype=np.float64)
        self.override_opacity = np.asarray(self.override_opacity, dtype=np.float64).reshape(-1)
        self.override_sh_dc = np.asarray(self.override_sh_dc, dtype=np.float64).reshape(-1, 3)
        if len(self.override_opacity) != m or len(self.override_sh_dc) != m:
            # densify: start every record from the base values, keeping any
            # rows that were already present impossible to misalign
            if len(self.override_opacity) == 0 and m > 0:
                self.override_opacity, self.override_sh_dc = self._base_override_table()
            elif len(self.override_opacity) != m:
                raise ModelValidationError(
                    f"override table has {len(self.override_opacity)} rows, expected {m}"
                )

    def _base_override_table(self) -> tuple[np.ndarray, np.ndarray]:
        offs = self.override_offsets
        m = int(offs[-1])
        op = np.empty(m, dtype=np.float64)
        dc = np.empty((m, 3), dtype=np.float64)
        for p in range(self.n_points):
            lo, hi = offs[p], offs[p + 1]
            if hi > lo:
                op[lo:hi] = self.opacities[p]
                dc[lo:hi] = self.sh[p, 0]
        return op, dc

    # -- basic views ------------------------------------------------------

    @property
    def n_points(self) -> int:
        return len(self.positions)

    @property
    def sh_degree(self) -> int:
        return sh_degree_from_count(self.sh.shape[1])

    @property
    def override_offsets(self) -> np.ndarray:
        return override_offsets(self.quality_bound)

    @property
    def n_overrides(self) -> int:
        return len(self.override_opacity)

    @property
    def level_sizes(self) -> list[int]:
        """Point count per level; non-increasing by construction."""
        return [int(np.count_nonzero(self.quality_bound >= lv)) for lv in range(1, self.level_count + 1)]

    def level_mask(self, level: int) -> np.ndarray:
        return self.quality_bound >= level

    def override_rows(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """(point indices, table rows) of the override records at ``level``."""
        if level < 2:
            raise ValueError("overrides exist for levels >= 2")
        points = np.flatnonzero(self.quality_bound >= level)
        rows = self.override_offsets[points] + (level - 2)
        return points, rows

    def effective_params(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """(opacity, sh_dc) per point with the ``level`` override applied.

        Points below the level keep their base values; callers filter by
        ``level_mask`` separately.
        """
        opacity = self.opacities.copy()
        sh_dc = self.sh[:, 0, :].copy()
        if level >= 2:
            points, rows = self.override_rows(level)
            opacity[points] = self.override_opacity[rows]
            sh_dc[points] = self.override_sh_dc[rows]
        return opacity, sh_dc

    def set_override(self, point: int, level: int, opacity: float, sh_dc) -> None:
        if not 2 <= level <= int(self.quality_bound[point]):
            raise ModelValidationError(
                f"point {point}: override level {level} outside 2..{int(self.quality_bound[point])}"
            )
        row = int(self.override_offsets[point]) + level - 2
        self.override_opacity[row] = float(opacity)
        self.override_sh_dc[row] = np.asarray(sh_dc, dtype=np.float64)

    # -- structural edits --------------------------------------------------

    def copy(self) -> "FrModel":
        return FrModel(
            positions=self.positions.copy(),
            scales=self.scales.copy(),
            rotations=self.rotations.copy(),
            opacities=self.opacities.copy(),
            sh=self.sh.copy(),
            quality_bound=self.quality_bound.copy(),
            level_count=self.level_count,
            override_opacity=self.override_opacity.copy(),
            override_sh_dc=self.override_sh_dc.copy(),
        )

    def subset(self, keep: np.ndarray) -> "FrModel":
        """Model restricted to ``keep`` (bool mask or index array)."""
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        offs = self.override_offsets
        rows = np.concatenate(
            [np.arange(offs[p], offs[p + 1]) for p in keep], dtype=np.int64
        ) if len(keep) else np.empty(0, dtype=np.int64)
        return FrModel(
            positions=self.positions[keep],
            scales=self.scales[keep],
            rotations=self.rotations[keep],
            opacities=self.opacities[keep],
            sh=self.sh[keep],
            quality_bound=self.quality_bound[keep],
            level_count=self.level_count,
            override_opacity=self.override_opacity[rows],
            override_sh_dc=self.override_sh_dc[rows],
        )

    def with_quality_bounds(self, new_bounds: np.ndarray, level_count: int | None = None) -> "FrModel":
        """Rebuild the override table for new bounds.

        Existing records are kept where a (point, level) pair survives; new
        records start from the point's deepest surviving override (or base).
        """
        new_bounds = np.asarray(new_bounds, dtype=np.int32)
        old_offs = self.override_offsets
        new_offs = override_offsets(new_bounds)
        m = int(new_offs[-1])
        op = np.empty(m, dtype=np.float64)
        dc = np.empty((m, 3), dtype=np.float64)
        for p in range(self.n_points):
            lo, hi = new_offs[p], new_offs[p + 1]
            if hi == lo:
                continue
            olo, ohi = old_offs[p], old_offs[p + 1]
            n_old = ohi - olo
            n_new = hi - lo
            n_copy = min(n_old, n_new)
            op[lo : lo + n_copy] = self.override_opacity[olo : olo + n_copy]
            dc[lo : lo + n_copy] = self.override_sh_dc[olo : olo + n_copy]
            if n_new > n_copy:
                if n_old > 0:
                    fill_op = self.override_opacity[olo + n_old - 1]
                    fill_dc = self.override_sh_dc[olo + n_old - 1]
                else:
                    fill_op = self.opacities[p]
                    fill_dc = self.sh[p, 0]
                op[lo + n_copy : hi] = fill_op
                dc[lo + n_copy : hi] = fill_dc
        return FrModel(
            positions=self.positions.copy(),
            scales=self.scales.copy(),
            rotations=self.rotations.copy(),
            opacities=self.opacities.copy(),
            sh=self.sh.copy(),
            quality_bound=new_bounds,
            level_count=self.level_count if level_count is None else level_count,
            override_opacity=op,
            override_sh_dc=dc,
        )

    # -- validation ---------------------------------------------------------

    def validate(self) -> "FrModel":
        n = self.n_points
        for name, arr, shape in (
            ("scales", self.scales, (n, 3)),
            ("rotations", self.rotations, (n, 4)),
            ("opacities", self.opacities, (n,)),
            ("quality_bound", self.quality_bound, (n,)),
        ):
            if arr.shape != shape:
                raise ModelValidationError(f"{name} has shape {arr.shape}, expected {shape}")
        self.sh_degree  # raises on a bad coefficient count
        for name, arr in (("positions", self.positions), ("scales", self.scales), ("sh", self.sh)):
            bad = ~np.isfinite(arr)
            if bad.any():
                idx = int(np.argwhere(bad)[0][0])
                raise ModelValidationError(f"point {idx}: non-finite {name}")
        bad = ~(self.scales > 0).all(axis=1)
        if bad.any():
            raise ModelValidationError(f"point {int(np.flatnonzero(bad)[0])}: non-positive scale")
        norms = np.linalg.norm(self.rotations, axis=1)
        bad = np.abs(norms - 1.0) > QUAT_NORM_TOL
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise ModelValidationError(
                f"point {idx}: quaternion norm {norms[idx]:.6g} not unit"
            )
        bad = (self.opacities < 0) | (self.opacities > 1) | ~np.isfinite(self.opacities)
        if bad.any():
            raise ModelValidationError(f"point {int(np.flatnonzero(bad)[0])}: opacity outside [0, 1]")
        if self.level_count < 1:
            raise ModelValidationError("level_count must be >= 1")
        bad = (self.quality_bound < 1) | (self.quality_bound > self.level_count)
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise ModelValidationError(
                f"point {idx}: quality bound {int(self.quality_bound[idx])} outside [1, {self.level_count}]"
            )
        m = int(self.override_offsets[-1])
        if self.n_overrides != m:
            raise ModelValidationError(f"override table has {self.n_overrides} rows, expected {m}")
        bad = (
            (self.override_opacity < 0)
            | (self.override_opacity > 1)
            | ~np.isfinite(self.override_opacity)
        )
        if bad.any():
            raise ModelValidationError("override opacity outside [0, 1]")
        if not np.isfinite(self.override_sh_dc).all():
            raise ModelValidationError("non-finite override SH-DC")
        return self

    def renormalize_rotations(self) -> None:
        """Fix quaternions within the load tolerance; reject others."""
        norms = np.linalg.norm(self.rotations, axis=1)
        bad = np.abs(norms - 1.0) > QUAT_RENORM_TOL
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise ModelValidationError(
                f"point {idx}: quaternion norm {norms[idx]:.6g} too far from unit"
            )
        self.rotations = self.rotations / norms[:, None]

    def allclose(self, other: "FrModel") -> bool:
        return (
            self.level_count == other.level_count
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in (
                    "positions",
                    "scales",
                    "rotations",
                    "opacities",
                    "sh",
                    "quality_bound",
                    "override_opacity",
                    "override_sh_dc",
                )
            )
        )


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions (w, x, y, z); batched (N,4)->(N,3,3)."""
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((len(q), 3, 3), dtype=np.float64)
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R
