"""Model file I/O: the fsplat container and standard splat (PLY) import.

fsplat layout (all little-endian):

    header   magic b"FSPL" | u32 version | u32 point count | u32 level count
             | u32 SH degree | u32 override count            (24 bytes)
    columns  positions f32 (N,3) | scales f32 (N,3) | quaternions f32 (N,4)
             | opacities f32 (N,) | SH f32 (N,K,3) | quality bounds u32 (N,)
    table    override payload f32 (M,4): opacity, dc_r, dc_g, dc_b,
             sorted by (point, level); (point, level) keys are implied by
             the quality-bound column, so the table adds exactly 16 bytes
             per override record.

Standard splat import reads the common binary PLY attribute set (positions,
log scales, logit opacities, quaternion, f_dc/f_rest SH coefficients) and
yields a single-level model.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import FrModel, ModelValidationError, override_offsets, sh_coeff_count

MAGIC = b"FSPL"
VERSION = 1
HEADER = struct.Struct("<4sIIIII")


class SplatFormatError(ValueError):
    """File cannot be parsed; the message names the byte offset."""


def fsplat_nbytes(n_points: int, sh_degree: int, n_overrides: int) -> int:
    """Exact file size of a model with the given shape."""
    k = sh_coeff_count(sh_degree)
    per_point = 4 * (3 + 3 + 4 + 1 + 3 * k + 1)
    return HEADER.size + n_points * per_point + 16 * n_overrides


def save_model(model: FrModel, path) -> None:
    """Write ``model`` to ``path``; load_model(save_model(m)) is bit-exact."""
    model.validate()
    k = model.sh.shape[1]
    parts = [
        HEADER.pack(
            MAGIC,
            VERSION,
            model.n_points,
            model.level_count,
            model.sh_degree,
            model.n_overrides,
        ),
        model.positions.astype("<f4").tobytes(),
        model.scales.astype("<f4").tobytes(),
        model.rotations.astype("<f4").tobytes(),
        model.opacities.astype("<f4").tobytes(),
        model.sh.astype("<f4").tobytes(),
        model.quality_bound.astype("<u4").tobytes(),
    ]
    table = np.empty((model.n_overrides, 4), dtype="<f4")
    table[:, 0] = model.override_opacity
    table[:, 1:] = model.override_sh_dc
    parts.append(table.tobytes())
    blob = b"".join(parts)
    assert len(blob) == fsplat_nbytes(model.n_points, model.sh_degree, model.n_overrides)
    Path(path).write_bytes(blob)


def _take(buf: bytes, offset: int, count: int, dtype, what: str) -> tuple[np.ndarray, int]:
    nbytes = count * np.dtype(dtype).itemsize
    if offset + nbytes > len(buf):
        raise SplatFormatError(
            f"truncated {what} at offset {offset}: need {nbytes} bytes, have {len(buf) - offset}"
        )
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    return arr, offset + nbytes


def load_fsplat(path) -> FrModel:
    buf = Path(path).read_bytes()
    if len(buf) < HEADER.size:
        raise SplatFormatError(f"truncated header at offset 0: file is {len(buf)} bytes")
    magic, version, n, levels, degree, n_ov = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise SplatFormatError(f"bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise SplatFormatError(f"unsupported version {version} at offset 4")
    if not 0 <= degree <= 3:
        raise SplatFormatError(f"unsupported SH degree {degree} at offset 16")
    k = sh_coeff_count(degree)
    off = HEADER.size
    positions, off = _take(buf, off, n * 3, "<f4", "positions")
    scales, off = _take(buf, off, n * 3, "<f4", "scales")
    quats, off = _take(buf, off, n * 4, "<f4", "quaternions")
    opac, off = _take(buf, off, n, "<f4", "opacities")
    shs, off = _take(buf, off, n * k * 3, "<f4", "SH coefficients")
    bounds, off = _take(buf, off, n, "<u4", "quality bounds")
    expected_ov = int(override_offsets(bounds.astype(np.int32))[-1])
    if n_ov != expected_ov:
        raise SplatFormatError(
            f"override count {n_ov} at offset 20 does not match quality bounds (expected {expected_ov})"
        )
    table, off = _take(buf, off, n_ov * 4, "<f4", "override table")
    if off != len(buf):
        raise SplatFormatError(f"{len(buf) - off} trailing bytes at offset {off}")
    table = table.reshape(-1, 4).astype(np.float64)
    model = FrModel(
        positions=positions.reshape(n, 3),
        scales=scales.reshape(n, 3),
        rotations=quats.reshape(n, 4),
        opacities=opac,
        sh=shs.reshape(n, k, 3),
        quality_bound=bounds.astype(np.int32),
        level_count=int(levels),
        override_opacity=table[:, 0],
        override_sh_dc=table[:, 1:],
    )
    model.renormalize_rotations()
    return model.validate()


# -- standard splat (PLY) import -------------------------------------------

_PLY_DTYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "u1",
    "uint8": "u1",
    "char": "i1",
    "int8": "i1",
    "short": "<i2",
    "ushort": "<u2",
    "int": "<i4",
    "int32": "<i4",
    "uint": "<u4",
    "uint32": "<u4",
}


def _parse_ply_header(buf: bytes):
    end = buf.find(b"end_header\n")
    if end < 0:
        raise SplatFormatError("no end_header line at offset 0")
    body_off = end + len(b"end_header\n")
    lines = buf[:end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise SplatFormatError("missing 'ply' magic at offset 0")
    fmt = None
    n_vertex = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    offset = len("ply\n")
    for line in lines[1:]:
        toks = line.strip().split()
        if not toks or toks[0] == "comment":
            offset += len(line) + 1
            continue
        if toks[0] == "format":
            fmt = toks[1]
        elif toks[0] == "element":
            in_vertex = toks[1] == "vertex"
            if in_vertex:
                n_vertex = int(toks[2])
        elif toks[0] == "property" and in_vertex:
            if toks[1] == "list":
                raise SplatFormatError(f"list property not supported at offset {offset}")
            if toks[1] not in _PLY_DTYPES:
                raise SplatFormatError(f"unknown property type {toks[1]!r} at offset {offset}")
            props.append((toks[2], _PLY_DTYPES[toks[1]]))
        offset += len(line) + 1
    if fmt != "binary_little_endian":
        raise SplatFormatError(f"unsupported PLY format {fmt!r} at offset 4")
    if n_vertex is None:
        raise SplatFormatError("no vertex element in header")
    return n_vertex, props, body_off


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def load_standard_splat(path) -> FrModel:
    """Import a 3DGS-convention splat PLY as a single-level model."""
    buf = Path(path).read_bytes()
    n, props, body_off = _parse_ply_header(buf)
    dtype = np.dtype([(name, dt) for name, dt in props])
    need = n * dtype.itemsize
    if body_off + need > len(buf):
        raise SplatFormatError(
            f"truncated vertex data at offset {body_off}: need {need} bytes, have {len(buf) - body_off}"
        )
    data = np.frombuffer(buf, dtype=dtype, count=n, offset=body_off)
    names = {name for name, _ in props}
    required = {"x", "y", "z", "opacity"}
    required |= {f"scale_{i}" for i in range(3)}
    required |= {f"rot_{i}" for i in range(4)}
    required |= {f"f_dc_{i}" for i in range(3)}
    missing = sorted(required - names)
    if missing:
        raise SplatFormatError(f"missing vertex properties {missing} at offset {body_off}")
    n_rest = sum(1 for name in names if name.startswith("f_rest_"))
    if n_rest % 3 != 0:
        raise SplatFormatError(f"f_rest count {n_rest} not divisible by 3")
    k = 1 + n_rest // 3
    degree = int(round(k**0.5)) - 1
    if sh_coeff_count(degree) != k or degree > 3:
        raise SplatFormatError(f"f_rest count {n_rest} does not match SH degrees 0..3")

    positions = np.stack([data["x"], data["y"], data["z"]], axis=1).astype(np.float64)
    scales = np.exp(np.stack([data[f"scale_{i}"] for i in range(3)], axis=1).astype(np.float64))
    quats = np.stack([data[f"rot_{i}"] for i in range(4)], axis=1).astype(np.float64)
    norms = np.linalg.norm(quats, axis=1)
    if (norms < 1e-6).any():
        raise ModelValidationError(
            f"point {int(np.flatnonzero(norms < 1e-6)[0])}: quaternion norm 0"
        )
    quats = quats / norms[:, None]
    opac = _sigmoid(np.asarray(data["opacity"], dtype=np.float64))
    sh = np.zeros((n, k, 3), dtype=np.float64)
    for c in range(3):
        sh[:, 0, c] = data[f"f_dc_{c}"]
    n_rest_per_channel = k - 1
    for c in range(3):
        for j in range(n_rest_per_channel):
            sh[:, 1 + j, c] = data[f"f_rest_{c * n_rest_per_channel + j}"]
    model = FrModel(
        positions=positions,
        scales=scales,
        rotations=quats,
        opacities=opac,
        sh=sh,
        quality_bound=np.ones(n, dtype=np.int32),
        level_count=1,
    )
    return model.validate()


def load_model(path, format: str | None = None) -> FrModel:
    """Load a model; ``format`` is "fsplat", "standard-splat", or inferred."""
    if format is None:
        format = "standard-splat" if str(path).endswith(".ply") else "fsplat"
    if format == "fsplat":
        return load_fsplat(path)
    if format == "standard-splat":
        return load_standard_splat(path)
    raise ValueError(f"unknown model format {format!r}")
