"""Minimal NIfTI-1 reader/writer for single-channel 3D volumes and masks.

Supports ``.nii`` and ``.nii.gz`` (gzip sniffed from the file content, not the
extension), the five datatypes the toolkit needs (uint8, int16, int32,
float32, float64), and ``scl_slope``/``scl_inter`` intensity scaling on read.
Reads accept either byte order (decided by a ``dim[0]`` sanity check); writes
are always little-endian, single-file ``n+1`` magic, data at offset 352.

Orientation handling is deliberately minimal: spacing comes from ``pixdim``
and the origin from the sform/qform translation. Rotation parts are neither
validated nor applied; grids are treated as axis-aligned throughout.
"""

from __future__ import annotations

import gzip
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Grid3, Mask, Volume

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte extension flag
MAGIC = b"n+1\x00"
GZIP_MAGIC = b"\x1f\x8b"

# NIfTI-1 datatype code -> numpy dtype (little-endian base).
DTYPE_BY_CODE = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
CODE_BY_DTYPE = {dt: code for code, dt in DTYPE_BY_CODE.items()}


class NiftiFormatError(ValueError):
    """The file is not a NIfTI-1 image this toolkit can read."""


@dataclass(frozen=True)
class NiftiHeaderView:
    """The header fields the toolkit consumes, already endian-decoded."""

    dims: tuple[int, int, int]
    datatype: int
    bitpix: int
    pixdim: tuple[float, float, float]
    scl_slope: float
    scl_inter: float
    vox_offset: int
    origin: tuple[float, float, float]
    byteorder: str  # "<" or ">"


def _open_for_read(path):
    f = open(path, "rb")
    head = f.read(2)
    f.seek(0)
    if head == GZIP_MAGIC:
        return gzip.GzipFile(fileobj=f, mode="rb")
    return f


def _parse_header(raw: bytes, path) -> NiftiHeaderView:
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError(f"{path}: file too short for a NIfTI-1 header ({len(raw)} bytes)")
    magic = raw[344:348]
    if magic != MAGIC:
        raise NiftiFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")

    bo = "<"
    (dim0,) = struct.unpack_from("<h", raw, 40)
    if not 1 <= dim0 <= 7:
        bo = ">"
        (dim0,) = struct.unpack_from(">h", raw, 40)
        if not 1 <= dim0 <= 7:
            raise NiftiFormatError(f"{path}: dim[0] is {dim0} in either byte order")

    dim = struct.unpack_from(bo + "8h", raw, 40)
    (datatype,) = struct.unpack_from(bo + "h", raw, 70)
    (bitpix,) = struct.unpack_from(bo + "h", raw, 72)
    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    (vox_offset,) = struct.unpack_from(bo + "f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(bo + "2f", raw, 112)
    qform_code, sform_code = struct.unpack_from(bo + "2h", raw, 252)
    qoffset = struct.unpack_from(bo + "3f", raw, 268)
    srow_x = struct.unpack_from(bo + "4f", raw, 280)
    srow_y = struct.unpack_from(bo + "4f", raw, 296)
    srow_z = struct.unpack_from(bo + "4f", raw, 312)

    extra = dim[1 + 3 : 1 + dim0] if dim0 > 3 else ()
    if dim0 < 3 or any(e > 1 for e in extra):
        shape = tuple(dim[1 : 1 + dim0])
        raise NiftiFormatError(f"{path}: non-3D image, dim[0]={dim0} shape={shape}")
    dims = (int(dim[1]), int(dim[2]), int(dim[3]))

    if datatype not in DTYPE_BY_CODE:
        raise NiftiFormatError(f"{path}: unsupported datatype code {datatype}")

    if sform_code > 0:
        origin = (float(srow_x[3]), float(srow_y[3]), float(srow_z[3]))
    elif qform_code > 0:
        origin = tuple(float(v) for v in qoffset)
    else:
        origin = (0.0, 0.0, 0.0)

    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise NiftiFormatError(f"{path}: non-positive pixdim {spacing}")

    return NiftiHeaderView(
        dims=dims,
        datatype=int(datatype),
        bitpix=int(bitpix),
        pixdim=spacing,
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        vox_offset=int(vox_offset),
        origin=origin,
        byteorder=bo,
    )


def read_header(path) -> NiftiHeaderView:
    with _open_for_read(path) as f:
        raw = f.read(HEADER_SIZE)
    return _parse_header(raw, path)


def _read_scaled(path) -> tuple[np.ndarray, Grid3]:
    """Read raw voxels, apply slope/inter, return (float32 F-order array, grid)."""
    with _open_for_read(path) as f:
        raw = f.read()
    hdr = _parse_header(raw, path)

    dt = DTYPE_BY_CODE[hdr.datatype]
    if hdr.byteorder == ">":
        dt = dt.newbyteorder(">")
    n = hdr.dims[0] * hdr.dims[1] * hdr.dims[2]
    nbytes = n * dt.itemsize
    payload = raw[hdr.vox_offset : hdr.vox_offset + nbytes]
    if len(payload) < nbytes:
        raise NiftiFormatError(
            f"{path}: truncated payload, expected {nbytes} bytes at offset "
            f"{hdr.vox_offset}, found {len(payload)}"
        )

    arr = np.frombuffer(payload, dtype=dt).astype(np.float32)
    slope, inter = hdr.scl_slope, hdr.scl_inter
    if slope != 0.0 and np.isfinite(slope) and not (slope == 1.0 and inter == 0.0):
        arr = arr * np.float32(slope) + np.float32(inter)
    arr = arr.reshape(hdr.dims, order="F")
    grid = Grid3(dims=hdr.dims, spacing=hdr.pixdim, origin=hdr.origin)
    return arr, grid


def read_volume(path) -> Volume:
    """Read a 3D NIfTI-1 file as a :class:`Volume` (intensity scaling applied)."""
    arr, grid = _read_scaled(path)
    return Volume(grid, arr)


def read_mask(path) -> Mask:
    """Read a 3D NIfTI-1 file as a binary :class:`Mask`.

    A voxel is foreground iff its scaled value is > 0.5. If the file holds
    anything other than 0/1 (within 1e-6) a warning lists the distinct values.
    """
    arr, grid = _read_scaled(path)
    distinct = np.unique(arr)
    nonbinary = distinct[(np.abs(distinct) > 1e-6) & (np.abs(distinct - 1.0) > 1e-6)]
    if nonbinary.size:
        shown = ", ".join(f"{v:g}" for v in nonbinary[:10])
        more = ", ..." if nonbinary.size > 10 else ""
        warnings.warn(f"{path}: mask contains non-binary values [{shown}{more}]", stacklevel=2)
    return Mask(grid, arr > 0.5)


def _build_header(grid: Grid3, datatype: int) -> bytes:
    dt = DTYPE_BY_CODE[datatype]
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<c", hdr, 38, b"r")
    struct.pack_into("<8h", hdr, 40, 3, grid.dims[0], grid.dims[1], grid.dims[2], 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, dt.itemsize * 8)
    struct.pack_into(
        "<8f", hdr, 76, 1.0, grid.spacing[0], grid.spacing[1], grid.spacing[2], 0.0, 0.0, 0.0, 0.0
    )
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: mm
    struct.pack_into("<2h", hdr, 252, 1, 1)  # qform_code, sform_code
    struct.pack_into("<3f", hdr, 256, 0.0, 0.0, 0.0)  # identity quaternion
    struct.pack_into("<3f", hdr, 268, *grid.origin)
    struct.pack_into("<4f", hdr, 280, grid.spacing[0], 0.0, 0.0, grid.origin[0])
    struct.pack_into("<4f", hdr, 296, 0.0, grid.spacing[1], 0.0, grid.origin[1])
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, grid.spacing[2], grid.origin[2])
    hdr[344:348] = MAGIC
    return bytes(hdr)


def write_volume(obj: Volume | Mask, path, use_gzip: bool | None = None, dtype=None) -> None:
    """Write a :class:`Volume` or :class:`Mask` as a single-file NIfTI-1 image.

    Masks are written as unsigned 8-bit. Volumes default to float32; ``dtype``
    may pick any supported datatype (integer targets are rounded). With
    ``use_gzip=None`` compression is inferred from a ``.gz`` suffix. Gzip
    output carries no timestamp, so identical inputs give identical bytes.
    """
    if isinstance(obj, Mask):
        data = obj.bits.astype(np.uint8)
        grid = obj.grid
    elif isinstance(obj, Volume):
        target = np.dtype(dtype) if dtype is not None else np.dtype(np.float32)
        if target not in CODE_BY_DTYPE:
            raise ValueError(f"unsupported write dtype {target}")
        if target.kind in "iu":
            data = np.rint(obj.values).astype(target)
        else:
            data = obj.values.astype(target)
        grid = obj.grid
    else:
        raise TypeError(f"expected Volume or Mask, got {type(obj).__name__}")

    datatype = CODE_BY_DTYPE[np.dtype(data.dtype)]
    header = _build_header(grid, datatype)
    payload = np.asfortranarray(data).tobytes(order="F")
    if data.dtype.byteorder == ">":  # pragma: no cover - we never produce big-endian
        payload = data.byteswap().tobytes(order="F")

    path = Path(path)
    if use_gzip is None:
        use_gzip = path.suffix == ".gz"
    with open(path, "wb") as f:
        if use_gzip:
            # filename="" and mtime=0 keep the gzip stream byte-deterministic
            with gzip.GzipFile(filename="", mode="wb", fileobj=f, mtime=0) as gz:
                gz.write(header)
                gz.write(b"\x00\x00\x00\x00")
                gz.write(payload)
        else:
            f.write(header)
            f.write(b"\x00\x00\x00\x00")
            f.write(payload)


def write_mask(mask: Mask, path, use_gzip: bool | None = None) -> None:
    write_volume(mask, path, use_gzip=use_gzip)
