"""Minimal NIfTI-1 reader/writer with canonical reorientation.

Only the subset needed for raw T2w stacks is supported: single-file ``.nii``
(optionally gzipped) or ``.hdr``/``.img`` pairs, 3D scalar images in the common
integer/float datatypes.  Loaded volumes are reoriented to a fixed canonical
layout so that axis 2 is always the through-plane (slice) axis:

1. nearest-axis RAS, derived from the permutation/sign structure of the
   affine's rotation block;
2. the axis with the largest voxel spacing is rolled to position 2
   (ties broken in favour of axis 2).

The second step is what downstream metrics rely on when they talk about
"slices": they always iterate over ``data[:, :, k]``.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stackqc.errors import DimensionError, MalformedHeader, MissingFile, UnsupportedDatatype

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

# NIfTI-1 datatype codes we accept (anything else raises UnsupportedDatatype).
_DTYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
    256: np.dtype(np.int8),
    512: np.dtype(np.uint16),
}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


@dataclass
class Volume:
    """A 3D scalar grid with voxel spacing and a voxel-to-world affine.

    ``data`` is float32, free of non-finite values (they are zeroed at load
    time and counted in ``n_nonfinite``).  After canonical reorientation axis 2
    is the through-plane axis.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))
    n_nonfinite: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise DimensionError(f"volume must be 3D, got shape {self.data.shape}")
        sx, sy, sz = (float(s) for s in self.spacing)
        if min(sx, sy, sz) <= 0:
            raise ValueError(f"spacing must be strictly positive, got {self.spacing}")
        self.spacing = (sx, sy, sz)
        self.affine = np.asarray(self.affine, dtype=np.float64)
        if self.affine.shape != (4, 4):
            raise ValueError("affine must be 4x4")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_slices(self) -> int:
        return self.data.shape[2]

    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


@dataclass
class Mask:
    """Binary brain mask on the same grid as its Volume."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data).astype(bool)
        if self.data.ndim != 3:
            raise DimensionError(f"mask must be 3D, got shape {self.data.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def is_empty(self) -> bool:
        return not bool(self.data.any())

    def count(self) -> int:
        return int(self.data.sum())


@dataclass
class LabelMap:
    """Small-integer tissue segmentation on the same grid as its Volume."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.rint(np.asarray(self.data)).astype(np.int32)
        if self.data.ndim != 3:
            raise DimensionError(f"label map must be 3D, got shape {self.data.shape}")
        if self.data.min() < 0:
            raise ValueError("label map must be non-negative")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def labels(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.data))


def _open_maybe_gzip(path: Path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _unpack_header(raw: bytes):
    """Return (header dict, byte order char). Raises MalformedHeader."""
    if len(raw) < HEADER_SIZE:
        raise MalformedHeader(f"file too short for a NIfTI-1 header ({len(raw)} bytes)")
    for order in ("<", ">"):
        (sizeof_hdr,) = struct.unpack(order + "i", raw[0:4])
        if sizeof_hdr == HEADER_SIZE:
            break
    else:
        raise MalformedHeader("sizeof_hdr is not 348 in either byte order")
    magic = raw[344:348]
    if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise MalformedHeader(f"bad magic {magic!r}")
    hdr = {
        "magic": magic,
        "dim": struct.unpack(order + "8h", raw[40:56]),
        "datatype": struct.unpack(order + "h", raw[70:72])[0],
        "bitpix": struct.unpack(order + "h", raw[72:74])[0],
        "pixdim": struct.unpack(order + "8f", raw[76:108]),
        "vox_offset": struct.unpack(order + "f", raw[108:112])[0],
        "scl_slope": struct.unpack(order + "f", raw[112:116])[0],
        "scl_inter": struct.unpack(order + "f", raw[116:120])[0],
        "qform_code": struct.unpack(order + "h", raw[252:254])[0],
        "sform_code": struct.unpack(order + "h", raw[254:256])[0],
        "quatern": struct.unpack(order + "3f", raw[256:268]),
        "qoffset": struct.unpack(order + "3f", raw[268:280]),
        "srow_x": struct.unpack(order + "4f", raw[280:296]),
        "srow_y": struct.unpack(order + "4f", raw[296:312]),
        "srow_z": struct.unpack(order + "4f", raw[312:328]),
    }
    return hdr, order


def _affine_from_header(hdr, shape) -> np.ndarray:
    if hdr["sform_code"] > 0:
        return np.array(
            [hdr["srow_x"], hdr["srow_y"], hdr["srow_z"], [0.0, 0.0, 0.0, 1.0]],
            dtype=np.float64,
        )
    pixdim = hdr["pixdim"]
    if hdr["qform_code"] > 0:
        b, c, d = (float(v) for v in hdr["quatern"])
        a2 = 1.0 - (b * b + c * c + d * d)
        a = np.sqrt(max(a2, 0.0))
        rot = np.array(
            [
                [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
                [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
                [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
            ]
        )
        qfac = -1.0 if pixdim[0] == -1.0 else 1.0
        zooms = np.array([pixdim[1], pixdim[2], pixdim[3] * qfac])
        aff = np.eye(4)
        aff[:3, :3] = rot * zooms
        aff[:3, 3] = hdr["qoffset"]
        return aff
    aff = np.diag([pixdim[1], pixdim[2], pixdim[3], 1.0]).astype(np.float64)
    return aff


def _nearest_ras_transform(affine: np.ndarray):
    """Greedy permutation/sign assignment of data axes to world R, A, S axes.

    Returns ``(world_of_axis, signs)`` where ``world_of_axis[j]`` is the world
    axis best aligned with data axis ``j`` and ``signs[j]`` is +-1.
    """
    rot = affine[:3, :3].astype(np.float64).copy()
    norms = np.linalg.norm(rot, axis=0)
    norms[norms == 0] = 1.0
    cosines = np.abs(rot) / norms
    world_of_axis = [-1, -1, -1]
    used_world: set[int] = set()
    for _ in range(3):
        best = (-1.0, -1, -1)
        for j in range(3):
            if world_of_axis[j] >= 0:
                continue
            for i in range(3):
                if i in used_world:
                    continue
                if cosines[i, j] > best[0]:
                    best = (cosines[i, j], i, j)
        _, i, j = best
        world_of_axis[j] = i
        used_world.add(i)
    signs = [1 if rot[world_of_axis[j], j] >= 0 else -1 for j in range(3)]
    return world_of_axis, signs


def _apply_index_transform(affine: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Update an affine for a voxel-index change v_old = M @ v_new (4x4 M)."""
    return affine @ matrix


def canonicalize(data: np.ndarray, affine: np.ndarray, pixdim: tuple[float, float, float]):
    """Reorient to nearest-axis RAS, then roll the thick axis to position 2.

    Returns ``(data, affine, spacing)``.  Idempotent: canonical input comes
    back unchanged.
    """
    data = np.asarray(data)
    affine = np.asarray(affine, dtype=np.float64)

    world_of_axis, signs = _nearest_ras_transform(affine)
    # Flip axes pointing against the world direction.
    flip = np.eye(4)
    for j in range(3):
        if signs[j] < 0:
            data = np.flip(data, axis=j)
            step = np.eye(4)
            step[j, j] = -1.0
            step[j, 3] = data.shape[j] - 1
            flip = flip @ step
    # Transpose so data axis k maps to world axis k.
    order = [world_of_axis.index(k) for k in range(3)]
    data = np.transpose(data, order)
    perm = np.zeros((4, 4))
    perm[3, 3] = 1.0
    for new_axis, old_axis in enumerate(order):
        perm[old_axis, new_axis] = 1.0
    affine = _apply_index_transform(affine, flip @ perm)
    spacing = [float(pixdim[j]) for j in order]

    # Roll the largest-spacing axis to position 2 (through-plane), preferring
    # axis 2 on ties.
    max_sp = max(spacing)
    thick = 2 if spacing[2] == max_sp else int(np.argmax(spacing))
    if thick != 2:
        roll_order = {0: (1, 2, 0), 1: (0, 2, 1)}[thick]
        data = np.transpose(data, roll_order)
        perm = np.zeros((4, 4))
        perm[3, 3] = 1.0
        for new_axis, old_axis in enumerate(roll_order):
            perm[old_axis, new_axis] = 1.0
        affine = _apply_index_transform(affine, perm)
        spacing = [spacing[j] for j in roll_order]

    return np.ascontiguousarray(data), affine, tuple(spacing)


def read_nifti(path: str | Path) -> Volume:
    """Read a 3D NIfTI-1 file into a canonical :class:`Volume`.

    scl_slope/scl_inter are applied when set; non-finite voxels are replaced
    by 0 and counted into ``Volume.n_nonfinite``.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    with _open_maybe_gzip(path) as fh:
        raw = fh.read()
    hdr, order = _unpack_header(raw)

    code = hdr["datatype"]
    if code not in _DTYPES:
        raise UnsupportedDatatype(f"datatype code {code}")
    dtype = _DTYPES[code].newbyteorder(order)

    ndim = hdr["dim"][0]
    if not 1 <= ndim <= 7:
        raise MalformedHeader(f"dim[0] = {ndim} out of range")
    shape = tuple(max(int(d), 1) for d in hdr["dim"][1 : 1 + ndim])
    n_vox = int(np.prod(shape))

    if hdr["magic"] == MAGIC_SINGLE:
        offset = max(int(hdr["vox_offset"]), HEADER_SIZE)
        payload = raw[offset : offset + n_vox * dtype.itemsize]
    else:
        img_path = _sibling_img(path)
        with _open_maybe_gzip(img_path) as fh:
            img_raw = fh.read()
        offset = int(hdr["vox_offset"])
        payload = img_raw[offset : offset + n_vox * dtype.itemsize]
    if len(payload) < n_vox * dtype.itemsize:
        raise MalformedHeader("data payload shorter than dim/datatype imply")

    data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    data = np.squeeze(data)
    if data.ndim != 3:
        raise DimensionError(f"expected 3D after squeezing, got shape {data.shape}")

    data = data.astype(np.float64)
    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    if np.isfinite(slope) and slope != 0.0 and (slope, inter) != (1.0, 0.0):
        data = data * slope + inter

    # Non-canonical pixdim entries can be 0 in sloppy exports; fall back to 1.
    pixdim = tuple(abs(float(p)) if p != 0 else 1.0 for p in hdr["pixdim"][1:4])
    affine = _affine_from_header(hdr, data.shape)
    data, affine, spacing = canonicalize(data, affine, pixdim)

    if min(data.shape[0], data.shape[1]) < 8 or data.shape[2] < 3:
        raise DimensionError(f"stack below minimum dims (8, 8, 3): {data.shape}")

    bad = ~np.isfinite(data)
    n_bad = int(bad.sum())
    if n_bad:
        data = data.copy()
        data[bad] = 0.0
    return Volume(data=data, spacing=spacing, affine=affine, n_nonfinite=n_bad)


def _sibling_img(path: Path) -> Path:
    name = path.name
    for suffix in (".hdr.gz", ".hdr"):
        if name.endswith(suffix):
            stem = name[: -len(suffix)]
            for img_suffix in (".img", ".img.gz"):
                cand = path.with_name(stem + img_suffix)
                if cand.exists():
                    return cand
    raise MissingFile(f"companion .img for {path}")


def write_nifti(volume: Volume, path: str | Path, dtype: str = "float32") -> Path:
    """Write a :class:`Volume` as single-file NIfTI-1 (.nii or .nii.gz).

    Written gzip members carry mtime=0 so identical volumes produce
    byte-identical files.
    """
    path = Path(path)
    np_dtype = np.dtype(dtype)
    if np_dtype not in _DTYPE_CODES:
        raise UnsupportedDatatype(str(dtype))
    code = _DTYPE_CODES[np_dtype]

    data = np.asarray(volume.data)
    if np_dtype.kind in "iu":
        data = np.rint(data).astype(np_dtype)
    else:
        data = data.astype(np_dtype)

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, np_dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *volume.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    descrip = b"stackqc"
    hdr[148 : 148 + len(descrip)] = descrip
    struct.pack_into("<h", hdr, 252, 0)  # qform_code
    struct.pack_into("<h", hdr, 254, 1)  # sform_code
    aff = np.asarray(volume.affine, dtype=np.float64)
    struct.pack_into("<4f", hdr, 280, *aff[0, :])
    struct.pack_into("<4f", hdr, 296, *aff[1, :])
    struct.pack_into("<4f", hdr, 312, *aff[2, :])
    hdr[344:348] = MAGIC_SINGLE

    payload = bytes(hdr) + b"\x00" * 4 + data.tobytes(order="F")
    if str(path).endswith(".gz"):
        with open(path, "wb") as fh:
            with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)
    return path


def read_mask(path: str | Path, reference: Volume | None = None) -> Mask:
    """Load a binary mask, checking grid agreement with ``reference``."""
    vol = read_nifti(path)
    if reference is not None and vol.shape != reference.shape:
        raise DimensionError(f"mask shape {vol.shape} != image shape {reference.shape}")
    return Mask(data=vol.data > 0.5)


def read_labelmap(path: str | Path, reference: Volume | None = None) -> LabelMap:
    """Load a tissue label map, checking grid agreement with ``reference``."""
    vol = read_nifti(path)
    if reference is not None and vol.shape != reference.shape:
        raise DimensionError(f"label map shape {vol.shape} != image shape {reference.shape}")
    return LabelMap(data=vol.data)
