import gzip
import struct

import numpy as np
import pytest

from stackqc.errors import DimensionError, MalformedHeader, MissingFile, UnsupportedDatatype
from stackqc.io.nifti import (
    HEADER_SIZE,
    Volume,
    canonicalize,
    read_labelmap,
    read_mask,
    read_nifti,
    write_nifti,
)


def make_nifti_bytes(
    data,
    pixdim=(1.0, 1.0, 1.0),
    dtype_code=16,
    scl_slope=0.0,
    scl_inter=0.0,
    magic=b"n+1\x00",
    sizeof_hdr=HEADER_SIZE,
    affine=None,
):
    """Hand-build a NIfTI-1 byte blob, independent of the writer under test."""
    np_dtype = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32,
                64: np.float64, 256: np.int8, 512: np.uint16, 32: np.complex64}.get(dtype_code, np.float32)
    arr = np.asarray(data).astype(np_dtype)
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, sizeof_hdr)
    dims = [arr.ndim] + list(arr.shape) + [1] * (7 - arr.ndim)
    struct.pack_into("<8h", hdr, 40, *dims)
    struct.pack_into("<h", hdr, 70, dtype_code)
    struct.pack_into("<h", hdr, 72, arr.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *pixdim, *([0.0] * (4 - len(pixdim) + 3)))
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<f", hdr, 112, scl_slope)
    struct.pack_into("<f", hdr, 116, scl_inter)
    if affine is not None:
        struct.pack_into("<h", hdr, 254, 1)
        struct.pack_into("<4f", hdr, 280, *affine[0])
        struct.pack_into("<4f", hdr, 296, *affine[1])
        struct.pack_into("<4f", hdr, 312, *affine[2])
    hdr[344:348] = magic
    return bytes(hdr) + b"\x00" * 4 + arr.tobytes(order="F")


def write_file(tmp_path, blob, name="img.nii"):
    p = tmp_path / name
    p.write_bytes(blob)
    return p


def test_read_basic_spacing(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.random((16, 16, 8)).astype(np.float32)
    p = write_file(tmp_path, make_nifti_bytes(data, pixdim=(1.1, 1.1, 3.3)))
    vol = read_nifti(p)
    assert vol.spacing == pytest.approx((1.100000023841858, 1.100000023841858, 3.299999952316284))
    assert vol.shape == (16, 16, 8)
    np.testing.assert_array_equal(vol.data, data)


def test_read_all_zero_volume(tmp_path):
    data = np.zeros((16, 16, 8), dtype=np.float32)
    p = write_file(tmp_path, make_nifti_bytes(data))
    vol = read_nifti(p)
    assert float(np.abs(vol.data).sum()) == 0.0


def test_scl_slope_inter_applied(tmp_path):
    data = np.full((16, 16, 8), 3, dtype=np.int16)
    p = write_file(tmp_path, make_nifti_bytes(data, dtype_code=4, scl_slope=2.0, scl_inter=1.0))
    vol = read_nifti(p)
    # raw voxel 3 with slope 2, inter 1 -> 7 (NIfTI-1 scaling convention)
    assert vol.data[0, 0, 0] == 7.0


def test_gzip_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.random((12, 10, 6)).astype(np.float32)
    blob = make_nifti_bytes(data, pixdim=(0.5, 0.5, 3.0))
    p = tmp_path / "img.nii.gz"
    p.write_bytes(gzip.compress(blob))
    vol = read_nifti(p)
    np.testing.assert_array_equal(vol.data, data)


def test_bad_magic_raises(tmp_path):
    data = np.zeros((16, 16, 8), dtype=np.float32)
    p = write_file(tmp_path, make_nifti_bytes(data, magic=b"xxx\x00"))
    with pytest.raises(MalformedHeader):
        read_nifti(p)


def test_bad_sizeof_hdr_raises(tmp_path):
    data = np.zeros((16, 16, 8), dtype=np.float32)
    p = write_file(tmp_path, make_nifti_bytes(data, sizeof_hdr=340))
    with pytest.raises(MalformedHeader):
        read_nifti(p)


def test_unsupported_datatype_raises(tmp_path):
    data = np.zeros((16, 16, 8))
    p = write_file(tmp_path, make_nifti_bytes(data, dtype_code=32))  # complex64
    with pytest.raises(UnsupportedDatatype):
        read_nifti(p)


def test_not_3d_raises(tmp_path):
    data = np.zeros((16, 16), dtype=np.float32)
    p = write_file(tmp_path, make_nifti_bytes(data))
    with pytest.raises(DimensionError):
        read_nifti(p)


def test_4d_singleton_squeezed(tmp_path):
    data = np.zeros((16, 16, 8, 1), dtype=np.float32)
    data[3, 4, 5, 0] = 9.0
    p = write_file(tmp_path, make_nifti_bytes(data))
    vol = read_nifti(p)
    assert vol.shape == (16, 16, 8)
    assert vol.data[3, 4, 5] == 9.0


def test_missing_file():
    with pytest.raises(MissingFile):
        read_nifti("/nonexistent/file.nii")


def test_nonfinite_replaced_and_counted(tmp_path):
    data = np.ones((16, 16, 8), dtype=np.float32)
    data[0, 0, 0] = np.nan
    data[1, 1, 1] = np.inf
    p = write_file(tmp_path, make_nifti_bytes(data))
    vol = read_nifti(p)
    assert vol.n_nonfinite == 2
    assert np.isfinite(vol.data).all()
    assert vol.data[0, 0, 0] == 0.0


def test_write_read_roundtrip_bitexact(tmp_path):
    rng = np.random.default_rng(2)
    data = rng.random((16, 12, 8)).astype(np.float32)
    spacing = (0.5, 0.5, 3.0)
    affine = np.diag([0.5, 0.5, 3.0, 1.0])
    affine[:3, 3] = (-4.0, -3.0, -12.0)
    vol = Volume(data=data, spacing=spacing, affine=affine)
    for name in ("out.nii", "out.nii.gz"):
        path = write_nifti(vol, tmp_path / name)
        back = read_nifti(path)
        np.testing.assert_array_equal(back.data, vol.data)
        assert back.spacing == vol.spacing
        np.testing.assert_array_equal(back.affine, vol.affine)


def test_write_deterministic_bytes(tmp_path):
    data = np.arange(16 * 12 * 8, dtype=np.float32).reshape(16, 12, 8)
    vol = Volume(data=data, spacing=(1.0, 1.0, 3.0))
    p1 = write_nifti(vol, tmp_path / "a.nii.gz")
    p2 = write_nifti(vol, tmp_path / "b.nii.gz")
    assert p1.read_bytes() == p2.read_bytes()


def test_reorientation_flips_to_ras(tmp_path):
    rng = np.random.default_rng(3)
    data = rng.random((16, 16, 8)).astype(np.float32)
    # LPS affine: x and y axes point the wrong way.
    affine = [[-1.0, 0, 0, 15.0], [0, -1.0, 0, 15.0], [0, 0, 3.0, 0.0]]
    p = write_file(tmp_path, make_nifti_bytes(data, pixdim=(1.0, 1.0, 3.0), affine=affine))
    vol = read_nifti(p)
    expected = data[::-1, ::-1, :]
    np.testing.assert_array_equal(vol.data, expected)
    assert np.all(np.diag(vol.affine)[:3] > 0)


def test_reorientation_permutes_thick_axis_to_2(tmp_path):
    rng = np.random.default_rng(4)
    data = rng.random((8, 16, 16)).astype(np.float32)
    # Through-plane (3.5 mm) along data axis 0, which maps to world z.
    affine = [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [3.5, 0.0, 0.0, 0.0]]
    p = write_file(tmp_path, make_nifti_bytes(data, pixdim=(3.5, 1.0, 1.0), affine=affine))
    vol = read_nifti(p)
    assert vol.shape == (16, 16, 8)
    assert vol.spacing == (1.0, 1.0, 3.5)
    np.testing.assert_array_equal(vol.data, np.transpose(data, (1, 2, 0)))


def test_canonicalize_idempotent():
    rng = np.random.default_rng(5)
    data = rng.random((10, 12, 6))
    affine = np.array(
        [[0.0, -1.2, 0.0, 10.0], [0.9, 0.0, 0.0, -3.0], [0.0, 0.0, 4.0, 2.0], [0, 0, 0, 1.0]]
    )
    d1, a1, s1 = canonicalize(data, affine, (0.9, 1.2, 4.0))
    d2, a2, s2 = canonicalize(d1, a1, s1)
    np.testing.assert_array_equal(d1, d2)
    np.testing.assert_allclose(a1, a2)
    assert s1 == s2
    assert s1[2] == 4.0


def test_canonicalize_world_coordinates_preserved():
    rng = np.random.default_rng(6)
    data = rng.random((6, 7, 8))
    affine = np.array(
        [[0.0, 0.0, -2.0, 5.0], [1.1, 0.0, 0.0, -4.0], [0.0, -0.7, 0.0, 9.0], [0, 0, 0, 1.0]]
    )
    d2, a2, _ = canonicalize(data, affine, (1.1, 0.7, 2.0))
    # The world position of a voxel's value must not change.
    for idx in [(0, 0, 0), (3, 4, 5), (5, 6, 7)]:
        world = affine @ np.array([*idx, 1.0])
        inv = np.linalg.inv(a2)
        new_idx = inv @ world
        new_idx = tuple(int(round(v)) for v in new_idx[:3])
        assert d2[new_idx] == data[idx]


def test_read_mask_and_labelmap(tmp_path):
    mask_data = np.zeros((16, 16, 8), dtype=np.float32)
    mask_data[4:10, 4:10, 2:6] = 1.0
    vol = Volume(data=mask_data, spacing=(1.0, 1.0, 3.0))
    p = write_nifti(vol, tmp_path / "mask.nii.gz", dtype="uint8")
    mask = read_mask(p)
    assert mask.count() == 6 * 6 * 4
    lm = read_labelmap(p)
    assert lm.labels() == [0, 1]


def test_min_dims_enforced(tmp_path):
    data = np.zeros((16, 16, 2), dtype=np.float32)
    p = write_file(tmp_path, make_nifti_bytes(data))
    with pytest.raises(DimensionError):
        read_nifti(p)


def test_hdr_img_pair(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.random((12, 10, 6)).astype(np.float32)
    blob = make_nifti_bytes(data, pixdim=(1.0, 1.0, 3.0), magic=b"ni1\x00")
    hdr = bytearray(blob[:348])
    struct.pack_into("<f", hdr, 108, 0.0)  # .img data starts at offset 0
    (tmp_path / "pair.hdr").write_bytes(bytes(hdr))
    (tmp_path / "pair.img").write_bytes(blob[352:])
    vol = read_nifti(tmp_path / "pair.hdr")
    np.testing.assert_array_equal(vol.data, data)
