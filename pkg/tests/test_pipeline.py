import importlib.resources

import numpy as np
import pandas as pd
import pytest

from stackqc.errors import ConfigConflict
from stackqc.io.nifti import LabelMap, Mask, Volume, write_nifti
from stackqc.io.manifest import StackRecord
from stackqc.iqm.catalogue import (
    build_catalogue,
    catalogue_manifest_text,
    family_counts,
    feature_columns,
)
from stackqc.iqm.extractor import (
    IqmExtractor,
    StackContext,
    export_csv,
    extract_all,
    extract_stack,
    fallback_mask,
    load_dl_sidecar,
    read_iqm_csv,
)

from helpers import random_instance, random_labelmap

TABLE_S1_COUNTS = {"intensity": 60, "mask": 9, "seg": 86, "dl": 6, "metadata": 5}


def test_catalogue_has_166_entries_with_family_counts():
    cat = build_catalogue()
    assert len(cat) == 166
    assert family_counts(cat) == TABLE_S1_COUNTS
    assert len(feature_columns(cat)) == 332


def test_catalogue_subfamily_slot_counts():
    names = [e.name for e in build_catalogue()]
    assert sum(n.startswith("rank_error") for n in names) == 5
    assert sum(n.startswith("sstats_") for n in names) == 14
    assert sum(n.startswith("entropy") for n in names) == 2
    assert sum(n.startswith("bias") for n in names) == 3
    assert sum(n.startswith("filter_image") for n in names) == 4
    assert sum(n.startswith("filter_mask") for n in names) == 4
    assert sum(n.startswith("closing_mask") for n in names) == 2
    assert sum(n.startswith("centroid") for n in names) == 2
    assert sum(n.startswith("seg_sstats") for n in names) == 64
    assert sum(n.startswith("seg_volume") for n in names) == 6
    assert sum(n.startswith("seg_SNR") for n in names) == 10
    assert sum(n.startswith("dl_") for n in names) == 6
    assert sum(n.startswith("im_size") for n in names) == 5


def test_catalogue_disable_family():
    cat = build_catalogue(disabled_families=("seg",))
    assert len(cat) == 166 - 86
    assert all(e.family != "seg" for e in cat)


def test_catalogue_duplicate_rename_conflict():
    with pytest.raises(ConfigConflict):
        build_catalogue(renames={"rank_error": "mask_volume"})


def test_catalogue_frozen_manifest_matches():
    text = catalogue_manifest_text(build_catalogue())
    shipped = (
        importlib.resources.files("stackqc") / "resources" / "catalogue_v1.tsv"
    ).read_text()
    assert text == shipped


def _phantomish(seed=0, nz=12):
    rng = np.random.default_rng(seed)
    nx = ny = 40
    xs = np.arange(nx)[:, None, None]
    ys = np.arange(ny)[None, :, None]
    zs = np.arange(nz)[None, None, :]
    cx, cz = (nx - 1) / 2, (nz - 1) / 2
    d = ((xs - cx) / 14) ** 2 + ((ys - cx) / 14) ** 2 + ((zs - cz) / 14) ** 2
    mask = d <= 1.0
    labels = np.zeros((nx, ny, nz), dtype=np.int32)
    labels[d <= 1.0] = 1
    labels[d <= 0.7] = 2
    labels[d <= 0.4] = 3
    intens = np.full((nx, ny, nz), 100.0)
    for code, level in ((1, 500.0), (2, 250.0), (3, 330.0)):
        intens[labels == code] = level
    intens *= 1.0 + 0.08 * np.sin(xs * 0.7) * np.cos(ys * 0.5)
    return Volume(intens, (1.0, 1.0, 3.0)), Mask(mask), LabelMap(labels)


def test_clean_stack_has_no_computed_flags():
    vol, mask, labels = _phantomish()
    vec = extract_stack(StackContext(vol, mask, labels), build_catalogue(), "s1")
    assert vec.n_entries() == 332
    flagged = [n for n, f in vec.flags.items() if f]
    assert all(n.startswith("dl_") for n in flagged)


def test_flag_zero_consistency():
    vol, mask, labels = _phantomish(1)
    vec = extract_stack(StackContext(vol, mask, labels), build_catalogue(), "s1")
    for name, value in vec.values.items():
        if value != 0.0:
            assert not vec.flags[name], name


def test_missing_labelmap_flags_all_seg():
    vol, mask, _ = _phantomish(2)
    vec = extract_stack(StackContext(vol, mask, None), build_catalogue(), "s1")
    seg_names = [e.name for e in build_catalogue() if e.family == "seg"]
    assert len(seg_names) == 86
    for name in seg_names:
        assert vec.flags[name], name
        assert vec.values[name] == 0.0


def test_two_kept_slices_window_vs_center():
    vol, mask, labels = _phantomish(3)
    thin = np.zeros_like(mask.data)
    thin[:, :, 5:7] = mask.data[:, :, 5:7]
    vec = extract_stack(StackContext(vol, Mask(thin), labels), build_catalogue(), "s1")
    assert not vec.flags["NCC_window"]
    assert vec.flags["rank_error_center"]


def test_determinism_bit_identical():
    vol, mask, labels = _phantomish(4)
    cat = build_catalogue()
    a = extract_stack(StackContext(vol, mask, labels), cat, "s")
    b = extract_stack(StackContext(vol, mask, labels), cat, "s")
    assert a.values == b.values
    assert a.flags == b.flags


def test_metadata_values():
    vol, mask, labels = _phantomish(5)
    vec = extract_stack(StackContext(vol, mask, labels), build_catalogue(), "s1")
    assert vec.values["im_size_x"] == 1.0
    assert vec.values["im_size_z"] == 3.0
    assert vec.values["im_size_voxel_volume"] == pytest.approx(3.0)
    assert vec.values["im_size_inplane_area"] == pytest.approx(1.0)


def test_dl_sidecar_filled(tmp_path):
    sidecar = tmp_path / "dl.csv"
    rows = ["stack_id,slice_index,p_pass,p_fail"]
    for k in range(6):
        rows.append(f"s1,{k},0.8,0.1")
    rows.append("s1,-1,0.9,0")
    sidecar.write_text("\n".join(rows) + "\n")
    slices, stacks = load_dl_sidecar(sidecar)
    vol, mask, labels = _phantomish(6)
    ctx = StackContext(vol, mask, labels, dl_slices=slices["s1"], dl_stack_score=stacks["s1"])
    vec = extract_stack(ctx, build_catalogue(), "s1")
    assert vec.values["dl_slice"] == pytest.approx(0.7)
    assert vec.values["dl_slice_pgood"] == pytest.approx(0.8)
    assert vec.values["dl_stack"] == pytest.approx(0.9)
    assert not vec.flags["dl_slice_center"]


def test_fuzz_degenerate_inputs_never_crash():
    rng = np.random.default_rng(7)
    cat = build_catalogue()
    n_cases = 60
    for case in range(n_cases):
        kind = case % 6
        if kind == 0:  # empty mask
            vol, _ = random_instance(rng)
            mask = Mask(np.zeros(vol.shape, dtype=bool))
            labels = None
        elif kind == 1:  # 2 kept slices
            vol, mask = random_instance(rng)
            thin = np.zeros_like(mask.data)
            ks = [k for k in range(vol.shape[2]) if mask.data[:, :, k].any()][:2]
            for k in ks:
                thin[:, :, k] = mask.data[:, :, k]
            mask = Mask(thin)
            labels = random_labelmap(rng, vol.shape)
        elif kind == 2:  # constant image
            shape = (10, 10, 5)
            vol = Volume(np.full(shape, 7.0), (1, 1, 3))
            mask = Mask(np.ones(shape, dtype=bool))
            labels = random_labelmap(rng, shape)
        elif kind == 3:  # single-voxel mask
            vol, _ = random_instance(rng)
            mask = np.zeros(vol.shape, dtype=bool)
            mask[2, 2, 1] = True
            mask = Mask(mask)
            labels = None
        elif kind == 4:  # all-zero image with full mask
            shape = (12, 9, 4)
            vol = Volume(np.zeros(shape), (1, 1, 4))
            mask = Mask(np.ones(shape, dtype=bool))
            labels = LabelMap(np.zeros(shape, dtype=np.int32))
        else:  # random everything
            vol, mask = random_instance(rng)
            labels = random_labelmap(rng, vol.shape)
        vec = extract_stack(StackContext(vol, mask, labels), cat, f"fuzz{case}")
        assert vec.n_entries() == 332
        for name, value in vec.values.items():
            assert np.isfinite(value)
            if vec.flags[name]:
                assert value == 0.0
            if value != 0.0:
                assert not vec.flags[name]


def test_fallback_mask_on_bright_blob():
    vol, mask, _ = _phantomish(8)
    fb = fallback_mask(vol)
    inter = (fb.data & mask.data).sum()
    union = (fb.data | mask.data).sum()
    assert inter / union > 0.6


def _records_and_vectors(tmp_path, n=3):
    records, vectors = [], []
    cat = build_catalogue()
    for i in range(n):
        vol, mask, labels = _phantomish(10 + i, nz=10)
        img = write_nifti(vol, tmp_path / f"s{i}_T2w.nii.gz")
        mpath = write_nifti(
            Volume(mask.data.astype(np.float32), vol.spacing), tmp_path / f"s{i}_mask.nii.gz", dtype="uint8"
        )
        lpath = write_nifti(
            Volume(labels.data.astype(np.float32), vol.spacing), tmp_path / f"s{i}_dseg.nii.gz", dtype="uint8"
        )
        rec = StackRecord(
            stack_id=f"s{i}",
            subject_id=f"sub{i}",
            scanner_id="scA",
            site_id="site1",
            split="train",
            image_path=str(img),
            mask_path=str(mpath),
            labelmap_path=str(lpath),
            run_id=str(i),
        )
        records.append(rec)
        vectors.append(extract_all(rec, cat))
    return records, vectors


def test_export_csv_schema_and_roundtrip(tmp_path):
    records, vectors = _records_and_vectors(tmp_path)
    out = tmp_path / "iqms.csv"
    export_csv(vectors, records, out)
    df = read_iqm_csv(out)
    assert df.shape == (3, 5 + 332)
    assert list(df.columns[:5]) == ["stack_id", "subject_id", "scanner_id", "site_id", "split"]
    # export -> import -> export is byte identical
    again = tmp_path / "iqms2.csv"
    export_csv(vectors, records, again)
    assert out.read_bytes() == again.read_bytes()


def test_export_empty_is_header_only(tmp_path):
    out = tmp_path / "empty.csv"
    export_csv([], [], out)
    df = pd.read_csv(out)
    assert len(df) == 0
    assert df.shape[1] == 5 + 332


def test_export_mismatched_ids(tmp_path):
    records, vectors = _records_and_vectors(tmp_path, n=2)
    vectors[0].stack_id = "other"
    from stackqc.errors import AlignmentError

    with pytest.raises(AlignmentError):
        export_csv(vectors, records, tmp_path / "x.csv")


def test_extractor_transformer_api(tmp_path):
    records, _ = _records_and_vectors(tmp_path, n=2)
    ex = IqmExtractor()
    df = ex.fit_transform(records)
    assert df.shape == (2, 5 + 332)
    assert ex.get_params()["window_k"] == 3
    clone_params = IqmExtractor(**ex.get_params())
    assert clone_params.get_params() == ex.get_params()


def test_extractor_identical_across_worker_counts(tmp_path):
    records, _ = _records_and_vectors(tmp_path, n=3)
    serial = IqmExtractor(jobs=1).fit_transform(records)
    parallel = IqmExtractor(jobs=2).fit_transform(records)
    pd.testing.assert_frame_equal(serial, parallel)
