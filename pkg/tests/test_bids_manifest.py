import numpy as np
import pytest
from hypothesis import given, strategies as st

from stackqc.errors import DuplicateStackId, MissingFile, NotBids, UnknownSplit
from stackqc.io.bids import find_stacks, parse_bids_entities
from stackqc.io.manifest import StackRecord, group_by, load_manifest, save_manifest
from stackqc.io.nifti import Volume, write_nifti


def test_parse_full_entities():
    ents = parse_bids_entities("sub-07_ses-01_run-2_T2w.nii.gz")
    assert ents["sub"] == "07"
    assert ents["ses"] == "01"
    assert ents["run"] == "2"


def test_parse_defaults():
    ents = parse_bids_entities("sub-A_T2w.nii")
    assert (ents["sub"], ents["ses"], ents["run"]) == ("A", "1", "1")


def test_parse_extra_entities_preserved():
    ents = parse_bids_entities("sub-3_acq-fast_run-4_T2w.nii.gz")
    assert ents["acq"] == "fast"
    assert ents["run"] == "4"


@pytest.mark.parametrize("bad", ["anat_scan.nii", "sub-1_T1w.nii.gz", "T2w.nii"])
def test_parse_not_bids(bad):
    with pytest.raises(NotBids):
        parse_bids_entities(bad)


@given(
    sub=st.text(alphabet="abcdefgh0123456789", min_size=1, max_size=6),
    ses=st.one_of(st.none(), st.text(alphabet="0123456789", min_size=1, max_size=3)),
    run=st.one_of(st.none(), st.text(alphabet="0123456789", min_size=1, max_size=3)),
)
def test_parse_roundtrip_property(sub, ses, run):
    name = f"sub-{sub}"
    if ses is not None:
        name += f"_ses-{ses}"
    if run is not None:
        name += f"_run-{run}"
    name += "_T2w.nii.gz"
    ents = parse_bids_entities(name)
    assert ents["sub"] == sub
    assert ents["ses"] == (ses if ses is not None else "1")
    assert ents["run"] == (run if run is not None else "1")


def _touch_stack(root, sub, ses=None, run=None, with_mask=True, with_dseg=False):
    parts = [f"sub-{sub}"]
    if ses:
        parts.append(f"ses-{ses}")
    anat = root.joinpath(*parts, "anat")
    anat.mkdir(parents=True, exist_ok=True)
    base = f"sub-{sub}"
    if ses:
        base += f"_ses-{ses}"
    if run:
        base += f"_run-{run}"
    vol = Volume(np.zeros((16, 16, 4), dtype=np.float32), (1.0, 1.0, 3.0))
    write_nifti(vol, anat / f"{base}_T2w.nii.gz")
    if with_mask:
        write_nifti(vol, anat / f"{base}_desc-brain_mask.nii.gz", dtype="uint8")
    if with_dseg:
        write_nifti(vol, anat / f"{base}_dseg.nii.gz", dtype="uint8")
    return anat / f"{base}_T2w.nii.gz"


def test_find_stacks(tmp_path):
    _touch_stack(tmp_path, "01", run="1")
    _touch_stack(tmp_path, "01", run="2", with_mask=False)
    _touch_stack(tmp_path, "02", ses="1", with_dseg=True)
    found = find_stacks(tmp_path)
    assert len(found) == 3
    assert found[0]["sub"] == "01" and found[0]["mask_path"]
    assert found[1]["mask_path"] == ""
    assert found[2]["labelmap_path"].endswith("_dseg.nii.gz")


def _manifest_rows(tmp_path, rows):
    img = tmp_path / "img.nii.gz"
    write_nifti(Volume(np.zeros((16, 16, 4), dtype=np.float32), (1, 1, 3)), img)
    records = [
        StackRecord(
            stack_id=r[0],
            subject_id=r[1],
            scanner_id=r[2],
            site_id=r[3],
            split=r[4],
            image_path=str(img),
            run_id=str(i),
        )
        for i, r in enumerate(rows)
    ]
    path = tmp_path / "manifest.tsv"
    save_manifest(records, path)
    return path


def test_manifest_roundtrip(tmp_path):
    path = _manifest_rows(
        tmp_path,
        [("s1", "sub1", "scA", "site1", "train"), ("s2", "sub2", "scB", "site1", "pure_test")],
    )
    records = load_manifest(path)
    assert [r.stack_id for r in records] == ["s1", "s2"]
    assert records[1].split == "pure_test"


def test_manifest_unknown_split(tmp_path):
    with pytest.raises(UnknownSplit):
        _manifest_rows(tmp_path, [("s1", "sub1", "scA", "site1", "test")])


def test_manifest_duplicate_stack_id(tmp_path):
    img = tmp_path / "img.nii.gz"
    write_nifti(Volume(np.zeros((16, 16, 4), dtype=np.float32), (1, 1, 3)), img)
    lines = [
        "stack_id\tsubject_id\tscanner_id\tsite_id\tsplit\timage_path\tmask_path\tlabelmap_path",
        f"s1\tsub1\tscA\tsite1\ttrain\t{img}\t\t",
        f"s1\tsub1\tscA\tsite1\ttrain\t{img}\t\t",
    ]
    path = tmp_path / "manifest.tsv"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DuplicateStackId):
        load_manifest(path)


def test_manifest_missing_file(tmp_path):
    lines = [
        "stack_id\tsubject_id\tscanner_id\tsite_id\tsplit\timage_path\tmask_path\tlabelmap_path",
        "s1\tsub1\tscA\tsite1\ttrain\t/nope/img.nii\t\t",
    ]
    path = tmp_path / "manifest.tsv"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MissingFile):
        load_manifest(path)


def test_group_by_subject_single_site(tmp_path):
    path = _manifest_rows(
        tmp_path,
        [
            ("s1", "sub1", "scA", "site1", "train"),
            ("s2", "sub1", "scA", "site1", "train"),
            ("s3", "sub2", "scB", "site2", "train"),
        ],
    )
    records = load_manifest(path)
    for group in group_by(records, "subject_id").values():
        assert len({r.site_id for r in group}) == 1
