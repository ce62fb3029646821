import hashlib
from pathlib import Path

import numpy as np
import pytest

from stackqc.evaluation.metrics import pearson_r
from stackqc.iqm.intensity import estimate_bias, slice_pair_metric
from stackqc.iqm.mask import centroid_stat, closing_diff, mask_sharpness
from stackqc.iqm.seg import merge_labels, region_summary_stats, snr_region
from stackqc.phantom.dataset import gen_dataset, load_labels, within_subject_correlation
from stackqc.phantom.generator import (
    PhantomSpec,
    gen_stack,
    jagged_smooth_pair,
    quality_from_knobs,
)

PHANTOM_MAPPING = {1: "CSF", 2: "GM", 3: "WM"}


def sweep(knob, levels, metric_fn, seed=7):
    values = []
    for level in levels:
        vol, mask, labels, _ = gen_stack(PhantomSpec(seed=seed, **{knob: level}))
        values.append(metric_fn(vol, mask, labels))
    return values


def test_clean_stack_score_and_consistency():
    vol, mask, labels, gt = gen_stack(PhantomSpec(seed=1))
    assert gt.score == 4.0
    assert closing_diff(mask) == 0.0
    assert slice_pair_metric(vol, mask, "NCC") > 0.99


def test_gen_stack_deterministic():
    a = gen_stack(PhantomSpec(seed=5, motion_shift_std=2.0, noise_std=20.0))
    b = gen_stack(PhantomSpec(seed=5, motion_shift_std=2.0, noise_std=20.0))
    np.testing.assert_array_equal(a[0].data, b[0].data)
    np.testing.assert_array_equal(a[1].data, b[1].data)


def test_spec_validation():
    with pytest.raises(ValueError):
        PhantomSpec(slice_drop_prob=1.5)
    with pytest.raises(ValueError):
        PhantomSpec(fov_crop_fraction=0.6)
    with pytest.raises(ValueError):
        PhantomSpec(motion_shift_std=-1)


def test_full_drop_score_zero():
    assert quality_from_knobs(PhantomSpec(slice_drop_prob=1.0)).score == 0.0


def test_motion_monotone_detectors():
    cents = sweep("motion_shift_std", [0, 1, 2, 4], lambda v, m, l: centroid_stat(m, v.spacing))
    assert all(a < b for a, b in zip(cents, cents[1:]))
    closing = sweep("motion_shift_std", [0, 1, 2, 4], lambda v, m, l: closing_diff(m))
    assert all(a < b for a, b in zip(closing, closing[1:]))


def test_drop_monotone_ncc():
    ncc = sweep("slice_drop_prob", [0, 0.2, 0.5, 0.9], lambda v, m, l: slice_pair_metric(v, m, "NCC"))
    assert all(a > b for a, b in zip(ncc, ncc[1:]))


def test_drop_mae_monotone_in_expectation():
    # below the half-dropped point, where clean/dropped pair counts grow
    levels = (0, 0.1, 0.2, 0.3)
    means = []
    for p in levels:
        vals = [
            slice_pair_metric(*gen_stack(PhantomSpec(seed=s, slice_drop_prob=p))[:2], "MAE")
            for s in range(6)
        ]
        means.append(np.mean(vals))
    assert all(a < b for a, b in zip(means, means[1:]))


def test_bias_monotone_estimate():
    est = sweep("bias_amplitude", [0, 0.3, 0.7, 1.2], lambda v, m, l: estimate_bias(v, m))
    assert all(a < b for a, b in zip(est, est[1:]))


def test_noise_monotone_snr():
    def snr_wm(v, m, l):
        stats = region_summary_stats(v, merge_labels(l, PHANTOM_MAPPING))
        return snr_region(stats, "WM")

    snr = sweep("noise_std", [0, 10, 25, 60], snr_wm)
    assert all(a > b for a, b in zip(snr, snr[1:]))


def test_fov_crop_reduces_slices_and_volume():
    full = gen_stack(PhantomSpec(seed=3))
    cropped = gen_stack(PhantomSpec(seed=3, fov_crop_fraction=0.3))
    assert cropped[0].shape[2] < full[0].shape[2]
    assert cropped[1].count() < full[1].count()


def test_jagged_pair_sharper():
    smooth, jagged = jagged_smooth_pair()
    for kernel in ("sobel", "laplace"):
        assert mask_sharpness(jagged, (1, 1, 3), kernel) > mask_sharpness(smooth, (1, 1, 3), kernel)


def _tree_hash(root):
    digest = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            digest.update(p.name.encode())
            digest.update(p.read_bytes())
    return digest.hexdigest()


def test_gen_dataset_counts_and_files(tmp_path):
    ds = gen_dataset(tmp_path, n_sites=2, n_scanners_per_site=2, n_subjects_per_scanner=3,
                     stacks_per_subject=(3, 6), master_seed=11)
    subjects = {r.subject_id for r in ds.records}
    assert len(subjects) == 2 * 2 * 3
    assert 12 * 3 <= len(ds.records) <= 12 * 6
    scanners = {r.scanner_id for r in ds.records}
    assert len(scanners) == 4
    for rec in ds.records:
        assert Path(rec.image_path).exists()
        assert Path(rec.mask_path).exists()
        assert Path(rec.labelmap_path).exists()
    # labels round-trip
    labels = load_labels(ds.labels_path)
    assert set(labels) == {r.stack_id for r in ds.records}
    # subject site consistency
    for sub in subjects:
        sites = {r.site_id for r in ds.records if r.subject_id == sub}
        assert len(sites) == 1


def test_gen_dataset_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    gen_dataset(a, 1, 2, 2, (3, 4), master_seed=13)
    gen_dataset(b, 1, 2, 2, (3, 4), master_seed=13)
    assert _tree_hash(a) == _tree_hash(b)


def test_gen_dataset_bad_counts(tmp_path):
    with pytest.raises(ValueError):
        gen_dataset(tmp_path, n_sites=1, n_scanners_per_site=0, n_subjects_per_scanner=2)


def test_within_subject_correlation_in_band(tmp_path):
    ds = gen_dataset(tmp_path, 1, 4, 8, (3, 6), master_seed=21)
    corr = within_subject_correlation(ds.records, ds.ratings)
    assert 0.4 <= corr <= 0.8


def test_pure_test_scanner_assignment(tmp_path):
    ds = gen_dataset(tmp_path, 1, 4, 2, (3, 3), master_seed=17, pure_test_scanners=1)
    splits = {r.scanner_id: r.split for r in ds.records}
    assert sum(1 for s in splits.values() if s == "pure_test") == 1


def test_two_synthetic_raters_match_analytic_pearson(tmp_path):
    ds = gen_dataset(tmp_path, 1, 3, 8, (3, 6), master_seed=31)
    gt = np.array([ds.gt_scores[r.stack_id] for r in ds.records])
    rng = np.random.default_rng(1234)
    sigma = 0.5
    rater_a = gt + rng.normal(0, sigma, len(gt))
    rater_b = gt + rng.normal(0, sigma, len(gt))
    observed = pearson_r(rater_a, rater_b)
    predicted = gt.var() / (gt.var() + sigma**2)
    assert observed == pytest.approx(predicted, abs=0.05)
