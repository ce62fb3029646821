"""Independent brute-force re-implementations of every IQM and every
evaluation metric, written with explicit loops and kept deliberately separate
from the package's vectorized code paths.  Tests compare the two routes on
random instances."""

from __future__ import annotations

import math

import numpy as np


# --- elementary statistics ---------------------------------------------------

def o_mean(xs):
    return sum(xs) / len(xs)


def o_median(xs):
    s = sorted(xs)
    n = len(s)
    mid = n // 2
    return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2.0


def o_std(xs):
    m = o_mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


def o_percentile(xs, q):
    s = sorted(xs)
    if len(s) == 1:
        return s[0]
    pos = q / 100.0 * (len(s) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    frac = pos - lo
    return s[lo] + frac * (s[hi] - s[lo])


def o_kurtosis(xs):
    m = o_mean(xs)
    m2 = sum((x - m) ** 2 for x in xs) / len(xs)
    m4 = sum((x - m) ** 4 for x in xs) / len(xs)
    return m4 / m2**2 - 3.0 if m2 > 0 else float("nan")


def o_summary(xs):
    med = o_median(xs)
    std = o_std(xs)
    mean = o_mean(xs)
    return {
        "mean": mean,
        "median": med,
        "std": std,
        "p05": o_percentile(xs, 5.0),
        "p95": o_percentile(xs, 95.0),
        "cov": std / mean if mean != 0 else float("nan"),
        "kurtosis": o_kurtosis(xs),
        "mad": o_median([abs(x - med) for x in xs]),
        "n": len(xs),
    }


def o_pearson(xs, ys):
    mx, my = o_mean(xs), o_mean(ys)
    num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    dx = math.sqrt(sum((x - mx) ** 2 for x in xs))
    dy = math.sqrt(sum((y - my) ** 2 for y in ys))
    return num / (dx * dy)


# --- histograms / entropy ------------------------------------------------------

def o_bin_index(v, lo, hi, bins):
    if v >= hi:
        return bins - 1
    idx = int((v - lo) / (hi - lo) * bins)
    return min(max(idx, 0), bins - 1)


def o_entropy_hist(xs, bins):
    lo, hi = min(xs), max(xs)
    if hi == lo:
        return 0.0
    counts = [0] * bins
    for v in xs:
        counts[o_bin_index(v, lo, hi, bins)] += 1
    n = len(xs)
    return -sum(c / n * math.log2(c / n) for c in counts if c > 0)


def o_joint_hist(a, b, bins):
    lo = min(min(a), min(b))
    hi = max(max(a), max(b))
    counts: dict[tuple[int, int], int] = {}
    if hi == lo:
        counts[(0, 0)] = len(a)
    else:
        for x, y in zip(a, b):
            key = (o_bin_index(x, lo, hi, bins), o_bin_index(y, lo, hi, bins))
            counts[key] = counts.get(key, 0) + 1
    n = len(a)
    return {k: c / n for k, c in counts.items()}


def o_mi_family(a, b, bins=128):
    pxy = o_joint_hist(a, b, bins)
    px: dict[int, float] = {}
    py: dict[int, float] = {}
    for (i, j), p in pxy.items():
        px[i] = px.get(i, 0.0) + p
        py[j] = py.get(j, 0.0) + p
    h_x = -sum(p * math.log2(p) for p in px.values() if p > 0)
    h_y = -sum(p * math.log2(p) for p in py.values() if p > 0)
    h_xy = -sum(p * math.log2(p) for p in pxy.values() if p > 0)
    mi = sum(p * math.log2(p / (px[i] * py[j])) for (i, j), p in pxy.items() if p > 0)
    nmi = (h_x + h_y) / h_xy if h_xy > 0 else None
    return {"MI": mi, "nMI": nmi, "jointEntropy": h_xy, "HX": h_x, "HY": h_y}


# --- pair metrics ----------------------------------------------------------------

def o_pair_metrics(a, b):
    n = len(a)
    out = {}
    mae = sum(abs(x - y) for x, y in zip(a, b)) / n
    mse = sum((x - y) ** 2 for x, y in zip(a, b)) / n
    out["MAE"] = mae
    out["RMSE"] = math.sqrt(mse)
    denom = sum((abs(x) + abs(y)) / 2 for x, y in zip(a, b)) / n
    out["nMAE"] = mae / denom if denom > 0 else None
    lo = min(min(a), min(b))
    hi = max(max(a), max(b))
    span = hi - lo
    out["nRMSE"] = out["RMSE"] / span if span > 0 else None
    sa, sb = o_std(a), o_std(b)
    if sa > 0 and sb > 0:
        out["NCC"] = o_pearson(a, b)
        ma, mb = o_mean(a), o_mean(b)
        cov = sum((x - ma) * (y - mb) for x, y in zip(a, b)) / n
        c1, c2 = (0.01 * span) ** 2, (0.03 * span) ** 2
        out["SSIM"] = ((2 * ma * mb + c1) * (2 * cov + c2)) / (
            (ma**2 + mb**2 + c1) * (sa**2 + sb**2 + c2)
        )
    else:
        out["NCC"] = None
        out["SSIM"] = None
    out["PSNR"] = 100.0 if mse == 0 else 10.0 * math.log10(span**2 / mse)
    fam = o_mi_family(a, b)
    out["MI"] = fam["MI"]
    out["nMI"] = fam["nMI"]
    out["jointEntropy"] = fam["jointEntropy"]
    return out


def o_center_subset(indices):
    n = len(indices)
    n_center = max(1, int(round(n / 3)))
    start = (n - n_center) // 2
    return list(indices[start : start + n_center])


def o_kept_slices(mask_data):
    return [k for k in range(mask_data.shape[2]) if mask_data[:, :, k].any()]


def o_slice_pair_metric(vol_data, mask_data, kind, pairing, window_k, mask_combine, aggregate="mean"):
    """Loop-based pair metric aggregation mirroring the op's contract."""
    kept = o_kept_slices(mask_data)
    xs, ys = np.nonzero(mask_data.any(axis=2))
    x0, x1, y0, y1 = xs.min(), xs.max() + 1, ys.min(), ys.max() + 1
    values = []
    for ai in range(len(kept)):
        for bi in range(ai + 1, len(kept)):
            i, j = kept[ai], kept[bi]
            if pairing == "window" and abs(i - j) > window_k:
                continue
            a, b = [], []
            for x in range(x0, x1):
                for y in range(y0, y1):
                    mi, mj = mask_data[x, y, i], mask_data[x, y, j]
                    if mask_combine == "union":
                        keep = mi or mj
                    elif mask_combine == "intersection":
                        keep = mi and mj
                    else:
                        keep = True
                    if keep:
                        a.append(float(vol_data[x, y, i]))
                        b.append(float(vol_data[x, y, j]))
            if not a:
                continue
            v = o_pair_metrics(a, b)[kind]
            if v is not None:
                values.append(v)
    if not values:
        return None
    return o_median(values) if aggregate == "median" else o_mean(values)


# --- rank error -------------------------------------------------------------------

def o_rank_error(vol_data, mask_data, center_only, relative, threshold, spacing):
    kept = o_kept_slices(mask_data)
    if center_only:
        kept = o_center_subset(kept)
    if len(kept) < 2:
        return None
    xs, ys = np.nonzero(mask_data.any(axis=2))
    x0, x1, y0, y1 = xs.min(), xs.max() + 1, ys.min(), ys.max() + 1
    rows = []
    for k in kept:
        row = []
        for x in range(x0, x1):
            for y in range(y0, y1):
                row.append(float(vol_data[x, y, k]) if mask_data[x, y, k] else 0.0)
        rows.append(row)
    m = np.array(rows)
    # Singular values via the Gram-matrix eigenvalues (different route from svd).
    eig = np.linalg.eigvalsh(m @ m.T)
    sig2 = sorted((max(float(e), 0.0) for e in eig), reverse=True)
    total = sum(sig2)
    if total == 0:
        return None
    r = 0
    while r <= len(sig2):
        residual = math.sqrt(sum(sig2[r:]) / total)
        if residual <= threshold:
            break
        r += 1
    score = r / len(kept)
    if relative:
        count = sum(int(mask_data[x, y, k]) for k in kept for x in range(mask_data.shape[0]) for y in range(mask_data.shape[1]))
        score /= count * spacing[0] * spacing[1] * spacing[2] / 1000.0
    return score


# --- mask metrics --------------------------------------------------------------------

def o_mask_volume(mask_data, spacing):
    count = 0
    for v in mask_data.ravel():
        count += int(v)
    return count * spacing[0] * spacing[1] * spacing[2]


def o_centroid_stat(mask_data, spacing, center_only=False):
    kept = o_kept_slices(mask_data)
    if center_only:
        kept = o_center_subset(kept)
    if len(kept) < 2:
        return None
    cxs, cys = [], []
    for k in kept:
        xs, ys = [], []
        for x in range(mask_data.shape[0]):
            for y in range(mask_data.shape[1]):
                if mask_data[x, y, k]:
                    xs.append(x)
                    ys.append(y)
        cxs.append(o_mean(xs) * spacing[0])
        cys.append(o_mean(ys) * spacing[1])
    def var(vs):
        m = o_mean(vs)
        return sum((v - m) ** 2 for v in vs) / len(vs)
    return var(cxs) + var(cys)


def o_close_column(col, line_len):
    """Closing of one 0/1 z-column by definition on the infinite line."""
    r = line_len // 2
    n = len(col)
    get = lambda i: col[i] if 0 <= i < n else False
    dilated = [any(get(i + d) for d in range(-r, r + 1)) for i in range(-r, n + r)]
    dget = lambda i: dilated[i + r] if -r <= i < n + r else False
    return [all(dget(i + d) for d in range(-r, r + 1)) for i in range(n)]


def o_closing_diff(mask_data, line_len, center_only=False):
    kept = o_kept_slices(mask_data)
    if not kept or kept[-1] - kept[0] + 1 < line_len:
        return None
    added = np.zeros_like(mask_data)
    for x in range(mask_data.shape[0]):
        for y in range(mask_data.shape[1]):
            closed = o_close_column(list(mask_data[x, y, :]), line_len)
            for k in range(mask_data.shape[2]):
                if closed[k] and not mask_data[x, y, k]:
                    added[x, y, k] = True
    scope = o_center_subset(kept) if center_only else list(range(mask_data.shape[2]))
    n_added = int(added[:, :, scope].sum())
    n_orig = int(mask_data[:, :, scope].sum())
    if n_orig == 0:
        return None
    return n_added / n_orig


# --- segmentation metrics ---------------------------------------------------------------

def o_region_values(vol_data, merged_data, code):
    vals = []
    for x in range(vol_data.shape[0]):
        for y in range(vol_data.shape[1]):
            for z in range(vol_data.shape[2]):
                if merged_data[x, y, z] == code:
                    vals.append(float(vol_data[x, y, z]))
    return vals


def o_snr(mean, std, n):
    if std == 0 or n < 2:
        return None
    return mean / (std * math.sqrt(n / (n - 1)))


def o_cnr(mu_wm, mu_gm, s_bg, s_wm, s_gm):
    denom = math.sqrt(s_bg**2 + s_wm**2 + s_gm**2)
    return abs(mu_wm - mu_gm) / denom if denom > 0 else None


def o_cjv(mu_wm, mu_gm, s_wm, s_gm):
    if mu_wm == mu_gm:
        return None
    return (s_wm + s_gm) / abs(mu_wm - mu_gm)


def o_wm2max(mu_wm, vol_values):
    return mu_wm / o_percentile(vol_values, 99.95)


# --- evaluation metrics -------------------------------------------------------------------

def o_confusion(y_true, y_pred):
    tp = sum(1 for t, p in zip(y_true, y_pred) if t == 1 and p == 1)
    fp = sum(1 for t, p in zip(y_true, y_pred) if t == 0 and p == 1)
    fn = sum(1 for t, p in zip(y_true, y_pred) if t == 1 and p == 0)
    tn = sum(1 for t, p in zip(y_true, y_pred) if t == 0 and p == 0)
    return tp, fp, fn, tn


def o_precision_recall_f1(y_true, y_pred, positive):
    tp = sum(1 for t, p in zip(y_true, y_pred) if t == positive and p == positive)
    fp = sum(1 for t, p in zip(y_true, y_pred) if t != positive and p == positive)
    fn = sum(1 for t, p in zip(y_true, y_pred) if t == positive and p != positive)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1


def o_weighted_f1(y_true, y_pred):
    n = len(y_true)
    total = 0.0
    for cls in (0, 1):
        support = sum(1 for t in y_true if t == cls)
        _, _, f1 = o_precision_recall_f1(y_true, y_pred, cls)
        total += support / n * f1
    return total


def o_roc_auc(y_true, scores):
    """Pairwise Mann-Whitney with 0.5 credit for ties."""
    pos = [s for t, s in zip(y_true, scores) if t == 1]
    neg = [s for t, s in zip(y_true, scores) if t == 0]
    if not pos or not neg:
        return None
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def o_midranks(xs):
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def o_spearman(y_true, y_pred):
    return o_pearson(o_midranks(y_true), o_midranks(y_pred))


def o_r2(y_true, y_pred):
    m = o_mean(y_true)
    sst = sum((t - m) ** 2 for t in y_true)
    if sst == 0:
        return None
    sse = sum((t - p) ** 2 for t, p in zip(y_true, y_pred))
    return 1.0 - sse / sst


def o_mae(y_true, y_pred):
    return sum(abs(t - p) for t, p in zip(y_true, y_pred)) / len(y_true)


def o_cohen_kappa(a_bin, b_bin):
    n = len(a_bin)
    po = sum(1 for x, y in zip(a_bin, b_bin) if x == y) / n
    pe = 0.0
    for cls in (0, 1):
        pa = sum(1 for x in a_bin if x == cls) / n
        pb = sum(1 for y in b_bin if y == cls) / n
        pe += pa * pb
    if pe == 1.0:
        return None
    return (po - pe) / (1.0 - pe)
