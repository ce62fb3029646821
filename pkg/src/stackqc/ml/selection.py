"""Correlation-grouped feature ranking and the reduced top-k model selection.

Features with pairwise |Pearson correlation| above the threshold are merged
into single-linkage groups; one randomly chosen representative per group is
ranked by the averaged QC+QA importance and the top-k survive.  Names on the
exclusion list never represent a group and never reach the ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from stackqc.errors import TooFewFeatures


@dataclass
class FeatureRanking:
    """Grouping + ranking outcome of the reduced-model selection."""

    groups: list[list[str]]
    representatives: list[str]
    importance: dict[str, float]
    selected: list[str]


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def correlation_group_rank(
    X: pd.DataFrame,
    importance_qc: dict[str, float] | pd.Series,
    importance_qa: dict[str, float] | pd.Series,
    threshold: float = 0.95,
    k: int = 20,
    exclude: list[str] | None = None,
    seed: int = 0,
) -> FeatureRanking:
    """Group |corr| > threshold features and pick the top-k representatives.

    Constant columns have undefined correlations and stay in singleton
    groups.  ``exclude`` removes names from representation and ranking; the
    next names in line back-fill the selection.
    """
    names = [str(c) for c in X.columns]
    if len(names) < k:
        raise TooFewFeatures(f"{len(names)} features < k={k}")
    exclude_set = set(exclude or ())
    imp_qc = dict(importance_qc)
    imp_qa = dict(importance_qa)

    mat = X.to_numpy(dtype=np.float64)
    std = mat.std(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(mat, rowvar=False)
    corr = np.nan_to_num(corr, nan=0.0)
    # constant columns correlate with nothing
    corr[std == 0, :] = 0.0
    corr[:, std == 0] = 0.0

    uf = _UnionFind(len(names))
    above = np.argwhere(np.abs(corr) > threshold)
    for i, j in above:
        if i < j:
            uf.union(int(i), int(j))

    members: dict[int, list[int]] = {}
    for i in range(len(names)):
        members.setdefault(uf.find(i), []).append(i)
    groups = [sorted(v) for _, v in sorted(members.items())]

    rng = np.random.default_rng(seed)
    reps: list[str] = []
    group_names: list[list[str]] = []
    for group in groups:
        group_names.append([names[i] for i in group])
        eligible = [names[i] for i in group if names[i] not in exclude_set]
        if not eligible:
            continue
        reps.append(str(rng.choice(eligible)))

    averaged = {
        name: (imp_qc.get(name, 0.0) + imp_qa.get(name, 0.0)) / 2.0 for name in reps
    }
    ranked = sorted(reps, key=lambda name: (-averaged[name], name))
    if len(ranked) < k:
        raise TooFewFeatures(f"only {len(ranked)} eligible representatives < k={k}")
    return FeatureRanking(
        groups=group_names,
        representatives=ranked,
        importance=averaged,
        selected=ranked[:k],
    )
