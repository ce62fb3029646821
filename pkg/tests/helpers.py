"""Random small instances shared by oracle tests, fuzz and acceptance."""

from __future__ import annotations

import numpy as np

from stackqc.io.nifti import LabelMap, Mask, Volume


def random_instance(rng: np.random.Generator, min_kept: int = 2):
    """A small volume + nonempty mask with at least ``min_kept`` kept slices."""
    nx = int(rng.integers(10, 16))
    ny = int(rng.integers(10, 16))
    nz = int(rng.integers(max(4, min_kept + 1), 9))
    spacing = (
        float(rng.uniform(0.5, 1.5)),
        float(rng.uniform(0.5, 1.5)),
        float(rng.uniform(2.0, 5.0)),
    )
    data = rng.normal(100.0, 30.0, (nx, ny, nz))
    mask = np.zeros((nx, ny, nz), dtype=bool)
    x0 = int(rng.integers(0, 3))
    y0 = int(rng.integers(0, 3))
    z0 = int(rng.integers(0, nz - min_kept)) if nz > min_kept else 0
    z1 = int(rng.integers(z0 + min_kept, nz + 1))
    blob = rng.random((nx - x0 - 2, ny - y0 - 2, z1 - z0)) > 0.35
    mask[x0 : nx - 2, y0 : ny - 2, z0:z1] = blob
    # Guarantee every slice in [z0, z1) keeps at least one voxel.
    for k in range(z0, z1):
        if not mask[:, :, k].any():
            mask[nx // 2, ny // 2, k] = True
    return Volume(data, spacing), Mask(mask)


def random_labelmap(rng: np.random.Generator, shape) -> LabelMap:
    """Merged-code label map (0..3) with a blob-ish foreground."""
    labels = np.zeros(shape, dtype=np.int32)
    fg = rng.random(shape) > 0.5
    labels[fg] = rng.integers(1, 4, int(fg.sum()))
    return LabelMap(labels)
