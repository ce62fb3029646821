"""BIDS-lite filename parsing and dataset discovery.

The expected layout is the anatomical subset of BIDS::

    <root>/sub-<X>/[ses-<Y>/]anat/sub-<X>[_ses-<Y>][_run-<Z>]_T2w.nii[.gz]

with brain masks as ``*_desc-brain_mask.nii.gz`` and label maps as
``*_dseg.nii.gz`` next to the image.  No attempt is made at full BIDS
validation; only the entities needed to identify a stack are read.
"""

from __future__ import annotations

import re
from pathlib import Path

from stackqc.errors import NotBids

_ENTITY_RE = re.compile(r"([a-zA-Z0-9]+)-([a-zA-Z0-9.]+)")


def strip_nifti_suffix(name: str) -> str:
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def parse_bids_entities(filename: str) -> dict[str, str]:
    """Parse ``sub-X[_ses-Y][_run-Z]_T2w.nii[.gz]`` into an entity map.

    Extra entities (``acq-``, ``desc-``, ...) are tolerated and preserved.
    Missing ``ses``/``run`` default to "1".  Raises :class:`NotBids` when the
    ``sub-`` entity or the ``_T2w`` suffix is absent.
    """
    base = strip_nifti_suffix(Path(filename).name)
    parts = base.split("_")
    if parts[-1] != "T2w":
        raise NotBids(f"{filename!r} lacks the _T2w suffix")
    entities: dict[str, str] = {}
    for part in parts[:-1]:
        m = _ENTITY_RE.fullmatch(part)
        if m is None:
            raise NotBids(f"{filename!r}: malformed entity {part!r}")
        entities[m.group(1)] = m.group(2)
    if "sub" not in entities:
        raise NotBids(f"{filename!r} lacks the sub- entity")
    entities.setdefault("ses", "1")
    entities.setdefault("run", "1")
    return entities


def _derivative_path(image_path: Path, suffix: str) -> Path | None:
    base = strip_nifti_suffix(image_path.name)
    base = base[: -len("_T2w")]
    for ext in (".nii.gz", ".nii"):
        cand = image_path.with_name(f"{base}{suffix}{ext}")
        if cand.exists():
            return cand
    return None


def find_stacks(root: str | Path) -> list[dict[str, str]]:
    """Discover T2w stacks under a BIDS-lite tree.

    Returns one dict per stack with the parsed entities plus ``image_path``
    and, when present, ``mask_path`` / ``labelmap_path``.  Sorted by path for
    deterministic ordering.
    """
    root = Path(root)
    out = []
    for image_path in sorted(root.glob("sub-*/**/*_T2w.nii*")):
        if image_path.name.endswith((".json",)):
            continue
        entities = parse_bids_entities(image_path.name)
        mask = _derivative_path(image_path, "_desc-brain_mask")
        dseg = _derivative_path(image_path, "_dseg")
        out.append(
            {
                **entities,
                "image_path": str(image_path),
                "mask_path": str(mask) if mask else "",
                "labelmap_path": str(dseg) if dseg else "",
            }
        )
    return out
