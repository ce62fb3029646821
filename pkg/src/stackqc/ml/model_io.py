"""Versioned, human-inspectable text format for forest models.

Floats are serialized as C99 hex literals so save -> load -> predict is
bit-identical.  The schema is line-based:

    stackqc-forest v1
    task {classification|regression}
    n_trees N / seed S / n_features P / degenerate {0|1}
    feature <index> <name>           (one per feature)
    importance <index> <hex float>
    tree <index> nodes <count>
    node <index> split <feature> <hex threshold> <left> <right>
    node <index> leaf <hex value>
    end
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from stackqc.errors import StackQcError
from stackqc.ml.forest import ForestClassifier, ForestRegressor, Tree

FORMAT_HEADER = "stackqc-forest v1"


class ModelFormatError(StackQcError):
    """Model file does not match the expected schema."""


def save_forest(model, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    task = "classification" if isinstance(model, ForestClassifier) else "regression"
    lines = [
        FORMAT_HEADER,
        f"task {task}",
        f"n_trees {len(model.trees_)}",
        f"seed {model.seed}",
        f"n_features {model.n_features_in_}",
        f"degenerate {int(getattr(model, 'degenerate_', False))}",
    ]
    names = model.feature_names_in_ or [f"f{i}" for i in range(model.n_features_in_)]
    for i, name in enumerate(names):
        lines.append(f"feature {i} {name}")
    for i, imp in enumerate(model.feature_importances_):
        lines.append(f"importance {i} {float(imp).hex()}")
    for t, tree in enumerate(model.trees_):
        lines.append(f"tree {t} nodes {tree.n_nodes}")
        for i in range(tree.n_nodes):
            if tree.feature[i] < 0:
                lines.append(f"node {i} leaf {float(tree.value[i]).hex()}")
            else:
                lines.append(
                    f"node {i} split {tree.feature[i]} {float(tree.threshold[i]).hex()} "
                    f"{tree.left[i]} {tree.right[i]}"
                )
    lines.append("end")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_forest(path: str | Path):
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ModelFormatError(f"{path}: missing '{FORMAT_HEADER}' header")
    if lines[-1] != "end":
        raise ModelFormatError(f"{path}: missing 'end' terminator")

    meta: dict[str, str] = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith(("feature ", "tree ")):
        key, _, value = lines[pos].partition(" ")
        meta[key] = value
        pos += 1
    try:
        task = meta["task"]
        n_trees = int(meta["n_trees"])
        seed = int(meta["seed"])
        n_features = int(meta["n_features"])
        degenerate = bool(int(meta.get("degenerate", "0")))
    except (KeyError, ValueError) as err:
        raise ModelFormatError(f"{path}: bad metadata ({err})") from err
    if task not in ("classification", "regression"):
        raise ModelFormatError(f"{path}: unknown task {task!r}")

    names: list[str] = []
    importances = np.zeros(n_features)
    trees: list[Tree] = []
    current: dict | None = None

    def finish_tree():
        if current is None:
            return
        if len(current["feature"]) != current["expected"]:
            raise ModelFormatError(
                f"{path}: tree {len(trees)} has {len(current['feature'])} nodes, "
                f"expected {current['expected']}"
            )
        trees.append(
            Tree(
                feature=np.asarray(current["feature"], dtype=np.int32),
                threshold=np.asarray(current["threshold"], dtype=np.float64),
                left=np.asarray(current["left"], dtype=np.int32),
                right=np.asarray(current["right"], dtype=np.int32),
                value=np.asarray(current["value"], dtype=np.float64),
                importance=np.zeros(n_features),
            )
        )

    for line in lines[pos:-1]:
        parts = line.split()
        if parts[0] == "feature":
            names.append(" ".join(parts[2:]))
        elif parts[0] == "importance":
            importances[int(parts[1])] = float.fromhex(parts[2])
        elif parts[0] == "tree":
            finish_tree()
            current = {"expected": int(parts[3]), "feature": [], "threshold": [],
                       "left": [], "right": [], "value": []}
        elif parts[0] == "node":
            if current is None:
                raise ModelFormatError(f"{path}: node before any tree line")
            if parts[2] == "leaf":
                current["feature"].append(-1)
                current["threshold"].append(0.0)
                current["left"].append(-1)
                current["right"].append(-1)
                current["value"].append(float.fromhex(parts[3]))
            elif parts[2] == "split":
                feat = int(parts[3])
                if not 0 <= feat < n_features:
                    raise ModelFormatError(f"{path}: split feature {feat} out of range")
                current["feature"].append(feat)
                current["threshold"].append(float.fromhex(parts[4]))
                current["left"].append(int(parts[5]))
                current["right"].append(int(parts[6]))
                current["value"].append(0.0)
            else:
                raise ModelFormatError(f"{path}: bad node line {line!r}")
        else:
            raise ModelFormatError(f"{path}: unexpected line {line!r}")
    finish_tree()
    if len(trees) != n_trees:
        raise ModelFormatError(f"{path}: {len(trees)} trees, header says {n_trees}")
    if len(names) != n_features:
        raise ModelFormatError(f"{path}: {len(names)} feature names, header says {n_features}")

    cls = ForestClassifier if task == "classification" else ForestRegressor
    model = cls(n_trees=n_trees, seed=seed)
    model.trees_ = trees
    model.n_features_in_ = n_features
    model.feature_names_in_ = names
    model.feature_importances_ = importances
    if task == "classification":
        model.degenerate_ = degenerate
    return model
