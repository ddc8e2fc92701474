"""JSON/CSV formats shared by the command-line tools.

Every file carries ``schema_version``. Images are stored as
``{"N", "d", "k", "parity", "data"}`` with ``data`` the flat row-major
component list (pixel-major, then tensor indices). Output is written with
sorted keys and a trailing newline so identical content gives identical bytes.
"""
import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from geomnet.image_algebra import GeometricImage

SCHEMA_VERSION = 1
LOSS_COLUMNS = ("epoch", "train_rmse", "val_rmse", "lr")


class FormatError(ValueError):
    pass


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if isinstance(data, dict) and data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported schema_version {data.get('schema_version')}")
    return data


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def image_to_json(img):
    return {
        "schema_version": SCHEMA_VERSION,
        "N": img.N,
        "d": img.d,
        "k": img.k,
        "parity": img.parity,
        "data": [float(v) for v in img.flat()],
    }


def image_from_json(obj):
    try:
        return GeometricImage.from_flat(obj["data"], obj["N"], obj["d"], obj["k"], obj["parity"])
    except KeyError as exc:
        raise FormatError(f"image record lacks field {exc}") from exc


def bank_to_json(bank):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "filter_bank",
        "M": bank.M,
        "d": bank.d,
        "k": bank.k,
        "parity": bank.parity,
        "count": len(bank),
        "filters": [image_to_json(f) for f in bank],
    }


def dataset_to_json(pairs, problem, split):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "dataset",
        "problem": problem,
        "split": split,
        "samples": [
            {"input": image_to_json(p.input), "target": image_to_json(p.target), "metadata": p.metadata}
            for p in pairs
        ],
    }


def dataset_arrays(obj):
    """(inputs, targets) as flat (S, P, comps) arrays."""
    if obj.get("kind") != "dataset":
        raise FormatError("not a dataset file")
    samples = obj["samples"]
    if not samples:
        raise FormatError("dataset has no samples")
    x = np.stack([image_from_json(s["input"]).pixels() for s in samples])
    y = np.stack([image_from_json(s["target"]).pixels() for s in samples])
    return x, y


def params_to_json(theta, spec, extra=None):
    out = {"schema_version": SCHEMA_VERSION, "kind": "model", "spec": spec, "params": [float(v) for v in theta]}
    if extra:
        out.update(extra)
    return out


def loss_csv(history):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOSS_COLUMNS)
    for row in history:
        writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in LOSS_COLUMNS[1:]])
    return buf.getvalue()


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
