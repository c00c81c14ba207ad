"""Deterministic artifact writing: round-trip CSV, manifests with content hashes."""

import csv
import hashlib
import json
import os

import numpy as np

from ..errors import InvalidInputError


def format_number(x) -> str:
    """17 significant digits, enough for an exact float64 round trip."""
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(header):
        raise InvalidInputError(f"{len(header)} column names for {rows.shape[1]} columns")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows if rows.size else []:
            w.writerow([format_number(x) for x in row])


def read_csv(path):
    """Return ``(header, data)`` with ``data`` of shape ``(rows, columns)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path} is empty") from None
        data = [[float(x) for x in row] for row in reader if row]
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return header, arr


def column(header, data, name, path="table"):
    if name not in header:
        raise InvalidInputError(f"{path} has no column {name!r} (columns: {', '.join(header)})")
    return data[:, header.index(name)]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out_dir, solver, version):
    """Hash every file under ``out_dir`` (except the manifest) into ``manifest.json``."""
    files = {}
    for root, _, names in os.walk(out_dir):
        for name in names:
            full = os.path.join(root, name)
            rel = os.path.relpath(full, out_dir).replace(os.sep, "/")
            if rel != "manifest.json":
                files[rel] = sha256_file(full)
    manifest = {"solver": solver, "version": version, "files": dict(sorted(files.items()))}
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest
