"""On-disk format for problem instances.

An instance is a directory holding ``manifest.json`` plus five raw array
files. Float arrays are little-endian float64 written column-major
(Fortran order); the permutation index vector is little-endian int64. The
stacked sensing tensor A is stored as q consecutive column-major m x n
blocks, block k starting at byte offset k*m*n*8. The manifest repeats the
layout next to each array entry so a file is self-describing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core_model import BlockPermutation, Dims, GroundTruth, ProblemInstance
from .errors import PermLrcsError

MANIFEST_NAME = "manifest.json"
FORMAT_NAME = "permlrcs-instance"
FORMAT_VERSION = 1


def _write_fortran_f64(path: Path, arr: np.ndarray) -> None:
    # tofile always emits C order, so write the axis-reversed view
    a = np.ascontiguousarray(arr.transpose(list(range(arr.ndim))[::-1]), dtype="<f8")
    a.tofile(path)


def _read_fortran_f64(path: Path, shape) -> np.ndarray:
    flat = np.fromfile(path, dtype="<f8")
    expected = int(np.prod(shape))
    if flat.size != expected:
        raise PermLrcsError(f"{path.name}: expected {expected} float64 values, found {flat.size}")
    return np.ascontiguousarray(flat.reshape(tuple(reversed(shape))).transpose(
        list(range(len(shape)))[::-1]))


def save_instance(path, instance: ProblemInstance, truth: GroundTruth,
                  seeds: dict | None = None) -> Path:
    """Write an instance directory; returns the manifest path."""
    d = instance.dims
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    _write_fortran_f64(out / "Y.f64", instance.Y)
    # store A as per-k column-major blocks in k order
    np.ascontiguousarray(instance.A.transpose(0, 2, 1), dtype="<f8").tofile(out / "A.f64")
    _write_fortran_f64(out / "Ustar.f64", truth.Ustar)
    _write_fortran_f64(out / "Bstar.f64", truth.Bstar)
    truth.Pstar.assignment.astype("<i8").tofile(out / "Pstar.i64")

    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "dims": {"n": d.n, "q": d.q, "m": d.m, "r": d.r, "s": d.s},
        "seeds": {
            "instance": None if seeds is None else seeds.get("instance"),
            "perm": None if seeds is None else seeds.get("perm"),
        },
        "arrays": {
            "Y": {"file": "Y.f64", "dtype": "<f8", "order": "F", "shape": [d.m, d.q]},
            "A": {
                "file": "A.f64", "dtype": "<f8", "shape": [d.q, d.m, d.n],
                "layout": "q consecutive column-major m*n blocks; "
                          "block k starts at byte offset k*m*n*8",
            },
            "Ustar": {"file": "Ustar.f64", "dtype": "<f8", "order": "F",
                      "shape": [d.n, d.r]},
            "Bstar": {"file": "Bstar.f64", "dtype": "<f8", "order": "F",
                      "shape": [d.r, d.q]},
            "Pstar": {
                "file": "Pstar.i64", "dtype": "<i8", "shape": [d.m],
                "block_size": d.s,
                "semantics": "0-based index vector; entry j is the source row "
                             "of output row j",
            },
        },
    }
    manifest_path = out / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def load_instance(path):
    """Read an instance directory written by save_instance.

    Returns (ProblemInstance, GroundTruth, seeds_dict).
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise PermLrcsError(f"no {MANIFEST_NAME} in {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT_NAME:
        raise PermLrcsError(f"unrecognized format tag {manifest.get('format')!r}")
    if manifest.get("version") != FORMAT_VERSION:
        raise PermLrcsError(f"unsupported format version {manifest.get('version')!r}")

    dd = manifest["dims"]
    dims = Dims(n=int(dd["n"]), q=int(dd["q"]), m=int(dd["m"]),
                r=int(dd["r"]), s=int(dd["s"]))

    Y = _read_fortran_f64(root / "Y.f64", (dims.m, dims.q))
    a_flat = np.fromfile(root / "A.f64", dtype="<f8")
    expected = dims.q * dims.m * dims.n
    if a_flat.size != expected:
        raise PermLrcsError(f"A.f64: expected {expected} float64 values, found {a_flat.size}")
    A = np.ascontiguousarray(
        a_flat.reshape(dims.q, dims.n, dims.m).transpose(0, 2, 1))
    Ustar = _read_fortran_f64(root / "Ustar.f64", (dims.n, dims.r))
    Bstar = _read_fortran_f64(root / "Bstar.f64", (dims.r, dims.q))
    assignment = np.fromfile(root / "Pstar.i64", dtype="<i8").astype(np.intp)
    Pstar = BlockPermutation(dims.s, assignment)

    instance = ProblemInstance(dims, Y, A)
    truth = GroundTruth(Ustar, Bstar, Pstar)
    return instance, truth, manifest.get("seeds", {})
