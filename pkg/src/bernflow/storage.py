"""Versioned serialization for models, beliefs, datasets, and run manifests.

Everything is a JSON envelope with a mandatory ``version`` field.  Coefficient
payloads are inline JSON by default (17 significant digits) or an optional
little-endian float64 binary sidecar keyed by offset/length.  Every load path
re-validates the type invariants and refuses invalid files.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import bernstein
from .bernstein import BernsteinTensor
from .flow import ConditionalFlowModel, FlowModel
from .propagation import Belief
from .systems import Dataset
from .transform import DiagonalTransform

FORMAT_VERSION = 1


class StorageError(ValueError):
    pass


def _dump_json(path: Path, obj: dict):
    path.write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def _load_json(path: Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    if obj.get("version") != FORMAT_VERSION:
        raise StorageError(
            f"{path}: format version {obj.get('version')!r}, expected {FORMAT_VERSION}")
    return obj


def _binary_sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".bin")


def _pack_tensors(envelope: dict, records: list[dict], path: Path, binary: bool):
    if not binary:
        return
    payload = bytearray()
    for rec in records:
        data = np.asarray(rec.pop("coeffs"), dtype="<f8").tobytes()
        rec["payload"] = {"offset": len(payload), "length": len(data)}
        payload.extend(data)
    _binary_sidecar(path).write_bytes(bytes(payload))
    envelope["binary_payload"] = _binary_sidecar(path).name


def _unpack_tensors(envelope: dict, records: list[dict], path: Path):
    name = envelope.get("binary_payload")
    if name is None:
        return
    blob = (Path(path).parent / name).read_bytes()
    for rec in records:
        if "payload" not in rec:
            raise StorageError(f"{path}: tensor record missing binary payload key")
        off, length = rec["payload"]["offset"], rec["payload"]["length"]
        if off + length > len(blob):
            raise StorageError(f"{path}: binary payload out of range")
        flat = np.frombuffer(blob[off:off + length], dtype="<f8")
        rec["coeffs"] = flat.tolist()


def save_model(model, path, transform: DiagonalTransform | None = None,
               binary: bool = False):
    path = Path(path)
    rec = model.to_json_record()
    envelope = {
        "version": FORMAT_VERSION,
        "type": "model",
        **rec,
    }
    if transform is not None:
        envelope["transform"] = transform.to_json_record()
    _pack_tensors(envelope, envelope["factors"], path, binary)
    _dump_json(path, envelope)


def load_model(path):
    """Returns (model, transform-or-None); validates invariants on load."""
    path = Path(path)
    envelope = _load_json(path)
    if envelope.get("type") != "model":
        raise StorageError(f"{path}: not a model file")
    _unpack_tensors(envelope, envelope["factors"], path)
    try:
        if envelope["kind"] == "initial":
            model = FlowModel.from_json_record(envelope)
        elif envelope["kind"] == "transition":
            model = ConditionalFlowModel.from_json_record(envelope)
        else:
            raise StorageError(f"{path}: unknown model kind {envelope['kind']!r}")
    except (KeyError, ValueError) as exc:
        raise StorageError(f"{path}: invalid model: {exc}") from exc
    transform = None
    if "transform" in envelope:
        transform = DiagonalTransform.from_json_record(envelope["transform"])
    return model, transform


def save_belief(belief: Belief, path, binary: bool = False):
    path = Path(path)
    rec = bernstein.to_json_record(belief.density)
    envelope = {
        "version": FORMAT_VERSION,
        "type": "belief",
        "k": belief.k,
        "mass_residual": belief.mass_residual,
        "coeff_min": belief.coeff_min,
        "density": rec,
    }
    _pack_tensors(envelope, [envelope["density"]], path, binary)
    _dump_json(path, envelope)


def load_belief(path) -> Belief:
    path = Path(path)
    envelope = _load_json(path)
    if envelope.get("type") != "belief":
        raise StorageError(f"{path}: not a belief file")
    _unpack_tensors(envelope, [envelope["density"]], path)
    try:
        density = bernstein.from_json_record(envelope["density"])
        belief = Belief(k=int(envelope["k"]), density=density)
    except (KeyError, ValueError) as exc:
        raise StorageError(f"{path}: invalid belief: {exc}") from exc
    return belief


def save_dataset(ds: Dataset, path):
    """CSV with an initials section and a pairs section, plus a JSON sidecar."""
    path = Path(path)
    lines = ["section,x1,x2,x1p,x2p"]
    for row in ds.initials:
        lines.append(f"initial,{float(row[0])!r},{float(row[1])!r},,")
    for x, xp in zip(ds.pairs_x, ds.pairs_xp):
        lines.append(f"pair,{float(x[0])!r},{float(x[1])!r},"
                     f"{float(xp[0])!r},{float(xp[1])!r}")
    path.write_text("\n".join(lines) + "\n")
    meta = {"version": FORMAT_VERSION, "type": "dataset", **ds.metadata}
    _dump_json(path.with_suffix(".meta.json"), meta)


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        lines = path.read_text().strip().split("\n")
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != "section,x1,x2,x1p,x2p":
        raise StorageError(f"{path}: unexpected dataset header")
    initials, px, pxp = [], [], []
    for line in lines[1:]:
        parts = line.split(",")
        try:
            if parts[0] == "initial":
                initials.append([float(parts[1]), float(parts[2])])
            elif parts[0] == "pair":
                px.append([float(parts[1]), float(parts[2])])
                pxp.append([float(parts[3]), float(parts[4])])
            else:
                raise StorageError(f"{path}: unknown section {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise StorageError(f"{path}: malformed row {line!r}") from exc
    meta_path = path.with_suffix(".meta.json")
    metadata = {}
    if meta_path.exists():
        meta = _load_json(meta_path)
        metadata = {k: v for k, v in meta.items() if k not in ("version", "type")}
        counts = (metadata.get("n_initial"), metadata.get("n_pairs"))
        if counts[0] is not None and counts[0] != len(initials):
            raise StorageError(f"{path}: initial count mismatch with metadata")
        if counts[1] is not None and counts[1] != len(px):
            raise StorageError(f"{path}: pair count mismatch with metadata")
    return Dataset(initials=np.asarray(initials), pairs_x=np.asarray(px),
                   pairs_xp=np.asarray(pxp), metadata=metadata)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(path, config: dict, files: list, seeds: dict):
    path = Path(path)
    manifest = {
        "version": FORMAT_VERSION,
        "type": "manifest",
        "tool": "bernflow 0.1.0",
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "config": config,
        "seeds": seeds,
        "files": {Path(f).name: file_sha256(f) for f in files},
    }
    _dump_json(path, manifest)


def verify_manifest(path) -> dict:
    path = Path(path)
    manifest = _load_json(path)
    if manifest.get("type") != "manifest":
        raise StorageError(f"{path}: not a manifest")
    for name, digest in manifest["files"].items():
        target = path.parent / name
        if not target.exists():
            raise StorageError(f"manifest references missing file {name}")
        if file_sha256(target) != digest:
            raise StorageError(f"hash mismatch for {name}")
    return manifest
