"""Deterministic persistence: IDX ingestion plus the native file formats.

Native tensor format ("MTEN", little-endian):

    bytes 0-3   magic 4D 54 45 4E ("MTEN")
    byte  4     version, currently 1
    byte  5     dtype: 1 = float32 LE, 2 = float64 LE, 3 = uint8
    byte  6     rank
    byte  7     reserved, 0
    next 4*rank uint32 LE dims
    payload     row-major elements

Models live in a directory: one `model.json` manifest plus one tensor file
per weight matrix and bias vector. Reports are canonical JSON (UTF-8,
sorted keys, no insignificant whitespace, shortest round-trip floats).
Suites are a directory of tests.mten (N x d float32), labels.csv and
meta.json. All files are written whole then renamed, so readers never
observe partial content. IDX files are big-endian with magic 0x00000803
(images) / 0x00000801 (labels) as fixed by the external format.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import coverage, nets, testgen, vae
from .errors import FormatError

TENSOR_MAGIC = b"MTEN"
TENSOR_VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1")}
_DTYPE_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2, np.dtype("uint8"): 3}

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# native tensor format
# ---------------------------------------------------------------------------


def write_tensor(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        raise FormatError(f"unsupported dtype {array.dtype}; use f32, f64 or u8")
    if array.ndim > 255:
        raise FormatError("rank exceeds 255")
    for d in array.shape:
        if d > 0xFFFFFFFF:
            raise FormatError(f"dimension {d} overflows 32 bits")
    header = TENSOR_MAGIC + bytes([TENSOR_VERSION, code, array.ndim, 0])
    header += b"".join(struct.pack("<I", d) for d in array.shape)
    payload = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()
    _atomic_write(path, header + payload)


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    if raw[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, code, rank, reserved = raw[4], raw[5], raw[6], raw[7]
    if version != TENSOR_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    if reserved != 0:
        raise FormatError(f"{path}: reserved byte is {reserved}")
    offset = 8 + 4 * rank
    if len(raw) < offset:
        raise FormatError(f"{path}: truncated dims")
    dims = struct.unpack(f"<{rank}I", raw[8:offset]) if rank else ()
    dtype = _DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) if dims else 1
    payload = raw[offset:]
    if len(payload) != expected * dtype.itemsize:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected * dtype.itemsize}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


# ---------------------------------------------------------------------------
# IDX (MNIST-style) ingestion
# ---------------------------------------------------------------------------


def _read_be32(raw: bytes, offset: int, path) -> int:
    if len(raw) < offset + 4:
        raise FormatError(f"{path}: truncated header")
    return struct.unpack(">I", raw[offset : offset + 4])[0]


def read_idx_images(path) -> np.ndarray:
    """u8 pixels scaled to [0,1] float64, shape (N, rows, cols)."""
    raw = Path(path).read_bytes()
    magic = _read_be32(raw, 0, path)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{path}: image magic is {magic:#010x}, expected 0x00000803")
    n = _read_be32(raw, 4, path)
    rows = _read_be32(raw, 8, path)
    cols = _read_be32(raw, 12, path)
    payload = raw[16:]
    if len(payload) != n * rows * cols:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {n * rows * cols}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)
    return pixels.astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic = _read_be32(raw, 0, path)
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(f"{path}: label magic is {magic:#010x}, expected 0x00000801")
    n = _read_be32(raw, 4, path)
    payload = raw[8:]
    if len(payload) != n:
        raise FormatError(f"{path}: payload holds {len(payload)} labels, expected {n}")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def write_idx_images(path, pixels: np.ndarray) -> None:
    """pixels: (N, rows, cols) uint8."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 3:
        raise FormatError("IDX images must be (N, rows, cols) uint8")
    header = struct.pack(">IIII", IDX_IMAGE_MAGIC, *pixels.shape)
    _atomic_write(path, header + pixels.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.min() < 0 or labels.max() > 255:
        raise FormatError("IDX labels must be a flat byte-range sequence")
    header = struct.pack(">II", IDX_LABEL_MAGIC, len(labels))
    _atomic_write(path, header + labels.astype(np.uint8).tobytes())


def load_dataset(images_path, labels_path):
    """(flattened images (N, rows*cols) in [0,1], labels); lengths must agree."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise FormatError(
            f"{images_path} holds {len(images)} images but {labels_path} "
            f"holds {len(labels)} labels"
        )
    return images.reshape(len(images), -1), labels


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def write_json(path, obj) -> None:
    _atomic_write(path, canonical_json(obj))


# ---------------------------------------------------------------------------
# model manifests
# ---------------------------------------------------------------------------


def _layer_entries(net: nets.Network, prefix: str, out_dir: Path) -> list[dict]:
    entries = []
    for i, layer in enumerate(net.layers):
        wname, bname = f"{prefix}{i}_w.mten", f"{prefix}{i}_b.mten"
        write_tensor(out_dir / wname, layer.weights)
        write_tensor(out_dir / bname, layer.bias)
        entries.append(
            {
                "type": "dense",
                "in": layer.in_dim,
                "out": layer.out_dim,
                "activation": layer.activation,
                "weights": wname,
                "bias": bname,
            }
        )
    return entries


def _load_network(entries: list[dict], directory: Path, who: str) -> nets.Network:
    layers = []
    for i, entry in enumerate(entries):
        if entry.get("type") != "dense":
            raise FormatError(f"{who} layer {i}: unknown type {entry.get('type')!r}")
        if entry["activation"] not in nets.ACTIVATIONS:
            raise FormatError(f"{who} layer {i}: unknown activation {entry['activation']!r}")
        for key in ("weights", "bias"):
            if not (directory / entry[key]).exists():
                raise FormatError(f"{who} layer {i}: missing tensor file {entry[key]}")
        w = read_tensor(directory / entry["weights"]).astype(np.float64)
        b = read_tensor(directory / entry["bias"]).astype(np.float64)
        if w.shape != (entry["out"], entry["in"]) or b.shape != (entry["out"],):
            raise FormatError(
                f"{who} layer {i}: tensors {w.shape}/{b.shape} do not match "
                f"declared {entry['out']}x{entry['in']}"
            )
        layers.append(nets.DenseLayer(w, b, entry["activation"]))
    net = nets.Network(layers, layers[0].in_dim)
    return net


def _vae_manifest(model: vae.VaeModel, prefix: str, out_dir: Path) -> dict:
    return {
        "kind": "vae",
        "latent_dim": model.latent_dim,
        "conditional": model.conditional,
        "num_classes": model.num_classes,
        "data_dim": model.data_dim,
        "likelihood": model.likelihood,
        "gaussian_variance": model.gaussian_variance,
        "encoder": _layer_entries(model.encoder, f"{prefix}enc", out_dir),
        "decoder": _layer_entries(model.decoder, f"{prefix}dec", out_dir),
    }


def _load_vae(manifest: dict, directory: Path, who: str = "vae") -> vae.VaeModel:
    encoder = _load_network(manifest["encoder"], directory, f"{who} encoder")
    decoder = _load_network(manifest["decoder"], directory, f"{who} decoder")
    try:
        return vae.VaeModel(
            encoder,
            decoder,
            manifest["latent_dim"],
            manifest["conditional"],
            manifest["num_classes"],
            manifest["data_dim"],
            manifest.get("likelihood", "bernoulli"),
        )
    except ValueError as exc:
        raise FormatError(f"{who}: {exc}") from exc


def save_model(directory, model) -> None:
    """Persist a classifier Network, VaeModel or TwoStageVae under directory/."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(model, nets.Network):
        manifest = {
            "format_version": 1,
            "kind": "classifier",
            "layers": _layer_entries(model, "layer", directory),
        }
    elif isinstance(model, vae.VaeModel):
        manifest = {"format_version": 1, **_vae_manifest(model, "", directory)}
    elif isinstance(model, vae.TwoStageVae):
        manifest = {
            "format_version": 1,
            "kind": "two_stage_vae",
            "stage1": _vae_manifest(model.stage1, "s1_", directory),
            "stage2": _vae_manifest(model.stage2, "s2_", directory),
        }
    else:
        raise FormatError(f"cannot persist object of type {type(model).__name__}")
    write_json(directory / "model.json", manifest)


def load_model(directory):
    directory = Path(directory)
    manifest_path = directory / "model.json"
    if not manifest_path.exists():
        raise FormatError(f"no model.json under {directory}")
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if manifest.get("format_version") != 1:
        raise FormatError(f"unsupported manifest version {manifest.get('format_version')}")
    kind = manifest.get("kind")
    if kind == "classifier":
        return _load_network(manifest["layers"], directory, "classifier")
    if kind == "vae":
        return _load_vae(manifest, directory)
    if kind == "two_stage_vae":
        try:
            return vae.TwoStageVae(
                _load_vae(manifest["stage1"], directory, "stage1"),
                _load_vae(manifest["stage2"], directory, "stage2"),
            )
        except ValueError as exc:
            raise FormatError(f"two_stage manifest: {exc}") from exc
    raise FormatError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# coverage reports and generated suites
# ---------------------------------------------------------------------------


def report_to_dict(report: coverage.CoverageReport) -> dict:
    doc = {
        "criterion": report.criterion,
        "parameters": report.parameters,
        "obligation_count": report.obligation_count,
        "covered_count": report.covered_count,
        "percent": report.percent,
        "hits": [[k, report.hits[k]] for k in sorted(report.hits)],
        "provenance": report.provenance,
    }
    if report.events is not None:
        doc["events"] = [[o, l, c] for (o, l), c in sorted(report.events.items())]
    return doc


def write_report(report: coverage.CoverageReport, path) -> None:
    write_json(path, report_to_dict(report))


def read_report(path) -> coverage.CoverageReport:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    try:
        events = doc.get("events")
        return coverage.CoverageReport(
            doc["criterion"],
            doc["parameters"],
            doc["obligation_count"],
            {int(k): int(v) for k, v in doc["hits"]},
            doc.get("provenance", {}),
            {(int(o), int(l)): int(c) for o, l, c in events} if events is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed report ({exc})") from exc


def write_suite(directory, cases: list[testgen.TestCase], cfg: testgen.GenConfig,
                stats: testgen.GenStats) -> None:
    """tests.mten (N x d float32) + labels.csv + meta.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    inputs = np.stack([c.x for c in cases]) if cases else np.zeros((0, 0))
    write_tensor(directory / "tests.mten", inputs.astype(np.float32))
    lines = ["index,expected,predicted,prob"]
    for i, c in enumerate(cases):
        lines.append(f"{i},{c.expected},{c.predicted},{c.prob!r}")
    _atomic_write(directory / "labels.csv", ("\n".join(lines) + "\n").encode("utf-8"))
    meta = {"config": asdict(cfg), "statistics": {**asdict(stats), "fault_rate": stats.fault_rate}}
    write_json(directory / "meta.json", meta)
