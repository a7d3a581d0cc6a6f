"""On-disk formats: tensor containers and line-oriented JSON reports.

Container layout (all integers little-endian)::

    magic      8 bytes   b"TUAPCKPT" (classifier) or b"TUAPPERT" (perturbation)
    version    uint32
    hlen       uint64    length of the header
    header     hlen bytes of UTF-8 JSON, keys sorted
    tensors    float64 little-endian, row-major, in header["tensors"] order

The header lists every tensor's name and shape, so files can be inspected
without this package.  Writing is byte-deterministic: no timestamps.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .classifier import PARAM_NAMES, ClassifierParams
from .core_math import norm_order_name
from .exceptions import FormatError
from .metrics import AttackReport, NIReport
from .perturbation import AttackCell, Perturbation

CKPT_MAGIC = b"TUAPCKPT"
PERT_MAGIC = b"TUAPPERT"
FORMAT_VERSION = 1


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _write_container(path, magic, header, tensors):
    header = dict(header)
    header["tensors"] = [{"name": n, "shape": list(t.shape)} for n, t in tensors]
    raw = canonical_json(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(raw)))
        fh.write(raw)
        for _, t in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def _read_container(path, magic):
    blob = Path(path).read_bytes()
    if blob[:8] != magic:
        kind = {CKPT_MAGIC: "classifier checkpoint", PERT_MAGIC: "perturbation"}[magic]
        raise FormatError(f"{path} is not a {kind} file")
    try:
        version, hlen = struct.unpack_from("<IQ", blob, 8)
    except struct.error:
        raise FormatError(f"{path}: truncated header") from None
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    start = 8 + struct.calcsize("<IQ")
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from None
    offset = start + hlen
    tensors = {}
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(blob):
            raise FormatError(f"{path}: truncated tensor {spec['name']!r}")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(spec["shape"])
        tensors[spec["name"]] = arr.astype(np.float64)
        offset = end
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return header, tensors


def save_checkpoint(path, params, vocab, meta=None):
    header = {
        "format": "tokenuap-classifier",
        "vocab_size": params.vocab_size,
        "dim": params.dim,
        "hidden": params.hidden,
        "num_classes": params.num_classes,
        "activation": params.activation,
        "vocab_hash": vocab.hash(),
        "meta": meta or {},
    }
    _write_container(path, CKPT_MAGIC, header, [(n, t) for n, t in zip(PARAM_NAMES, params.tensors())])


def load_checkpoint(path, vocab=None):
    """Return ``(params, header)``; refuses to load against a different vocabulary."""
    header, tensors = _read_container(path, CKPT_MAGIC)
    if vocab is not None and vocab.hash() != header["vocab_hash"]:
        raise FormatError(f"{path}: vocabulary hash mismatch (checkpoint was trained on a different vocabulary)")
    try:
        params = ClassifierParams(*(tensors[n] for n in PARAM_NAMES), activation=header["activation"])
    except KeyError as exc:
        raise FormatError(f"{path}: missing tensor {exc}") from None
    return params, header


def save_perturbation(path, pert, meta=None, vocab_hash=None):
    header = {
        "format": "tokenuap-perturbation",
        "kind": pert.kind,
        "p": norm_order_name(pert.p),
        "eps": pert.eps,
        "dim": pert.dim,
        "vocab_size": pert.vocab_size,
        "provenance": pert.provenance,
        "seed": pert.seed,
        "vocab_hash": vocab_hash,
        "meta": meta or {},
    }
    _write_container(path, PERT_MAGIC, header, [("delta", pert.data)])


def load_perturbation(path, params=None):
    """Return ``(perturbation, header)``, validated against ``params`` when given."""
    header, tensors = _read_container(path, PERT_MAGIC)
    pert = Perturbation(
        header["kind"], tensors["delta"], header["eps"], header["p"], header["provenance"], header["seed"]
    )
    if params is not None:
        try:
            pert.check_compatible(params)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    return pert, header


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def attack_report_records(report, provenance):
    yield {"record": "header", "type": "attack", **provenance, "metadata": report.metadata}
    yield {"record": "clean", "accuracy": report.clean_accuracy, "n_test": report.n_test}
    for c in report.cells:
        yield {"record": "cell", "method": c.method, "eps": c.eps, "accuracy": c.accuracy,
               "n_test": c.n_test, "seed": c.seed}


def parse_attack_report(records):
    clean = next(r for r in records if r["record"] == "clean")
    header = next(r for r in records if r["record"] == "header")
    report = AttackReport(clean["accuracy"], clean["n_test"], metadata=header.get("metadata", {}))
    for r in records:
        if r["record"] == "cell":
            report.cells.append(AttackCell(r["method"], r["eps"], r["accuracy"], r["n_test"], r["seed"]))
    return report


def ni_report_records(report, vocab, provenance):
    yield {"record": "header", "type": "ni", "k": report.k, "similarity": report.similarity,
           **report.metadata, **provenance}
    for t, score in report.per_token.items():
        yield {"record": "token", "token": vocab.token_of(t) if vocab else None, "id": t, "score": score}
    yield {"record": "aggregate", "ni_v": report.aggregate, "n_tokens": len(report.per_token)}


def parse_ni_report(records):
    header = records[0]
    per_token = {r["id"]: r["score"] for r in records if r["record"] == "token"}
    agg = next(r for r in records if r["record"] == "aggregate")
    meta = {k: v for k, v in header.items() if k not in ("record", "type", "k", "similarity")}
    return NIReport(header["k"], per_token, agg["ni_v"], header["similarity"], meta)
