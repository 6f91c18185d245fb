"""Shard record formats shared by the pipeline stages.

Text shards are newline-delimited JSON records with canonical key order,
so identical inputs always produce byte-identical files. The binary format
trades inspectability for throughput: a magic/version preamble followed by
length-prefixed records whose ids are little-endian 32-bit integers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

BINARY_MAGIC = b"ARSH"
BINARY_VERSION = 1

RECORD_KINDS = ("tokens", "pretrain", "finetune", "view_a", "view_b")


@dataclass(slots=True)
class ShardRecord:
    source_id: str
    kind: str
    ids: list[int]
    boundary_offsets: list[int] | None = None
    padding: int = 0

    def to_json(self) -> str:
        payload: dict = {"ids": self.ids, "kind": self.kind, "source_id": self.source_id}
        if self.boundary_offsets is not None:
            payload["boundary_offsets"] = self.boundary_offsets
        if self.padding:
            payload["padding"] = self.padding
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "ShardRecord":
        obj = json.loads(line)
        return cls(
            source_id=obj["source_id"],
            kind=obj["kind"],
            ids=list(obj["ids"]),
            boundary_offsets=obj.get("boundary_offsets"),
            padding=obj.get("padding", 0),
        )


def write_text_shard(path: Path, records: list[ShardRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json())
            fh.write("\n")


def read_text_shard(path: Path) -> list[ShardRecord]:
    with open(path, encoding="utf-8") as fh:
        return [ShardRecord.from_json(line) for line in fh if line.strip()]


def _record_meta(record: ShardRecord) -> bytes:
    meta: dict = {"kind": record.kind, "source_id": record.source_id}
    if record.boundary_offsets is not None:
        meta["boundary_offsets"] = record.boundary_offsets
    if record.padding:
        meta["padding"] = record.padding
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_binary_shard(path: Path, records: list[ShardRecord]) -> None:
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<I", BINARY_VERSION))
        for record in records:
            meta = _record_meta(record)
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            fh.write(struct.pack("<I", len(record.ids)))
            fh.write(struct.pack(f"<{len(record.ids)}I", *record.ids))


def read_binary_shard(path: Path) -> list[ShardRecord]:
    data = Path(path).read_bytes()
    if data[:4] != BINARY_MAGIC:
        raise ValueError(f"{path}: not a binary shard (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != BINARY_VERSION:
        raise ValueError(f"{path}: unsupported shard version {version}")
    records = []
    pos = 8
    while pos < len(data):
        (meta_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        meta = json.loads(data[pos : pos + meta_len])
        pos += meta_len
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        ids = list(struct.unpack_from(f"<{n}I", data, pos))
        pos += 4 * n
        records.append(
            ShardRecord(
                source_id=meta["source_id"],
                kind=meta["kind"],
                ids=ids,
                boundary_offsets=meta.get("boundary_offsets"),
                padding=meta.get("padding", 0),
            )
        )
    return records


def write_shard(path: Path, records: list[ShardRecord], fmt: str) -> None:
    if fmt == "text":
        write_text_shard(path, records)
    elif fmt == "binary":
        write_binary_shard(path, records)
    else:
        raise ValueError(f"unknown shard format: {fmt}")


def read_shard(path: Path) -> list[ShardRecord]:
    """Read a shard in either format, sniffing the magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == BINARY_MAGIC:
        return read_binary_shard(path)
    return read_text_shard(path)


@dataclass(slots=True)
class EmbeddingRecord:
    source_id: str
    slice_index: int
    vector: list[float] = field(default_factory=list)


def write_embeddings(path: Path, records: list[EmbeddingRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"slice_index": r.slice_index, "source_id": r.source_id, "vector": r.vector},
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def read_embeddings(path: Path) -> Iterator[EmbeddingRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            yield EmbeddingRecord(
                source_id=obj["source_id"],
                slice_index=int(obj["slice_index"]),
                vector=[float(x) for x in obj["vector"]],
            )
