"""Batch pipeline stages: scan, filter, tokenize, pack, views, stats, nt-xent.

Every stage is deterministic for a fixed (config, input set, seed): files
are processed in sorted source_id order regardless of worker scheduling,
outputs are written with canonical serialization to a temp file and
atomically renamed, and a state file records completed stages (keyed by
config hash) so an interrupted run resumes without duplicating records.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import curate, embed, midi, sampler, shards, tokenizer
from .augment import AugmentConfig
from .curate import FileMetadata, FilterThresholds
from .notes import NoteList

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
PIPELINE_VERSION = "0.1.0"

MIDI_SUFFIXES = (".mid", ".midi")


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    input_dir: str
    output_dir: str
    catalog: str | None = None
    seq_len: int = sampler.DEFAULT_SEQ_LEN
    d_offset: int = sampler.DEFAULT_DIM_OFFSET
    seed: int = 0
    workers: int = 1
    format: str = "text"
    disjoint_views: bool = False
    stream_base: int = 0
    thresholds: FilterThresholds = field(default_factory=FilterThresholds)
    max_transpose: int = 5
    tempo_lo: float = 0.8
    tempo_hi: float = 1.2
    max_velocity_jitter: int = 10

    def __post_init__(self) -> None:
        if self.seq_len < 2:
            raise ValueError(f"seq_len too small: {self.seq_len}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1: {self.workers}")
        if self.format not in ("text", "binary"):
            raise ValueError(f"unknown output format: {self.format}")

    @property
    def augment(self) -> AugmentConfig:
        return AugmentConfig(
            max_transpose=self.max_transpose,
            tempo_range=(self.tempo_lo, self.tempo_hi),
            max_velocity_jitter=self.max_velocity_jitter,
            seed=self.seed,
        )

    def to_canonical_json(self) -> str:
        payload = asdict(self)
        payload["version"] = CONFIG_VERSION
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_canonical_json().encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        version = obj.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {version}")
        thresholds = FilterThresholds(**obj.pop("thresholds", {}))
        cfg = cls(thresholds=thresholds, **obj)
        if not Path(cfg.input_dir).is_dir():
            raise FileNotFoundError(f"input_dir does not exist: {cfg.input_dir}")
        if cfg.catalog is not None and not Path(cfg.catalog).is_file():
            raise FileNotFoundError(f"catalog does not exist: {cfg.catalog}")
        return cfg

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_canonical_json(), encoding="utf-8")


@dataclass(slots=True)
class StageResult:
    stage: str
    processed: int = 0
    errors: int = 0
    skipped: bool = False
    outputs: list[str] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.errors else 0


def discover_files(input_dir: str | Path) -> list[tuple[str, Path]]:
    """(source_id, path) pairs for every MIDI file, sorted by source_id."""
    root = Path(input_dir)
    found = [
        (p.relative_to(root).as_posix(), p)
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in MIDI_SUFFIXES
    ]
    return sorted(found)


def _write_atomic(path: Path, writer: Callable[[Path], None]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _write_jsonl_atomic(path: Path, rows: list[dict]) -> None:
    def write(tmp: Path) -> None:
        with open(tmp, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")))
                fh.write("\n")

    _write_atomic(path, write)


class _State:
    """Completed-stage bookkeeping for resumable runs."""

    def __init__(self, output_dir: Path) -> None:
        self.path = output_dir / "state.json"
        self.stages: dict = {}
        if self.path.exists():
            self.stages = json.loads(self.path.read_text(encoding="utf-8")).get("stages", {})

    def is_done(self, stage: str, config_hash: str, outputs: list[str]) -> bool:
        entry = self.stages.get(stage)
        if not entry or entry.get("config_hash") != config_hash:
            return False
        return all((self.path.parent / name).exists() for name in outputs)

    def mark_done(self, stage: str, config_hash: str, outputs: list[str]) -> None:
        self.stages[stage] = {"config_hash": config_hash, "outputs": outputs}
        _write_atomic(
            self.path,
            lambda tmp: tmp.write_text(
                json.dumps({"stages": self.stages}, sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            ),
        )


def _write_provenance(out_dir: Path, stage: str, cfg: PipelineConfig) -> None:
    _write_atomic(
        out_dir / f"{stage}.meta.json",
        lambda tmp: tmp.write_text(
            json.dumps(
                {
                    "config_hash": cfg.config_hash(),
                    "pipeline_version": PIPELINE_VERSION,
                    "stage": stage,
                },
                sort_keys=True,
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        ),
    )


def _parse_one(args: tuple[str, str]) -> tuple[str, dict]:
    """Worker: parse and resolve one file into a JSON-safe summary."""
    source_id, path = args
    try:
        data = Path(path).read_bytes()
        doc = midi.parse_midi(data)
        notes = midi.resolve_notes(doc, source_id=source_id)
        last = notes.notes[-1].offset_ms if notes.notes else 0
        return source_id, {
            "status": "ok",
            "notes": len(notes),
            "duration_ms": last,
            "warnings": notes.warnings,
        }
    except (midi.MidiParseError, ValueError, OSError) as exc:
        return source_id, {"status": "error", "error": str(exc)}


def _load_notes(source_id: str, path: Path) -> NoteList:
    return midi.resolve_notes(midi.parse_midi(path.read_bytes()), source_id=source_id)


def _map_workers(cfg: PipelineConfig, fn: Callable, items: list) -> list:
    if cfg.workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, items, chunksize=8))


def _read_sidecar_catalog(cfg: PipelineConfig) -> dict[str, FileMetadata]:
    if cfg.catalog is None:
        return {}
    text = Path(cfg.catalog).read_text(encoding="utf-8")
    return {m.source_id: m for m in curate.read_catalog(text)}


def cmd_scan(cfg: PipelineConfig) -> StageResult:
    """Discover and parse every input file; write the catalog and a report."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = _State(out_dir)
    outputs = ["scan_report.jsonl", "catalog.tsv"]
    if state.is_done("scan", cfg.config_hash(), outputs):
        logger.info("scan already complete; skipping")
        return StageResult(stage="scan", skipped=True, outputs=outputs)

    files = discover_files(cfg.input_dir)
    results = _map_workers(cfg, _parse_one, [(sid, str(p)) for sid, p in files])
    sidecar = _read_sidecar_catalog(cfg)

    report_rows = []
    catalog_rows = []
    errors = 0
    for source_id, summary in results:
        row = {"source_id": source_id}
        row.update(summary)
        report_rows.append(row)
        if summary["status"] == "error":
            errors += 1
        meta = sidecar.get(source_id, FileMetadata(source_id=source_id))
        catalog_rows.append(meta)
    _write_jsonl_atomic(out_dir / "scan_report.jsonl", report_rows)
    _write_atomic(
        out_dir / "catalog.tsv",
        lambda tmp: tmp.write_text(curate.write_catalog(catalog_rows), encoding="utf-8"),
    )
    _write_provenance(out_dir, "scan", cfg)
    state.mark_done("scan", cfg.config_hash(), outputs)
    return StageResult(stage="scan", processed=len(files), errors=errors, outputs=outputs)


def _filter_one(args: tuple[str, str, FilterThresholds]) -> tuple[str, dict]:
    source_id, path, thresholds = args
    try:
        notes = _load_notes(source_id, Path(path))
    except (midi.MidiParseError, ValueError, OSError) as exc:
        return source_id, {"status": "error", "error": str(exc)}
    report = curate.apply_quality_filters(notes, thresholds)
    payload = report.to_dict()
    payload["values"] = {
        k: (None if isinstance(v, float) and math.isnan(v) else v)
        for k, v in payload["values"].items()
    }
    payload["status"] = "ok"
    return source_id, payload


def cmd_filter(cfg: PipelineConfig) -> StageResult:
    """Quality-filter every file, then apply composer dedup to survivors."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = _State(out_dir)
    outputs = ["filter_reports.jsonl", "manifest.jsonl"]
    if state.is_done("filter", cfg.config_hash(), outputs):
        logger.info("filter already complete; skipping")
        return StageResult(stage="filter", skipped=True, outputs=outputs)

    files = discover_files(cfg.input_dir)
    results = _map_workers(
        cfg, _filter_one, [(sid, str(p), cfg.thresholds) for sid, p in files]
    )
    sidecar = _read_sidecar_catalog(cfg)

    quality: dict[str, dict] = {}
    errors = 0
    for source_id, payload in results:
        quality[source_id] = payload
        if payload["status"] == "error":
            errors += 1

    passing = [
        sidecar.get(sid, FileMetadata(source_id=sid))
        for sid, payload in sorted(quality.items())
        if payload["status"] == "ok" and payload["overall"]
    ]
    dedup = curate.dedupe_by_opus(passing)

    manifest_rows = []
    report_rows = []
    kept = 0
    for source_id, payload in sorted(quality.items()):
        report_rows.append(payload)
        if payload["status"] == "error":
            decision = {"source_id": source_id, "keep": False, "reason": f"error:{payload['error']}"}
        elif not payload["overall"]:
            decision = {
                "source_id": source_id,
                "keep": False,
                "reason": "quality:" + "; ".join(payload["reasons"]),
            }
        else:
            d = dedup[source_id]
            decision = {"source_id": source_id, "keep": d.keep, "reason": d.reason}
        kept += decision["keep"]
        manifest_rows.append(decision)

    _write_jsonl_atomic(out_dir / "filter_reports.jsonl", report_rows)
    _write_jsonl_atomic(out_dir / "manifest.jsonl", manifest_rows)
    _write_provenance(out_dir, "filter", cfg)
    state.mark_done("filter", cfg.config_hash(), outputs)
    return StageResult(
        stage="filter",
        processed=len(files),
        errors=errors,
        outputs=outputs,
        info={"kept": kept, "discarded": len(files) - kept},
    )


def read_manifest(out_dir: Path) -> list[str]:
    """Kept source_ids, in sorted order."""
    path = out_dir / "manifest.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}; run the filter stage first")
    kept = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            if row["keep"]:
                kept.append(row["source_id"])
    return sorted(kept)


def _tokenize_one(args: tuple[str, str]) -> tuple[str, dict]:
    source_id, path = args
    try:
        notes = _load_notes(source_id, Path(path))
        seq = tokenizer.tokenize(notes, tokenizer.default_vocabulary())
        return source_id, {"status": "ok", "ids": seq.ids}
    except (midi.MidiParseError, ValueError, OSError) as exc:
        return source_id, {"status": "error", "error": str(exc)}


def _shard_name(stem: str, fmt: str) -> str:
    return f"{stem}.{'jsonl' if fmt == 'text' else 'bin'}"


def cmd_tokenize(cfg: PipelineConfig) -> StageResult:
    """Tokenize every kept file into a token shard (no augmentation)."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = _State(out_dir)
    shard_name = _shard_name("tokens", cfg.format)
    outputs = [shard_name]
    if state.is_done("tokenize", cfg.config_hash(), outputs):
        logger.info("tokenize already complete; skipping")
        return StageResult(stage="tokenize", skipped=True, outputs=outputs)

    kept = set(read_manifest(out_dir))
    files = [(sid, p) for sid, p in discover_files(cfg.input_dir) if sid in kept]
    results = _map_workers(cfg, _tokenize_one, [(sid, str(p)) for sid, p in files])

    records = []
    error_rows = []
    for source_id, payload in results:
        if payload["status"] == "ok":
            records.append(
                shards.ShardRecord(source_id=source_id, kind="tokens", ids=payload["ids"])
            )
        else:
            error_rows.append({"source_id": source_id, "stage": "tokenize", "error": payload["error"]})
    records.sort(key=lambda r: r.source_id)
    _write_atomic(out_dir / shard_name, lambda tmp: shards.write_shard(tmp, records, cfg.format))
    if error_rows:
        _write_jsonl_atomic(out_dir / "tokenize_errors.jsonl", error_rows)
    _write_provenance(out_dir, "tokenize", cfg)
    state.mark_done("tokenize", cfg.config_hash(), outputs)
    return StageResult(
        stage="tokenize", processed=len(files), errors=len(error_rows), outputs=outputs
    )


def cmd_pack(cfg: PipelineConfig, mode: str) -> StageResult:
    """Build fixed-length sequences from the token shard."""
    if mode not in ("pretrain", "finetune"):
        raise ValueError(f"unknown pack mode: {mode}")
    out_dir = Path(cfg.output_dir)
    state = _State(out_dir)
    stage = f"pack-{mode}"
    shard_name = _shard_name(mode, cfg.format)
    outputs = [shard_name]
    if state.is_done(stage, cfg.config_hash(), outputs):
        logger.info("%s already complete; skipping", stage)
        return StageResult(stage=stage, skipped=True, outputs=outputs)

    token_path = out_dir / _shard_name("tokens", cfg.format)
    if not token_path.exists():
        raise FileNotFoundError(f"token shard not found: {token_path}; run tokenize first")
    token_records = sorted(shards.read_shard(token_path), key=lambda r: r.source_id)
    vocab = tokenizer.default_vocabulary()

    records = []
    if mode == "pretrain":
        seqs = (shards_to_tokenseq(r, vocab) for r in token_records)
        for index, packed in enumerate(
            sampler.pack_pretraining_sequences(seqs, cfg.seq_len, vocab)
        ):
            records.append(
                shards.ShardRecord(
                    source_id=f"seq-{index:06d}",
                    kind="pretrain",
                    ids=packed.ids,
                    boundary_offsets=packed.boundary_offsets,
                    padding=packed.padding,
                )
            )
    else:
        for record in token_records:
            packed = sampler.make_finetune_sequence(
                shards_to_tokenseq(record, vocab), cfg.seq_len, cfg.d_offset, vocab
            )
            records.append(
                shards.ShardRecord(
                    source_id=record.source_id,
                    kind="finetune",
                    ids=packed.ids,
                    boundary_offsets=packed.boundary_offsets,
                    padding=packed.padding,
                )
            )
    _write_atomic(out_dir / shard_name, lambda tmp: shards.write_shard(tmp, records, cfg.format))
    _write_provenance(out_dir, stage, cfg)
    state.mark_done(stage, cfg.config_hash(), outputs)
    return StageResult(stage=stage, processed=len(records), outputs=outputs)


def shards_to_tokenseq(record: shards.ShardRecord, vocab: tokenizer.Vocabulary) -> tokenizer.TokenSeq:
    return tokenizer.TokenSeq(tokens=vocab.decode(record.ids), ids=list(record.ids))


def _views_one(args: tuple[str, str, int, AugmentConfig, bool]) -> tuple[str, dict]:
    source_id, path, stream_id, aug, disjoint = args
    try:
        notes = _load_notes(source_id, Path(path))
        pair = sampler.draw_contrastive_views(
            notes, aug, stream_id, tokenizer.default_vocabulary(), disjoint=disjoint
        )
        return source_id, {"status": "ok", "a": pair.view_a.ids, "b": pair.view_b.ids}
    except sampler.SliceTooSmallError as exc:
        return source_id, {"status": "skipped", "error": str(exc)}
    except (midi.MidiParseError, ValueError, OSError) as exc:
        return source_id, {"status": "error", "error": str(exc)}


def cmd_views(cfg: PipelineConfig) -> StageResult:
    """Draw one contrastive view pair per kept file."""
    out_dir = Path(cfg.output_dir)
    state = _State(out_dir)
    shard_name = _shard_name("views", cfg.format)
    outputs = [shard_name]
    if state.is_done("views", cfg.config_hash(), outputs):
        logger.info("views already complete; skipping")
        return StageResult(stage="views", skipped=True, outputs=outputs)

    kept = set(read_manifest(out_dir))
    files = [(sid, p) for sid, p in discover_files(cfg.input_dir) if sid in kept]
    aug = cfg.augment
    tasks = [
        (sid, str(p), cfg.stream_base + index, aug, cfg.disjoint_views)
        for index, (sid, p) in enumerate(files)
    ]
    results = _map_workers(cfg, _views_one, tasks)

    records = []
    skip_rows = []
    errors = 0
    for source_id, payload in results:
        if payload["status"] == "ok":
            records.append(shards.ShardRecord(source_id=source_id, kind="view_a", ids=payload["a"]))
            records.append(shards.ShardRecord(source_id=source_id, kind="view_b", ids=payload["b"]))
        elif payload["status"] == "skipped":
            skip_rows.append({"source_id": source_id, "stage": "views", "reason": payload["error"]})
        else:
            errors += 1
            skip_rows.append({"source_id": source_id, "stage": "views", "error": payload["error"]})
    _write_atomic(out_dir / shard_name, lambda tmp: shards.write_shard(tmp, records, cfg.format))
    if skip_rows:
        _write_jsonl_atomic(out_dir / "views_skipped.jsonl", skip_rows)
    _write_provenance(out_dir, "views", cfg)
    state.mark_done("views", cfg.config_hash(), outputs)
    return StageResult(
        stage="views", processed=len(files), errors=errors, outputs=outputs
    )


def cmd_stats(shard_paths: list[Path]) -> dict:
    """Token histogram, length distribution, and vocabulary coverage."""
    vocab = tokenizer.default_vocabulary()
    lengths = []
    id_counts: dict[int, int] = {}
    kinds: dict[str, int] = {}
    for path in shard_paths:
        for record in shards.read_shard(Path(path)):
            lengths.append(len(record.ids))
            kinds[record.kind] = kinds.get(record.kind, 0) + 1
            for i in record.ids:
                id_counts[i] = id_counts.get(i, 0) + 1
    if not lengths:
        return {"records": 0}
    lengths_arr = np.array(lengths)
    top = sorted(id_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:20]
    return {
        "records": len(lengths),
        "kinds": dict(sorted(kinds.items())),
        "total_tokens": int(lengths_arr.sum()),
        "length_min": int(lengths_arr.min()),
        "length_mean": float(lengths_arr.mean()),
        "length_max": int(lengths_arr.max()),
        "vocab_size": len(vocab),
        "distinct_ids": len(id_counts),
        "vocab_coverage": len(id_counts) / len(vocab),
        "top_tokens": [
            {"token": tokenizer._token_string(vocab.tokens[i]), "count": c} for i, c in top
        ],
    }


def cmd_ntxent(embedding_path: Path, tau: float, grad_check: bool = True) -> dict:
    """Evaluate the symmetric NT-Xent loss over a file of slice embeddings.

    Rows pair up by source_id: slice 0 fills the first half of the batch,
    slice 1 the second. Optionally verifies the analytic gradient against
    central finite differences.
    """
    by_source: dict[str, dict[int, list[float]]] = {}
    for rec in shards.read_embeddings(Path(embedding_path)):
        by_source.setdefault(rec.source_id, {})[rec.slice_index] = rec.vector
    firsts = []
    seconds = []
    for source_id in sorted(by_source):
        slices = by_source[source_id]
        if 0 in slices and 1 in slices:
            firsts.append(slices[0])
            seconds.append(slices[1])
    if not firsts:
        raise ValueError("no complete embedding pairs (need slice_index 0 and 1)")
    batch = embed.EmbeddingBatch(np.array(firsts + seconds))
    loss = embed.symmetric_loss(batch, tau)
    result = {"pairs": batch.n_pairs, "tau": tau, "loss": loss}
    if grad_check:
        if batch.rows * batch.dim > 8192:
            result["grad_skipped"] = "batch too large for finite-difference check"
        else:
            analytic = embed.symmetric_loss_grad(batch, tau)
            numeric = _finite_difference_grad(batch.raw, tau)
            denom = max(float(np.linalg.norm(numeric)), 1e-30)
            rel = float(np.linalg.norm(analytic - numeric)) / denom
            result["grad_rel_error"] = rel
            result["grad_ok"] = rel <= 1e-5
    return result


def _finite_difference_grad(raw: np.ndarray, tau: float, step: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(raw)
    for r in range(raw.shape[0]):
        for c in range(raw.shape[1]):
            plus = raw.copy()
            minus = raw.copy()
            plus[r, c] += step
            minus[r, c] -= step
            grad[r, c] = (
                embed.symmetric_loss(embed.EmbeddingBatch(plus), tau)
                - embed.symmetric_loss(embed.EmbeddingBatch(minus), tau)
            ) / (2 * step)
    return grad
