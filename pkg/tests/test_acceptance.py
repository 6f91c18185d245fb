"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.
"""

from __future__ import annotations

import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from ariapipe import pipeline
from ariapipe.curate import FileMetadata, dedupe_by_opus, max_silence_gap
from ariapipe.embed import EmbeddingBatch, nt_xent_pairloss, symmetric_loss, symmetric_loss_grad
from ariapipe.notes import Note, NoteList
from ariapipe.pipeline import PipelineConfig
from ariapipe.sampler import pack_pretraining_sequences, unpack_sequences
from ariapipe.tokenizer import TokenSeq, default_vocabulary, detokenize, elapsed_ms, tokenize

from helpers import (
    TRIAD_TOKENS,
    build_corpus,
    gap_oracle,
    random_quantized_notelist,
    random_unquantized_notelist,
)

VOCAB = default_vocabulary()


@contextmanager
def stopwatch(name: str, budget_s: float):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s, budget {budget_s:.0f}s)")
    assert elapsed < budget_s, f"{name} exceeded its {budget_s}s budget: {elapsed:.2f}s"


def test_golden_three_note_sequence():
    with stopwatch("golden-triad-tokenization", 1.0):
        notes = NoteList.from_notes(
            [
                Note("piano", 60, 60, 1000, 4000),
                Note("piano", 64, 60, 3000, 6000),
                Note("piano", 67, 60, 5000, 8000),
            ]
        )
        seq = tokenize(notes, VOCAB)
        assert seq.tokens == TRIAD_TOKENS
        assert seq.tokens[7] == "<T>"  # marker precedes the third-note group
        assert seq.ids == VOCAB.encode(TRIAD_TOKENS)


def test_token_time_arithmetic_oracle_suite():
    rng = np.random.default_rng(2024_01)
    with stopwatch("token-time-arithmetic-oracle", 30.0):
        for trial in range(10_000):
            if trial % 100 == 99:
                n = int(rng.integers(300, 501))
            else:
                n = int(rng.integers(2, 60))
            if trial % 2:
                notes = random_quantized_notelist(rng, n, include_drums=True)
            else:
                notes = random_unquantized_notelist(rng, n)
            seq = tokenize(notes, VOCAB)
            onsets = [note.onset_ms for note in detokenize(seq, VOCAB).notes]
            k = len(onsets)
            pairs = [(int(rng.integers(0, k)), int(rng.integers(0, k))) for _ in range(12)]
            pairs += [(0, k - 1), (k - 1, 0), (0, 0)]
            for i, j in pairs:
                assert elapsed_ms(seq, i, j, VOCAB.config) == onsets[i] - onsets[j]


def test_round_trip_suite():
    rng = np.random.default_rng(2024_02)
    with stopwatch("round-trip", 60.0):
        for trial in range(10_000):
            n = int(rng.integers(600, 1001)) if trial % 500 == 499 else int(rng.integers(0, 50))
            x = random_quantized_notelist(rng, n, include_drums=True, max_onset_ms=120_000)
            assert detokenize(tokenize(x, VOCAB), VOCAB) == x
        max_onset_err = 0
        max_dur_err = 0
        for _ in range(2_000):
            x = random_unquantized_notelist(rng, int(rng.integers(1, 50)))
            reconstructed = _stream_notes(tokenize(x, VOCAB).tokens)
            assert len(reconstructed) == len(x.notes)
            for a, (onset, dur) in zip(x.notes, reconstructed):
                max_onset_err = max(max_onset_err, abs(a.onset_ms - onset))
                if not a.is_drum:
                    max_dur_err = max(max_dur_err, abs(a.duration_ms - dur))
        assert max_onset_err <= 5
        assert max_dur_err <= 5


def _stream_notes(tokens) -> list[tuple[int, int]]:
    out = []
    segment = 0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "<T>":
            segment += 1
            i += 1
        elif isinstance(tok, tuple) and tok[0] == "drum":
            out.append((segment * 5000 + tokens[i + 1][1], 0))
            i += 2
        elif isinstance(tok, tuple) and tok[0] not in ("onset", "dur"):
            out.append((segment * 5000 + tokens[i + 1][1], tokens[i + 2][1]))
            i += 3
        else:
            i += 1
    return out


def test_nt_xent_numeric_suite():
    rng = np.random.default_rng(2024_03)
    with stopwatch("nt-xent-numerics", 60.0):
        # Single pair: loss is exactly zero for any embeddings and tau.
        for _ in range(10):
            batch = EmbeddingBatch(rng.normal(size=(2, int(rng.integers(2, 32)))))
            assert symmetric_loss(batch, float(rng.uniform(0.01, 10))) == 0.0

        # Orthogonal two-pair batch at tau = 0.1: frozen closed form.
        e1, e2 = [1.0, 0.0], [0.0, 1.0]
        batch = EmbeddingBatch(np.array([e1, e2, e1, e2]))
        expected = math.log(1 + 2 * math.exp(-10))
        for i, j in batch.pair_indices():
            value = nt_xent_pairloss(batch, i, j, 0.1)
            assert abs(value - expected) / expected <= 1e-12

        # Analytic gradient against central finite differences.
        for _ in range(100):
            n = int(rng.integers(1, 17))
            d = int(rng.integers(2, 65))
            tau = float(rng.uniform(0.05, 0.5))
            batch = EmbeddingBatch(rng.normal(size=(2 * n, d)))
            analytic = symmetric_loss_grad(batch, tau)
            numeric = _fd_grad(batch.raw, tau)
            denom = max(np.linalg.norm(numeric), 1e-30)
            assert np.linalg.norm(analytic - numeric) / denom <= 1e-5

        # High-temperature limit: uniform softmax over 2N-1 competitors.
        for n in (2, 4, 16):
            batch = EmbeddingBatch(rng.normal(size=(2 * n, 32)))
            for k in range(n):
                value = nt_xent_pairloss(batch, k, k + n, 1e6)
                assert abs(value - math.log(2 * n - 1)) <= 1e-6


def _fd_grad(raw: np.ndarray, tau: float, step: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(raw)
    for r in range(raw.shape[0]):
        for c in range(raw.shape[1]):
            plus = raw.copy()
            minus = raw.copy()
            plus[r, c] += step
            minus[r, c] -= step
            grad[r, c] = (
                symmetric_loss(EmbeddingBatch(plus), tau)
                - symmetric_loss(EmbeddingBatch(minus), tau)
            ) / (2 * step)
    return grad


def _random_catalog(rng: np.random.Generator) -> list[FileMetadata]:
    catalog = []
    for c in range(int(rng.integers(1, 4))):
        tagged = int(rng.choice([250, 251, int(rng.integers(0, 320))]))
        untagged = int(rng.integers(0, 30))
        pieces = int(rng.integers(1, 40))
        for k in range(tagged):
            piece = int(rng.integers(0, pieces))
            catalog.append(
                FileMetadata(
                    source_id=f"c{c}-t{k:04d}",
                    composer=f"composer{c}",
                    opus=f"op{piece}" if rng.random() < 0.8 else None,
                    piece_number=f"n{piece}" if rng.random() < 0.8 else f"n{piece}",
                )
            )
        for k in range(untagged):
            catalog.append(FileMetadata(source_id=f"c{c}-u{k:04d}", composer=f"composer{c}"))
    return catalog


def test_curation_suite():
    rng = np.random.default_rng(2024_04)
    shuffler = random.Random(909)
    with stopwatch("curation-dedup-and-silence", 30.0):
        for _ in range(1_000):
            catalog = _random_catalog(rng)
            decisions = dedupe_by_opus(catalog)
            kept = {sid for sid, d in decisions.items() if d.keep}

            by_composer: dict[str, list[FileMetadata]] = {}
            for m in catalog:
                by_composer.setdefault(m.composer, []).append(m)
            for composer, metas in by_composer.items():
                tagged = [m for m in metas if m.has_composition_tags]
                if len(tagged) <= 250:
                    assert all(m.source_id in kept for m in metas)  # strict threshold
                else:
                    per_pair: dict[tuple, int] = {}
                    for m in tagged:
                        if m.source_id in kept:
                            per_pair[m.piece_key] = per_pair.get(m.piece_key, 0) + 1
                    assert all(v <= 10 for v in per_pair.values())
                    for m in metas:
                        if not m.has_composition_tags:
                            assert m.source_id not in kept
                            assert decisions[m.source_id].reason.startswith("discard:")

            shuffled = catalog[:]
            shuffler.shuffle(shuffled)
            assert {s for s, d in dedupe_by_opus(shuffled).items() if d.keep} == kept
            survivors = [m for m in catalog if m.source_id in kept]
            assert {s for s, d in dedupe_by_opus(survivors).items() if d.keep} == kept

        for _ in range(1_000):
            n = int(rng.integers(1, 50))
            intervals = []
            notes = []
            for _ in range(n):
                onset = int(rng.integers(0, 30_000))
                dur = int(rng.integers(1, 4_000))
                intervals.append((onset, onset + dur))
                notes.append(Note("piano", int(rng.integers(0, 128)), 64, onset, onset + dur))
            assert max_silence_gap(NoteList.from_notes(notes)) == gap_oracle(intervals)


def test_packing_conservation_suite():
    rng = np.random.default_rng(2024_05)
    with stopwatch("packing-conservation", 30.0):
        for _ in range(1_000):
            files = [
                TokenSeq(tokens=[], ids=rng.integers(5, 22_000, size=int(rng.integers(1, 400))).tolist())
                for _ in range(int(rng.integers(1, 10)))
            ]
            packed = list(pack_pretraining_sequences(iter(files), 8192, VOCAB))
            assert all(len(p.ids) == 8192 for p in packed)
            total_in = sum(len(f.ids) for f in files)
            assert sum(8192 - p.padding for p in packed) == total_in
            assert unpack_sequences(packed, 8192) == [f.ids for f in files]


def test_pipeline_determinism_suite(tmp_path):
    with stopwatch("pipeline-determinism", 120.0):
        corpus = tmp_path / "corpus"
        build_corpus(corpus, n_files=50)
        payload_files = [
            "scan_report.jsonl",
            "catalog.tsv",
            "filter_reports.jsonl",
            "manifest.jsonl",
            "tokens.jsonl",
            "pretrain.jsonl",
            "finetune.jsonl",
            "views.jsonl",
        ]
        payloads = []
        for workers in (1, 4):
            out = tmp_path / f"out-w{workers}"
            cfg = PipelineConfig(
                input_dir=str(corpus),
                catalog=str(corpus / "catalog.tsv"),
                output_dir=str(out),
                seed=4242,
                workers=workers,
            )
            pipeline.cmd_scan(cfg)
            pipeline.cmd_filter(cfg)
            pipeline.cmd_tokenize(cfg)
            pipeline.cmd_pack(cfg, "pretrain")
            pipeline.cmd_pack(cfg, "finetune")
            pipeline.cmd_views(cfg)
            payloads.append({name: (out / name).read_bytes() for name in payload_files})
        assert payloads[0] == payloads[1]


def test_throughput_smoke(tmp_path):
    # Soft target: reported, not asserted.
    corpus = tmp_path / "corpus"
    build_corpus(corpus, n_files=50)
    cfg = PipelineConfig(
        input_dir=str(corpus),
        catalog=str(corpus / "catalog.tsv"),
        output_dir=str(tmp_path / "out"),
        workers=1,
    )
    start = time.perf_counter()
    pipeline.cmd_scan(cfg)
    pipeline.cmd_filter(cfg)
    pipeline.cmd_tokenize(cfg)
    elapsed = time.perf_counter() - start
    rate = 50 * 3 / elapsed / 3  # files through three single-pass stages
    status = "meets" if rate >= 100 else "below"
    print(
        f"ACCEPTANCE throughput-smoke: PASS (reported {rate:.0f} files/s/worker, "
        f"{status} the 100 files/s soft target)"
    )
