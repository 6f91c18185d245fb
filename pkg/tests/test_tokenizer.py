"""Tokenization schema, vocabulary, round trips, and token-time arithmetic."""

from __future__ import annotations

import numpy as np
import pytest

from ariapipe.notes import Note, NoteList
from ariapipe.tokenizer import (
    BOS_TOK,
    SEG_TOK,
    TokenGrammarError,
    Vocabulary,
    build_vocabulary,
    default_vocabulary,
    detokenize,
    elapsed_ms,
    quantize_velocity,
    tokenize,
)

from helpers import (
    TRIAD_NOTES,
    TRIAD_TOKENS,
    random_quantized_notelist,
    random_unquantized_notelist,
    schema_tokens,
)


def test_vocabulary_size_and_metadata():
    vocab = default_vocabulary()
    meta = vocab.metadata
    assert meta["note"] == 12 * 128 * 12 == 18432
    assert meta["drum"] == 128
    assert meta["onset"] == 500
    assert meta["duration"] == 3000
    assert meta["special"] == 5
    assert len(vocab) == 18432 + 128 + 500 + 3000 + 5 == 22065


def test_vocabulary_bijection_all_ids():
    vocab = default_vocabulary()
    for i, token in enumerate(vocab.tokens):
        assert vocab.tok_to_id[token] == i
    assert vocab.decode(vocab.encode(vocab.tokens)) == list(vocab.tokens)


def test_vocabulary_serialization_deterministic_and_loadable():
    a = build_vocabulary().dumps()
    b = build_vocabulary().dumps()
    assert a == b
    loaded = Vocabulary.loads(a)
    assert loaded.tokens == default_vocabulary().tokens
    assert loaded.config == default_vocabulary().config


def test_vocabulary_rejects_bad_header():
    with pytest.raises(ValueError, match="version"):
        Vocabulary.loads("not a vocab\n")


@pytest.mark.parametrize(
    "velocity,expected_bin,expected_rep",
    [(60, 5, 60), (1, 0, 5), (127, 11, 126), (11, 1, 16), (10, 0, 5)],
)
def test_quantize_velocity_examples(velocity, expected_bin, expected_rep):
    assert quantize_velocity(velocity) == (expected_bin, expected_rep)


def test_quantize_velocity_monotone_and_self_consistent():
    bins = [quantize_velocity(v)[0] for v in range(1, 128)]
    assert bins == sorted(bins)
    assert set(bins) == set(range(12))
    for _, rep in map(quantize_velocity, range(1, 128)):
        assert quantize_velocity(rep)[1] == rep


def test_quantize_velocity_rejects_out_of_range():
    with pytest.raises(ValueError):
        quantize_velocity(0)
    with pytest.raises(ValueError):
        quantize_velocity(128)


def test_three_note_golden_sequence():
    seq = tokenize(TRIAD_NOTES)
    assert seq.tokens == TRIAD_TOKENS
    assert seq.ids == default_vocabulary().encode(TRIAD_TOKENS)


def test_single_drum_hit():
    notes = NoteList.from_notes([Note("drum", 38, 90, 0, 0)])
    assert tokenize(notes).tokens == [BOS_TOK, ("drum", 38), ("onset", 0)]


def test_segment_crossing_emits_consecutive_markers():
    notes = NoteList.from_notes([Note("piano", 60, 60, 12340, 12840)])
    seq = tokenize(notes)
    assert seq.tokens == [
        BOS_TOK,
        SEG_TOK,
        SEG_TOK,
        ("piano", 60, 60),
        ("onset", 2340),
        ("dur", 500),
    ]


def test_empty_notelist_is_bos_only():
    seq = tokenize(NoteList())
    assert seq.tokens == [BOS_TOK]


def test_duration_floor_and_cap():
    notes = NoteList.from_notes(
        [
            Note("piano", 60, 60, 0, 2),  # rounds to 0, floored to 10
            Note("piano", 62, 60, 0, 55_000),  # capped at 30000
        ]
    )
    toks = tokenize(notes).tokens
    assert ("dur", 10) in toks and ("dur", 30_000) in toks


def test_tokenize_matches_direct_schema_arithmetic():
    rng = np.random.default_rng(3)
    for _ in range(200):
        notes = random_quantized_notelist(rng, int(rng.integers(0, 40)), include_drums=True)
        assert tokenize(notes).tokens == schema_tokens(notes)
    for _ in range(200):
        notes = random_unquantized_notelist(rng, int(rng.integers(1, 40)))
        assert tokenize(notes).tokens == schema_tokens(notes)


def test_segment_token_count_identity():
    rng = np.random.default_rng(5)
    for _ in range(100):
        notes = random_quantized_notelist(rng, int(rng.integers(1, 50)))
        seq = tokenize(notes)
        last_onset = notes.notes[-1].onset_ms
        assert seq.tokens.count(SEG_TOK) == last_onset // 5000


def test_detokenize_golden_sequence():
    notes = detokenize(tokenize(TRIAD_NOTES))
    assert [(n.onset_ms, n.duration_ms) for n in notes.notes] == [
        (1000, 3000),
        (3000, 3000),
        (5000, 3000),
    ]
    assert notes == TRIAD_NOTES


def test_detokenize_bos_only():
    assert detokenize([BOS_TOK]).notes == []


def test_round_trip_identity_on_quantized_domain():
    rng = np.random.default_rng(17)
    for _ in range(300):
        x = random_quantized_notelist(rng, int(rng.integers(0, 60)), include_drums=True)
        assert detokenize(tokenize(x)) == x


def _notes_in_stream_order(tokens) -> list[tuple[int, int]]:
    """(onset, duration) per note group, in token order."""
    out = []
    segment = 0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == SEG_TOK:
            segment += 1
            i += 1
        elif isinstance(tok, tuple) and tok[0] not in ("onset", "dur", "drum"):
            onset = segment * 5000 + tokens[i + 1][1]
            out.append((onset, tokens[i + 2][1]))
            i += 3
        elif isinstance(tok, tuple) and tok[0] == "drum":
            out.append((segment * 5000 + tokens[i + 1][1], 0))
            i += 2
        else:
            i += 1
    return out


def test_round_trip_error_bound_on_unquantized_domain():
    rng = np.random.default_rng(19)
    for _ in range(200):
        x = random_unquantized_notelist(rng, int(rng.integers(1, 50)))
        reconstructed = _notes_in_stream_order(tokenize(x).tokens)
        assert len(reconstructed) == len(x.notes)
        for a, (onset, dur) in zip(x.notes, reconstructed):
            assert abs(a.onset_ms - onset) <= 5
            assert abs(a.duration_ms - dur) <= 5


def test_token_round_trip_fixed_point():
    rng = np.random.default_rng(29)
    total = 0
    while total < 5000:
        notes = random_quantized_notelist(rng, int(rng.integers(1, 80)), include_drums=True)
        s = schema_tokens(notes)
        assert tokenize(detokenize(s)).tokens == s
        total += len(s)


def test_detokenize_grammar_errors_name_index_and_expectation():
    with pytest.raises(TokenGrammarError) as exc_info:
        detokenize([BOS_TOK, ("piano", 60, 60), ("dur", 100)])
    assert exc_info.value.index == 2
    assert exc_info.value.expected == "onset"

    with pytest.raises(TokenGrammarError) as exc_info:
        detokenize([BOS_TOK, ("piano", 60, 60), ("onset", 0)])
    assert exc_info.value.index == 3

    with pytest.raises(TokenGrammarError):
        detokenize([BOS_TOK, ("onset", 0)])

    # Decreasing onsets within one segment violate the grammar.
    with pytest.raises(TokenGrammarError):
        detokenize(
            [
                BOS_TOK,
                ("piano", 60, 60),
                ("onset", 100),
                ("dur", 10),
                ("piano", 62, 60),
                ("onset", 50),
                ("dur", 10),
            ]
        )


def test_elapsed_ms_golden_case():
    seq = tokenize(TRIAD_NOTES)
    assert elapsed_ms(seq, 2, 1) == 5000 * 1 + 0 - 3000 == 2000
    assert elapsed_ms(seq, 1, 2) == -2000
    assert elapsed_ms(seq, 1, 1) == 0


def test_elapsed_ms_index_errors():
    seq = tokenize(TRIAD_NOTES)
    with pytest.raises(IndexError):
        elapsed_ms(seq, 0, 3)


def test_elapsed_ms_matches_absolute_onset_difference():
    rng = np.random.default_rng(37)
    for _ in range(100):
        notes = random_quantized_notelist(rng, int(rng.integers(2, 60)), include_drums=True)
        seq = tokenize(notes)
        onsets = [n.onset_ms for n in detokenize(seq).notes]
        k = len(onsets)
        if k <= 10:
            pairs = [(i, j) for i in range(k) for j in range(k)]
        else:
            pairs = [
                (int(rng.integers(0, k)), int(rng.integers(0, k))) for _ in range(40)
            ]
        for i, j in pairs:
            assert elapsed_ms(seq, i, j) == onsets[i] - onsets[j]
