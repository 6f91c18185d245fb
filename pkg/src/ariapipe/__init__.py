"""MIDI preprocessing, tokenization, curation, and contrastive-view pipeline."""

from .augment import AugmentConfig, jitter_velocity, random_augment, stretch_tempo, transpose
from .curate import (
    DedupDecision,
    FileMetadata,
    FilterReport,
    FilterThresholds,
    apply_quality_filters,
    dedupe_by_opus,
    duration_entropy,
    max_silence_gap,
    note_density,
    pitch_entropy,
    repetition_score,
)
from .embed import (
    EmbeddingBatch,
    cosine_sim,
    mean_pool_file_embedding,
    nt_xent_pairloss,
    symmetric_loss,
    symmetric_loss_grad,
)
from .midi import MidiDocument, MidiParseError, parse_midi, resolve_notes, ticks_to_ms, write_midi
from .notes import Note, NoteList
from .sampler import (
    PackedSequence,
    SliceTooSmallError,
    ViewPair,
    draw_contrastive_views,
    make_finetune_sequence,
    pack_pretraining_sequences,
    unpack_sequences,
)
from .tokenizer import (
    TokenGrammarError,
    TokenizerConfig,
    TokenSeq,
    Vocabulary,
    build_vocabulary,
    default_vocabulary,
    detokenize,
    elapsed_ms,
    quantize_velocity,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "DedupDecision",
    "EmbeddingBatch",
    "FileMetadata",
    "FilterReport",
    "FilterThresholds",
    "MidiDocument",
    "MidiParseError",
    "Note",
    "NoteList",
    "PackedSequence",
    "SliceTooSmallError",
    "TokenGrammarError",
    "TokenSeq",
    "TokenizerConfig",
    "ViewPair",
    "Vocabulary",
    "apply_quality_filters",
    "build_vocabulary",
    "cosine_sim",
    "dedupe_by_opus",
    "default_vocabulary",
    "detokenize",
    "draw_contrastive_views",
    "duration_entropy",
    "elapsed_ms",
    "jitter_velocity",
    "make_finetune_sequence",
    "max_silence_gap",
    "mean_pool_file_embedding",
    "note_density",
    "nt_xent_pairloss",
    "pack_pretraining_sequences",
    "parse_midi",
    "pitch_entropy",
    "quantize_velocity",
    "random_augment",
    "repetition_score",
    "resolve_notes",
    "stretch_tempo",
    "symmetric_loss",
    "symmetric_loss_grad",
    "ticks_to_ms",
    "tokenize",
    "transpose",
    "unpack_sequences",
    "write_midi",
]
