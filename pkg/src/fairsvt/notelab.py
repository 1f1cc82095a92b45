"""Codec between note events and frame-level targets.

Labels per frame: an onset flag O, a silence flag S, an octave class V (last
index = silence) and a pitch class P (12 chroma classes + silence).  The
reverse direction turns frame logits back into note events via thresholded
onset peaks, silence tracking, and majority-vote pitch."""
from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .corpus import NoteEvent, validate_notes

PITCH_CLASSES = 12


@dataclass(frozen=True)
class NoteVocab:
    """Octave window of the label space.

    `base_octave` is the lowest musical octave given a class index; MIDI 60
    (C4) sits in musical octave 4.  Index `n_octaves` is the silence octave
    class, index 12 the silence pitch class.
    """
    base_octave: int = 0
    n_octaves: int = 9

    @property
    def silence_octave(self) -> int:
        return self.n_octaves

    @property
    def silence_pitch(self) -> int:
        return PITCH_CLASSES

    @property
    def onehot_width(self) -> int:
        # onset flag + silence flag + octave classes + pitch classes
        return 2 + (self.n_octaves + 1) + (PITCH_CLASSES + 1)

    def encode(self, pitch_midi: int):
        octave, pclass = midi_to_classes(pitch_midi)
        shifted = octave - self.base_octave
        if not (0 <= shifted < self.n_octaves):
            raise ValueError(
                f"pitch {pitch_midi} outside octave window "
                f"[{self.base_octave}, {self.base_octave + self.n_octaves})")
        return shifted, pclass

    def decode(self, octave_class: int, pitch_class: int) -> int:
        if not (0 <= octave_class < self.n_octaves and 0 <= pitch_class < PITCH_CLASSES):
            raise ValueError("cannot decode a silence class to a pitch")
        return 12 * (self.base_octave + octave_class + 1) + pitch_class


# octave window used throughout the synthetic pipeline (MIDI 36..95 with the
# default corpus range 45..79 well inside)
CORPUS_VOCAB = NoteVocab(base_octave=2, n_octaves=5)
DEFAULT_VOCAB = NoteVocab()


def midi_to_classes(pitch_midi: int):
    """(musical octave, pitch class) of a MIDI note; C4 = 60 -> (4, 0)."""
    m = int(pitch_midi)
    if not (0 <= m <= 127):
        raise ValueError(f"pitch {pitch_midi} outside MIDI range")
    return m // 12 - 1, m % 12


@dataclass
class FrameLabels:
    """Per-frame targets; arrays share the leading shape (T,) or (B, T)."""
    onset: np.ndarray    # binary
    silence: np.ndarray  # binary
    octave: np.ndarray   # class indices in [0, n_octaves]
    pitch: np.ndarray    # class indices in [0, 12]

    def __post_init__(self):
        shapes = {a.shape for a in (self.onset, self.silence, self.octave, self.pitch)}
        if len(shapes) != 1:
            raise ValueError(f"label arrays disagree on shape: {shapes}")

    @property
    def n_frames(self) -> int:
        return self.onset.shape[-1]


@dataclass
class PostProcConfig:
    onset_threshold: float = 0.5
    silence_threshold: float = 0.5
    min_note_frames: int = 3
    onset_merge_frames: int = 2

    def __post_init__(self):
        if not (0.0 < self.onset_threshold < 1.0 and 0.0 < self.silence_threshold < 1.0):
            raise ValueError("thresholds must lie in (0, 1)")
        if self.min_note_frames < 1:
            raise ValueError("min_note_frames must be >= 1")
        if self.onset_merge_frames < 0:
            raise ValueError("onset_merge_frames must be >= 0")


_EPS = 1e-9


def _nearest_frame(time_s: float, hop_s: float, t0_s: float, n_frames: int) -> int:
    idx = int(np.floor((time_s - t0_s) / hop_s + 0.5))
    return min(max(idx, 0), n_frames - 1)


def notes_to_frames(notes, n_frames: int, hop_s: float,
                    vocab: NoteVocab = DEFAULT_VOCAB, t0_s: float = 0.0) -> FrameLabels:
    """Mark onset/silence/octave/pitch targets on the frame grid.

    Frame t has center t0_s + t*hop_s.  A note voices the frames whose center
    lies in [onset, offset); its single onset flag goes to the frame whose
    center is nearest the onset (that frame also receives the note's pitch
    classes, so an onset is never marked on a silent frame).
    """
    validate_notes(notes)
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if notes and notes[-1].offset_s > t0_s + n_frames * hop_s + _EPS:
        raise ValueError("frame count inconsistent with the last note offset")
    onset = np.zeros(n_frames)
    silence = np.ones(n_frames)
    octave = np.full(n_frames, vocab.silence_octave, dtype=np.int64)
    pitch = np.full(n_frames, vocab.silence_pitch, dtype=np.int64)
    for note in notes:
        v, p = vocab.encode(note.pitch_midi)
        first = int(np.ceil((note.onset_s - t0_s) / hop_s - _EPS))
        last = int(np.ceil((note.offset_s - t0_s) / hop_s - _EPS)) - 1
        first = max(first, 0)
        last = min(last, n_frames - 1)
        span = [] if last < first else [slice(first, last + 1)]
        onset_idx = _nearest_frame(note.onset_s, hop_s, t0_s, n_frames)
        span.append(slice(onset_idx, onset_idx + 1))
        for sl in span:
            silence[sl] = 0.0
            octave[sl] = v
            pitch[sl] = p
        onset[onset_idx] = 1.0
    return FrameLabels(onset=onset, silence=silence, octave=octave, pitch=pitch)


def one_hot_logits(labels: FrameLabels, vocab: NoteVocab = DEFAULT_VOCAB,
                   magnitude: float = 12.0):
    """Saturated logits that reproduce the given labels (round-trip probe)."""
    t = labels.n_frames
    onset = np.where(labels.onset > 0.5, magnitude, -magnitude).reshape(t, 1)
    silence = np.where(labels.silence > 0.5, magnitude, -magnitude).reshape(t, 1)
    octave = np.full((t, vocab.n_octaves + 1), -magnitude)
    octave[np.arange(t), labels.octave.astype(int)] = magnitude
    pitch = np.full((t, PITCH_CLASSES + 1), -magnitude)
    pitch[np.arange(t), labels.pitch.astype(int)] = magnitude
    return SimpleNamespace(onset=onset, silence=silence, octave=octave, pitch=pitch)


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def frames_to_notes(pred, hop_s: float, cfg: PostProcConfig,
                    vocab: NoteVocab = DEFAULT_VOCAB, t0_s: float = 0.0):
    """Decode frame logits into sorted, non-overlapping note events.

    `pred` carries per-frame logits in attributes onset/silence/octave/pitch
    (numpy arrays or graph tensors).  Onset candidates are local maxima of
    the onset probability above threshold; a note runs until the next
    candidate or the first silent frame; its pitch is the majority vote of
    the voiced frames (ties resolved toward the earlier-observed pitch).
    """
    o = _sigmoid(_as_array(pred.onset).reshape(-1))
    s = _sigmoid(_as_array(pred.silence).reshape(-1))
    octave_logits = _as_array(pred.octave)
    pitch_logits = _as_array(pred.pitch)
    t = o.shape[0]
    if octave_logits.shape[:1] != (t,) or pitch_logits.shape[:1] != (t,):
        raise ValueError("prediction heads disagree on frame count")
    v_cls = octave_logits.argmax(axis=-1)
    p_cls = pitch_logits.argmax(axis=-1)

    w = cfg.onset_merge_frames
    candidates = [i for i in range(t)
                  if o[i] > cfg.onset_threshold
                  and o[i] >= o[max(0, i - w):i + w + 1].max()]
    silent = s > cfg.silence_threshold

    notes = []
    for idx, start in enumerate(candidates):
        stop = candidates[idx + 1] if idx + 1 < len(candidates) else t
        for f in range(start + 1, stop):
            if silent[f]:
                stop = f
                break
        if stop - start < cfg.min_note_frames:
            continue
        votes = {}
        order = {}
        for f in range(start, stop):
            if v_cls[f] >= vocab.n_octaves or p_cls[f] >= PITCH_CLASSES:
                continue
            midi = vocab.decode(int(v_cls[f]), int(p_cls[f]))
            votes[midi] = votes.get(midi, 0) + 1
            order.setdefault(midi, len(order))
        if not votes:
            continue
        best = max(votes, key=lambda m: (votes[m], -order[m]))
        notes.append(NoteEvent(t0_s + start * hop_s, t0_s + stop * hop_s, best))
    return notes
