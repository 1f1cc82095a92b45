"""Networks and losses for note transcription with an attribute adversary.

Three parameter groups: a frame-aligned convolutional encoder, a single
linear note predictor whose output splits into onset/silence/octave/pitch
heads, and a per-frame attribute predictor that can be conditioned on frame
labels (variant ``ncal_v1``), on the note-head logits (``ncal_v2``), or on
nothing (``uncond``).  A two-head note-predictor pair supports
group-independent training with calibrated or miscalibrated inference.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensornet as tn
from .frontend import FeatureSequence, FrontendConfig, logmel_song
from .notelab import (PITCH_CLASSES, CORPUS_VOCAB, FrameLabels, NoteVocab,
                      PostProcConfig, frames_to_notes)
from .tensornet import Tensor

ATTR_VARIANTS = ("uncond", "ncal_v1", "ncal_v2")


@dataclass
class ModelConfig:
    conv_channels: tuple = (48, 48)
    hidden_dim: int = 64
    latent_dim: int = 64
    attr_embed_dim: int = 64
    attr_hidden_dim: int = 64
    vocab: NoteVocab = field(default_factory=lambda: CORPUS_VOCAB)


def _init(rng: np.random.Generator, *shape) -> Tensor:
    fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
    fan_out = shape[-1]
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def _zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class _Module:
    """Ordered (name, tensor) parameter bag."""

    def named_params(self):
        return list(self._params)

    def params(self):
        return [p for _, p in self._params]

    def zero_grad(self):
        for _, p in self._params:
            p.zero_grad()

    def load_params(self, named):
        table = dict(named)
        for name, p in self._params:
            arr = np.asarray(table[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()


class Encoder(_Module):
    """conv5-relu-conv5-relu-ff-relu-ff; output frame-aligned with input."""

    KERNEL = 5

    def __init__(self, in_dim: int, cfg: ModelConfig, rng: np.random.Generator):
        c1, c2 = cfg.conv_channels
        self.k1 = _init(rng, self.KERNEL, in_dim, c1)
        self.b1 = _zeros(c1)
        self.k2 = _init(rng, self.KERNEL, c1, c2)
        self.b2 = _zeros(c2)
        self.w3 = _init(rng, c2, cfg.hidden_dim)
        self.b3 = _zeros(cfg.hidden_dim)
        self.w4 = _init(rng, cfg.hidden_dim, cfg.latent_dim)
        self.b4 = _zeros(cfg.latent_dim)
        self.out_dim = cfg.latent_dim
        self._params = [("conv1_k", self.k1), ("conv1_b", self.b1),
                        ("conv2_k", self.k2), ("conv2_b", self.b2),
                        ("ff1_w", self.w3), ("ff1_b", self.b3),
                        ("ff2_w", self.w4), ("ff2_b", self.b4)]

    def __call__(self, feats: Tensor) -> Tensor:
        h = tn.relu(tn.conv1d(feats, self.k1, self.b1))
        h = tn.relu(tn.conv1d(h, self.k2, self.b2))
        h = tn.relu(tn.linear(h, self.w3, self.b3))
        return tn.linear(h, self.w4, self.b4)


@dataclass
class FramePredictions:
    """Per-frame logits; leading shape (T,) batched as (B, T)."""
    onset: Tensor     # (..., 1)
    silence: Tensor   # (..., 1)
    octave: Tensor    # (..., n_octaves + 1)
    pitch: Tensor     # (..., 13)
    full: Tensor      # concatenation of the four heads, in order


class NotePredictor(_Module):
    """Single linear layer, output partitioned into the four heads."""

    def __init__(self, in_dim: int, vocab: NoteVocab, rng: np.random.Generator):
        self.vocab = vocab
        self.out_dim = 2 + (vocab.n_octaves + 1) + (PITCH_CLASSES + 1)
        self.w = _init(rng, in_dim, self.out_dim)
        self.b = _zeros(self.out_dim)
        self._params = [("w", self.w), ("b", self.b)]

    def __call__(self, z: Tensor) -> FramePredictions:
        full = tn.linear(z, self.w, self.b)
        n_oct = self.vocab.n_octaves + 1
        return FramePredictions(
            onset=tn.slice_last(full, 0, 1),
            silence=tn.slice_last(full, 1, 2),
            octave=tn.slice_last(full, 2, 2 + n_oct),
            pitch=tn.slice_last(full, 2 + n_oct, self.out_dim),
            full=full,
        )


class AttributePredictor(_Module):
    """Per-frame binary attribute logits from latent features + condition."""

    def __init__(self, in_dim: int, variant: str, cond_dim: int,
                 cfg: ModelConfig, rng: np.random.Generator):
        if variant not in ATTR_VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if variant == "uncond" and cond_dim:
            raise ValueError("unconditioned variant takes no condition input")
        if variant != "uncond" and cond_dim <= 0:
            raise ValueError(f"variant {variant} needs a positive condition width")
        self.variant = variant
        self.cond_dim = cond_dim
        e = cfg.attr_embed_dim
        h = cfg.attr_hidden_dim
        self.wz = _init(rng, in_dim, e)
        self.bz = _zeros(e)
        self._params = [("embed_z_w", self.wz), ("embed_z_b", self.bz)]
        joint = e
        if variant != "uncond":
            self.wc = _init(rng, cond_dim, e)
            self.bc = _zeros(e)
            self._params += [("embed_c_w", self.wc), ("embed_c_b", self.bc)]
            joint += e
        self.w1 = _init(rng, joint, h)
        self.b1 = _zeros(h)
        self.w2 = _init(rng, h, h)
        self.b2 = _zeros(h)
        self.wo = _init(rng, h, 1)
        self.bo = _zeros(1)
        self._params += [("hidden1_w", self.w1), ("hidden1_b", self.b1),
                         ("hidden2_w", self.w2), ("hidden2_b", self.b2),
                         ("out_w", self.wo), ("out_b", self.bo)]

    def __call__(self, z: Tensor, condition: Tensor | None = None) -> Tensor:
        if self.variant == "uncond":
            if condition is not None:
                raise ValueError("unconditioned variant must not receive a condition")
            h = tn.linear(z, self.wz, self.bz)
        else:
            if condition is None:
                raise ValueError(f"variant {self.variant} requires a condition")
            if condition.shape[-1] != self.cond_dim:
                raise ValueError(f"condition width {condition.shape[-1]} != {self.cond_dim}")
            h = tn.concat([tn.linear(z, self.wz, self.bz),
                           tn.linear(condition, self.wc, self.bc)])
        h = tn.relu(tn.linear(h, self.w1, self.b1))
        h = tn.relu(tn.linear(h, self.w2, self.b2))
        return tn.linear(h, self.wo, self.bo)


def encode(encoder: Encoder, feats) -> Tensor:
    """Latent features of a FeatureSequence (or raw frame matrix)."""
    frames = feats.frames if isinstance(feats, FeatureSequence) else feats
    x = frames if isinstance(frames, Tensor) else Tensor(frames)
    return encoder(x)


def predict_notes(predictor: NotePredictor, z: Tensor) -> FramePredictions:
    return predictor(z)


def predict_attribute(attr: AttributePredictor, z: Tensor,
                      condition: Tensor | None = None) -> Tensor:
    return attr(z, condition)


def svt_loss(pred: FramePredictions, labels: FrameLabels) -> Tensor:
    """Frame-averaged BCE on onset and silence plus CE on octave and pitch."""
    t_pred = pred.onset.shape[:-1]
    if labels.onset.shape != t_pred:
        raise ValueError(f"labels shape {labels.onset.shape} != predictions {t_pred}")
    return (tn.bce_with_logits(pred.onset, labels.onset[..., None])
            + tn.bce_with_logits(pred.silence, labels.silence[..., None])
            + tn.ce_with_logits(pred.octave, labels.octave)
            + tn.ce_with_logits(pred.pitch, labels.pitch))


def attr_loss(attr_logits: Tensor, attribute) -> Tensor:
    """Frame-averaged BCE of attribute logits against the group label(s).

    ``attribute`` is a scalar 0/1 or, for batched (B, T, 1) logits, an array
    of per-chunk labels of shape (B,).
    """
    a = np.asarray(attribute, dtype=np.float64)
    if a.ndim == 0:
        target = np.broadcast_to(a, attr_logits.shape)
    elif a.ndim == 1 and attr_logits.ndim == 3 and a.shape[0] == attr_logits.shape[0]:
        target = np.broadcast_to(a[:, None, None], attr_logits.shape)
    else:
        raise ValueError(f"attribute shape {a.shape} incompatible with logits "
                         f"{attr_logits.shape}")
    return tn.bce_with_logits(attr_logits, target)


def labels_to_condition(labels: FrameLabels, vocab: NoteVocab) -> np.ndarray:
    """One-hot frame labels as the conditioning input (variant ncal_v1)."""
    lead = labels.onset.shape
    n_oct = vocab.n_octaves + 1
    octave = np.zeros(lead + (n_oct,))
    np.put_along_axis(octave, labels.octave.astype(int)[..., None], 1.0, axis=-1)
    pitch = np.zeros(lead + (PITCH_CLASSES + 1,))
    np.put_along_axis(pitch, labels.pitch.astype(int)[..., None], 1.0, axis=-1)
    return np.concatenate([labels.onset[..., None], labels.silence[..., None],
                           octave, pitch], axis=-1)


# ---------------------------------------------------------------------------
# group-independent note predictors
# ---------------------------------------------------------------------------

def _prob_merge_binary(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    from .notelab import _sigmoid
    p = 0.5 * (_sigmoid(a) + _sigmoid(b))
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return np.log(p) - np.log1p(-p)


def _prob_merge_categorical(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    def softmax(x):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    p = 0.5 * (softmax(a) + softmax(b))
    return np.log(np.clip(p, 1e-300, None))


def dind_predict(head_group0: NotePredictor, head_group1: NotePredictor,
                 z: Tensor, mode: str, attribute: int | None = None) -> FramePredictions:
    """Combine the two group heads at inference time.

    ``calibrated`` selects the head of the true attribute; ``miscalibrated``
    averages the two heads' per-class probabilities and returns log-space
    logits (softmax of the categorical output reproduces the averaged
    probabilities exactly).
    """
    if head_group0.out_dim != head_group1.out_dim:
        raise ValueError("group heads disagree on output width")
    if mode == "calibrated":
        if attribute not in (0, 1):
            raise ValueError("calibrated inference requires the attribute label")
        return (head_group0 if attribute == 0 else head_group1)(z)
    if mode != "miscalibrated":
        raise ValueError(f"unknown inference mode {mode!r}")
    p0 = head_group0(z)
    p1 = head_group1(z)
    onset = Tensor(_prob_merge_binary(p0.onset.data, p1.onset.data))
    silence = Tensor(_prob_merge_binary(p0.silence.data, p1.silence.data))
    octave = Tensor(_prob_merge_categorical(p0.octave.data, p1.octave.data))
    pitch = Tensor(_prob_merge_categorical(p0.pitch.data, p1.pitch.data))
    full = Tensor(np.concatenate([onset.data, silence.data, octave.data, pitch.data],
                                 axis=-1))
    return FramePredictions(onset=onset, silence=silence, octave=octave,
                            pitch=pitch, full=full)


# ---------------------------------------------------------------------------
# inference bundle
# ---------------------------------------------------------------------------

@dataclass
class Transcriber:
    """Everything needed to turn a Song into note events."""
    encoder: Encoder
    note_fn: object                 # callable (z, attribute) -> FramePredictions
    frontend: FrontendConfig
    vocab: NoteVocab
    postproc: PostProcConfig

    def transcribe(self, song):
        feats = logmel_song(song, self.frontend)
        z = encode(self.encoder, Tensor(feats.frames))
        pred = self.note_fn(z, song.attribute)
        return frames_to_notes(pred, feats.hop_s, self.postproc,
                               vocab=self.vocab, t0_s=feats.t0_s)
