"""Training loop: linear probing then full fine-tuning, with optional
adversarial attribute removal.

Per step the attribute predictor is updated first on detached inputs, then
its loss is recomputed with gradients attached so the encoder can be pushed
against it.  The note predictor is always updated from the task loss alone;
the encoder stays frozen for the first ``k1`` steps and afterwards follows
task-gradient minus ``lam`` times the attached attribute gradient (for the
adversarial methods), which equals the gradient-reversal route.

Methods: ``erm`` (task loss only), ``al`` (unconditioned adversary),
``ncal_v1``/``ncal_v2`` (adversary conditioned on frame labels / note-head
logits), and ``dind`` (one note predictor per group, no adversary).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensornet as tn
from .frontend import FrontendConfig, logmel_song
from .notelab import FrameLabels, NoteVocab, PostProcConfig, notes_to_frames
from .svtmodel import (AttributePredictor, Encoder, ModelConfig, NotePredictor,
                       Transcriber, attr_loss, dind_predict, labels_to_condition,
                       svt_loss)
from .tensornet import Tensor

METHODS = ("erm", "al", "ncal_v1", "ncal_v2", "dind")
ADVERSARIAL = ("al", "ncal_v1", "ncal_v2")


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    method: str = "erm"
    eta1: float = 1e-3          # encoder learning rate
    eta2: float = 2e-3          # note predictor learning rate
    eta3: float = 1e-3          # attribute predictor learning rate
    lam: float = 1.0            # adversarial balance
    k1: int = 300               # probing steps (encoder frozen)
    k2: int = 1500              # fine-tuning steps
    batch_songs: int = 8
    chunk_s: float = 4.0
    seed: int = 0
    log_every: int = 1
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    postproc: PostProcConfig = field(default_factory=PostProcConfig)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if min(self.eta1, self.eta2, self.eta3) <= 0:
            raise ValueError("learning rates must be positive")
        if self.lam < 0:
            raise ValueError("adversarial balance must be >= 0")
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("step counts must be >= 0")
        if self.batch_songs < 1:
            raise ValueError("batch_songs must be >= 1")
        if self.chunk_s <= 0:
            raise ValueError("chunk_s must be positive")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass
class Batch:
    features: np.ndarray    # (B, T, D)
    labels: FrameLabels     # arrays of shape (B, T)
    attributes: np.ndarray  # (B,)


def _chunk_labels(notes, start_frame: int, n_frames: int, hop_s: float,
                  t0_s: float, vocab: NoteVocab) -> FrameLabels:
    """Labels for the frame window [start_frame, start_frame + n_frames).

    Notes are clipped to the window; a note whose onset falls before the
    window keeps its sustain frames but contributes no onset flag.
    """
    cs = start_frame * hop_s
    window_end = t0_s + (n_frames - 1) * hop_s + hop_s / 2
    clipped, has_onset = [], []
    for note in notes:
        lo = max(note.onset_s - cs, 0.0)
        hi = min(note.offset_s - cs, window_end)
        if hi - lo <= 1e-6:
            continue
        clipped.append(type(note)(lo, hi, note.pitch_midi))
        has_onset.append(note.onset_s >= cs - 1e-9)
    labels = notes_to_frames(clipped, n_frames, hop_s, vocab=vocab, t0_s=t0_s)
    onset = np.zeros(n_frames)
    for note, keep in zip(clipped, has_onset):
        if keep:
            idx = int(np.floor((note.onset_s - t0_s) / hop_s + 0.5))
            onset[min(max(idx, 0), n_frames - 1)] = 1.0
    labels.onset = onset
    return labels


def make_batches(songs, batch_songs: int, chunk_s: float, rng: np.random.Generator,
                 frontend_cfg: FrontendConfig, vocab: NoteVocab, features=None):
    """Endless stream of chunk batches sampled uniformly over songs.

    Chunks are aligned to the frame grid, so a chunk's features are a frame
    slice of the precomputed song features and its labels are rebuilt from
    the time-shifted notes.
    """
    if features is None:
        features = [logmel_song(s, frontend_cfg) for s in songs]
    hop = features[0].hop_s
    t0 = features[0].t0_s
    tc = int(round(chunk_s / hop))
    if tc < 2:
        raise ValueError("chunk_s must span at least two frames")
    counts = [f.n_frames for f in features]
    if min(counts) < tc:
        raise ValueError("chunk longer than the shortest song")
    while True:
        feats, onsets, silences, octaves, pitches, attrs = [], [], [], [], [], []
        for _ in range(batch_songs):
            i = int(rng.integers(0, len(songs)))
            j = int(rng.integers(0, counts[i] - tc + 1))
            feats.append(features[i].frames[j:j + tc])
            labels = _chunk_labels(songs[i].notes, j, tc, hop, t0, vocab)
            onsets.append(labels.onset)
            silences.append(labels.silence)
            octaves.append(labels.octave)
            pitches.append(labels.pitch)
            attrs.append(songs[i].attribute)
        yield Batch(
            features=np.stack(feats),
            labels=FrameLabels(onset=np.stack(onsets), silence=np.stack(silences),
                               octave=np.stack(octaves), pitch=np.stack(pitches)),
            attributes=np.asarray(attrs, dtype=np.int64),
        )


def _grads(module) -> list:
    return [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
            for p in module.params()]


@dataclass
class RunRecord:
    config: TrainConfig
    history: list                       # (step, task_loss, attr_loss)
    encoder: Encoder
    predictors: dict                    # {"main": ...} or {"group0": ..., "group1": ...}
    attr: AttributePredictor | None

    def named_params(self):
        items = [("encoder/" + n, p.data) for n, p in self.encoder.named_params()]
        for key in sorted(self.predictors):
            items += [(f"predictor_{key}/" + n, p.data)
                      for n, p in self.predictors[key].named_params()]
        if self.attr is not None:
            items += [("attr/" + n, p.data) for n, p in self.attr.named_params()]
        return items

    def transcriber(self, dind_mode: str = "calibrated") -> Transcriber:
        if self.config.method == "dind":
            p0, p1 = self.predictors["group0"], self.predictors["group1"]

            def note_fn(z, attribute, _p0=p0, _p1=p1, _m=dind_mode):
                return dind_predict(_p0, _p1, z, _m, attribute)
        else:
            main = self.predictors["main"]

            def note_fn(z, attribute, _p=main):
                return _p(z)
        return Transcriber(encoder=self.encoder, note_fn=note_fn,
                           frontend=self.config.frontend,
                           vocab=self.config.model.vocab,
                           postproc=self.config.postproc)


def build_components(config: TrainConfig):
    """Deterministically initialized encoder/predictor(s)/adversary.

    Each component draws from its own seed stream, so the presence of the
    adversary never shifts the initialization of the others.
    """
    theta_ss, phi_ss, psi_ss = np.random.SeedSequence(config.seed).spawn(3)
    encoder = Encoder(config.frontend.n_mels, config.model,
                      np.random.default_rng(theta_ss))
    vocab = config.model.vocab
    if config.method == "dind":
        s0, s1 = phi_ss.spawn(2)
        predictors = {
            "group0": NotePredictor(encoder.out_dim, vocab, np.random.default_rng(s0)),
            "group1": NotePredictor(encoder.out_dim, vocab, np.random.default_rng(s1)),
        }
    else:
        predictors = {"main": NotePredictor(encoder.out_dim, vocab,
                                            np.random.default_rng(phi_ss))}
    attr = None
    if config.method in ADVERSARIAL:
        variant = "uncond" if config.method == "al" else config.method
        cond_dim = 0 if variant == "uncond" else vocab.onehot_width
        attr = AttributePredictor(encoder.out_dim, variant, cond_dim,
                                  config.model, np.random.default_rng(psi_ss))
    return encoder, predictors, attr


def train(songs, config: TrainConfig) -> RunRecord:
    """Run the two-phase schedule on a training split."""
    config.validate()
    if not songs:
        raise ValueError("empty training split")
    groups = {s.attribute for s in songs}
    if config.method in ADVERSARIAL + ("dind",) and groups != {0, 1}:
        raise ValueError(f"method {config.method} needs both groups in the "
                         f"training split, found {sorted(groups)}")

    encoder, predictors, attr = build_components(config)
    _, batch_ss = np.random.SeedSequence(config.seed).spawn(2)
    batches = make_batches(songs, config.batch_songs, config.chunk_s,
                           np.random.default_rng(batch_ss),
                           config.frontend, config.model.vocab)

    theta_state = tn.adam_init(encoder.params(), config.eta1)
    phi_states = {k: tn.adam_init(p.params(), config.eta2)
                  for k, p in predictors.items()}
    psi_state = tn.adam_init(attr.params(), config.eta3) if attr else None

    vocab = config.model.vocab
    history = []
    for k in range(1, config.k1 + config.k2 + 1):
        batch = next(batches)
        try:
            _train_step(k, batch, config, encoder, predictors, attr,
                        theta_state, phi_states, psi_state, history, vocab)
        except FloatingPointError as exc:
            raise TrainingDiverged(k, str(exc)) from exc

    return RunRecord(config=config, history=history, encoder=encoder,
                     predictors=predictors, attr=attr)


def _train_step(k, batch, config, encoder, predictors, attr,
                theta_state, phi_states, psi_state, history, vocab):
    adversarial = config.method in ADVERSARIAL
    x = Tensor(batch.features)

    if config.method == "dind":
        loss_y, _ = _dind_forward(encoder, predictors, x, batch)
    else:
        z = encoder(x)
        pred = predictors["main"](z)
        loss_y = svt_loss(pred, batch.labels)

    loss_a_value = float("nan")
    loss_a = None
    if adversarial:
        if config.method == "ncal_v1":
            cond = Tensor(labels_to_condition(batch.labels, vocab))
            cond_detached = cond
        elif config.method == "ncal_v2":
            cond = pred.full
            cond_detached = pred.full.detach()
        else:
            cond = cond_detached = None
        logits_detached = attr(z.detach(), cond_detached)
        loss_a_detached = attr_loss(logits_detached, batch.attributes)
        if not np.isfinite(loss_a_detached.data):
            raise TrainingDiverged(k, "attribute loss")
        attr.zero_grad()
        loss_a_detached.backward()
        tn.adam_step(attr.params(), _grads(attr), psi_state)
        # attribute loss seen by the encoder, with the updated adversary
        logits = attr(z, cond)
        loss_a = attr_loss(logits, batch.attributes)
        loss_a_value = float(loss_a.data)

    if not np.isfinite(loss_y.data):
        raise TrainingDiverged(k, "task loss")

    encoder.zero_grad()
    for p in predictors.values():
        p.zero_grad()
    loss_y.backward()
    phi_grads = {key: _grads(p) for key, p in predictors.items()}
    theta_grads = _grads(encoder)
    if adversarial and k > config.k1:
        encoder.zero_grad()
        loss_a.backward()
        theta_grads = [gy - config.lam * ga
                       for gy, ga in zip(theta_grads, _grads(encoder))]
    for key, p in predictors.items():
        tn.adam_step(p.params(), phi_grads[key], phi_states[key])
    if k > config.k1:
        tn.adam_step(encoder.params(), theta_grads, theta_state)

    if k % config.log_every == 0 or k == config.k1 + config.k2:
        history.append((k, float(loss_y.data), loss_a_value))


def _dind_forward(encoder, predictors, x: Tensor, batch: Batch):
    """Task loss with each chunk routed through its own group head."""
    total = None
    n = batch.attributes.shape[0]
    preds = {}
    for a, key in ((0, "group0"), (1, "group1")):
        mask = batch.attributes == a
        if not mask.any():
            continue
        idx = np.flatnonzero(mask)
        xa = Tensor(batch.features[idx])
        za = encoder(xa)
        pa = predictors[key](za)
        preds[key] = pa
        labels = FrameLabels(onset=batch.labels.onset[idx],
                             silence=batch.labels.silence[idx],
                             octave=batch.labels.octave[idx],
                             pitch=batch.labels.pitch[idx])
        term = svt_loss(pa, labels) * (len(idx) / n)
        total = term if total is None else total + term
    return total, preds


# ---------------------------------------------------------------------------
# attribute probing of frozen features
# ---------------------------------------------------------------------------

def feature_fn_for(encoder: Encoder, frontend_cfg: FrontendConfig):
    """Song -> (T, D) latent feature matrix under a frozen encoder."""
    def fn(song):
        feats = logmel_song(song, frontend_cfg)
        return encoder(Tensor(feats.frames)).data
    return fn


def probe_attribute_accuracy(feature_fn, songs, seed: int = 0, steps: int = 800,
                             lr: float = 1e-2, embed_dim: int = 64,
                             hidden_dim: int = 64) -> float:
    """How recoverable the group attribute is from frozen features.

    Trains a fresh unconditioned attribute predictor on half the songs
    (alternating within each group) and reports song-level accuracy on the
    other half, where a song's prediction is the majority vote over its
    frames.  Features are standardized on the probe-train frames so the
    probe behaves the same across feature scales.
    """
    by_group = {0: [], 1: []}
    for song in songs:
        by_group[song.attribute].append(song)
    train_songs, held_songs = [], []
    for group in (0, 1):
        train_songs += by_group[group][0::2]
        held_songs += by_group[group][1::2]
    if not train_songs or not held_songs:
        raise ValueError("degenerate split: need held-out songs in both halves")

    feats = {id(s): np.asarray(feature_fn(s), dtype=np.float64) for s in songs}
    x_train = np.concatenate([feats[id(s)] for s in train_songs])
    y_train = np.concatenate([np.full(feats[id(s)].shape[0], float(s.attribute))
                              for s in train_songs])
    mean = x_train.mean(axis=0)
    std = np.maximum(x_train.std(axis=0), 1e-6)

    cfg = ModelConfig(attr_embed_dim=embed_dim, attr_hidden_dim=hidden_dim)
    probe = AttributePredictor(x_train.shape[1], "uncond", 0, cfg,
                               np.random.default_rng(np.random.SeedSequence(seed)))
    state = tn.adam_init(probe.params(), lr)
    x = Tensor((x_train - mean) / std)
    target = y_train[:, None]
    for _ in range(steps):
        loss = tn.bce_with_logits(probe(x), target)
        probe.zero_grad()
        loss.backward()
        tn.adam_step(probe.params(), _grads(probe), state)

    hits = 0
    for song in held_songs:
        logits = probe(Tensor((feats[id(song)] - mean) / std)).data.reshape(-1)
        vote = 1 if np.mean(logits > 0.0) > 0.5 else 0
        hits += int(vote == song.attribute)
    return hits / len(held_songs)
