"""Synthetic singing corpus with two demographic groups.

The two groups (attribute 0 and 1) differ in pitch register and in harmonic
timbre: group 0 sings higher with a fast-decaying harmonic stack, group 1
sings lower with a dense, slowly decaying stack.  Both knobs are exposed so
either pathway of the group gap can be studied in isolation.

A corpus directory holds ``manifest.jsonl`` (one record per song) and
``audio/<id>.wav`` (16 kHz mono PCM16).  Samples are quantized to the int16
grid at synthesis time, so write followed by read is bit-exact.
"""
from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GROUP_HIGH = 0  # higher-pitched group (attribute A = 0)
GROUP_LOW = 1   # lower-pitched group (attribute A = 1)

_INT16_SCALE = 32767.0


class CorpusError(ValueError):
    """Invalid corpus configuration or on-disk corpus data."""


def midi_to_hz(pitch_midi: float) -> float:
    """Equal-temperament frequency of a (possibly fractional) MIDI note."""
    m = float(pitch_midi)
    if not np.isfinite(m):
        raise ValueError("pitch must be finite")
    return 440.0 * 2.0 ** ((m - 69.0) / 12.0)


@dataclass(frozen=True, order=True)
class NoteEvent:
    """One sung note: onset/offset in seconds, pitch as integer MIDI."""
    onset_s: float
    offset_s: float
    pitch_midi: int

    def __post_init__(self):
        if not (np.isfinite(self.onset_s) and np.isfinite(self.offset_s)):
            raise ValueError("note times must be finite")
        if self.onset_s < 0 or self.offset_s <= self.onset_s:
            raise ValueError(f"bad note interval [{self.onset_s}, {self.offset_s}]")
        if not (0 <= int(self.pitch_midi) <= 127):
            raise ValueError(f"pitch {self.pitch_midi} outside MIDI range")

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


def validate_notes(notes) -> None:
    """Require sorted, non-overlapping notes."""
    for prev, cur in zip(notes, notes[1:]):
        if cur.onset_s < prev.onset_s:
            raise CorpusError("notes must be sorted by onset")
        if cur.onset_s < prev.offset_s - 1e-9:
            raise CorpusError("notes must not overlap")


@dataclass
class Song:
    id: str
    attribute: int
    sample_rate_hz: int
    samples: np.ndarray          # float64 mono in [-1, 1], on the int16 grid
    notes: list                  # list[NoteEvent]

    def __post_init__(self):
        if self.attribute not in (0, 1):
            raise CorpusError(f"attribute must be 0 or 1, got {self.attribute!r}")
        if self.sample_rate_hz <= 0:
            raise CorpusError("sample rate must be positive")
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if not np.all(np.isfinite(self.samples)):
            raise CorpusError("samples must be finite")
        if self.samples.size and (self.samples.min() < -1.0 or self.samples.max() > 1.0):
            raise CorpusError("samples must lie in [-1, 1]")
        validate_notes(self.notes)
        dur = self.duration_s
        if self.notes and self.notes[-1].offset_s > dur + 1e-9:
            raise CorpusError("note offsets must not exceed the audio duration")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class Corpus:
    train: list
    test: list

    def songs(self):
        return list(self.train) + list(self.test)


@dataclass
class CorpusConfig:
    """Generator knobs; per-group fields are indexed by the attribute value.

    Group pitch supports must overlap while keeping distinct means, otherwise
    the group gap degenerates into a trivially separable register split.
    """
    n_songs_per_group: int = 12            # per split
    notes_per_song: tuple = (12, 20)
    pitch_center_midi: tuple = (67.0, 55.0)
    pitch_spread_midi: tuple = (3.0, 3.0)
    pitch_min_midi: int = 45
    pitch_max_midi: int = 79
    harmonic_profile: tuple = (
        (1.0, 0.42, 0.18, 0.07, 0.025),
        (1.0, 0.95, 0.85, 0.7, 0.55, 0.4, 0.28, 0.18),
    )
    vibrato_cents: float = 22.0
    vibrato_hz: float = 5.5
    noise_floor: float = 0.004
    tempo_notes_per_s: tuple = (1.6, 2.6)  # reciprocal gives sung-note duration
    gap_s: tuple = (0.08, 0.42)            # rest after each note
    lead_s: tuple = (0.12, 0.3)
    tail_s: float = 0.25
    sample_rate_hz: int = 16000
    seed: int = 0

    def validate(self) -> None:
        if self.n_songs_per_group < 1:
            raise CorpusError("need at least one song per group")
        lo, hi = self.notes_per_song
        if not (1 <= lo <= hi):
            raise CorpusError("notes_per_song range is degenerate")
        if self.pitch_min_midi > self.pitch_max_midi:
            raise CorpusError("empty pitch support")
        if abs(self.pitch_center_midi[0] - self.pitch_center_midi[1]) < 1e-9:
            raise CorpusError("group pitch centers must differ")
        for spread in self.pitch_spread_midi:
            if spread <= 0:
                raise CorpusError("pitch spread must be positive")
        for profile in self.harmonic_profile:
            amps = np.asarray(profile, dtype=np.float64)
            if amps.size == 0 or np.any(amps < 0):
                raise CorpusError("harmonic amplitudes must be non-negative and non-empty")
            if amps[0] < amps.max():
                raise CorpusError("fundamental must be the strongest harmonic")
        if self.noise_floor < 0 or self.vibrato_cents < 0 or self.vibrato_hz < 0:
            raise CorpusError("modulation/noise parameters must be non-negative")
        t_lo, t_hi = self.tempo_notes_per_s
        if not (0 < t_lo <= t_hi):
            raise CorpusError("tempo range is degenerate")
        g_lo, g_hi = self.gap_s
        if not (0 <= g_lo <= g_hi):
            raise CorpusError("gap range is degenerate")
        if self.sample_rate_hz <= 0:
            raise CorpusError("sample rate must be positive")


@dataclass(frozen=True)
class _RhythmPlan:
    lead_s: float
    durations_s: tuple
    gaps_s: tuple


def _draw_rhythm(config: CorpusConfig, rng: np.random.Generator) -> _RhythmPlan:
    n = int(rng.integers(config.notes_per_song[0], config.notes_per_song[1] + 1))
    t_lo, t_hi = config.tempo_notes_per_s
    durations = rng.uniform(1.0 / t_hi, 1.0 / t_lo, size=n)
    gaps = rng.uniform(config.gap_s[0], config.gap_s[1], size=n)
    lead = float(rng.uniform(config.lead_s[0], config.lead_s[1]))
    return _RhythmPlan(lead, tuple(durations), tuple(gaps))


def _render_note(pitch_midi: int, n_samples: int, sr: int, profile,
                 vib_cents: float, vib_hz: float, vib_phase: float,
                 harmonic_phases: np.ndarray, gain: float) -> np.ndarray:
    t = np.arange(n_samples) / sr
    f0 = midi_to_hz(pitch_midi)
    if vib_cents > 0 and vib_hz > 0:
        freq = f0 * 2.0 ** ((vib_cents / 1200.0) * np.sin(2 * np.pi * vib_hz * t + vib_phase))
    else:
        freq = np.full(n_samples, f0)
    phase = 2 * np.pi * np.cumsum(freq) / sr
    amps = np.asarray(profile, dtype=np.float64)
    out = np.zeros(n_samples)
    f_max = freq.max()
    for h, amp in enumerate(amps, start=1):
        if h * f_max >= 0.45 * sr:
            break
        out += amp * np.sin(h * phase + harmonic_phases[h - 1])
    # equal loudness across timbres: scale to the requested RMS level
    out *= gain / np.sqrt(0.5 * np.sum(amps ** 2))
    attack = min(int(0.012 * sr), n_samples // 3)
    release = min(int(0.02 * sr), n_samples // 3)
    if attack > 0:
        out[:attack] *= np.linspace(0.0, 1.0, attack, endpoint=False)
    if release > 0:
        out[-release:] *= np.linspace(1.0, 0.0, release)
    return out


def _pink_noise(n_samples: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS 1/f background noise (flat below 40 Hz), as in vocal-room hum."""
    white = rng.standard_normal(n_samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sr)
    spectrum *= 1.0 / np.sqrt(np.maximum(freqs, 40.0))
    pink = np.fft.irfft(spectrum, n_samples)
    return pink / pink.std()


def sample_song(config: CorpusConfig, attribute: int, rng: np.random.Generator,
                song_id: str = "song", rhythm: _RhythmPlan | None = None) -> Song:
    """Draw one song: group-dependent pitches over additive harmonic notes.

    Passing ``rhythm`` reuses a timing plan drawn elsewhere (used to balance
    split durations across groups); all other draws stay song-specific.
    """
    config.validate()
    if attribute not in (0, 1):
        raise CorpusError(f"attribute must be 0 or 1, got {attribute!r}")
    plan = rhythm if rhythm is not None else _draw_rhythm(config, rng)
    n = len(plan.durations_s)
    center = config.pitch_center_midi[attribute]
    spread = config.pitch_spread_midi[attribute]
    pitches = np.clip(np.rint(rng.normal(center, spread, size=n)),
                      config.pitch_min_midi, config.pitch_max_midi).astype(int)
    gains = rng.uniform(0.12, 0.24, size=n)
    vib_phases = rng.uniform(0.0, 2 * np.pi, size=n)
    profile = config.harmonic_profile[attribute]
    harm_phases = rng.uniform(0.0, 2 * np.pi, size=(n, len(profile)))

    notes, cursor = [], plan.lead_s
    for dur, gap, pitch in zip(plan.durations_s, plan.gaps_s, pitches):
        notes.append(NoteEvent(cursor, cursor + dur, int(pitch)))
        cursor += dur + gap
    sr = config.sample_rate_hz
    total = int(round((cursor + config.tail_s) * sr))
    samples = np.zeros(total)
    for note, gain, phase, hph in zip(notes, gains, vib_phases, harm_phases):
        a = int(round(note.onset_s * sr))
        b = int(round(note.offset_s * sr))
        samples[a:b] += _render_note(note.pitch_midi, b - a, sr, profile,
                                     config.vibrato_cents, config.vibrato_hz,
                                     phase, hph, gain)
    if config.noise_floor > 0:
        samples += config.noise_floor * _pink_noise(total, sr, rng)
    samples = np.clip(samples, -1.0, 1.0)
    samples = np.round(samples * _INT16_SCALE) / _INT16_SCALE
    return Song(song_id, attribute, sr, samples, notes)


def build_corpus(config: CorpusConfig) -> Corpus:
    """Generate train and test splits with both groups in each.

    Test-split songs of group 1 reuse the rhythm plans of group 0, which pins
    the per-group total durations equal (the gap measurement then compares
    equal amounts of audio).  Train-split songs are fully independent.
    """
    config.validate()
    if config.n_songs_per_group < 2:
        raise CorpusError("need >= 2 songs per group per split")
    root = np.random.SeedSequence(config.seed)
    train_ss, test_ss = root.spawn(2)

    train = []
    for attribute, ss in zip((GROUP_HIGH, GROUP_LOW), train_ss.spawn(2)):
        for i, child in enumerate(ss.spawn(config.n_songs_per_group)):
            rng = np.random.default_rng(child)
            train.append(sample_song(config, attribute, rng,
                                     song_id=f"train-g{attribute}-{i:03d}"))

    test, plans = [], []
    ss_high, ss_low = test_ss.spawn(2)
    for i, child in enumerate(ss_high.spawn(config.n_songs_per_group)):
        rng = np.random.default_rng(child)
        plan = _draw_rhythm(config, rng)
        plans.append(plan)
        test.append(sample_song(config, GROUP_HIGH, rng,
                                song_id=f"test-g0-{i:03d}", rhythm=plan))
    for i, child in enumerate(ss_low.spawn(config.n_songs_per_group)):
        rng = np.random.default_rng(child)
        test.append(sample_song(config, GROUP_LOW, rng,
                                song_id=f"test-g1-{i:03d}", rhythm=plans[i]))
    return Corpus(train=train, test=test)


# ---------------------------------------------------------------------------
# disk layout: manifest.jsonl + audio/<id>.wav (PCM16 LE mono)
# ---------------------------------------------------------------------------

def _write_wav(path: Path, samples: np.ndarray, sr: int) -> None:
    pcm = np.round(samples * _INT16_SCALE).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sr)
        fh.writeframes(pcm.tobytes())


def _read_wav(path: Path):
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise CorpusError(f"{path}: expected mono 16-bit PCM")
        sr = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _INT16_SCALE
    return samples, sr


def write_corpus(corpus: Corpus, directory) -> None:
    directory = Path(directory)
    (directory / "audio").mkdir(parents=True, exist_ok=True)
    with open(directory / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for split, songs in (("train", corpus.train), ("test", corpus.test)):
            for song in songs:
                rel = f"audio/{song.id}.wav"
                _write_wav(directory / rel, song.samples, song.sample_rate_hz)
                record = {
                    "id": song.id,
                    "split": split,
                    "attribute": song.attribute,
                    "audio": rel,
                    "notes": [[n.onset_s, n.offset_s, n.pitch_midi] for n in song.notes],
                }
                fh.write(json.dumps(record) + "\n")


def read_corpus(directory) -> Corpus:
    directory = Path(directory)
    manifest = directory / "manifest.jsonl"
    if not manifest.is_file():
        raise CorpusError(f"missing manifest: {manifest}")
    splits = {"train": [], "test": []}
    seen = set()
    with open(manifest, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{manifest}:{lineno}: bad JSON ({exc})") from exc
            where = f"{manifest}:{lineno}"
            for key in ("id", "split", "attribute", "audio", "notes"):
                if key not in rec:
                    raise CorpusError(f"{where}: missing field {key!r}")
            if rec["split"] not in splits:
                raise CorpusError(f"{where}: unknown split {rec['split']!r}")
            if rec["attribute"] not in (0, 1):
                raise CorpusError(f"{where}: attribute must be 0 or 1")
            if rec["id"] in seen:
                raise CorpusError(f"{where}: duplicate song id {rec['id']!r}")
            seen.add(rec["id"])
            audio_path = directory / rec["audio"]
            if not audio_path.is_file():
                raise CorpusError(f"{where}: missing audio file {audio_path}")
            samples, sr = _read_wav(audio_path)
            try:
                notes = [NoteEvent(float(o), float(f), int(p)) for o, f, p in rec["notes"]]
                song = Song(rec["id"], int(rec["attribute"]), sr, samples, notes)
            except (ValueError, TypeError) as exc:
                raise CorpusError(f"{where}: {exc}") from exc
            splits[rec["split"]].append(song)
    return Corpus(train=splits["train"], test=splits["test"])
