"""Waveform to fixed-rate log-mel feature frames."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOG_EPS = 1e-6


@dataclass
class FrontendConfig:
    win_s: float = 0.04
    hop_s: float = 0.02   # 50 frames/s
    n_mels: int = 40


@dataclass
class FeatureSequence:
    """T x D feature matrix on a uniform time grid of frame centers."""
    frames: np.ndarray
    hop_s: float
    t0_s: float

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def frame_time(index: int, hop_s: float, t0_s: float) -> float:
    """Center time of frame `index`."""
    if index < 0:
        raise ValueError("frame index must be >= 0")
    return t0_s + index * hop_s


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters, rows (n_mels) x rfft bins (n_fft//2 + 1)."""
    n_bins = n_fft // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - freqs) / max(hi - mid, 1e-12)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def logmel(samples, sample_rate: int, win_s: float = 0.04, hop_s: float = 0.02,
           n_mels: int = 40) -> FeatureSequence:
    """Log mel-filterbank energies of Hann-windowed power spectra.

    Frame count is floor((len - win)/hop) + 1 (no padding), so frame centers
    start at win/2.  Energies are floored with LOG_EPS before the log.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("expected a non-empty mono signal")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal holds non-finite samples")
    win = int(round(win_s * sample_rate))
    hop = int(round(hop_s * sample_rate))
    if win <= 0 or hop <= 0:
        raise ValueError("window and hop must be positive")
    if x.size < win:
        raise ValueError(f"signal shorter than one window ({x.size} < {win})")
    frames = sliding_window_view(x, win)[::hop]
    window = np.hanning(win)
    spectra = np.abs(np.fft.rfft(frames * window, n=win)) ** 2
    fb = mel_filterbank(n_mels, win, sample_rate)
    feats = np.log(spectra @ fb.T + LOG_EPS)
    return FeatureSequence(frames=feats, hop_s=hop / sample_rate,
                           t0_s=(win / 2) / sample_rate)


def logmel_song(song, cfg: FrontendConfig) -> FeatureSequence:
    return logmel(song.samples, song.sample_rate_hz, cfg.win_s, cfg.hop_s, cfg.n_mels)


# ---------------------------------------------------------------------------
# feature cache: magic, T, D, hop_s header then row-major float32 LE frames
# ---------------------------------------------------------------------------

FEATURE_MAGIC = b"FMEL"


def write_feature_cache(path, feats: FeatureSequence) -> None:
    t, d = feats.frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IId", t, d, feats.hop_s))
        fh.write(np.ascontiguousarray(feats.frames, dtype="<f4").tobytes())


def read_feature_cache(path, t0_s: float = 0.0) -> FeatureSequence:
    """Load a cached feature matrix; the header does not carry t0, pass it."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise ValueError(f"not a feature cache: bad magic {magic!r}")
        t, d, hop_s = struct.unpack("<IId", fh.read(16))
        data = np.frombuffer(fh.read(4 * t * d), dtype="<f4")
        if data.size != t * d:
            raise ValueError("truncated feature cache")
    return FeatureSequence(frames=data.reshape(t, d).astype(np.float64),
                           hop_s=hop_s, t0_s=t0_s)
