"""Note-matching transcription metrics and the fairness/utility report.

Three nested match modes score a transcription against the reference:

* ``COn``     — onsets agree within tolerance;
* ``COnP``    — additionally pitch within a cent tolerance;
* ``COnPOff`` — additionally offsets within max(floor, ratio * duration).

Matching is maximum-cardinality bipartite matching over admissible pairs,
so the scores do not depend on greedy pairing order.  Utility is the total
f1 and the fairness gap is (group-1 f1 minus group-0 f1), both reported in
f1 percentage points.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

MODES = ("COnPOff", "COnP", "COn")
CENTS_PER_SEMITONE = 100.0


def normalize_mode(mode: str) -> str:
    table = {m.lower(): m for m in MODES}
    key = str(mode).lower()
    if key not in table:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return table[key]


@dataclass(frozen=True)
class Tolerances:
    onset_s: float = 0.05
    pitch_cents: float = 50.0
    offset_s_min: float = 0.05
    offset_ratio: float = 0.2

    def __post_init__(self):
        if min(self.onset_s, self.pitch_cents, self.offset_s_min, self.offset_ratio) <= 0:
            raise ValueError("tolerances must be positive")


DEFAULT_TOLERANCES = Tolerances()


def _admissible(ref, est, mode: str, tol: Tolerances) -> bool:
    if abs(ref.onset_s - est.onset_s) > tol.onset_s:
        return False
    if mode == "COn":
        return True
    cents = CENTS_PER_SEMITONE * abs(ref.pitch_midi - est.pitch_midi)
    if cents > tol.pitch_cents:
        return False
    if mode == "COnP":
        return True
    off_tol = max(tol.offset_s_min, tol.offset_ratio * ref.duration_s)
    return abs(ref.offset_s - est.offset_s) <= off_tol


def _max_bipartite(adjacency, n_right: int):
    """Maximum-cardinality matching by augmenting paths (Kuhn's algorithm)."""
    match_right = [-1] * n_right

    def augment(left: int, banned) -> bool:
        for right in adjacency[left]:
            if right in banned:
                continue
            banned.add(right)
            if match_right[right] == -1 or augment(match_right[right], banned):
                match_right[right] = left
                return True
        return False

    for left in range(len(adjacency)):
        augment(left, set())
    return match_right


def match_notes(ref, est, mode: str, tol: Tolerances = DEFAULT_TOLERANCES):
    """One-to-one (ref_index, est_index) pairs of a maximum matching."""
    mode = normalize_mode(mode)
    adjacency = [[j for j, e in enumerate(est) if _admissible(r, e, mode, tol)]
                 for r in ref]
    match_right = _max_bipartite(adjacency, len(est))
    return sorted((left, right) for right, left in enumerate(match_right) if left != -1)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    n_ref: int
    n_est: int


def _prf_from_counts(hits: int, n_ref: int, n_est: int) -> PRF:
    if n_ref == 0 and n_est == 0:
        # both sides empty: defined as perfect agreement
        return PRF(1.0, 1.0, 1.0, 0, 0)
    p = hits / n_est if n_est else 0.0
    r = hits / n_ref if n_ref else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return PRF(p, r, f1, n_ref, n_est)


def transcription_prf(ref, est, mode: str, tol: Tolerances = DEFAULT_TOLERANCES) -> PRF:
    hits = len(match_notes(ref, est, mode, tol))
    return _prf_from_counts(hits, len(ref), len(est))


# ---------------------------------------------------------------------------
# fairness report
# ---------------------------------------------------------------------------

@dataclass
class ModeReport:
    """Scores for one match mode: pooled totals, per-group, utility and gap."""
    mode: str
    total: PRF
    by_group: dict            # attribute -> pooled PRF
    macro_by_group: dict      # attribute -> mean per-song f1 (transparency)
    utility: float            # total f1 in percent
    gap: float | None         # 100 * (f1 group1 - f1 group0); None if a group is absent


@dataclass
class FairnessReport:
    tolerances: Tolerances
    modes: dict               # mode name -> ModeReport
    n_songs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def prf_dict(p):
            return {"precision": p.precision, "recall": p.recall, "f1": p.f1,
                    "n_ref": p.n_ref, "n_est": p.n_est}
        return {
            "tolerances": {"onset_s": self.tolerances.onset_s,
                           "pitch_cents": self.tolerances.pitch_cents,
                           "offset_s_min": self.tolerances.offset_s_min,
                           "offset_ratio": self.tolerances.offset_ratio},
            "n_songs": {str(k): v for k, v in self.n_songs.items()},
            "modes": {
                name: {
                    "total": prf_dict(m.total),
                    "by_group": {str(a): prf_dict(p) for a, p in m.by_group.items()},
                    "macro_by_group": {str(a): v for a, v in m.macro_by_group.items()},
                    "utility": m.utility,
                    "gap": m.gap,
                }
                for name, m in self.modes.items()
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FairnessReport":
        tol = Tolerances(**payload["tolerances"])
        modes = {}
        for name, m in payload["modes"].items():
            def prf(d):
                return PRF(d["precision"], d["recall"], d["f1"], d["n_ref"], d["n_est"])
            modes[name] = ModeReport(
                mode=name,
                total=prf(m["total"]),
                by_group={int(a): prf(p) for a, p in m["by_group"].items()},
                macro_by_group={int(a): v for a, v in m["macro_by_group"].items()},
                utility=m["utility"],
                gap=m["gap"],
            )
        n_songs = {int(k): v for k, v in payload.get("n_songs", {}).items()}
        return cls(tolerances=tol, modes=modes, n_songs=n_songs)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "FairnessReport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def report_from_pairs(pairs, tol: Tolerances = DEFAULT_TOLERANCES,
                      modes=MODES) -> FairnessReport:
    """Score (song, estimated_notes) pairs into a FairnessReport.

    ``pairs`` is a sequence of (song, est_notes).  Notes are matched per
    song; counts pool within each group (micro average).  Mean per-song f1
    is kept alongside as the macro view.
    """
    modes = tuple(normalize_mode(m) for m in modes)
    out = {}
    groups = sorted({song.attribute for song, _ in pairs})
    for mode in modes:
        counts = {a: [0, 0, 0] for a in groups}   # hits, n_ref, n_est
        per_song_f1 = {a: [] for a in groups}
        for song, est in pairs:
            hits = len(match_notes(song.notes, est, mode, tol))
            c = counts[song.attribute]
            c[0] += hits
            c[1] += len(song.notes)
            c[2] += len(est)
            per_song_f1[song.attribute].append(
                _prf_from_counts(hits, len(song.notes), len(est)).f1)
        total = _prf_from_counts(*(sum(c[i] for c in counts.values()) for i in range(3)))
        by_group = {a: _prf_from_counts(*counts[a]) for a in groups}
        macro = {a: float(np.mean(per_song_f1[a])) for a in groups}
        gap = None
        if 0 in by_group and 1 in by_group:
            gap = 100.0 * (by_group[1].f1 - by_group[0].f1)
        out[mode] = ModeReport(mode=mode, total=total, by_group=by_group,
                               macro_by_group=macro,
                               utility=100.0 * total.f1, gap=gap)
    n_songs = {a: sum(1 for song, _ in pairs if song.attribute == a) for a in groups}
    return FairnessReport(tolerances=tol, modes=out, n_songs=n_songs)


def evaluate(transcriber, songs, tol: Tolerances = DEFAULT_TOLERANCES,
             modes=MODES) -> FairnessReport:
    """Transcribe every song and score the result."""
    if not songs:
        raise ValueError("cannot evaluate an empty split")
    pairs = [(song, transcriber.transcribe(song)) for song in songs]
    return report_from_pairs(pairs, tol=tol, modes=modes)


def tradeoff_select(runs, baseline_utility: float, delta: float):
    """Pick the run that best clips the gap toward zero given a utility floor.

    ``runs`` is a sequence of (utility, gap) in percent.  Runs qualify when
    utility > baseline - delta; among those the winner maximizes min(gap, 0)
    with ties broken by higher utility, then by earlier position.  Returns
    the winning index, or None when no run qualifies.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    best = None
    for idx, (utility, gap) in enumerate(runs):
        if not utility > baseline_utility - delta:
            continue
        key = (min(gap, 0.0), utility)
        if best is None or key > best[0]:
            best = (key, idx)
    return None if best is None else best[1]
