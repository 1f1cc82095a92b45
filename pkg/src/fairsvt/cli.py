"""Command-line orchestration.

Subcommands: ``gen`` (synthesize a corpus), ``train`` (one run), ``eval``
(score a run on a corpus), ``sweep`` (grid of runs plus trade-off selection),
``report`` (pretty-print stored results).  Config files are JSON with an
explicit ``version``; unknown keys are rejected so every number feeding a
result is visible in the file.  Exit codes: 0 ok, 2 config error, 3 training
divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import tensornet as tn
from .corpus import CorpusConfig, CorpusError, build_corpus, read_corpus, write_corpus
from .frontend import FrontendConfig
from .metrics import DEFAULT_TOLERANCES, FairnessReport, evaluate, tradeoff_select
from .notelab import NoteVocab, PostProcConfig
from .svtmodel import ModelConfig
from .trainer import (METHODS, RunRecord, TrainConfig, TrainingDiverged,
                      build_components, train)

log = logging.getLogger("fairsvt")

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Malformed configuration file or arguments."""


def _setup_logging() -> None:
    level = os.environ.get("FAIRSVT_LOG", "info").lower()
    table = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in table:
        raise ConfigError(f"FAIRSVT_LOG must be one of {sorted(table)}, got {level!r}")
    logging.basicConfig(level=table[level], format="%(levelname)s %(name)s: %(message)s")


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return payload


def _take(payload: dict, allowed: set, where: str) -> None:
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    version = payload.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"{where}: unsupported config version {version!r}")


def _pair(value, where: str) -> tuple:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{where}: expected a [low, high] pair")
    return tuple(value)


_CORPUS_KEYS = {"version", "n_songs_per_group", "notes_per_song", "pitch_center_midi",
                "pitch_spread_midi", "pitch_min_midi", "pitch_max_midi",
                "harmonic_profile", "vibrato_cents", "vibrato_hz", "noise_floor",
                "tempo_notes_per_s", "gap_s", "lead_s", "tail_s", "sample_rate_hz",
                "seed"}


def corpus_config_from_dict(payload: dict, where: str = "corpus config") -> CorpusConfig:
    _take(payload, _CORPUS_KEYS, where)
    cfg = CorpusConfig()
    kwargs = {}
    for key in _CORPUS_KEYS - {"version"}:
        if key not in payload:
            continue
        value = payload[key]
        if key in {"notes_per_song", "pitch_center_midi", "pitch_spread_midi",
                   "tempo_notes_per_s", "gap_s", "lead_s"}:
            value = _pair(value, f"{where}.{key}")
        elif key == "harmonic_profile":
            value = _pair(value, f"{where}.{key}")
            value = (tuple(value[0]), tuple(value[1]))
        kwargs[key] = value
    cfg = replace(cfg, **kwargs)
    try:
        cfg.validate()
    except CorpusError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return cfg


def corpus_config_to_dict(cfg: CorpusConfig) -> dict:
    return {
        "version": CONFIG_VERSION,
        "n_songs_per_group": cfg.n_songs_per_group,
        "notes_per_song": list(cfg.notes_per_song),
        "pitch_center_midi": list(cfg.pitch_center_midi),
        "pitch_spread_midi": list(cfg.pitch_spread_midi),
        "pitch_min_midi": cfg.pitch_min_midi,
        "pitch_max_midi": cfg.pitch_max_midi,
        "harmonic_profile": [list(cfg.harmonic_profile[0]), list(cfg.harmonic_profile[1])],
        "vibrato_cents": cfg.vibrato_cents,
        "vibrato_hz": cfg.vibrato_hz,
        "noise_floor": cfg.noise_floor,
        "tempo_notes_per_s": list(cfg.tempo_notes_per_s),
        "gap_s": list(cfg.gap_s),
        "lead_s": list(cfg.lead_s),
        "tail_s": cfg.tail_s,
        "sample_rate_hz": cfg.sample_rate_hz,
        "seed": cfg.seed,
    }


_TRAIN_KEYS = {"version", "method", "eta1", "eta2", "eta3", "lam", "k1", "k2",
               "batch_songs", "chunk_s", "seed", "log_every", "frontend", "model",
               "postproc"}
_FRONTEND_KEYS = {"win_s", "hop_s", "n_mels"}
_MODEL_KEYS = {"conv_channels", "hidden_dim", "latent_dim", "attr_embed_dim",
               "attr_hidden_dim", "base_octave", "n_octaves"}
_POSTPROC_KEYS = {"onset_threshold", "silence_threshold", "min_note_frames",
                  "onset_merge_frames"}


def train_config_from_dict(payload: dict, where: str = "train config") -> TrainConfig:
    _take(payload, _TRAIN_KEYS, where)
    cfg = TrainConfig()
    simple = {k: payload[k] for k in
              ("method", "eta1", "eta2", "eta3", "lam", "k1", "k2", "batch_songs",
               "chunk_s", "seed", "log_every") if k in payload}
    cfg = replace(cfg, **simple)
    if "frontend" in payload:
        sub = payload["frontend"]
        _take({**sub, "version": CONFIG_VERSION}, _FRONTEND_KEYS | {"version"},
              f"{where}.frontend")
        cfg = replace(cfg, frontend=replace(cfg.frontend, **sub))
    if "model" in payload:
        sub = dict(payload["model"])
        _take({**sub, "version": CONFIG_VERSION}, _MODEL_KEYS | {"version"},
              f"{where}.model")
        vocab = cfg.model.vocab
        if "base_octave" in sub or "n_octaves" in sub:
            vocab = NoteVocab(base_octave=sub.pop("base_octave", vocab.base_octave),
                              n_octaves=sub.pop("n_octaves", vocab.n_octaves))
        else:
            sub.pop("base_octave", None)
            sub.pop("n_octaves", None)
        if "conv_channels" in sub:
            sub["conv_channels"] = tuple(_pair(sub["conv_channels"],
                                               f"{where}.model.conv_channels"))
        cfg = replace(cfg, model=replace(cfg.model, vocab=vocab, **sub))
    if "postproc" in payload:
        sub = payload["postproc"]
        _take({**sub, "version": CONFIG_VERSION}, _POSTPROC_KEYS | {"version"},
              f"{where}.postproc")
        cfg = replace(cfg, postproc=replace(cfg.postproc, **sub))
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return cfg


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "version": CONFIG_VERSION,
        "method": cfg.method,
        "eta1": cfg.eta1, "eta2": cfg.eta2, "eta3": cfg.eta3,
        "lam": cfg.lam, "k1": cfg.k1, "k2": cfg.k2,
        "batch_songs": cfg.batch_songs, "chunk_s": cfg.chunk_s,
        "seed": cfg.seed, "log_every": cfg.log_every,
        "frontend": {"win_s": cfg.frontend.win_s, "hop_s": cfg.frontend.hop_s,
                     "n_mels": cfg.frontend.n_mels},
        "model": {"conv_channels": list(cfg.model.conv_channels),
                  "hidden_dim": cfg.model.hidden_dim,
                  "latent_dim": cfg.model.latent_dim,
                  "attr_embed_dim": cfg.model.attr_embed_dim,
                  "attr_hidden_dim": cfg.model.attr_hidden_dim,
                  "base_octave": cfg.model.vocab.base_octave,
                  "n_octaves": cfg.model.vocab.n_octaves},
        "postproc": {"onset_threshold": cfg.postproc.onset_threshold,
                     "silence_threshold": cfg.postproc.silence_threshold,
                     "min_note_frames": cfg.postproc.min_note_frames,
                     "onset_merge_frames": cfg.postproc.onset_merge_frames},
    }


# ---------------------------------------------------------------------------
# run directory artifacts
# ---------------------------------------------------------------------------

def write_run(run_dir: Path, record: RunRecord) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(train_config_to_dict(record.config), fh, indent=2, sort_keys=True)
    with open(run_dir / "history.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss_task", "loss_attr"])
        for step, ly, la in record.history:
            writer.writerow([step, repr(ly), repr(la)])
    tn.save_checkpoint(run_dir / "checkpoint.tnet", record.named_params())


def load_run(run_dir: Path) -> RunRecord:
    config = train_config_from_dict(_load_json(run_dir / "config.json"),
                                    where=str(run_dir / "config.json"))
    encoder, predictors, attr = build_components(config)
    table = dict(tn.load_checkpoint(run_dir / "checkpoint.tnet"))

    def load(module, prefix):
        module.load_params([(name, table[prefix + name])
                            for name, _ in module.named_params()])

    load(encoder, "encoder/")
    for key, predictor in predictors.items():
        load(predictor, f"predictor_{key}/")
    if attr is not None:
        load(attr, "attr/")
    history = []
    with open(run_dir / "history.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            history.append((int(row["step"]), float(row["loss_task"]),
                            float(row["loss_attr"])))
    return RunRecord(config=config, history=history, encoder=encoder,
                     predictors=predictors, attr=attr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = CorpusConfig() if args.config is None else corpus_config_from_dict(
        _load_json(args.config), where=str(args.config))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    cfg.validate()
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} is not empty")
    corpus = build_corpus(cfg)
    write_corpus(corpus, out)
    with open(out / "corpus_config.json", "w", encoding="utf-8") as fh:
        json.dump(corpus_config_to_dict(cfg), fh, indent=2, sort_keys=True)
    log.info("wrote %d train / %d test songs to %s",
             len(corpus.train), len(corpus.test), out)
    return 0


def cmd_train(args) -> int:
    cfg = TrainConfig() if args.config is None else train_config_from_dict(
        _load_json(args.config), where=str(args.config))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    run_dir = Path(args.out)
    if run_dir.exists() and any(run_dir.iterdir()):
        raise ConfigError(f"run directory {run_dir} is not empty (resume unsupported)")
    corpus = read_corpus(args.corpus)
    log.info("training method=%s seed=%d on %d songs", cfg.method, cfg.seed,
             len(corpus.train))
    record = train(corpus.train, cfg)
    write_run(run_dir, record)
    log.info("run complete: %s", run_dir)
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    record = load_run(run_dir)
    corpus = read_corpus(args.corpus)
    modes = metrics_mod.MODES if args.mode is None else (
        metrics_mod.normalize_mode(args.mode),)
    report = evaluate(record.transcriber(dind_mode=args.dind_mode),
                      corpus.test, tol=DEFAULT_TOLERANCES, modes=modes)
    report.save(run_dir / "report.json")
    for mode in modes:
        m = report.modes[mode]
        gap = "undefined" if m.gap is None else f"{m.gap:+.2f}"
        log.info("%s: U=%.2f gap=%s", mode, m.utility, gap)
    return 0


def _sweep_grid(spec: dict):
    for method in spec["methods"]:
        for eta3 in spec["eta3_grid"]:
            for lam in spec["lambda_grid"]:
                for seed in spec["seeds"]:
                    yield method, float(eta3), float(lam), int(seed)


_SWEEP_KEYS = {"version", "methods", "eta3_grid", "lambda_grid", "seeds", "delta",
               "base", "baseline_run", "baseline_utility"}


def _load_sweep_spec(path) -> dict:
    spec = _load_json(path)
    _take(spec, _SWEEP_KEYS, str(path))
    for key in ("methods", "eta3_grid", "lambda_grid", "seeds"):
        if not spec.get(key):
            raise ConfigError(f"{path}: {key} must be a non-empty list")
    for method in spec["methods"]:
        if method not in METHODS:
            raise ConfigError(f"{path}: unknown method {method!r}")
    if float(spec.get("delta", 0.0)) < 0:
        raise ConfigError(f"{path}: delta must be >= 0")
    if ("baseline_run" in spec) == ("baseline_utility" in spec):
        raise ConfigError(f"{path}: give exactly one of baseline_run / "
                          "baseline_utility")
    return spec


def _sweep_point(corpus_dir: str, cfg_payload: dict, run_dir: str) -> dict:
    """Train + evaluate one grid point (worker-safe, everything by value)."""
    cfg = train_config_from_dict(cfg_payload)
    corpus = read_corpus(corpus_dir)
    record = train(corpus.train, cfg)
    out = Path(run_dir)
    write_run(out, record)
    report = evaluate(record.transcriber(), corpus.test)
    report.save(out / "report.json")
    return report.to_dict()


def _point_name(method: str, eta3: float, lam: float, seed: int) -> str:
    return f"{method}-eta3_{eta3:g}-lam_{lam:g}-seed_{seed}"


def cmd_sweep(args) -> int:
    spec = _load_sweep_spec(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    delta = float(spec.get("delta", 2.0)) if args.delta is None else args.delta

    base_payload = dict(spec.get("base", {}))
    base_payload.setdefault("version", CONFIG_VERSION)
    grid = list(_sweep_grid(spec))

    jobs = []
    for method, eta3, lam, seed in grid:
        name = _point_name(method, eta3, lam, seed)
        run_dir = out / name
        payload = dict(base_payload)
        payload.update({"method": method, "eta3": eta3, "lam": lam, "seed": seed})
        train_config_from_dict(payload, where=f"sweep point {name}")  # validate early
        jobs.append((name, run_dir, payload))

    results = {}
    pending = [(name, run_dir, payload) for name, run_dir, payload in jobs
               if not (run_dir / "report.json").is_file()]
    done = [j for j in jobs if j not in pending]
    for name, run_dir, _ in done:
        results[name] = ("ok", FairnessReport.load(run_dir / "report.json"))
        log.info("reusing completed run %s", name)

    def finish(name, outcome):
        status, payload = outcome
        results[name] = outcome
        log.info("run %s: %s", name, status)

    if args.jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {name: pool.submit(_sweep_point, str(args.corpus), payload,
                                         str(run_dir))
                       for name, run_dir, payload in pending}
            for name, fut in futures.items():
                try:
                    finish(name, ("ok", FairnessReport.from_dict(fut.result())))
                except Exception as exc:  # noqa: BLE001 - recorded per point
                    finish(name, (f"failed: {exc}", None))
    else:
        for name, run_dir, payload in pending:
            try:
                payload_report = _sweep_point(str(args.corpus), payload, str(run_dir))
                finish(name, ("ok", FairnessReport.from_dict(payload_report)))
            except Exception as exc:  # noqa: BLE001
                finish(name, (f"failed: {exc}", None))

    if "baseline_run" in spec:
        baseline = FairnessReport.load(Path(spec["baseline_run"]) / "report.json")
        u0 = {m: baseline.modes[m].utility for m in ("COnPOff", "COnP")}
    else:
        u0 = {m: float(spec["baseline_utility"][m])
              for m in ("COnPOff", "COnP")}

    rows, points = [], {"COnPOff": [], "COnP": []}
    for method, eta3, lam, seed in grid:
        name = _point_name(method, eta3, lam, seed)
        status, report = results.get(name, ("missing", None))
        row = {"run": name, "method": method, "eta3": eta3, "lam": lam,
               "seed": seed, "status": status if report is None else "ok"}
        if report is None:
            row.update({"u_conpoff": "", "f_conpoff": "", "u_conp": "",
                        "f_conp": "", "qualified": "missing"})
        else:
            conpoff, conp = report.modes["COnPOff"], report.modes["COnP"]
            row.update({
                "u_conpoff": f"{conpoff.utility:.4f}",
                "f_conpoff": "" if conpoff.gap is None else f"{conpoff.gap:.4f}",
                "u_conp": f"{conp.utility:.4f}",
                "f_conp": "" if conp.gap is None else f"{conp.gap:.4f}",
                "qualified": str(conp.utility > u0["COnP"] - delta).lower(),
            })
            points["COnPOff"].append((name, conpoff.utility, conpoff.gap))
            points["COnP"].append((name, conp.utility, conp.gap))
        rows.append(row)

    fields = ["run", "method", "eta3", "lam", "seed", "status",
              "u_conpoff", "f_conpoff", "u_conp", "f_conp", "qualified"]
    with open(out / "tradeoff.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    selection = {"delta": delta, "baseline_utility": u0}
    for mode in ("COnPOff", "COnP"):
        cands = [(u, g) for _, u, g in points[mode] if g is not None]
        names = [n for n, _, g in points[mode] if g is not None]
        idx = tradeoff_select(cands, u0[mode], delta) if cands else None
        selection[mode] = {"selected": None if idx is None else names[idx],
                           "qualified_any": idx is not None}
        _write_svg_scatter(out / f"tradeoff_{mode.lower()}.svg", points[mode],
                           u0[mode], delta,
                           None if idx is None else names[idx], mode)
    with open(out / "selection.json", "w", encoding="utf-8") as fh:
        json.dump(selection, fh, indent=2, sort_keys=True)
    log.info("sweep complete: %d/%d runs ok", sum(r["status"] == "ok" for r in rows),
             len(rows))
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    report_path = run_dir / "report.json"
    if report_path.is_file():
        report = FairnessReport.load(report_path)
        print(f"report: {report_path}")
        header = f"{'mode':10s} {'U':>8s} {'gap':>8s} " \
                 f"{'f1 g0':>8s} {'f1 g1':>8s} {'n_ref':>6s}"
        print(header)
        for mode, m in report.modes.items():
            gap = "n/a" if m.gap is None else f"{m.gap:+.2f}"
            f0 = m.by_group.get(0)
            f1 = m.by_group.get(1)
            print(f"{mode:10s} {m.utility:8.2f} {gap:>8s} "
                  f"{(100 * f0.f1 if f0 else float('nan')):8.2f} "
                  f"{(100 * f1.f1 if f1 else float('nan')):8.2f} "
                  f"{m.total.n_ref:6d}")
    tradeoff_path = run_dir / "tradeoff.csv"
    if tradeoff_path.is_file():
        print(f"tradeoff table: {tradeoff_path}")
        with open(tradeoff_path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                print("  " + ", ".join(row))
        sel_path = run_dir / "selection.json"
        if sel_path.is_file():
            with open(sel_path, encoding="utf-8") as fh:
                print("selection: " + json.dumps(json.load(fh), sort_keys=True))
    if not report_path.is_file() and not tradeoff_path.is_file():
        raise ConfigError(f"nothing to report in {run_dir}")
    return 0


def _write_svg_scatter(path, named_points, u0: float, delta: float,
                       selected: str | None, mode: str) -> None:
    """Static utility-vs-gap scatter with the acceptance region shaded."""
    width, height, margin = 520, 360, 48
    pts = [(u, g) for _, u, g in named_points if g is not None]
    if not pts:
        path.write_text("<svg xmlns='http://www.w3.org/2000/svg'/>\n")
        return
    us = [u for u, _ in pts] + [u0, u0 - delta]
    gs = [g for _, g in pts] + [0.0]
    u_lo, u_hi = min(us) - 2, max(us) + 2
    g_lo, g_hi = min(gs) - 2, max(gs) + 2

    def sx(u):
        return margin + (u - u_lo) / (u_hi - u_lo) * (width - 2 * margin)

    def sy(g):
        return height - margin - (g - g_lo) / (g_hi - g_lo) * (height - 2 * margin)

    parts = [f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' "
             f"height='{height}' font-family='sans-serif' font-size='10'>",
             f"<rect x='{sx(u0 - delta):.1f}' y='{margin}' "
             f"width='{max(width - margin - sx(u0 - delta), 0):.1f}' "
             f"height='{height - 2 * margin}' fill='#e8f4e8'/>",
             f"<line x1='{margin}' y1='{sy(0):.1f}' x2='{width - margin}' "
             f"y2='{sy(0):.1f}' stroke='#999' stroke-dasharray='4 3'/>",
             f"<line x1='{sx(u0):.1f}' y1='{margin}' x2='{sx(u0):.1f}' "
             f"y2='{height - margin}' stroke='#555'/>",
             f"<text x='{sx(u0):.1f}' y='{margin - 6}' text-anchor='middle'>"
             f"baseline U</text>",
             f"<rect x='{margin}' y='{margin}' width='{width - 2 * margin}' "
             f"height='{height - 2 * margin}' fill='none' stroke='#333'/>",
             f"<text x='{width / 2:.0f}' y='{height - 10}' text-anchor='middle'>"
             f"utility U ({mode}, f1 points)</text>",
             f"<text x='14' y='{height / 2:.0f}' text-anchor='middle' "
             f"transform='rotate(-90 14 {height / 2:.0f})'>gap F (f1 points)</text>"]
    for name, u, g in named_points:
        if g is None:
            continue
        color = "#c0392b" if name == selected else "#2c3e50"
        radius = 5 if name == selected else 3
        parts.append(f"<circle cx='{sx(u):.1f}' cy='{sy(g):.1f}' r='{radius}' "
                     f"fill='{color}'><title>{name}</title></circle>")
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsvt",
                                     description="synthetic singing transcription "
                                                 "fairness toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a corpus")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one run")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a run on a corpus test split")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--mode", type=str, default=None,
                   help="restrict to one of conpoff/conp/con")
    p.add_argument("--dind-mode", type=str, default="calibrated",
                   choices=("calibrated", "miscalibrated"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="hyper-parameter grid with selection")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="print stored report/tradeoff tables")
    p.add_argument("--run", type=Path, required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
