"""``aomi`` command line: synth, preprocess, onset, train, eval-loocv, stream,
ersp, sweep-h and report.

Every command writes its outputs plus ``manifest.json`` into ``--out`` through
a scratch directory that is renamed into place only on success.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import __version__, pipeline
from ..core import TRANSITIONS, ProtocolTimeline, to_index
from ..evaluation import (TASK_ALIASES, TASKS, ConfusionCounts, DegenerateError, PipelineConfig,
                          cascade_stream, loocv, me_stream, metrics, welch_t)
from ..model import GRID_C, GRID_GAMMA, GRID_KERNELS, GridSpec
from ..onset import OnsetConfig
from ..tfa import ERSPConfig, ersp
from . import config as cfgmod
from .bundle import BundleError, atomic_dir, read_bundle, sha256_tree, write_bundle
from .synth import SynthSpec, synth

log = logging.getLogger("aomi")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_INCOMPATIBLE = 5
EXIT_RUNTIME = 6
EXIT_EMPTY = 7


class IncompatibleError(ValueError):
    """Flags, config and input disagree."""


class EmptyInputError(ValueError):
    """Nothing to process."""


# -- config schemas -------------------------------------------------------------------

SYNTH_SCHEMA = {
    "seed": int, "subjects": int, "trials": int, "eeg_fs": float, "emg_fs": float,
    "band_hz": "list", "erd_depth_db": float, "ers_depth_db": float, "alpha_uv": float,
    "noise_uv": float, "mrcp_amp_uv": float, "mrcp_lead_s": float,
    "latency_mean_s": float, "latency_sd_s": float, "emg_noise_uv": float,
    "emg_burst_uv": float, "emg_ramp_s": float, "emg_burst_s": float,
    "blink_rate_hz": float, "blink_amp_uv": float, "lead_s": float, "tail_s": float,
    "sessions": "strlist", "transitions": "strlist",
}
PREPROCESS_SCHEMA = {"notch_hz": float, "notch_q": float, "target_fs": float}
ONSET_SCHEMA = {"h": float, "E": int, "reference_window_s": float, "search_s": float}
PIPELINE_SCHEMA = {
    "m": int, "window_s": float, "shift_s": float, "select_k": "optint",
    "shrinkage": float, "ica": bool, "ica_threshold": float, "standardize": bool,
    "kernels": "strlist", "c_values": "list", "gamma_values": "strlist", "folds": int,
    "tol": float, "arm_count": int, "reversible": bool, "idle_as": ("AO", "R"),
    "seed": int,
}
ERSP_SCHEMA = {
    "freq_min_hz": float, "freq_max_hz": float, "n_freqs": int, "n_out_times": int,
    "cycles_min": float, "cycles_max": float, "baseline_start_s": float,
    "baseline_end_s": float, "p": float, "n_boot": int, "tmin_s": float, "tmax_s": float,
    "seed": int,
}
SWEEP_SCHEMA = {"h_min": int, "h_max": int, "E": int, "reference_window_s": float,
                "search_s": float}


def _check_strlist(key, value):
    return value if isinstance(value, list) else [value]


def _load_config(path, schema, defaults=None):
    """(validated dict, raw bytes). No file means defaults and empty bytes."""
    if path is None:
        return dict(defaults or {}), b""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    raw_cfg, raw = cfgmod.load(p)
    plain = {k: v for k, v in schema.items() if v != "strlist"}
    lists = {k: _check_strlist(k, raw_cfg[k]) for k in schema
             if schema[k] == "strlist" and k in raw_cfg}
    rest = {k: v for k, v in raw_cfg.items() if k not in lists}
    out = cfgmod.validate(rest, plain, defaults)
    out.update(lists)
    return out, raw


def _manifest(command, args, cfg, raw_cfg, inputs, outputs, seed=None):
    return {
        "command": command,
        "software": "aomi",
        "version": __version__,
        "config_sha256": hashlib.sha256(raw_cfg).hexdigest(),
        "config": cfg,
        "seed": seed,
        "inputs": {str(p): sha256_tree(p) for p in inputs},
        "outputs": sorted(outputs),
        "flags": {k: v for k, v in vars(args).items()
                  if k not in ("func", "out", "inputs", "input", "config") and v is not None},
    }


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def _finish(tmp: Path, command, args, cfg, raw, inputs, seed=None):
    outputs = [str(p.relative_to(tmp)) for p in tmp.rglob("*") if p.is_file()]
    _write_json(tmp / "manifest.json", _manifest(command, args, cfg, raw, inputs, outputs, seed))


def _require(path, what="input"):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _header_matches(header, args):
    """Cross-check --subject/--session/--transition against the bundle header."""
    for flag in ("subject", "session", "transition"):
        want = getattr(args, flag, None)
        have = header.get(flag)
        if want is not None and have is not None and want != have:
            raise IncompatibleError(f"--{flag} {want} but the bundle says {have}")
    return {f: getattr(args, f, None) or header.get(f) for f in ("subject", "session", "transition")}


# -- synth -----------------------------------------------------------------------------

def cmd_synth(args):
    cfg, raw = _load_config(args.config, SYNTH_SCHEMA)
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise cfgmod.SchemaError("a seed is required (--seed or seed = ...)")
    try:
        spec = SynthSpec.from_config({k: v for k, v in cfg.items() if k != "seed"}, seed=seed)
    except (TypeError, ValueError) as exc:
        raise cfgmod.SchemaError(str(exc)) from exc
    subj = None
    if args.subject is not None:
        subj = int(args.subject.lstrip("S")) - 1
        if not 0 <= subj < spec.subjects:
            raise IncompatibleError(f"--subject {args.subject} outside 1..{spec.subjects}")
    sets = synth(spec, args.session, args.transition, subj)
    if not sets:
        raise EmptyInputError("selection produced no recordings")
    with atomic_dir(args.out) as tmp:
        for s in sets:
            meta = {"subject": s.subject, "session": s.session, "transition": s.transition}
            base = tmp / s.subject / f"{s.session}_{s.transition}"
            write_bundle(base / "eeg", s.eeg, meta)
            write_bundle(base / "emg", s.emg, meta)
            _write_json(base / "truth.json", s.truth)
        _finish(tmp, "synth", args, cfg, raw, [], seed)
    return EXIT_OK


# -- preprocess ------------------------------------------------------------------------

def cmd_preprocess(args):
    cfg, raw = _load_config(args.config, PREPROCESS_SCHEMA,
                            {"notch_hz": 50.0, "notch_q": 30.0, "target_fs": 250.0})
    rec, header = read_bundle(_require(args.input))
    meta = _header_matches(header, args)
    if meta["session"] not in ("MI", "ME"):
        raise IncompatibleError("session unknown; pass --session MI|ME")
    out = pipeline.preprocess_eeg(rec, meta["session"], cfg["target_fs"], cfg["notch_hz"],
                                  cfg["notch_q"])
    with atomic_dir(args.out) as tmp:
        write_bundle(tmp, out, {**meta, "preprocessed": True})
        _finish(tmp, "preprocess", args, cfg, raw, [args.input])
    return EXIT_OK


# -- onset -----------------------------------------------------------------------------

def _onset_config(cfg):
    return OnsetConfig(h=cfg.get("h", 10.0), E=cfg.get("E", 5),
                       reference_window_s=cfg.get("reference_window_s", 2.0))


def _emg_input(args):
    rec, header = read_bundle(_require(args.input))
    if not any(c.kind == "EMG" for c in rec.channels):
        raise IncompatibleError(f"{args.input} has no EMG channels")
    return rec, _header_matches(header, args)


def cmd_onset(args):
    cfg, raw = _load_config(args.config, ONSET_SCHEMA)
    rec, meta = _emg_input(args)
    results = pipeline.emg_onsets(rec, _onset_config(cfg), search_s=cfg.get("search_s", 4.0))
    secs = pipeline.onset_seconds(rec, results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "onset_s", "latency_s", "channel", "threshold", "reference_mean",
                "reference_sd"])
    cues = {k: evs["audio_cue"].sample for k, evs in enumerate(pipeline.trial_events(rec))
            if "audio_cue" in evs}
    for k, r in enumerate(results):
        if r is None or r.onset_sample is None:
            w.writerow([k, "", "", "", "", "", ""])
            continue
        w.writerow([k, f"{secs[k]:.6f}", f"{(r.onset_sample - cues[k]) / rec.fs:.6f}",
                    r.channel, f"{r.threshold:.6g}", f"{r.reference_mean:.6g}",
                    f"{r.reference_sd:.6g}"])
    with atomic_dir(args.out) as tmp:
        (tmp / "onsets.csv").write_text(buf.getvalue())
        _finish(tmp, "onset", args, {**cfg, **meta}, raw, [args.input])
    return EXIT_OK


def read_onsets(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "onsets.csv"
    _require(p, "onset table")
    out = {}
    with open(p, newline="") as fh:
        for row in csv.DictReader(fh):
            out[int(row["trial"])] = float(row["onset_s"]) if row["onset_s"] else None
    return out


# -- shared decoding setup ------------------------------------------------------------

def _pipeline_config(cfg, session, task, transition):
    grid = GridSpec(tuple(cfg.get("kernels", GRID_KERNELS)),
                    tuple(cfg.get("c_values", GRID_C)),
                    tuple(_gamma(g) for g in cfg.get("gamma_values", GRID_GAMMA)),
                    cfg.get("folds", 10), cfg.get("seed", 0), cfg.get("tol", 1e-3))
    kw = {k: cfg[k] for k in ("m", "window_s", "shift_s", "select_k", "shrinkage", "ica",
                              "ica_threshold", "standardize", "seed") if k in cfg}
    try:
        return PipelineConfig(session=session, task=task, transition=transition or "none",
                              grid=grid, **kw)
    except ValueError as exc:
        raise IncompatibleError(str(exc)) from exc


def _gamma(g):
    if g == "auto":
        return g
    try:
        return float(g)
    except (TypeError, ValueError):
        raise cfgmod.SchemaError(f"gamma_values: bad entry {g!r}") from None


def _analysis_input(args, task=None):
    """Preprocessed recording, metadata and the task's PipelineConfig."""
    rec, header = read_bundle(_require(args.input))
    meta = _header_matches(header, args)
    if task is not None:
        task = TASK_ALIASES.get(task, task)
        sess = TASKS[task][0]
        if meta["session"] is not None and meta["session"] != sess:
            raise IncompatibleError(f"task {task} needs a {sess} recording, got "
                                    f"{meta['session']}")
        meta["session"] = sess
    if task == "AO_vs_MRCP" or (task is None and meta["session"] == "ME"):
        if args.onsets is None:
            raise IncompatibleError("ME decoding needs --onsets from the onset command")
        rec = pipeline.with_onsets(rec, read_onsets(args.onsets))
    return rec, meta


# -- train -------------------------------------------------------------------------------

def cmd_train(args):
    cfg, raw = _load_config(args.config, PIPELINE_SCHEMA)
    rec, meta = _analysis_input(args, args.task)
    pc = _pipeline_config(cfg, meta["session"], args.task, meta["transition"])
    dec = pipeline.fit_decoder(rec, pc)
    inputs = [args.input] + ([args.onsets] if args.onsets else [])
    with atomic_dir(args.out) as tmp:
        _write_json(tmp / "model.json", {**dec.to_dict(), **meta, "task": pc.task})
        _finish(tmp, "train", args, cfg, raw, inputs, pc.seed)
    return EXIT_OK


# -- eval-loocv ------------------------------------------------------------------------------

def cmd_eval_loocv(args):
    cfg, raw = _load_config(args.config, PIPELINE_SCHEMA)
    rec, meta = _analysis_input(args, args.task)
    pc = _pipeline_config(cfg, meta["session"], args.task, meta["transition"])
    a, b = pipeline.paired_epochs(rec, pc.session, pc.classes)
    if len(a.trials) < 3:
        raise EmptyInputError(f"only {len(a.trials)} usable trials")
    eog = (a.eog, b.eog) if pc.ica and a.eog is not None else (None, None)
    rep = loocv(a.eeg, b.eeg, rec.fs, pc, eog[0], eog[1])
    rows = ["fold\ttrial\taccuracy\tn_test\tkernel\tC\tgamma\trejected_ics\tstatus"]
    for f in rep.folds:
        best = f.best or ("", "", "")
        acc = "" if f.accuracy is None else f"{f.accuracy:.4f}"
        rows.append(f"{f.fold + 1}\t{a.trials[f.fold]}\t{acc}\t{f.n_test}\t{best[0]}\t{best[1]}"
                    f"\t{best[2]}\t{','.join(map(str, f.rejected_components))}\t"
                    f"{'failed: ' + (f.error or '') if f.failed else 'ok'}")
    summary = f"{pc.task} {meta['transition']}: {rep.mean:.4f} +- {rep.se:.4f} (mean +- SE)"
    result = {**meta, "task": pc.task, "mean": rep.mean, "se": rep.se,
              "accuracies": [f.accuracy for f in rep.folds], "flagged": rep.flagged,
              "windows_per_trial": rep.windows_per_trial, "feature_scaling": rep.feature_scaling}
    with atomic_dir(args.out) as tmp:
        (tmp / "folds.tsv").write_text("\n".join(rows) + "\n")
        (tmp / "summary.txt").write_text(summary + "\n")
        _write_json(tmp / "loocv.json", result)
        _finish(tmp, "eval-loocv", args, cfg, raw,
                [args.input] + ([args.onsets] if args.onsets else []), pc.seed)
    print("\n".join(rows))
    print(summary)
    return EXIT_OK


# -- stream -------------------------------------------------------------------------------------

SYMBOL = {"R": "R", "AO": "A", "MI": "M", "MRCP": "M"}


def cmd_stream(args):
    cfg, raw = _load_config(args.config, PIPELINE_SCHEMA)
    rec, meta = _analysis_input(args, None)
    session = meta["session"]
    if session not in ("MI", "ME"):
        raise IncompatibleError("session unknown; pass --session MI|ME")
    cfg_nodupe = {k: v for k, v in cfg.items() if k not in ("window_s", "shift_s")}
    timeline = ProtocolTimeline.default(session, meta["transition"] or "sit_to_stand")
    if session == "MI":
        pcs = [_pipeline_config(cfg_nodupe, "MI", t, meta["transition"])
               for t in ("R_vs_AO", "AO_vs_MI")]
        trials = sorted(set(pipeline.paired_epochs(rec, "MI", pcs[0].classes)[0].trials)
                        & set(pipeline.paired_epochs(rec, "MI", pcs[1].classes)[0].trials))
    else:
        pcs = [_pipeline_config(cfg_nodupe, "ME", "AO_vs_MRCP", meta["transition"])]
        trials = pipeline.paired_epochs(rec, "ME", pcs[0].classes)[0].trials
    if len(trials) < 3:
        raise EmptyInputError(f"only {len(trials)} usable trials")
    raster, per_trial, total = [], [], ConfusionCounts(0, 0, 0, 0)
    for k in trials:
        train = [t for t in trials if t != k]
        models = [pipeline.fit_decoder(rec, pc, train) for pc in pcs]
        seg = pipeline.trial_segment(rec, k, timeline.duration)
        if session == "MI":
            rep = cascade_stream(seg, rec.fs, models[0], models[1], timeline,
                                 window_s=cfg.get("window_s", 2.0),
                                 shift_s=cfg.get("shift_s", 0.2),
                                 arm_count=cfg.get("arm_count", 5),
                                 reversible=cfg.get("reversible", False),
                                 idle_as=cfg.get("idle_as", "AO"))
        else:
            rep = me_stream(seg, rec.fs, models[0], timeline,
                            window_s=cfg.get("window_s", 1.0), shift_s=cfg.get("shift_s", 0.5),
                            idle_as=cfg.get("idle_as", "AO"))
        raster.append(f"{k}\t" + "".join(SYMBOL[d] for d in rep.decoded))
        total = total + rep.counts
        per_trial.append({"trial": k, "counts": vars(rep.counts), "rates": rep.rates.as_float(),
                          "switch_index": rep.switch_index})
    truth_row = "".join(SYMBOL[t] for t in rep.truth)
    result = {**meta, "n_windows": len(rep.decoded), "counts": vars(total),
              "rates": metrics(total).as_float(), "trials": per_trial}
    with atomic_dir(args.out) as tmp:
        (tmp / "raster.txt").write_text(f"truth\t{truth_row}\n" + "\n".join(raster) + "\n")
        _write_json(tmp / "stream.json", result)
        _finish(tmp, "stream", args, cfg, raw,
                [args.input] + ([args.onsets] if args.onsets else []), cfg.get("seed", 0))
    print(f"truth\t{truth_row}")
    print("\n".join(raster))
    return EXIT_OK


# -- ersp -------------------------------------------------------------------------------------

def write_matrix(path, mat, freqs, times, fmt="%.6g"):
    """Header row of times, first column of frequencies."""
    lines = ["freq_hz\t" + "\t".join(f"{t:.4f}" for t in times)]
    for f, row in zip(freqs, mat):
        lines.append(f"{f:.4f}\t" + "\t".join(fmt % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_ersp(args):
    defaults = {"freq_min_hz": 4.0, "freq_max_hz": 40.0, "n_freqs": 40, "n_out_times": 200,
                "cycles_min": 3.0, "cycles_max": 15.0, "baseline_start_s": -1.0,
                "baseline_end_s": 0.0, "p": 0.05, "n_boot": 2000, "tmin_s": -1.5,
                "tmax_s": 13.0, "seed": 0}
    cfg, raw = _load_config(args.config, ERSP_SCHEMA, defaults)
    seed = args.seed if args.seed is not None else cfg["seed"]
    rec, header = read_bundle(_require(args.input))
    meta = _header_matches(header, args)
    ec = ERSPConfig(tuple(np.linspace(cfg["freq_min_hz"], cfg["freq_max_hz"], cfg["n_freqs"])),
                    cfg["n_out_times"], (cfg["cycles_min"], cfg["cycles_max"]),
                    (cfg["baseline_start_s"], cfg["baseline_end_s"]), cfg["p"], cfg["n_boot"],
                    seed)
    trials = pipeline.baseline_epochs(rec, cfg["tmin_s"], cfg["tmax_s"])
    if len(trials) < 2:
        raise EmptyInputError(f"{len(trials)} complete trials; ERSP needs two")
    res = ersp(trials, rec.fs, ec, tmin_s=cfg["tmin_s"])
    names = [c.name for c in rec.channels if c.kind == "EEG"]
    with atomic_dir(args.out) as tmp:
        for i, ch in enumerate(names):
            write_matrix(tmp / f"ersp_{ch}.tsv", res.power_db[i], res.freqs, res.times_s)
            write_matrix(tmp / f"mask_{ch}.tsv", res.significant[i].astype(int), res.freqs,
                         res.times_s, "%d")
        _finish(tmp, "ersp", args, {**cfg, **meta}, raw, [args.input], seed)
    return EXIT_OK


# -- sweep-h ------------------------------------------------------------------------------------

def cmd_sweep_h(args):
    defaults = {"h_min": 3, "h_max": 20, "E": 5, "reference_window_s": 2.0, "search_s": 4.0}
    cfg, raw = _load_config(args.config, SWEEP_SCHEMA, defaults)
    rec, meta = _emg_input(args)
    truth = None
    if args.truth is not None:
        truth = {t["trial"]: t["onset_s"]
                 for t in json.loads(_require(args.truth, "truth file").read_text())["trials"]}
    lines = ["h\tdetected\tdetection_rate\tmedian_latency_s\tmedian_abs_error_s"]
    cues = {k: evs["audio_cue"].sample for k, evs in enumerate(pipeline.trial_events(rec))
            if "audio_cue" in evs}
    if not cues:
        raise EmptyInputError("no audio cues in the recording")
    for h in range(cfg["h_min"], cfg["h_max"] + 1):
        oc = OnsetConfig(h=float(h), E=cfg["E"], reference_window_s=cfg["reference_window_s"])
        res = pipeline.emg_onsets(rec, oc, search_s=cfg["search_s"])
        secs = pipeline.onset_seconds(rec, res)
        det = [k for k in cues if secs.get(k) is not None]
        lat = [(res[k].onset_sample - cues[k]) / rec.fs for k in det]
        med_lat = f"{np.median(lat):.4f}" if lat else ""
        err = ""
        if truth is not None:
            e = [abs(secs[k] - truth[k]) for k in det if truth.get(k) is not None]
            err = f"{np.median(e):.4f}" if e else ""
        lines.append(f"{h}\t{len(det)}\t{len(det) / len(cues):.4f}\t{med_lat}\t{err}")
    with atomic_dir(args.out) as tmp:
        (tmp / "sweep_h.tsv").write_text("\n".join(lines) + "\n")
        _finish(tmp, "sweep-h", args, {**cfg, **meta}, raw,
                [args.input] + ([args.truth] if args.truth else []))
    print("\n".join(lines))
    return EXIT_OK


# -- report ---------------------------------------------------------------------------------------

def _collect(inputs, name):
    found = []
    for p in inputs:
        p = Path(p)
        if p.is_file() and p.name == name:
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(p.rglob(name)))
    return found


def _fmt(x, nd=2):
    return "n/a" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.{nd}f}"


def table_one(results) -> str:
    """Accuracy (%) mean +- SE per subject, one column per task and transition."""
    cols = sorted({(r["task"], r["transition"]) for r in results},
                  key=lambda c: (list(TASKS).index(c[0]), str(c[1])))
    subjects = sorted({r["subject"] for r in results})
    head = ["subject"] + [f"{t} ({tr})" for t, tr in cols]
    lines = ["\t".join(head)]
    by = {(r["subject"], r["task"], r["transition"]): r for r in results}
    for s in subjects:
        row = [s]
        for t, tr in cols:
            r = by.get((s, t, tr))
            row.append("" if r is None else f"{_fmt(100 * r['mean'])} +- {_fmt(100 * r['se'])}")
        lines.append("\t".join(row))
    row = ["mean"]
    for t, tr in cols:
        v = [by[(s, t, tr)]["mean"] for s in subjects if (s, t, tr) in by]
        v = [x for x in v if x is not None and not np.isnan(x)]
        se = np.std(v, ddof=1) / np.sqrt(len(v)) if len(v) > 1 else None
        row.append(f"{_fmt(100 * np.mean(v)) if v else 'n/a'} +- "
                   f"{_fmt(None if se is None else 100 * se)}")
    lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def table_two(results) -> str:
    """Pooled TPR/FPR/FNR (%) per subject, session and transition."""
    lines = ["subject\tsession\ttransition\tTPR\tFPR\tFNR"]
    for r in sorted(results, key=lambda r: (r["subject"], r["session"], str(r["transition"]))):
        rt = r["rates"]
        lines.append("\t".join([r["subject"], r["session"], str(r["transition"])]
                               + [_fmt(None if rt[k] is None else 100 * rt[k])
                                  for k in ("TPR", "FPR", "FNR")]))
    return "\n".join(lines) + "\n"


def transition_tests(results) -> str:
    lines = ["task\tt\tdf\tp\tn_sit_to_stand\tn_stand_to_sit"]
    for task in TASKS:
        a = [r for r in results if r["task"] == task and r["transition"] == TRANSITIONS[0]]
        b = [r for r in results if r["task"] == task and r["transition"] == TRANSITIONS[1]]
        try:
            tt = welch_t([r["mean"] for r in a], [r["mean"] for r in b],
                         paired_by=([r["subject"] for r in a], [r["subject"] for r in b]))
        except (ValueError, DegenerateError):
            continue
        lines.append(f"{task}\t{tt.t:.4f}\t{tt.df:.2f}\t{tt.p:.4g}\t{tt.n_a}\t{tt.n_b}")
    return "\n".join(lines) + "\n"


def cmd_report(args):
    for p in args.inputs:
        _require(p)
    loocv_files = _collect(args.inputs, "loocv.json")
    stream_files = _collect(args.inputs, "stream.json")
    if not loocv_files and not stream_files:
        raise EmptyInputError("no loocv.json or stream.json under the given inputs")
    acc = [json.loads(p.read_text()) for p in loocv_files]
    strm = [json.loads(p.read_text()) for p in stream_files]
    if args.transition:
        acc = [r for r in acc if r["transition"] == args.transition]
        strm = [r for r in strm if r["transition"] == args.transition]
    if args.subject:
        acc = [r for r in acc if r["subject"] == args.subject]
        strm = [r for r in strm if r["subject"] == args.subject]
    if not acc and not strm:
        raise EmptyInputError("selection left no results")
    with atomic_dir(args.out) as tmp:
        if acc:
            (tmp / "table1_accuracy.tsv").write_text(table_one(acc))
            (tmp / "transition_tests.tsv").write_text(transition_tests(acc))
        if strm:
            (tmp / "table2_rates.tsv").write_text(table_two(strm))
        _finish(tmp, "report", args, {}, b"", loocv_files + stream_files)
    if acc:
        print(table_one(acc), end="")
    if strm:
        print(table_two(strm), end="")
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="aomi", description="Decode observation, imagery and execution from EEG/EMG bundles.")
    p.add_argument("--version", action="version", version=f"aomi {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, inp=True, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(func=func)
        if inp:
            sp.add_argument("--in", dest="input", required=True, help="input bundle")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--subject")
        sp.add_argument("--transition", choices=TRANSITIONS[:2])
        sp.add_argument("--session", choices=("MI", "ME"))
        return sp

    add("synth", cmd_synth, inp=False, help="generate synthetic bundles")
    add("preprocess", cmd_preprocess, help="filter and resample EEG/EOG")
    add("onset", cmd_onset, help="EMG movement onsets per trial")
    for name, func, hlp in (("train", cmd_train, "fit a decoder on all trials"),
                            ("eval-loocv", cmd_eval_loocv, "leave-one-trial-out accuracy")):
        sp = add(name, func, help=hlp)
        sp.add_argument("--task", required=True, choices=sorted(TASK_ALIASES))
        sp.add_argument("--onsets", help="onset command output (ME session)")
    sp = add("stream", cmd_stream, help="pseudo-online decoding per held-out trial")
    sp.add_argument("--onsets", help="onset command output (ME session)")
    add("ersp", cmd_ersp, help="baseline-normalised time-frequency maps")
    sp = add("sweep-h", cmd_sweep_h, help="onset detection across threshold factors")
    sp.add_argument("--truth", help="synthetic truth sidecar for error statistics")
    sp = add("report", cmd_report, inp=False, help="accuracy and rate summary tables")
    sp.add_argument("--in", dest="inputs", nargs="+", required=True,
                    help="result files or directories")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error [missing]: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (cfgmod.SchemaError, BundleError) as exc:
        print(f"error [schema]: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except IncompatibleError as exc:
        print(f"error [incompatible]: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except EmptyInputError as exc:
        print(f"error [empty]: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except Exception as exc:  # numerical or other runtime failure
        log.debug("traceback", exc_info=True)
        print(f"error [runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
