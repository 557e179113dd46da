"""Command-line entry point: ``neurosoc <subcommand> [options]``.

Global options (``--seed``, ``--config``, ``--out``) may appear before or
after the subcommand. Every output is a CSV report (plus a model file for
``train``) written under ``--out``. Failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, get_typed, read_kv
from .data import Dataset, IngestError, SeizureCorpusConfig, export_raw16, ingest, seizure_corpus
from .dsp import FirBank
from .frontend import MODES, parse_scenario, run_scenario, write_scenario_report
from .inference import infer_single_path, logged_energy
from .modelio import ModelFormatError, load_model, save_model
from .neuraltree import EnergyTable, TrainConfig
from .oracle import validate_approx
from .pipeline import (SUMMARY_HEADER, dataset_folds, dataset_windows, default_specs, feature_table,
                       fit_model, report_importance, run_training)
from .reports import read_report, write_report
from .stim import Load, StimCommand, StimError, simulate_pulse_train

DEFAULT_TRAIN = dict(learning_rate=1e-3, epochs=200, batch_size=64, C=0.01, prune_threshold=0.05,
                     depth=4, init_scale=0.1)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d if suppress else 0, help="RNG seed (default 0)")
    p.add_argument("--config", default=d, help="key = value config file")
    p.add_argument("--out", default=d if suppress else ".", help="output directory (default .)")


def _data_args(p):
    p.add_argument("--data", help="recording to load (csv or raw16); surrogate corpus if omitted")
    p.add_argument("--format", choices=("csv", "raw16"))
    p.add_argument("--rate", type=float, help="declared sample rate (Hz)")
    p.add_argument("--annotations", help="annotation CSV (default <data>.ann.csv)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="neurosoc", description="Neural feature extraction, NeuralTree training and "
                "front-end/stimulator simulation.")
    p.add_argument("--version", action="version", version=f"neurosoc {__version__}")
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="cmd", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    def add(name, help):
        sp = sub.add_parser(name, help=help)
        _globals(sp, suppress=True)
        return sp

    sp = add("ingest", "load a recording and write a canonical raw16 copy plus a summary")
    sp.add_argument("path")
    sp.add_argument("--format", choices=("csv", "raw16"))
    sp.add_argument("--rate", type=float)
    sp.add_argument("--annotations")

    sp = add("features", "extract the feature table of every window")
    _data_args(sp)

    sp = add("train", "train, prune and quantise a model on all windows")
    _data_args(sp)

    sp = add("eval", "blockwise cross-validated detection metrics")
    _data_args(sp)
    sp.add_argument("--shuffle-labels", action="store_true", help="permutation control")

    sp = add("infer", "single-path inference with a saved model")
    _data_args(sp)
    sp.add_argument("--model", required=True)

    sp = add("importance", "channel importance from an inference log")
    sp.add_argument("--log", help="inference_log.csv from eval or infer (runs eval if omitted)")
    _data_args(sp)

    sp = add("sim-dsl", "front-end offset-cancellation scenario")
    sp.add_argument("--scenario", help="scenario file; random 3-window scenario if omitted")
    sp.add_argument("--mode", choices=MODES)

    sp = add("sim-stim", "biphasic pulse train on an RC load")
    sp.add_argument("--amplitude", type=float, default=600.0, help="uA")
    sp.add_argument("--pulse-width", type=float, default=100.0, help="us")
    sp.add_argument("--frequency", type=float, default=100.0, help="Hz")
    sp.add_argument("--channel", type=int, default=0)
    sp.add_argument("--pulses", type=int, default=10)
    sp.add_argument("--mismatch-ppm", type=float, default=1e4)
    sp.add_argument("--no-cb", action="store_true")
    sp.add_argument("--r-ohm", type=float, default=6e3)
    sp.add_argument("--c-farad", type=float, default=330e-9)
    sp.add_argument("--v-safe", type=float, default=0.05)

    sp = add("validate-approx", "correlate fixed-point features with float references")
    sp.add_argument("--windows", type=int, default=200)
    return p


# ---------------------------------------------------------------- helpers

def _config(args) -> dict[str, str]:
    return read_kv(args.config) if args.config else {}


def _train_config(kv, seed) -> TrainConfig:
    vals = {k: get_typed(kv, k, v) for k, v in DEFAULT_TRAIN.items()}
    return TrainConfig(seed=seed, **vals)


def _energy(kv) -> EnergyTable:
    base = EnergyTable.default()
    beta = dict(base.beta)
    for k in list(beta):
        key = f"beta_{k.lower() if isinstance(k, str) else k.value.lower()}"
        if key in kv:
            beta[k] = get_typed(kv, key, 0.0, float)
    return EnergyTable(beta)


def _dataset(args, kv) -> Dataset:
    if args.data:
        return ingest(args.data, args.format, args.rate, args.annotations)
    cfg = SeizureCorpusConfig()
    over = {}
    for f in fields(cfg):
        if f.name in kv and f.name not in ("seed", "extra"):
            default = getattr(cfg, f.name)
            if isinstance(default, tuple):
                cast = type(default[0])
                over[f.name] = tuple(cast(v) for v in kv[f.name].split(","))
            else:
                over[f.name] = get_typed(kv, f.name, default)
    return seizure_corpus(SeizureCorpusConfig(**{**cfg.__dict__, **over, "seed": args.seed}))


def _table(ds: Dataset, kv):
    window_s = get_typed(kv, "window_s", 1.0)
    ws = dataset_windows(ds, window_s)
    n_ch = ds.recordings[0].n_channels
    specs = default_specs(n_ch)
    bank = FirBank.default(ds.recordings[0].sample_rate_hz)
    return ws, feature_table(ws, specs, bank), bank


def _log_rows(logs, offset=0):
    for lg in logs:
        for node, spec in lg.extracted:
            yield (lg.window_index + offset, lg.label, lg.leaf, node, spec.label(),
                   "-".join(map(str, spec.channels)))


LOG_HEADER = ["window", "label", "leaf", "node", "feature", "channels"]


# ---------------------------------------------------------------- subcommands

def cmd_ingest(args, kv, out: Path):
    ds = ingest(args.path, args.format, args.rate, args.annotations)
    rec = ds.recordings[0]
    dest = export_raw16(rec, out / "recording.raw16")
    write_report(out / "ingest_summary.csv",
                 ["channels", "samples", "sample_rate_hz", "duration_s", "annotations", "classes"],
                 [(rec.n_channels, rec.samples.shape[1], rec.sample_rate_hz, rec.duration_s,
                   len(rec.annotations), ";".join(ds.classes))], args.seed)
    return [dest, out / "ingest_summary.csv"]


def cmd_features(args, kv, out: Path):
    ds = _dataset(args, kv)
    ws, table, _ = _table(ds, kv)
    header = ["window", "label"] + [s.label() for s in table.specs]
    rows = ([i, int(table.labels[i])] + [int(v) for v in table.raw[i]] for i in range(len(table)))
    return [write_report(out / "features.csv", header, rows, args.seed)]


def cmd_train(args, kv, out: Path):
    ds = _dataset(args, kv)
    ws, table, bank = _table(ds, kv)
    cfg = _train_config(kv, args.seed)
    energy = _energy(kv)
    pruned, q = fit_model(table.X, table.labels, table.specs, cfg, energy, len(ds.classes))
    size = save_model(q, out / "model.ntre")
    logs = infer_single_path(ws.windows, q, bank)
    pred = np.array([lg.label for lg in logs])
    acc = float(np.mean(pred == table.labels))
    feats = len({j for i in range(q.n_internal) for j in q.node_features(i)})
    rep = write_report(out / "train_report.csv",
                       ["windows", "features", "active_features", "model_bytes", "train_accuracy",
                        "energy_score"],
                       [(len(table), table.raw.shape[1], feats, size, acc, logged_energy(logs, energy))],
                       args.seed)
    return [out / "model.ntre", rep]


def _eval(args, kv, shuffle=False):
    ds = _dataset(args, kv)
    ws, table, bank = _table(ds, kv)
    folds = dataset_folds(ws, get_typed(kv, "k", 5))
    rep = run_training(ws, table, folds, _train_config(kv, args.seed), _energy(kv), bank,
                       len(ds.classes), shuffle_labels=shuffle, classes=ds.classes)
    return ds, rep


def cmd_eval(args, kv, out: Path):
    ds, rep = _eval(args, kv, args.shuffle_labels)
    paths = [write_report(out / "eval_summary.csv", SUMMARY_HEADER, rep.summary_rows(), args.seed)]
    conf_rows = [[ds.classes[i]] + [int(v) for v in rep.confusion[i]] for i in range(len(ds.classes))]
    paths.append(write_report(out / "confusion.csv", ["truth"] + list(ds.classes), conf_rows, args.seed))
    rows = [r for f in rep.folds for r in _log_rows(f.logs, int(f.test_windows[0]))]
    paths.append(write_report(out / "inference_log.csv", LOG_HEADER, rows, args.seed))
    return paths


def cmd_infer(args, kv, out: Path):
    model = load_model(args.model)
    ds = _dataset(args, kv)
    window_s = get_typed(kv, "window_s", 1.0)
    ws = dataset_windows(ds, window_s)
    bank = FirBank.default(ds.recordings[0].sample_rate_hz)
    logs = infer_single_path(ws.windows, model, bank)
    paths = [write_report(out / "predictions.csv", ["window", "label", "leaf", "features_extracted"],
                          [(lg.window_index, lg.label, lg.leaf, len(lg.extracted)) for lg in logs],
                          args.seed)]
    paths.append(write_report(out / "inference_log.csv", LOG_HEADER, _log_rows(logs), args.seed))
    return paths


def cmd_importance(args, kv, out: Path):
    if args.log:
        header, rows = read_report(args.log)
        if header[:len(LOG_HEADER)] != LOG_HEADER:
            raise ValueError(f"{args.log}: not an inference log")
        counts: dict[int, int] = {}
        for r in rows:
            for ch in r[5].split("-"):
                counts[int(ch)] = counts.get(int(ch), 0) + 1
        if not counts:
            raise ValueError(f"{args.log}: empty inference log")
        top = max(counts.values())
        ranked = sorted(((c, n / top) for c, n in counts.items()), key=lambda kv_: (-kv_[1], kv_[0]))
        ranking = [(c, s, i + 1) for i, (c, s) in enumerate(ranked)]
    else:
        ds, rep = _eval(args, kv)
        ranking = report_importance(rep.logs(), range(ds.recordings[0].n_channels))
    return [write_report(out / "channel_importance.csv", ["channel", "importance", "rank"], ranking,
                         args.seed)]


def cmd_sim_dsl(args, kv, out: Path):
    from .frontend import EdoScenario
    if args.scenario:
        sc = parse_scenario(args.scenario)
    else:
        sc = EdoScenario.random(3, 64, seed=args.seed)
    rows = run_scenario(sc, args.mode)
    return [write_scenario_report(rows, out / "dsl_report.csv", args.seed)]


def cmd_sim_stim(args, kv, out: Path):
    cmd = StimCommand(args.amplitude, args.pulse_width, args.frequency, args.channel)
    tr = simulate_pulse_train(cmd, Load(args.r_ohm, args.c_farad), args.pulses, args.mismatch_ppm,
                              not args.no_cb, v_safe=args.v_safe)
    tr.to_csv(out / "stim_trace.csv", args.seed)
    rows = [(k, p.cathodic, p.anodic, p.active_cb, p.passive, p.net, p.mismatch, p.v_end)
            for k, p in enumerate(tr.pulses)]
    write_report(out / "stim_pulses.csv", ["pulse", "q_cathodic", "q_anodic", "q_active_cb",
                                           "q_passive", "q_net", "mismatch", "v_end"], rows, args.seed)
    return [out / "stim_trace.csv", out / "stim_pulses.csv"]


def cmd_validate_approx(args, kv, out: Path):
    rep = validate_approx(args.windows, args.seed)
    return [rep.to_csv(out / "approx_correlation.csv", args.seed)]


COMMANDS = {"ingest": cmd_ingest, "features": cmd_features, "train": cmd_train, "eval": cmd_eval,
            "infer": cmd_infer, "importance": cmd_importance, "sim-dsl": cmd_sim_dsl,
            "sim-stim": cmd_sim_stim, "validate-approx": cmd_validate_approx}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": message, "type": kind}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail("usage", str(e), 2)
    try:
        kv = _config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for path in COMMANDS[args.cmd](args, kv, out):
            print(path)
    except (ConfigError, IngestError, ModelFormatError, StimError, ValueError, KeyError, OSError) as e:
        return _fail(type(e).__name__, str(e), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
