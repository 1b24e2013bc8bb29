"""``gazecast`` command-line interface.

Subcommands: ``import``, ``synth``, ``train``, ``eval``, ``predict``, ``bench``.
Options may also come from a JSON file (``--config``, or the path in
``$GAZECAST_CONFIG``) whose keys are the long option names with dashes
replaced by underscores; explicit flags win over the file. Unknown keys are
rejected.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    Session, WindowConfig, build_samples, column_index, holdout, load_session,
    load_sessions, parse_row, train_val_split, window_inputs, FeatureCache,
)
from .errors import DataError, DomainError, NumericError
from .evaluation import BASELINES, CENTER, MEAN, bench_pipeline, evaluate, export_report, format_bench, model_predictor
from .models import ARCHS, default_dims, init_params, load_checkpoint, predict
from .saliency import PROVIDERS, PoolSpec, make_provider
from .training import TrainConfig, config_dict, save_run, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CONFIG_ENV = "GAZECAST_CONFIG"

log = logging.getLogger("gazecast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


WINDOW_DEFAULTS = {"p": 15, "q": 10, "step": 5, "segment_len": 150}
DATA_DEFAULTS = {
    "provider": "center-bias", "smap_dir": None, "frames_dir": None,
    "pool_rows": 9, "pool_cols": 12, "pool_mode": "mean", "fps": 30.0,
}
DEFAULTS = {
    "import": {"ehtask": None, "out": None, "columns": None, "stride": 1, "fps": 30.0},
    "synth": {"out": None, "n_sessions": 200, "n_frames": 150, "seed": 0, "no_maps": False},
    "train": {
        "sessions": None, "out": None, "arch": "lstm", "hidden": 128, "blocks": 2,
        **WINDOW_DEFAULTS, **DATA_DEFAULTS,
        "lr": 0.001, "batch_size": 32, "epochs": 200, "patience": 8, "seed": 0,
        "loss": "spherical_mse", "clip_norm": 5.0, "val_ratio": 0.8, "split_by_session": False,
        "test_sessions": [],
    },
    "eval": {
        "checkpoint": None, "sessions": None, "out": None, "baselines_only": False,
        "test_sessions": [], **WINDOW_DEFAULTS, **DATA_DEFAULTS,
    },
    "predict": {
        "checkpoint": None, "session": None, "f": None, "stream": False, "session_id": "stream",
        "provider": None, "smap_dir": None, "frames_dir": None,
    },
    "bench": {"checkpoint": None, "n_reps": 100, "provider": None, "frame_size": "768x576", "seed": 0},
}


def _add_window(p):
    p.add_argument("--p", type=int, help="past frames per window (15)")
    p.add_argument("--q", type=int, help="future steps to predict (10)")
    p.add_argument("--step", type=int, help="sliding-window stride (5)")
    p.add_argument("--segment-len", type=int, help="frames per segment, 0 for whole sessions (150)")


def _add_data(p, pool=True):
    p.add_argument("--provider", choices=sorted(PROVIDERS), help="saliency provider (center-bias)")
    p.add_argument("--smap-dir", help="root of precomputed SMAP files")
    p.add_argument("--frames-dir", help="root of <session>/<frame>.png images")
    if pool:
        p.add_argument("--pool-rows", type=int, help="pooling grid rows (9)")
        p.add_argument("--pool-cols", type=int, help="pooling grid columns (12)")
        p.add_argument("--pool-mode", choices=("mean", "max"), help="pooling mode (mean)")
        p.add_argument("--fps", type=float, help="session frame rate (30)")


def build_parser():
    parser = _Parser(prog="gazecast", description="Gaze forecasting from head motion and saliency.")
    parser.add_argument("--version", action="version", version=f"gazecast {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("import", help="convert EHTask logs into session CSVs")
    p.add_argument("--ehtask", help="EHTask source directory")
    p.add_argument("--out", help="output directory for session CSVs")
    p.add_argument("--columns", help='JSON field map, e.g. {"hmd_az":1,"hmd_el":2,"gaze_az":3,"gaze_el":4}')
    p.add_argument("--stride", type=int, help="keep every n-th row (1)")
    p.add_argument("--fps", type=float, help="frame rate after striding (30)")

    p = sub.add_parser("synth", help="write a synthetic corpus with known gaze structure")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n-sessions", type=int, help="number of sessions (200)")
    p.add_argument("--n-frames", type=int, help="frames per session (150)")
    p.add_argument("--seed", type=int, help="generator seed (0)")
    p.add_argument("--no-maps", action="store_true", default=None, help="skip SMAP files")

    p = sub.add_parser("train", help="train an LSTM or TSMixer predictor")
    p.add_argument("--sessions", help="directory of session CSVs")
    p.add_argument("--out", help="run directory")
    p.add_argument("--arch", help=f"one of {', '.join(ARCHS)}")
    p.add_argument("--hidden", type=int, help="LSTM hidden size / TSMixer feature-MLP width (128)")
    p.add_argument("--blocks", type=int, help="TSMixer blocks (2)")
    _add_window(p)
    _add_data(p)
    p.add_argument("--lr", type=float, help="Adam learning rate (0.001)")
    p.add_argument("--batch-size", type=int, help="minibatch size (32)")
    p.add_argument("--epochs", type=int, help="maximum epochs (200)")
    p.add_argument("--patience", type=int, help="early-stopping patience (8)")
    p.add_argument("--seed", type=int, help="init, split and shuffle seed (0)")
    p.add_argument("--loss", choices=("spherical_mse", "angular"), help="training loss (spherical_mse)")
    p.add_argument("--clip-norm", type=float, help="global gradient-norm clip, 0 disables (5)")
    p.add_argument("--val-ratio", type=float, help="training share of the train/val split (0.8)")
    p.add_argument("--split-by-session", action="store_true", default=None,
                   help="train/val split over whole sessions instead of samples")
    p.add_argument("--test-sessions", nargs="*", help="session ids held out entirely")

    p = sub.add_parser("eval", help="score a checkpoint and baselines on a test set")
    p.add_argument("--checkpoint", help="model checkpoint (.ckpt)")
    p.add_argument("--sessions", help="directory of test session CSVs")
    p.add_argument("--out", help="report directory")
    p.add_argument("--baselines-only", action="store_true", default=None, help="skip the model, report baselines")
    p.add_argument("--test-sessions", nargs="*", help="restrict to these session ids")
    _add_window(p)
    _add_data(p)

    p = sub.add_parser("predict", help="emit q x 2 gaze offsets per anchor frame")
    p.add_argument("--checkpoint", help="model checkpoint (.ckpt)")
    p.add_argument("--session", help="session CSV")
    p.add_argument("--f", type=int, help="single 0-based anchor frame")
    p.add_argument("--stream", action="store_true", default=None, help="read session rows from stdin")
    p.add_argument("--session-id", help="id used for saliency lookups in stream mode")
    _add_data(p, pool=False)

    p = sub.add_parser("bench", help="per-stage latency of the inference pipeline")
    p.add_argument("--checkpoint", help="model checkpoint (.ckpt)")
    p.add_argument("--n-reps", type=int, help="timed repetitions per stage (100)")
    p.add_argument("--provider", choices=sorted(PROVIDERS), help="saliency provider (from checkpoint)")
    p.add_argument("--frame-size", help="input frame WxH (768x576)")
    p.add_argument("--seed", type=int, help="seed for the random test input (0)")

    for name in DEFAULTS:
        sub.choices[name].add_argument("--config", help=f"JSON options file (default ${CONFIG_ENV})")
    return parser


def load_config_file(path, command):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    if command in data and isinstance(data[command], dict):
        data = data[command]
    unknown = sorted(set(data) - set(DEFAULTS[command]))
    if unknown:
        raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    return data


def effective_options(args) -> dict:
    """Defaults, then the config file, then explicit flags. ``_explicit`` records
    which keys the user set, so checkpoint metadata does not override them."""
    opts = dict(DEFAULTS[args.command])
    path = args.config or os.environ.get(CONFIG_ENV)
    explicit = set()
    if path:
        from_file = load_config_file(path, args.command)
        opts.update(from_file)
        explicit.update(from_file)
    for key in DEFAULTS[args.command]:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
            explicit.add(key)
    opts["_explicit"] = explicit
    return opts


def _public(opts):
    return {k: (sorted(v) if isinstance(v, set) else v) for k, v in opts.items() if not k.startswith("_")}


def _require(opts, *keys):
    for k in keys:
        if opts.get(k) in (None, ""):
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _window(opts):
    return WindowConfig(opts["p"], opts["q"], opts["step"], opts["segment_len"] or None)


def _pool(opts):
    return PoolSpec(opts["pool_rows"], opts["pool_cols"], opts["pool_mode"])


def _provider(opts):
    return make_provider(opts["provider"], frames_root=opts.get("frames_dir"), smap_root=opts.get("smap_dir"))


def _write_config(out_dir, command, opts):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "version": __version__, "options": _public(opts)}
    (out_dir / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_import(opts):
    from .ehtask import import_ehtask

    _require(opts, "ehtask", "out")
    columns = opts["columns"]
    if isinstance(columns, str):
        try:
            columns = json.loads(columns)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--columns is not valid JSON: {exc}") from None
    result = import_ehtask(opts["ehtask"], opts["out"], columns, opts["stride"], opts["fps"])
    _write_config(opts["out"], "import", opts)
    print(f"wrote {len(result.sessions)} sessions, read {result.rows_read} rows, "
          f"skipped {len(result.skipped)} (see import.log)")


def cmd_synth(opts):
    from .synthetic import SyntheticConfig, make_corpus

    _require(opts, "out")
    corpus = make_corpus(SyntheticConfig(n_sessions=opts["n_sessions"], n_frames=opts["n_frames"], seed=opts["seed"]))
    corpus.write(opts["out"], maps=not opts["no_maps"])
    _write_config(opts["out"], "synth", opts)
    print(f"wrote {len(corpus.sessions)} sessions to {opts['out']}")


def cmd_train(opts):
    _require(opts, "sessions", "out")
    if opts["arch"] not in ARCHS:
        raise UsageError(f"unknown architecture {opts['arch']!r}; choose from {', '.join(ARCHS)}")
    wcfg, pool = _window(opts), _pool(opts)
    tcfg = TrainConfig(
        learning_rate=opts["lr"], batch_size=opts["batch_size"], max_epochs=opts["epochs"],
        patience=opts["patience"], seed=opts["seed"], loss=opts["loss"],
        clip_norm=opts["clip_norm"] or None,
    )
    sessions = load_sessions(opts["sessions"], fps=opts["fps"])
    samples = build_samples(sessions, wcfg, _provider(opts), pool)
    samples, _ = holdout(samples, opts["test_sessions"] or [])
    if len(samples) < 2:
        raise DataError(f"only {len(samples)} training windows; need at least 2")
    trainset, valset = train_val_split(samples, opts["val_ratio"], opts["seed"], opts["split_by_session"])
    if not valset or not trainset:
        raise DataError("train/validation split left one side empty")
    dims = default_dims(opts["arch"], pool.n_features + 4, wcfg.p, wcfg.q, opts["hidden"], opts["blocks"])
    model = init_params(opts["arch"], dims, seed=opts["seed"])
    model.meta = {
        "window": {"p": wcfg.p, "q": wcfg.q, "step": wcfg.step, "segment_len": wcfg.segment_len},
        "pool": {"grid_rows": pool.grid_rows, "grid_cols": pool.grid_cols, "mode": pool.mode},
        "provider": opts["provider"], "fps": opts["fps"],
    }
    best, history = train(trainset, valset, model, tcfg)
    best.meta = history.final.meta = model.meta
    config = {"command": "train", "version": __version__, "options": _public(opts), "train": config_dict(tcfg),
              "n_train": len(trainset), "n_val": len(valset)}
    save_run(opts["out"], best, history.final, history, config)
    print(f"trained {opts['arch']} for {len(history)} epochs; best epoch {history.best_epoch + 1} "
          f"val loss {history.val_loss[history.best_epoch]:.4f}; run saved to {opts['out']}")


def _meta_opts(opts, mp):
    """Fill window/pool/provider options from checkpoint metadata unless given explicitly."""
    merged = dict(opts)
    meta = mp.meta or {}
    explicit = opts.get("_explicit", set())
    for k, v in meta.get("window", {}).items():
        if k not in explicit:
            merged[k] = v
    pool = meta.get("pool", {})
    for src, dst in (("grid_rows", "pool_rows"), ("grid_cols", "pool_cols"), ("mode", "pool_mode")):
        if src in pool and dst not in explicit:
            merged[dst] = pool[src]
    for k in ("provider", "fps"):
        if k in meta and (k not in explicit or merged.get(k) is None):
            merged[k] = meta[k]
    return merged


def cmd_eval(opts):
    _require(opts, "sessions", "out")
    predictors = {}
    if not opts["baselines_only"]:
        _require(opts, "checkpoint")
        mp = load_checkpoint(opts["checkpoint"])
        opts = _meta_opts(opts, mp)
        predictors[mp.arch] = model_predictor(mp)
    predictors[CENTER] = BASELINES[CENTER]
    predictors[MEAN] = BASELINES[MEAN]
    wcfg, pool = _window(opts), _pool(opts)
    sessions = load_sessions(opts["sessions"], fps=opts["fps"])
    if opts["test_sessions"]:
        wanted = set(opts["test_sessions"])
        sessions = [s for s in sessions if s.id in wanted]
    samples = build_samples(sessions, wcfg, _provider(opts), pool)
    if not samples:
        raise DataError("no evaluable windows in the test sessions")
    report = evaluate(predictors, samples, fps=opts["fps"])
    out = Path(opts["out"])
    export_report(report, out / "report.csv")
    _write_config(out, "eval", opts)
    print((out / "report.txt").read_text(), end="")


def _prediction_row(session_id, f, pred):
    return [session_id, f, *(f"{v:.6f}" for v in pred.reshape(-1))]


def cmd_predict(opts):
    _require(opts, "checkpoint")
    mp = load_checkpoint(opts["checkpoint"])
    opts = _meta_opts(opts, mp)
    if opts["provider"] is None:
        opts["provider"] = "center-bias"
    meta = mp.meta or {}
    wcfg = WindowConfig(mp.p, mp.q, 1, None)
    pool = PoolSpec(**meta.get("pool", {})) if meta.get("pool") else PoolSpec()
    if pool.n_features + 4 != mp.input_dim:
        raise DataError(f"checkpoint input_dim {mp.input_dim} does not match pooling grid {pool}")
    cache = FeatureCache(_provider(opts), pool)
    fps = meta.get("fps", 30.0)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["session", "frame"] + [f"{a}_{t}" for t in range(1, mp.q + 1) for a in ("az", "el")])
    dtype = mp.values()[0].dtype

    def emit(session, f, features, label=None):
        visual, motion, _ = window_inputs(session, f, wcfg, features)
        x = np.hstack([visual, motion])[None].astype(dtype)
        out.writerow(_prediction_row(session.id, f if label is None else label, predict(mp, x)[0]))

    if opts["stream"]:
        return _predict_stream(opts, mp, cache, fps, emit)
    _require(opts, "session")
    session = load_session(opts["session"], fps=fps)
    if opts["f"] is not None:
        if not mp.p - 1 <= opts["f"] < session.T:
            raise UsageError(f"--f must lie in [{mp.p - 1}, {session.T - 1}] for this session")
        frames = [opts["f"]]
    else:
        frames = range(mp.p - 1, session.T)
    for f in frames:
        emit(session, f, cache)


def _predict_stream(opts, mp, cache, fps, emit):
    reader = csv.reader(sys.stdin)
    try:
        header = next(reader)
    except StopIteration:
        return
    col = column_index(header, "<stdin>")
    sid = opts["session_id"]
    keep = mp.p + 1
    rows = []
    first = None
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        idx, pose, _ = parse_row(row, col, len(header), "<stdin>", line)
        if first is None:
            first = idx
        elif idx != rows[-1][0] + 1:
            raise DataError(f"<stdin>:{line}: frame index {idx} does not follow {rows[-1][0]}")
        rows.append((idx, pose))
        rows = rows[-keep:]
        if len(rows) >= mp.p:
            offset = rows[0][0]
            session = Session(sid, [r[1] for r in rows], np.full((len(rows), 2), np.nan), fps=fps)
            emit(session, len(rows) - 1, lambda s, i: cache(s, i + offset), label=idx)
            sys.stdout.flush()


def cmd_bench(opts):
    _require(opts, "checkpoint")
    if opts["n_reps"] < 1:
        raise UsageError("--n-reps must be at least 1")
    mp = load_checkpoint(opts["checkpoint"])
    meta = mp.meta or {}
    name = opts["provider"] or meta.get("provider", "center-bias")
    if name == "precomputed":
        name = "spectral-residual"  # file lookups do not measure model cost
    try:
        w, h = (int(v) for v in opts["frame_size"].lower().split("x"))
    except ValueError:
        raise UsageError(f"--frame-size must look like 768x576, got {opts['frame_size']!r}") from None
    pool = PoolSpec(**meta["pool"]) if meta.get("pool") else PoolSpec()
    result = bench_pipeline(mp, make_provider(name), opts["n_reps"], (w, h), pool, opts["seed"])
    print(f"# provider={name} arch={mp.arch} frame={w}x{h}")
    print(format_bench(result, opts["n_reps"]), end="")


COMMANDS = {
    "import": cmd_import, "synth": cmd_synth, "train": cmd_train,
    "eval": cmd_eval, "predict": cmd_predict, "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](effective_options(args))
    except (UsageError, DomainError) as exc:
        print(f"gazecast {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"gazecast {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"gazecast {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
