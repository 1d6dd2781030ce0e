"""Command-line entry point: ``lstm-compress <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
A JSON config file (``--config``) may supply any flag by its long name with
dashes replaced by underscores; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, benchmark, dataset, nn_core
from .dataset import DatasetError, SeriesKey, SyntheticSpec
from .evaluation import evaluate, write_residuals
from .features import FEATURE_ORDER, FeatureError, cv_folds
from .nn_core import ModelConfig, NumericalError, VALID_HIDDEN
from .prepared import load_prepared, prepare, write_prepared
from .training import ModelFileError, TrainConfig, build_header, load_model, save_model, train, train_cv

log = logging.getLogger("lstm_compress")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _hidden_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    common.add_argument("--out", type=Path, help="output file or directory")
    common.add_argument("--format", default="all", choices=["json", "csv", "markdown", "all"])
    common.add_argument("--config", type=Path, help="JSON file with default flag values")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="lstm-compress", description="LSTM compression study for daily retail sales")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("prepare", parents=[common], help="build windows, split and scaler")
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--input", type=Path, help="sales CSV (date,store,item,sales)")
    src.add_argument("--synthetic", action="store_true", help="generate synthetic series instead")
    sp.add_argument("--fill-policy", default="reject_gaps", choices=["reject_gaps", "zero_fill"])
    sp.add_argument("--train-fraction", type=float, default=0.8)
    sp.add_argument("--series", help="keep one series STORE-ITEM (per-series mode)")
    sp.add_argument("--n-days", type=int, default=SyntheticSpec.n_days)
    sp.add_argument("--base-level", type=float, default=SyntheticSpec.base_level)
    sp.add_argument("--weekly-amplitude", type=float, default=SyntheticSpec.weekly_amplitude)
    sp.add_argument("--yearly-amplitude", type=float, default=SyntheticSpec.yearly_amplitude)
    sp.add_argument("--trend", type=float, default=SyntheticSpec.trend_per_day)
    sp.add_argument("--noise-std", type=float, default=SyntheticSpec.noise_std)
    sp.add_argument("--n-stores", type=int, default=1)
    sp.add_argument("--n-items", type=int, default=1)
    sp.add_argument("--no-window-dump", action="store_true", help="skip windows.csv")

    tp = sub.add_parser("train", parents=[common], help="train one variant")
    tp.add_argument("--data", type=Path, required=False, help="prepared directory")
    tp.add_argument("--hidden", type=int, default=64)
    tp.add_argument("--allow-any-hidden", action="store_true")
    tp.add_argument("--epochs", type=int, default=30)
    tp.add_argument("--batch-size", type=int, default=64)
    tp.add_argument("--lr", type=float, default=1e-3)
    tp.add_argument("--dropout", type=float, default=0.2)
    tp.add_argument("--clip-norm", type=float)
    tp.add_argument("--cv", type=int, help="also run expanding-window CV with this many folds")
    tp.add_argument("--log", type=Path, help="run log path (default: <out>.json)")

    ep = sub.add_parser("evaluate", parents=[common], help="score a model on the test split")
    ep.add_argument("--model", type=Path)
    ep.add_argument("--data", type=Path)
    ep.add_argument("--zero-policy", default="exclude", choices=["exclude", "epsilon"])

    wp = sub.add_parser("sweep", parents=[common], help="train and benchmark all variants")
    wp.add_argument("--data", type=Path)
    wp.add_argument("--variants", type=_hidden_list, default=list(VALID_HIDDEN))
    wp.add_argument("--reps", type=int, default=5)
    wp.add_argument("--epochs", type=int, default=30)
    wp.add_argument("--batch-size", type=int, default=64)
    wp.add_argument("--lr", type=float, default=1e-3)
    wp.add_argument("--latency-reps", type=int, default=100)
    wp.add_argument("--latency-warmup", type=int, default=10)
    wp.add_argument("--no-memory", action="store_true")
    wp.add_argument("--jobs", type=int, default=1)
    wp.add_argument("--allow-any-hidden", action="store_true")

    gp = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    gp.add_argument("--hidden", type=int, default=4)
    gp.add_argument("--seq", type=int, default=5)
    gp.add_argument("--tol", type=float, default=1e-4)

    bp = sub.add_parser("bench-latency", parents=[common], help="time single-window inference")
    bp.add_argument("--model", type=Path)
    bp.add_argument("--data", type=Path, help="prepared directory supplying the window (else random)")
    bp.add_argument("--warmup", type=int, default=10)
    bp.add_argument("--reps", type=int, default=100)
    bp.add_argument("--memory", action="store_true", help="also measure peak RSS")
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            cfg = json.loads(args.config.read_text())
        except (OSError, ValueError) as exc:
            parser.exit(EXIT_USAGE, f"cannot read config {args.config}: {exc}\n")
        explicit = _explicit_dests(parser, argv if argv is not None else sys.argv[1:], args.command)
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            if not hasattr(args, dest):
                parser.exit(EXIT_USAGE, f"unknown config key {key!r} for {args.command}\n")
            if dest in explicit:
                continue
            if dest in ("out", "data", "model", "input", "log") and value is not None:
                value = Path(value)
            setattr(args, dest, value)
    return args


def _explicit_dests(parser, argv, command) -> set[str]:
    sub = parser._subparsers._group_actions[0].choices[command]
    flags = {s: a.dest for a in sub._actions for s in a.option_strings}
    found = set()
    for tok in argv:
        name = tok.split("=", 1)[0]
        if name in flags:
            found.add(flags[name])
    return found


def _fingerprint_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(args: argparse.Namespace, fingerprint: str | None) -> dict:
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    return {
        "subcommand": args.command,
        "flags": flags,
        "base_seed": args.seed,
        "input_fingerprint": fingerprint,
        "tool_version": __version__,
        "host": benchmark.host_description(),
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required for {args.command}")


def _check_hidden(args, values):
    if args.allow_any_hidden:
        if any(v < 1 for v in values):
            raise UsageError("hidden units must be positive")
        return
    bad = [v for v in values if v not in VALID_HIDDEN]
    if bad:
        raise UsageError(f"invalid hidden size(s) {bad}; valid sizes are {', '.join(map(str, VALID_HIDDEN))} "
                         "(or pass --allow-any-hidden)")


def cmd_prepare(args) -> int:
    _require(args, "out")
    if args.input is not None:
        if not args.input.exists():
            raise DataError(f"input file not found: {args.input}")
        series = dataset.load_csv(args.input, args.fill_policy)
        fingerprint = _fingerprint_file(args.input)
        log.info("loaded %d records in %d series from %s", dataset.count_records(series), len(series), args.input)
    else:
        spec = SyntheticSpec(args.n_days, args.base_level, args.weekly_amplitude, args.yearly_amplitude,
                             args.trend, args.noise_std, args.seed)
        spec.validate()
        series = dataset.generate_synthetic_dataset(spec, args.n_stores, args.n_items)
        fingerprint = hashlib.sha256(json.dumps(asdict(spec), sort_keys=True).encode()).hexdigest()
    if args.series:
        try:
            s, i = (int(v) for v in args.series.split("-"))
        except ValueError:
            raise UsageError(f"--series must look like STORE-ITEM, got {args.series!r}") from None
        key = SeriesKey(s, i)
        if key not in series:
            raise DataError(f"series {args.series} not present in input")
        series = {key: series[key]}
    data = prepare(series, args.train_fraction)
    out = write_prepared(args.out, data, dump_windows=not args.no_window_dump)
    (out / "manifest.json").write_text(json.dumps(manifest(args, fingerprint), indent=2, sort_keys=True) + "\n")
    print(f"prepared {len(data.train_raw)} train / {len(data.test_raw)} test windows "
          f"from {len(series)} series -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args, "data", "out")
    _check_hidden(args, [args.hidden])
    data = load_prepared(args.data)
    cfg = ModelConfig(hidden_units=args.hidden, dropout_rate=args.dropout)
    mode = "per_series" if len(data.series) == 1 else "global"
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed,
                     mode=mode, cv=args.cv, clip_norm=args.clip_norm)
    run = train(cfg, tc, data.train)
    header = build_header(cfg, data.scaler, args.seed, data.fingerprint, tc)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    payload = save_model(args.out, run.weights, cfg, header)
    run_log = run.log()
    run_log["tensor_payload_bytes"] = payload
    run_log["param_count"] = benchmark.param_count(cfg)
    run_log["manifest"] = manifest(args, data.fingerprint)
    if args.cv:
        folds = cv_folds(len(data.train_raw), args.cv)
        cv = train_cv(cfg, tc, data.train, folds, data.scaler)
        run_log["cv"] = {"folds": [[list(a), list(b)] for a, b in folds], "val_mape": cv.val_mape,
                         "mean_mape": cv.mean_mape, "std_mape": cv.std_mape}
    log_path = args.log or args.out.with_suffix(args.out.suffix + ".json")
    log_path.write_text(json.dumps(run_log, indent=2, sort_keys=True) + "\n")
    print(f"trained LSTM-{args.hidden}: final train MAE {run.train_loss[-1]:.6f} (normalized), "
          f"{payload} payload bytes -> {args.out}")
    return EXIT_OK


def _check_compatible(model, data) -> None:
    h = model.header
    if h.get("feature_order") != list(FEATURE_ORDER):
        raise DataError(f"model feature order {h.get('feature_order')} does not match {list(FEATURE_ORDER)}")
    if h.get("scaler_digest") != data.scaler.digest():
        raise DataError("scaler mismatch: the model was trained with a different scaler than this prepared "
                        "data; metrics would be in the wrong units. Re-prepare or retrain.")
    if h.get("data_fingerprint") not in (None, data.fingerprint):
        raise DataError("prepared-data fingerprint differs from the one recorded in the model")


def cmd_evaluate(args) -> int:
    _require(args, "model", "data")
    model = load_model(args.model)
    data = load_prepared(args.data)
    _check_compatible(model, data)
    result = evaluate(model.config, model.weights, data.test, data.scaler, args.zero_policy)
    out = args.out or args.model.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    write_residuals(out / "residuals.csv", data.test, result)
    print(json.dumps(result.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    _require(args, "data", "out")
    _check_hidden(args, args.variants)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    data = load_prepared(args.data)
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed)
    report = benchmark.run_sweep(data, args.variants, tc, args.reps, args.out, args.latency_reps,
                                 args.latency_warmup, not args.no_memory, args.jobs)
    report.metadata["manifest"] = manifest(args, data.fingerprint)
    formats = ("json", "csv", "markdown") if args.format == "all" else ("json", args.format)
    benchmark.emit_report(report, args.out, formats)
    print(benchmark.render_markdown(report))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.hidden > 16 or args.seq > 16 or args.hidden < 1 or args.seq < 1:
        raise UsageError("gradcheck sizes are capped at --hidden <= 16 and --seq <= 16")
    cfg = ModelConfig(hidden_units=args.hidden, seq_len=args.seq)
    rep = nn_core.grad_check(cfg, args.seed, args.tol)
    for name, err in rep.block_errors.items():
        print(f"{name:8s} max rel err {err:.3e}")
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status}: worst block {rep.worst_block} ({rep.max_error:.3e}) vs tolerance {args.tol:g}")
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def cmd_bench_latency(args) -> int:
    _require(args, "model")
    if args.reps < 100 or args.warmup < 10:
        raise UsageError("bench-latency needs --reps >= 100 and --warmup >= 10")
    model = load_model(args.model)
    if args.data is not None:
        window = load_prepared(args.data).test.inputs[0]
    else:
        window = np.random.default_rng(args.seed).random((model.config.seq_len, model.config.input_dim))
    stats = benchmark.measure_latency(args.model, window, args.warmup, args.reps)
    out = asdict(stats)
    out["hidden_units"] = model.config.hidden_units
    out["payload_bytes"] = model.payload_bytes
    if args.memory:
        mem = benchmark.measure_memory(args.model, args.reps)
        out["peak_rss_mb"] = "unavailable" if mem is None else mem
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "bench-latency": cmd_bench_latency,
}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DatasetError, FeatureError, ModelFileError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
