"""``pefml`` command line.

Every command writes into ``--out`` (default ``.``) and is deterministic
given its inputs, config and ``--seed``. Exit status is 0 on success, 1 for
data or model failures and 2 for usage or configuration errors. Failures are
reported on stderr as a one-line JSON object ``{"error": ..., "detail": ...}``.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import automl, gpr, ingest, synthetic
from .errors import DataError, PefError
from .metrics import evaluate
from .persistence import data_fingerprint, dumps, load_model, save_model
from .preprocess import Normalization, iqr_filter, screen_invalid, sigma_filter
from .well_data import DEPTH, INPUT_CURVES, TARGET_CURVE, compute_statistics, DatasetSplit, split_dataset

# Split proportions used when no explicit counts are configured.
DEFAULT_SPLIT = (4922, 895, 2603)
CI_LEVELS = (0.95, 0.99)
USAGE_REASONS = {"no data"}


class ConfigError(Exception):
    def __init__(self, reason, detail=None):
        super().__init__(reason if detail is None else f"{reason}: {detail}")
        self.reason = reason
        self.detail = detail


# -- config -------------------------------------------------------------------

CONFIG_KEYS = {
    "data", "mnemonic_map", "split", "model", "automl", "ci_level", "out", "format", "synth", "seed", "norm_scope",
}


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("unreadable config", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("invalid config", str(exc)) from None
    if not isinstance(cfg, dict):
        raise ConfigError("invalid config", "top level must be an object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError("invalid config", f"unknown keys {sorted(unknown)}")
    level = cfg.get("ci_level", 0.95)
    if level not in CI_LEVELS:
        raise ConfigError("invalid config", f"ci_level must be one of {CI_LEVELS}")
    return cfg


def _seed(args, cfg):
    s = args.seed if args.seed is not None else cfg.get("seed", 42)
    if not isinstance(s, int) or s < 0 or s >= 2**64:
        raise ConfigError("invalid seed", repr(s))
    return s


def _out(args, cfg):
    out = Path(args.out or cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _format(args, cfg):
    fmt = args.format or cfg.get("format") or "csv"
    if fmt not in ("las", "csv"):
        raise ConfigError("invalid format", fmt)
    return fmt


def _data_path(args, cfg):
    path = getattr(args, "data", None) or cfg.get("data")
    if not path:
        raise ConfigError("missing input", "no data path given")
    return path


# -- io helpers -----------------------------------------------------------------


def _read(path, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ingest.DepthReorderedWarning)
        return ingest.read_dataset(path, cfg.get("mnemonic_map"))


def _write_dataset(ds, path, fmt):
    text = ingest.write_las(ingest.from_dataset(ds)) if fmt == "las" else ingest.write_csv(ds)
    Path(path).write_text(text)


def _write_json(path, obj):
    Path(path).write_text(dumps(obj))


def _emit(obj):
    sys.stdout.write(dumps(obj))


def _xy(ds, rows=None):
    """Complete-row design matrix and target; ``rows`` restricts to a subset."""
    X = ds.matrix(INPUT_CURVES)
    y = ds.matrix([TARGET_CURVE])[:, 0] if TARGET_CURVE in ds else np.full(ds.row_count, np.nan)
    if rows is not None:
        X, y = X[rows], y[rows]
    keep = np.all(np.isfinite(X), axis=1) & np.isfinite(y)
    return X[keep], y[keep]


def _split_for(ds, args, cfg, seed):
    path = getattr(args, "split", None)
    if path:
        with open(path) as fh:
            split = DatasetSplit.from_dict(json.load(fh))
        if any(p.size and p.max() >= ds.row_count for p in split.parts()):
            raise DataError("split mismatch", "split indices exceed dataset rows")
        return split
    sc = cfg.get("split", {})
    counts = sc.get("counts")
    if counts is None:
        n = ds.row_count
        total = sum(DEFAULT_SPLIT)
        a = round(n * DEFAULT_SPLIT[0] / total)
        b = round(n * DEFAULT_SPLIT[1] / total)
        counts = (a, b, n - a - b)
    return split_dataset(ds, counts, sc.get("seed", seed), sc.get("strategy", "shuffled"))


def _normalization(ds, Xtr, ytr, args, cfg):
    """Min-max parameters from the training rows, or from every complete row."""
    scope = getattr(args, "norm_scope", None) or cfg.get("norm_scope", "train")
    if scope not in ("train", "all"):
        raise ConfigError("invalid norm_scope", repr(scope))
    if scope == "all":
        return Normalization.fit(*_xy(ds))
    return Normalization.fit(Xtr, ytr)


def _predictions_table(path):
    """Parse a predictions CSV into a dict of float columns (NaN for blanks)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DataError("no data", f"{path} is empty")
    header = lines[0].split(",")
    if header[:2] != [DEPTH, "predicted"]:
        raise DataError("invalid predictions file", f"unexpected header {header}")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    cols = {}
    for j, h in enumerate(header):
        try:
            cols[h] = np.array([float(r[j]) if r[j] != "" else np.nan for r in rows], dtype=np.float64)
        except (ValueError, IndexError):
            raise DataError("parse error", f"{path}: column {h}") from None
    return cols


def _aligned(pred_path, truth_path, cfg):
    cols = _predictions_table(pred_path)
    truth = _read(truth_path, cfg)
    if TARGET_CURVE not in truth:
        raise DataError("unknown curve", TARGET_CURVE)
    depth = cols[DEPTH]
    if depth.size == 0:
        raise DataError("no data", "predictions file has no rows")
    pos = np.searchsorted(truth.depth, depth)
    pos = np.minimum(pos, truth.row_count - 1)
    if truth.row_count == 0 or not np.array_equal(truth.depth[pos], depth):
        raise DataError("alignment", "prediction depths do not match truth depths")
    actual = truth.curve(TARGET_CURVE).as_nan()[pos]
    keep = np.isfinite(actual) & np.isfinite(cols["predicted"])
    if not np.any(keep):
        raise DataError("no data", "no rows with both truth and prediction")
    out = {k: v[keep] for k, v in cols.items()}
    out["actual"] = actual[keep]
    return out


def _fmt(x):
    return ingest.fmt_float(x)


# -- commands -----------------------------------------------------------------


def cmd_ingest(args, cfg):
    ds = _read(_data_path(args, cfg), cfg)
    out, fmt = _out(args, cfg), _format(args, cfg)
    _write_dataset(ds, out / f"dataset.{fmt}", fmt)
    summary = {"rows": ds.row_count, "curves": list(ds.mnemonics), "screening": screen_invalid(ds).counts}
    _write_json(out / "ingest.json", summary)
    _emit(summary)


def cmd_stats(args, cfg):
    ds = _read(_data_path(args, cfg), cfg)
    if TARGET_CURVE not in ds:
        raise DataError("unknown curve", TARGET_CURVE)
    target = ds.curve(TARGET_CURVE)
    stats = {}
    for m in ds.mnemonics:
        s = compute_statistics(ds.curve(m), target)
        stats[m] = s.to_dict()
    _write_json(_out(args, cfg) / "stats.json", stats)
    _emit(stats)


def cmd_split(args, cfg):
    seed = _seed(args, cfg)
    ds = _read(_data_path(args, cfg), cfg)
    sc = dict(cfg.get("split", {}))
    if args.counts:
        try:
            sc["counts"] = [int(c) for c in args.counts.split(",")]
        except ValueError:
            raise ConfigError("invalid split counts", args.counts) from None
    if args.strategy:
        sc["strategy"] = args.strategy
    split = _split_for(ds, argparse.Namespace(split=None), dict(cfg, split=sc), seed)
    out, fmt = _out(args, cfg), _format(args, cfg)
    _write_json(out / "split.json", split.to_dict())
    for name, idx in zip(("train", "test", "validation"), split.parts()):
        _write_dataset(ds.take(idx), out / f"{name}.{fmt}", fmt)
    _emit({k: len(v) for k, v in split.to_dict().items()})


def cmd_preprocess(args, cfg):
    ds = _read(_data_path(args, cfg), cfg)
    report = screen_invalid(ds)
    bad = report.flagged.copy()
    outliers = {}
    if args.outliers != "none":
        filt = iqr_filter if args.outliers == "iqr" else sigma_filter
        for m in ds.mnemonics:
            v = ds.curve(m).as_nan()
            flags = np.zeros(ds.row_count, dtype=bool)
            ok = ~bad & np.isfinite(v)
            flags[ok] = filt(v[ok])
            outliers[m] = int(flags.sum())
            bad |= flags
    clean = ds.take(np.flatnonzero(~bad))
    out, fmt = _out(args, cfg), _format(args, cfg)
    _write_dataset(clean, out / f"clean.{fmt}", fmt)
    summary = {"screening": report.to_dict(), "outliers": outliers, "rows_in": ds.row_count, "rows_out": clean.row_count}
    present = [m for m in INPUT_CURVES if m in clean]
    if len(present) == len(INPUT_CURVES) and TARGET_CURVE in clean and clean.row_count >= 2:
        X, y = _xy(clean)
        if y.size >= 2:
            summary["normalization"] = Normalization.fit(X, y).to_dict()
    _write_json(out / "preprocess.json", summary)
    _emit({k: summary[k] for k in ("rows_in", "rows_out")})


def _model_spec(args, cfg):
    mc = dict(cfg.get("model", {}))
    family = args.family or mc.get("family", "gpr")
    if family not in automl.FAMILY_ORDER:
        raise ConfigError("unknown model family", family)
    params = dict(mc.get("params", {}))
    if args.params:
        try:
            params.update(json.loads(args.params))
        except json.JSONDecodeError as exc:
            raise ConfigError("invalid params", str(exc)) from None
    return family, params


def _metrics(model, X, y):
    return evaluate(y, model.predict(X)).to_dict()


def cmd_train(args, cfg):
    seed = _seed(args, cfg)
    family, params = _model_spec(args, cfg)
    ds = _read(_data_path(args, cfg), cfg)
    if ds.row_count == 0:
        raise DataError("no data", "dataset has no rows")
    split = _split_for(ds, args, cfg, seed)
    Xtr, ytr = _xy(ds, split.train_indices)
    Xte, yte = _xy(ds, split.test_indices)
    if ytr.size == 0:
        raise DataError("no data", "training split has no complete rows")
    norm = _normalization(ds, Xtr, ytr, args, cfg)
    model = automl.fit_family(family, params, Xtr, ytr, norm, seed)
    out = _out(args, cfg)
    meta = {"seed": seed, "params": params, "train_fingerprint": data_fingerprint(Xtr, ytr)}
    save_model(model, out / "model.json", meta)
    report = {"family": family, "train": _metrics(model, Xtr, ytr)}
    if yte.size:
        report["test"] = _metrics(model, Xte, yte)
    _write_json(out / "metrics.json", report)
    _emit(report)


def cmd_automl(args, cfg):
    seed = _seed(args, cfg)
    ac = dict(cfg.get("automl", {}))
    families = args.families.split(",") if args.families else ac.get("families", list(automl.FAMILY_ORDER))
    budget = args.budget if args.budget is not None else ac.get("budget", 15)
    for f in families:
        if f not in automl.FAMILY_ORDER:
            raise ConfigError("unknown model family", f)
    if not isinstance(budget, int) or budget < 3:
        raise ConfigError("invalid budget", "need an integer of at least 3")
    ds = _read(_data_path(args, cfg), cfg)
    if ds.row_count == 0:
        raise DataError("no data", "dataset has no rows")
    split = _split_for(ds, args, cfg, seed)
    Xtr, ytr = _xy(ds, split.train_indices)
    Xsel, ysel = _xy(ds, split.test_indices)
    Xho, yho = _xy(ds, split.validation_indices)
    if ytr.size == 0 or ysel.size == 0:
        raise DataError("no data", "training and selection splits need complete rows")
    norm = _normalization(ds, Xtr, ytr, args, cfg)
    result = automl.run_automl(Xtr, ytr, Xsel, ysel, families, budget, seed, norm)
    board = result.leaderboard
    out = _out(args, cfg)
    _write_json(out / "leaderboard.json", board.to_dict())
    if args.timings:
        _write_json(out / "timings.json", board.timings())
    w = board.winner
    meta = {"seed": seed, "params": automl._plain(w.params), "trial": w.index, "train_fingerprint": data_fingerprint(Xtr, ytr)}
    save_model(result.winner_model, out / "model.json", meta)
    report = {"family": w.family, "train": _metrics(result.winner_model, Xtr, ytr), "selection": _metrics(result.winner_model, Xsel, ysel)}
    if yho.size:
        report["holdout"] = _metrics(result.winner_model, Xho, yho)
    _write_json(out / "metrics.json", report)
    sys.stdout.write(board.format_table() + "\n")


def cmd_predict(args, cfg):
    level = args.level if args.level is not None else cfg.get("ci_level", 0.95)
    if level not in CI_LEVELS:
        raise ConfigError("invalid ci level", f"{level} not in {CI_LEVELS}")
    model = load_model(args.model)
    ds = _read(_data_path(args, cfg), cfg)
    X = ds.matrix(INPUT_CURVES)
    ok = np.all(np.isfinite(X), axis=1)
    is_gp = model.family == "gpr"
    cols = [np.full(ds.row_count, np.nan) for _ in range(4 if is_gp else 1)]
    if np.any(ok):
        if is_gp:
            p = gpr.predict_gpr(model, X[ok], level)
            for c, v in zip(cols, (p.mean, p.lower, p.upper, p.std)):
                c[ok] = v
        else:
            cols[0][ok] = model.predict(X[ok])
    header = [DEPTH, "predicted"] + (["lower", "upper", "std"] if is_gp else [])
    lines = [",".join(header)]
    for i in range(ds.row_count):
        cells = [_fmt(ds.depth[i])] + ["" if not np.isfinite(c[i]) else _fmt(c[i]) for c in cols]
        lines.append(",".join(cells))
    out = _out(args, cfg)
    (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    _emit({"rows": ds.row_count, "predicted": int(ok.sum()), "family": model.family})


def _evaluation(al):
    lower, upper = al.get("lower"), al.get("upper")
    return evaluate(al["actual"], al["predicted"], lower, upper)


def cmd_evaluate(args, cfg):
    al = _aligned(args.predictions, args.truth, cfg)
    res = _evaluation(al).to_dict()
    _write_json(_out(args, cfg) / "evaluation.json", res)
    _emit(res)


def _svg_scatter(actual, predicted, lo, hi):
    size, pad = 400, 50
    span = hi - lo if hi > lo else 1.0

    def sx(v):
        return pad + (v - lo) / span * (size - 2 * pad)

    def sy(v):
        return size - pad - (v - lo) / span * (size - 2 * pad)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="{pad}" y="{pad}" width="{size - 2 * pad}" height="{size - 2 * pad}" fill="none" stroke="black"/>',
        f'<line x1="{sx(lo):.3f}" y1="{sy(lo):.3f}" x2="{sx(hi):.3f}" y2="{sy(hi):.3f}" stroke="red"/>',
    ]
    for a, p in zip(actual, predicted):
        parts.append(f'<circle cx="{sx(a):.3f}" cy="{sy(p):.3f}" r="2" fill="steelblue"/>')
    parts += [
        f'<text x="{size / 2:.0f}" y="{size - 12}" text-anchor="middle">Actual PEF</text>',
        f'<text x="14" y="{size / 2:.0f}" text-anchor="middle" transform="rotate(-90 14 {size / 2:.0f})">Predicted PEF</text>',
        f'<text x="{pad}" y="{size - pad + 16}">{lo:.4g}</text>',
        f'<text x="{size - pad}" y="{size - pad + 16}" text-anchor="end">{hi:.4g}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def cmd_report(args, cfg):
    al = _aligned(args.predictions, args.truth, cfg)
    a, p = al["actual"], al["predicted"]
    lo = float(min(a.min(), p.min()))
    hi = float(max(a.max(), p.max()))
    out = _out(args, cfg)
    lines = ["actual,predicted"] + [f"{_fmt(x)},{_fmt(y)}" for x, y in zip(a, p)]
    (out / "crossplot.csv").write_text("\n".join(lines) + "\n")
    has_ci = "lower" in al
    lines = [f"{DEPTH},actual,predicted,lower,upper"]
    for i in range(a.size):
        ci = f"{_fmt(al['lower'][i])},{_fmt(al['upper'][i])}" if has_ci else ","
        lines.append(f"{_fmt(al[DEPTH][i])},{_fmt(a[i])},{_fmt(p[i])},{ci}")
    (out / "depth_track.csv").write_text("\n".join(lines) + "\n")
    (out / "crossplot.svg").write_text(_svg_scatter(a, p, lo, hi))
    report = {"n": int(a.size), "unit_line": [[lo, lo], [hi, hi]], "metrics": _evaluation(al).to_dict()}
    _write_json(out / "report.json", report)
    _emit(report)


def cmd_synth(args, cfg):
    seed = _seed(args, cfg)
    sc = dict(cfg.get("synth", {}))
    layers = args.layers if args.layers is not None else sc.get("layers")
    noise = sc.get("noise")
    if layers:
        rows = args.rows if args.rows is not None else sc.get("rows_per_layer", 60)
        wc = synthetic.random_layered_config(layers, rows, seed, noise)
    else:
        wc = synthetic.default_config(seed, noise)
    ds = synthetic.generate_synthetic_well(wc)
    out, fmt = _out(args, cfg), _format(args, cfg)
    _write_dataset(ds, out / f"synthetic.{fmt}", fmt)
    _emit({"rows": ds.row_count, "curves": list(ds.mnemonics)})


# -- parser ---------------------------------------------------------------------


def build_parser():
    def globals_(default):
        g = argparse.ArgumentParser(add_help=False, argument_default=default)
        g.add_argument("--config", help="JSON run configuration")
        g.add_argument("--seed", type=int, help="seed for every stochastic step")
        g.add_argument("--out", help="output directory")
        g.add_argument("--format", choices=("las", "csv"), help="dataset output format")
        return g

    # Global flags are accepted before or after the subcommand; the
    # subcommand copies suppress their defaults so they never mask the first.
    common = globals_(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="pefml", description=__doc__.splitlines()[0], parents=[globals_(None)])
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, fn, help_):
        s = sub.add_parser(name, help=help_, parents=[common])
        s.set_defaults(func=fn)
        return s

    s = cmd("ingest", cmd_ingest, "parse LAS/CSV into a canonical dataset")
    s.add_argument("data", nargs="?")
    s = cmd("stats", cmd_stats, "summary statistics per curve")
    s.add_argument("data", nargs="?")
    s = cmd("split", cmd_split, "train/test/validation split")
    s.add_argument("data", nargs="?")
    s.add_argument("--counts", help="train,test,validation row counts")
    s.add_argument("--strategy", choices=("shuffled", "sequential"))
    s = cmd("preprocess", cmd_preprocess, "screen invalid values and outliers")
    s.add_argument("data", nargs="?")
    s.add_argument("--outliers", choices=("none", "iqr", "sigma"), default="none")
    s = cmd("train", cmd_train, "fit one model family")
    s.add_argument("data", nargs="?")
    s.add_argument("--split", help="split.json from the split command")
    s.add_argument("--family")
    s.add_argument("--params", help="JSON object of hyperparameters")
    s.add_argument("--norm-scope", choices=("train", "all"), help="rows used to fit min-max scaling (default train)")
    s = cmd("automl", cmd_automl, "search model families and hyperparameters")
    s.add_argument("data", nargs="?")
    s.add_argument("--split", help="split.json from the split command")
    s.add_argument("--families", help="comma-separated family list")
    s.add_argument("--budget", type=int, help="trials per family")
    s.add_argument("--timings", action="store_true", help="also write per-trial wall times")
    s.add_argument("--norm-scope", choices=("train", "all"), help="rows used to fit min-max scaling (default train)")
    s = cmd("predict", cmd_predict, "predict PEF with a saved model")
    s.add_argument("model")
    s.add_argument("data", nargs="?")
    s.add_argument("--level", type=float, help="interval level for GPR models")
    s = cmd("evaluate", cmd_evaluate, "score predictions against truth")
    s.add_argument("predictions")
    s.add_argument("truth")
    s = cmd("report", cmd_report, "cross-plot, depth track and SVG scatter")
    s.add_argument("predictions")
    s.add_argument("truth")
    s = cmd("synth", cmd_synth, "write a synthetic well")
    s.add_argument("--layers", type=int, help="random layered well with this many layers")
    s.add_argument("--rows", type=int, help="rows per layer for --layers")
    return p


def _fail(reason, detail, code):
    sys.stderr.write(json.dumps({"error": reason, "detail": detail}, sort_keys=True) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except ConfigError as exc:
        return _fail(exc.reason, exc.detail, 2)
    except PefError as exc:
        return _fail(exc.reason, exc.detail, 2 if exc.reason in USAGE_REASONS else 1)
    except OSError as exc:
        return _fail("io error", f"{exc.filename}: {exc.strerror}" if exc.filename else str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
