"""``narforecast`` command line: run, bench, predict, synth, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (CRITERIA, PipelineOptions, RunManifest, emit_report, load_report,
                    run_matrix, run_scenario, write_artifacts)
from .data import SyntheticProfile, embed_lags, generate_synthetic, load_series, save_series
from .errors import ConfigError, DataError, TrainingDivergence
from .model import load_network, predict_targets
from .training import ALGORITHMS, TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

DIVISIONS = {"random": "random-interleaved", "block": "contiguous-block"}
NORMALIZATIONS = {"full": "full-series", "train": "train-only"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"algorithm"}
_OPTION_KEYS = {f.name for f in fields(PipelineOptions)}

log = logging.getLogger("narforecast")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_config(path) -> dict:
    """Read ``key = value`` lines (``#`` comments) or a JSON object."""
    text = Path(path).read_text()
    if Path(path).suffix == ".json":
        conf = json.loads(text)
    else:
        conf = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            conf[key.replace("-", "_")] = _value(val)
    unknown = set(conf) - _TRAIN_KEYS - _OPTION_KEYS - {"seed", "workers"}
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return conf


def _add_data_args(p):
    g = p.add_argument_group("dataset")
    g.add_argument("--data", help="CSV file holding the series")
    g.add_argument("--column", default="0", help="value column (index or header name)")
    g.add_argument("--time-column", default=None, help="optional timestamp column (seconds)")
    g.add_argument("--synthetic", action="store_true", help="use the synthetic heart-rate generator")
    g.add_argument("--n", type=int, default=6312, help="synthetic series length")
    g.add_argument("--synth-seed", type=int, default=1)
    g.add_argument("--baseline", type=float, default=SyntheticProfile.baseline_bpm)
    g.add_argument("--drift", type=float, default=SyntheticProfile.drift_amplitude)
    g.add_argument("--noise", type=float, default=SyntheticProfile.noise_std)


def _add_model_args(p):
    p.add_argument("--config", help="config file (key = value lines or JSON)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--lags", type=int, default=None)
    p.add_argument("--division", choices=sorted(DIVISIONS), default=None)
    p.add_argument("--normalization", choices=sorted(NORMALIZATIONS), default=None)
    p.add_argument("--init", choices=("uniform-small", "nguyen-widrow"), default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--max-val-fail", type=int, default=None)
    p.add_argument("--out", help="output file (bench) or directory (run)")
    p.add_argument("--format", choices=("json", "csv", "markdown"), default="json")


def build_parser():
    parser = _Parser(prog="narforecast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="train and score one algorithm on one scenario")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--algo", choices=("lm", "br", "scg"), default="lm")
    p.add_argument("--scenario", choices=[str(k) for k in range(1, 8)], default="7")

    p = sub.add_parser("bench", help="run the algorithm x scenario grid")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--algo", choices=("lm", "br", "scg", "all"), action="append")
    p.add_argument("--scenario", choices=[str(k) for k in range(1, 8)] + ["all"], action="append")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--criterion", choices=CRITERIA, default="composite")

    p = sub.add_parser("predict", help="apply a saved network to a series (open loop)")
    _add_data_args(p)
    p.add_argument("--network", required=True, help="network snapshot JSON")
    p.add_argument("--out", help="CSV for predictions (default stdout)")

    p = sub.add_parser("synth", help="write a synthetic heart-rate series")
    _add_data_args(p)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("report", help="re-render a saved JSON report")
    p.add_argument("input", help="JSON report written by bench or run")
    p.add_argument("--format", choices=("json", "csv", "markdown"), default="markdown")
    p.add_argument("--criterion", choices=CRITERIA, default="composite")
    p.add_argument("--out")
    return parser


def _column(text):
    return int(text) if text is not None and text.isdigit() else text


def _profile(args):
    return SyntheticProfile(baseline_bpm=args.baseline, drift_amplitude=args.drift, noise_std=args.noise)


def load_dataset(args):
    """Return ``(SeriesDataset, descriptor dict)`` from the dataset flags."""
    if args.synthetic == bool(args.data):
        raise ConfigError("give exactly one of --data or --synthetic")
    if args.synthetic:
        profile = _profile(args)
        ds = generate_synthetic(args.n, args.synth_seed, profile)
        return ds, {"synthetic": profile.to_dict(), "n": args.n, "seed": args.synth_seed}
    ds = load_series(args.data, _column(args.column), _column(args.time_column))
    return ds, {"path": str(args.data), "column": args.column, "time_column": args.time_column}


def _settings(args):
    conf = read_config(args.config) if args.config else {}
    flags = {"seed": args.seed, "hidden": args.hidden, "lags": args.lags,
             "init_scheme": args.init, "max_epochs": args.max_epochs,
             "max_val_fail": args.max_val_fail,
             "division": DIVISIONS.get(args.division),
             "normalization": NORMALIZATIONS.get(args.normalization),
             "workers": getattr(args, "workers", None)}
    conf.update({k: v for k, v in flags.items() if v is not None})
    train_conf = {k: v for k, v in conf.items() if k in _TRAIN_KEYS and k != "seed"}
    options = PipelineOptions(**{k: v for k, v in conf.items() if k in _OPTION_KEYS})
    return TrainConfig.from_dict(train_conf), options, int(conf.get("seed", 0)), int(conf.get("workers", 1))


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_run(args):
    ds, descriptor = load_dataset(args)
    config, options, seed, _ = _settings(args)
    algo = args.algo.upper()
    result = run_scenario(ds, algo, int(args.scenario), config, seed, options)
    manifest = RunManifest(descriptor, seed, config.to_dict(), options.to_dict(),
                           [algo], [result.scenario])
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_artifacts(result, outdir)
        ext = {"markdown": "md"}.get(args.format, args.format)
        emit_report(result, args.format, outdir / f"result.{ext}", manifest)
        log.info("wrote %s", outdir)
    else:
        _emit(emit_report(result, args.format, None, manifest), None)
    return EXIT_OK


def _expand(values, full):
    if not values or "all" in values:
        return list(full)
    return list(dict.fromkeys(values))


def cmd_bench(args):
    ds, descriptor = load_dataset(args)
    config, options, seed, workers = _settings(args)
    algos = [a.upper() for a in _expand(args.algo, [a.lower() for a in ALGORITHMS])]
    scenarios = [int(s) for s in _expand(args.scenario, [str(k) for k in range(1, 8)])]
    results = run_matrix(ds, algos, scenarios, config, seed, options, workers=workers)
    manifest = RunManifest(descriptor, seed, config.to_dict(), options.to_dict(),
                           algos, [f"scenario{s}" for s in scenarios])
    _emit(emit_report(results, args.format, None, manifest, args.criterion), args.out)
    failed = [r for r in results if not r.ok]
    for r in failed:
        log.error("%s/%s failed: %s", r.scenario, r.algorithm, r.error)
    if failed and all("TrainingDivergence" in r.error for r in failed):
        return EXIT_DIVERGED
    return EXIT_DATA if failed else EXIT_OK


def cmd_predict(args):
    ds, _ = load_dataset(args)
    net = load_network(args.network)
    if net.normalizer is None:
        raise DataError("network snapshot carries no normalizer")
    reg = embed_lags(ds, net.d, net.normalizer)
    pred = predict_targets(net, reg, np.arange(reg.n_targets))
    lines = ["time,target,prediction,error"]
    lines += [f"{t!r},{y!r},{p!r},{y - p!r}" for t, y, p in
              zip(reg.times.tolist(), reg.raw_targets.tolist(), pred.tolist())]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_synth(args):
    args.synthetic, args.data = True, None
    ds, _ = load_dataset(args)
    if args.out:
        save_series(ds, args.out)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["time", "value"])
        w.writerows([repr(t), repr(v)] for t, v in zip(ds.times().tolist(), ds.values.tolist()))
    return EXIT_OK


def cmd_report(args):
    manifest, results = load_report(args.input)
    text = emit_report(results, args.format, None, None, args.criterion)
    if args.format == "json" and manifest is not None:
        doc = json.loads(text)
        doc["manifest"] = manifest
        text = json.dumps(doc, indent=2, sort_keys=True)
    _emit(text, args.out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "bench": cmd_bench, "predict": cmd_predict,
            "synth": cmd_synth, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"narforecast: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"narforecast: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"narforecast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
