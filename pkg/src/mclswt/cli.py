"""Command-line entry point.

Subcommands: synth | train | eval | bench | shapes | gradcheck | sweep.

Configuration is file-first: every run is reproducible from a JSON config
plus a seed.  Flags override config values, ``--set section.key=value``
overrides anything by path, and the environment variable MCLSWT_SEED, when
set, overrides every seed last (useful for batch farms).  Unknown config
keys are rejected rather than ignored.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import (SynthConfig, TrialSet, generate_synthetic_erd, read_trialset,
                   split_new_subject, write_trialset)
from .errors import (ConfigurationError, DataFormatError, DimensionError,
                     NumericError, OptimizerError)
from .gradcheck import gradient_suite
from .mirror import ChannelMirrorMap, PairError
from .model import (REFERENCE_BATCH, ModelParams, SwtConfig, conformance_report,
                    init_model, load_checkpoint, save_checkpoint)
from .preprocess import EpochBoundsError, bandpass_array, standardize_array
from .train import (TrainConfig, attention_scaling, bench_inference, evaluate,
                    flops_estimate, hyper_sweep, pair_separation, train)

SEED_ENV = "MCLSWT_SEED"

_CLI_ERRORS = (ConfigurationError, DataFormatError, DimensionError, NumericError,
               OptimizerError, PairError, EpochBoundsError, OSError)


@dataclass
class PreprocessOptions:
    """Optional per-trial filtering applied after loading a trial set."""

    bandpass_low: float | None = None
    bandpass_high: float | None = None
    bandpass_order: int = 4
    standardize: bool = False
    standardize_decay: float = 0.999
    standardize_eps: float = 1e-4


@dataclass
class MirrorOptions:
    swap: list = field(default_factory=lambda: [["C3", "C4"]])
    fixed: list = field(default_factory=lambda: ["Cz"])


@dataclass
class DataOptions:
    path: str | None = None
    train_subjects: list = field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    test_subjects: list = field(default_factory=lambda: [6, 7, 8])


@dataclass
class OutputOptions:
    dir: str = "runs"


@dataclass
class RunConfig:
    model: SwtConfig
    train: TrainConfig
    synth: SynthConfig
    preprocess: PreprocessOptions
    mirror: MirrorOptions
    data: DataOptions
    out: OutputOptions

    def as_dict(self) -> dict:
        return {name: asdict(getattr(self, name))
                for name in ("model", "train", "synth", "preprocess", "mirror",
                             "data", "out")}


_SECTIONS = {
    "model": SwtConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
    "preprocess": PreprocessOptions,
    "mirror": MirrorOptions,
    "data": DataOptions,
    "out": OutputOptions,
}


def default_config_dict() -> dict:
    return {name: asdict(cls()) for name, cls in _SECTIONS.items()}


def _build_section(name: str, mapping: dict):
    cls = _SECTIONS[name]
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - valid
    if unknown:
        raise ConfigurationError(
            f"unknown config keys in section '{name}': {sorted(unknown)}"
        )
    return cls(**mapping)


def _parse_set(expr: str) -> tuple[str, str, object]:
    if "=" not in expr:
        raise ConfigurationError(f"--set expects section.key=value, got {expr!r}")
    path, raw = expr.split("=", 1)
    parts = path.split(".")
    if len(parts) != 2:
        raise ConfigurationError(f"--set path must be section.key, got {path!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts[0], parts[1], value


def resolve_config(args) -> RunConfig:
    """defaults < config file < --set overrides < flags < MCLSWT_SEED."""
    cfg = default_config_dict()
    path = getattr(args, "config", None)
    if path:
        try:
            loaded = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        for section, mapping in loaded.items():
            if not isinstance(mapping, dict):
                raise ConfigurationError(f"config section '{section}' must be an object")
            cfg[section].update(mapping)
    for expr in getattr(args, "set", None) or []:
        section, key, value = _parse_set(expr)
        if section not in cfg:
            raise ConfigurationError(f"--set names unknown section '{section}'")
        cfg[section][key] = value
    _apply_flag_overrides(args, cfg)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigurationError(
                f"{SEED_ENV} must be an integer, got {env_seed!r}"
            ) from None
        cfg["synth"]["seed"] = seed
        cfg["train"]["seed"] = seed
    return RunConfig(**{name: _build_section(name, mapping)
                        for name, mapping in cfg.items()})


# flag destination -> (section, key); only applied when the flag was given
_FLAG_MAP = {
    "trials_per_class": ("synth", "n_trials_per_class"),
    "subjects": ("synth", "n_subjects"),
    "attenuation": ("synth", "erd_attenuation"),
    "noise_std": ("synth", "noise_std"),
    "seed": ("train", "seed"),
    "epochs": ("train", "max_epochs"),
    "batch_size": ("train", "batch_size"),
    "lr": ("train", "lr"),
    "w_o": ("train", "w_o"),
    "w_m": ("train", "w_m"),
    "margin": ("train", "margin"),
    "eval_every": ("train", "eval_every"),
    "data": ("data", "path"),
    "train_subjects": ("data", "train_subjects"),
    "test_subjects": ("data", "test_subjects"),
    "out_dir": ("out", "dir"),
}


def _apply_flag_overrides(args, cfg: dict) -> None:
    for dest, (section, key) in _FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[section][key] = value
    if getattr(args, "seed", None) is not None:
        cfg["synth"]["seed"] = args.seed


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")


# ---------------------------------------------------------------------------
# shared pipeline pieces
# ---------------------------------------------------------------------------


def _load_trialset(rc: RunConfig) -> TrialSet:
    if rc.data.path:
        ts = read_trialset(rc.data.path)
    else:
        ts = generate_synthetic_erd(rc.synth)
    return _apply_preprocess(ts, rc.preprocess)


def _apply_preprocess(ts: TrialSet, opts: PreprocessOptions) -> TrialSet:
    data = ts.data
    if opts.bandpass_high is not None:
        low = opts.bandpass_low if opts.bandpass_low is not None else 0.0
        data = np.stack([bandpass_array(x, ts.fs, low, opts.bandpass_high,
                                        opts.bandpass_order) for x in data])
    if opts.standardize:
        data = np.stack([standardize_array(x, opts.standardize_decay,
                                           opts.standardize_eps) for x in data])
    if data is ts.data:
        return ts
    return TrialSet(data, ts.labels, ts.subject_ids, fs=ts.fs,
                    channel_names=list(ts.channel_names))


def _mirror_map(rc: RunConfig, ts: TrialSet) -> ChannelMirrorMap:
    swap = [tuple(pair) for pair in rc.mirror.swap]
    return ChannelMirrorMap.from_names(swap, list(rc.mirror.fixed),
                                       ts.channel_names)


def _check_data_matches(cfg: SwtConfig, ts: TrialSet) -> None:
    n, t, c = ts.data.shape
    if (t, c) != (cfg.n_samples, cfg.n_channels):
        raise ConfigurationError(
            f"data trials are [{t} samples x {c} channels] but the model expects "
            f"[{cfg.n_samples} x {cfg.n_channels}]; adjust --set model.n_samples/"
            f"model.n_channels or regenerate the data"
        )


def _split(rc: RunConfig, ts: TrialSet) -> tuple[TrialSet, TrialSet]:
    return split_new_subject(ts, set(rc.data.train_subjects),
                             set(rc.data.test_subjects))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    rc = resolve_config(args)
    ts = generate_synthetic_erd(rc.synth)
    write_trialset(ts, args.out)
    print(f"wrote {len(ts)} trials ({ts.data.shape[1]} samples x "
          f"{ts.data.shape[2]} channels, fs={ts.fs} Hz) to {args.out}")
    return 0


def cmd_train(args) -> int:
    rc = resolve_config(args)
    ts = _load_trialset(rc)
    _check_data_matches(rc.model, ts)
    train_set, test_set = _split(rc, ts)
    if len(train_set) == 0:
        raise ConfigurationError("train subject selection matched no trials")
    if len(test_set) == 0:
        raise ConfigurationError("test subject selection matched no trials")
    mmap = _mirror_map(rc, ts)
    params = init_model(rc.model, seed=rc.train.seed)
    out_dir = Path(rc.out.dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def log_fn(rec):
        if not args.quiet:
            acc = "-" if rec.test_accuracy is None else f"{rec.test_accuracy:.4f}"
            print(f"epoch {rec.epoch:4d}  loss={rec.l_total:8.4f}  "
                  f"l_c={rec.l_c:7.4f}  l_d={rec.l_d:8.4f}  acc={acc}")

    params, report = train(params, train_set, rc.train, testset=test_set,
                           mirror_map=mmap, target_accuracy=args.target_accuracy,
                           log_fn=log_fn)
    ev = evaluate(params, test_set, mirror_map=mmap)
    pos, neg = pair_separation(params, test_set, mirror_map=mmap)

    from .report import (plot_training_curves, write_metrics_csv,
                         write_summary_json)
    (out_dir / "config.json").write_text(json.dumps(rc.as_dict(), indent=1) + "\n")
    save_checkpoint(params, out_dir / "checkpoint.json")
    write_metrics_csv(report, out_dir / "metrics.csv")
    extra = {
        "final_accuracy": ev.accuracy,
        "final_kappa": ev.kappa,
        "mean_pos_pair_distance": pos,
        "mean_neg_pair_distance": neg,
        "n_train_trials": len(train_set),
        "n_test_trials": len(test_set),
    }
    write_summary_json(report, out_dir / "summary.json", extra=extra)
    plot_training_curves(report, out_dir / "training.png")

    summary = report.summary()
    print(f"status={report.status}  epochs={summary['n_epochs']}")
    print(f"final fused accuracy={ev.accuracy:.4f}  kappa={ev.kappa:.4f}")
    if summary["max_accuracy"] is not None:
        print(f"max accuracy={summary['max_accuracy']:.4f}  "
              f"acc@min-train-loss={summary['accuracy_at_min_train_loss']:.4f}")
    print(f"pair separation: pos={pos:.4f} neg={neg:.4f} margin={neg - pos:.4f}")
    print(f"artifacts in {out_dir}/ (checkpoint.json, metrics.csv, "
          f"summary.json, training.png)")
    return 0


def cmd_eval(args) -> int:
    rc = resolve_config(args)
    params = load_checkpoint(args.checkpoint)
    ts = _load_trialset(rc)
    _check_data_matches(params.cfg, ts)
    _, test_set = _split(rc, ts)
    if len(test_set) == 0:
        raise ConfigurationError("test subject selection matched no trials")
    mmap = _mirror_map(rc, ts)
    ev = evaluate(params, test_set, mirror_map=mmap)
    print(f"n_trials={ev.n_trials}")
    print(f"accuracy={ev.accuracy:.4f}")
    print(f"kappa={ev.kappa:.4f}")
    print(f"confusion={ev.confusion.tolist()}")
    return 0


def cmd_shapes(args) -> int:
    rc = resolve_config(args)
    params = init_model(rc.model, seed=rc.train.seed)
    rows = conformance_report(params, batch=args.batch)
    print(f"layer table at reference batch {REFERENCE_BATCH} "
          f"(traced with a batch of {args.batch})")
    width = max(len(r.layer) for r in rows)
    n_pass = n_dev = n_fail = 0
    for r in rows:
        status = r.status
        n_pass += status == "PASS"
        n_dev += status == "KNOWN-DEVIATION"
        n_fail += status == "FAIL"
        expect = ""
        if status != "PASS":
            expect = f"  (reference: {list(r.expected_shape)} {r.expected_params})"
        print(f"{r.layer:<{width}}  {str(list(r.shape)):<22} "
              f"{r.params:>7}  {status}{expect}")
    print(f"{n_pass} PASS, {n_dev} KNOWN-DEVIATION, {n_fail} FAIL")
    return 1 if n_fail else 0


def cmd_gradcheck(args) -> int:
    results = gradient_suite(n_seeds=args.seeds, with_model=not args.skip_model)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in sorted(results, key=lambda r: r.name):
        mark = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{r.name:<{width}}  max_rel_err={r.max_rel_err:.3e}  "
              f"tol={r.tol:.0e}  {mark}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_bench(args) -> int:
    rc = resolve_config(args)
    cfg = rc.model
    dense, windowed = flops_estimate(cfg.seq_len, cfg.n_filters, cfg.window_size)
    print(f"attention FLOPs at L={cfg.seq_len}, D={cfg.n_filters}, "
          f"M={cfg.window_size}:")
    print(f"  dense    {dense:>15,}")
    print(f"  windowed {windowed:>15,}  (x{dense / windowed:.2f} cheaper)")
    scaling = attention_scaling(args.scaling_len, width=cfg.n_filters,
                                window=cfg.window_size, heads=cfg.n_heads,
                                repeats=args.repeats)
    print(f"measured growth L={args.scaling_len} -> {2 * args.scaling_len}: "
          f"windowed per-step x{scaling['windowed_per_step_growth']:.2f}, "
          f"dense x{scaling['dense_growth']:.2f}")
    params = init_model(cfg, seed=rc.train.seed)
    timings = []
    for batch in args.batches:
        t = bench_inference(params, batch=batch, n_runs=args.n_runs)
        timings.append(t)
        print(f"batch {batch:3d}: {t['mean_ms']:8.2f} ms/forward "
              f"({t['n_params']} parameters, {t['n_runs']} runs)")
    out_dir = Path(rc.out.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .report import plot_bench, write_rows_csv
    rows = [{"kind": "flops_dense", "value": dense},
            {"kind": "flops_windowed", "value": windowed},
            {"kind": "windowed_per_step_growth",
             "value": scaling["windowed_per_step_growth"]},
            {"kind": "dense_growth", "value": scaling["dense_growth"]}]
    rows += [{"kind": f"mean_ms_batch_{t['batch']}", "value": t["mean_ms"]}
             for t in timings]
    write_rows_csv(rows, out_dir / "bench.csv")
    plot_bench({"dense": dense, "windowed": windowed, "seq_len": cfg.seq_len},
               scaling, timings, out_dir / "bench.png")
    print(f"artifacts in {out_dir}/ (bench.csv, bench.png)")
    return 0


def cmd_sweep(args) -> int:
    rc = resolve_config(args)
    ts = _load_trialset(rc)
    _check_data_matches(rc.model, ts)
    train_set, test_set = _split(rc, ts)
    heads = tuple(args.heads)
    blocks = tuple(args.blocks)

    def log_fn(row):
        print(f"heads={row['heads']:2d} blocks={row['blocks']}  "
              f"accuracy={row['accuracy']:.4f}  kappa={row['kappa']:.4f}  "
              f"[{row['status']}]")

    rows = hyper_sweep(rc.model, rc.train, train_set, test_set,
                       heads=heads, blocks=blocks, log_fn=log_fn)
    out_dir = Path(rc.out.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .report import plot_sweep_heatmap, write_rows_csv
    write_rows_csv(rows, out_dir / "sweep.csv")
    plot_sweep_heatmap(rows, out_dir / "sweep.png")
    best = max(rows, key=lambda r: r["accuracy"])
    print(f"best cell: heads={best['heads']} blocks={best['blocks']} "
          f"accuracy={best['accuracy']:.4f}")
    print(f"artifacts in {out_dir}/ (sweep.csv, sweep.png)")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_config_flags(sub) -> None:
    sub.add_argument("--config", help="JSON run config (sections: "
                     + ", ".join(_SECTIONS) + ")")
    sub.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override one config value (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mclswt",
        description="Mirror-contrastive sliding-window transformer for "
                    "two-class motor imagery EEG decoding.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic ERD trial file")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output eegb-v1 path")
    p.add_argument("--trials-per-class", type=int, dest="trials_per_class")
    p.add_argument("--subjects", type=int, help="number of synthetic subjects")
    p.add_argument("--attenuation", type=float, help="post-cue rhythm attenuation")
    p.add_argument("--noise-std", type=float, dest="noise_std")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_synth)

    p = subs.add_parser("train", help="train a model and write artifacts")
    _add_config_flags(p)
    p.add_argument("--data", help="eegb-v1 input (default: synthesize per config)")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--w-o", type=float, dest="w_o")
    p.add_argument("--w-m", type=float, dest="w_m")
    p.add_argument("--margin", type=float)
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-subjects", type=_int_list, dest="train_subjects")
    p.add_argument("--test-subjects", type=_int_list, dest="test_subjects")
    p.add_argument("--target-accuracy", type=float, dest="target_accuracy",
                   help="stop once fused test accuracy reaches this")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = subs.add_parser("eval", help="evaluate a checkpoint with mirror fusion")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="eegb-v1 input (default: synthesize per config)")
    p.add_argument("--train-subjects", type=_int_list, dest="train_subjects")
    p.add_argument("--test-subjects", type=_int_list, dest="test_subjects")
    p.set_defaults(fn=cmd_eval)

    p = subs.add_parser("shapes", help="layer-table conformance report")
    _add_config_flags(p)
    p.add_argument("--batch", type=int, default=2,
                   help="batch size of the shape-tracing forward pass")
    p.set_defaults(fn=cmd_shapes)

    p = subs.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--skip-model", action="store_true", dest="skip_model",
                   help="skip the slow end-to-end model check")
    p.set_defaults(fn=cmd_gradcheck)

    p = subs.add_parser("bench", help="FLOP estimates, scaling, inference timing")
    _add_config_flags(p)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--batches", type=_int_list, default=[1, 8],
                   help="batch sizes to time")
    p.add_argument("--n-runs", type=int, default=1000, dest="n_runs")
    p.add_argument("--scaling-len", type=int, default=512, dest="scaling_len",
                   help="base sequence length of the scaling probe")
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(fn=cmd_bench)

    p = subs.add_parser("sweep", help="train over the heads x blocks grid")
    _add_config_flags(p)
    p.add_argument("--data")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--heads", type=_int_list, default=[4, 8, 10])
    p.add_argument("--blocks", type=_int_list, default=[1, 2, 3])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-subjects", type=_int_list, dest="train_subjects")
    p.add_argument("--test-subjects", type=_int_list, dest="test_subjects")
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _CLI_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
