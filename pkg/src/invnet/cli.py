"""Command-line entry point: ``invnet COMMAND [--config PATH] [--set K=V] [--out DIR]``.

Commands:

* ``generate``  — write the synthetic corpus file;
* ``train``     — train on a generated corpus; writes checkpoint,
  normalization statistics, and the per-epoch diagnostics CSV;
* ``eval``      — per-condition frame error rates of a trained checkpoint,
  to standard output and a CSV;
* ``sweep``     — the full noise-count benchmark; writes the report CSV, a
  config copy, and per-cell logs under the run directory;
* ``gradcheck`` — finite-difference verification of the composite backward
  pass; fails (exit 3) if any relative error exceeds 1e-5.

``--set section.key=value`` overrides apply after the config file.  All
output paths come from the ``paths`` config section, resolved inside the
``--out`` directory (default: current directory).  Exit codes: 0 success,
1 usage or config error, 2 runtime failure, 3 self-check failure.

The CLI is a thin shell over the library: every command is a few calls
into the corresponding module, with identical results either way.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from invnet import corpus, features, gradcheck, model, sweep, training
from invnet.config import (ConfigError, RunConfig, apply_overrides,
                           emit_config, parse_config_file)
from invnet.serial import FormatError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3

GRADCHECK_TOLERANCE = 1e-5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invnet",
        description="Noise-invariant classifier training on a synthetic "
                    "multi-condition benchmark.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("generate", "generate the synthetic corpus file"),
        ("train", "train a model on the generated corpus"),
        ("eval", "per-condition error rates of a trained checkpoint"),
        ("sweep", "run the full noise-count benchmark and write the report"),
        ("gradcheck", "finite-difference check of the composite gradients"),
    ):
        sub = commands.add_parser(name, help=doc, description=doc)
        sub.add_argument("--config", metavar="PATH", default=None,
                         help="configuration file (default: all defaults)")
        sub.add_argument("--set", metavar="SECTION.KEY=VALUE",
                         action="append", default=[], dest="overrides",
                         help="override one config key (repeatable; applied "
                              "after the file)")
        sub.add_argument("--out", metavar="DIR", default=".",
                         help="directory for all outputs (default: .)")
    return parser


def _load_config(args) -> RunConfig:
    cfg = (parse_config_file(args.config) if args.config is not None
           else RunConfig())
    return apply_overrides(cfg, args.overrides)


def _out_path(out_dir: Path, name: str) -> Path:
    path = out_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _percent(rate: float | None) -> str:
    return "--" if rate is None else f"{100.0 * rate:.2f}%"


def _cmd_generate(cfg: RunConfig, out_dir: Path) -> int:
    data = corpus.generate(cfg.corpus, cfg.resolved_train_conditions())
    path = _out_path(out_dir, cfg.paths.corpus_file)
    corpus.save_corpus(data, path)
    print(f"wrote {path}: {len(data.train)} train / {len(data.test)} test "
          f"utterances, {data.num_classes} classes, train conditions "
          f"{list(data.train_conditions) or 'none (clean only)'}")
    return EXIT_OK


def _load_corpus_file(cfg: RunConfig, out_dir: Path) -> corpus.Corpus:
    path = out_dir / cfg.paths.corpus_file
    if not path.exists():
        raise FileNotFoundError(
            f"corpus file {path} not found; run `invnet generate` first"
        )
    return corpus.load_corpus(path)


def _cmd_train(cfg: RunConfig, out_dir: Path) -> int:
    data = _load_corpus_file(cfg, out_dir)
    result = training.train(cfg.net_config(), params_seed=cfg.training.seed,
                            corpus_data=data, config=cfg.training,
                            context=cfg.network.context)
    model.save_params(result.params, _out_path(out_dir,
                                               cfg.paths.checkpoint_file))
    features.save_norm_stats(result.stats,
                             _out_path(out_dir, cfg.paths.norm_file))
    training.write_epoch_log(result.logs,
                             _out_path(out_dir, cfg.paths.epoch_log_file))
    last = result.logs[-1]
    print(f"trained {len(result.logs)} epochs; best holdout accuracy "
          f"{result.logs[result.best_epoch - 1].holdout_accuracy:.4f} at "
          f"epoch {result.best_epoch}; final discriminator accuracy "
          f"{last.discriminator_accuracy:.4f}")
    print(f"wrote {out_dir / cfg.paths.checkpoint_file}, "
          f"{out_dir / cfg.paths.norm_file}, "
          f"{out_dir / cfg.paths.epoch_log_file}")
    return EXIT_OK


def _cmd_eval(cfg: RunConfig, out_dir: Path) -> int:
    data = _load_corpus_file(cfg, out_dir)
    params = model.load_params(out_dir / cfg.paths.checkpoint_file,
                               expect=cfg.net_config())
    stats = features.load_norm_stats(out_dir / cfg.paths.norm_file)
    results = sweep.evaluate_params(params, stats, data,
                                    context=cfg.network.context)
    cell = sweep.CellResult(k=len(data.train_conditions), variant="invariance",
                            seed=cfg.training.seed, conditions=results)
    lines = ["condition,name,seen,frames,error_pct"]
    for r in results:
        name = ("clean" if r.condition == corpus.CLEAN_ID
                else data.condition_by_id(r.condition).name)
        print(f"{name:<12} {'seen' if r.seen else 'unseen':<7} "
              f"{_percent(r.frame_error_rate):>8}  ({r.frames} frames)")
        lines.append(f"{r.condition},{name},{int(r.seen)},{r.frames},"
                     f"{100.0 * r.frame_error_rate:.2f}")
    print(f"{'avg_all':<12} {'':<7} {_percent(cell.avg_all):>8}")
    print(f"{'avg_seen':<12} {'':<7} {_percent(cell.avg_seen):>8}")
    print(f"{'avg_unseen':<12} {'':<7} {_percent(cell.avg_unseen):>8}")
    path = _out_path(out_dir, cfg.paths.eval_file)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig, out_dir: Path) -> int:
    run_dir = _out_path(out_dir, cfg.paths.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(emit_config(cfg), encoding="utf-8")
    result = sweep.run_sweep(
        cfg.corpus, cfg.net_config(), cfg.training,
        seeds=cfg.sweep.seeds,
        condition_order=cfg.resolved_condition_order(),
        workers=cfg.sweep.workers,
        context=cfg.network.context,
        run_dir=run_dir if cfg.sweep.write_cell_logs else None,
    )
    report_path = _out_path(out_dir, cfg.paths.report_file)
    sweep.emit_report(result, report_path)
    print(f"wrote {report_path} ({len(result.cells)} cells)")
    trend = sweep.trend_report(result)
    print(f"K={trend.k_low} median unseen error: invariance "
          f"{_percent(trend.unseen_invariance_low)} vs baseline "
          f"{_percent(trend.unseen_baseline_low)}")
    print(f"median paired gain (baseline - invariance, unseen): "
          f"{100.0 * trend.gain_low:+.2f}pp at K={trend.k_low}, "
          f"{100.0 * trend.gain_high:+.2f}pp at K={trend.k_high}")
    print(f"all-conditions-seen median avg_all gap: "
          f"{100.0 * trend.all_seen_gap:.2f}pp")
    print(f"trend checks: few_seen_helps={trend.few_seen_helps} "
          f"gain_shrinks={trend.gain_shrinks} "
          f"all_seen_tie={trend.all_seen_tie}")
    if result.failures:
        print(f"{len(result.failures)} sweep cell(s) failed",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_gradcheck(cfg: RunConfig, out_dir: Path) -> int:
    del cfg, out_dir
    report = gradcheck.composite_gradient_check(
        tolerance=GRADCHECK_TOLERANCE)
    per = ", ".join(f"{k}={v:.3e}" for k, v in report.per_subset.items())
    print(f"max relative error {report.max_rel_err:.3e} over "
          f"{report.instances} instances (tolerance "
          f"{report.tolerance:.0e}); {per}")
    if not report.passed:
        print("gradient check FAILED", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print("gradient check passed")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; fold the latter
        # into the documented usage-error code.
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    try:
        return _COMMANDS[args.command](cfg, out_dir)
    except (FormatError, FileNotFoundError, training.TrainingError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
