"""Noise-count sweep: the seen/unseen generalization benchmark.

For each count K of seen noise conditions (0..N, added one-by-one in a
fixed order), each random seed, and each model variant (invariance vs the
beta=0 multi-condition baseline), a cell generates a corpus whose training
split sees only the first K conditions, trains, and evaluates frame error
rates on the complete test set (clean plus all N conditions).  Within a
(K, seed) cell both variants share the corpus, the initial parameters, and
the batch schedule, so the adversarial term is the only difference.

Aggregates per cell: ``clean`` (condition 0), ``avg_all`` (frame-weighted
over every condition including clean), ``avg_seen`` / ``avg_unseen``
(frame-weighted over the seen / unseen noise conditions; absent when the
subset is empty, i.e. ``avg_seen`` at K=0 and ``avg_unseen`` at K=N).

K=0 is a clean-only control row: a single-domain pool cannot carry the
adversarial term, so both variants train with beta=0 there and the cell
pairs are identical by construction.

The report is a CSV (percentages, 2 decimals) with one row per cell plus a
seed-median summary block; medians over seeds are the headline numbers
because small-scale adversarial training is noisy.
"""

from __future__ import annotations

import concurrent.futures
import statistics
import sys
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from invnet import corpus, features, model, training

VARIANT_INVARIANCE = "invariance"
VARIANT_BASELINE = "baseline"
VARIANTS = (VARIANT_INVARIANCE, VARIANT_BASELINE)

_PREDICT_CHUNK = 4096


def frame_error_rate(predictions, labels) -> float:
    """Fraction of frames where prediction != label."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions {predictions.shape} and labels {labels.shape} "
            f"must be equal-length 1-D sequences"
        )
    if predictions.size == 0:
        raise ValueError("frame_error_rate needs at least one frame")
    return float(np.mean(predictions != labels))


@dataclass(frozen=True)
class ConditionResult:
    """Frame error rate of one model on one test condition."""

    condition: int
    frame_error_rate: float
    frames: int
    seen: bool


@dataclass(frozen=True)
class CellResult:
    """One (K, variant, seed) cell: per-condition rates plus aggregates."""

    k: int
    variant: str
    seed: int
    conditions: tuple[ConditionResult, ...]

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def _rate(self, results) -> float | None:
        results = list(results)
        if not results:
            return None
        total = sum(r.frames for r in results)
        return sum(r.frame_error_rate * r.frames for r in results) / total

    @property
    def clean(self) -> float:
        for r in self.conditions:
            if r.condition == corpus.CLEAN_ID:
                return r.frame_error_rate
        raise ValueError("cell has no clean condition")

    @property
    def avg_all(self) -> float:
        return self._rate(self.conditions)

    @property
    def avg_seen(self) -> float | None:
        return self._rate(r for r in self.conditions
                          if r.condition != corpus.CLEAN_ID and r.seen)

    @property
    def avg_unseen(self) -> float | None:
        return self._rate(r for r in self.conditions
                          if r.condition != corpus.CLEAN_ID and not r.seen)


@dataclass(frozen=True)
class SweepResult:
    """All cells of a sweep in canonical order (K, then seed, then
    invariance before baseline), plus any per-cell failures."""

    num_conditions: int
    condition_order: tuple[int, ...]
    seeds: tuple[int, ...]
    cells: tuple[CellResult, ...]
    failures: tuple[str, ...] = field(default=())

    def cell(self, k: int, variant: str, seed: int) -> CellResult:
        for c in self.cells:
            if (c.k, c.variant, c.seed) == (k, variant, seed):
                return c
        raise KeyError(f"no cell (K={k}, {variant}, seed={seed})")

    def cells_at(self, k: int, variant: str) -> list:
        return [c for c in self.cells if c.k == k and c.variant == variant]


def evaluate_params(params: model.NetParams, stats: features.NormStats,
                    corpus_data: corpus.Corpus,
                    context: int = features.DEFAULT_CONTEXT
                    ) -> tuple[ConditionResult, ...]:
    """Per-condition frame error rates of a trained model on the test set.

    Conditions are marked seen exactly when they were in the corpus's
    training selection; clean counts as seen (it is always trained on).
    """
    with threadpool_limits(limits=1):
        seen_set = set(corpus_data.train_conditions)
        results = []
        condition_ids = [corpus.CLEAN_ID] + [c.id for c in
                                             corpus_data.conditions]
        for cid in condition_ids:
            utts = [u for u in corpus_data.test if u.condition == cid]
            if not utts:
                raise ValueError(f"test split has no condition-{cid} data")
            pool = training.featurize_utterances(utts, context)
            x = features.apply_norm(pool.x, stats)
            preds = np.empty(pool.size, dtype=np.int64)
            for start in range(0, pool.size, _PREDICT_CHUNK):
                sl = slice(start, min(start + _PREDICT_CHUNK, pool.size))
                preds[sl] = np.argmax(model.predict(params, x[sl]), axis=1)
            results.append(ConditionResult(
                condition=cid,
                frame_error_rate=frame_error_rate(preds, pool.y),
                frames=pool.size,
                seen=(cid == corpus.CLEAN_ID or cid in seen_set),
            ))
        return tuple(results)


def run_cell(spec: corpus.CorpusSpec, net_config: model.NetConfig | None,
             train_config: training.TrainConfig, k: int, seed: int,
             condition_order, context: int = features.DEFAULT_CONTEXT):
    """Train and evaluate both variants of one (K, seed) cell.

    Returns (cells, logs): two CellResults (invariance first) and a dict of
    per-variant EpochLog tuples.  The corpus comes from ``spec`` alone --
    one fixed benchmark dataset for the whole grid, so every cell scores
    against the identical test set and seed repetitions differ only in
    initialization, holdout split, and batch order.  Both variants share
    the corpus and the parameter/batch seeds; at K=0 the pool is
    clean-only, so both run with beta=0.
    """
    condition_order = list(condition_order)
    data = corpus.generate(spec, condition_order[:k])
    beta = train_config.beta if k > 0 else 0.0
    cells = []
    logs = {}
    for variant, variant_beta in ((VARIANT_INVARIANCE, beta),
                                  (VARIANT_BASELINE, 0.0)):
        cfg = replace(train_config, beta=variant_beta, seed=seed)
        result = training.train(net_config, params_seed=seed,
                                corpus_data=data, config=cfg, context=context)
        cells.append(CellResult(
            k=k, variant=variant, seed=seed,
            conditions=evaluate_params(result.params, result.stats, data,
                                       context),
        ))
        logs[variant] = result.logs
    return tuple(cells), logs


def _cell_job(args):
    spec, net_config, train_config, k, seed, condition_order, context = args
    return run_cell(spec, net_config, train_config, k, seed, condition_order,
                    context)


def run_sweep(spec: corpus.CorpusSpec, net_config: model.NetConfig | None,
              train_config: training.TrainConfig, seeds, condition_order,
              workers: int = 1, context: int = features.DEFAULT_CONTEXT,
              run_dir=None, log=None) -> SweepResult:
    """The full benchmark: K = 0..num_conditions x variants x seeds.

    ``condition_order`` must be a permutation of all condition ids; the
    seen set at K is its first K entries.  A failed cell is logged and
    skipped; the remaining cells still run.  With ``run_dir`` set, each
    cell writes its per-epoch diagnostics CSV to
    ``run_dir/K{K}_{variant}_s{seed}/epochs.csv``.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"duplicate seeds: {seeds}")
    order = [int(c) for c in condition_order]
    if sorted(order) != list(range(1, spec.num_conditions + 1)):
        raise ValueError(
            f"condition_order must be a permutation of 1.."
            f"{spec.num_conditions}, got {order}"
        )
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    log = log if log is not None else (lambda msg: print(msg, file=sys.stderr))

    jobs = [(spec, net_config, train_config, k, seed, order, context)
            for k in range(spec.num_conditions + 1) for seed in seeds]
    outcomes = {}
    failures = []

    def record(job, outcome, error):
        _, _, _, k, seed, _, _ = job
        if error is not None:
            failures.append(f"cell K={k} seed={seed} failed: {error}")
            log(failures[-1])
        else:
            outcomes[(k, seed)] = outcome
            log(f"cell K={k} seed={seed} done")

    if workers == 1:
        for job in jobs:
            try:
                record(job, _cell_job(job), None)
            except Exception as exc:  # noqa: BLE001 - cell isolation
                record(job, None, exc)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            futures = {ex.submit(_cell_job, job): job for job in jobs}
            for fut in concurrent.futures.as_completed(futures):
                try:
                    record(futures[fut], fut.result(), None)
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    record(futures[fut], None, exc)

    cells = []
    for k in range(spec.num_conditions + 1):
        for seed in seeds:
            if (k, seed) not in outcomes:
                continue
            cell_pair, cell_logs = outcomes[(k, seed)]
            cells.extend(cell_pair)
            if run_dir is not None:
                _write_cell_logs(run_dir, k, seed, cell_logs)
    return SweepResult(
        num_conditions=spec.num_conditions,
        condition_order=tuple(order),
        seeds=tuple(seeds),
        cells=tuple(cells),
        failures=tuple(failures),
    )


def _write_cell_logs(run_dir, k, seed, cell_logs):
    from pathlib import Path

    for variant, logs in cell_logs.items():
        cell_dir = Path(run_dir) / f"K{k}_{variant}_s{seed}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        training.write_epoch_log(logs, cell_dir / "epochs.csv")


# --- medians and the headline trend ---

def seed_median(values) -> float | None:
    values = [v for v in values if v is not None]
    if not values:
        return None
    return float(statistics.median(values))


def median_aggregate(result: SweepResult, k: int, variant: str,
                     name: str) -> float | None:
    """Median over seeds of one aggregate (clean/avg_all/avg_seen/avg_unseen)."""
    return seed_median(getattr(c, name) for c in result.cells_at(k, variant))


@dataclass(frozen=True)
class TrendReport:
    """The three headline checks of the seen/unseen generalization shape.

    * ``few_seen_helps``: at K=1, the invariance model's median unseen
      error is no worse than the baseline's;
    * ``gain_shrinks``: the median paired improvement (baseline minus
      invariance, per seed) on unseen error is larger at K=1 than at
      K = N-1;
    * ``all_seen_tie``: with every condition seen (K=N) the two variants'
      median overall error differs by less than one percentage point.
    """

    k_low: int
    k_high: int
    unseen_invariance_low: float
    unseen_baseline_low: float
    gain_low: float
    gain_high: float
    all_seen_gap: float
    few_seen_helps: bool
    gain_shrinks: bool
    all_seen_tie: bool

    @property
    def passed(self) -> bool:
        return self.few_seen_helps and self.gain_shrinks and self.all_seen_tie


def paired_gains(result: SweepResult, k: int, name: str = "avg_unseen"):
    """Per-seed (baseline - invariance) differences of one aggregate."""
    gains = []
    for seed in result.seeds:
        try:
            inv = result.cell(k, VARIANT_INVARIANCE, seed)
            base = result.cell(k, VARIANT_BASELINE, seed)
        except KeyError:
            continue
        a, b = getattr(inv, name), getattr(base, name)
        if a is not None and b is not None:
            gains.append(b - a)
    return gains


def trend_report(result: SweepResult) -> TrendReport:
    n = result.num_conditions
    if n < 2:
        raise ValueError("trend analysis needs at least 2 conditions")
    k_low, k_high = 1, n - 1
    inv_low = median_aggregate(result, k_low, VARIANT_INVARIANCE, "avg_unseen")
    base_low = median_aggregate(result, k_low, VARIANT_BASELINE, "avg_unseen")
    gain_low = seed_median(paired_gains(result, k_low))
    gain_high = seed_median(paired_gains(result, k_high))
    all_inv = median_aggregate(result, n, VARIANT_INVARIANCE, "avg_all")
    all_base = median_aggregate(result, n, VARIANT_BASELINE, "avg_all")
    present = None not in (inv_low, base_low, gain_low, gain_high, all_inv,
                           all_base)
    if not present:
        raise ValueError("sweep is missing cells needed for trend analysis")
    gap = abs(all_inv - all_base)
    return TrendReport(
        k_low=k_low, k_high=k_high,
        unseen_invariance_low=inv_low, unseen_baseline_low=base_low,
        gain_low=gain_low, gain_high=gain_high, all_seen_gap=gap,
        few_seen_helps=inv_low <= base_low,
        gain_shrinks=gain_low > gain_high,
        all_seen_tie=gap < 0.01,
    )


# --- report emission ---

def _fmt(rate: float | None) -> str:
    return "" if rate is None else f"{100.0 * rate:.2f}"


def report_lines(result: SweepResult) -> list:
    """The report as lines: header, per-cell rows, seed-median block."""
    cols = ["K", "variant", "seed", "clean"]
    cols += [f"cond_{cid}" for cid in range(1, result.num_conditions + 1)]
    cols += ["avg_all", "avg_seen", "avg_unseen"]
    lines = [",".join(cols)]

    def condition_rates(cell):
        by_id = {r.condition: r.frame_error_rate for r in cell.conditions}
        return [by_id.get(cid) for cid in range(1, result.num_conditions + 1)]

    for cell in result.cells:
        row = [str(cell.k), cell.variant, str(cell.seed), _fmt(cell.clean)]
        row += [_fmt(r) for r in condition_rates(cell)]
        row += [_fmt(cell.avg_all), _fmt(cell.avg_seen),
                _fmt(cell.avg_unseen)]
        lines.append(",".join(row))

    for k in range(result.num_conditions + 1):
        for variant in VARIANTS:
            cells = result.cells_at(k, variant)
            if not cells:
                continue
            row = [str(k), variant, "median",
                   _fmt(seed_median(c.clean for c in cells))]
            for i in range(result.num_conditions):
                row.append(_fmt(seed_median(condition_rates(c)[i]
                                            for c in cells)))
            row += [_fmt(seed_median(c.avg_all for c in cells)),
                    _fmt(seed_median(c.avg_seen for c in cells)),
                    _fmt(seed_median(c.avg_unseen for c in cells))]
            lines.append(",".join(row))
    return lines


def emit_report(result: SweepResult, path):
    """Write the sweep report CSV; emission is byte-deterministic."""
    if not result.cells:
        raise ValueError("cannot emit a report for an empty sweep")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(report_lines(result)) + "\n")
