"""Declarative run configuration: a strict, flat ``section.key = value`` text.

The format is line-oriented: one assignment per line, ``#`` comments,
blank lines ignored.  Values are typed — integers, reals, ``true``/
``false``, ``"quoted strings"``, and comma-separated integer lists — and
every key has a documented default, so the empty file is a valid complete
configuration.  Unknown keys, duplicate keys, type mismatches, and
violated invariants are all rejected with the offending line and key named
(typo safety: a misspelled key can never silently do nothing).

Sections: ``corpus`` (generator knobs), ``network`` (architecture size),
``training`` (optimizer), ``sweep`` (benchmark protocol), ``paths``
(output file names, resolved against the CLI's --out directory).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

from invnet.corpus import CorpusSpec
from invnet.features import DEFAULT_CONTEXT
from invnet.model import NetConfig, default_net_config
from invnet.training import TrainConfig


class ConfigError(ValueError):
    """Raised for unparsable or invalid run configuration."""


@dataclass(frozen=True)
class NetworkSection:
    """Architecture size knobs; the layer layout itself is fixed (see
    default_net_config)."""

    hidden: int = 64
    context: int = DEFAULT_CONTEXT

    def __post_init__(self):
        if self.hidden < 2:
            raise ValueError(f"hidden must be >= 2, got {self.hidden}")
        if self.context < 0:
            raise ValueError(f"context must be >= 0, got {self.context}")


@dataclass(frozen=True)
class SweepSection:
    """Benchmark protocol: seeds, condition order, parallelism.

    An empty ``condition_order`` means ascending condition ids.
    """

    seeds: tuple = (1, 2, 3, 4, 5)
    condition_order: tuple = ()
    workers: int = 1
    write_cell_logs: bool = True

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "condition_order",
                           tuple(int(c) for c in self.condition_order))
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"duplicate sweep seeds: {list(self.seeds)}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class PathsSection:
    """Output file names, all resolved relative to the CLI --out directory."""

    corpus_file: str = "corpus.bin"
    checkpoint_file: str = "checkpoint.bin"
    norm_file: str = "norm.bin"
    epoch_log_file: str = "epochs.csv"
    eval_file: str = "eval.csv"
    report_file: str = "report.csv"
    run_dir: str = "runs"

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"paths.{f.name} must not be empty")


@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs, with defaults throughout."""

    corpus: CorpusSpec = CorpusSpec()
    network: NetworkSection = NetworkSection()
    training: TrainConfig = TrainConfig()
    sweep: SweepSection = SweepSection()
    paths: PathsSection = PathsSection()
    #: Conditions the `generate` command marks as seen; empty = all.
    train_conditions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "train_conditions",
                           tuple(int(c) for c in self.train_conditions))
        valid = set(range(1, self.corpus.num_conditions + 1))
        bad = [c for c in self.train_conditions if c not in valid]
        if bad:
            raise ValueError(
                f"train_conditions {bad} outside 1.."
                f"{self.corpus.num_conditions}"
            )
        if self.sweep.condition_order and \
                sorted(self.sweep.condition_order) != sorted(valid):
            raise ValueError(
                f"sweep.condition_order must be a permutation of 1.."
                f"{self.corpus.num_conditions}, got "
                f"{list(self.sweep.condition_order)}"
            )

    @property
    def input_dim(self) -> int:
        """Network input width after deltas and splicing."""
        return self.corpus.base_dim * 3 * (2 * self.network.context + 1)

    def net_config(self) -> NetConfig:
        return default_net_config(self.input_dim, self.corpus.num_classes,
                                  hidden=self.network.hidden)

    def resolved_condition_order(self) -> tuple:
        if self.sweep.condition_order:
            return self.sweep.condition_order
        return tuple(range(1, self.corpus.num_conditions + 1))

    def resolved_train_conditions(self) -> tuple:
        if self.train_conditions:
            return self.train_conditions
        return tuple(range(1, self.corpus.num_conditions + 1))


# --- typed value grammar ---

class _ValueSyntax(ValueError):
    pass


_INT_RE = re.compile(r"^[+-]?\d+$")


def _parse_int(text: str) -> int:
    if not _INT_RE.match(text):
        raise _ValueSyntax(f"expected an integer, got {text!r}")
    return int(text)


def _parse_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise _ValueSyntax(f"expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise _ValueSyntax(f"expected a finite number, got {text!r}")
    return value


def _parse_bool(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    raise _ValueSyntax(f"expected true or false, got {text!r}")


def _parse_str(text: str) -> str:
    if len(text) < 2 or text[0] != '"' or text[-1] != '"' \
            or '"' in text[1:-1]:
        raise _ValueSyntax(f'expected a "quoted string", got {text!r}')
    return text[1:-1]


def _parse_int_list(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if not parts or any(not p for p in parts):
        raise _ValueSyntax(
            f"expected comma-separated integers, got {text!r}"
        )
    return tuple(_parse_int(p) for p in parts)


_SCHEMA = {
    "corpus": {
        "num_classes": _parse_int,
        "base_dim": _parse_int,
        "num_conditions": _parse_int,
        "seed": _parse_int,
        "clean_utterances": _parse_int,
        "noisy_utterances_per_condition": _parse_int,
        "test_utterances_per_condition": _parse_int,
        "frames_per_utterance": _parse_int,
        "segment_length": _parse_int,
        "proto_scale": _parse_float,
        "sigma_clean": _parse_float,
        "bias_scale": _parse_float,
        "gain_low": _parse_float,
        "gain_high": _parse_float,
        "sigma_low": _parse_float,
        "sigma_high": _parse_float,
        "train_conditions": _parse_int_list,
    },
    "network": {
        "hidden": _parse_int,
        "context": _parse_int,
    },
    "training": {
        "learning_rate": _parse_float,
        "momentum": _parse_float,
        "max_epochs": _parse_int,
        "batch_size": _parse_int,
        "alpha": _parse_float,
        "beta": _parse_float,
        "newbob_start_threshold": _parse_float,
        "newbob_stop_threshold": _parse_float,
        "holdout_fraction": _parse_float,
        "seed": _parse_int,
    },
    "sweep": {
        "seeds": _parse_int_list,
        "condition_order": _parse_int_list,
        "workers": _parse_int,
        "write_cell_logs": _parse_bool,
    },
    "paths": {f.name: _parse_str for f in fields(PathsSection)},
}

_SECTION_TYPES = {
    "corpus": CorpusSpec,
    "network": NetworkSection,
    "training": TrainConfig,
    "sweep": SweepSection,
    "paths": PathsSection,
}

# corpus.train_conditions configures generate() rather than CorpusSpec
# itself, so it routes to RunConfig.train_conditions.
_ROUTED = {("corpus", "train_conditions"): "train_conditions"}

for _section, _cls in _SECTION_TYPES.items():
    _expected = {f.name for f in fields(_cls)}
    _declared = {k for k in _SCHEMA[_section]
                 if (_section, k) not in _ROUTED}
    assert _declared == _expected, \
        f"config schema out of sync for [{_section}]"


def _strip_comment(line: str) -> str:
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def _build(values: dict, lines: dict, name: str) -> RunConfig:
    """Construct a RunConfig from parsed (section, key) -> value entries,
    blaming the recorded source line when an invariant fails."""

    def blame(section, exc):
        hits = [f"{section}.{key} (line {lines[(section, key)]})"
                for (sec, key) in values
                if sec == section and key in str(exc)]
        where = f"; check {hits[0]}" if hits else ""
        return ConfigError(f"{name}: invalid [{section}] value: {exc}{where}")

    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        collected = {key: val for (sec, key), val in values.items()
                     if sec == section and (sec, key) not in _ROUTED}
        try:
            kwargs[section] = cls(**collected) if collected else cls()
        except ValueError as exc:
            raise blame(section, exc) from exc
    for (section, key), attr in _ROUTED.items():
        if (section, key) in values:
            kwargs[attr] = values[(section, key)]
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def parse_config_text(text: str, name: str = "<config>") -> RunConfig:
    """Parse configuration text; see the module docstring for the format."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        left, eq, right = line.partition("=")
        key_text = left.strip()
        value_text = right.strip()
        if not eq or not key_text or not value_text:
            raise ConfigError(
                f"{name}:{lineno}: expected 'section.key = value', got "
                f"{raw.strip()!r}"
            )
        if key_text.count(".") != 1:
            raise ConfigError(
                f"{name}:{lineno}: key must be 'section.key', got "
                f"{key_text!r}"
            )
        section, key = (part.strip() for part in key_text.split("."))
        parser = _SCHEMA.get(section, {}).get(key)
        if parser is None:
            raise ConfigError(
                f"{name}:{lineno}: unknown key '{section}.{key}'"
            )
        if (section, key) in values:
            raise ConfigError(
                f"{name}:{lineno}: duplicate key '{section}.{key}' "
                f"(first set at line {lines[(section, key)]})"
            )
        try:
            values[(section, key)] = parser(value_text)
        except _ValueSyntax as exc:
            raise ConfigError(
                f"{name}:{lineno}: key '{section}.{key}': {exc}"
            ) from exc
        lines[(section, key)] = lineno
    return _build(values, lines, name)


def parse_config_file(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, name=str(path))


def apply_overrides(cfg: RunConfig, assignments) -> RunConfig:
    """Apply ``section.key=value`` override strings on top of a config."""
    values = {}
    lines = {}
    for idx, item in enumerate(assignments, start=1):
        context = f"--set #{idx} ({item!r})"
        left, eq, right = item.partition("=")
        key_text = left.strip()
        value_text = right.strip()
        if not eq or not key_text or not value_text \
                or key_text.count(".") != 1:
            raise ConfigError(f"{context}: expected 'section.key=value'")
        section, key = (part.strip() for part in key_text.split("."))
        parser = _SCHEMA.get(section, {}).get(key)
        if parser is None:
            raise ConfigError(f"{context}: unknown key '{section}.{key}'")
        try:
            values[(section, key)] = parser(value_text)
        except _ValueSyntax as exc:
            raise ConfigError(f"{context}: {exc}") from exc
        lines[(section, key)] = idx
    if not values:
        return cfg
    merged = {}
    merged_lines = {}
    for section, parsers in _SCHEMA.items():
        for key in parsers:
            if (section, key) in _ROUTED:
                current = getattr(cfg, _ROUTED[(section, key)])
                if not current:
                    continue
            else:
                current = getattr(getattr(cfg, section), key)
            merged[(section, key)] = current
            merged_lines[(section, key)] = 0
    merged.update(values)
    merged_lines.update(lines)
    return _build(merged, merged_lines, "<overrides>")


def emit_config(cfg: RunConfig) -> str:
    """Serialize a config as parseable text (every key, schema order).

    Empty list values are omitted: an absent list key and an empty one
    mean the same thing, and the line grammar has no empty-value form.
    """
    out = []
    for section, parsers in _SCHEMA.items():
        for key in parsers:
            if (section, key) in _ROUTED:
                value = getattr(cfg, _ROUTED[(section, key)])
            else:
                value = getattr(getattr(cfg, section), key)
            if isinstance(value, tuple) and not value:
                continue
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, tuple):
                rendered = ", ".join(str(v) for v in value)
            elif isinstance(value, str):
                rendered = f'"{value}"'
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            out.append(f"{section}.{key} = {rendered}")
    return "\n".join(out) + "\n"


__all__ = [
    "ConfigError", "NetworkSection", "SweepSection", "PathsSection",
    "RunConfig", "parse_config_text", "parse_config_file", "apply_overrides",
    "emit_config",
]
