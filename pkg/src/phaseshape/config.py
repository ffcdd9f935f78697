"""Experiment configuration: flat key = value text with dotted section
prefixes, schema-validated before any run.

Example::

    mode = gcs
    bits_per_symbol = 6
    channel.snr_db = 17
    channel.linewidth_hz = 100e3
    bps.num_test_phases = 60

Unknown keys are rejected; every parse/validation error carries the line it
came from.  Lists are comma-separated.
"""

from __future__ import annotations

from dataclasses import dataclass

from .trainer import TrainConfig

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_config_text"]


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{s}'")


def _parse_int(s: str) -> int:
    return int(s.strip(), 0)


def _parse_float(s: str) -> float:
    return float(s.strip())


def _parse_str(s: str) -> str:
    return s.strip()


def _list_of(item_parser):
    def parse(s: str):
        s = s.strip()
        if not s:
            return []
        return [item_parser(part) for part in s.split(",")]

    return parse


@dataclass
class _Field:
    parse: callable
    default: object = None
    required: bool = False
    choices: tuple | None = None


SCHEMA: dict[str, _Field] = {
    "mode": _Field(_parse_str, required=True, choices=("gcs", "geopcs", "qam_pcs")),
    "bits_per_symbol": _Field(_parse_int, 6),
    "parameterized": _Field(_parse_bool, False),
    "epochs": _Field(_parse_int, 50),
    "batches_per_epoch": _Field(_parse_int, 10),
    "batch_size": _Field(_parse_int, 5000),
    "learning_rate": _Field(_parse_float, 0.001),
    "seed": _Field(_parse_int, 0),
    "symmetry": _Field(_parse_int, 0),
    "trainable_temperature": _Field(_parse_bool, False),
    "qam.fixed_lambda": _Field(_parse_float, None),
    "temperature.start": _Field(_parse_float, 1.0),
    "temperature.end": _Field(_parse_float, 0.001),
    "bps.num_test_phases": _Field(_parse_int, 60),
    "bps.half_window": _Field(_parse_int, 128),
    "bps.phase_span": _Field(_parse_str, "full_2pi", choices=("full_2pi", "quadrant")),
    "channel.snr_db": _Field(_parse_float, None),
    "channel.snr_db_min": _Field(_parse_float, None),
    "channel.snr_db_max": _Field(_parse_float, None),
    "channel.linewidth_hz": _Field(_parse_float, None),
    "channel.linewidth_hz_min": _Field(_parse_float, None),
    "channel.linewidth_hz_max": _Field(_parse_float, None),
    "channel.symbol_rate": _Field(_parse_float, 32e9),
    "channel.random_start_phase": _Field(_parse_bool, True),
    "demapper.hidden": _Field(_list_of(_parse_int), [128, 128]),
    "pnn.hidden": _Field(_parse_int, 32),
    "txnn.hidden": _Field(_parse_int, 32),
    "validation.num_symbols": _Field(_parse_int, 4096),
    "validation.every_epochs": _Field(_parse_int, 1),
    "evaluation.num_symbols": _Field(_parse_int, 10000),
    "sweep.snr_db": _Field(_list_of(_parse_float), []),
    "sweep.linewidth_hz": _Field(_list_of(_parse_float), []),
    "compare.num_test_phases": _Field(_list_of(_parse_int), [30, 60]),
    "compare.seeds": _Field(_list_of(_parse_int), [1, 2, 3]),
    "out_dir": _Field(_parse_str, "out"),
}


@dataclass
class ExperimentConfig:
    """Validated configuration plus the raw text it came from."""

    values: dict
    text: str
    lines: dict  # key -> source line, for late validation errors

    def __getitem__(self, key: str):
        return self.values[key]

    def train_config(self, seed_override: int | None = None) -> TrainConfig:
        v = self.values
        return TrainConfig(
            mode=v["mode"],
            m=v["bits_per_symbol"],
            parameterized=v["parameterized"],
            epochs=v["epochs"],
            batches_per_epoch=v["batches_per_epoch"],
            batch_size=v["batch_size"],
            learning_rate=v["learning_rate"],
            seed=v["seed"] if seed_override is None else seed_override,
            symmetry=v["symmetry"],
            trainable_temperature=v["trainable_temperature"],
            fixed_lambda=v["qam.fixed_lambda"],
            t_start=v["temperature.start"],
            t_end=v["temperature.end"],
            num_test_phases=v["bps.num_test_phases"],
            half_window=v["bps.half_window"],
            phase_span=v["bps.phase_span"],
            snr_db_range=v["_snr_db_range"],
            linewidth_hz_range=v["_linewidth_hz_range"],
            symbol_rate=v["channel.symbol_rate"],
            random_start_phase=v["channel.random_start_phase"],
            demapper_hidden=tuple(v["demapper.hidden"]),
            txnn_hidden=v["txnn.hidden"],
            pnn_hidden=v["pnn.hidden"],
            validation_symbols=v["validation.num_symbols"],
            validation_every=v["validation.every_epochs"],
        )


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    return parse_config_text(text)


def parse_config_text(text: str) -> ExperimentConfig:
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown key '{key}'", lineno)
        if key in values:
            raise ConfigError(f"duplicate key '{key}'", lineno)
        field = SCHEMA[key]
        try:
            parsed = field.parse(value)
        except ValueError as e:
            raise ConfigError(f"bad value for '{key}': {e}", lineno) from e
        if field.choices is not None and parsed not in field.choices:
            raise ConfigError(
                f"'{key}' must be one of {', '.join(map(str, field.choices))}", lineno
            )
        values[key] = parsed
        lines[key] = lineno
    for key, field in SCHEMA.items():
        if key not in values:
            if field.required:
                raise ConfigError(f"missing required key '{key}'")
            values[key] = field.default
    _cross_validate(values, lines)
    return ExperimentConfig(values=values, text=text, lines=lines)


def _line(lines: dict, *keys) -> int | None:
    for k in keys:
        if k in lines:
            return lines[k]
    return None


def _range_from(values, lines, base: str) -> tuple[float, float]:
    fixed = values[base]
    lo, hi = values[f"{base}_min"], values[f"{base}_max"]
    if fixed is not None:
        if lo is not None or hi is not None:
            raise ConfigError(
                f"give either '{base}' or the '{base}_min'/'{base}_max' pair, not both",
                _line(lines, base),
            )
        return (fixed, fixed)
    if lo is None or hi is None:
        raise ConfigError(
            f"need '{base}' or both '{base}_min' and '{base}_max'",
            _line(lines, f"{base}_min", f"{base}_max"),
        )
    if lo > hi:
        raise ConfigError(f"'{base}_min' exceeds '{base}_max'", _line(lines, f"{base}_min"))
    return (lo, hi)


def _cross_validate(values: dict, lines: dict) -> None:
    v = values
    if v["epochs"] < 0:
        raise ConfigError("'epochs' must be >= 0", _line(lines, "epochs"))
    if v["batches_per_epoch"] < 1:
        raise ConfigError("'batches_per_epoch' must be >= 1", _line(lines, "batches_per_epoch"))
    if v["batch_size"] <= 2 * v["bps.half_window"]:
        raise ConfigError(
            f"batch_size = {v['batch_size']} leaves no valid symbols after fringe removal; "
            f"it must exceed 2 * bps.half_window = {2 * v['bps.half_window']} "
            "(increase batch_size or decrease bps.half_window)",
            _line(lines, "batch_size", "bps.half_window"),
        )
    if v["learning_rate"] <= 0:
        raise ConfigError("'learning_rate' must be positive", _line(lines, "learning_rate"))
    if not (0.0 < v["temperature.end"] <= v["temperature.start"] <= 1.0):
        raise ConfigError(
            "need 1 >= temperature.start >= temperature.end > 0",
            _line(lines, "temperature.start", "temperature.end"),
        )
    m = v["bits_per_symbol"]
    if m < 1:
        raise ConfigError("'bits_per_symbol' must be >= 1", _line(lines, "bits_per_symbol"))
    if not 0 <= v["symmetry"] <= m - 1:
        raise ConfigError("'symmetry' must lie in [0, bits_per_symbol - 1]", _line(lines, "symmetry"))
    if v["bps.num_test_phases"] < 2:
        raise ConfigError("'bps.num_test_phases' must be >= 2", _line(lines, "bps.num_test_phases"))
    if v["bps.half_window"] < 0:
        raise ConfigError("'bps.half_window' must be >= 0", _line(lines, "bps.half_window"))
    if v["mode"] == "qam_pcs" and m % 2 != 0:
        raise ConfigError("qam_pcs needs an even bits_per_symbol (square QAM)", _line(lines, "mode"))
    if v["mode"] != "qam_pcs":
        if v["qam.fixed_lambda"] is not None:
            raise ConfigError("'qam.fixed_lambda' only applies to mode qam_pcs", _line(lines, "qam.fixed_lambda"))
        if v["bps.phase_span"] == "quadrant":
            raise ConfigError(
                "quadrant phase span is reserved for the square-QAM baseline (mode qam_pcs)",
                _line(lines, "bps.phase_span"),
            )
    if v["validation.num_symbols"] <= 2 * v["bps.half_window"]:
        raise ConfigError(
            "'validation.num_symbols' must exceed 2 * bps.half_window",
            _line(lines, "validation.num_symbols"),
        )
    if v["evaluation.num_symbols"] <= 2 * v["bps.half_window"]:
        raise ConfigError(
            "'evaluation.num_symbols' must exceed 2 * bps.half_window",
            _line(lines, "evaluation.num_symbols"),
        )
    if v["validation.every_epochs"] < 1:
        raise ConfigError("'validation.every_epochs' must be >= 1", _line(lines, "validation.every_epochs"))
    v["_snr_db_range"] = _range_from(values, lines, "channel.snr_db")
    v["_linewidth_hz_range"] = _range_from(values, lines, "channel.linewidth_hz")
    if v["_linewidth_hz_range"][0] < 0:
        raise ConfigError("linewidth must be >= 0", _line(lines, "channel.linewidth_hz", "channel.linewidth_hz_min"))
    if v["channel.symbol_rate"] <= 0:
        raise ConfigError("'channel.symbol_rate' must be positive", _line(lines, "channel.symbol_rate"))
