"""Run configuration, raw-data ingestion and risk-table files.

Config files are flat ``key = value`` text; ``#`` starts a comment.
Scheme fields (``scheme``, ``k``, ``n``) have no defaults.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import DomainError, ExpoEntropyError, ValidationError
from .losses import LossModel, loss_from_name
from .sampling import SchemeConfig
from .simulation import RiskRow, RiskTable

__all__ = [
    "ConfigError",
    "DataParseError",
    "RunConfig",
    "load_config",
    "parse_config_text",
    "read_populations",
    "write_tables",
    "read_tables",
    "format_number",
]

NA = "NA"
TABLE_FIELDS = ("estimator", "risk", "std_err", "pri")
_SECTION = "run"
_SPLIT = re.compile(r"[,\s;]+")


class ConfigError(ExpoEntropyError, ValueError):
    pass


class DataParseError(ValidationError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def _ints(text: str) -> list[int]:
    try:
        return [int(tok) for tok in _SPLIT.split(text.strip()) if tok]
    except ValueError:
        raise ConfigError(f"expected integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in _SPLIT.split(text.strip()) if tok]
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}") from None


@dataclass
class RunConfig:
    scheme: str
    k: int
    n_values: list
    r: Optional[int] = None
    n_total: Optional[int] = None
    removals: Optional[tuple] = None
    loss: str = "squared_error"
    linex_a: Optional[float] = None
    estimators: list = field(default_factory=lambda: ["mrie", "stein", "bz"])
    mu0: float = 0.0
    sigma0: float = 1.0
    nu: float = 1.0
    alpha: Optional[float] = None
    theta_grid: list = field(default_factory=list)
    sigma: float = 1.0
    replications: int = 20_000
    seed: Optional[int] = None
    output_format: str = "csv"
    common_random_numbers: bool = True

    @property
    def n(self) -> int:
        if len(self.n_values) != 1:
            raise ConfigError(f"this command needs a single n, got {self.n_values}")
        return self.n_values[0]

    def scheme_config(self, n: int | None = None) -> SchemeConfig:
        n = self.n if n is None else n
        try:
            return SchemeConfig(self.scheme, self.k, n, self.r, self.n_total, self.removals)
        except DomainError as err:
            raise ConfigError(str(err)) from None

    def loss_model(self) -> LossModel:
        try:
            return loss_from_name(self.loss, self.linex_a)
        except DomainError as err:
            raise ConfigError(str(err)) from None


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    raw = dict(parser[_SECTION])
    missing = [key for key in ("scheme", "k", "n") if key not in raw]
    if missing:
        raise ConfigError(f"{source}: missing required keys {missing}")

    def pop(key, convert, default=None):
        if key not in raw:
            return default
        value = raw.pop(key)
        try:
            return convert(value)
        except (ValueError, ConfigError) as err:
            raise ConfigError(f"{source}: bad value for {key}: {err}") from None

    cfg = RunConfig(
        scheme=pop("scheme", str.strip),
        k=pop("k", int),
        n_values=pop("n", _ints),
        r=pop("r", int),
        n_total=pop("n_total", int),
        removals=pop("removals", lambda v: tuple(_ints(v))),
        loss=pop("loss", str.strip, "squared_error"),
        linex_a=pop("linex_a", float),
        estimators=pop("estimators", lambda v: [t for t in _SPLIT.split(v.strip()) if t], ["mrie", "stein", "bz"]),
        mu0=pop("mu0", float, 0.0),
        sigma0=pop("sigma0", float, 1.0),
        nu=pop("nu", float, 1.0),
        alpha=pop("alpha", float),
        theta_grid=pop("theta_grid", lambda v: [_floats(cell) for cell in v.split(";") if cell.strip()], []),
        sigma=pop("sigma", float, 1.0),
        replications=pop("replications", int, 20_000),
        seed=pop("seed", int),
        output_format=pop("format", str.strip, "csv"),
        common_random_numbers=pop("common_random_numbers", lambda v: parser.BOOLEAN_STATES[v.lower()], True),
    )
    if raw:
        raise ConfigError(f"{source}: unknown keys {sorted(raw)}")
    if cfg.output_format not in ("csv", "json"):
        raise ConfigError(f"{source}: format must be csv or json")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_config_text(text, str(path))


def read_populations(path) -> list[list[float]]:
    """One population per non-blank line; values separated by commas, semicolons or whitespace."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as err:
        raise ValidationError(f"cannot read data file {path}: {err}") from None
    pops = []
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        values = []
        for tok in _SPLIT.split(body):
            if not tok:
                continue
            try:
                value = float(tok)
            except ValueError:
                raise DataParseError(path, lineno, f"not a number: {tok!r}") from None
            if not math.isfinite(value):
                raise DataParseError(path, lineno, f"non-finite value {tok!r}")
            values.append(value)
        pops.append(values)
    if not pops:
        raise ValidationError(f"{path}: no data")
    return pops


def format_number(value: float) -> str:
    """Seven significant digits; ``NA`` for missing values."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return NA
    return f"{value:.7g}"


def _table_header(k: int) -> list[str]:
    return ["n"] + [f"theta_{i + 1}" for i in range(k)] + list(TABLE_FIELDS)


def write_tables(tables: list, path, fmt: str = "csv") -> None:
    """Write one or more risk tables (e.g. one per n) to a single file."""
    path = Path(path)
    if fmt == "json":
        payload = [
            {
                "scheme": t.scheme,
                "n": t.n,
                "loss": t.loss,
                "replications": t.replications,
                "master_seed": t.master_seed,
                "rows": [
                    {
                        "theta": list(r.theta),
                        "estimator": r.estimator,
                        "risk": r.risk,
                        "std_err": None if math.isnan(r.std_err) else r.std_err,
                        "pri": None if math.isnan(r.pri) else r.pri,
                    }
                    for r in t.rows
                ],
            }
            for t in tables
        ]
        path.write_text(json.dumps(payload, indent=2) + "\n")
        return
    if fmt != "csv":
        raise ConfigError(f"unknown output format {fmt!r}")
    k = len(tables[0].rows[0].theta)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_table_header(k))
        for t in tables:
            for r in t.rows:
                writer.writerow(
                    [t.n]
                    + [format_number(v) for v in r.theta]
                    + [r.estimator, format_number(r.risk), format_number(r.std_err), format_number(r.pri)]
                )


def _parse_cell(text: str) -> float:
    return math.nan if text == NA else float(text)


def read_tables(path) -> list:
    """Inverse of :func:`write_tables`; the format is inferred from the content."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("["):
        tables = []
        for t in json.loads(text):
            rows = [
                RiskRow(
                    tuple(r["theta"]),
                    r["estimator"],
                    r["risk"],
                    math.nan if r["std_err"] is None else r["std_err"],
                    math.nan if r["pri"] is None else r["pri"],
                )
                for r in t["rows"]
            ]
            tables.append(RiskTable(rows, t["scheme"], t["n"], t["loss"], t["replications"], t["master_seed"]))
        return tables
    reader = csv.reader(text.splitlines())
    header = next(reader)
    k = len(header) - 1 - len(TABLE_FIELDS)
    if header != _table_header(k):
        raise ValidationError(f"{path}: unexpected header {header}")
    by_n: dict = {}
    for rec in reader:
        n = int(rec[0])
        theta = tuple(float(v) for v in rec[1 : 1 + k])
        est, risk, se, pri = rec[1 + k :]
        by_n.setdefault(n, []).append(RiskRow(theta, est, _parse_cell(risk), _parse_cell(se), _parse_cell(pri)))
    return [RiskTable(rows, n=n) for n, rows in by_n.items()]
