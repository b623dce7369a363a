"""
CSV persistence and lookup for simulated critical-value tables.

File layout (UTF-8, LF line endings)::

    # expcp-critical-values v1
    # <metadata key>=<value>
    # warning=<text>
    stat,lambda,epsilon,K,alpha,critical_value,B,seed
    t-phi,-0.5,0.05,100,0.05,9.0232,5000,20110101
    s,,,300,0.05,1.7393,5000,20110101

Floats are written with ``repr`` (shortest string that reads back to the
same double), so read_table(write_table(t)) == t exactly.
"""

import csv
import io
import logging
import math
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError

from .exceptions import InputError, MissingCriticalValueError, TableFormatError
from .models import (
    CriticalValueEntry,
    CriticalValueTable,
    LookupPolicy,
    Provenance,
    StatisticKind,
    StatisticSpec,
)
from .telemetry_simple import metrics_collector, set_span_attribute, traced_operation

logger = logging.getLogger(__name__)

FORMAT_MAGIC = "# expcp-critical-values"
FORMAT_VERSION = "v1"
COLUMNS = ["stat", "lambda", "epsilon", "K", "alpha", "critical_value", "B", "seed"]


def _format_float(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _entry_row(entry: CriticalValueEntry) -> list[str]:
    return [
        entry.spec.kind.value,
        _format_float(entry.spec.lambda_),
        _format_float(entry.spec.epsilon),
        str(entry.K),
        _format_float(entry.alpha),
        _format_float(entry.critical_value),
        str(entry.B),
        str(entry.seed),
    ]


def format_table(table: CriticalValueTable) -> str:
    """Render a table in the CSV file format."""
    buffer = io.StringIO()
    buffer.write(f"{FORMAT_MAGIC} {FORMAT_VERSION}\n")
    for key in sorted(table.metadata):
        value = " ".join(str(table.metadata[key]).splitlines())
        buffer.write(f"# {key}={value}\n")
    for warning in table.warnings:
        buffer.write(f"# warning={' '.join(warning.splitlines())}\n")

    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(COLUMNS)
    for entry in table.entries:
        writer.writerow(_entry_row(entry))
    return buffer.getvalue()


@traced_operation("write_table", component="tablestore")
def write_table(table: CriticalValueTable, destination: Union[str, Path]) -> None:
    """
    Write a critical-value table to a CSV file.

    Args:
        table: Table to persist
        destination: Output file path (parent directories are created)

    Raises:
        RuntimeError: If the file cannot be written
    """
    path = Path(destination)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(format_table(table))
    except OSError as e:
        logger.error(f"Failed to write table {path}: {e}")
        raise RuntimeError(f"Table write failed: {e}") from e

    set_span_attribute("table.rows", len(table.entries))
    metrics_collector.get_counter("table_rows_written", "Critical-value rows written").add(
        len(table.entries)
    )
    logger.info(f"Wrote {len(table.entries)} critical values to {path}")


def _parse_float(text: str, column: str, line: int, allow_blank: bool = False) -> Optional[float]:
    if text == "":
        if allow_blank:
            return None
        raise TableFormatError(f"column {column!r} must not be empty", line=line)
    try:
        value = float(text)
    except ValueError:
        raise TableFormatError(f"column {column!r}: {text!r} is not a number", line=line) from None
    if not math.isfinite(value):
        raise TableFormatError(f"column {column!r}: {text!r} is not finite", line=line)
    return value


def _parse_int(text: str, column: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise TableFormatError(f"column {column!r}: {text!r} is not an integer", line=line) from None


def _parse_entry(fields: list[str], line: int) -> CriticalValueEntry:
    if len(fields) != len(COLUMNS):
        raise TableFormatError(f"expected {len(COLUMNS)} fields, found {len(fields)}", line=line)
    stat, lam, eps, K, alpha, value, B, seed = fields
    try:
        kind = StatisticKind(stat)
    except ValueError:
        raise TableFormatError(f"unknown statistic {stat!r}", line=line) from None

    try:
        spec = StatisticSpec(
            kind=kind,
            lambda_=_parse_float(lam, "lambda", line, allow_blank=True),
            epsilon=_parse_float(eps, "epsilon", line, allow_blank=True),
        )
        return CriticalValueEntry(
            spec=spec,
            K=_parse_int(K, "K", line),
            alpha=_parse_float(alpha, "alpha", line),
            critical_value=_parse_float(value, "critical_value", line),
            B=_parse_int(B, "B", line),
            seed=_parse_int(seed, "seed", line),
        )
    except ValidationError as e:
        raise TableFormatError(f"invalid row: {e.errors()[0]['msg']}", line=line) from e


def parse_table(text: str) -> CriticalValueTable:
    """
    Parse the CSV file format.

    Raises:
        TableFormatError: On a missing or foreign header, a malformed row or a
            duplicate (statistic, K, alpha) key; the message carries the line number
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith(FORMAT_MAGIC):
        raise TableFormatError(
            f"not a critical-value table (first line must be '{FORMAT_MAGIC} {FORMAT_VERSION}')",
            line=1,
        )
    version = lines[0][len(FORMAT_MAGIC):].strip()
    if version != FORMAT_VERSION:
        raise TableFormatError(
            f"unsupported table format {version!r}; this version of expcp reads {FORMAT_VERSION!r}",
            line=1,
        )

    metadata: dict[str, str] = {}
    warnings: list[str] = []
    number = 1
    for number, raw in enumerate(lines[1:], start=2):
        if not raw.startswith("#"):
            break
        key, sep, value = raw[1:].strip().partition("=")
        if not sep:
            continue
        if key == "warning":
            warnings.append(value)
        else:
            metadata[key] = value
    else:
        raise TableFormatError("missing column header row", line=number + 1)

    if next(csv.reader([lines[number - 1]])) != COLUMNS:
        raise TableFormatError(f"column header must be {','.join(COLUMNS)}", line=number)

    entries: list[CriticalValueEntry] = []
    seen: dict[tuple, int] = {}
    for line, raw in enumerate(lines[number:], start=number + 1):
        if raw.strip() == "":
            continue
        entry = _parse_entry(next(csv.reader([raw])), line)
        if entry.key in seen:
            raise TableFormatError(
                f"duplicate entry for {entry.spec.label}, K={entry.K}, alpha={entry.alpha} "
                f"(lines {seen[entry.key]} and {line})",
                line=line,
            )
        seen[entry.key] = line
        entries.append(entry)

    return CriticalValueTable(entries=entries, warnings=warnings, metadata=metadata)


@traced_operation("read_table", component="tablestore")
def read_table(source: Union[str, Path]) -> CriticalValueTable:
    """
    Read a critical-value table from a CSV file.

    Args:
        source: Path of a file written by write_table

    Returns:
        The parsed table

    Raises:
        InputError: If the file cannot be read
        TableFormatError: If the contents are malformed
    """
    path = Path(source)
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            text = handle.read()
    except OSError as e:
        raise InputError(f"Cannot read table {path}: {e}") from e
    table = parse_table(text)

    set_span_attribute("table.rows", len(table.entries))
    metrics_collector.get_counter("table_rows_read", "Critical-value rows read").add(
        len(table.entries)
    )
    logger.debug(f"Read {len(table.entries)} critical values from {path}")
    return table


def _simulate_hint(spec: StatisticSpec, K: int, alpha: float) -> str:
    stat = f"--stat {spec.kind.value}"
    if spec.kind is StatisticKind.PHI_FAMILY:
        stat += f" --lambda {spec.lambda_:g} --epsilon {spec.epsilon:g}"
    return f"python -m expcp critvals {stat} --K {K} --alpha {alpha:g}"


def lookup(
    table: CriticalValueTable,
    spec: StatisticSpec,
    K: int,
    alpha: float,
    policy: LookupPolicy = LookupPolicy.EXACT,
) -> tuple[float, Provenance]:
    """
    Find the critical value for (spec, K, alpha).

    Args:
        table: Loaded table
        spec: Statistic
        K: Sample length
        alpha: Significance level
        policy: EXACT, or NEAREST_K_WARN to fall back to the nearest stored K
            (ties go to the smaller K) with a warning in the provenance

    Returns:
        Tuple of (critical value, provenance)

    Raises:
        MissingCriticalValueError: If nothing usable is stored
    """
    entry = table.get(spec, K, alpha)
    if entry is not None:
        return entry.critical_value, Provenance(source="table", K_used=K, B=entry.B, seed=entry.seed)

    if policy is LookupPolicy.NEAREST_K_WARN:
        candidates = [e for e in table.entries if e.spec == spec and e.alpha == alpha]
        if candidates:
            nearest = min(candidates, key=lambda e: (abs(e.K - K), e.K))
            warning = (
                f"No critical value for K={K}; using the K={nearest.K} value "
                f"for {spec.label} at alpha={alpha:g}"
            )
            logger.warning(warning)
            return nearest.critical_value, Provenance(
                source="table", K_used=nearest.K, B=nearest.B, seed=nearest.seed, warning=warning
            )

    raise MissingCriticalValueError(
        f"No critical value for {spec.label}, K={K}, alpha={alpha:g}; "
        f"simulate it with `{_simulate_hint(spec, K, alpha)}`"
    )
