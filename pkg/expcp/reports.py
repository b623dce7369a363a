"""
Report writers: table-shaped Markdown, long-format CSV and JSON.

Critical values are laid out with rows (alpha, K) and one column per
statistic, plus an asymptotic row per level. Size tables star every cell the
binomial accuracy test flags; power tables get one section per (alpha, tau)
with the best statistic of each row in bold.
"""

import json
import logging
from fractions import Fraction
from typing import Any, Iterable, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from .asymptotics import asymptotic_critical_value
from .models import (
    AccuracyFlag,
    CriticalValueTable,
    StatisticKind,
    StatisticSpec,
    StudyReport,
)
from .reference import reference_critical_value

logger = logging.getLogger(__name__)

INFINITY_LABEL = "∞"

_KIND_ORDER = {
    StatisticKind.PHI_FAMILY: 0,
    StatisticKind.LRT: 1,
    StatisticKind.LRT_NORMALIZED: 2,
    StatisticKind.S: 3,
}


def spec_order(spec: StatisticSpec) -> tuple:
    return (_KIND_ORDER[spec.kind], spec.epsilon or 0.0, spec.lambda_ or 0.0)


def _headings(specs: Iterable[StatisticSpec]) -> dict[StatisticSpec, str]:
    specs = sorted(set(specs), key=spec_order)
    epsilons = {s.epsilon for s in specs if s.kind is StatisticKind.PHI_FAMILY}
    # short lambda headings only when they are unambiguous
    return {s: (s.label if len(epsilons) > 1 else s.column) for s in specs}


def format_theta(theta: float) -> str:
    """5 -> '5', 0.2 -> '1/5'."""
    fraction = Fraction(theta).limit_denominator(1000)
    if abs(float(fraction) - theta) < 1e-12 and fraction.denominator != 1:
        return f"{fraction.numerator}/{fraction.denominator}"
    return f"{theta:g}"


def markdown_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Render a GitHub-flavoured Markdown table."""
    lines = [
        "| " + " | ".join(str(h) for h in headers) + " |",
        "|" + "|".join("---:" for _ in headers) + "|",
    ]
    lines.extend("| " + " | ".join(str(cell) for cell in row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def _fmt(value: Optional[float], digits: int = 4) -> str:
    if value is None or pd.isna(value):
        return ""
    return f"{value:.{digits}f}"


def critical_values_frame(table: CriticalValueTable) -> pd.DataFrame:
    """Long format: one row per table entry."""
    return pd.DataFrame(
        [
            {
                "stat": e.spec.kind.value,
                "lambda": e.spec.lambda_,
                "epsilon": e.spec.epsilon,
                "K": e.K,
                "alpha": e.alpha,
                "critical_value": e.critical_value,
                "B": e.B,
                "seed": e.seed,
            }
            for e in table.entries
        ],
        columns=["stat", "lambda", "epsilon", "K", "alpha", "critical_value", "B", "seed"],
    )


def _pivot(records: list[dict], value: str, headings: dict[StatisticSpec, str]) -> pd.DataFrame:
    frame = pd.DataFrame.from_records(records, columns=["alpha", "K", "column", value])
    pivot = frame.pivot_table(
        index=["alpha", "K"], columns="column", values=value, aggfunc="first"
    )
    order = [h for h in headings.values() if h in pivot.columns]
    return pivot.reindex(columns=order).sort_index(level=["alpha", "K"], ascending=[False, True])


def critical_values_markdown(table: CriticalValueTable, asymptotic: bool = True) -> str:
    """
    Critical values shaped like the published table.

    Args:
        table: Simulated critical values
        asymptotic: Append an asymptotic row to every level group

    Returns:
        Markdown text
    """
    if not table.entries:
        return "_No critical values._\n"
    headings = _headings(e.spec for e in table.entries)
    records = [
        {"alpha": e.alpha, "K": e.K, "column": headings[e.spec], "cv": e.critical_value}
        for e in table.entries
    ]
    pivot = _pivot(records, "cv", headings)

    rows = []
    for alpha in pivot.index.get_level_values("alpha").unique():
        block = pivot.xs(alpha, level="alpha")
        for K, values in block.iterrows():
            rows.append([f"{alpha:g}", K, *(_fmt(v) for v in values)])
        if asymptotic:
            limits = {
                headings[spec]: asymptotic_critical_value(spec, 10**9, alpha)
                for spec in headings
                if spec.kind is not StatisticKind.LRT
            }
            rows.append(
                [f"{alpha:g}", INFINITY_LABEL, *(_fmt(limits.get(c)) for c in pivot.columns)]
            )
    return markdown_table(["alpha", "K", *pivot.columns], rows)


def comparison_markdown(table: CriticalValueTable) -> str:
    """Simulated minus published reference value for every tabulated cell."""
    headings = _headings(e.spec for e in table.entries)
    records = []
    for e in table.entries:
        reference = reference_critical_value(e.spec, e.K, e.alpha)
        if reference is not None:
            records.append(
                {
                    "alpha": e.alpha,
                    "K": e.K,
                    "column": headings[e.spec],
                    "diff": e.critical_value - reference,
                }
            )
    if not records:
        return "_No simulated cell has a published reference value._\n"
    pivot = _pivot(records, "diff", headings)
    rows = [
        [f"{alpha:g}", K, *(f"{v:+.4f}" if not pd.isna(v) else "" for v in values)]
        for (alpha, K), values in pivot.iterrows()
    ]
    return markdown_table(["alpha", "K", *pivot.columns], rows)


def study_frame(report: StudyReport) -> pd.DataFrame:
    """Long format: one row per study cell."""
    return pd.DataFrame(
        [
            {
                "kind": report.kind,
                "K": c.K,
                "tau": c.tau,
                "theta1": c.theta1,
                "stat": c.spec.kind.value,
                "lambda": c.spec.lambda_,
                "epsilon": c.spec.epsilon,
                "alpha": c.alpha,
                "critical_value": c.critical_value,
                "rejections": c.rejections,
                "B": c.B,
                "proportion": c.proportion,
                "flag": c.flag.value if c.flag else None,
            }
            for c in report.cells
        ],
        columns=[
            "kind", "K", "tau", "theta1", "stat", "lambda", "epsilon", "alpha",
            "critical_value", "rejections", "B", "proportion", "flag",
        ],
    )


def size_markdown(report: StudyReport) -> str:
    """Empirical sizes with a star on every cell flagged liberal or conservative."""
    headings = _headings(c.spec for c in report.cells)
    records = [
        {
            "alpha": c.alpha,
            "K": c.K,
            "column": headings[c.spec],
            "cell": _fmt(c.proportion) + ("*" if c.flag not in (None, AccuracyFlag.ACCURATE) else ""),
        }
        for c in report.cells
    ]
    if not records:
        return "_No size cells._\n"
    pivot = _pivot(records, "cell", headings)
    rows = [
        [f"{alpha:g}", K, *(v if isinstance(v, str) else "" for v in values)]
        for (alpha, K), values in pivot.iterrows()
    ]
    return markdown_table(["alpha", "K", *pivot.columns], rows)


def power_markdown(report: StudyReport) -> str:
    """One power table per (alpha, tau); rows (K, theta1), best statistic in bold."""
    if not report.cells:
        return "_No power cells._\n"
    headings = _headings(c.spec for c in report.cells)
    frame = pd.DataFrame(
        [
            {
                "alpha": c.alpha,
                "tau": c.tau,
                "K": c.K,
                "theta1": c.theta1,
                "column": headings[c.spec],
                "power": c.proportion,
            }
            for c in report.cells
        ]
    )
    columns = [h for h in headings.values() if h in set(frame["column"])]

    sections = []
    for (alpha, tau), group in frame.groupby(["alpha", "tau"], sort=False):
        pivot = group.pivot_table(
            index=["K", "theta1"], columns="column", values="power", aggfunc="first", sort=False
        ).reindex(columns=columns)
        rows = []
        for (K, theta1), values in pivot.iterrows():
            best = values.max()
            cells = [
                "" if pd.isna(v) else (f"**{v:.4f}**" if v == best else f"{v:.4f}")
                for v in values
            ]
            rows.append([K, format_theta(theta1), *cells])
        sections.append(
            f"### alpha={alpha:g}, tau={tau:g}\n\n"
            + markdown_table(["K", "theta1", *columns], rows)
        )
    return "\n".join(sections)


def _header_lines(metadata: dict[str, Any]) -> str:
    return "".join(
        f"# {key}={json.dumps(value, sort_keys=True) if isinstance(value, (dict, list)) else value}\n"
        for key, value in metadata.items()
    )


def frame_to_csv(frame: pd.DataFrame, metadata: Optional[dict[str, Any]] = None) -> str:
    """CSV text with '# key=value' header lines."""
    return _header_lines(metadata or {}) + frame.to_csv(index=False, lineterminator="\n")


def to_json(model: BaseModel) -> str:
    """Pretty JSON with alias field names (e.g. 'lambda')."""
    return model.model_dump_json(indent=2, by_alias=True) + "\n"
