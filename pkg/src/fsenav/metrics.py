"""Success rate, SPL and distance-to-goal over episode results."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ArgumentError, DataError


@dataclass(frozen=True)
class MetricsSummary:
    n: int
    sr: float
    spl: float
    dtg: float


def _field(r, name):
    return r[name] if isinstance(r, dict) else getattr(r, name)


def _check(results):
    if len(results) == 0:
        raise ArgumentError("metrics need at least one episode")


def spl_terms(results) -> np.ndarray:
    terms = []
    for r in results:
        l, p = float(_field(r, "optimal_length")), float(_field(r, "path_length"))
        if not l > 0:
            raise DataError(f"optimal length must be positive, got {l}")
        if p < 0:
            raise DataError(f"path length must be non-negative, got {p}")
        s = 1.0 if _field(r, "success") else 0.0
        terms.append(s * l / max(l, p))
    return np.asarray(terms, dtype=np.float64)


def spl(results) -> float:
    _check(results)
    return float(spl_terms(results).mean())


def success_rate(results) -> float:
    _check(results)
    return float(np.mean([1.0 if _field(r, "success") else 0.0 for r in results]))


def dtg_mean(results) -> float:
    """Mean final distance to goal; episodes with no finite distance are skipped."""
    _check(results)
    d = np.array([float(_field(r, "dtg")) for r in results])
    d = d[np.isfinite(d)]
    return float(d.mean()) if d.size else math.inf


def summarize(results) -> MetricsSummary:
    return MetricsSummary(len(results), success_rate(results), spl(results), dtg_mean(results))


def summary_by_policy(results) -> dict[str, MetricsSummary]:
    groups: dict[str, list] = {}
    for r in results:
        groups.setdefault(_field(r, "policy"), []).append(r)
    return {k: summarize(v) for k, v in groups.items()}


def format_table(summaries: dict[str, MetricsSummary]) -> str:
    rows = [("policy", "N", "SR", "SPL", "DTG")]
    for name, s in summaries.items():
        rows.append((name, str(s.n), f"{s.sr:.3f}", f"{s.spl:.3f}", f"{s.dtg:.3f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in rows]
    return "\n".join(lines)


def format_csv(summaries: dict[str, MetricsSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "n", "sr", "spl", "dtg"])
    for name, s in summaries.items():
        w.writerow([name, s.n, f"{s.sr:.6f}", f"{s.spl:.6f}", f"{s.dtg:.6f}"])
    return buf.getvalue()


def read_results(path) -> tuple[dict, list[dict]]:
    """Header dict (possibly empty) and the result records of a JSONL file."""
    header, records = {}, []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{i + 1}: bad JSON ({exc.msg})") from None
        if "header" in d:
            header = d["header"]
            continue
        for key in ("success", "path_length", "optimal_length"):
            if key not in d:
                raise DataError(f"{path}:{i + 1}: missing field {key!r}")
        if d.get("dtg") is None:
            d["dtg"] = math.inf
        d.setdefault("policy", "unknown")
        records.append(d)
    return header, records
