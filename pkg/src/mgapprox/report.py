"""CSV verification reports and their summary."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

__all__ = ["HEADER", "ReportRow", "format_float", "render_report", "write_report",
           "read_report", "summarize", "CHECKLIST"]

HEADER = ("check", "model", "q", "n", "empirical", "se", "theoretical", "ratio", "verdict", "seed")
CHECKLIST = ("2", "9", "15", "23", "30", "31", "33")


def format_float(x) -> str:
    """17 significant digits; empty for a missing value."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


@dataclass(frozen=True)
class ReportRow:
    check: str
    model: str
    q: float | None
    n: int | None
    empirical: float | None
    se: float | None
    theoretical: float | None
    verdict: str
    seed: int

    @property
    def ratio(self):
        e, t = self.empirical, self.theoretical
        if e is None or t is None or math.isnan(e) or math.isnan(t):
            return None
        if t == 0:
            return 0.0 if e == 0 else math.inf
        return e / t

    def cells(self):
        return (self.check, self.model, format_float(self.q),
                "" if self.n is None else str(int(self.n)), format_float(self.empirical),
                format_float(self.se), format_float(self.theoretical), format_float(self.ratio),
                self.verdict, str(self.seed))

    def sort_key(self):
        return (self.check, self.model, -1 if self.n is None else int(self.n),
                -1.0 if self.q is None else float(self.q))


def pass_fail(ok: bool) -> str:
    return "pass" if ok else "fail"


def skipped(reason: str) -> str:
    return f"skipped({reason})"


def render_report(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in sorted(rows, key=ReportRow.sort_key):
        w.writerow(r.cells())
    return buf.getvalue()


def write_report(path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render_report(rows).encode())
    return path


def read_report(path):
    """Rows of a report as dicts; raises ``ValueError`` on a foreign header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != HEADER:
            raise ValueError(f"{path}: not a verification report")
        return [dict(zip(HEADER, row)) for row in reader]


def _condition_of(check: str):
    if check.startswith("conditions."):
        return check.split(".", 1)[1]
    if check == "gmc":
        return "33"
    return None


def summarize(directory) -> tuple[str, int]:
    """Human-readable verdict table and exit status (0 iff no fail rows).

    Every ``*.csv`` in ``directory`` with the report header is read; other
    CSV files (profiles, decompositions) are ignored.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory}: no such report directory")
    rows = []
    for p in sorted(directory.glob("*.csv")):
        with open(p, newline="") as fh:
            first = fh.readline().strip()
        if first != ",".join(HEADER):
            continue
        rows.extend(read_report(p))
    if not rows:
        raise ValueError(f"{directory}: no verification reports found")
    lines = []
    counts = {}
    for r in rows:
        c = counts.setdefault(r["check"], [0, 0, 0])
        v = r["verdict"]
        c[0 if v == "pass" else 1 if v == "fail" else 2] += 1
    width = max(len(k) for k in counts)
    lines.append(f"{'check':<{width}}  pass  fail  skipped")
    for k in sorted(counts):
        p, f, s = counts[k]
        lines.append(f"{k:<{width}}  {p:>4}  {f:>4}  {s:>7}")
    fails = [r for r in rows if r["verdict"] == "fail"]
    n_skip = sum(c[2] for c in counts.values())
    if fails:
        lines.append("")
        lines.append("failed rows:")
        for r in fails:
            lines.append("  " + ",".join(r[h] for h in HEADER))
    lines.append("")
    lines.append("condition checklist:")
    models = sorted({r["model"] for r in rows})
    for m in models:
        status = {}
        for r in rows:
            cond = _condition_of(r["check"])
            if r["model"] != m or cond is None:
                continue
            v = r["verdict"]
            prev = status.get(cond)
            # a failure at any q dominates, then a pass, then a skip
            if prev is None or v == "fail" or (v == "pass" and prev.startswith("skipped")):
                status[cond] = v
        items = [f"({c}) {status.get(c, 'not run')}" for c in CHECKLIST]
        lines.append(f"  {m}: " + "; ".join(items))
    lines.append("")
    lines.append(f"{len(rows)} rows, {len(fails)} failed, {n_skip} skipped")
    return "\n".join(lines), (1 if fails else 0)
