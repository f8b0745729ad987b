"""Query-log templatization and lifespan bucketing.

Lifespan is ``last_seen - first_seen``. Buckets follow the classic
dashboard/report cadence: under a week, 1-4, 4-12, 12-24 and 24-52 weeks
(anything longer lands in the last bucket). Templates run exactly once
are ad-hoc queries: their time counts toward the cluster total but they
are not placed in any bucket.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .sqlfront import templatize
from .util import rng_for

WEEK_S = 7 * 24 * 3600.0
BUCKET_EDGES_WEEKS = (1, 4, 12, 24, 52)
BUCKET_LABELS = ("<1 week", "1-4 weeks", "4-12 weeks", "12-24 weeks", "24-52 weeks")


@dataclass(frozen=True)
class LogRecord:
    timestamp: float  # POSIX seconds
    duration_ms: float
    sql: str

    def __post_init__(self):
        if not (self.duration_ms >= 0 and math.isfinite(self.duration_ms)):
            raise ValueError("duration_ms must be finite and >= 0")
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


@dataclass(frozen=True)
class TemplateStats:
    fingerprint: str
    first_seen: float
    last_seen: float
    executions: int
    total_time_ms: float

    @property
    def lifespan_s(self):
        return self.last_seen - self.first_seen

    def merge(self, other: "TemplateStats") -> "TemplateStats":
        if other.fingerprint != self.fingerprint:
            raise ValueError("cannot merge stats of different templates")
        return TemplateStats(self.fingerprint, min(self.first_seen, other.first_seen),
                             max(self.last_seen, other.last_seen),
                             self.executions + other.executions,
                             self.total_time_ms + other.total_time_ms)


class TemplateMap(dict):
    """fingerprint -> TemplateStats, plus the count of skipped records."""

    skipped = 0


def parse_timestamp(text):
    text = str(text).strip()
    try:
        return float(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts):
    return datetime.fromtimestamp(ts, timezone.utc).isoformat()


def _as_record(item):
    if isinstance(item, LogRecord):
        return item
    ts, dur, sql = item
    if not isinstance(sql, str) or not sql.strip():
        raise ValueError("empty sql")
    return LogRecord(parse_timestamp(ts), float(dur), sql)


def aggregate(log) -> TemplateMap:
    """One pass over records (LogRecord or ``(timestamp, duration_ms, sql)``)."""
    out = TemplateMap()
    skipped = 0
    fp_cache = {}
    for item in log:
        try:
            rec = _as_record(item)
        except (ValueError, TypeError):
            skipped += 1
            continue
        fp = fp_cache.get(rec.sql)
        if fp is None:
            fp = fp_cache[rec.sql] = templatize(rec.sql).fingerprint
        s = TemplateStats(fp, rec.timestamp, rec.timestamp, 1, rec.duration_ms)
        prev = out.get(fp)
        out[fp] = s if prev is None else prev.merge(s)
    out.skipped = skipped
    return out


def merge_maps(*maps) -> TemplateMap:
    out = TemplateMap()
    for m in maps:
        for fp, s in m.items():
            out[fp] = s if fp not in out else out[fp].merge(s)
        out.skipped += getattr(m, "skipped", 0)
    return out


def read_log_csv(path):
    """Rows of ``timestamp_iso8601, duration_ms, sql``; a header row is skipped.

    Yields raw tuples; :func:`aggregate` validates them.
    """
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if i == 0 and row and row[0].strip().lower() in ("timestamp", "timestamp_iso8601"):
                continue
            yield tuple(row) if len(row) == 3 else ("", "", None)


def write_log_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_iso8601", "duration_ms", "sql"])
        for r in records:
            w.writerow([format_timestamp(r.timestamp), repr(float(r.duration_ms)), r.sql])


def bucket_of(lifespan_s):
    weeks = lifespan_s / WEEK_S
    for i, edge in enumerate(BUCKET_EDGES_WEEKS[:-1]):
        if weeks < edge:
            return i
    return len(BUCKET_EDGES_WEEKS) - 1


def round_p50(x):
    """Executions rounded to the nearest 100 (the table's visible precision)."""
    return int(math.floor(x / 100.0 + 0.5) * 100)


def format_p50(x):
    return "<1000" if x < 1000 else str(round_p50(x))


def round_total_p50(x):
    return int(math.floor(x / 1e4 + 0.5) * 10_000)


def bucket_report(stats):
    """Rows ``(bucket, template_count, pct_cluster_time, p50_executions, p50_display)``.

    The share denominator is the time of every ingested record, ad-hoc
    ones included. Percentages are whole numbers; the totals row's share
    is the sum of the unrounded bucket shares, rounded.
    """
    items = list(stats.values()) if isinstance(stats, dict) else list(stats)
    grand = sum(s.total_time_ms for s in items)
    per = [[] for _ in BUCKET_LABELS]
    for s in items:
        if s.executions >= 2:
            per[bucket_of(s.lifespan_s)].append(s)
    rows = []
    all_execs, all_time = [], 0.0
    for label, group in zip(BUCKET_LABELS, per):
        t = sum(s.total_time_ms for s in group)
        ex = [s.executions for s in group]
        all_execs += ex
        all_time += t
        p50 = float(np.median(ex)) if ex else 0.0
        rows.append({"bucket": label, "template_count": len(group),
                     "pct_cluster_time": int(round(100 * t / grand)) if grand else 0,
                     "p50_executions": round_p50(p50), "p50_display": format_p50(p50) if ex else "-"})
    p50 = float(np.median(all_execs)) if all_execs else 0.0
    rows.append({"bucket": "Total", "template_count": len(all_execs),
                 "pct_cluster_time": int(round(100 * all_time / grand)) if grand else 0,
                 "p50_executions": round_total_p50(p50),
                 "p50_display": f"~{round_total_p50(p50)}" if all_execs else "-"})
    return rows


def report_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def report_text(rows):
    head = ("Duration", "# templates", "% cluster time", "P50 # executions")
    lines = [f"{head[0]:<14}{head[1]:>12}{head[2]:>16}{head[3]:>18}"]
    for r in rows:
        lines.append(f"{r['bucket']:<14}{r['template_count']:>12}{str(r['pct_cluster_time']) + '%':>16}"
                     f"{r['p50_display']:>18}")
    return "\n".join(lines)


# ----------------------------------------------------------------------
# synthetic fixture matching reference lifespan marginals

LIFESPAN_COUNTS = (52, 181, 1092, 540, 10983)
LIFESPAN_SHARES = (3, 5, 6, 19, 31)
LIFESPAN_P50 = (400, 700, 40900, 8700, 108600)  # first two only need to stay below 1000
LIFESPAN_TOTAL = (12848, 64)
_SPREAD = (0.5, 0.5, 1.0, 1.0, 0.3)  # log-normal sigma of executions per bucket


def _executions_with_median(rng, n, median, sigma):
    """n positive integers whose median is exactly ``median``."""
    half = n // 2
    lo = np.maximum(2, np.floor(median * np.exp(-np.abs(rng.normal(0, sigma, half))))).astype(np.int64)
    hi = np.ceil(median * np.exp(np.abs(rng.normal(0, sigma, half)))).astype(np.int64)
    if half:
        lo[0] = hi[0] = median
    out = np.concatenate([lo, hi, [median] if n % 2 else []]).astype(np.int64)
    return out[rng.permutation(n)]


def lifespan_fixture(seed=0, total_time_ms=1e9, adhoc_templates=2000, scale=1.0,
                   year_start=1_640_995_200.0):
    """TemplateStats whose bucket report reproduces the reference lifespan table.

    ``scale`` divides every execution count (minimum 2), for building a
    record-level log of manageable size; shares and counts are unaffected.
    """
    rng = rng_for("lifespan", seed)
    out = []
    edges = (0,) + BUCKET_EDGES_WEEKS
    for b, (n, share, med, sig) in enumerate(zip(LIFESPAN_COUNTS, LIFESPAN_SHARES, LIFESPAN_P50, _SPREAD)):
        execs = _executions_with_median(rng, n, med, sig)
        if scale != 1.0:
            execs = np.maximum(2, np.round(execs / scale)).astype(np.int64)
        lo_w, hi_w = edges[b], edges[b + 1]
        life = rng.uniform(lo_w + 0.01, hi_w - 0.01, n) * WEEK_S
        first = year_start + rng.uniform(0, 1, n) * (52 * WEEK_S - life)
        weights = execs * rng.lognormal(0.0, 0.5, n)
        times = total_time_ms * share / 100.0 * weights / weights.sum()
        for i in range(n):
            out.append(TemplateStats(f"t{b}_{i}", float(first[i]), float(first[i] + life[i]),
                                     int(execs[i]), float(times[i])))
    rest = 1.0 - sum(LIFESPAN_SHARES) / 100.0
    w = rng.lognormal(0.0, 1.0, adhoc_templates)
    ts = year_start + rng.uniform(0, 52 * WEEK_S, adhoc_templates)
    for i in range(adhoc_templates):
        out.append(TemplateStats(f"adhoc_{i}", float(ts[i]), float(ts[i]), 1,
                                 float(total_time_ms * rest * w[i] / w.sum())))
    return out


def fixture_log(stats, seed=0):
    """Expand TemplateStats into LogRecords that aggregate back to them.

    Template ``t`` becomes ``SELECT COUNT(*) FROM <t> WHERE id = <literal>``
    with a fresh literal per execution, so every record of a template
    shares one fingerprint. First and last executions sit exactly on the
    template's first/last_seen; durations split its total time evenly.
    """
    rng = rng_for("lifespan-log", seed)
    records = []
    for s in stats:
        n = s.executions
        if n == 1:
            stamps = np.array([s.first_seen])
        else:
            stamps = np.sort(rng.uniform(s.first_seen, s.last_seen, n))
            stamps[0], stamps[-1] = s.first_seen, s.last_seen
        dur = s.total_time_ms / n
        table = "tbl_" + s.fingerprint
        for k, t in enumerate(stamps):
            records.append(LogRecord(float(t), dur, f"SELECT COUNT(*) FROM {table} WHERE id = {k}"))
    order = rng.permutation(len(records))
    return [records[i] for i in order]
