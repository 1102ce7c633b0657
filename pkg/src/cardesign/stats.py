"""Statistical toolkit for corpora of session metrics: rank tests, rank
correlation, multiple-comparison correction, correlation comparison via the
z-transform, kernel density estimates, and a plan-driven corpus analyzer.

All tie handling uses mid-ranks. P-values are exact where enumeration is
tractable and normal/t approximations elsewhere; everything is deterministic.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betainc

from .errors import ValidationError

EXACT_SIDE_LIMIT = 20          # exact U distribution up to this per-side size
TIE_ENUM_BUDGET = 100_000      # max C(n+m, n) for exact enumeration with ties


@dataclass(frozen=True)
class SampleSet:
    label: str
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValidationError(f"sample set {self.label!r} is empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError(f"sample set {self.label!r} has non-finite values")


@dataclass
class TestResult:
    statistic: float
    p_value: float
    significant: bool | None = None

    def judged(self, alpha: float) -> "TestResult":
        return TestResult(self.statistic, self.p_value, self.p_value < alpha)


def _midranks(values: list[float]) -> list[float]:
    """Fractional ranks (1-based); ties share the mean of their rank block."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks


def _norm_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _u_statistic(x, y) -> float:
    """U for x: pairs with x_i > y_j, ties counting one half."""
    n1, n2 = len(x), len(y)
    ranks = _midranks(list(x) + list(y))
    r1 = sum(ranks[:n1])
    return r1 - n1 * (n1 + 1) / 2.0


def _exact_u_counts(n1: int, n2: int) -> list[int]:
    """Distribution of the rank-sum of n1 ranks chosen from 1..n1+n2 with no
    ties, as subset counts indexed by U = ranksum - n1(n1+1)/2."""
    max_u = n1 * n2
    lo_sum = n1 * (n1 + 1) // 2
    # ways[k][s] = subsets of size k with rank-sum s
    ways = [[0] * (lo_sum + max_u + 1) for _ in range(n1 + 1)]
    ways[0][0] = 1
    for rank in range(1, n1 + n2 + 1):
        for k in range(min(rank, n1), 0, -1):
            row, prev = ways[k], ways[k - 1]
            for s in range(lo_sum + max_u, rank - 1, -1):
                if prev[s - rank]:
                    row[s] += prev[s - rank]
    return [ways[n1][lo_sum + u] for u in range(max_u + 1)]


def _two_sided_from_cdf(le: float, ge: float) -> float:
    return min(1.0, 2.0 * min(le, ge))


def mann_whitney_u(x: SampleSet, y: SampleSet) -> TestResult:
    """Rank test of whether x tends to exceed y. The statistic is U for x;
    the p-value is two-sided."""
    xs, ys = list(x.values), list(y.values)
    n1, n2 = len(xs), len(ys)
    u = _u_statistic(xs, ys)
    pooled = xs + ys
    has_ties = len(set(pooled)) != len(pooled)

    if not has_ties and n1 <= EXACT_SIDE_LIMIT and n2 <= EXACT_SIDE_LIMIT:
        counts = _exact_u_counts(n1, n2)
        total = sum(counts)
        ui = int(round(u))
        le = sum(counts[:ui + 1]) / total
        ge = sum(counts[ui:]) / total
        return TestResult(u, _two_sided_from_cdf(le, ge))

    if has_ties and math.comb(n1 + n2, n1) <= TIE_ENUM_BUDGET:
        le = ge = 0
        total = 0
        idx = range(n1 + n2)
        for chosen in itertools.combinations(idx, n1):
            cset = set(chosen)
            gx = [pooled[i] for i in chosen]
            gy = [pooled[i] for i in idx if i not in cset]
            up = _u_statistic(gx, gy)
            total += 1
            if up <= u + 1e-12:
                le += 1
            if up >= u - 1e-12:
                ge += 1
        return TestResult(u, _two_sided_from_cdf(le / total, ge / total))

    # normal approximation with tie correction and continuity correction
    n = n1 + n2
    mu = n1 * n2 / 2.0
    tie_term = 0.0
    seen = sorted(pooled)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and seen[j + 1] == seen[i]:
            j += 1
        t = j - i + 1
        tie_term += t ** 3 - t
        i = j + 1
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return TestResult(u, 1.0)
    diff = u - mu
    if diff > 0:
        z = (diff - 0.5) / math.sqrt(var)
    elif diff < 0:
        z = (diff + 0.5) / math.sqrt(var)
    else:
        z = 0.0
    return TestResult(u, min(1.0, 2.0 * _norm_sf(abs(z))))


def spearman_rho(x, y) -> TestResult:
    """Rank-order correlation of paired samples with a t-approximated
    two-sided p-value."""
    xs, ys = list(x), list(y)
    if len(xs) != len(ys):
        raise ValidationError("paired samples differ in length")
    n = len(xs)
    if n < 3:
        raise ValidationError("need at least 3 pairs")
    rx = _midranks(xs)
    ry = _midranks(ys)
    mx = sum(rx) / n
    my = sum(ry) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    if sxx == 0 or syy == 0:
        raise ValidationError("correlation undefined for constant input")
    rho = sxy / math.sqrt(sxx * syy)
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return TestResult(rho, 0.0)
    df = n - 2
    t2 = rho * rho * df / (1.0 - rho * rho)
    p = betainc(df / 2.0, 0.5, df / (df + t2))
    return TestResult(rho, float(p))


def bonferroni(alpha: float, m: int) -> float:
    """Adjusted per-test significance level for m comparisons."""
    if not (0.0 < alpha < 1.0):
        raise ValidationError("alpha must be in (0, 1)")
    if m < 1:
        raise ValidationError("m must be at least 1")
    return alpha / m


def fisher_z_compare(r1: float, n1: int, r2: float, n2: int) -> TestResult:
    """Compare two correlation coefficients via the z-transform."""
    for r in (r1, r2):
        if not abs(r) < 1.0:
            raise ValidationError("correlations must satisfy |r| < 1")
    if n1 < 4 or n2 < 4:
        raise ValidationError("need at least 4 observations per correlation")
    z = (math.atanh(r1) - math.atanh(r2)) / math.sqrt(
        1.0 / (n1 - 3) + 1.0 / (n2 - 3))
    return TestResult(z, min(1.0, 2.0 * _norm_sf(abs(z))))


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    std = float(np.std(x))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    return 0.9 * spread * len(x) ** (-0.2)


def kde(samples, grid=None, bandwidth: float | None = None):
    """Gaussian-kernel density estimate evaluated on a grid.

    Returns (grid, density) arrays. With no grid given, one spanning the data
    plus four bandwidths is built. Bandwidth defaults to Silverman's rule;
    zero-variance samples require an explicit bandwidth.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValidationError("kde needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValidationError("kde samples must be finite")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
        if bandwidth <= 0:
            raise ValidationError(
                "zero-variance samples: pass an explicit bandwidth")
    if bandwidth <= 0:
        raise ValidationError("bandwidth must be positive")
    if grid is None:
        lo = float(x.min()) - 4.0 * bandwidth
        hi = float(x.max()) + 4.0 * bandwidth
        grid = np.linspace(lo, hi, 256)
    else:
        grid = np.asarray(grid, dtype=float)
    z = (grid[:, None] - x[None, :]) / bandwidth
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * bandwidth
                                               * math.sqrt(2.0 * math.pi))
    return grid, dens


# --------------------------------------------------------- corpus analysis

@dataclass(frozen=True)
class Comparison:
    name: str
    metric: str
    group_by: str
    a: str
    b: str


@dataclass(frozen=True)
class Correlation:
    name: str
    x: str
    y: str
    group_by: str | None = None
    group: str | None = None


@dataclass(frozen=True)
class CorrelationComparison:
    name: str
    first: str                 # names of Correlation entries
    second: str


@dataclass(frozen=True)
class KdeSeries:
    name: str
    metric: str
    group_by: str | None = None


@dataclass(frozen=True)
class AnalysisPlan:
    alpha: float = 0.01
    comparisons: tuple[Comparison, ...] = ()
    correlations: tuple[Correlation, ...] = ()
    correlation_comparisons: tuple[CorrelationComparison, ...] = ()
    kde_series: tuple[KdeSeries, ...] = ()
    min_group_size: int = 5
    bonferroni_m: int | None = None

    @property
    def m(self) -> int:
        return self.bonferroni_m if self.bonferroni_m else max(1, len(self.comparisons))

    @staticmethod
    def from_dict(d: dict) -> "AnalysisPlan":
        return AnalysisPlan(
            alpha=d.get("alpha", 0.01),
            comparisons=tuple(Comparison(**c) for c in d.get("comparisons", [])),
            correlations=tuple(Correlation(**c) for c in d.get("correlations", [])),
            correlation_comparisons=tuple(
                CorrelationComparison(**c)
                for c in d.get("correlation_comparisons", [])),
            kde_series=tuple(KdeSeries(**c) for c in d.get("kde_series", [])),
            min_group_size=d.get("min_group_size", 5),
            bonferroni_m=d.get("bonferroni_m"))

    @staticmethod
    def from_file(path) -> "AnalysisPlan":
        with open(path, "r", encoding="utf-8") as f:
            return AnalysisPlan.from_dict(json.load(f))


def record_field(record: dict, path: str):
    """Dotted-path lookup into a metrics record; missing keys yield None."""
    cur = record
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def _numeric_values(records, path, group_by=None, group=None):
    out = []
    for r in records:
        if group_by is not None and record_field(r, group_by) != group:
            continue
        v = record_field(r, path)
        if v is None or isinstance(v, bool):
            continue
        v = float(v)
        if math.isfinite(v):
            out.append(v)
    return out


def _paired_values(records, x_path, y_path, group_by=None, group=None):
    xs, ys = [], []
    for r in records:
        if group_by is not None and record_field(r, group_by) != group:
            continue
        a = record_field(r, x_path)
        b = record_field(r, y_path)
        if a is None or b is None:
            continue
        a, b = float(a), float(b)
        if math.isfinite(a) and math.isfinite(b):
            xs.append(a)
            ys.append(b)
    return xs, ys


@dataclass
class AnalysisReport:
    n_sessions: int
    alpha_initial: float
    m: int
    alpha_adjusted: float
    comparisons: list = field(default_factory=list)
    correlations: list = field(default_factory=list)
    correlation_comparisons: list = field(default_factory=list)
    kde_series: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"n_sessions": self.n_sessions, "alpha_initial": self.alpha_initial,
             "m": self.m, "alpha_adjusted": self.alpha_adjusted,
             "comparisons": self.comparisons, "correlations": self.correlations,
             "correlation_comparisons": self.correlation_comparisons,
             "kde_series": [{k: v for k, v in s.items()
                             if k not in ("grid", "density")}
                            for s in self.kde_series]}
        return d


def analyze_corpus(records: list[dict], plan: AnalysisPlan) -> AnalysisReport:
    """Run the plan's comparisons, correlations and density series over a
    cleaned corpus of session-metrics records."""
    alpha_adj = bonferroni(plan.alpha, plan.m)
    report = AnalysisReport(n_sessions=len(records), alpha_initial=plan.alpha,
                            m=plan.m, alpha_adjusted=alpha_adj)

    for comp in plan.comparisons:
        va = _numeric_values(records, comp.metric, comp.group_by, comp.a)
        vb = _numeric_values(records, comp.metric, comp.group_by, comp.b)
        row = {"name": comp.name, "metric": comp.metric,
               "a": comp.a, "b": comp.b, "n_a": len(va), "n_b": len(vb),
               "alpha": alpha_adj}
        if len(va) < plan.min_group_size or len(vb) < plan.min_group_size:
            row["skipped"] = (f"group below minimum size {plan.min_group_size}"
                              f" (n_a={len(va)}, n_b={len(vb)})")
        else:
            res = mann_whitney_u(SampleSet(comp.a, tuple(va)),
                                 SampleSet(comp.b, tuple(vb))).judged(alpha_adj)
            row.update(u=res.statistic, p=res.p_value,
                       significant=res.significant)
        report.comparisons.append(row)

    corr_by_name = {}
    for corr in plan.correlations:
        xs, ys = _paired_values(records, corr.x, corr.y,
                                corr.group_by, corr.group)
        row = {"name": corr.name, "x": corr.x, "y": corr.y,
               "group": corr.group, "n": len(xs), "alpha": alpha_adj}
        if len(xs) < max(3, plan.min_group_size):
            row["skipped"] = f"too few pairs (n={len(xs)})"
        else:
            try:
                res = spearman_rho(xs, ys).judged(alpha_adj)
                row.update(rho=res.statistic, p=res.p_value,
                           significant=res.significant)
            except ValidationError as exc:
                row["skipped"] = str(exc)
        report.correlations.append(row)
        corr_by_name[corr.name] = row

    for cc in plan.correlation_comparisons:
        first = corr_by_name.get(cc.first)
        second = corr_by_name.get(cc.second)
        row = {"name": cc.name, "first": cc.first, "second": cc.second,
               "alpha": alpha_adj}
        if (first is None or second is None or "rho" not in first
                or "rho" not in second):
            row["skipped"] = "referenced correlation missing or skipped"
        else:
            try:
                res = fisher_z_compare(first["rho"], first["n"],
                                       second["rho"], second["n"]).judged(alpha_adj)
                row.update(z=res.statistic, p=res.p_value,
                           significant=res.significant)
            except ValidationError as exc:
                row["skipped"] = str(exc)
        report.correlation_comparisons.append(row)

    for series in plan.kde_series:
        groups = [None]
        if series.group_by is not None:
            groups = sorted({record_field(r, series.group_by) for r in records
                             if record_field(r, series.group_by) is not None})
        for g in groups:
            vals = _numeric_values(records, series.metric,
                                   series.group_by, g)
            row = {"name": series.name, "metric": series.metric, "group": g,
                   "n": len(vals)}
            if len(vals) < 2 or len(set(vals)) < 2:
                row["skipped"] = "too few distinct values for a density"
            else:
                bw = silverman_bandwidth(vals)
                grid, dens = kde(vals, bandwidth=bw)
                row.update(bandwidth=bw, grid=grid.tolist(),
                           density=dens.tolist())
            report.kde_series.append(row)

    return report


def render_report(report: AnalysisReport) -> str:
    lines = [
        "corpus analysis report",
        f"sessions: {report.n_sessions}",
        f"alpha_initial={report.alpha_initial} comparisons(m)={report.m} "
        f"alpha_adjusted={report.alpha_adjusted}",
        "",
    ]
    for c in report.comparisons:
        if "skipped" in c:
            lines.append(f"[comparison] {c['name']}: SKIPPED ({c['skipped']})")
        else:
            verdict = "YES" if c["significant"] else "no"
            lines.append(
                f"[comparison] {c['name']}: {c['metric']} {c['a']} (n={c['n_a']}) "
                f"vs {c['b']} (n={c['n_b']}): U={c['u']:.1f} p={c['p']:.3g} "
                f"significant at {c['alpha']:.4g}: {verdict}")
    for c in report.correlations:
        if "skipped" in c:
            lines.append(f"[correlation] {c['name']}: SKIPPED ({c['skipped']})")
        else:
            verdict = "YES" if c["significant"] else "no"
            lines.append(
                f"[correlation] {c['name']}: {c['x']} vs {c['y']} (n={c['n']}): "
                f"rho={c['rho']:.3f} p={c['p']:.3g} "
                f"significant at {c['alpha']:.4g}: {verdict}")
    for c in report.correlation_comparisons:
        if "skipped" in c:
            lines.append(
                f"[correlation-comparison] {c['name']}: SKIPPED ({c['skipped']})")
        else:
            verdict = "YES" if c["significant"] else "no"
            lines.append(
                f"[correlation-comparison] {c['name']}: {c['first']} vs "
                f"{c['second']}: z={c['z']:.3f} p={c['p']:.3g} "
                f"significant at {c['alpha']:.4g}: {verdict}")
    for s in report.kde_series:
        if "skipped" in s:
            lines.append(f"[kde] {s['name']} group={s['group']}: "
                         f"SKIPPED ({s['skipped']})")
        else:
            lines.append(f"[kde] {s['name']} group={s['group']}: n={s['n']} "
                         f"bandwidth={s['bandwidth']:.4g} "
                         f"({len(s['grid'])} grid points)")
    return "\n".join(lines) + "\n"


def write_plot_data(report: AnalysisReport, directory) -> list[Path]:
    """One CSV per KDE series: grid,density rows for external plotting."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for s in report.kde_series:
        if "skipped" in s:
            continue
        stem = s["name"] if s["group"] is None else f"{s['name']}__{s['group']}"
        path = directory / f"{stem}.csv"
        with open(path, "w", encoding="utf-8") as f:
            f.write("grid,density\n")
            for g, d in zip(s["grid"], s["density"]):
                f.write(f"{g!r},{d!r}\n")
        written.append(path)
    return written


def load_corpus(directory, max_fitness: float | None = None):
    """Read per-session metrics records (*.json) and apply the cleaning
    rules: drop records with non-finite numbers or a best fitness above the
    physical bound. Returns (records, n_dropped)."""
    directory = Path(directory)
    records = []
    dropped = 0
    for path in sorted(directory.glob("*.json")):
        with open(path, "r", encoding="utf-8") as f:
            rec = json.load(f)
        if not _record_clean(rec, max_fitness):
            dropped += 1
            continue
        records.append(rec)
    return records, dropped


def _record_clean(rec: dict, max_fitness: float | None) -> bool:
    def finite(v) -> bool:
        if isinstance(v, bool) or v is None:
            return True
        if isinstance(v, (int, float)):
            return math.isfinite(v)
        if isinstance(v, dict):
            return all(finite(x) for x in v.values())
        if isinstance(v, list):
            return all(finite(x) for x in v)
        return True
    if not finite(rec):
        return False
    if max_fitness is not None:
        best = rec.get("best_overall")
        if best is not None and best > max_fitness:
            return False
    return True
