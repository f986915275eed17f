"""Across-seed summaries and one-sided Welch comparisons of run sets."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats


class GridMismatch(ValueError):
    """Run sets were not evaluated on the same episode/step grid."""


@dataclass(frozen=True)
class Summary:
    name: str
    n: int
    mean: float
    sd: float
    ci_low: float
    ci_high: float

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0


@dataclass(frozen=True)
class WelchResult:
    a: str
    b: str
    delta: float
    t: float
    df: float
    p_greater: float
    p_two_sided: float


def summarize(name: str, values, level: float = 0.95) -> Summary:
    """Mean with a Student-t interval (``mean +- t_{n-1} * sd / sqrt(n)``)."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n == 0:
        raise ValueError(f"{name}: no values")
    mean = float(x.mean())
    if n == 1:
        return Summary(name, 1, mean, float("nan"), float("nan"), float("nan"))
    sd = float(x.std(ddof=1))
    half = float(stats.t.ppf(0.5 + level / 2.0, n - 1)) * sd / math.sqrt(n)
    return Summary(name, n, mean, sd, mean - half, mean + half)


def welch(a, b, name_a: str = "a", name_b: str = "b") -> WelchResult:
    """Welch's unequal-variance t-test of ``mean(a) > mean(b)`` (and the two-sided p)."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.size < 2 or y.size < 2:
        raise ValueError("each group needs at least two values")
    delta = float(x.mean() - y.mean())
    va, vb = x.var(ddof=1) / x.size, y.var(ddof=1) / y.size
    se2 = va + vb
    if se2 == 0.0:
        if delta == 0.0:
            return WelchResult(name_a, name_b, 0.0, 0.0, float("inf"), 0.5, 1.0)
        t = math.copysign(math.inf, delta)
        return WelchResult(name_a, name_b, delta, t, float("inf"), 0.0 if delta > 0 else 1.0, 0.0)
    t = delta / math.sqrt(se2)
    df = se2**2 / (va**2 / (x.size - 1) + vb**2 / (y.size - 1))
    p_greater = float(stats.t.sf(t, df))
    p_two = float(2.0 * stats.t.sf(abs(t), df))
    return WelchResult(name_a, name_b, delta, float(t), float(df), p_greater, min(1.0, p_two))


def intervals_overlap(s1: Summary, s2: Summary) -> bool:
    return not (s1.ci_high < s2.ci_low or s2.ci_high < s1.ci_low)


# -- run-set loading ----------------------------------------------------------


def read_metrics(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def load_run_set(path: str | Path) -> dict[int, dict[str, np.ndarray]]:
    """All ``seed_*/metrics.csv`` below ``path`` keyed by seed."""
    path = Path(path)
    out = {}
    for d in sorted(path.glob("seed_*")):
        m = d / "metrics.csv"
        if m.exists():
            out[int(d.name.split("_", 1)[1])] = read_metrics(m)
    if not out:
        raise FileNotFoundError(f"no seed_*/metrics.csv under {path}")
    return out


def per_seed_statistic(runs: dict[int, dict[str, np.ndarray]], metric: str, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-seed mean of ``metric`` over the last ``window`` episodes, plus the shared episode grid."""
    grids = {tuple(r["episode"].astype(int)) for r in runs.values()}
    if len(grids) != 1:
        raise GridMismatch("seeds within a run set cover different episodes")
    grid = np.array(next(iter(grids)))
    vals = []
    for seed in sorted(runs):
        col = runs[seed].get(metric)
        if col is None:
            raise KeyError(f"metric {metric!r} not in metrics CSV")
        vals.append(float(np.mean(col[-window:])))
    return np.array(vals), grid


@dataclass
class Comparison:
    summaries: list[Summary]
    tests: list[WelchResult]
    curves_csv: str

    def table(self) -> str:
        lines = [f"{'config':<16}{'n':>4}{'mean':>12}{'sd':>10}{'95% CI':>26}"]
        for s in self.summaries:
            lines.append(f"{s.name:<16}{s.n:>4}{s.mean:>12.3f}{s.sd:>10.3f}   [{s.ci_low:>9.3f}, {s.ci_high:>9.3f}]")
        for t in self.tests:
            lines.append(
                f"{t.a} > {t.b}: delta={t.delta:.3f} t={t.t:.3f} df={t.df:.1f} "
                f"p(one-sided)={t.p_greater:.4g} p(two-sided)={t.p_two_sided:.4g}"
            )
        return "\n".join(lines)


def compare_values(groups: dict[str, np.ndarray], pairs: list[tuple[str, str]] | None = None) -> Comparison:
    """Compare already-reduced per-seed values (first group against the rest by default)."""
    names = list(groups)
    summaries = [summarize(n, groups[n]) for n in names]
    if pairs is None:
        pairs = [(names[0], n) for n in names[1:]]
    tests = [welch(groups[a], groups[b], a, b) for a, b in pairs]
    return Comparison(summaries, tests, "")


def compare_run_sets(
    paths: dict[str, str | Path],
    metric: str = "return",
    window: int = 20,
    pairs: list[tuple[str, str]] | None = None,
) -> Comparison:
    """Summaries and Welch tests over run sets, plus a per-episode mean/CI curve table."""
    if len(paths) < 2:
        raise ValueError("need at least two run sets")
    loaded = {name: load_run_set(p) for name, p in paths.items()}
    groups, grids = {}, {}
    for name, runs in loaded.items():
        groups[name], grids[name] = per_seed_statistic(runs, metric, window)
    ref = next(iter(grids.values()))
    for name, g in grids.items():
        if len(g) != len(ref) or np.any(g != ref):
            raise GridMismatch(f"run set {name} uses a different evaluation grid")
    comp = compare_values(groups, pairs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config", "episode", "mean", "ci_low", "ci_high", "n"])
    for name, runs in loaded.items():
        mat = np.stack([runs[s][metric] for s in sorted(runs)])
        for j, ep in enumerate(ref):
            s = summarize(name, mat[:, j])
            w.writerow([name, int(ep), repr(s.mean), repr(s.ci_low), repr(s.ci_high), s.n])
    comp.curves_csv = buf.getvalue()
    return comp
