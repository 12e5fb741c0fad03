"""Statistical comparison of exercise conditions.

Implements the small-sample tests needed to compare two recording
conditions per exercise, side, and limb status:

* Shapiro-Wilk normality test (Royston's 1995 approximation, the
  standard published algorithm);
* paired two-sided t-test;
* Wilcoxon signed-rank test, exact for n <= 12 (full enumeration of the
  2^n sign assignments via a counting recurrence) and normal
  approximation with tie and continuity corrections above that.

``compare_conditions`` applies the routing rule: differences that pass
Shapiro-Wilk at alpha = 0.05 get the paired t-test, everything else the
signed-rank test.  All tests are two-sided, alpha = 0.05, uncorrected.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri, stdtr
from scipy.stats import rankdata

from .errors import StatsError
from .reps import ExerciseSummary

ALPHA = 0.05

EXACT_WILCOXON_MAX_N = 12


@dataclass(frozen=True)
class TestResult:
    test: str  # "shapiro_wilk" | "paired_t" | "wilcoxon"
    statistic: float
    p: float
    df: float | None = None
    exact: bool = False

    @property
    def significant(self) -> bool:
        return self.p < ALPHA


@dataclass(frozen=True)
class Descriptives:
    n: int
    mean: float
    sd: float


def describe(values: Iterable[float]) -> Descriptives:
    """Mean and sample (n-1) standard deviation; SD is 0 when n = 1.

    Raises
    ------
    StatsError
        Empty input.
    """
    x = np.asarray(list(values), dtype=float)
    if len(x) == 0:
        raise StatsError("empty sample")
    sd = float(x.std(ddof=1)) if len(x) > 1 else 0.0
    return Descriptives(len(x), float(x.mean()), sd)


# ---------------------------------------------------------------------------
# Shapiro-Wilk
# ---------------------------------------------------------------------------

# Polynomial corrections for the two extreme-order weights, evaluated in
# rsn = n**-0.5 (highest power first), and the p-value transform
# coefficients: mu and log-sigma polynomials in n for 4 <= n <= 11, in
# log(n) for n >= 12.
_C1 = (-2.706056, 4.434685, -2.071190, -0.147981, 0.221157, 0.0)
_C2 = (-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0)
_MU_SMALL = (-0.0006714, 0.025054, -0.39978, 0.5440)
_SIG_SMALL = (-0.0020322, 0.062767, -0.77857, 1.3822)
_MU_BIG = (0.0038915, -0.083751, -0.31082, -1.5861)
_SIG_BIG = (0.0030302, -0.082676, -0.4803)


def _polyval(coeffs: Sequence[float], x: float) -> float:
    acc = 0.0
    for c in coeffs:
        acc = acc * x + c
    return acc


def _sw_weights(n: int) -> np.ndarray:
    """Approximately optimal weights a_1..a_n for the W statistic."""
    m = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    ssq = float(m @ m)
    if n == 3:
        a1 = math.sqrt(0.5)
        return np.array([-a1, 0.0, a1])
    rsn = n ** -0.5
    c = m / math.sqrt(ssq)
    a_n = c[-1] + _polyval(_C1, rsn)
    if n > 5:
        a_n1 = c[-2] + _polyval(_C2, rsn)
        phi = (ssq - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (
            1.0 - 2.0 * a_n**2 - 2.0 * a_n1**2
        )
    else:
        phi = (ssq - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n**2)
    a = m / math.sqrt(phi)
    a[-1] = a_n
    a[0] = -a_n
    if n > 5:
        a[-2] = a_n1
        a[1] = -a_n1
    return a


def shapiro_wilk(values: Iterable[float]) -> TestResult:
    """Shapiro-Wilk test of normality for 3 <= n <= 5000.

    W is the squared correlation between the sorted sample and the
    approximately optimal normal-order-statistic weights; p comes from
    Royston's normalizing transforms of W per sample-size band.

    Raises
    ------
    StatsError
        n < 3 ("sample too small"), n > 5000, or all values identical
        ("zero variance").
    """
    x = np.sort(np.asarray(list(values), dtype=float))
    n = len(x)
    if n < 3:
        raise StatsError("sample too small: Shapiro-Wilk needs n >= 3")
    if n > 5000:
        raise StatsError("sample too large: Shapiro-Wilk valid up to n = 5000")
    sse = float(((x - x.mean()) ** 2).sum())
    if sse <= 0.0:
        raise StatsError("zero variance: Shapiro-Wilk undefined")
    a = _sw_weights(n)
    w = min(float((a @ x) ** 2 / sse), 1.0)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return TestResult("shapiro_wilk", w, min(max(p, 0.0), 1.0), exact=True)
    if n <= 11:
        gamma = -2.273 + 0.459 * n
        arg = gamma - math.log(1.0 - w) if w < 1.0 else math.inf
        if arg <= 0.0:
            return TestResult("shapiro_wilk", w, 0.0)
        y = -math.log(arg)
        mu = _polyval(_MU_SMALL, n)
        sigma = math.exp(_polyval(_SIG_SMALL, n))
    else:
        y = math.log(1.0 - w) if w < 1.0 else -math.inf
        u = math.log(n)
        mu = _polyval(_MU_BIG, u)
        sigma = math.exp(_polyval(_SIG_BIG, u))
    z = (y - mu) / sigma
    return TestResult("shapiro_wilk", w, float(1.0 - ndtr(z)))


# ---------------------------------------------------------------------------
# paired tests
# ---------------------------------------------------------------------------


def paired_t(a: Iterable[float], b: Iterable[float]) -> TestResult:
    """Two-sided paired t-test on matched samples.

    Raises
    ------
    StatsError
        Mismatched lengths, n < 2, or zero-variance differences
        ("degenerate pairs").
    """
    xa = np.asarray(list(a), dtype=float)
    xb = np.asarray(list(b), dtype=float)
    if len(xa) != len(xb):
        raise StatsError(f"unmatched samples: {len(xa)} vs {len(xb)}")
    n = len(xa)
    if n < 2:
        raise StatsError("sample too small: paired t needs n >= 2")
    d = xa - xb
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise StatsError("degenerate pairs: zero-variance differences")
    t = float(d.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p = float(2.0 * stdtr(df, -abs(t)))
    return TestResult("paired_t", t, p, df=float(df), exact=True)


def _exact_signed_rank_p(ranks: np.ndarray, w_min: float) -> float:
    """Two-sided exact p: P(W+ <= w) + P(W+ >= S - w) over all sign flips.

    Works on doubled ranks so tied (half-integer) average ranks stay
    integral; counts are exact integers for n <= 12.
    """
    r2 = np.rint(2.0 * ranks).astype(int)
    s2 = int(r2.sum())
    counts = [0] * (s2 + 1)
    counts[0] = 1
    for r in r2:
        nxt = counts[:]
        for total in range(s2 - r + 1):
            if counts[total]:
                nxt[total + r] += counts[total]
        counts = nxt
    w2 = int(round(2.0 * w_min))
    lo = sum(counts[: w2 + 1])
    hi = sum(counts[s2 - w2 :])
    return min(1.0, (lo + hi) / float(2 ** len(r2)))


def wilcoxon_signed_rank(
    a: Iterable[float], b: Iterable[float], method: str = "auto"
) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on matched samples.

    Zero differences are dropped; ties get average ranks.  The statistic
    is min(W+, W-).  ``method`` is ``"exact"`` (full enumeration, only
    for n <= 12 after dropping zeros), ``"approx"`` (normal approximation
    with tie and continuity corrections), or ``"auto"`` (exact when small).

    Raises
    ------
    StatsError
        Mismatched lengths, all differences zero ("no nonzero pairs"),
        or exact requested beyond n = 12.
    """
    xa = np.asarray(list(a), dtype=float)
    xb = np.asarray(list(b), dtype=float)
    if len(xa) != len(xb):
        raise StatsError(f"unmatched samples: {len(xa)} vs {len(xb)}")
    d = xa - xb
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        raise StatsError("no nonzero pairs: all differences zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if method == "auto":
        method = "exact" if n <= EXACT_WILCOXON_MAX_N else "approx"
    if method == "exact":
        if n > EXACT_WILCOXON_MAX_N:
            raise StatsError(f"exact enumeration limited to n <= {EXACT_WILCOXON_MAX_N}")
        return TestResult("wilcoxon", w, _exact_signed_rank_p(ranks, w), exact=True)
    if method != "approx":
        raise ValueError(f"unknown method: {method}")

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var -= float((tie_counts**3 - tie_counts).sum()) / 48.0
    z = (w - mean + 0.5) / math.sqrt(var)
    p = min(1.0, float(2.0 * ndtr(z)))
    return TestResult("wilcoxon", w, p, exact=False)


# ---------------------------------------------------------------------------
# condition comparison
# ---------------------------------------------------------------------------

_METRICS = (("magnitude_deg", "peak_mean_deg"), ("velocity_dps", "vel_mean_dps"))


@dataclass(frozen=True)
class ComparisonRow:
    exercise: str
    side: str
    limb_status: str
    metric: str
    n: int
    mean_a: float
    sd_a: float
    mean_b: float
    sd_b: float
    test: str
    statistic: float | None
    p: float | None
    significant: bool
    note: str = ""


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    alpha: float = ALPHA

    def render_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            [
                "exercise", "side", "limb_status", "metric", "n",
                "mean_a", "sd_a", "mean_b", "sd_b",
                "test", "statistic", "p", "significant", "note",
            ]
        )
        for r in self.rows:
            writer.writerow(
                [
                    r.exercise, r.side, r.limb_status, r.metric, r.n,
                    f"{r.mean_a:.4f}", f"{r.sd_a:.4f}",
                    f"{r.mean_b:.4f}", f"{r.sd_b:.4f}",
                    r.test,
                    "" if r.statistic is None else f"{r.statistic:.4f}",
                    "" if r.p is None else f"{r.p:.6f}",
                    "yes" if r.significant else "no",
                    r.note,
                ]
            )
        return buf.getvalue()

    def render_text(self) -> str:
        header = (
            f"{'exercise':<16}{'side':<7}{'limb':<10}{'metric':<14}"
            f"{'n':>3} {'A mean±sd':>16} {'B mean±sd':>16} {'test':<11}{'p':>7}  sig"
        )
        lines = [header, "-" * len(header)]
        for r in self.rows:
            if r.p is None:
                p_txt = "--"
            elif r.p < 0.001:
                p_txt = "<.001"
            else:
                p_txt = f"{r.p:.3f}"
            lines.append(
                f"{r.exercise:<16}{r.side:<7}{r.limb_status:<10}{r.metric:<14}"
                f"{r.n:>3} "
                f"{r.mean_a:>8.2f}±{r.sd_a:<7.2f} "
                f"{r.mean_b:>8.2f}±{r.sd_b:<7.2f} "
                f"{r.test:<11}{p_txt:>7}  {'*' if r.significant else ''}"
            )
        lines.append("")
        lines.append(f"two-sided, alpha={self.alpha}, uncorrected; * = p < {self.alpha}")
        return "\n".join(lines)


def _group_key(s: ExerciseSummary) -> tuple[str, str, str]:
    return (
        s.exercise.value,
        s.side.value,
        s.limb_status.value if s.limb_status else "",
    )


def compare_conditions(
    condition_a: Iterable[ExerciseSummary],
    condition_b: Iterable[ExerciseSummary],
    alpha: float = ALPHA,
) -> ComparisonReport:
    """Paired comparison of two conditions, grouped by exercise/side/limb.

    Summaries pair by position within each group, so both conditions must
    list each group's subjects in the same order.  For each group and
    metric (movement magnitude, movement velocity): identical samples
    report "no difference" with no test; otherwise the differences are
    Shapiro-Wilk-gated (p >= alpha -> paired t-test, p < alpha ->
    signed-rank).  Groups where normality cannot be tested (n < 3, or
    zero-variance differences) fall back to the signed-rank test.

    Raises
    ------
    StatsError
        Group sets or group sizes differ between conditions
        ("unmatched samples").
    """
    groups_a: dict[tuple[str, str, str], list[ExerciseSummary]] = {}
    groups_b: dict[tuple[str, str, str], list[ExerciseSummary]] = {}
    for s in condition_a:
        groups_a.setdefault(_group_key(s), []).append(s)
    for s in condition_b:
        groups_b.setdefault(_group_key(s), []).append(s)
    if set(groups_a) != set(groups_b):
        missing = sorted(set(groups_a) ^ set(groups_b))
        raise StatsError(
            f"unmatched samples: groups {missing} present in one condition only"
        )

    rows: list[ComparisonRow] = []
    for key in sorted(groups_a):
        list_a, list_b = groups_a[key], groups_b[key]
        if len(list_a) != len(list_b):
            raise StatsError(
                f"unmatched samples in group {key}: {len(list_a)} vs {len(list_b)}"
            )
        for metric_name, attr in _METRICS:
            va = np.array([getattr(s, attr) for s in list_a])
            vb = np.array([getattr(s, attr) for s in list_b])
            d = va - vb
            n = len(d)
            if np.all(d == 0.0):
                test_name: str = "none"
                stat: float | None = None
                p: float | None = None
                significant = False
                note = "no difference"
            else:
                if n >= 3 and float(d.std(ddof=1)) > 0.0:
                    sw = shapiro_wilk(d)
                    res = paired_t(va, vb) if sw.p >= alpha else wilcoxon_signed_rank(va, vb)
                    note = f"normality p={sw.p:.3f}"
                else:
                    res = wilcoxon_signed_rank(va, vb)
                    note = "normality untestable; rank test used"
                test_name, stat, p = res.test, res.statistic, res.p
                significant = p < alpha
            rows.append(
                ComparisonRow(
                    exercise=key[0],
                    side=key[1],
                    limb_status=key[2],
                    metric=metric_name,
                    n=n,
                    mean_a=float(va.mean()),
                    sd_a=float(va.std(ddof=1)) if n > 1 else 0.0,
                    mean_b=float(vb.mean()),
                    sd_b=float(vb.std(ddof=1)) if n > 1 else 0.0,
                    test=test_name,
                    statistic=stat,
                    p=p,
                    significant=significant,
                    note=note,
                )
            )
    return ComparisonReport(tuple(rows), alpha)
