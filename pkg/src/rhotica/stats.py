"""Significance testing for listening tests and F3-slope comparisons.

The t distribution is evaluated in-repo through the regularized incomplete
beta function (Lentz continued fraction); no external stats package is used.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .corpus_io import MUSHRA, PREFERENCE, ScoreTable
from .errors import InsufficientDataError, RhoticaError, ValidationError
from .formants import SlopeStat

# ---------------------------------------------------------------------------
# t distribution

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10000


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, x_complement: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``x_complement`` may carry ``1 - x`` computed without cancellation.
    """
    y = 1.0 - x if x_complement is None else x_complement
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(y))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, y) / b


def t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    if t == 0:
        return 1.0
    t2 = t * t
    denom = df + t2
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / denom, t2 / denom)))


def t_quantile(q: float, df: float) -> float:
    """Inverse CDF of Student's t (bisection on the two-sided tail)."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    tail = 2.0 * min(q, 1.0 - q)
    lo, hi = 0.0, 1.0
    while t_two_sided_p(hi, df) > tail:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_two_sided_p(mid, df) > tail:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    t = 0.5 * (lo + hi)
    return t if q > 0.5 else -t


# ---------------------------------------------------------------------------
# t-tests


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    t: float
    degrees_of_freedom: float
    p: float
    rejected: bool
    alpha: float
    paired: bool = True
    degenerate: bool = False  # zero variance with a non-zero mean difference

    def to_dict(self) -> dict:
        # strict JSON has no infinity; the degenerate flag carries the case
        t = self.t if math.isfinite(self.t) else None
        return {"t": t, "df": self.degrees_of_freedom, "p": self.p, "rejected": self.rejected,
                "alpha": self.alpha, "paired": self.paired, "degenerate": self.degenerate}


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _var(xs: Sequence[float], mean: float) -> float:
    return math.fsum((x - mean) ** 2 for x in xs) / (len(xs) - 1)


def t_test(xs: Sequence[float], ys: Sequence[float], paired: bool = True, alpha: float = 0.05) -> TestResult:
    """Two-sided paired or Welch t-test of ``xs`` against ``ys``.

    Zero variance: t = 0, p = 1 when the mean difference is zero too;
    otherwise t = +/-inf, p = 0 and the result is flagged ``degenerate``.
    """
    xs, ys = [float(x) for x in xs], [float(y) for y in ys]
    if paired:
        if len(xs) != len(ys):
            raise ValidationError(f"paired t-test needs equal sizes, got {len(xs)} and {len(ys)}")
        if len(xs) < 2:
            raise InsufficientDataError("paired t-test needs at least 2 pairs")
        diffs = [x - y for x, y in zip(xs, ys)]
        diff = _mean(diffs)
        se2 = _var(diffs, diff) / len(diffs)
        df = float(len(diffs) - 1)
    else:
        if len(xs) < 2 or len(ys) < 2:
            raise InsufficientDataError("Welch t-test needs at least 2 values per group")
        mx, my = _mean(xs), _mean(ys)
        vx, vy = _var(xs, mx) / len(xs), _var(ys, my) / len(ys)
        diff = mx - my
        se2 = vx + vy
        if se2 > 0:
            # Welch-Satterthwaite is scale-free; normalise so the squares cannot underflow
            a, b = vx / max(vx, vy), vy / max(vx, vy)
            df = (a + b) ** 2 / (a * a / (len(xs) - 1) + b * b / (len(ys) - 1))
        else:
            df = float(len(xs) + len(ys) - 2)
    if se2 == 0:
        if diff == 0:
            return TestResult(0.0, df, 1.0, False, alpha, paired)
        return TestResult(math.copysign(math.inf, diff), df, 0.0, True, alpha, paired, degenerate=True)
    t = diff / math.sqrt(se2)
    p = t_two_sided_p(t, df)
    return TestResult(t, df, p, p <= alpha, alpha, paired)


# ---------------------------------------------------------------------------
# Holm-Bonferroni


@dataclass(frozen=True)
class HolmResult:
    adjusted_p: float
    rejected: bool


def holm_bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[HolmResult]:
    """Holm's step-down correction; results come back in input order."""
    if not 0.0 < alpha < 1.0:
        raise RhoticaError("alpha must lie in (0, 1)")
    ps = [float(p) for p in p_values]
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise RhoticaError(f"p-value {p!r} outside [0, 1]")
    m = len(ps)
    order = sorted(range(m), key=lambda i: ps[i])
    adjusted = [0.0] * m
    rejected = [False] * m
    running = 0.0
    still_rejecting = True
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * ps[i]))
        adjusted[i] = running
        if still_rejecting and ps[i] <= alpha / (m - rank):
            rejected[i] = True
        else:
            still_rejecting = False
    return [HolmResult(a, r) for a, r in zip(adjusted, rejected)]


# ---------------------------------------------------------------------------
# MUSHRA


@dataclass(frozen=True)
class SystemStats:
    system: str
    mean: float
    n: int
    ci95: tuple[float, float] | None


@dataclass(frozen=True)
class Comparison:
    system_a: str
    system_b: str
    result: TestResult
    adjusted_p: float
    rejected: bool

    def to_dict(self) -> dict:
        return {"system_a": self.system_a, "system_b": self.system_b, **self.result.to_dict(),
                "adjusted_p": self.adjusted_p, "rejected_after_correction": self.rejected}


@dataclass(frozen=True)
class SystemSummary:
    systems: dict[str, SystemStats]
    best_group: frozenset[str]
    top: str
    comparisons: tuple[Comparison, ...]
    alpha: float
    family: str
    unit: str

    def rows(self) -> list[dict]:
        """One record per system: mean, CI, best-group flag, adjusted p vs the top system."""
        vs_top = {}
        for c in self.comparisons:
            if self.top in (c.system_a, c.system_b):
                other = c.system_b if c.system_a == self.top else c.system_a
                vs_top[other] = c.adjusted_p
        out = []
        for name in sorted(self.systems, key=lambda s: (-self.systems[s].mean, s)):
            st = self.systems[name]
            lo, hi = st.ci95 if st.ci95 else (None, None)
            out.append({"system": name, "mean": st.mean, "n": st.n, "ci_lo": lo, "ci_hi": hi,
                        "best_group": name in self.best_group, "adjusted_p": vs_top.get(name)})
        return out

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "family": self.family, "unit": self.unit, "top": self.top,
                "best_group": sorted(self.best_group), "systems": self.rows(),
                "comparisons": [c.to_dict() for c in self.comparisons]}


def _ci95(values: Sequence[float], mean: float) -> tuple[float, float] | None:
    n = len(values)
    if n < 2:
        return None
    half = t_quantile(0.975, n - 1) * math.sqrt(_var(values, mean) / n)
    return (mean - half, mean + half)


def _pairing_units(table: ScoreTable, unit: str) -> dict[str, dict[tuple, float]]:
    per_system: dict[str, dict[tuple, list[float]]] = {}
    for r in table.rows:
        key = (r.listener, r.testcase) if unit == "rating" else (r.testcase,)
        per_system.setdefault(r.system, {}).setdefault(key, []).append(float(r.score))
    return {s: {k: _mean(v) for k, v in units.items()} for s, units in per_system.items()}


def mushra_summary(scores: ScoreTable, alpha: float = 0.05, family: str = "top",
                   unit: str = "rating") -> SystemSummary:
    """Per-system means with Holm-corrected paired t-tests.

    ``family="top"`` compares the highest-mean system with each other one;
    ``"all"`` tests every pair (the correction then spans all of them).
    ``unit="rating"`` pairs individual (listener, testcase) ratings;
    ``"testcase"`` pairs per-testcase means over listeners.
    ``best_group`` holds the top system plus every system whose comparison
    with it is not rejected.
    """
    if scores.kind != MUSHRA:
        raise RhoticaError(f"expected a MUSHRA table, got {scores.kind!r}")
    if not scores.rows:
        raise RhoticaError("empty score table")
    if family not in ("top", "all"):
        raise RhoticaError(f"family must be 'top' or 'all', got {family!r}")
    if unit not in ("rating", "testcase"):
        raise RhoticaError(f"unit must be 'rating' or 'testcase', got {unit!r}")

    by_system: dict[str, list[float]] = {}
    for r in scores.rows:
        by_system.setdefault(r.system, []).append(float(r.score))
    stats = {}
    for name in sorted(by_system):
        vals = by_system[name]
        mean = _mean(vals)
        stats[name] = SystemStats(name, mean, len(vals), _ci95(vals, mean))
    top = min(stats, key=lambda s: (-stats[s].mean, s))

    units = _pairing_units(scores, unit)
    others = [s for s in stats if s != top]
    pairs = [(top, s) for s in others] if family == "top" else list(itertools.combinations(sorted(stats), 2))
    results = []
    for a, b in pairs:
        ua, ub = units[a], units[b]
        if ua.keys() != ub.keys():
            missing = len(ua.keys() ^ ub.keys())
            raise ValidationError(f"systems {a!r} and {b!r} are not rated on the same "
                                  f"{'(listener, testcase) pairs' if unit == 'rating' else 'testcases'} "
                                  f"({missing} unmatched)")
        keys = sorted(ua)
        results.append(t_test([ua[k] for k in keys], [ub[k] for k in keys], paired=True, alpha=alpha))
    holm = holm_bonferroni([r.p for r in results], alpha) if results else []
    comparisons = tuple(Comparison(a, b, r, h.adjusted_p, h.rejected)
                        for (a, b), r, h in zip(pairs, results, holm))
    best = {top}
    for c in comparisons:
        if top in (c.system_a, c.system_b) and not c.rejected:
            best.add(c.system_b if c.system_a == top else c.system_a)
    return SystemSummary(stats, frozenset(best), top, comparisons, alpha, family, unit)


# ---------------------------------------------------------------------------
# Preference test


@dataclass(frozen=True)
class PreferenceSummary:
    n_a: int
    n_b: int
    n_tie: int
    share_a: float
    share_b: float
    share_tie: float
    sign_test_p: float | None
    system: str = ""

    def to_dict(self) -> dict:
        return {"system": self.system, "n_a": self.n_a, "n_b": self.n_b, "n_tie": self.n_tie,
                "share_a": self.share_a, "share_b": self.share_b, "share_tie": self.share_tie,
                "sign_test_p": self.sign_test_p}


def sign_test(n_a: int, n_b: int) -> float | None:
    """Exact two-sided binomial sign test with success probability 1/2.

    ``None`` when there are no informative (non-tie) trials.
    """
    n = n_a + n_b
    if n == 0:
        return None
    k = min(n_a, n_b)
    tail = sum(math.comb(n, i) for i in range(k + 1))
    return float(min(Fraction(1), Fraction(2 * tail, 2 ** n)))


def preference_counts(n_a: int, n_b: int, n_tie: int, system: str = "") -> PreferenceSummary:
    n = n_a + n_b + n_tie
    if n == 0:
        raise RhoticaError("no preference responses")
    return PreferenceSummary(n_a, n_b, n_tie, n_a / n, n_b / n, n_tie / n, sign_test(n_a, n_b), system)


def preference_summary(scores: ScoreTable, system: str | None = None) -> PreferenceSummary:
    """Response shares and sign test for an A/B/tie preference table.

    The ``system`` column labels the compared pair; when the table holds more
    than one label, ``system`` selects which to summarise.
    """
    if scores.kind != PREFERENCE:
        raise RhoticaError(f"expected a preference table, got {scores.kind!r}")
    rows = scores.rows
    labels = sorted({r.system for r in rows})
    if system is None:
        if len(labels) > 1:
            raise RhoticaError(f"table holds several comparisons {labels}; choose one")
    else:
        rows = [r for r in rows if r.system == system]
    if not rows:
        raise RhoticaError("empty preference table")
    counts = {"A": 0, "B": 0, "tie": 0}
    for r in rows:
        counts[r.score] += 1
    return preference_counts(counts["A"], counts["B"], counts["tie"], system or labels[0])


# ---------------------------------------------------------------------------
# F3 slope comparison


@dataclass(frozen=True)
class SlopeComparison:
    comparisons: tuple[Comparison, ...]
    mean_ols_slope: dict[str, float]
    mean_net_change: dict[str, float]
    n_contexts: dict[str, int]
    alpha: float = 0.05

    def to_dict(self) -> dict:
        return {"alpha": self.alpha,
                "systems": [{"system": s, "n_contexts": self.n_contexts[s],
                             "mean_ols_slope": self.mean_ols_slope[s],
                             "mean_net_change": self.mean_net_change[s]} for s in self.n_contexts],
                "comparisons": [c.to_dict() for c in self.comparisons]}


def slope_comparison(per_system: Mapping[str, Sequence[SlopeStat]], alpha: float = 0.05) -> SlopeComparison:
    """Pairwise t-tests on OLS F3 slopes between systems, Holm-corrected.

    A pair is tested paired when both systems list the same contexts in the
    same order (by ``context_id``), with Welch's test otherwise.
    """
    if len(per_system) < 2:
        raise RhoticaError("slope comparison needs at least two systems")
    for name, stats in per_system.items():
        if len(stats) < 2:
            raise InsufficientDataError(f"system {name!r} has {len(stats)} context(s); need at least 2")
    names = list(per_system)
    pairs = list(itertools.combinations(names, 2))
    results = []
    for a, b in pairs:
        sa, sb = per_system[a], per_system[b]
        ids_a = [s.context_id for s in sa]
        paired = None not in ids_a and ids_a == [s.context_id for s in sb]
        results.append(t_test([s.ols_slope for s in sa], [s.ols_slope for s in sb], paired=paired, alpha=alpha))
    holm = holm_bonferroni([r.p for r in results], alpha)
    comparisons = tuple(Comparison(a, b, r, h.adjusted_p, h.rejected) for (a, b), r, h in zip(pairs, results, holm))
    return SlopeComparison(
        comparisons,
        {s: _mean([x.ols_slope for x in per_system[s]]) for s in names},
        {s: _mean([x.net_change for x in per_system[s]]) for s in names},
        {s: len(per_system[s]) for s in names},
        alpha,
    )
