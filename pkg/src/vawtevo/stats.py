"""Two-arm comparison of final best fitness across run logs.

Each log contributes one number, its last ``best_rpm``.  The rank test is
Mann-Whitney U (scipy); the Welch t-test is computed here with the
Welch-Satterthwaite degrees of freedom and a Student t tail from scipy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .runlog import LogFormatError, final_best, read_log

ALTERNATIVES = ("two-sided", "greater", "less")


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class ArmSummary:
    n: int
    mean: float
    sd: float
    median: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "ArmSummary":
        v = np.asarray(values, dtype=float)
        return cls(len(v), float(v.mean()), float(v.std(ddof=1)), float(np.median(v)))


@dataclass(frozen=True)
class TestResult:
    test: str
    statistic: float
    pvalue: float
    alternative: str
    df: float | None = None


def welch_t(a: Sequence[float], b: Sequence[float], alternative: str = "two-sided") -> TestResult:
    """Unequal-variance t-test of mean(b) - mean(a).

    ``greater`` tests whether arm b has the larger mean.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise StatsError("Welch's t-test needs at least 2 values per arm")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    diff = b.mean() - a.mean()
    se2 = va + vb
    if se2 == 0:
        # both arms constant: no spread to test against
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        df = float(len(a) + len(b) - 2)
    else:
        t = diff / math.sqrt(se2)
        df = se2**2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    if alternative == "greater":
        p = sps.t.sf(t, df)
    elif alternative == "less":
        p = sps.t.cdf(t, df)
    else:
        p = 2 * sps.t.sf(abs(t), df)
    return TestResult("welch", float(t), float(min(1.0, p)), alternative, float(df))


def rank_test(a: Sequence[float], b: Sequence[float], alternative: str = "two-sided") -> TestResult:
    """Mann-Whitney U for arm b against arm a; U is arm b's statistic."""
    if len(a) < 2 or len(b) < 2:
        raise StatsError("the rank test needs at least 2 values per arm")
    res = sps.mannwhitneyu(b, a, alternative=alternative)
    return TestResult("rank", float(res.statistic), float(res.pvalue), alternative)


TESTS = {"rank": rank_test, "welch": welch_t}


def load_arm(paths: Sequence[str | Path]) -> tuple[list[float], tuple]:
    """Final best of each log, plus the arm's schema signature."""
    if len(paths) < 2:
        raise StatsError(f"each arm needs at least 2 logs, got {len(paths)}")
    values, schema = [], None
    for p in paths:
        try:
            _, rows = read_log(p)
            values.append(final_best(rows))
        except (OSError, LogFormatError) as exc:
            raise StatsError(f"{p}: {exc}") from None
        sig = _schema(rows)
        if schema is None:
            schema = sig
        elif sig != schema:
            raise StatsError(f"{p}: log schema {sig} differs from {schema}")
    return values, schema


def _schema(rows) -> tuple:
    species = tuple(sorted({r.species for r in rows}))
    modes = {r.genotype.mode.value for r in rows}
    if len(modes) != 1:
        raise StatsError(f"log mixes genotype modes {sorted(modes)}")
    return (modes.pop(), species)


def compare(arm_a: Sequence[str | Path], arm_b: Sequence[str | Path], test: str = "rank", alternative: str = "two-sided"):
    if test not in TESTS:
        raise StatsError(f"unknown test {test!r}; choose from {sorted(TESTS)}")
    if alternative not in ALTERNATIVES:
        raise StatsError(f"unknown alternative {alternative!r}")
    a, schema_a = load_arm(arm_a)
    b, schema_b = load_arm(arm_b)
    if schema_a != schema_b:
        raise StatsError(f"arms have mismatched schemas: {schema_a} vs {schema_b}")
    return ArmSummary.of(a), ArmSummary.of(b), TESTS[test](a, b, alternative)


def format_report(sa: ArmSummary, sb: ArmSummary, res: TestResult) -> str:
    lines = ["arm,n,mean,sd,median"]
    for name, s in (("A", sa), ("B", sb)):
        lines.append(f"{name},{s.n},{s.mean:.6g},{s.sd:.6g},{s.median:.6g}")
    lines.append(f"effect (median B - A): {sb.median - sa.median:.6g}")
    lines.append(f"effect (mean B - A): {sb.mean - sa.mean:.6g}")
    df = f", df={res.df:.4g}" if res.df is not None else ""
    lines.append(f"{res.test} test ({res.alternative}): statistic={res.statistic:.6g}{df}, p={res.pvalue:.6g}")
    return "\n".join(lines)
