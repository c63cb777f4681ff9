import numpy as np
import pytest
from scipy import stats as sps

from vawtevo.genome import Genotype
from vawtevo.runlog import LogRow, RunLog
from vawtevo.stats import ArmSummary, StatsError, compare, format_report, rank_test, welch_t

FLAT = Genotype((5,) * 10)
ZVAR = Genotype((5,) * 10, (0,) * 5)


def write_arm(tmp_path, name, finals, g=FLAT):
    paths = []
    for i, f in enumerate(finals):
        p = tmp_path / f"{name}{i}.csv"
        log = RunLog(p, {"seed": str(i)})
        log.append(LogRow(1, 0, 0, g, f / 2, f / 2))
        log.append(LogRow(2, 0, 0, g, f, f))
        log.close()
        paths.append(p)
    return paths


def test_welch_matches_scipy():
    rng = np.random.default_rng(0)
    a, b = rng.normal(0, 1, 12), rng.normal(0.5, 3, 9)
    ours = welch_t(a, b)
    ref = sps.ttest_ind(b, a, equal_var=False)
    assert ours.statistic == pytest.approx(ref.statistic)
    assert ours.pvalue == pytest.approx(ref.pvalue)
    one = welch_t(a, b, "greater")
    assert one.pvalue == pytest.approx(sps.ttest_ind(b, a, equal_var=False, alternative="greater").pvalue)


def test_welch_degrees_of_freedom():
    a, b = [1.0, 2.0, 4.0], [2.0, 3.0, 9.0, 11.0]
    va, vb = np.var(a, ddof=1) / 3, np.var(b, ddof=1) / 4
    df = (va + vb) ** 2 / (va**2 / 2 + vb**2 / 3)
    assert welch_t(a, b).df == pytest.approx(df)


def test_identical_arms():
    a = [1.0, 2.0, 3.0, 5.0]
    assert welch_t(a, a).pvalue == pytest.approx(1.0)
    assert welch_t(a, a).statistic == 0.0
    assert rank_test(a, a).pvalue == pytest.approx(1.0)
    c = [4.0, 4.0]
    assert welch_t(c, c).pvalue == 1.0


def test_shift_detected_in_direction(tmp_path):
    rng = np.random.default_rng(1)
    base = rng.uniform(100, 200, 10)
    arm_a = write_arm(tmp_path, "a", base)
    arm_b = write_arm(tmp_path, "b", base + 150)
    for test in ("rank", "welch"):
        _, _, up = compare(arm_a, arm_b, test, "greater")
        _, _, down = compare(arm_a, arm_b, test, "less")
        assert up.pvalue < 0.01 < down.pvalue


def test_report(tmp_path):
    sa, sb, res = compare(write_arm(tmp_path, "a", [1, 2, 3]), write_arm(tmp_path, "b", [1, 2, 3]))
    assert sa == sb == ArmSummary(3, 2.0, 1.0, 2.0)
    text = format_report(sa, sb, res)
    assert "effect (median B - A): 0" in text
    assert "rank test" in text and "p=1" in text


def test_single_log_arm_rejected(tmp_path):
    with pytest.raises(StatsError):
        compare(write_arm(tmp_path, "a", [1]), write_arm(tmp_path, "b", [1, 2]))


def test_mismatched_schema_rejected(tmp_path):
    with pytest.raises(StatsError, match="mismatched"):
        compare(write_arm(tmp_path, "a", [1, 2]), write_arm(tmp_path, "b", [1, 2], ZVAR))
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(StatsError):
        compare([bad, bad], write_arm(tmp_path, "c", [1, 2]))


def test_unknown_test(tmp_path):
    with pytest.raises(StatsError):
        compare([], [], test="anova")
