"""Acceptance gate: every shipped claim as a machine-checked assertion.

Each test runs one criterion from nuisancegrad.acceptance at its pinned
seed and tolerance and prints the PASS/FAIL line (visible with -s or on
failure). The heavy studies dominate the runtime of the whole suite;
expect a few minutes in total.
"""

from nuisancegrad import acceptance


def _check(result):
    print(result.line())
    assert result.passed, f"{result.title}: {result.details}"


def test_criterion_01_gradient_correctness():
    _check(acceptance.criterion_1())


def test_criterion_02_unbiased_oracle():
    _check(acceptance.criterion_2())


def test_criterion_03_orthogonality_certificates():
    _check(acceptance.criterion_3())


def test_criterion_04_nuisance_sensitive_slope():
    _check(acceptance.criterion_4())


def test_criterion_05_nuisance_insensitive_slope():
    _check(acceptance.criterion_5())


def test_criterion_06_orthogonalized_interpolation():
    _check(acceptance.criterion_6())


def test_criterion_07_variance_floor():
    _check(acceptance.criterion_7())


def test_criterion_08_averaged_rate():
    _check(acceptance.criterion_8())


def test_criterion_09_interleaving_benefit():
    _check(acceptance.criterion_9())


def test_criterion_10_batch_regimes():
    _check(acceptance.criterion_10())


def test_criterion_11_tabular_pipeline(tmp_path):
    _check(acceptance.criterion_11(work_dir=str(tmp_path)))


def test_criterion_12_bitwise_reproducibility(tmp_path):
    _check(acceptance.criterion_12(work_dir=str(tmp_path)))
