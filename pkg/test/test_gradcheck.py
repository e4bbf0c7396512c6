import numpy as np
from ice_gan.gradcheck import (get_available_suites, gradcheck, reports_table,
                               run_suites)
from ice_gan.losses import l_margin
from ice_gan.tensor import Tensor, sub, tensor_abs, tensor_sum


def test_l1_distance_passes():
    rng = np.random.default_rng(0)
    a = Tensor(rng.standard_normal(4), name="a")
    b = Tensor(a.data + rng.choice([-1.0, 1.0], 4) * rng.uniform(0.2, 1, 4),
               name="b")
    report = gradcheck(lambda a, b: tensor_sum(tensor_abs(sub(a, b))),
                       [a, b])
    assert report.passed
    assert report.num_checked == 8


def test_margin_loss_away_from_kinks_passes():
    lengths = Tensor([[0.5, 0.3, 0.7]], name="lengths")
    report = gradcheck(lambda v: l_margin(v, np.array([0])), [lengths])
    assert report.passed, report


def test_all_suites_pass():
    """Every registered suite agrees with central differences at 1e-4."""
    reports = run_suites()
    assert [r.name for r in reports] == get_available_suites()
    for report in reports:
        assert report.passed, report
    table = reports_table(reports)
    assert list(table.columns) == ["suite", "max_rel_error", "checked",
                                   "passed"]
    assert table["passed"].all()


def test_injected_bug_fails():
    """A wrong backward rule is caught."""
    assert "injected_bug" not in get_available_suites()
    assert "injected_bug" in get_available_suites(inject_bug=True)
    report, = run_suites(["injected_bug"], inject_bug=True)
    assert not report.passed
    assert report.max_rel_error > 0.3


def test_inputs_are_restored():
    x = Tensor([0.3, -0.7, 1.1])
    before = x.data.copy()
    gradcheck(lambda x: tensor_sum(x * x), [x])
    np.testing.assert_array_equal(x.data, before)
    assert x.grad is None
