import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn import metrics as skm

from mincutpool.errors import ContractError, ShapeError
from mincutpool.metrics import ContingencyTable, accuracy, completeness_score, mse, nmi
from mincutpool.spectral import HardAssignment

labelings = st.lists(st.integers(0, 4), min_size=1, max_size=40)


def paired(draw_len=st.integers(1, 40)):
    return draw_len.flatmap(lambda n: st.tuples(
        st.lists(st.integers(0, 4), min_size=n, max_size=n),
        st.lists(st.integers(0, 4), min_size=n, max_size=n)))


def test_nmi_identical_is_one():
    assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0)


def test_nmi_constant_prediction_is_zero():
    assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0


def test_nmi_both_constant_is_one():
    assert nmi([3, 3, 3], [0, 0, 0]) == 1.0


def test_nmi_relabeled_prediction_is_one():
    assert nmi([2, 2, 0, 0, 1], [0, 0, 1, 1, 2]) == pytest.approx(1.0)


def test_nmi_accepts_hard_assignment():
    assert nmi(HardAssignment([1, 1, 0], 2), [0, 0, 1]) == pytest.approx(1.0)


def test_completeness_examples():
    assert completeness_score([0, 1, 2], [0, 1, 2]) == pytest.approx(1.0)
    assert completeness_score([0, 0, 0, 0], [0, 1, 0, 1]) == 1.0


def test_completeness_singletons_match_direct_entropy():
    n, classes = 12, 3
    truth = np.repeat(np.arange(classes), n // classes)
    pred = np.arange(n)
    expected = 1 - np.log(n / classes) / np.log(n)
    value = completeness_score(pred, truth)
    assert 0 < value < 1
    assert value == pytest.approx(expected, abs=1e-12)


def test_length_mismatch_and_empty():
    with pytest.raises(ContractError):
        nmi([0, 1], [0])
    with pytest.raises(ContractError):
        nmi([], [])


def test_accuracy_and_mse():
    assert accuracy([0, 1, 1], [0, 1, 1]) == 1.0
    assert accuracy([0, 1, 0], [1, 0, 1]) == 0.0
    assert mse([[0, 0]], [[3, 4]]) == 12.5
    assert mse(np.ones((2, 2)), np.ones((2, 2))) == 0.0
    with pytest.raises(ShapeError):
        mse([[0]], [[0, 0]])


def test_contingency_table_counts():
    table = ContingencyTable.from_labels([0, 0, 1], [1, 1, 1])
    assert table.total == 3
    assert table.counts.sum() == 3
    assert np.all(table.counts >= 0)


@given(paired())
def test_nmi_matches_sklearn_geometric(pair):
    pred, truth = pair
    expected = skm.normalized_mutual_info_score(truth, pred, average_method="geometric")
    assert nmi(pred, truth) == pytest.approx(expected, abs=1e-10)


@given(paired())
def test_completeness_matches_sklearn(pair):
    pred, truth = pair
    assert completeness_score(pred, truth) == pytest.approx(skm.completeness_score(truth, pred), abs=1e-10)


@given(paired(), st.permutations(range(5)), st.permutations(range(5)))
def test_metrics_invariant_under_relabeling(pair, p1, p2):
    pred, truth = np.array(pair[0]), np.array(pair[1])
    rp, rt = np.array(p1)[pred], np.array(p2)[truth]
    assert nmi(rp, rt) == nmi(pred, truth)
    assert completeness_score(rp, rt) == completeness_score(pred, truth)


@given(paired())
def test_nmi_symmetric_and_bounded(pair):
    pred, truth = pair
    assert nmi(pred, truth) == nmi(truth, pred)
    assert 0.0 <= nmi(pred, truth) <= 1.0
    assert 0.0 <= completeness_score(pred, truth) <= 1.0
