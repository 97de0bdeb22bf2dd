import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvcon.errors import InvalidBatchError
from mvcon.pairing import BatchLabels, PairVariant, build_pairs

AABB = BatchLabels(["A", "A", "B", "B"], [1, 1, 0, 0])


@st.composite
def batches(draw, max_size=10, unique=False):
    n = draw(st.integers(1, max_size))
    if unique:
        lesions = list(range(n))
    else:
        lesions = draw(st.lists(st.integers(0, 4), min_size=n, max_size=n))
    cls = {lid: draw(st.integers(0, 1)) for lid in set(lesions)}
    return BatchLabels(lesions, [cls[lid] for lid in lesions])


def test_lr_example():
    p = build_pairs(PairVariant.LR, AABB)
    assert p.positives[0] == [0, 1]
    assert p.negatives[0] == [2, 3]


def test_ir_example():
    p = build_pairs(PairVariant.IR, AABB)
    assert p.positives[0] == [0]
    assert p.negatives[0] == [1, 2, 3]


def test_minus_sc_examples():
    assert build_pairs(PairVariant.LR_MINUS_SC, AABB).negatives[0] == [2, 3]
    labels = BatchLabels(["A", "A", "C", "B"], [1, 1, 1, 0])
    assert build_pairs(PairVariant.LR_MINUS_SC, labels).negatives[0] == [3]


def test_minus_dc_example():
    labels = BatchLabels(["A", "A", "C", "B"], [1, 1, 1, 0])
    assert build_pairs(PairVariant.LR_MINUS_DC, labels).negatives[0] == [2]


@given(batches())
def test_minus_all_has_no_negatives(labels):
    p = build_pairs(PairVariant.LR_MINUS_ALL, labels)
    assert not p.neg.any()
    assert p.positives == build_pairs(PairVariant.LR, labels).positives


def test_inconsistent_lesion_class():
    with pytest.raises(InvalidBatchError):
        BatchLabels(["A", "A"], [0, 1])


def test_empty_batch_rejected():
    with pytest.raises(InvalidBatchError):
        BatchLabels([], [])


def test_variant_parse():
    assert PairVariant.parse("LR(-SC)") is PairVariant.LR_MINUS_SC
    assert PairVariant.parse("lr_minus_dc") is PairVariant.LR_MINUS_DC
    assert PairVariant.parse("IR") is PairVariant.IR
    with pytest.raises(ValueError):
        PairVariant.parse("XR")


@given(batches(), st.sampled_from(list(PairVariant)))
def test_invariants_dual_view(labels, variant):
    p = build_pairs(variant, labels)
    assert not (p.pos & p.neg).any()
    assert all(p.pos[i, i] for i in range(len(labels)))


@given(batches(), st.sampled_from(list(PairVariant)))
def test_single_view_excludes_self(labels, variant):
    p = build_pairs(variant, labels, dual_view=False)
    assert not np.diag(p.pos).any() and not np.diag(p.neg).any()


@given(batches(unique=True))
def test_lr_equals_ir_for_unique_lesions(labels):
    lr, ir = build_pairs(PairVariant.LR, labels), build_pairs(PairVariant.IR, labels)
    assert lr.positives == ir.positives and lr.negatives == ir.negatives


@given(batches())
def test_sc_dc_partition_lr_negatives(labels):
    lr = build_pairs(PairVariant.LR, labels).neg
    sc = build_pairs(PairVariant.LR_MINUS_SC, labels).neg
    dc = build_pairs(PairVariant.LR_MINUS_DC, labels).neg
    assert not (sc & dc).any()
    np.testing.assert_array_equal(sc | dc, lr)


@given(batches(), st.sampled_from(list(PairVariant)), st.randoms(use_true_random=False))
def test_permutation_equivariance(labels, variant, rnd):
    n = len(labels)
    perm = list(range(n))
    rnd.shuffle(perm)
    permuted = BatchLabels([labels.lesion_ids[i] for i in perm],
                           [labels.class_labels[i] for i in perm])
    direct = build_pairs(variant, permuted)
    moved = build_pairs(variant, labels).permuted(perm)
    np.testing.assert_array_equal(direct.pos, moved.pos)
    np.testing.assert_array_equal(direct.neg, moved.neg)
