import math

import numpy as np
import pytest

from conftest import bump_grid
from heatpot import lab
from heatpot.errors import ParameterError
from heatpot.potential import SlabSpec


def test_corpus_is_deterministic():
    a = lab.generate_corpus(lab.CorpusSpec(seed=5, count=3))
    b = lab.generate_corpus(lab.CorpusSpec(seed=5, count=3))
    assert [m.id for m in a] == [m.id for m in b]
    assert all(np.array_equal(x.f.samples, y.f.samples) for x, y in zip(a, b))
    c = lab.generate_corpus(lab.CorpusSpec(seed=6, count=3))
    assert not np.array_equal(a[0].f.samples, c[0].f.samples)


@pytest.mark.parametrize("family", lab.FAMILIES)
def test_corpus_families(family):
    members = lab.generate_corpus(lab.CorpusSpec(seed=1, count=3, family=family))
    for m in members:
        assert m.l1 > 0 and m.linf > 0
        s = m.f.samples
        # compact support inside the box
        assert np.all(s[0] == 0) and np.all(s[-1] == 0) and np.all(s[:, 0] == 0)


def test_corpus_spec_validation():
    with pytest.raises(ParameterError):
        lab.CorpusSpec(count=0)
    with pytest.raises(ParameterError):
        lab.CorpusSpec(family="wavelets")
    with pytest.raises(ParameterError):
        lab.CorpusSpec(amplitude=(0.0, 1.0))
    with pytest.raises(ParameterError):
        lab.CorpusSpec(n=2)
    assert lab.CorpusSpec.box(2).grid.n == 2


def test_hedberg(small_corpus):
    r = lab.check_hedberg(small_corpus, 1, 2.0, 1)
    assert r.passed and r.scale_invariance_defect < 1e-3
    assert r.held_out_worst <= 1.25 * r.fitted_constant
    assert r.extra["worst_location"] is not None
    with pytest.raises(ParameterError):
        lab.check_hedberg(small_corpus, 1, 2.0, 1.5)


def test_hedberg_split(small_corpus):
    r = lab.check_hedberg_split(small_corpus, 1, 2.0, 1)
    assert r.passed and set(r.extra) == {"near", "far"}


def test_sobolev(small_corpus):
    r = lab.check_sobolev(small_corpus, 1, 2.0, 1.25)
    assert r.passed and r.params["q"] == pytest.approx(3.75 / 0.5)
    with pytest.raises(ParameterError):
        lab.check_sobolev(small_corpus, 1, 2.0, 1.0)


def test_maximal_strong(small_corpus):
    assert lab.check_maximal_strong(small_corpus, 1, 2).passed
    with pytest.raises(ParameterError):
        lab.check_maximal_strong(small_corpus, 1, 1)


def test_weak_maximal(small_corpus):
    r = lab.check_weak_maximal(small_corpus, 1)
    assert r.passed and r.worst_ratio <= 5.0 ** 3


def test_nonlinear(small_corpus):
    r = lab.check_nonlinear(small_corpus[:2], 1, 2.0, 2.0, 3.0, 1.0)
    assert r.passed and r.extra["amplitude_defect"] < 1e-3


def test_padded_keeps_mass():
    f = bump_grid(h=0.1, tau=0.05)
    g = lab.padded(f)
    assert g.samples.sum() == pytest.approx(f.samples.sum())
    assert g.spec.nt == f.spec.nt + 2 * math.ceil(0.5 * f.spec.nt)


def test_layer_cake_exact():
    r = lab.check_layer_cake(trials=20, seed=1)
    assert r.passed and r.worst_ratio < 1e-10
    with pytest.raises(ParameterError):
        lab.check_layer_cake(trials=0)


def test_layer_cake_sides_by_hand():
    # g = 1 on one cell, 2 on another; a = 0, b = 1, alpha = 1
    lhs, rhs = lab.layer_cake_sides([1.0, 2.0], 1.0, 0.0, 1.0, 1.0)
    assert float(lhs) == pytest.approx(5.0) and float(rhs) == pytest.approx(5.0)


@pytest.mark.parametrize("delta", [0.0, 0.25])
def test_slab_scaling(delta):
    f = bump_grid(h=0.05, tau=0.0125)
    q = 1 / (1 / 2 - delta)
    r = lab.check_slab_scaling(f, 2.0, 2, q, SlabSpec(0.25, 0.75))
    assert r.passed, r.extra


def test_report_rows(small_corpus):
    r = lab.check_maximal_strong(small_corpus, 1, 2)
    rows = r.csv_rows()
    assert rows[0] == ("id", "ratio", "split", "defect") and len(rows) == len(small_corpus) + 1
    assert "pass" in r.to_dict()
