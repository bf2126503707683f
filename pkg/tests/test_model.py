import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cqpbb.model import (TWO_PI, Discrete, Interval, ModulusBounds, ProblemCQP, circular_distance,
                         compute_constants, evaluate_objective, hermitize, normalize_angle, validate)

from conftest import qpsk_toy, random_hermitian

angles = st.floats(-20.0, 20.0, allow_nan=False)


def test_objective_examples(toy):
    assert evaluate_objective(toy, [1, 1]) == pytest.approx(0.0, abs=1e-15)
    zero = ProblemCQP(np.zeros((2, 2)), np.zeros(2), toy.bounds, toy.args)
    assert evaluate_objective(zero, [0.3 + 2j, -1]) == 0.0
    one = ProblemCQP([[2.0]], [0.0], (ModulusBounds(1, 1),), (Interval(0, TWO_PI),))
    assert evaluate_objective(one, [1j]) == pytest.approx(1.0)


def test_toy_minimum_by_enumeration(toy):
    pts = np.exp(1j * np.array(toy.args[0].angles))
    vals = [evaluate_objective(toy, [a, b]) for a in pts for b in pts]
    assert min(vals) == pytest.approx(0.0, abs=1e-15)


def test_objective_dimension_mismatch(toy):
    with pytest.raises(ValueError, match="dimension"):
        evaluate_objective(toy, [1, 1, 1])


def test_validate_messages(toy):
    assert validate(toy) == []
    bad = ProblemCQP(np.eye(2), np.zeros(2), (ModulusBounds(1, 0.5), ModulusBounds(1, 1)), toy.args)
    assert any("modulus bounds reversed" in e for e in validate(bad))
    Q = np.array([[1, 1j], [1j, 1]])
    assert any("not Hermitian" in e for e in validate(ProblemCQP(Q, np.zeros(2), toy.bounds, toy.args)))
    with pytest.raises(ValueError, match="invalid problem"):
        bad.validated()


def test_validate_reports_every_error():
    p = ProblemCQP(np.array([[1, 2], [0, 1]]), [np.nan, 0], (ModulusBounds(-1, 1),), (Interval(0, 1),))
    errs = validate(p)
    assert len(errs) >= 4


def test_problem_arrays_are_read_only(toy):
    with pytest.raises(ValueError):
        toy.Q[0, 0] = 5


def test_constants_hand_values():
    p = ProblemCQP([[2.0]], [0.0], (ModulusBounds(1, 1),), (Interval(0, TWO_PI),))
    k = compute_constants(p, 1e-4)
    assert (k.u_max, k.m_f, k.m1, k.m2) == (1.0, 2.0, 4.0, 1.0)
    assert k.kappa1 == pytest.approx(math.sqrt(8e-4 / 5))
    assert k.kappa2 == pytest.approx(math.sqrt(4e-4 / 5))


def test_constants_zero_problem():
    p = ProblemCQP(np.zeros((2, 2)), np.zeros(2), (ModulusBounds(0, 0),) * 2, (Interval(0, 1),) * 2)
    k = compute_constants(p, 1e-4)
    assert k.m2 == 0 and math.isinf(k.kappa1) and math.isinf(k.kappa2)
    with pytest.raises(ValueError):
        compute_constants(p, 0.0)


def test_m1_grows_with_u_max(toy):
    a = compute_constants(toy, 1e-4)
    big = ProblemCQP(toy.Q, toy.c, (ModulusBounds(1, 2), ModulusBounds(1, 1)), toy.args)
    assert compute_constants(big, 1e-4).m1 > a.m1


@given(st.integers(1, 6), st.integers(0, 10**6), st.floats(0.1, 3.0))
def test_lipschitz_contract(n, seed, u):
    rng = np.random.default_rng(seed)
    Q = random_hermitian(rng, n)
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    p = ProblemCQP(Q, c, (ModulusBounds(0, u),) * n, (Interval(0, TWO_PI),) * n)
    k = compute_constants(p, 1e-4)
    for _ in range(5):
        x, y = (u * rng.uniform(0, 1, n) * np.exp(1j * rng.uniform(0, TWO_PI, n)) for _ in range(2))
        gap = abs(evaluate_objective(p, x) - evaluate_objective(p, y))
        assert gap <= k.m_f * np.linalg.norm(x - y) + 1e-12
    assert k.m1 >= math.sqrt(n) * k.m_f
    assert k.m2 == 0.5 * n**1.5 * np.linalg.norm(Q, "fro")


@given(st.integers(0, 10**6))
def test_hermitization_is_noop(seed):
    rng = np.random.default_rng(seed)
    Q = random_hermitian(rng, 3)
    x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    p = ProblemCQP(Q, np.zeros(3), (ModulusBounds(0, 1),) * 3, (Interval(0, 1),) * 3)
    h = ProblemCQP(hermitize(Q), np.zeros(3), p.bounds, p.args)
    assert evaluate_objective(p, x) == pytest.approx(evaluate_objective(h, x), abs=1e-12)


@given(angles)
def test_normalize_angle_range(t):
    v = normalize_angle(t)
    assert 0.0 <= v < TWO_PI
    assert circular_distance(v, t) < 1e-9


@given(angles, st.floats(0.0, TWO_PI))
def test_interval_normalized(lo, w):
    a = Interval(lo, lo + w)
    assert 0.0 <= a.lo < TWO_PI
    assert a.width == pytest.approx(w, abs=1e-9)
    assert a.contains(lo + 0.5 * w, 1e-9)


def test_interval_rejects_bad_endpoints():
    with pytest.raises(ValueError):
        Interval(1.0, 0.5)
    with pytest.raises(ValueError):
        Interval(0.0, 7.0)


def test_interval_split_and_wrap():
    a = Interval(-math.pi / 6, math.pi / 6)
    assert a.lo == pytest.approx(TWO_PI - math.pi / 6)
    assert a.contains(0.0) and a.contains(0.1) and not a.contains(1.0)
    left, right = Interval(0, math.pi).split()
    assert (left.lo, left.hi, right.lo, right.hi) == (0, math.pi / 2, math.pi / 2, math.pi)


def test_discrete_normalizes_and_rejects_duplicates():
    d = Discrete((3 * math.pi, 0.0, -math.pi / 2))
    assert d.angles == pytest.approx((0.0, math.pi, 3 * math.pi / 2))
    with pytest.raises(ValueError):
        Discrete((0.0, TWO_PI))
    with pytest.raises(ValueError):
        Discrete(())


def test_discrete_split_rule():
    lo, hi = Discrete.psk(4).split()
    assert lo.angles == pytest.approx((0.0, math.pi / 2))
    assert hi.angles == pytest.approx((math.pi, 3 * math.pi / 2))


@given(st.lists(st.integers(0, 359), min_size=2, max_size=12, unique=True))
def test_discrete_split_partitions(degs):
    d = Discrete(tuple(math.radians(v) for v in degs))
    lo, hi = d.split()
    assert len(lo) >= 1 and len(hi) >= 1
    assert sorted(lo.angles + hi.angles) == list(d.angles)


def test_modulus_split():
    lo, hi = ModulusBounds(0.2, 1.0).split()
    assert (lo.lo, lo.hi, hi.lo, hi.hi) == pytest.approx((0.2, 0.6, 0.6, 1.0))
    assert ModulusBounds(1, 1).is_fixed
