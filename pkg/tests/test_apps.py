import math

import numpy as np
import pytest

from cqpbb import apps, io
from cqpbb.bb import run
from cqpbb.model import TWO_PI, Discrete, Interval, ModulusBounds, ProblemCQP, evaluate_objective, validate

from conftest import qpsk_toy


def test_mimo_shape():
    p, gt = apps.gen_mimo(apps.MimoSpec(8, 6, 4, 15.0, 1))
    assert p.n == 6 and validate(p) == []
    assert all(b.lo == b.hi == 1.0 for b in p.bounds)
    assert all(a == Discrete.psk(4) for a in p.args)
    assert np.abs(gt.planted) == pytest.approx(np.ones(6))


def test_mimo_noiseless_recovers_planted():
    spec = apps.MimoSpec(8, 6, 4, math.inf, 5)
    p, gt = apps.gen_mimo(spec)
    orc = apps.brute_force(p)
    assert orc.minimizer == pytest.approx(gt.planted, abs=1e-12)
    assert orc.value + gt.offset == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("snr", [5.0, 15.0, 25.0])
def test_mimo_snr_calibration(snr):
    p, gt = apps.gen_mimo(apps.MimoSpec(15, 10, 4, snr, 9))
    signal = float(np.vdot(gt.planted, p.Q @ gt.planted).real)
    assert 10 * math.log10(signal / (gt.sigma**2 * p.n)) == pytest.approx(snr, abs=1e-9)


def test_mimo_offset_matches_residual():
    p, gt = apps.gen_mimo(apps.MimoSpec(8, 6, 4, 15.0, 2))
    x = gt.planted
    # F(x) + offset = 1/2 ||H x - r||^2 >= 0.
    assert evaluate_objective(p, x) + gt.offset >= -1e-12


def test_generators_are_deterministic():
    specs = [("mimo", apps.MimoSpec(8, 6, 4, 15.0, 1)), ("radar", apps.RadarSpec(seed=3)), ("vb", apps.VbSpec(5, 5, seed=7))]
    for kind, spec in specs:
        a, b = io.Instance.generate(kind, spec), io.Instance.generate(kind, spec)
        assert io.dumps(a.to_dict()) == io.dumps(b.to_dict())
    assert io.Instance.generate("vb", apps.VbSpec(5, 5, seed=8)).problem != io.Instance.generate("vb", apps.VbSpec(5, 5, seed=7)).problem


def test_radar_widths_and_feasibility():
    spec = apps.RadarSpec(delta_angle=math.pi / 6, seed=3)
    p = apps.gen_radar(spec)
    assert all(a.width == pytest.approx(math.pi / 3) for a in p.args)
    x0 = np.array(apps.BARKER7, dtype=complex)
    for xi, a in zip(x0, p.args):
        assert a.contains(np.angle(xi), 1e-12)
    delta = math.sqrt(2 * (1 - math.cos(spec.delta_angle)))
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = np.exp(1j * np.array([a.lo + rng.uniform(0, a.width) for a in p.args]))
        assert np.max(np.abs(x - x0)) <= delta + 1e-12


def test_radar_diagonal():
    rho = 0.5
    p = apps.gen_radar(apps.RadarSpec(rho=rho, seed=0))
    idx = np.arange(7)
    Minv = np.linalg.inv(rho ** np.abs(idx[:, None] - idx[None, :]))
    assert np.diag(p.Q).real == pytest.approx(-2 * np.diag(Minv))
    assert np.max(np.abs(p.Q - p.Q.conj().T)) == 0.0
    tiny = apps.gen_radar(apps.RadarSpec(rho=1e-12, seed=0))
    assert np.diag(tiny.Q).real == pytest.approx(-2 * np.ones(7))


def test_radar_rho_drawn_in_range():
    for seed in range(20):
        p = apps.gen_radar(apps.RadarSpec(seed=seed))
        # Q[0, 1] = -2 * (M^-1)[0, 1] * conj(p0 conj(p1)); for AR(1), (M^-1)[0,1] = -rho / (1 - rho^2).
        off = abs(p.Q[0, 1]) / 2
        rho = (-1 + math.sqrt(1 + 4 * off**2)) / (2 * off)
        assert 0.2 <= rho <= 0.8


def test_radar_spec_validation():
    with pytest.raises(ValueError):
        apps.RadarSpec(n=5)
    with pytest.raises(ValueError):
        apps.RadarSpec(rho=1.5)
    p = apps.gen_radar(apps.RadarSpec(n=3, x0=(1, -1, 1j), rho=0.3))
    assert p.n == 3 and p.args[1].contains(math.pi)


def test_vb_structure():
    p = apps.gen_vb(apps.VbSpec(2, 5, seed=7))
    ev = np.linalg.eigvalsh(p.Q)
    assert ev.max() <= 1e-10
    assert np.sum(ev < -1e-9) <= 2
    assert all(a.is_full_circle for a in p.args)
    assert all(b.lo == 0 and b.hi == 1 for b in p.bounds)
    q = apps.gen_vb(apps.VbSpec(3, 2, power=(4.0, 0.25)))
    assert [b.hi for b in q.bounds] == [2.0, 0.5]


def test_vb_scalar_and_zero_cases():
    full = (Interval(0, TWO_PI),)
    rep = run(ProblemCQP([[-2.0]], [0.0], (ModulusBounds(0, 1),), full))
    assert rep.objective == pytest.approx(-1.0, abs=1e-6)
    rep = run(ProblemCQP(np.zeros((2, 2)), np.zeros(2), (ModulusBounds(0, 1),) * 2, full * 2))
    assert rep.objective == 0.0


def test_oracle_examples():
    gt = apps.brute_force(qpsk_toy())
    assert gt.value == pytest.approx(0.0, abs=1e-15) and gt.points == 16
    assert gt.minimizer == pytest.approx([1, 1])
    one = ProblemCQP([[3.0]], [1j], (ModulusBounds(2, 2),), (Discrete((0.5,)),))
    assert apps.brute_force(one).value == pytest.approx(evaluate_objective(one, [2 * np.exp(0.5j)]))


def test_oracle_preconditions():
    p = ProblemCQP(np.eye(1), [0], (ModulusBounds(1, 1),), (Interval(0, 1),))
    with pytest.raises(ValueError, match="oracle requires discrete arguments"):
        apps.brute_force(p)
    with pytest.raises(ValueError, match="fixed modulus"):
        apps.brute_force(ProblemCQP(np.eye(1), [0], (ModulusBounds(0, 1),), (Discrete.psk(2),)))
    big = ProblemCQP(np.eye(12), np.zeros(12), (ModulusBounds(1, 1),) * 12, (Discrete.psk(4),) * 12)
    with pytest.raises(ValueError, match="exceeds limit"):
        apps.brute_force(big)


def test_oracle_minimizer_is_feasible():
    p, _ = apps.gen_mimo(apps.MimoSpec(6, 5, 8, 10.0, 4))
    gt = apps.brute_force(p)
    for xi, a in zip(gt.minimizer, p.args):
        assert abs(xi) == pytest.approx(1.0) and a.contains(np.angle(xi), 1e-12)
    assert evaluate_objective(p, gt.minimizer) == pytest.approx(gt.value, abs=1e-12)


def test_complex_gaussian_variance():
    z = apps.complex_gaussian(np.random.default_rng(0), (200_000,))
    assert np.var(z.real) == pytest.approx(0.5, rel=0.02)
    assert np.var(z.imag) == pytest.approx(0.5, rel=0.02)
