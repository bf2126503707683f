"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""
import math
import statistics
import time

import numpy as np
import pytest

from cqpbb import apps
from cqpbb.bb import EPSILON_OPTIMAL, Limits, run

from conftest import qpsk_toy
import test_envelope as envelope_suite

EPS = 1e-4
# Keeps the suite bounded; a capped run reports iteration-limit and is counted, not hidden.
CAP = Limits(max_iter=500)


def _line(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def _run_all(problems, **kw):
    out = []
    for p in problems:
        out.append(run(p, EPS, CAP, **kw))
    return out


@pytest.fixture(scope="module")
def oracle_runs():
    specs = [apps.MimoSpec(8, 6, 4, snr, seed) for snr in (5.0, 15.0) for seed in range(10)]
    problems = [apps.gen_mimo(s)[0] for s in specs]
    t0 = time.perf_counter()
    reports = _run_all(problems, verify=True)
    elapsed = time.perf_counter() - t0
    oracle = [apps.brute_force(p).value for p in problems]
    return problems, reports, oracle, elapsed


@pytest.fixture(scope="module")
def mixed_runs():
    problems = []
    for k in range(34):
        problems.append(apps.gen_mimo(apps.MimoSpec(8, 6, 4, (5.0, 15.0, 25.0)[k % 3], 100 + k))[0])
    for k in range(33):
        problems.append(apps.gen_radar(apps.RadarSpec(delta_angle=math.pi / 6, seed=100 + k)))
    for k in range(33):
        problems.append(apps.gen_vb(apps.VbSpec((5, 10)[k % 2], 5, seed=100 + k)))
    return problems, _run_all(problems)


@pytest.fixture(scope="module")
def vb_runs():
    problems = [apps.gen_vb(apps.VbSpec(m, 5, seed=s)) for m in (5, 10) for s in range(10)]
    return problems, _run_all(problems)


@pytest.fixture(scope="module")
def high_snr_runs():
    problems = [apps.gen_mimo(apps.MimoSpec(15, 10, 4, 25.0, s))[0] for s in range(20)]
    return problems, _run_all(problems)


@pytest.fixture(scope="module")
def radar_runs():
    problems = [apps.gen_radar(apps.RadarSpec(delta_angle=math.pi / 6, seed=s)) for s in range(5)]
    return problems, _run_all(problems)


def test_criterion_1_oracle_equivalence(capsys, oracle_runs):
    _, reports, oracle, elapsed = oracle_runs
    errors = [abs(r.objective - v) for r, v in zip(reports, oracle)]
    ok = max(errors) <= 1e-4 and elapsed < 120.0
    _line(capsys, 1, ok, f"max |ObjVal - brute force| = {max(errors):.2e} over {len(errors)} instances, "
                         f"runtime {elapsed:.1f} s")
    assert ok


def test_criterion_2_relaxation_ordering(capsys, mixed_runs):
    _, reports = mixed_runs
    order = min(r.lbd_e - r.lbd_c for r in reports)
    in_range = all(0.0 <= r.cld_gap <= 100.0 for r in reports)
    # The unclipped ratio may leave [0, 100] only through solver round-off
    # (BB-level tolerance 1e-7 relative on F).
    def raw_ok(r):
        denom = r.objective - r.lbd_c
        if denom <= 1e-12:
            return True
        slack = 100.0 * 1e-7 * (1.0 + abs(r.objective)) / denom
        return -slack <= r.cld_gap_raw <= 100.0 + slack
    raw = all(raw_ok(r) for r in reports)
    ok = order >= -1e-7 and in_range and raw and len(reports) == 100
    _line(capsys, 2, ok, f"min LBdE - LBdC = {order:.2e}; CldGap in [0, 100] on all {len(reports)} runs: {in_range}; "
                         f"unclipped within round-off: {raw}")
    assert ok


def test_criterion_3_full_circle_equivalence(capsys, vb_runs):
    _, reports = vb_runs
    rel = max(abs(r.lbd_e - r.lbd_c) / (1 + abs(r.lbd_c)) for r in reports)
    med = statistics.median(r.iterations for r in reports)
    capped = sum(r.status != EPSILON_OPTIMAL for r in reports)
    ok = rel <= 1e-6 and med <= 20
    _line(capsys, 3, ok, f"max relative |LBdE - LBdC| = {rel:.2e}; median iterations {med}; "
                         f"{capped}/{len(reports)} stopped at the {CAP.max_iter}-iteration cap")
    assert ok


def test_criterion_4_high_snr_exactness(capsys, high_snr_runs):
    _, reports = high_snr_runs
    hits = sum(r.objective - r.lbd_e <= 1e-3 * (1 + abs(r.objective)) for r in reports)
    frac = hits / len(reports)
    ok = frac >= 0.8
    _line(capsys, 4, ok, f"{hits}/{len(reports)} instances with ObjVal - LBdE <= 1e-3 (1 + |ObjVal|); "
                         f"mean CldGap {statistics.fmean(r.cld_gap for r in reports):.1f} %")
    assert ok


def test_criterion_5_radar(capsys, radar_runs):
    problems, reports = radar_runs
    assert all(a.width == pytest.approx(math.pi / 3) for p in problems for a in p.args)
    med = statistics.median(r.cld_gap for r in reports)
    certified = all(r.status == EPSILON_OPTIMAL and r.objective - r.lower <= 1e-4 and r.iterations <= 100
                    for r in reports)
    ok = med >= 85.0 and certified
    _line(capsys, 5, ok, f"median CldGap {med:.2f} %; iterations {[r.iterations for r in reports]}; "
                         f"all certified within 1e-4: {certified}")
    assert ok


def test_criterion_6_gap_bound_audit(capsys, oracle_runs):
    _, reports, _, _ = oracle_runs
    checks = [v for r in reports for v in r.verify_log if v["check"] == "gap-bound"]
    bad = [v for v in checks if not v["ok"]]
    ok = len(checks) > 0 and not bad
    _line(capsys, 6, ok, f"{len(checks)} selected nodes audited, {len(bad)} violations")
    assert ok


def test_criterion_7_iteration_bound(capsys, oracle_runs, mixed_runs, vb_runs, high_snr_runs, radar_runs):
    reports = list(oracle_runs[1]) + mixed_runs[1] + vb_runs[1] + high_snr_runs[1] + radar_runs[1]
    over = [r for r in reports if r.iterations > r.theoretical_k]
    toy = run(qpsk_toy(), EPS)
    ok = not over and toy.theoretical_k == 16 and toy.iterations <= 16
    _line(capsys, 7, ok, f"{len(reports)} runs within K; toy K = {toy.theoretical_k}, "
                         f"toy iterations {toy.iterations}")
    assert ok


def test_criterion_8_envelope_suite(capsys):
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    member, ratio = envelope_suite._soundness_and_ratio(rng, 10_000)
    gap, lowest = envelope_suite._modulus_gap(rng, 10_000)
    recovered, hits = envelope_suite._recovery(rng, 10_000)
    elapsed = time.perf_counter() - t0
    ok = member <= 1e-10 and ratio <= 1e-10 and gap <= 1e-10 and lowest >= -1e-10 and recovered < 1e-6 \
        and elapsed < 10.0
    _line(capsys, 8, ok, f"soundness {member:.1e}, modulus ratio {ratio:.1e}, square gap {gap:.1e}, "
                         f"recovery {recovered:.1e} ({hits} members), {elapsed:.2f} s")
    assert ok


def test_criterion_9_solver_certification(capsys, oracle_runs, mixed_runs, vb_runs, high_snr_runs, radar_runs):
    reports = list(oracle_runs[1]) + mixed_runs[1] + vb_runs[1] + high_snr_runs[1] + radar_runs[1]
    audits = [r.solver_audit for r in reports]
    worst_res = max(a["max_residual"] for a in audits)
    worst_eig = min(a["min_eigenvalue"] for a in audits)
    solves = sum(a["solves"] for a in audits)
    ok = worst_res <= 1e-7 and worst_eig >= -1e-7
    _line(capsys, 9, ok, f"{solves} relaxation solves; max recomputed residual {worst_res:.2e}; "
                         f"min eigenvalue {worst_eig:.2e}")
    assert ok
