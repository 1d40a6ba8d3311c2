import numpy as np
import pytest
from conftest import scalar_problem
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import nonneg_lasso

from esrr import _scan
from esrr.atoms import (
    CanonicalSpike,
    ProblemInstance,
    SparseSignal,
    TorusSpike,
    VectorSpike,
    dictionary,
    forward_signal,
)
from esrr.certificate import Certificate, eta_eval
from esrr.solver import (
    SolverConfig,
    coefficient_subproblem,
    kkt_residual,
    lmo,
    objective,
    residual_certificate,
    slide,
    solve,
)
from esrr.torus import FourierBank, lowpass_fourier_bank


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(gap_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(lmo_grid=8)
    assert SolverConfig().to_dict()["lmo_grid"] == 4096


def test_residual_certificate_examples():
    prob = scalar_problem(6)
    u = SparseSignal((1.0,), (TorusSpike(1, 0.3),))
    y = forward_signal(prob, u)
    assert np.array_equal(residual_certificate(prob, u, y, 0.1).p, np.zeros(6))
    y2 = np.arange(6.0)
    assert np.array_equal(residual_certificate(prob, SparseSignal(), y2, 1.0).p, y2)
    p1 = residual_certificate(prob, u, y2, 1.0).p
    p3 = residual_certificate(prob, u, y2, 3.0).p
    assert np.allclose(p3, p1 / 3, rtol=1e-15)
    with pytest.raises(ValueError):
        residual_certificate(prob, u, y2, 0.0)


def test_lmo_examples():
    prob = ProblemInstance("scalar-blasso", FourierBank([1], [0.0]))
    r = lmo(prob, Certificate([0.0], prob))
    assert r.degenerate and r.value == 0.0
    atom, value = lmo(prob, Certificate([1.0], prob))
    assert atom == TorusSpike(1, 0.0) and value == pytest.approx(1.0, abs=1e-12)
    # -cos has |eta| = 1 at 0 and 1/2: the tie goes to the smaller position
    atom, value = lmo(prob, Certificate([-1.0], prob))
    assert atom == TorusSpike(-1, 0.0) and value == pytest.approx(1.0, abs=1e-12)

    ring = ProblemInstance("group-l2", FourierBank([[1, 1]], [[0.0, -np.pi / 2]]))
    atom, value = lmo(ring, Certificate([1.0], ring))
    # flat ridge |eta| = 1: the smallest grid index wins
    assert value == pytest.approx(1.0, abs=1e-9)
    assert atom.x == 0.0 and np.allclose(atom.a, [1.0, 0.0])


def test_lmo_demixing_prefers_larger_coordinate():
    prob = ProblemInstance("demixing", lowpass_fourier_bank(5, amplitude=0.1))
    p = np.array([0.1, 0.0, -2.0, 0.0, 0.0])
    atom, value = lmo(prob, Certificate(p, prob))
    assert atom == CanonicalSpike(3, -1) and value == 2.0


def test_lmo_matches_fine_scan():
    prob = ProblemInstance("group-l1", lowpass_fourier_bank(20, 3, seed=5))
    rng = np.random.default_rng(0)
    for _ in range(5):
        p = rng.standard_normal(20)
        atom, value = lmo(prob, Certificate(p, prob))
        x = np.arange(2**17) / 2**17
        fine = np.max(np.abs(np.einsum("gnd,n->gd", prob.bank.evaluate(x, 0), p)))
        assert value >= fine - 1e-12
        assert value == pytest.approx(fine, rel=1e-8)
        assert eta_eval(Certificate(p, prob), atom) == pytest.approx(value, rel=1e-12)


def test_coefficient_examples():
    prob = ProblemInstance("demixing", lowpass_fourier_bank(4, amplitude=0.2))
    e1 = np.array([1.0, 0, 0, 0])
    c = coefficient_subproblem(prob, [CanonicalSpike(1, 1)], e1, 0.1)
    assert c == pytest.approx([0.9], abs=1e-12)
    c = coefficient_subproblem(prob, [CanonicalSpike(1, 1)], e1, 1.0)
    assert c == [0.0]
    y = np.array([0.5, -2.0, 0.3, 0.0])
    c = coefficient_subproblem(prob, [CanonicalSpike(1, 1), CanonicalSpike(2, -1)], y, 0.2)
    assert c == pytest.approx([0.3, 1.8], abs=1e-12)
    assert len(coefficient_subproblem(prob, [], y, 0.2)) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8), st.floats(1e-3, 0.5))
def test_coefficient_kkt_and_oracle(seed, n, lam):
    rng = np.random.default_rng(seed)
    prob = scalar_problem(12)
    atoms = [TorusSpike(int(s), float(x)) for s, x in zip(rng.choice([-1, 1], n), (np.arange(n) + rng.uniform(0, 0.5, n)) / n)]
    y = rng.standard_normal(12)
    c = coefficient_subproblem(prob, atoms, y, lam)
    A = dictionary(prob, atoms)
    assert np.all(c >= 0)
    assert kkt_residual(A, y, lam, c) <= 1e-10
    ref = nonneg_lasso(A, y, lam)
    f = lambda v: 0.5 * np.sum((A @ v - y) ** 2) + lam * np.sum(v)  # noqa: E731
    assert f(c) <= f(np.maximum(ref, 0)) + 1e-9


def test_slide_fixed_point():
    prob = scalar_problem()
    u0 = SparseSignal((1.0, 0.7), (TorusSpike(1, 0.2), TorusSpike(-1, 0.6)))
    y = forward_signal(prob, u0)
    res = solve(prob, y, 1e-3)
    again = slide(prob, res.u, y, 1e-3)
    for (c1, a1), (c2, a2) in zip(res.u, again):
        assert abs(c1 - c2) <= 1e-12 and abs(a1.x - a2.x) <= 1e-12


def test_slide_moves_spike_toward_truth():
    prob = scalar_problem()
    y = forward_signal(prob, SparseSignal((1.0,), (TorusSpike(1, 0.3),)))
    u = SparseSignal((1.0,), (TorusSpike(1, 0.31),))
    out = slide(prob, u, y, 1e-4)
    assert abs(out.atoms[0].x - 0.3) < 1e-4
    assert objective(prob, out, y, 1e-4) < objective(prob, u, y, 1e-4)
    # dense grid evaluation of the one-atom objective agrees on the optimum
    xs = 0.3 + np.linspace(-0.01, 0.01, 2001)
    objs = [objective(prob, SparseSignal((out.coefs[0],), (TorusSpike(1, x),)), y, 1e-4) for x in xs]
    assert objective(prob, out, y, 1e-4) <= min(objs) + 1e-12


def test_slide_rotates_direction():
    prob = ProblemInstance("group-l2", lowpass_fourier_bank(20, 3, seed=0))
    a0 = np.array([0.6, 0.0, 0.8])
    y = forward_signal(prob, SparseSignal((1.0,), (VectorSpike(tuple(a0), 0.4),)))
    start = VectorSpike.normalized(a0 + [0.0, 0.1, 0.0], 0.4)
    u = SparseSignal((1.0,), (start,))
    out = slide(prob, u, y, 1e-4)
    a = np.asarray(out.atoms[0].a)
    assert abs(np.linalg.norm(a) - 1) <= 1e-12
    assert np.linalg.norm(a - a0) < np.linalg.norm(np.asarray(start.a) - a0) / 10
    assert objective(prob, out, y, 1e-4) < objective(prob, u, y, 1e-4)


def test_slide_keeps_tags():
    prob = ProblemInstance("demixing", lowpass_fourier_bank(20, amplitude=0.3))
    u = SparseSignal((1.0, 0.5), (TorusSpike(-1, 0.2), CanonicalSpike(4, 1)))
    y = forward_signal(prob, u) + 0.01
    out = slide(prob, u, y, 1e-3)
    assert {type(a) for a in out.atoms} <= {TorusSpike, CanonicalSpike}
    assert all(a.sign == -1 for a in out.atoms if isinstance(a, TorusSpike))
    assert CanonicalSpike(4, 1) in out.atoms


def test_solve_examples():
    prob = scalar_problem()
    res = solve(prob, np.zeros(prob.N), 0.1)
    assert len(res.u) == 0 and res.objective == 0 and res.converged
    y = forward_signal(prob, SparseSignal((1.0,), (TorusSpike(1, 0.3),)))
    # above the null threshold sup |<K* y, atom>| nothing is selected
    thr = _scan.scan_candidates(prob, y, 8192)[0].value
    res = solve(prob, y, thr * 1.01)
    assert len(res.u) == 0 and res.converged
    res = solve(prob, y, 1e-7)
    assert len(res.u) == 1 and abs(res.u.atoms[0].x - 0.3) <= 1e-6
    with pytest.raises(ValueError):
        solve(prob, y, 0.0)


@pytest.mark.parametrize(
    "family,bank,atoms",
    [
        ("scalar-blasso", lowpass_fourier_bank(20), [TorusSpike(1, 0.1), TorusSpike(-1, 0.45), TorusSpike(1, 0.8)]),
        ("demixing", lowpass_fourier_bank(20, amplitude=0.3), [TorusSpike(1, 0.1), TorusSpike(-1, 0.5), CanonicalSpike(7, 1)]),
        ("group-l2", lowpass_fourier_bank(40, 3, seed=0), [VectorSpike.normalized([1, 2, 0], 0.2), VectorSpike.normalized([0, -1, 1], 0.7)]),
    ],
)
def test_solve_invariants(family, bank, atoms):
    prob = ProblemInstance(family, bank)
    u0 = SparseSignal(tuple(np.linspace(0.6, 1.2, len(atoms))), tuple(atoms))
    y = forward_signal(prob, u0) + 0.002 * np.random.default_rng(1).standard_normal(prob.N)
    cfg = SolverConfig()
    lam = 1e-2
    res = solve(prob, y, lam, cfg)
    assert res.converged and res.certificate_sup <= 1 + cfg.gap_tol
    assert np.all(np.diff(res.history) <= 1e-12)
    cert = residual_certificate(prob, res.u, y, lam)
    fine = _scan.scan_candidates(prob, cert.p, 10 * cfg.lmo_grid)
    assert fine[0].value <= 1 + 10 * cfg.gap_tol
    for a in res.u.atoms:
        assert eta_eval(cert, a) == pytest.approx(1.0, abs=1e-6)


def test_solve_warm_start_and_determinism():
    prob = scalar_problem()
    y = forward_signal(prob, SparseSignal((1.0, 0.5), (TorusSpike(1, 0.1), TorusSpike(1, 0.6))))
    a = solve(prob, y, 1e-3)
    b = solve(prob, y, 1e-3)
    assert a.u == b.u and a.objective == b.objective
    warm = solve(prob, y, 1e-3, init=a.u)
    assert warm.objective == pytest.approx(a.objective, rel=1e-12)
    assert warm.iterations <= 2


def test_max_iters_returns_best_iterate():
    prob = scalar_problem()
    u0 = SparseSignal((1.0, 0.8, 0.6), (TorusSpike(1, 0.1), TorusSpike(-1, 0.4), TorusSpike(1, 0.7)))
    y = forward_signal(prob, u0)
    res = solve(prob, y, 1e-3, SolverConfig(max_outer_iters=1))
    assert not res.converged and res.iterations == 1
    assert res.objective == min(res.history)
