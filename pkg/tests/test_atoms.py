import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from esrr.atoms import (
    AxisSpike,
    CanonicalSpike,
    ProblemInstance,
    SparseSignal,
    TorusSpike,
    VectorSpike,
    dictionary,
    forward_atom,
    forward_signal,
    gram_independence_check,
    regularizer_value,
    same_atom,
)
from esrr.errors import FamilyMismatchError, TooManyAtomsError
from esrr.serialize import atom_from_dict, atom_to_dict, signal_from_list, signal_to_list
from esrr.torus import FourierBank, lowpass_fourier_bank, random_fourier_bank


def test_atom_invariants():
    with pytest.raises(ValueError):
        TorusSpike(0, 0.1)
    with pytest.raises(ValueError):
        CanonicalSpike(0, 1)
    with pytest.raises(ValueError):
        VectorSpike((1.0, 1.0), 0.2)
    with pytest.raises(ValueError):
        AxisSpike(0, 1, 0.2)
    v = VectorSpike.normalized([3.0, 4.0], 1.3)
    assert abs(np.linalg.norm(v.a) - 1) <= 1e-12
    assert 0 <= v.x < 1


def test_signal_invariants():
    with pytest.raises(ValueError):
        SparseSignal((1.0, -0.5), (TorusSpike(1, 0.1), TorusSpike(1, 0.5)))
    with pytest.raises(ValueError):
        SparseSignal((1.0, 1.0), (TorusSpike(1, 0.1), TorusSpike(1, 0.1 + 1e-12)))
    # same position, opposite signs are distinct atoms
    SparseSignal((1.0, 1.0), (TorusSpike(1, 0.1), TorusSpike(-1, 0.1)))
    assert same_atom(TorusSpike(1, 0.0), TorusSpike(1, 1 - 1e-11))


def test_forward_examples():
    prob = ProblemInstance("demixing", lowpass_fourier_bank(5))
    assert np.array_equal(forward_atom(prob, CanonicalSpike(3, 1)), [0, 0, 1, 0, 0])
    scal = ProblemInstance("scalar-blasso", FourierBank([1], [0.0]))
    assert forward_atom(scal, TorusSpike(1, 0.0))[0] == 1.0
    grp = ProblemInstance("group-l2", FourierBank([[1, 1]], [[0.0, -np.pi / 2]]))
    assert forward_atom(grp, VectorSpike((0.0, 1.0), 0.25))[0] == pytest.approx(1.0, abs=1e-15)


def test_forward_matches_quadrature_of_narrow_bump():
    # a narrow normalised bump integrates phi to its point value
    grp = ProblemInstance("group-l2", lowpass_fourier_bank(6, 2, seed=4))
    atom = VectorSpike.normalized([0.6, -0.8], 0.31)
    s = 1e-4
    x = np.linspace(atom.x - 8 * s, atom.x + 8 * s, 4001)
    w = np.exp(-((x - atom.x) ** 2) / (2 * s**2))
    w /= w.sum()
    phi = grp.bank.evaluate(x, 0) @ np.asarray(atom.a)
    integral = np.sum(phi * w[:, None], axis=0)
    assert np.allclose(integral, forward_atom(grp, atom), atol=1e-6)


def test_family_mismatch():
    prob = ProblemInstance("scalar-blasso", lowpass_fourier_bank(5))
    with pytest.raises(FamilyMismatchError):
        forward_atom(prob, CanonicalSpike(1, 1))
    with pytest.raises(FamilyMismatchError):
        forward_atom(ProblemInstance("demixing", lowpass_fourier_bank(5)), CanonicalSpike(6, 1))
    l1 = ProblemInstance("group-l1", lowpass_fourier_bank(5, 2, seed=0))
    with pytest.raises(FamilyMismatchError):
        forward_atom(l1, AxisSpike(3, 1, 0.1))
    with pytest.raises(ValueError):
        ProblemInstance("demixing", lowpass_fourier_bank(5, 2, seed=0))


def test_forward_signal_examples():
    prob = ProblemInstance("group-l1", random_fourier_bank(8, 2, seed=2))
    assert np.array_equal(forward_signal(prob, SparseSignal((), ())), np.zeros(8))
    a = AxisSpike(2, -1, 0.4)
    assert np.allclose(forward_signal(prob, SparseSignal((2.0,), (a,))), 2 * forward_atom(prob, a))
    b = AxisSpike(1, 1, 0.7)
    u = SparseSignal((0.3, 1.7), (a, b))
    assert np.allclose(forward_signal(prob, u), dictionary(prob, [a, b]) @ [0.3, 1.7], atol=1e-15)


def test_forward_linearity_random_pairs():
    prob = ProblemInstance("demixing", random_fourier_bank(12, seed=5))
    rng = np.random.default_rng(0)
    for _ in range(100):
        u = SparseSignal((rng.uniform(0.1, 2),), (TorusSpike(1, rng.uniform()),))
        v = SparseSignal((rng.uniform(0.1, 2),), (CanonicalSpike(int(rng.integers(1, 13)), -1),))
        both = SparseSignal(u.coefs + v.coefs, u.atoms + v.atoms)
        diff = forward_signal(prob, both) - forward_signal(prob, u) - forward_signal(prob, v)
        assert np.max(np.abs(diff)) <= 1e-12


@given(st.floats(1e-6, 10))
def test_regularizer_homogeneous(c):
    prob = ProblemInstance("demixing", lowpass_fourier_bank(5))
    u = SparseSignal((1.5, 0.5), (TorusSpike(1, 0.2), CanonicalSpike(2, -1)))
    assert regularizer_value(prob, u) == 2.0
    assert regularizer_value(prob, u.scaled(c)) == pytest.approx(c * 2.0)
    assert regularizer_value(prob, SparseSignal((), ())) == 0
    grp = ProblemInstance("group-l2", lowpass_fourier_bank(5, 2, seed=0))
    assert regularizer_value(grp, SparseSignal((2.0,), (VectorSpike((0.0, 1.0), 0.1),))) == 2.0


def test_gram_check_examples():
    prob = ProblemInstance("demixing", lowpass_fourier_bank(4))
    u = SparseSignal((1.0, 1.0), (CanonicalSpike(1, 1), CanonicalSpike(2, 1)))
    assert gram_independence_check(prob, u).independent
    dup = ProblemInstance("scalar-blasso", FourierBank([1, 1, 1], [0.0, 0.0, 0.0]))
    g = gram_independence_check(dup, SparseSignal((1.0, 1.0), (TorusSpike(1, 0.1), TorusSpike(1, 0.3))))
    assert not g.independent and g.rank == 1
    rnd = ProblemInstance("scalar-blasso", random_fourier_bank(20, seed=0))
    u3 = SparseSignal((1.0, 1.0, 1.0), tuple(TorusSpike(1, x) for x in (0.1, 0.4, 0.7)))
    g = gram_independence_check(rnd, u3)
    assert g.independent
    A = dictionary(rnd, u3.atoms)
    assert np.linalg.det(A.T @ A) > 0
    with pytest.raises(TooManyAtomsError):
        gram_independence_check(prob, SparseSignal((1.0,) * 5, tuple(CanonicalSpike(k, 1) for k in (1, 2, 3, 4)) + (CanonicalSpike(1, -1),)))


def test_serialize_roundtrip():
    atoms = [
        TorusSpike(-1, 0.3),
        CanonicalSpike(4, 1),
        VectorSpike.normalized([1.0, 2.0, 2.0], 0.9),
        AxisSpike(2, -1, 0.05),
    ]
    for a in atoms:
        assert atom_from_dict(atom_to_dict(a)) == a
    u = SparseSignal((0.5, 1.25), (atoms[0], atoms[1]))
    assert signal_from_list(signal_to_list(u)) == u
    with pytest.raises(ValueError):
        atom_from_dict({"type": "blob"})
