"""Extreme points of the regularizer balls, sparse signals and the forward map.

Four atom variants cover the problem families:

* ``TorusSpike``     signed Dirac ``sign * delta_x`` (scalar BLASSO, demixing)
* ``CanonicalSpike`` ``sign * e_k`` in the direct spike component (demixing)
* ``VectorSpike``    ``a * delta_x`` with ``|a|_2 = 1`` (group BLASSO, l2)
* ``AxisSpike``      ``sign * e_k * delta_x`` (group BLASSO, l1)

Indices ``k`` are 1-based, as in ``e_1, ..., e_N``.  Coefficients of a
``SparseSignal`` are strictly positive; all signs and directions live in
the atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FamilyMismatchError, TooManyAtomsError
from .torus import torus_dist, wrap

FAMILIES = ("scalar-blasso", "demixing", "group-l2", "group-l1")

# positions closer than this with equal discrete tags are the same atom
ATOM_EQ_TOL = 1e-9


def _check_sign(s):
    if s not in (-1, 1):
        raise ValueError(f"sign must be -1 or +1, got {s}")
    return int(s)


@dataclass(frozen=True)
class TorusSpike:
    sign: int
    x: float

    def __post_init__(self):
        object.__setattr__(self, "sign", _check_sign(self.sign))
        object.__setattr__(self, "x", wrap(float(self.x)))


@dataclass(frozen=True)
class CanonicalSpike:
    k: int
    sign: int

    def __post_init__(self):
        object.__setattr__(self, "sign", _check_sign(self.sign))
        if self.k < 1:
            raise ValueError("canonical index k is 1-based")


@dataclass(frozen=True)
class VectorSpike:
    a: tuple
    x: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        n = np.linalg.norm(a)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"VectorSpike direction must have unit norm, got {n!r}")
        object.__setattr__(self, "a", tuple(float(v) for v in a))
        object.__setattr__(self, "x", wrap(float(self.x)))

    @classmethod
    def normalized(cls, a, x):
        a = np.asarray(a, dtype=float)
        return cls(tuple(a / np.linalg.norm(a)), x)


@dataclass(frozen=True)
class AxisSpike:
    k: int
    sign: int
    x: float

    def __post_init__(self):
        object.__setattr__(self, "sign", _check_sign(self.sign))
        object.__setattr__(self, "x", wrap(float(self.x)))
        if self.k < 1:
            raise ValueError("axis index k is 1-based")


Atom = TorusSpike | CanonicalSpike | VectorSpike | AxisSpike

_ALLOWED = {
    "scalar-blasso": (TorusSpike,),
    "demixing": (TorusSpike, CanonicalSpike),
    "group-l2": (VectorSpike,),
    "group-l1": (AxisSpike,),
}


def same_atom(u, v, tol=ATOM_EQ_TOL):
    """Equality up to ``tol`` on smooth parameters, exact on discrete tags."""
    if type(u) is not type(v):
        return False
    if isinstance(u, CanonicalSpike):
        return u == v
    if isinstance(u, TorusSpike):
        return u.sign == v.sign and torus_dist(u.x, v.x) <= tol
    if isinstance(u, AxisSpike):
        return u.k == v.k and u.sign == v.sign and torus_dist(u.x, v.x) <= tol
    # a VectorSpike is identified by its position for matching purposes
    return torus_dist(u.x, v.x) <= tol


@dataclass(frozen=True)
class SparseSignal:
    """Finite positive combination ``sum_i c_i * atom_i``."""

    coefs: tuple = ()
    atoms: tuple = ()

    def __post_init__(self):
        coefs = tuple(float(c) for c in self.coefs)
        atoms = tuple(self.atoms)
        if len(coefs) != len(atoms):
            raise ValueError("coefficient and atom counts differ")
        if any(not c > 0 for c in coefs):
            raise ValueError("sparse signal coefficients must be strictly positive")
        for i in range(len(atoms)):
            for j in range(i):
                if same_atom(atoms[i], atoms[j]):
                    raise ValueError(f"atoms {j} and {i} coincide: {atoms[i]}")
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        return cls(tuple(c for c, _ in pairs), tuple(a for _, a in pairs))

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(zip(self.coefs, self.atoms))

    def scaled(self, t):
        if t == 0:
            return SparseSignal()
        return SparseSignal(tuple(t * c for c in self.coefs), self.atoms)


class ProblemInstance:
    """Family tag plus kernel bank; defines ``K``, ``K*`` and ``R``.

    Grid evaluations of the bank are cached per grid size, so instances
    should be reused across solves.
    """

    def __init__(self, family, bank):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
        if family in ("scalar-blasso", "demixing") and bank.d != 1:
            raise ValueError(f"family {family} needs a scalar kernel bank (d = 1)")
        self.family = family
        self.bank = bank
        self._grid_cache = {}

    @property
    def N(self):
        return self.bank.N

    @property
    def d(self):
        return self.bank.d

    def __repr__(self):
        return f"ProblemInstance({self.family!r}, {self.bank.kind}, N={self.N}, d={self.d})"

    def check_atom(self, atom):
        if not isinstance(atom, _ALLOWED[self.family]):
            raise FamilyMismatchError(
                f"{type(atom).__name__} is not an extreme point of the {self.family} ball"
            )
        if isinstance(atom, CanonicalSpike) and atom.k > self.N:
            raise FamilyMismatchError(f"canonical index {atom.k} exceeds N={self.N}")
        if isinstance(atom, AxisSpike) and atom.k > self.d:
            raise FamilyMismatchError(f"axis index {atom.k} exceeds d={self.d}")
        if isinstance(atom, VectorSpike) and len(atom.a) != self.d:
            raise FamilyMismatchError(f"direction has length {len(atom.a)}, expected d={self.d}")

    def grid(self, size):
        """Uniform grid and bank values/derivatives on it, shape ``(size, N, d)`` each."""
        if size not in self._grid_cache:
            x = np.arange(size) / size
            self._grid_cache[size] = (x, *(self.bank.evaluate(x, o) for o in (0, 1, 2)))
        return self._grid_cache[size]


def forward_atom(prob, atom):
    """Image ``K atom`` in R^N."""
    prob.check_atom(atom)
    if isinstance(atom, CanonicalSpike):
        out = np.zeros(prob.N)
        out[atom.k - 1] = atom.sign
        return out
    phi = prob.bank.evaluate([atom.x], 0)[0]
    if isinstance(atom, TorusSpike):
        return atom.sign * phi[:, 0]
    if isinstance(atom, AxisSpike):
        return atom.sign * phi[:, atom.k - 1]
    return phi @ np.asarray(atom.a)


def dictionary(prob, atoms):
    """N x n matrix whose columns are the atom images."""
    if not atoms:
        return np.zeros((prob.N, 0))
    return np.column_stack([forward_atom(prob, a) for a in atoms])


def forward_signal(prob, u):
    out = np.zeros(prob.N)
    for c, atom in u:
        out += c * forward_atom(prob, atom)
    return out


def regularizer_value(prob, u):
    """``R(u)``: every atom has unit norm, so this is the coefficient sum."""
    for atom in u.atoms:
        prob.check_atom(atom)
    return float(sum(u.coefs))


@dataclass
class GramCheck:
    independent: bool
    rank: int
    singular_values: np.ndarray


def gram_independence_check(prob, u, rtol=1e-10):
    n = len(u)
    if n > prob.N:
        raise TooManyAtomsError(f"{n} atoms cannot be independent in R^{prob.N}")
    if n == 0:
        return GramCheck(True, 0, np.zeros(0))
    s = np.linalg.svd(dictionary(prob, u.atoms), compute_uv=False)
    rank = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    return GramCheck(rank == n, rank, s)
