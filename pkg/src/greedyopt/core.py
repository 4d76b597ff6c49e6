"""Vectors, l_p norms, symmetric dictionaries and sparse combinations of atoms.

The ambient space is R^d with an l_p norm, 1 <= p <= inf.  A dictionary is a
finite set of unit-norm atoms closed under negation.  Approximants are stored
as sparse maps ``atom index -> coefficient`` and materialized on demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from greedyopt.errors import InputError

UNIT_NORM_TOL = 1e-12
DUPLICATE_TOL = 1e-12


def parse_norm_order(p) -> float:
    """Return ``p`` as a float in [1, inf], accepting the string ``"inf"``."""
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity"):
            return math.inf
        try:
            p = float(p)
        except ValueError as exc:
            raise InputError(f"invalid norm order {p!r}") from exc
    p = float(p)
    if math.isnan(p) or p < 1:
        raise InputError(f"norm order must satisfy p >= 1, got {p}")
    return p


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Convert ``v`` to a finite 1-d float array, optionally checking its length."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise InputError(f"expected a 1-d vector, got shape {arr.shape}")
    if arr.size == 0:
        raise InputError("vector must have positive dimension")
    if not np.all(np.isfinite(arr)):
        raise InputError("vector has non-finite coordinates")
    if dim is not None and arr.size != dim:
        raise InputError(f"dimension mismatch: expected {dim}, got {arr.size}")
    return arr


def norm(v, p=2.0) -> float:
    """l_p norm of ``v``; ``p = inf`` gives the max norm."""
    v = as_vector(v)
    p = parse_norm_order(p)
    a = np.abs(v)
    if math.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(np.sqrt(np.dot(a, a)))
    scale = a.max()
    if scale == 0:
        return 0.0
    return float(scale * np.sum((a / scale) ** p) ** (1.0 / p))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dictionary:
    """A finite symmetric dictionary of unit-norm atoms.

    ``atoms`` is an ``(N, d)`` read-only array; row ``i`` is atom ``i``.
    ``negation[i]`` is the index of ``-atoms[i]``.  ``spanning`` is False when
    the atoms do not span R^d, which only matters for unconstrained problems.
    """

    atoms: np.ndarray
    p: float
    labels: tuple[str, ...]
    negation: tuple[int, ...] = field(repr=False)
    spanning: bool = True

    def __post_init__(self):
        if self.atoms.ndim != 2 or self.atoms.shape[0] == 0:
            raise InputError("dictionary needs at least one atom")
        if len(self.labels) != self.atoms.shape[0]:
            raise InputError("one label per atom is required")

    def __len__(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def atom(self, i: int) -> np.ndarray:
        if not 0 <= i < len(self):
            raise InputError(f"atom index {i} out of range for {len(self)} atoms")
        return self.atoms[i]

    def check(self) -> dict[str, bool]:
        """Re-verify the structural invariants."""
        norms = np.array([norm(g, self.p) for g in self.atoms])
        unit = bool(np.all(np.abs(norms - 1.0) <= UNIT_NORM_TOL))
        closed = all(
            np.allclose(self.atoms[j], -self.atoms[i], rtol=0, atol=DUPLICATE_TOL)
            for i, j in enumerate(self.negation)
        )
        rank = int(np.linalg.matrix_rank(self.atoms))
        return {"unit_norm": unit, "negation_closed": closed, "spanning": rank == self.dim}

    def to_json(self) -> str:
        p = "inf" if math.isinf(self.p) else self.p
        return json.dumps({"p": p, "atoms": self.atoms.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Dictionary":
        try:
            obj = json.loads(text)
            atoms = obj["atoms"]
            p = obj["p"]
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"malformed dictionary JSON: {exc}") from exc
        return make_symmetric_dictionary(atoms, p)


def canonical_dictionary(d: int, p=2.0) -> Dictionary:
    """The 2d atoms {+e_1, -e_1, ..., +e_d, -e_d}."""
    if int(d) != d or d < 1:
        raise InputError(f"dimension must be a positive integer, got {d}")
    d = int(d)
    p = parse_norm_order(p)
    atoms = np.zeros((2 * d, d))
    labels = []
    negation = []
    for j in range(d):
        atoms[2 * j, j] = 1.0
        atoms[2 * j + 1, j] = -1.0
        labels += [f"+e{j + 1}", f"-e{j + 1}"]
        negation += [2 * j + 1, 2 * j]
    return Dictionary(_readonly(atoms), p, tuple(labels), tuple(negation), True)


def make_symmetric_dictionary(raw_atoms: Sequence, p=2.0) -> Dictionary:
    """Normalize ``raw_atoms`` to unit l_p norm and close the set under negation.

    Atoms that coincide within 1e-12 per coordinate are merged.  A raw atom
    ``a{i}`` gets its negation labelled ``-a{i}`` when that is not already present.
    """
    p = parse_norm_order(p)
    raw = [as_vector(a) for a in raw_atoms]
    if not raw:
        raise InputError("at least one atom is required")
    dim = raw[0].size
    atoms: list[np.ndarray] = []
    labels: list[str] = []

    def find(v):
        for k, a in enumerate(atoms):
            if np.all(np.abs(a - v) <= DUPLICATE_TOL):
                return k
        return -1

    for i, a in enumerate(raw):
        if a.size != dim:
            raise InputError(f"atom {i} has dimension {a.size}, expected {dim}")
        n = norm(a, p)
        if n == 0:
            raise InputError(f"atom {i} is zero")
        g = a / n
        if find(g) < 0:
            atoms.append(g)
            labels.append(f"a{i}")
    for k in range(len(atoms)):
        if find(-atoms[k]) < 0:
            atoms.append(-atoms[k])
            labels.append("-" + labels[k])
    negation = tuple(find(-a) for a in atoms)
    arr = np.vstack(atoms)
    spanning = int(np.linalg.matrix_rank(arr)) == dim
    return Dictionary(_readonly(arr), p, tuple(labels), negation, spanning)


@dataclass(frozen=True)
class Combination:
    """A sparse linear combination ``sum_i coefficients[i] * atoms[i]``."""

    coefficients: Mapping[int, float]
    dictionary: Dictionary

    @property
    def support(self) -> int:
        return sum(1 for c in self.coefficients.values() if c != 0)

    @property
    def l1_mass(self) -> float:
        return float(sum(abs(c) for c in self.coefficients.values()))

    def in_sigma(self, n: int) -> bool:
        return self.support <= n

    def in_LM(self, M: float) -> bool:
        return self.l1_mass <= M

    def in_A1(self) -> bool:
        return self.in_LM(1.0)

    def scaled(self, a: float) -> "Combination":
        return Combination({i: a * c for i, c in self.coefficients.items()}, self.dictionary)

    def __add__(self, other: "Combination") -> "Combination":
        if other.dictionary is not self.dictionary:
            raise InputError("cannot add combinations over different dictionaries")
        out = dict(self.coefficients)
        for i, c in other.coefficients.items():
            out[i] = out.get(i, 0.0) + c
        return Combination(out, self.dictionary)

    def vector(self) -> np.ndarray:
        return combine(self)


def combine(c: Combination) -> np.ndarray:
    """Materialize a combination as a dense vector (the empty combination is 0)."""
    D = c.dictionary
    out = np.zeros(D.dim)
    for i in sorted(c.coefficients):
        if not 0 <= i < len(D):
            raise InputError(f"atom index {i} out of range for {len(D)} atoms")
        out += c.coefficients[i] * D.atoms[i]
    return out
