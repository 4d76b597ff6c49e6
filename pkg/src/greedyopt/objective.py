"""Objective oracles: counted evaluation, optional gradients, bounded corruption.

Every query through :meth:`Oracle.evaluate` is counted.  :meth:`Oracle.true_value`
is an uncounted audit channel used only by traces and tests, never by the
algorithms themselves.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from greedyopt.core import as_vector, norm, parse_norm_order
from greedyopt.errors import InputError, UnsupportedCapabilityError

QUANTUM = 1e-12


class Oracle:
    """Counted access to a convex function on R^dim.

    Subclasses implement ``_f`` and optionally ``_f_batch`` and ``_grad``.
    """

    delta = 0.0
    name = "oracle"

    def __init__(self, dim: int):
        if int(dim) != dim or dim < 1:
            raise InputError(f"dimension must be a positive integer, got {dim}")
        self.dim = int(dim)
        self.eval_count = 0
        self.grad_count = 0
        self._lock = threading.Lock()

    # -- hooks -----------------------------------------------------------
    def _f(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def _f_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self._f(x) for x in X])

    _grad: Callable | None = None

    # -- public API --------------------------------------------------------
    @property
    def has_gradient(self) -> bool:
        return self._grad is not None

    def _count(self, n: int = 1, attr: str = "eval_count"):
        with self._lock:
            setattr(self, attr, getattr(self, attr) + n)

    def evaluate(self, x) -> float:
        x = as_vector(x, self.dim)
        self._count()
        return float(self._f(x))

    __call__ = evaluate

    def evaluate_batch(self, X) -> np.ndarray:
        """Evaluate every row of ``X``; counts one evaluation per row."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise InputError(f"expected shape (n, {self.dim}), got {X.shape}")
        self._count(X.shape[0])
        return np.asarray(self._f_batch(X), dtype=float)

    def gradient(self, x) -> np.ndarray:
        if self._grad is None:
            raise UnsupportedCapabilityError(f"{self.name} has no gradient")
        x = as_vector(x, self.dim)
        self._count(1, "grad_count")
        return np.asarray(self._grad(x), dtype=float)

    def true_value(self, x) -> float:
        """Exact, uncounted value (audit only)."""
        return float(self._f(as_vector(x, self.dim)))

    def smoothness(self, p=2.0) -> tuple[float, float] | None:
        """Return ``(q, gamma)`` with rho(E, u) <= gamma u^q in the l_p norm, if known."""
        return None

    def reset_counts(self):
        with self._lock:
            self.eval_count = 0
            self.grad_count = 0


class FunctionOracle(Oracle):
    """Oracle built from plain callables."""

    def __init__(self, dim, value, gradient=None, smoothness=None, name="function"):
        super().__init__(dim)
        self._value = value
        self.name = name
        if gradient is not None:
            self._grad = gradient
        self._smoothness = smoothness

    def _f(self, x):
        return self._value(x)

    def smoothness(self, p=2.0):
        if self._smoothness is None:
            return None
        return self._smoothness(parse_norm_order(p)) if callable(self._smoothness) else self._smoothness


def _norm_conversion(dim: int, q: float, p: float) -> float:
    # sup of ||y||_q^q over ||y||_p = 1
    if math.isinf(p):
        return float(dim)
    return float(dim ** max(0.0, 1.0 - q / p))


class Quadratic(Oracle):
    """E(x) = ||x - center||_2^2."""

    name = "quadratic"

    def __init__(self, center):
        self.center = as_vector(center).copy()
        super().__init__(self.center.size)
        self.minimizer = self.center.copy()
        self.minimum = 0.0

    def _f(self, x):
        r = x - self.center
        return float(np.dot(r, r))

    def _f_batch(self, X):
        R = X - self.center
        return np.einsum("ij,ij->i", R, R)

    def _grad(self, x):
        return 2.0 * (x - self.center)

    def smoothness(self, p=2.0):
        return 2.0, _norm_conversion(self.dim, 2.0, parse_norm_order(p))


class PowerDistance(Oracle):
    """E(x) = sum_i |x_i - center_i|^q with 1 < q <= 2."""

    name = "power"

    def __init__(self, center, q: float):
        if not 1 < q <= 2:
            raise InputError(f"q must lie in (1, 2], got {q}")
        self.center = as_vector(center).copy()
        self.q = float(q)
        super().__init__(self.center.size)
        self.minimizer = self.center.copy()
        self.minimum = 0.0

    def _f(self, x):
        return float(np.sum(np.abs(x - self.center) ** self.q))

    def _f_batch(self, X):
        return np.sum(np.abs(X - self.center) ** self.q, axis=1)

    def _grad(self, x):
        r = x - self.center
        return self.q * np.sign(r) * np.abs(r) ** (self.q - 1)

    def smoothness(self, p=2.0):
        # scalar Clarkson inequality |a+b|^q + |a-b|^q <= 2|a|^q + 2|b|^q, q <= 2
        return self.q, _norm_conversion(self.dim, self.q, parse_norm_order(p))


class Logistic(Oracle):
    """Ridge-regularized logistic loss (1/n) sum log(1 + exp(-b_i <a_i, x>)) + (ridge/2)||x||^2."""

    name = "logistic"

    def __init__(self, A, b, ridge: float = 0.1):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise InputError("A must be (n, d) and b must be (n,)")
        if ridge <= 0:
            raise InputError("ridge must be positive so that level sets are bounded")
        super().__init__(A.shape[1])
        self.A, self.b, self.ridge = A, b, float(ridge)
        self._hess_bound = np.linalg.norm(A, 2) ** 2 / (4 * A.shape[0]) + self.ridge

    @classmethod
    def random(cls, n: int, d: int, seed: int, ridge: float = 0.1):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, d))
        w = rng.standard_normal(d)
        b = np.where(A @ w + 0.5 * rng.standard_normal(n) >= 0, 1.0, -1.0)
        return cls(A, b, ridge)

    def _f(self, x):
        z = -self.b * (self.A @ x)
        return float(np.mean(np.logaddexp(0.0, z)) + 0.5 * self.ridge * np.dot(x, x))

    def _f_batch(self, X):
        Z = -(X @ self.A.T) * self.b
        return np.mean(np.logaddexp(0.0, Z), axis=1) + 0.5 * self.ridge * np.einsum("ij,ij->i", X, X)

    def _grad(self, x):
        z = -self.b * (self.A @ x)
        s = 0.5 * (1.0 + np.tanh(0.5 * z))  # sigmoid(z), overflow-free
        return -(self.A.T @ (self.b * s)) / self.A.shape[0] + self.ridge * x

    def smoothness(self, p=2.0):
        # second difference <= H u^2 ||y||_2^2 with H the Hessian bound
        return 2.0, 0.5 * self._hess_bound * _norm_conversion(self.dim, 2.0, parse_norm_order(p))


def hash_noise(seed: int, x: np.ndarray) -> float:
    """Deterministic pseudo-random number in [-1, 1] keyed on (seed, quantized x)."""
    q = np.rint(np.asarray(x, dtype=float) / QUANTUM) + 0.0  # +0.0 folds -0 into 0
    h = hashlib.blake2b(q.tobytes(), digest_size=8, key=int(seed).to_bytes(8, "little", signed=True))
    u = int.from_bytes(h.digest(), "little") / 2.0**64
    return 2.0 * u - 1.0


class CorruptedOracle(Oracle):
    """Values of ``base`` perturbed by at most ``delta``; no gradient access."""

    def __init__(self, base: Oracle, delta: float, seed: int, noise=None):
        super().__init__(base.dim)
        self.base = base
        self.delta = float(delta)
        self.seed = int(seed)
        self.name = f"{base.name}+corrupt"
        self._noise = noise or hash_noise

    def _f(self, x):
        r = float(self._noise(self.seed, x))
        r = min(1.0, max(-1.0, r))
        return self.base._f(x) + self.delta * r

    def true_value(self, x):
        return self.base.true_value(x)

    def smoothness(self, p=2.0):
        return self.base.smoothness(p)


def corrupt(o: Oracle, delta: float, seed: int, noise=None) -> CorruptedOracle:
    """Wrap ``o`` so each query returns E(x) + delta * r(x) with r(x) in [-1, 1].

    ``noise(seed, x)`` overrides the default keyed hash; it must be deterministic.
    """
    if not delta > 0:
        raise InputError(f"corruption budget must be positive, got {delta}")
    if o.delta > 0:
        raise InputError("oracle is already corrupted")
    return CorruptedOracle(o, delta, seed, noise)


@dataclass(frozen=True)
class LevelSet:
    """The sublevel set {x : E(x) <= E(0) + C}."""

    C: float
    base_value: float

    @classmethod
    def of(cls, o: Oracle, C: float = 0.0) -> "LevelSet":
        if C < 0:
            raise InputError("C must be nonnegative")
        return cls(float(C), o.evaluate(np.zeros(o.dim)))

    def contains(self, o: Oracle, x) -> bool:
        return o.evaluate(x) <= self.base_value + self.C


@dataclass
class SmoothnessEstimate:
    u_grid: list[float]
    rho_values: list[float]
    sample_set: list[np.ndarray] = field(repr=False)


def estimate_modulus(o: Oracle, sample: Sequence, directions: Sequence, u: float, p=2.0) -> float:
    """Lower bound for the modulus of smoothness at scale ``u`` over a finite sample.

    Returns max over x in ``sample`` and y in ``directions`` of
    (1/2)|E(x + u y) + E(x - u y) - 2 E(x)|.
    """
    if o.delta > 0:
        raise InputError("modulus estimation needs an uncorrupted oracle")
    if len(sample) == 0:
        raise InputError("empty sample")
    if not u > 0:
        raise InputError("u must be positive")
    p = parse_norm_order(p)
    dirs = [as_vector(y, o.dim) for y in directions]
    if not dirs:
        raise InputError("no directions given")
    for y in dirs:
        if abs(norm(y, p) - 1.0) > 1e-9:
            raise InputError("directions must have unit norm")
    best = 0.0
    for x in sample:
        x = as_vector(x, o.dim)
        fx = o.evaluate(x)
        for y in dirs:
            val = 0.5 * abs(o.evaluate(x + u * y) + o.evaluate(x - u * y) - 2.0 * fx)
            best = max(best, val)
    return best


def unit_directions(dim: int, n_random: int, p=2.0, seed: int = 0) -> list[np.ndarray]:
    """Coordinate directions plus ``n_random`` random directions, all unit in l_p."""
    p = parse_norm_order(p)
    rng = np.random.default_rng(seed)
    out = [np.eye(dim)[i] for i in range(dim)]
    for _ in range(n_random):
        y = rng.standard_normal(dim)
        out.append(y / norm(y, p))
    return out


def modulus_profile(o: Oracle, sample, directions, u_grid, p=2.0) -> SmoothnessEstimate:
    rho = [estimate_modulus(o, sample, directions, u, p) for u in u_grid]
    return SmoothnessEstimate(list(u_grid), rho, [as_vector(x) for x in sample])


# -- registry used by the experiment runner --------------------------------

def _build_quadratic(params):
    return Quadratic(params["center"])


def _build_power(params):
    return PowerDistance(params["center"], params.get("q", 1.5))


def _build_logistic(params):
    return Logistic.random(params.get("n", 50), params["dim"], params.get("seed", 0), params.get("ridge", 0.1))


PROBLEMS = {
    "quadratic": (_build_quadratic, "||x - center||_2^2; params: center (list)"),
    "power": (_build_power, "sum |x_i - center_i|^q, 1<q<=2; params: center (list), q"),
    "logistic": (_build_logistic, "ridge logistic loss on seeded Gaussian data; params: dim, n, seed, ridge"),
}


def make_problem(name: str, params: dict) -> Oracle:
    if name not in PROBLEMS:
        raise InputError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}")
    try:
        return PROBLEMS[name][0](params)
    except KeyError as exc:
        raise InputError(f"problem {name!r} is missing parameter {exc}") from exc
