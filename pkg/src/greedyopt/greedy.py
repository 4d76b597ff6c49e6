"""Greedy algorithms that build sparse approximate minimizers from dictionary atoms.

All runners start from G_0 = 0 and keep G_m as a sparse coefficient map that is
updated algebraically.  Passing ``delta > 0`` runs the error-tolerant variant:
objective values are corrupted by at most ``delta`` (seeded), the inner searches
use guard bands, and each step records its effective error ``delta_eff``.

    rega    relaxed step (1 - lam) G + lam g, best (atom, lam) by value
    wrga    relaxed step along the gradient-selected atom
    egafr   free step alpha G + beta g, best (atom, alpha, beta) by value
    wgafr   free step (1 - w) G + lam g along the gradient-selected atom
    ega-c   fixed step G + c_m g with a prescribed coefficient schedule
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from greedyopt.core import Combination, Dictionary, combine
from greedyopt.errors import InputError, NonCoerciveError
from greedyopt.linesearch import minimize_plane, minimize_unit_interval_corrupted
from greedyopt.objective import Oracle, corrupt

PRUNE_TOL = 1e-15
RELAXED = ("rega", "wrga")
FREE = ("egafr", "wgafr")
ALGORITHMS = ("rega", "egafr", "ega-c", "wrga", "wgafr")


@dataclass
class TraceRecord:
    iteration: int
    atom_index: int
    objective: float
    observed: float
    coefficients: dict[int, float]
    cumulative_evals: int
    eval_budget: int
    delta_eff: float
    lam: float | None = None
    alpha: float | None = None
    beta: float | None = None
    w: float | None = None

    @property
    def l1_mass(self) -> float:
        return float(sum(abs(c) for c in self.coefficients.values()))

    @property
    def support(self) -> int:
        return sum(1 for c in self.coefficients.values() if c != 0)


@dataclass
class GreedyTrace:
    algorithm: str
    dictionary: Dictionary
    initial_value: float
    records: list[TraceRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    final_gap: float | None = None
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def combination(self, k: int) -> Combination:
        """G_k as a :class:`Combination` (k = 0 is the empty combination)."""
        if k == 0:
            return Combination({}, self.dictionary)
        return Combination(dict(self.records[k - 1].coefficients), self.dictionary)

    def point(self, k: int) -> np.ndarray:
        return combine(self.combination(k))


@dataclass(frozen=True)
class CoefficientSchedule:
    """c_k = c * k^-s for k = 1, 2, ..., built for smoothness (q, gamma)."""

    c: float
    s: float
    q: float
    gamma: float
    length: int | None = None
    zeta_bound: float = math.nan

    def __getitem__(self, k: int) -> float:
        if k < 1:
            raise InputError("schedule is indexed from 1")
        if self.length is not None and k > self.length:
            raise InputError(f"schedule exhausted: asked for c_{k}, length {self.length}")
        return self.c * k ** (-self.s)

    def budget_check(self) -> float:
        """gamma * c^q * (upper bound of sum_k k^(-s q)); at most 1 for a valid schedule."""
        return self.gamma * self.c**self.q * self.zeta_bound


def zeta_upper_bound(a: float, n_terms: int = 10**6) -> float:
    """Upper bound on sum_{k>=1} k^-a (a > 1): partial sum plus integral tail."""
    if not a > 1:
        raise InputError("series diverges for a <= 1")
    k = np.arange(1, n_terms + 1, dtype=float)
    partial = float(np.sum(k[::-1] ** -a))  # small terms first
    tail = n_terms ** (1.0 - a) / (a - 1.0)
    return (partial + tail) * (1.0 + 1e-12)


def make_coefficients_cs(q: float, gamma: float, length: int | None = None) -> CoefficientSchedule:
    """Schedule with s = 2/(1+q) and the largest c <= 1 with gamma c^q sum k^(-sq) <= 1."""
    if not 1 < q <= 2:
        raise InputError(f"q must lie in (1, 2], got {q}")
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    s = 2.0 / (1.0 + q)
    Z = zeta_upper_bound(s * q)
    c = min(1.0, (gamma * Z) ** (-1.0 / q))
    while gamma * c**q * Z > 1.0:  # absorb rounding in the power
        c = math.nextafter(c, 0.0)
    sched = CoefficientSchedule(c=c, s=s, q=float(q), gamma=float(gamma), length=length, zeta_bound=Z)
    assert sched.budget_check() <= 1.0
    return sched


@dataclass(frozen=True)
class WeaknessSchedule:
    t: float = 1.0

    def __post_init__(self):
        if not 0 < self.t <= 1:
            raise InputError(f"weakness t must lie in (0, 1], got {self.t}")


def select_atom_gradient(o: Oracle, D: Dictionary, G, t=1.0, mode: str = "relative") -> int:
    """Index of the atom maximizing <-E'(G), g - G> (relative) or <-E'(G), g> (absolute).

    The exact maximizer over a finite dictionary satisfies the weakness
    condition for every t in (0, 1]; ties go to the lowest index.
    """
    if not isinstance(t, WeaknessSchedule):
        t = WeaknessSchedule(float(t))
    if mode not in ("relative", "absolute"):
        raise InputError(f"mode must be 'relative' or 'absolute', got {mode!r}")
    G = np.asarray(G, dtype=float)
    descent = -o.gradient(G)
    scores = D.atoms @ descent
    if mode == "relative":
        scores = scores - float(descent @ G)
    return int(np.argmax(scores))


# -- shared machinery ---------------------------------------------------------

def _value_oracle(o: Oracle, delta, seed):
    """Return (oracle used for values, corruption bound)."""
    if o.delta > 0:
        if delta not in (None, 0, 0.0, o.delta):
            raise InputError("oracle is already corrupted with a different delta")
        return o, o.delta
    if not delta:
        return o, 0.0
    if delta < 0:
        raise InputError(f"delta must be nonnegative, got {delta}")
    if seed is None:
        raise InputError("a seed is required when delta > 0")
    return corrupt(o, float(delta), int(seed)), float(delta)


def _check_common(D: Dictionary, o: Oracle, iterations, m_ls=None):
    if len(D) == 0:
        raise InputError("empty dictionary")
    if D.dim != o.dim:
        raise InputError(f"dictionary dimension {D.dim} != oracle dimension {o.dim}")
    if int(iterations) != iterations or iterations < 0:
        raise InputError("iterations must be a nonnegative integer")
    if m_ls is not None and (int(m_ls) != m_ls or m_ls < 1):
        raise InputError("m_ls must be a positive integer")


def _update(coeffs: dict[int, float], keep: float, i: int, add: float) -> dict[int, float]:
    out = {j: keep * c for j, c in coeffs.items()}
    out[i] = out.get(i, 0.0) + add
    return {j: c for j, c in out.items() if abs(c) >= PRUNE_TOL}


class _Runner:
    def __init__(self, name, o, D, delta, seed, config, early_stop):
        self.vo, self.delta = _value_oracle(o, delta, seed)
        self.exact = o
        self.D = D
        self.coeffs: dict[int, float] = {}
        self.G = np.zeros(D.dim)
        self.start = self.vo.eval_count
        self.budget = 0
        self.early_stop = early_stop
        self.stall = 0
        self.prev_observed = None
        self.trace = GreedyTrace(name, D, o.true_value(self.G), config=dict(config, delta=self.delta))

    def record(self, m, i, observed, delta_eff, step_budget, **params):
        self.budget += step_budget
        self.G = combine(Combination(self.coeffs, self.D))
        rec = TraceRecord(
            iteration=m,
            atom_index=i,
            objective=self.exact.true_value(self.G),
            observed=float(observed),
            coefficients=dict(self.coeffs),
            cumulative_evals=self.vo.eval_count - self.start,
            eval_budget=self.budget,
            delta_eff=float(delta_eff),
            **params,
        )
        self.trace.records.append(rec)
        if self.early_stop and self.prev_observed is not None:
            self.stall = self.stall + 1 if self.prev_observed - observed < 1e-14 else 0
        self.prev_observed = observed
        if self.stall >= 5:
            self.trace.stopped_early = True
            return False
        return True


def _lambda_search(vo, G, g, m_ls, delta):
    def f(lam):
        return vo.evaluate((1.0 - lam) * G + lam * g)

    return minimize_unit_interval_corrupted(f, m_ls, delta)


def rega_step(vo: Oracle, D: Dictionary, G, m_ls: int = 30, delta: float = 0.0):
    """One relaxed step from ``G``: returns (observed value, atom, lam, worst line-search certificate)."""
    G = np.asarray(G, dtype=float)
    best = None
    worst_cert = 0.0
    for i, g in enumerate(D.atoms):
        res = _lambda_search(vo, G, g, m_ls, delta)
        worst_cert = max(worst_cert, res.certified_gap)
        if best is None or res.f_best < best[0]:
            best = (res.f_best, i, res.x_best)
    return best + (worst_cert,)


def wrga_step(o: Oracle, vo: Oracle, D: Dictionary, G, m_ls: int = 30, delta: float = 0.0, t=1.0):
    """One relaxed step along the gradient-selected atom (gradient from ``o``, values from ``vo``)."""
    G = np.asarray(G, dtype=float)
    i = select_atom_gradient(o, D, G, t, "relative")
    res = _lambda_search(vo, G, D.atoms[i], m_ls, delta)
    return res.f_best, i, res.x_best, res.certified_gap


# -- algorithms ---------------------------------------------------------------

def rega_run(o: Oracle, D: Dictionary, iterations: int, delta: float = 0.0, m_ls: int = 30,
             seed: int | None = None, early_stop: bool = False) -> GreedyTrace:
    """Relaxed greedy steps G_m = (1 - lam) G_{m-1} + lam g with the best (g, lam) by value."""
    _check_common(D, o, iterations, m_ls)
    run = _Runner("rega", o, D, delta, seed, {"iterations": iterations, "m_ls": m_ls, "seed": seed}, early_stop)
    per_search = 3 + 2 * m_ls
    for m in range(1, iterations + 1):
        value, i, lam, worst_cert = rega_step(run.vo, D, run.G, m_ls, run.delta)
        run.coeffs = _update(run.coeffs, 1.0 - lam, i, lam)
        if not run.record(m, i, value, worst_cert + 2 * run.delta, len(D) * per_search, lam=lam):
            break
    return run.trace


def wrga_run(o: Oracle, D: Dictionary, iterations: int, t: float = 1.0, delta: float = 0.0, m_ls: int = 30,
             seed: int | None = None, early_stop: bool = False) -> GreedyTrace:
    """Relaxed steps along the atom chosen by the gradient; lam by certified line search."""
    _check_common(D, o, iterations, m_ls)
    weakness = WeaknessSchedule(t)
    run = _Runner("wrga", o, D, delta, seed, {"iterations": iterations, "m_ls": m_ls, "t": t, "seed": seed},
                  early_stop)
    for m in range(1, iterations + 1):
        value, i, lam, cert = wrga_step(o, run.vo, D, run.G, m_ls, run.delta, weakness)
        run.coeffs = _update(run.coeffs, 1.0 - lam, i, lam)
        if not run.record(m, i, value, cert, 3 + 2 * m_ls, lam=lam):
            break
    return run.trace


def _plane_budget(res, m):
    # per attempt: 3x3 Lipschitz grid, the box search, up to four boundary probes
    return res.attempts * ((3 + 2 * m) ** 2 + 9 + 4)


def egafr_run(o: Oracle, D: Dictionary, iterations: int, delta: float = 0.0, m_ls: int = 20,
              initial_half_width: float = 1.0, seed: int | None = None, early_stop: bool = False) -> GreedyTrace:
    """Free-relaxation steps G_m = alpha G_{m-1} + beta g with the best (g, alpha, beta) by value.

    The (alpha, beta) search is centred at (1, 0), i.e. at G_{m-1} itself.
    """
    _check_common(D, o, iterations, m_ls)
    run = _Runner("egafr", o, D, delta, seed,
                  {"iterations": iterations, "m_ls": m_ls, "half_width": initial_half_width, "seed": seed},
                  early_stop)
    for m in range(1, iterations + 1):
        best = None
        worst_cert = 0.0
        budget = 0
        G = run.G
        for i, g in enumerate(D.atoms):
            def f(z, g=g):
                return run.vo.evaluate(z[0] * G + z[1] * g)

            res = _plane_search(f, m_ls, initial_half_width, (1.0, 0.0), run.delta, D.labels[i])
            worst_cert = max(worst_cert, res.certified_gap)
            budget += _plane_budget(res, m_ls)
            if best is None or res.f_best < best[0]:
                best = (res.f_best, i, res.x_best)
        value, i, (alpha, beta) = best
        run.coeffs = _update(run.coeffs, alpha, i, beta)
        if not run.record(m, i, value, worst_cert + 2 * run.delta, budget, alpha=alpha, beta=beta):
            break
    return run.trace


def wgafr_run(o: Oracle, D: Dictionary, iterations: int, t: float = 1.0, delta: float = 0.0, m_ls: int = 20,
              initial_half_width: float = 1.0, seed: int | None = None, early_stop: bool = False) -> GreedyTrace:
    """Steps G_m = (1 - w) G_{m-1} + lam g along the gradient-selected atom, (w, lam) free."""
    _check_common(D, o, iterations, m_ls)
    weakness = WeaknessSchedule(t)
    run = _Runner("wgafr", o, D, delta, seed,
                  {"iterations": iterations, "m_ls": m_ls, "t": t, "half_width": initial_half_width, "seed": seed},
                  early_stop)
    for m in range(1, iterations + 1):
        i = select_atom_gradient(o, D, run.G, weakness, "absolute")
        G, g = run.G, D.atoms[i]

        def f(z):
            return run.vo.evaluate((1.0 - z[0]) * G + z[1] * g)

        res = _plane_search(f, m_ls, initial_half_width, (0.0, 0.0), run.delta, D.labels[i])
        w, lam = res.x_best
        run.coeffs = _update(run.coeffs, 1.0 - w, i, lam)
        if not run.record(m, i, res.f_best, res.certified_gap, _plane_budget(res, m_ls),
                          alpha=1.0 - w, beta=lam, w=w, lam=lam):
            break
    return run.trace


def _plane_search(f, m, half_width, center, noise, label):
    try:
        return minimize_plane(f, m, half_width, center=center, noise=noise)
    except NonCoerciveError as exc:
        raise NonCoerciveError(f"atom {label}: {exc}") from exc


def ega_c_run(o: Oracle, D: Dictionary, iterations: int, schedule: CoefficientSchedule, delta: float = 0.0,
              seed: int | None = None, early_stop: bool = False) -> GreedyTrace:
    """Prescribed steps G_m = G_{m-1} + c_m g with the best atom by value (|D| evaluations per step)."""
    _check_common(D, o, iterations)
    if schedule.length is not None and schedule.length < iterations:
        raise InputError(f"schedule of length {schedule.length} is shorter than {iterations} iterations")
    run = _Runner("ega-c", o, D, delta, seed,
                  {"iterations": iterations, "q": schedule.q, "gamma": schedule.gamma, "c": schedule.c,
                   "seed": seed}, early_stop)
    for m in range(1, iterations + 1):
        c_m = schedule[m]
        values = [run.vo.evaluate(run.G + c_m * g) for g in D.atoms]
        i = int(np.argmin(values))
        run.coeffs = _update(run.coeffs, 1.0, i, c_m)
        if not run.record(m, i, values[i], 2 * run.delta, len(D), beta=c_m):
            break
    return run.trace


def run_algorithm(name: str, o: Oracle, D: Dictionary, iterations: int, **kw) -> GreedyTrace:
    """Dispatch by algorithm name (see ``ALGORITHMS``)."""
    if name == "rega":
        return rega_run(o, D, iterations, **kw)
    if name == "wrga":
        return wrga_run(o, D, iterations, **kw)
    if name == "egafr":
        return egafr_run(o, D, iterations, **kw)
    if name == "wgafr":
        return wgafr_run(o, D, iterations, **kw)
    if name == "ega-c":
        return ega_c_run(o, D, iterations, **kw)
    raise InputError(f"unknown algorithm {name!r}; known: {ALGORITHMS}")
