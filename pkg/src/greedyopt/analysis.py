"""Verification harness: reference minima, compressibility, rate fits, trace checks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from greedyopt.core import Dictionary, canonical_dictionary
from greedyopt.errors import BudgetError, InputError, InsufficientDataError
from greedyopt.greedy import FREE, RELAXED, GreedyTrace
from greedyopt.objective import Oracle, PowerDistance, Quadratic

GRID_BUDGET = 10**7
GAP_FLOOR = 1e-14
CONSISTENCY_TOL = 1e-10
ROUNDING_SLACK = 1e-12
REFINE = 20


# -- reference minima -----------------------------------------------------------

def project_l1_ball(v, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection of ``v`` onto {x : ||x||_1 <= radius} (sort-based)."""
    v = np.asarray(v, dtype=float)
    if radius < 0:
        raise InputError("radius must be nonnegative")
    if np.abs(v).sum() <= radius:
        return v.copy()
    if radius == 0:
        return np.zeros_like(v)
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def is_canonical(D: Dictionary) -> bool:
    ref = canonical_dictionary(D.dim, D.p).atoms
    if D.atoms.shape != ref.shape:
        return False
    rows = {tuple(r) for r in np.round(D.atoms, 12)}
    return rows == {tuple(r) for r in ref}


def closed_form_minimum(o: Oracle, D: Dictionary | None = None, M: float | None = None) -> float | None:
    """E* over X (``M is None``) or over L_M, when a closed form exists; else None."""
    if isinstance(o, (Quadratic, PowerDistance)) and M is None:
        return 0.0
    if isinstance(o, Quadratic) and D is not None and is_canonical(D):
        y = project_l1_ball(o.center, M)
        return o.true_value(y)
    return None


def project_capped_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w : w >= 0, sum(w) <= 1}."""
    v = np.asarray(v, dtype=float)
    w = np.maximum(v, 0.0)
    if w.sum() <= 1.0:
        return w
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def gradient_reference_min(o: Oracle, D: Dictionary | None = None, iterations: int = 20000,
                           tol: float = 1e-15) -> float:
    """Minimum of E over A_1(D) (or over R^d when ``D`` is None) by accelerated projected gradient.

    Works in the atom-weight coordinates x = w @ atoms with w on the capped
    simplex, uses backtracking on the step size and restarts momentum whenever
    the value goes up.  Needs an analytic gradient.  An independent solver: it
    shares no code with the greedy algorithms.
    """
    if not o.has_gradient:
        raise InputError("gradient_reference_min needs an analytic gradient")
    if D is None:
        to_x, proj, n = (lambda z: z), (lambda z: z), o.dim
        grad = o.gradient
    else:
        A = D.atoms
        to_x, proj, n = (lambda z: z @ A), project_capped_simplex, len(D)
        grad = lambda z: A @ o.gradient(z @ A)  # noqa: E731
    f = lambda z: o.true_value(to_x(z))  # noqa: E731
    z = np.zeros(n)
    y, fz, step, t = z.copy(), f(z), 1.0, 1.0
    for _ in range(iterations):
        gy, fy = grad(y), f(y)
        while True:
            z_new = proj(y - step * gy)
            d = z_new - y
            f_new = f(z_new)
            if f_new <= fy + gy @ d + 0.5 / step * (d @ d) + 1e-15 * max(1.0, abs(fy)) or step < 1e-20:
                break
            step *= 0.5
        if f_new > fz:  # momentum restart
            y, t = z.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = z_new + (t - 1.0) / t_new * (z_new - z)
        converged = fz - f_new <= tol * max(1.0, abs(fz)) and np.max(np.abs(z_new - z)) <= 1e-13
        z, fz, t = z_new, f_new, t_new
        step *= 2.0
        if converged:
            break
    return float(fz)


def reference_minimum(o: Oracle, D: Dictionary, over: str = "A1", grid_n: int = 200) -> tuple[float | None, str]:
    """E* over A_1(D) (``over="A1"``) or over R^d (``over="X"``), with the method used.

    Closed forms are preferred.  Over A_1 the fallback is the grid upper bound
    of :func:`brute_force_min_A1`; over R^d there is no fallback and the value is None.
    """
    if over not in ("A1", "X"):
        raise InputError(f"over must be 'A1' or 'X', got {over!r}")
    if over == "X":
        v = closed_form_minimum(o)
        if v is not None:
            return v, "closed form"
        if o.has_gradient:
            return gradient_reference_min(o), "projected gradient reference"
        return None, "unavailable"
    v = closed_form_minimum(o, D, 1.0)
    if v is not None:
        return v, "closed form (l1-ball projection)"
    cap = min(3, len(D))
    while cap > 1 and sum(_lattice_size(len(D), k, grid_n) for k in range(1, cap + 1)) > GRID_BUDGET:
        cap -= 1
    grid = brute_force_min_A1(o, D, grid_n, support_cap=cap)
    if o.has_gradient:
        pg = gradient_reference_min(o, D)
        if pg <= grid:
            return pg, "projected gradient reference (below grid upper bound)"
    return grid, f"grid upper bound (1/{grid_n}, support <= {cap})"


def _lattice(k: int, n: int) -> np.ndarray:
    """All w in (Z/n)^k with w >= 0 and sum(w) <= 1."""
    if k == 1:
        return (np.arange(n + 1) / n)[:, None]
    pts = [w for w in itertools.product(range(n + 1), repeat=k) if sum(w) <= n]
    return np.array(pts, dtype=float) / n


def _lattice_size(n_atoms: int, k: int, n: int) -> int:
    return math.comb(n_atoms, k) * math.comb(n + k, k)


def _divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def _points(W: np.ndarray, atoms: np.ndarray, scale: float) -> np.ndarray:
    # explicit column sum: same weights give bit-identical points whatever the batch size
    X = np.zeros((W.shape[0], atoms.shape[1]))
    for j in range(W.shape[1]):
        X += W[:, j, None] * atoms[j]
    return scale * X


def _search_level(o: Oracle, D: Dictionary, n: int, support_cap: int, scale: float, refine: bool) -> float:
    best_val, best_sub, best_w = o.evaluate(np.zeros(D.dim)), (), np.zeros(0)
    for k in range(1, support_cap + 1):
        W = _lattice(k, n)
        for sub in itertools.combinations(range(len(D)), k):
            vals = o.evaluate_batch(_points(W, D.atoms[list(sub)], scale))
            j = int(np.argmin(vals))
            if vals[j] < best_val:
                best_val, best_sub, best_w = float(vals[j]), sub, W[j]
    if refine and 1 <= len(best_sub) <= 2:
        # dense local grid around the best lattice point of the best pair, on the exact
        # lattice of resolution 1/(REFINE * n)
        k = len(best_sub)
        fine = REFINE * n
        centre = np.rint(best_w * n).astype(np.int64) * REFINE
        offs = np.arange(-REFINE, REFINE + 1)
        num = centre + np.array(list(itertools.product(offs, repeat=k)), dtype=np.int64)
        num = num[(num >= 0).all(axis=1) & (num.sum(axis=1) <= fine)]
        vals = o.evaluate_batch(_points(num / fine, D.atoms[list(best_sub)], scale))
        best_val = min(best_val, float(vals.min()))
    return best_val


def _search_scaled(o: Oracle, D: Dictionary, grid_n: int, support_cap: int, scale: float, refine: bool):
    """Min over the refined lattice searches at every divisor of ``grid_n``.

    A multiple of ``grid_n`` repeats all of these searches bit for bit, so
    refining the grid can never raise the reported value.
    """
    if int(grid_n) != grid_n or grid_n < 1 or support_cap < 1:
        raise InputError("grid_n and support_cap must be positive integers")
    grid_n = int(grid_n)
    levels = _divisors(grid_n)
    total = sum(_lattice_size(len(D), k, d) for d in levels for k in range(1, support_cap + 1))
    if total > GRID_BUDGET:
        raise BudgetError(f"grid of {total} points exceeds budget {GRID_BUDGET}")
    return min(_search_level(o, D, d, support_cap, scale, refine) for d in levels)


def brute_force_min_A1(o: Oracle, D: Dictionary, grid_n: int = 200, support_cap: int = 2, refine: bool = True) -> float:
    """Grid upper bound on inf of E over A_1(D).

    Searches convex-combination weights on a simplex lattice of resolution
    1/grid_n over every atom subset of size <= ``support_cap``, then refines
    densely around the best point when its support has at most two atoms.
    The same search is repeated at every divisor of ``grid_n`` so that the
    result never increases when ``grid_n`` is replaced by a multiple.
    """
    return _search_scaled(o, D, grid_n, support_cap, 1.0, refine)


@dataclass
class CompressibilityProfile:
    M_grid: list[float]
    e_values: list[float]
    method: str


def compressibility(o: Oracle, D: Dictionary, M_grid, grid_n: int = 200, E_star: float | None = None,
                    support_cap: int = 2) -> CompressibilityProfile:
    """Estimates of e(E, M) = inf over L_M of E minus E*.

    Points found for a smaller M also lie in every larger L_M, so the estimates
    are carried forward as a running minimum over increasing M.
    """
    if E_star is None:
        E_star = closed_form_minimum(o)
        if E_star is None:
            raise InputError("an E* reference is required for this objective")
    Ms = [float(M) for M in M_grid]
    if any(M < 0 for M in Ms):
        raise InputError("M must be nonnegative")
    order = np.argsort(Ms, kind="stable")
    values = [0.0] * len(Ms)
    running = math.inf
    for idx in order:
        M = Ms[idx]
        if M == 0:
            v = o.evaluate(np.zeros(D.dim))
        else:
            v = _search_scaled(o, D, grid_n, support_cap, M, True)
        running = min(running, v)
        values[idx] = max(running - E_star, 0.0)
    return CompressibilityProfile(Ms, values, f"simplex lattice 1/{grid_n}, support <= {support_cap}, refined")


def epsilon_m_power_profile(gamma_tilde: float, r: float, q: float, m) -> np.ndarray:
    """eps_m = inf{eps : A(eps)^q m^(1-q) <= eps} when e(E, M) = gamma_tilde M^-r.

    Then A(eps) = (gamma_tilde / eps)^(1/r) and the infimum solves the equality.
    """
    m = np.asarray(m, dtype=float)
    return (gamma_tilde ** (q / r) * m ** (1.0 - q)) ** (1.0 / (1.0 + q / r))


# -- rate fitting ---------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    burn_in: int
    window: tuple[int, int]
    n_points: int
    excluded: list[int] = field(default_factory=list)


def fit_rate(trace, E_star: float, burn_in: int = 10, last: int | None = None) -> RateFit:
    """Least-squares slope of log(E(G_m) - E*) against log m over burn_in < m <= last.

    ``trace`` is a :class:`GreedyTrace` or a sequence of E(G_1), E(G_2), ...
    Iterations whose gap is at most 1e-14 are excluded and listed.
    """
    values = trace.objectives() if isinstance(trace, GreedyTrace) else np.asarray(trace, dtype=float)
    M = values.size if last is None else min(int(last), values.size)
    m = np.arange(1, M + 1)
    gaps = values[:M] - E_star
    window = m > burn_in
    usable = window & (gaps > GAP_FLOOR)
    excluded = [int(k) for k in m[window & ~usable]]
    if usable.sum() < 10:
        raise InsufficientDataError(
            f"{int(usable.sum())} usable points in ({burn_in}, {M}]; {len(excluded)} gaps at or below {GAP_FLOOR}"
        )
    x = np.log(m[usable])
    y = np.log(gaps[usable])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, int(burn_in), (int(m[usable][0]), int(m[usable][-1])),
                   int(usable.sum()), excluded)


# -- trace invariants -----------------------------------------------------------

@dataclass
class InvariantReport:
    algorithm: str
    results: dict[str, list[str]] = field(default_factory=dict)

    def add(self, name: str, failure: str | None = None):
        self.results.setdefault(name, [])
        if failure:
            self.results[name].append(failure)

    @property
    def ok(self) -> bool:
        return all(not v for v in self.results.values())

    @property
    def failures(self) -> dict[str, list[str]]:
        return {k: v for k, v in self.results.items() if v}

    def lines(self) -> list[str]:
        out = []
        for name, fails in self.results.items():
            status = "PASS" if not fails else f"FAIL ({len(fails)})"
            out.append(f"{self.algorithm:8s} {name:27s} {status}" + (f"  first: {fails[0]}" if fails else ""))
        return out


def check_trace_invariants(trace: GreedyTrace, D: Dictionary, o_exact: Oracle, delta_eff=None) -> InvariantReport:
    """Re-verify a trace against the exact objective; failures are report entries, never raised.

    ``delta_eff`` optionally overrides the per-step effective errors recorded in the trace.
    """
    rep = InvariantReport(trace.algorithm)
    recs = trace.records
    deltas = [r.delta_eff for r in recs] if delta_eff is None else list(delta_eff)
    prev_obj = trace.initial_value
    prev_evals = 0
    ledger: dict[int, float] = {}
    c_sum = 0.0
    for k, r in enumerate(recs):
        m = k + 1
        rep.add("consecutive_iterations", None if r.iteration == m else f"record {k} has iteration {r.iteration}")
        rep.add("evals_nondecreasing", None if r.cumulative_evals >= prev_evals else f"m={m}")
        rep.add("eval_budget", None if r.cumulative_evals <= r.eval_budget
                else f"m={m}: {r.cumulative_evals} > {r.eval_budget}")
        slack = ROUNDING_SLACK * max(1.0, abs(prev_obj))
        if trace.algorithm in RELAXED + FREE:
            ok = r.objective <= prev_obj + deltas[k] + slack
            rep.add("monotone_up_to_delta", None if ok
                    else f"m={m}: {r.objective:.6g} > {prev_obj:.6g} + {deltas[k]:.3g}")
        else:
            ok = r.objective <= trace.initial_value + 3.0
            rep.add("level_set_D3", None if ok else f"m={m}: {r.objective:.6g} > E(0) + 3")
        rep.add("sparsity", None if r.support <= m else f"m={m}: support {r.support}")
        if trace.algorithm in RELAXED:
            rep.add("l1_feasible", None if r.l1_mass <= 1.0 + ROUNDING_SLACK else f"m={m}: l1 {r.l1_mass:.15g}")
            lam_ok = r.lam is not None and 0.0 <= r.lam <= 1.0
            rep.add("lambda_in_unit_interval", None if lam_ok else f"m={m}: lambda {r.lam}")
        if trace.algorithm == "ega-c":
            c_sum += r.beta
            ledger[r.atom_index] = ledger.get(r.atom_index, 0.0) + r.beta
            same = set(ledger) == set(r.coefficients) and all(
                abs(ledger[i] - r.coefficients[i]) <= 1e-12 for i in ledger)
            rep.add("coefficient_ledger", None if same else f"m={m}")
            rep.add("l1_le_sum_c", None if r.l1_mass <= c_sum + ROUNDING_SLACK else f"m={m}")
        bad_index = [i for i in r.coefficients if not 0 <= i < len(D)]
        if bad_index:
            rep.add("materialization_consistent", f"m={m}: atom indices {bad_index} out of range")
        else:
            x = trace.point(m)
            err = abs(o_exact.true_value(x) - r.objective)
            rep.add("materialization_consistent", None if err <= CONSISTENCY_TOL
                    else f"m={m}: recorded {r.objective:.12g}, re-evaluated differs by {err:.3g}")
        prev_obj = r.objective
        prev_evals = r.cumulative_evals
    return rep
