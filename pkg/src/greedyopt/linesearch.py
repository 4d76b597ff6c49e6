"""Certified derivative-free minimization of convex functions.

The univariate routine keeps an active interval with known values at both ends
and the midpoint.  Each iteration halves the interval using at most two new
evaluations, so ``m`` iterations cost at most ``3 + 2m`` evaluations.  When the
observed values carry an error of at most ``delta``, comparisons that decide
between the two halves use a ``2 * delta`` guard band.

Box problems in d variables are handled coordinate-wise: the last coordinate
is searched by the guarded univariate routine whose function values are
themselves (d-1)-variate minimizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from greedyopt.errors import BudgetError, InputError, NonCoerciveError

MAX_BOX_EVALS = 10**8


@dataclass
class LineSearchResult:
    """Outcome of a certified search.

    ``f_best`` is the value observed at ``x_best`` (exact when no corruption
    was declared).  ``certified_gap`` bounds ``f(x_best) - min f`` given the
    Lipschitz constant ``lipschitz``; ``empirical`` is True when that constant
    was estimated from queried values rather than supplied.
    """

    x_best: float | np.ndarray
    f_best: float
    eval_count: int
    certified_gap: float
    lipschitz: float
    empirical: bool = False
    intervals: list[tuple[float, float]] = field(default_factory=list, repr=False)
    queries: dict = field(default_factory=dict, repr=False)
    attempts: int = 1
    half_width: float | None = None


def _check_m(m):
    if int(m) != m or m < 1:
        raise InputError(f"iteration count m must be a positive integer, got {m}")
    return int(m)


def _trisect(g, m: int, delta: float):
    """Guarded halving search for ``g`` on [0, 1].

    Returns ``(t_best, value, values, intervals)``.  Queried points are dyadic
    rationals, hence exact dictionary keys.
    """
    vals: dict[float, float] = {}

    def q(t):
        if t not in vals:
            vals[t] = float(g(t))
        return vals[t]

    lo, hi = 0.0, 1.0
    q(lo)
    q(0.5)
    q(hi)
    intervals = [(lo, hi)]
    band = 2.0 * delta
    for _ in range(m):
        mid = 0.5 * (lo + hi)
        h = 0.25 * (hi - lo)
        fmid = vals[mid]
        # orient so that the "near" end has the smaller value; ties keep the left
        if vals[hi] < vals[lo]:
            near, far, s = hi, lo, -1.0
        else:
            near, far, s = lo, hi, 1.0
        if vals[near] <= fmid:
            new = (near, mid)
        elif q(mid - s * h) < fmid - band:
            new = (near, mid)
        elif q(mid + s * h) < fmid - band:
            new = (mid, far)
        else:
            new = (mid - h, mid + h)
        lo, hi = min(new), max(new)
        q(0.5 * (lo + hi))
        intervals.append((lo, hi))

    centre = 0.5 * (lo + hi)
    t_best = min(vals, key=lambda t: (vals[t], t))
    # another point is only provably better when it wins by more than the band
    if not vals[t_best] < vals[centre] - band:
        t_best = centre
    return t_best, vals[t_best], vals, intervals


def _max_secant(points, values) -> float:
    order = np.argsort(points)
    x = np.asarray(points, dtype=float)[order]
    y = np.asarray(values, dtype=float)[order]
    if x.size < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(y) / np.diff(x))))


def _univariate(f, m, delta, a, b, lipschitz):
    m = _check_m(m)
    if not a < b:
        raise InputError(f"need a < b, got [{a}, {b}]")
    if delta < 0:
        raise InputError(f"delta must be nonnegative, got {delta}")
    width = b - a
    t_best, value, vals, intervals = _trisect(lambda t: f(a + t * width), m, delta)
    xs = [a + t * width for t in vals]
    empirical = lipschitz is None
    L = _max_secant(xs, list(vals.values())) if empirical else float(lipschitz)
    gap = 2.0**-m * L * width + (4 * m + 1) * delta if delta > 0 else 2.0**-m * L * width
    return LineSearchResult(
        x_best=a + t_best * width,
        f_best=value,
        eval_count=len(vals),
        certified_gap=gap,
        lipschitz=L,
        empirical=empirical,
        intervals=[(a + lo * width, a + hi * width) for lo, hi in intervals],
        queries={a + t * width: v for t, v in vals.items()},
    )


def minimize_unit_interval(f, m: int, a: float = 0.0, b: float = 1.0, lipschitz: float | None = None):
    """Minimize a convex ``f`` on [a, b] with at most ``3 + 2m`` evaluations.

    Guarantees ``f(x_best) <= min f + 2^-m * L * (b - a)`` for L-Lipschitz ``f``.
    Values at interval ends and midpoints are cached, never re-queried.
    """
    return _univariate(f, m, 0.0, a, b, lipschitz)


def minimize_unit_interval_corrupted(
    y, m: int, delta: float, a: float = 0.0, b: float = 1.0, lipschitz: float | None = None
):
    """As :func:`minimize_unit_interval`, for observed values ``y`` with ``|y - f| <= delta``.

    Guarantees ``f(x_best) <= min f + 2^-m * L * (b - a) + (4m + 1) * delta``.
    With ``delta = 0`` this is exactly the uncorrupted routine.
    """
    if delta < 0:
        raise InputError(f"delta must be nonnegative, got {delta}")
    return _univariate(y, m, float(delta), a, b, lipschitz)


def box_certificate(d: int, m: int, scale: float = 1.0, noise: float = 0.0) -> float:
    """Error bound of :func:`minimize_box`; ``scale`` is Lipschitz constant times box width."""
    if d == 1:
        return scale * 2.0**-m + (4 * m + 1) * noise
    return (scale * 2.0**-m + noise) * (4 * m + 2) ** d


def minimize_box(
    f, d: int, m: int, lipschitz: float = 1.0, lower=None, upper=None, noise: float = 0.0
) -> LineSearchResult:
    """Coordinate-wise minimization of a convex ``f`` on a box in R^d.

    ``f`` takes a length-``d`` array.  The default box is [0, 1]^d.  With
    per-coordinate Lipschitz constant ``lipschitz`` and box widths ``w``, the
    result satisfies ``f(x_best) <= min f + 2^-m (4m+2)^d * lipschitz * max(w)``
    using at most ``(3 + 2m)^d`` evaluations.

    ``noise`` bounds the error of each observed value of ``f``; it widens the
    guard bands and the certificate (see :func:`box_certificate`).
    """
    if noise < 0:
        raise InputError("noise must be nonnegative")
    m = _check_m(m)
    if int(d) != d or d < 1:
        raise InputError(f"d must be a positive integer, got {d}")
    d = int(d)
    if (3 + 2 * m) ** d > MAX_BOX_EVALS:
        raise BudgetError(f"(3+2m)^d = {(3 + 2 * m) ** d} evaluations exceeds {MAX_BOX_EVALS}")
    lower = np.zeros(d) if lower is None else np.asarray(lower, dtype=float)
    upper = np.ones(d) if upper is None else np.asarray(upper, dtype=float)
    if lower.shape != (d,) or upper.shape != (d,) or not np.all(lower < upper):
        raise InputError("box bounds must be length-d arrays with lower < upper")
    width = upper - lower
    scale = float(lipschitz) * float(width.max())
    count = 0

    def fx(t):
        nonlocal count
        count += 1
        return float(f(lower + t * width))

    t_best, value = _box(fx, d, m, scale, float(noise))
    return LineSearchResult(
        x_best=lower + t_best * width,
        f_best=value,
        eval_count=count,
        certified_gap=box_certificate(d, m, scale, noise),
        lipschitz=float(lipschitz),
    )


def _box(f, d, m, scale, noise):
    # f is defined on [0, 1]^d; the last coordinate is the outer one
    if d == 1:
        t, v, _, _ = _trisect(lambda s: f(np.array([s])), m, noise)
        return np.array([t]), v
    # inner values are off by at most the (d-1)-variate bound plus the noise
    delta = (scale * 2.0**-m + noise) * (4 * m + 2) ** (d - 1) + noise
    inner: dict[float, np.ndarray] = {}

    def g(s):
        z, v = _box(lambda u: f(np.append(u, s)), d - 1, m, scale, noise)
        inner[s] = z
        return v

    s, v, _, _ = _trisect(g, m, delta)
    return np.append(inner[s], s), v


def _grid_lipschitz(f, lower, upper):
    """Per-coordinate secant slopes on the 3x3 grid of a 2-d box (9 evaluations)."""
    ax = [np.linspace(lower[i], upper[i], 3) for i in range(2)]
    F = np.array([[f(np.array([x, y])) for y in ax[1]] for x in ax[0]])
    s0 = np.abs(np.diff(F, axis=0)) / (ax[0][1] - ax[0][0])
    s1 = np.abs(np.diff(F, axis=1)) / (ax[1][1] - ax[1][0])
    return float(max(s0.max(), s1.max())), 9


def minimize_plane(
    f, m: int, initial_half_width: float = 1.0, center=(0.0, 0.0), max_doublings: int = 60, noise: float = 0.0
):
    """Minimize a convex, coercive ``f`` on R^2 by searching growing boxes.

    Each attempt estimates the per-coordinate Lipschitz constant on the box
    from a 3x3 grid, then runs :func:`minimize_box`.  If the answer lies
    within one resolution cell of the boundary and a probe one cell outside
    the box is strictly lower, the half-width doubles and the search repeats.
    """
    m = _check_m(m)
    if not initial_half_width > 0:
        raise InputError("initial_half_width must be positive")
    c = np.asarray(center, dtype=float)
    if c.shape != (2,):
        raise InputError("center must have two coordinates")
    w = float(initial_half_width)
    total = 0
    for attempt in range(max_doublings + 1):
        lower, upper = c - w, c + w
        L, used = _grid_lipschitz(f, lower, upper)
        total += used
        res = minimize_box(f, 2, m, lipschitz=L, lower=lower, upper=upper, noise=noise)
        total += res.eval_count
        cell = 2.0 * w * 2.0**-m
        x = np.asarray(res.x_best)
        escape = False
        for i in range(2):
            for edge, sign in ((lower[i], -1.0), (upper[i], 1.0)):
                if abs(x[i] - edge) <= cell:
                    probe = x.copy()
                    probe[i] = edge + sign * cell
                    total += 1
                    fp = float(f(probe))
                    if fp < res.f_best - 2.0 * noise - 1e-15 * max(1.0, abs(res.f_best)):
                        escape = True
        if not escape:
            res.eval_count = total
            res.empirical = True
            res.attempts = attempt + 1
            res.half_width = w
            return res
        w *= 2.0
    raise NonCoerciveError(f"no interior minimizer after {max_doublings} doublings (half-width {w / 2:g})")
