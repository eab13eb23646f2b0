"""Deterministic backward-ODE machinery: two-sided bounds, the Gronwall cap
and the iterated modulus bound, plus an integral divergence diagnostic.

The two-sided bounds integrate

    U'(t) = -u(t) l(U(t)),  U(T) = b >= 0      (upper)
    L'(t) =  u(t) l(L(t)),  L(T) = a <= 0      (lower)

backwards from the horizon; for l in the divergent-integral class both stay
finite on [0, T] and sandwich every bounded solution of the corresponding
terminal-value problem.  Non-membership shows up as finite-time blow-up,
which is detected and reported rather than silently propagated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envelopes import EnvelopeGrid, LipschitzEnvelope
from .generators import _as_univariate

__all__ = [
    "TimeGrid",
    "BoundEnvelope",
    "BlowUpError",
    "NonPositiveError",
    "solve_growth_ode",
    "sandwich_envelope",
    "gronwall_cap",
    "bihari_sequence",
    "BihariResult",
    "osgood_diagnostic",
    "OsgoodDiagnostic",
]

BLOWUP_THRESHOLD = 1e12


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing nodes t_0 = 0 < ... < t_N = T with finite T."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ValueError("need at least two time nodes")
        if nodes[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("time nodes must be strictly increasing")
        if not np.isfinite(nodes[-1]):
            raise ValueError("the horizon must be finite")
        object.__setattr__(self, "nodes", nodes)

    @property
    def horizon(self):
        return float(self.nodes[-1])

    @property
    def steps(self):
        return len(self.nodes) - 1

    @property
    def dt(self):
        steps = np.diff(self.nodes)
        if not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
            raise ValueError("grid is not uniform")
        return float(steps[0])

    @classmethod
    def uniform(cls, horizon, steps):
        if steps < 1:
            raise ValueError("need at least one step")
        return cls(np.linspace(0.0, float(horizon), steps + 1))

    def refined(self, factor=2):
        nodes = [self.nodes[0]]
        for a, b in zip(self.nodes[:-1], self.nodes[1:]):
            nodes.extend(np.linspace(a, b, factor + 1)[1:])
        return TimeGrid(np.asarray(nodes))


class BlowUpError(RuntimeError):
    """The backward integral curve left [-1e12, 1e12] before reaching t = 0."""

    def __init__(self, side, time_reached, value):
        self.side = side
        self.time_reached = float(time_reached)
        self.value = float(value)
        super().__init__(
            f"{side} bound blew up at t={time_reached:.6g} (value {value:.3g}); "
            "the growth function is outside the divergent-integral class on "
            "the traversed range for this terminal datum"
        )


class NonPositiveError(ValueError):
    pass


@dataclass(frozen=True)
class BoundEnvelope:
    """Node-wise deterministic bounds L <= solution <= U on a time grid."""

    grid: TimeGrid
    lower: np.ndarray
    upper: np.ndarray
    terminal: tuple

    def __post_init__(self):
        a, b = self.terminal
        if not (a <= 0.0 <= b):
            raise ValueError("terminal pair must satisfy a <= 0 <= b")
        L = np.asarray(self.lower, dtype=float)
        U = np.asarray(self.upper, dtype=float)
        n = len(self.grid.nodes)
        if len(L) != n or len(U) != n:
            raise ValueError("bound arrays must match the grid")
        if not (L[-1] == a and U[-1] == b):
            raise ValueError("bounds must hit the terminal pair")
        slack = 1e-9 * max(1.0, float(np.max(np.abs(U))), float(np.max(np.abs(L))))
        ok = (
            np.all(L[0] <= L + slack)
            and np.all(L <= a + slack)
            and np.all(b - slack <= U)
            and np.all(U <= U[0] + slack)
        )
        if not ok:
            raise ValueError("bound ordering L_0 <= L_t <= a <= 0 <= b <= U_t <= U_0 violated")
        object.__setattr__(self, "lower", L)
        object.__setattr__(self, "upper", U)


def _rk4_backward(rhs, terminal, grid_nodes, substeps, side):
    """Classical 4th-order sweep from t = T down to 0, storing node values."""
    values = np.empty(len(grid_nodes))
    values[-1] = terminal
    x = float(terminal)
    for i in range(len(grid_nodes) - 1, 0, -1):
        t_hi = grid_nodes[i]
        t_lo = grid_nodes[i - 1]
        h = (t_lo - t_hi) / substeps  # negative
        t = t_hi
        for _ in range(substeps):
            k1 = rhs(t, x)
            k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = rhs(t + h, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t + h
            if not math.isfinite(x) or abs(x) > BLOWUP_THRESHOLD:
                raise BlowUpError(side, t, x)
        values[i - 1] = x
    return values


def solve_growth_ode(side, terminal, u_w, l, grid, *, tol=1e-8, max_refinements=14):
    """Node values of the upper or lower growth bound on the given grid.

    Integrates backward from t = T with classical RK4, halving the internal
    step until two successive refinements agree within ``tol`` in sup norm.
    Raises :class:`BlowUpError` when the curve escapes, and
    :class:`NonPositiveError` when l is not strictly positive on the
    traversed range.
    """
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    if side == "lower" and terminal > 0:
        raise ValueError("lower bound needs a terminal value <= 0")
    if side == "upper" and terminal < 0:
        raise ValueError("upper bound needs a terminal value >= 0")
    l = _as_univariate(l)

    def l_checked(x):
        val = float(l(x))
        if val <= 0.0:
            raise NonPositiveError(f"growth function is not strictly positive at {x:.6g}")
        return val

    sign = -1.0 if side == "upper" else 1.0

    def rhs(t, x):
        return sign * float(u_w(t)) * l_checked(x)

    prev = None
    substeps = 1
    for _ in range(max_refinements + 1):
        vals = _rk4_backward(rhs, float(terminal), grid.nodes, substeps, side)
        if prev is not None and float(np.max(np.abs(vals - prev))) < tol:
            return vals
        prev = vals
        substeps *= 2
    raise RuntimeError(
        f"backward integration did not stabilise within {max_refinements} refinements"
    )


def sandwich_envelope(xi_bound, u_w, l, grid, **kw):
    """Two-sided deterministic envelope for terminal data bounded by xi_bound."""
    if not (np.isfinite(xi_bound) and xi_bound >= 0):
        raise ValueError("xi_bound must be finite and nonnegative")
    upper = solve_growth_ode("upper", xi_bound, u_w, l, grid, **kw)
    lower = solve_growth_ode("lower", -xi_bound, u_w, l, grid, **kw)
    return BoundEnvelope(grid, lower, upper, (-xi_bound, xi_bound))


def _trapezoid(values, nodes):
    return float(np.trapezoid(values, nodes))


def _reverse_cumtrapz(values, nodes):
    """I[i] = integral from nodes[i] to nodes[-1] by the trapezoid rule."""
    seg = 0.5 * (values[1:] + values[:-1]) * np.diff(nodes)
    out = np.zeros(len(nodes))
    out[:-1] = np.cumsum(seg[::-1])[::-1]
    return out


def gronwall_cap(b1, k, beta, grid):
    """(b1 + k int_0^T beta) exp(k int_0^T beta) with trapezoid quadrature."""
    if b1 < 0 or k < 0:
        raise ValueError("b1 and k must be >= 0")
    integral = _trapezoid(np.asarray(beta(grid.nodes), dtype=float), grid.nodes)
    return (b1 + k * integral) * math.exp(k * integral)


@dataclass(frozen=True)
class BihariResult:
    n_values: tuple
    b_values: tuple
    grid: TimeGrid
    cap: float
    iterates: np.ndarray  # shape (len(n_values), len(nodes)); converged v_n
    iterations: tuple
    converged: tuple
    last_changes: tuple
    monotone_in_n: bool
    monotone_violation: float
    cap_excess_converged: float
    cap_excess_transient: float
    limit_estimate: np.ndarray

    @property
    def all_converged(self):
        return all(self.converged)


def _aitken_once(seq):
    out = []
    for a0, a1, a2 in zip(seq[:-2], seq[1:-1], seq[2:]):
        denom = a2 - 2.0 * a1 + a0
        if abs(denom) < 1e-300:
            out.append(a2)
        else:
            out.append(a0 - (a1 - a0) ** 2 / denom)
    return out


def _limit_estimate(values):
    """Geometric-sequence extrapolation (iterated delta-squared), clamped at 0.

    Up to three passes: data decaying like sums of geometric modes keep one
    fewer mode per pass.
    """
    seq = list(values)
    for _ in range(3):
        if len(seq) < 3:
            break
        seq = _aitken_once(seq)
    return max(0.0, seq[-1])


def bihari_sequence(
    psi,
    k,
    beta,
    n_values,
    b_seq,
    grid,
    *,
    j_max=500,
    tol=1e-9,
    envelope_grid=None,
):
    """Iterated modulus bounds v_n and their extrapolated limit.

    For each n: psi_n is the (n + 2k)-Lipschitz majorant of psi; starting
    from the constant Gronwall cap, iterate

        v^{j+1}(t) = b_n + int_t^T beta(s) psi_n(v^j(s)) ds

    until the sup change drops below ``tol`` (or j_max, reported as
    non-converged).  The result records whether the converged v_n are
    non-increasing in n, their worst excess over the cap, and a per-node
    limit estimate extrapolated from the n sequence.
    """
    psi = _as_univariate(psi)
    n_values = tuple(int(n) for n in n_values)
    b_seq = tuple(float(b) for b in b_seq)
    if len(n_values) != len(b_seq):
        raise ValueError("n_values and b_seq must have equal length")
    if any(n < 1 for n in n_values) or any(np.diff(n_values) <= 0):
        raise ValueError("n_values must be increasing positive integers")
    if any(b < 0 for b in b_seq) or any(np.diff(b_seq) > 0):
        raise ValueError("b_seq must be nonnegative and non-increasing")
    if abs(float(psi(0.0))) > 1e-12:
        raise ValueError("psi(0) must be 0")
    cap = gronwall_cap(b_seq[0], k, beta, grid)
    probe = np.linspace(0.0, 2.0 * cap + 1.0, 257)
    psi_probe = np.asarray(psi(probe), dtype=float)
    if np.any(psi_probe < 0) or np.any(np.diff(psi_probe) < -1e-12):
        raise ValueError("psi must be nonnegative and nondecreasing (sampled)")
    if np.any(psi_probe > k * (1.0 + probe) + 1e-9):
        raise ValueError(f"psi exceeds the certified linear growth k (1 + x) with k={k}")
    nodes = grid.nodes
    beta_vals = np.asarray(beta(nodes), dtype=float)
    egrid = envelope_grid or EnvelopeGrid(radius=max(2.0 * cap + 1.0, 10.0))

    all_v = np.empty((len(n_values), len(nodes)))
    iterations, converged, last_changes = [], [], []
    transient_excess = 0.0
    for row, (n, b_n) in enumerate(zip(n_values, b_seq)):
        psi_n = LipschitzEnvelope(psi, n + 2.0 * k, k, egrid)
        v = np.full(len(nodes), cap)
        used = j_max
        ok = False
        change = math.inf
        for j in range(1, j_max + 1):
            integrand = beta_vals * psi_n.batch(np.maximum(v, 0.0))
            v_next = b_n + _reverse_cumtrapz(integrand, nodes)
            change = float(np.max(np.abs(v_next - v)))
            transient_excess = max(transient_excess, float(np.max(v_next - cap)))
            v = v_next
            if change < tol:
                used, ok = j, True
                break
        all_v[row] = v
        iterations.append(used)
        converged.append(ok)
        last_changes.append(change)

    mono_gap = float(np.max(all_v[1:] - all_v[:-1])) if len(n_values) > 1 else 0.0
    limit = np.asarray([_limit_estimate(all_v[:, i]) for i in range(len(nodes))])
    return BihariResult(
        n_values=n_values,
        b_values=b_seq,
        grid=grid,
        cap=cap,
        iterates=all_v,
        iterations=tuple(iterations),
        converged=tuple(converged),
        last_changes=tuple(last_changes),
        monotone_in_n=mono_gap <= 1e-9,
        monotone_violation=mono_gap,
        cap_excess_converged=float(np.max(all_v - cap)),
        cap_excess_transient=transient_excess,
        limit_estimate=limit,
    )


@dataclass(frozen=True)
class OsgoodDiagnostic:
    """Heuristic divergence table for int dx / l(x); not a proof either way."""

    inner: dict  # eps -> integral over [eps, upper]
    outer: dict  # M -> integral over [upper, M]
    increments: tuple
    likely_osgood: bool


def _log_quadrature(l, lo, hi, nodes=4001):
    """int_lo^hi dx / l(x) via the substitution x = e^s (lo > 0)."""
    s = np.linspace(math.log(lo), math.log(hi), nodes)
    x = np.exp(s)
    lx = np.asarray(l(x), dtype=float)
    if np.any(lx <= 0):
        raise NonPositiveError("growth function must be strictly positive on the range")
    return _trapezoid(x / lx, s)


def osgood_diagnostic(l, upper, eps_seq=(1e-1, 1e-2, 1e-3, 1e-4)):
    """Tabulated integrals of 1/l toward 0 and toward infinity.

    The verdict is 'likely divergent' iff the outer integrals keep growing:
    the last decade's increment is at least half the previous one.  Labelled
    heuristic: sampling can never decide membership.
    """
    l = _as_univariate(l)
    if upper <= 0:
        raise ValueError("upper must be positive")
    inner = {}
    for eps in eps_seq:
        if not (0 < eps < upper):
            raise ValueError("eps values must lie in (0, upper)")
        inner[eps] = _log_quadrature(l, eps, upper)
    tops = [m for m in (10.0, 100.0, 1000.0, 10000.0) if m > upper]
    if len(tops) < 3:
        raise ValueError("upper is too large for the decade table (needs upper < 100)")
    outer = {}
    for top in tops:
        outer[top] = _log_quadrature(l, upper, top)
    series = [outer[m] for m in tops]
    increments = tuple(b - a for a, b in zip([0.0] + series[:-1], series))
    likely = increments[-1] >= 0.5 * increments[-2]
    return OsgoodDiagnostic(inner=inner, outer=outer, increments=increments, likely_osgood=likely)
