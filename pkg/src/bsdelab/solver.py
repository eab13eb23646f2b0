"""Discrete-time solvers for scalar terminal-value equations driven by a
one-dimensional Brownian motion.

Two backends share one backward recursion.  On the recombining binomial tree
(increments +-sqrt(dt) with probability 1/2) conditional expectations are
exact pairwise averages:

    E_i    = (y_{i+1, j+1} + y_{i+1, j}) / 2
    z_{ij} = (y_{i+1, j+1} - y_{i+1, j}) / (2 sqrt(dt))
    y_{ij} = E_i + g(t_i, E_i, z_{ij}) dt            (explicit)
    y_{ij} solves y = E_i + g(t_i, y, z_{ij}) dt     (implicit, fixed point)

The Monte-Carlo backend replaces the pairwise averages with least-squares
projections of y_{i+1} and y_{i+1} dB_i / dt onto polynomials in B_{t_i}.
Both backends are deterministic functions of their inputs; the Monte-Carlo
ensemble is generated by a counter-based bit stream keyed by the seed, with
the (path, step) cell at a fixed stream position, so results do not depend
on how evaluation work is split across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .generators import Generator, TerminalCondition
from .ode_bounds import TimeGrid

__all__ = [
    "TreeModel",
    "PathEnsemble",
    "DiscreteSolution",
    "SolverError",
    "PicardDivergenceError",
    "RankDeficientError",
    "solve_tree",
    "solve_mc_regression",
]

_CHUNK = 16384  # fixed evaluation chunk; must not depend on the thread count


class SolverError(RuntimeError):
    pass


class PicardDivergenceError(SolverError):
    def __init__(self, step, change, cap):
        self.step = step
        self.change = change
        super().__init__(
            f"implicit fixed point did not converge at step {step} "
            f"(last change {change:.3g} after {cap} iterations)"
        )


class RankDeficientError(SolverError):
    def __init__(self, step, cond):
        self.step = step
        self.cond = cond
        super().__init__(
            f"regression basis is rank deficient at step {step} "
            f"(condition number {cond:.3g})"
        )


@dataclass(frozen=True)
class TreeModel:
    """Recombining binomial discretisation of the driving Brownian motion."""

    grid: TimeGrid

    def __post_init__(self):
        self.grid.dt  # raises if non-uniform

    @property
    def steps(self):
        return self.grid.steps

    @property
    def sqrt_dt(self):
        return math.sqrt(self.grid.dt)

    def brownian_level(self, i):
        """Node values (2j - i) sqrt(dt) for j = 0..i."""
        return (2.0 * np.arange(i + 1) - i) * self.sqrt_dt

    def level_probabilities(self, i):
        """Exact binomial weights C(i, j) / 2^i."""
        denom = 2**i
        return np.asarray([math.comb(i, j) / denom for j in range(i + 1)])

    @classmethod
    def uniform(cls, horizon, steps):
        return cls(TimeGrid.uniform(horizon, steps))


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated Brownian increments, reproducible from (seed, paths, grid)."""

    grid: TimeGrid
    paths: int
    seed: int
    increments: np.ndarray  # shape (paths, steps)

    @classmethod
    def generate(cls, grid, paths, seed):
        if paths < 1:
            raise ValueError("need at least one path")
        dt = grid.dt
        gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        increments = gen.standard_normal((paths, grid.steps)) * math.sqrt(dt)
        return cls(grid=grid, paths=paths, seed=int(seed), increments=increments)

    def brownian_paths(self):
        out = np.zeros((self.paths, self.grid.steps + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    def validate(self):
        """Moment sanity for each increment column (5-sigma style gates)."""
        P = self.paths
        dt = self.grid.dt
        mean_gate = 5.0 / math.sqrt(P)
        var_gate = 5.0 * math.sqrt(2.0 / P)
        means = np.abs(self.increments.mean(axis=0))
        if float(np.max(means)) > mean_gate:
            raise ValueError(f"increment mean {np.max(means):.3g} exceeds {mean_gate:.3g}")
        variances = np.abs(self.increments.var(axis=0) - dt)
        if float(np.max(variances)) > var_gate:
            raise ValueError(f"increment variance off dt by {np.max(variances):.3g}")
        return True


@dataclass(frozen=True)
class DiscreteSolution:
    """Backward-solved pair on a substrate, with provenance for later checks.

    ``y`` has one row per time node (ragged list for the tree, (N+1, P)
    array for Monte Carlo); ``z`` has one row per step (the last row is the
    central difference through the terminal payoff values).
    """

    backend: str  # 'tree' | 'mc-regression'
    grid: TimeGrid
    y: tuple
    z: tuple
    scheme: str
    generator: Generator
    terminal: TerminalCondition
    diagnostics: dict = field(default_factory=dict)
    seed: Optional[int] = None
    paths: Optional[int] = None
    conforming: bool = True

    @property
    def y0(self):
        return float(np.asarray(self.y[0]).ravel()[0]) if self.backend == "tree" else float(
            np.mean(self.y[0])
        )

    def substrate_key(self):
        return (self.backend, self.grid.steps, self.grid.horizon, self.seed, self.paths)

    def y_matrix(self):
        """Per-time rows as a dense matrix; tree rows are left-aligned with NaN padding."""
        if self.backend != "tree":
            return np.asarray(self.y)
        n = self.grid.steps
        out = np.full((n + 1, n + 1), np.nan)
        for i, row in enumerate(self.y):
            out[i, : i + 1] = row
        return out


def _eval_chunked(fn, t, y, z, threads):
    """Evaluate fn(t, y, z) over arrays, optionally on a thread pool.

    Chunk boundaries are fixed, so the assembled result is bit-identical for
    any thread count.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if threads <= 1 or y.size <= _CHUNK:
        return np.asarray(fn(t, y, z), dtype=float)
    out = np.empty_like(y)
    spans = [(k, min(k + _CHUNK, y.size)) for k in range(0, y.size, _CHUNK)]

    def work(span):
        a, b = span
        out[a:b] = fn(t, y[a:b], z[a:b])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(work, spans))
    return out


def _finite_or_raise(arr, step, what):
    if not np.all(np.isfinite(arr)):
        k = int(np.argmin(np.isfinite(np.asarray(arr).ravel())))
        raise SolverError(f"non-finite {what} at step {step} (flat index {k})")
    return arr


def _implicit_update(g, t, E, z, dt, tol, cap, threads):
    y = E.copy()
    change = math.inf
    for it in range(1, cap + 1):
        y_next = E + _eval_chunked(g, t, y, z, threads) * dt
        change = float(np.max(np.abs(y_next - y))) if y.size else 0.0
        y = y_next
        if change < tol:
            return y, it
    raise PicardDivergenceError(step=t, change=change, cap=cap)


def solve_tree(
    g,
    xi,
    steps,
    horizon=1.0,
    scheme="explicit",
    *,
    picard_tol=1e-12,
    picard_cap=50,
    z_clamp=None,
    threads=1,
):
    """Backward recursion on the recombining tree; see module docstring.

    The terminal slice equals the payoff at the terminal tree states exactly.
    With ``z_clamp`` set, extracted z values are clipped to [-z_clamp, z_clamp]
    and the solution is labelled non-conforming.
    """
    if scheme not in ("explicit", "implicit"):
        raise ValueError("scheme must be 'explicit' or 'implicit'")
    tree = TreeModel.uniform(horizon, steps)
    dt = tree.grid.dt
    sdt = tree.sqrt_dt
    terminal_states = tree.brownian_level(steps)
    xi.check_bound(terminal_states)
    y_rows = [None] * (steps + 1)
    z_rows = [None] * steps
    y_rows[steps] = _finite_or_raise(
        np.asarray(xi(terminal_states), dtype=float), steps, "terminal payoff"
    )
    if y_rows[steps].shape != terminal_states.shape:
        y_rows[steps] = np.broadcast_to(y_rows[steps], terminal_states.shape).copy()
    clamped = False
    picard_max = 0
    for i in range(steps - 1, -1, -1):
        t = tree.grid.nodes[i]
        nxt = y_rows[i + 1]
        E = 0.5 * (nxt[1:] + nxt[:-1])
        z = (nxt[1:] - nxt[:-1]) / (2.0 * sdt)
        if z_clamp is not None:
            before = z
            z = np.clip(z, -z_clamp, z_clamp)
            clamped = clamped or bool(np.any(before != z))
        if scheme == "explicit":
            y = E + _eval_chunked(g, t, E, z, threads) * dt
        else:
            y, used = _implicit_update(g, t, E, z, dt, picard_tol, picard_cap, threads)
            picard_max = max(picard_max, used)
        _finite_or_raise(y, i, "value")
        y_rows[i] = y
        z_rows[i] = z
    return DiscreteSolution(
        backend="tree",
        grid=tree.grid,
        y=tuple(y_rows),
        z=tuple(z_rows),
        scheme=scheme,
        generator=g if isinstance(g, Generator) else None,
        terminal=xi,
        diagnostics={"picard_max_iterations": picard_max, "z_clamped": clamped},
        conforming=not clamped,
    )


def _regress(basis, target):
    """Least-squares projection; returns (fitted values, condition number)."""
    # economic SVD keeps this deterministic and exposes the conditioning
    u, s, vt = np.linalg.svd(basis, full_matrices=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    if s[-1] <= s[0] * 1e-12:
        raise RankDeficientError(step=None, cond=cond)
    coef = vt.T @ ((u.T @ target) / s)
    return basis @ coef, cond


def solve_mc_regression(
    g,
    xi,
    steps,
    paths,
    degree,
    seed,
    horizon=1.0,
    scheme="explicit",
    *,
    picard_tol=1e-12,
    picard_cap=50,
    z_clamp=None,
    threads=1,
):
    """Least-squares Monte-Carlo backward sweep over a simulated ensemble.

    Conditional expectations of y_{i+1} and y_{i+1} dB_i / dt are estimated
    by projection onto polynomials in the current Brownian value of degree
    <= ``degree`` (scaled by sqrt(t) for conditioning; at t = 0 the basis
    degenerates to the constant, i.e. a plain average).  Deterministic for
    fixed (seed, paths, steps, degree), independent of the thread count.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if paths < 10 * (degree + 1):
        raise ValueError("need at least 10 (degree + 1) paths")
    grid = TimeGrid.uniform(horizon, steps)
    ens = PathEnsemble.generate(grid, paths, seed)
    B = ens.brownian_paths()
    dt = grid.dt
    xi.check_bound(B[:, -1])
    y = _finite_or_raise(np.asarray(xi(B[:, -1]), dtype=float), steps, "terminal payoff")
    if y.shape != (paths,):
        y = np.broadcast_to(y, (paths,)).copy()
    y_rows = [None] * (steps + 1)
    z_rows = [None] * steps
    y_rows[steps] = y
    conds = []
    clamped = False
    picard_max = 0
    for i in range(steps - 1, -1, -1):
        t = grid.nodes[i]
        incr = ens.increments[:, i]
        target_z = y_rows[i + 1] * incr / dt
        if i == 0:
            E = np.full(paths, float(np.mean(y_rows[1])))
            z = np.full(paths, float(np.mean(target_z)))
            conds.append(1.0)
        else:
            x = B[:, i] / math.sqrt(t)
            basis = np.vander(x, degree + 1, increasing=True)
            try:
                E, cond_e = _regress(basis, y_rows[i + 1])
                z, cond_z = _regress(basis, target_z)
            except RankDeficientError as exc:
                raise RankDeficientError(step=i, cond=exc.cond) from None
            conds.append(max(cond_e, cond_z))
        if z_clamp is not None:
            before = z
            z = np.clip(z, -z_clamp, z_clamp)
            clamped = clamped or bool(np.any(before != z))
        if scheme == "explicit":
            ynew = E + _eval_chunked(g, t, E, z, threads) * dt
        else:
            ynew, used = _implicit_update(g, t, E, z, dt, picard_tol, picard_cap, threads)
            picard_max = max(picard_max, used)
        _finite_or_raise(ynew, i, "value")
        y_rows[i] = ynew
        z_rows[i] = z
    return DiscreteSolution(
        backend="mc-regression",
        grid=grid,
        y=tuple(y_rows),
        z=tuple(z_rows),
        scheme=scheme,
        generator=g if isinstance(g, Generator) else None,
        terminal=xi,
        diagnostics={
            "picard_max_iterations": picard_max,
            "z_clamped": clamped,
            "regression_condition_numbers": tuple(reversed(conds)),
        },
        seed=int(seed),
        paths=int(paths),
        conforming=not clamped,
    )
