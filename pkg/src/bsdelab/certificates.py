"""Growth and continuity certificates for drivers, checked by grid sampling.

Each certificate names the structural condition a driver claims to satisfy
and carries the witness functions appearing in the defining inequality.  A
certificate check evaluates that inequality on a finite sample grid and
reports the worst violation; passing a grid check is evidence, never a
proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .expressions import Expression
from .generators import Generator, WeightFn, _as_univariate
from .report import VerificationReport

__all__ = [
    "SampleGrid",
    "CertificateError",
    "OneSidedOsgoodY",
    "ContinuityZ",
    "SubLinearDiffZ",
    "OneSidedSuperLinear",
    "QuadGrowth",
    "LocalLipschitzZ",
    "ConvexityZ",
    "OneSidedLinear",
    "MixedSubLinear",
    "check_certificate",
    "check_witnesses",
    "certificate_from_dict",
]

SIDES = ("sgn", "upper_on_nonpos", "lower_on_nonneg", "absolute")


class CertificateError(ValueError):
    """Certificate is malformed or lacks a required witness."""


@dataclass(frozen=True)
class SampleGrid:
    """Finite sampling grid for certificate checks.

    Pairwise conditions combine two copies of the y (or z) axis; the full
    Cartesian product is thinned uniformly to at most ``cap`` evaluations.
    """

    t_range: tuple = (0.0, 1.0)
    t_count: int = 21
    y_range: tuple = (-5.0, 5.0)
    y_count: int = 51
    z_range: tuple = (-5.0, 5.0)
    z_count: int = 51
    cap: int = 1_000_000

    def __post_init__(self):
        for name in ("t_count", "y_count", "z_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.cap < 1:
            raise ValueError("cap must be >= 1")

    def t_axis(self):
        return np.linspace(*self.t_range, self.t_count)

    def y_axis(self):
        return np.linspace(*self.y_range, self.y_count)

    def z_axis(self):
        return np.linspace(*self.z_range, self.z_count)

    def product(self, *axes):
        """Thinned Cartesian product of the given 1-d axes as flat arrays."""
        shape = tuple(len(a) for a in axes)
        total = math.prod(shape)
        stride = max(1, -(-total // self.cap))
        flat = np.arange(0, total, stride)
        idx = np.unravel_index(flat, shape)
        return tuple(a[i] for a, i in zip(axes, idx))


def _argworst(violation, coords, names):
    k = int(np.argmax(violation))
    return {n: float(c[k]) for n, c in zip(names, coords)}, float(violation[k])


def _sgn_gap(g, cert_rhs, t, y, z):
    """gap = g(t,y,z)*sgn(y) - rhs, the one-sided growth residual."""
    return g(t, y, z) * np.sign(y) - cert_rhs


# ---------------------------------------------------------------------------
# Certificate kinds


@dataclass(frozen=True)
class OneSidedOsgoodY:
    """(g(t,y1,z) - g(t,y2,z)) sgn(y1-y2) <= u(t) rho(|y1-y2|).

    rho must be nondecreasing with rho(0)=0 and rho(x) <= k (1+x).
    """

    u: WeightFn
    rho: Expression
    rho_growth_k: float

    def __post_init__(self):
        object.__setattr__(self, "rho", _as_univariate(self.rho))
        if self.rho_growth_k < 0:
            raise CertificateError("rho growth constant must be >= 0")

    def violation(self, g, grid):
        t, y1, y2, z = grid.product(grid.t_axis(), grid.y_axis(), grid.y_axis(), grid.z_axis())
        lhs = (g(t, y1, z) - g(t, y2, z)) * np.sign(y1 - y2)
        gap = lhs - self.u(t) * self.rho(np.abs(y1 - y2))
        loc, worst = _argworst(gap, (t, y1, y2, z), ("t", "y1", "y2", "z"))
        return worst, loc

    def witness_violation(self, grid):
        x = np.linspace(0.0, max(abs(grid.y_range[0]), abs(grid.y_range[1])) * 2, 512)
        r = np.asarray(self.rho(x))
        gaps = {
            "rho(0)=0": abs(float(r[0])),
            "rho nondecreasing": float(np.max(-(np.diff(r)))) if len(r) > 1 else 0.0,
            "rho linear growth": float(np.max(r - self.rho_growth_k * (1.0 + x))),
        }
        return gaps


@dataclass(frozen=True)
class ContinuityZ:
    """|g(t,y,z1) - g(t,y,z2)| <= v(t) phi(|z1-z2|) with phi(x) <= a x + b."""

    v: WeightFn
    phi: Expression
    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "phi", _as_univariate(self.phi))
        if self.a < 0 or self.b < 0:
            raise CertificateError("phi envelope slopes a, b must be >= 0")

    def violation(self, g, grid):
        t, y, z1, z2 = grid.product(grid.t_axis(), grid.y_axis(), grid.z_axis(), grid.z_axis())
        gap = np.abs(g(t, y, z1) - g(t, y, z2)) - self.v(t) * self.phi(np.abs(z1 - z2))
        loc, worst = _argworst(gap, (t, y, z1, z2), ("t", "y", "z1", "z2"))
        return worst, loc

    def witness_violation(self, grid):
        x = np.linspace(0.0, (grid.z_range[1] - grid.z_range[0]), 512)
        p = np.asarray(self.phi(x))
        return {
            "phi(0)=0": abs(float(p[0])),
            "phi nondecreasing": float(np.max(-(np.diff(p)))) if len(p) > 1 else 0.0,
            "phi <= a x + b": float(np.max(p - (self.a * x + self.b))),
        }


@dataclass(frozen=True)
class SubLinearDiffZ:
    """|g(t,y,z) - g(t,y,0)| <= lambda(t) |z|^alpha (or (f(t)+|y|+|z|)^alpha)."""

    lam: WeightFn
    alpha: float
    f: Optional[Expression] = None

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise CertificateError("alpha must lie in (0, 1)")
        if self.f is not None:
            object.__setattr__(self, "f", _as_univariate(self.f, hint="t"))

    def violation(self, g, grid):
        t, y, z = grid.product(grid.t_axis(), grid.y_axis(), grid.z_axis())
        if self.f is None:
            rhs = self.lam(t) * np.abs(z) ** self.alpha
        else:
            rhs = self.lam(t) * (self.f(t) + np.abs(y) + np.abs(z)) ** self.alpha
        gap = np.abs(g(t, y, z) - g(t, y, np.zeros_like(z))) - rhs
        loc, worst = _argworst(gap, (t, y, z), ("t", "y", "z"))
        return worst, loc

    def witness_violation(self, grid):
        if self.f is None:
            return {}
        t = grid.t_axis()
        return {"f >= 0": float(np.max(-(np.asarray(self.f(t)))))}


@dataclass(frozen=True)
class OneSidedSuperLinear:
    """g(t,y,z) sgn(y) <= u(t) l(y) + h(y) |z|^2, with l strictly positive."""

    u: WeightFn
    l: Expression
    h: Expression

    def __post_init__(self):
        object.__setattr__(self, "l", _as_univariate(self.l))
        object.__setattr__(self, "h", _as_univariate(self.h))

    def violation(self, g, grid):
        t, y, z = grid.product(grid.t_axis(), grid.y_axis(), grid.z_axis())
        gap = _sgn_gap(g, self.u(t) * self.l(y) + self.h(y) * z * z, t, y, z)
        loc, worst = _argworst(gap, (t, y, z), ("t", "y", "z"))
        return worst, loc

    def witness_violation(self, grid):
        y = grid.y_axis()
        lv = np.asarray(self.l(y))
        hv = np.asarray(self.h(y))
        return {
            "l strictly positive": float(np.max(-(lv - 1e-300))),
            "h nonnegative": float(np.max(-hv)),
        }


@dataclass(frozen=True)
class QuadGrowth:
    """|g(t,y,z)| <= u_bar(t) phi_bar(y) + h_bar(y) |z|^2."""

    u_bar: WeightFn
    phi_bar: Expression
    h_bar: Expression

    def __post_init__(self):
        object.__setattr__(self, "phi_bar", _as_univariate(self.phi_bar))
        object.__setattr__(self, "h_bar", _as_univariate(self.h_bar))

    def violation(self, g, grid):
        t, y, z = grid.product(grid.t_axis(), grid.y_axis(), grid.z_axis())
        gap = np.abs(g(t, y, z)) - (self.u_bar(t) * self.phi_bar(y) + self.h_bar(y) * z * z)
        loc, worst = _argworst(gap, (t, y, z), ("t", "y", "z"))
        return worst, loc

    def witness_violation(self, grid):
        y = grid.y_axis()
        return {
            "phi_bar nonnegative": float(np.max(-np.asarray(self.phi_bar(y)))),
            "h_bar nonnegative": float(np.max(-np.asarray(self.h_bar(y)))),
        }


@dataclass(frozen=True)
class LocalLipschitzZ:
    """|g(t,y,z1) - g(t,y,z2)| <= (v(t) + |z1| + |z2|) |z1 - z2|."""

    v: WeightFn

    def violation(self, g, grid):
        t, y, z1, z2 = grid.product(grid.t_axis(), grid.y_axis(), grid.z_axis(), grid.z_axis())
        rhs = (self.v(t) + np.abs(z1) + np.abs(z2)) * np.abs(z1 - z2)
        gap = np.abs(g(t, y, z1) - g(t, y, z2)) - rhs
        loc, worst = _argworst(gap, (t, y, z1, z2), ("t", "y", "z1", "z2"))
        return worst, loc

    def witness_violation(self, grid):
        return {}


@dataclass(frozen=True)
class ConvexityZ:
    """Midpoint convexity (or concavity) of z -> g(t, y, z) on the grid."""

    convex: bool = True

    def violation(self, g, grid):
        t, y, z1, z2 = grid.product(grid.t_axis(), grid.y_axis(), grid.z_axis(), grid.z_axis())
        mid = g(t, y, 0.5 * (z1 + z2))
        avg = 0.5 * (g(t, y, z1) + g(t, y, z2))
        gap = (mid - avg) if self.convex else (avg - mid)
        loc, worst = _argworst(gap, (t, y, z1, z2), ("t", "y", "z1", "z2"))
        return worst, loc

    def witness_violation(self, grid):
        return {}


def _check_side(side):
    if side not in SIDES:
        raise CertificateError(f"side must be one of {SIDES}, got {side!r}")


@dataclass(frozen=True)
class OneSidedLinear:
    """Linear growth restricted to a side of the y axis.

    side 'sgn':              g(t,y,z) sgn(y) <= f(t) + u(t)|y| + v(t)|z|
    side 'upper_on_nonpos':  for y <= 0,  g(t,y,z)   <= rhs
    side 'lower_on_nonneg':  for y >= 0, -g(t,y,z)   <= rhs
    side 'absolute':         |g(t,y,z)|               <= rhs
    """

    f: Expression
    u: WeightFn
    v: WeightFn
    side: str = "sgn"

    def __post_init__(self):
        object.__setattr__(self, "f", _as_univariate(self.f, hint="t"))
        _check_side(self.side)

    def _rhs(self, t, y, z):
        return self.f(t) + self.u(t) * np.abs(y) + self.v(t) * np.abs(z)

    def _lhs(self, g, t, y, z):
        val = g(t, y, z)
        if self.side == "sgn":
            return val * np.sign(y)
        if self.side == "upper_on_nonpos":
            return np.where(y <= 0, val, -np.inf)
        if self.side == "lower_on_nonneg":
            return np.where(y >= 0, -val, -np.inf)
        return np.abs(val)

    def violation(self, g, grid):
        t, y, z = grid.product(grid.t_axis(), grid.y_axis(), grid.z_axis())
        gap = self._lhs(g, t, y, z) - self._rhs(t, y, z)
        loc, worst = _argworst(gap, (t, y, z), ("t", "y", "z"))
        return worst, loc

    def witness_violation(self, grid):
        t = grid.t_axis()
        return {"f nonnegative": float(np.max(-np.asarray(self.f(t))))}

    def growth_bound(self):
        """(f, y-slope, z-slope) upper bound; only valid for side='absolute'."""
        if self.side != "absolute":
            raise CertificateError(
                "a global upper growth bound requires side='absolute'"
            )
        return self.f, self.u, self.v


@dataclass(frozen=True)
class MixedSubLinear:
    """Growth with the wedge modulus min(v(t)|z|, lambda(t)|z|^alpha) in z."""

    f: Expression
    u: WeightFn
    v: WeightFn
    lam: WeightFn
    alpha: float
    side: str = "sgn"

    def __post_init__(self):
        object.__setattr__(self, "f", _as_univariate(self.f, hint="t"))
        if not (0.0 < self.alpha < 1.0):
            raise CertificateError("alpha must lie in (0, 1)")
        _check_side(self.side)

    def _rhs(self, t, y, z):
        az = np.abs(z)
        wedge = np.minimum(self.v(t) * az, self.lam(t) * az**self.alpha)
        return self.f(t) + self.u(t) * np.abs(y) + wedge

    def violation(self, g, grid):
        t, y, z = grid.product(grid.t_axis(), grid.y_axis(), grid.z_axis())
        val = g(t, y, z)
        if self.side == "sgn":
            lhs = val * np.sign(y)
        elif self.side == "upper_on_nonpos":
            lhs = np.where(y <= 0, val, -np.inf)
        elif self.side == "lower_on_nonneg":
            lhs = np.where(y >= 0, -val, -np.inf)
        else:
            lhs = np.abs(val)
        gap = lhs - self._rhs(t, y, z)
        loc, worst = _argworst(gap, (t, y, z), ("t", "y", "z"))
        return worst, loc

    def witness_violation(self, grid):
        t = grid.t_axis()
        return {"f nonnegative": float(np.max(-np.asarray(self.f(t))))}


CERTIFICATE_KINDS = {
    "one_sided_osgood_y": OneSidedOsgoodY,
    "continuity_z": ContinuityZ,
    "sublinear_diff_z": SubLinearDiffZ,
    "one_sided_super_linear": OneSidedSuperLinear,
    "quad_growth": QuadGrowth,
    "local_lipschitz_z": LocalLipschitzZ,
    "convexity_z": ConvexityZ,
    "one_sided_linear": OneSidedLinear,
    "mixed_sublinear": MixedSubLinear,
}

_KIND_NAMES = {cls: name for name, cls in CERTIFICATE_KINDS.items()}


def _claim_of(cert):
    doc = (type(cert).__doc__ or "").strip().splitlines()[0]
    return doc


def check_certificate(g, cert, grid=None):
    """Evaluate the certificate's defining inequality over the sample grid.

    Returns a report whose violation is the largest sampled excess of the
    left-hand side over the right-hand side (positive means failed) together
    with the worst sample point.
    """
    if not hasattr(cert, "violation"):
        raise CertificateError(f"{cert!r} is not a certificate")
    grid = grid or SampleGrid()
    if isinstance(g, Expression):
        g = Generator(g)
    worst, loc = cert.violation(g, grid)
    return VerificationReport.from_violation(
        name=f"certificate:{_KIND_NAMES.get(type(cert), type(cert).__name__)}",
        claim=_claim_of(cert),
        violation=worst,
        location=loc,
    )


def check_witnesses(cert, grid=None):
    """Check the shape constraints on the certificate's witness functions.

    Monotonicity, zero-at-zero and growth caps are sampled on 1-d grids; the
    report's violation is the worst gap across all constraints.
    """
    grid = grid or SampleGrid()
    gaps = cert.witness_violation(grid)
    if not gaps:
        return VerificationReport.from_violation(
            name="witnesses", claim="no witness shape constraints", violation=0.0
        )
    worst_name = max(gaps, key=lambda k: gaps[k])
    return VerificationReport.from_violation(
        name="witnesses",
        claim="; ".join(gaps),
        violation=gaps[worst_name],
        location={"constraint": worst_name},
    )


def _weight_from(obj, default_tag="L1"):
    if isinstance(obj, WeightFn):
        return obj
    if isinstance(obj, dict):
        return WeightFn.parse(obj["expr"], obj.get("tag", default_tag), obj.get("alpha"))
    return WeightFn.parse(obj, default_tag)


def certificate_from_dict(raw):
    """Build a certificate from a plain dict, e.g. from a JSON config."""
    if "kind" not in raw:
        raise CertificateError("certificate dict needs a 'kind'")
    kind = raw["kind"]
    if kind not in CERTIFICATE_KINDS:
        raise CertificateError(f"unknown certificate kind {kind!r}")
    body = {k: v for k, v in raw.items() if k != "kind"}
    try:
        if kind == "one_sided_osgood_y":
            return OneSidedOsgoodY(
                _weight_from(body["u"]), body["rho"], float(body.get("rho_growth_k", 1.0))
            )
        if kind == "continuity_z":
            return ContinuityZ(
                _weight_from(body["v"], "L2"), body["phi"], float(body["a"]), float(body["b"])
            )
        if kind == "sublinear_diff_z":
            alpha = float(body["alpha"])
            lam = body["lambda"]
            if not isinstance(lam, (WeightFn, dict)):
                lam = {"expr": lam, "tag": "Lq", "alpha": alpha}
            return SubLinearDiffZ(_weight_from(lam, "Lq"), alpha, body.get("f"))
        if kind == "one_sided_super_linear":
            return OneSidedSuperLinear(_weight_from(body["u"]), body["l"], body["h"])
        if kind == "quad_growth":
            return QuadGrowth(_weight_from(body["u_bar"]), body["phi_bar"], body["h_bar"])
        if kind == "local_lipschitz_z":
            return LocalLipschitzZ(_weight_from(body["v"], "L2"))
        if kind == "convexity_z":
            return ConvexityZ(bool(body.get("convex", True)))
        if kind == "one_sided_linear":
            return OneSidedLinear(
                body["f"],
                _weight_from(body["u"]),
                _weight_from(body["v"], "L2"),
                body.get("side", "sgn"),
            )
        alpha = float(body["alpha"])
        lam = body["lambda"]
        if not isinstance(lam, (WeightFn, dict)):
            lam = {"expr": lam, "tag": "Lq", "alpha": alpha}
        return MixedSubLinear(
            body["f"],
            _weight_from(body["u"]),
            _weight_from(body["v"], "L2"),
            _weight_from(lam, "Lq"),
            alpha,
            body.get("side", "sgn"),
        )
    except KeyError as exc:
        raise CertificateError(f"certificate kind {kind!r} lacks witness {exc}") from exc
