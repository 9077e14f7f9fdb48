"""The porous-media nonlinearity and sampling checks of its structural bounds.

Two conditions are checked numerically, on deterministic grids plus seeded
random samples:

* growth:        ((p+1)^2/4) c2 |u|^(p-1) <= Phi'(u) <= c1 (1 + |u|^(p-1))
* monotonicity:  (Phi(u) - Phi(v)) (u - v) >= k |u - v|^(p+1) - a
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

# Slack within this relative distance of zero is rounding, not a violation.
REL_TOL = 1e-12


@dataclass(frozen=True)
class PhiSpec:
    """Choice of nonlinearity.

    ``power_law`` is ``u |u|^(p-1)``.  ``user_table`` is the piecewise-linear
    interpolant through ``table`` (pairs ``(u, Phi(u))``), extended linearly
    past the end points; it must pass through the origin and be increasing.
    """

    kind: Literal["power_law", "user_table"] = "power_law"
    p: float = 2.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.kind == "user_table":
            if len(self.table) < 2:
                raise ValueError("user_table needs at least two points")
            u = np.array([t[0] for t in self.table])
            f = np.array([t[1] for t in self.table])
            if np.any(np.diff(u) <= 0):
                raise ValueError("user_table abscissae must be strictly increasing")
            if np.any(np.diff(f) <= 0):
                raise ValueError("user_table values must be strictly increasing")
            if abs(np.interp(0.0, u, f)) > 1e-14:
                raise ValueError("user_table must satisfy Phi(0) = 0")
        elif self.kind != "power_law":
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")

    def _table(self):
        u = np.array([t[0] for t in self.table], dtype=float)
        f = np.array([t[1] for t in self.table], dtype=float)
        return u, f


def phi_array(spec: PhiSpec, u):
    u = np.asarray(u, dtype=float)
    if spec.kind == "power_law":
        if spec.p == 2.0:
            return u * np.abs(u)
        return u * np.abs(u) ** (spec.p - 1.0)
    xs, fs = spec._table()
    out = np.interp(u, xs, fs)
    lo, hi = u < xs[0], u > xs[-1]
    out = np.where(lo, fs[0] + (u - xs[0]) * (fs[1] - fs[0]) / (xs[1] - xs[0]), out)
    out = np.where(hi, fs[-1] + (u - xs[-1]) * (fs[-1] - fs[-2]) / (xs[-1] - xs[-2]), out)
    return out


def phi_prime_array(spec: PhiSpec, u):
    u = np.asarray(u, dtype=float)
    if spec.kind == "power_law":
        return spec.p * np.abs(u) ** (spec.p - 1.0)
    xs, fs = spec._table()
    slopes = np.diff(fs) / np.diff(xs)
    idx = np.clip(np.searchsorted(xs, u, side="right") - 1, 0, slopes.size - 1)
    return slopes[idx]


def phi_eval(spec: PhiSpec, u: float) -> float:
    return float(phi_array(spec, u))


def phi_prime(spec: PhiSpec, u: float) -> float:
    return float(phi_prime_array(spec, u))


@dataclass
class ConditionReport:
    condition: Literal["growth", "monotonicity"]
    constants: dict
    samples: int
    worst_margin: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        d = asdict(self)
        d["passed"] = self.passed
        return json.dumps(d, indent=2)

    def table(self) -> str:
        lines = [
            f"condition     {self.condition}",
            *(f"  {k:<11} {v:.6g}" for k, v in self.constants.items()),
            f"samples       {self.samples}",
            f"worst margin  {self.worst_margin:.6g}",
            f"verdict       {'PASS' if self.passed else 'FAIL'}",
        ]
        for w in self.violations[:5]:
            lines.append(f"  witness {w}")
        return "\n".join(lines)


def _clean_slack(slack: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return np.where(np.abs(slack) <= REL_TOL * np.maximum(scale, 1.0), 0.0, slack)


def growth_grid(u_max: float = 100.0, count: int = 1000) -> np.ndarray:
    """Log-spaced magnitudes up to ``u_max`` with both signs, plus 0."""
    mags = np.geomspace(u_max * 1e-6, u_max, count)
    return np.concatenate([[0.0], mags, -mags])


def verify_growth(
    spec: PhiSpec, c1: float, c2: float, u_max: float = 100.0, count: int = 1000
) -> ConditionReport:
    if not (c1 > 0 and c2 > 0):
        raise ValueError("c1 and c2 must be positive")
    p = spec.p
    u = growth_grid(u_max, count)
    d = phi_prime_array(spec, u)
    pw = np.abs(u) ** (p - 1.0)
    lower = (p + 1.0) ** 2 / 4.0 * c2 * pw
    upper = c1 * (1.0 + pw)
    slack_lo = _clean_slack(d - lower, np.maximum(np.abs(d), lower))
    slack_hi = _clean_slack(upper - d, np.maximum(np.abs(d), upper))
    violations = []
    for side, slack in (("lower", slack_lo), ("upper", slack_hi)):
        for i in np.flatnonzero(slack < 0):
            violations.append({"bound": side, "u": float(u[i]), "margin": float(slack[i])})
    violations.sort(key=lambda w: w["margin"])
    return ConditionReport(
        condition="growth",
        constants={"c1": c1, "c2": c2, "p": p},
        samples=int(u.size),
        worst_margin=float(min(slack_lo.min(), slack_hi.min())),
        violations=violations,
    )


def monotonicity_pairs(
    u_max: float = 10.0, grid: int = 201, random_pairs: int = 20000, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    g = np.linspace(-u_max, u_max, grid)
    gu, gv = np.meshgrid(g, g, indexing="ij")
    rng = np.random.default_rng(seed)
    # random pairs spread over several orders of magnitude
    ru = rng.standard_normal(random_pairs) * 10.0 ** rng.uniform(-3, 2, random_pairs)
    rv = rng.standard_normal(random_pairs) * 10.0 ** rng.uniform(-3, 2, random_pairs)
    return np.concatenate([gu.ravel(), ru]), np.concatenate([gv.ravel(), rv])


def verify_monotonicity(
    spec: PhiSpec,
    k: float,
    a_bound: float,
    u_max: float = 10.0,
    grid: int = 201,
    random_pairs: int = 20000,
    seed: int = 0,
) -> ConditionReport:
    if k <= 0:
        raise ValueError("k must be positive")
    if a_bound < 0:
        raise ValueError("a_bound must be nonnegative")
    u, v = monotonicity_pairs(u_max, grid, random_pairs, seed)
    lhs = (phi_array(spec, u) - phi_array(spec, v)) * (u - v)
    rhs = k * np.abs(u - v) ** (spec.p + 1.0)
    slack = _clean_slack(lhs - rhs + a_bound, np.maximum(np.abs(lhs), rhs))
    bad = np.flatnonzero(slack < 0)
    order = bad[np.argsort(slack[bad])]
    violations = [
        {"u": float(u[i]), "v": float(v[i]), "margin": float(slack[i])} for i in order[:50]
    ]
    return ConditionReport(
        condition="monotonicity",
        constants={"k": k, "a_bound": a_bound, "p": spec.p},
        samples=int(u.size),
        worst_margin=float(slack.min()),
        violations=violations,
    )


def suggested_constants(spec: PhiSpec) -> tuple[float, float, float]:
    """``(c1, c2, k)`` for which the power law meets both conditions with ``a = 0``."""
    if spec.kind != "power_law":
        raise ValueError("suggested constants are only available for the power law")
    p = spec.p
    return p, 4.0 * p / (p + 1.0) ** 2, 2.0 ** (1.0 - p)
