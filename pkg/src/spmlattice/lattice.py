"""Finite truncations of the lattice sequence spaces and the difference operators.

A state lives on the sites ``-N..N`` and is extended by zeros outside that
window (homogeneous Dirichlet padding).  The forward and backward
differences ``B`` and ``B*`` return their result on the one-site-wider window
``-(N+1)..N+1`` so that the bond between the last site and the zero padding
is kept; with that convention ``(Au, u) = ||Bu||^2`` holds exactly on the
truncation and ``A`` is recovered as ``B`` composed with ``B*`` restricted
back to ``-N..N``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np


class LatticeError(ValueError):
    """Invalid lattice data or incompatible truncations."""


def _as_values(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise LatticeError(f"lattice values must be one-dimensional, got shape {arr.shape}")
    if arr.size % 2 != 1:
        raise LatticeError(f"lattice length must be odd (2N+1), got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise LatticeError("lattice values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LatticeVector:
    """Real state indexed by the sites ``-N..N``."""

    values: np.ndarray

    def __init__(self, values):
        object.__setattr__(self, "values", _as_values(values))

    @property
    def half_width(self) -> int:
        return (self.values.size - 1) // 2

    @property
    def sites(self) -> np.ndarray:
        n = self.half_width
        return np.arange(-n, n + 1)

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, site: int) -> float:
        n = self.half_width
        if not -n <= site <= n:
            raise IndexError(f"site {site} outside -{n}..{n}")
        return float(self.values[site + n])

    def _check(self, other: LatticeVector) -> None:
        if other.half_width != self.half_width:
            raise LatticeError(
                f"half_width mismatch: {self.half_width} vs {other.half_width}"
            )

    def __add__(self, other: LatticeVector) -> LatticeVector:
        self._check(other)
        return LatticeVector(self.values + other.values)

    def __sub__(self, other: LatticeVector) -> LatticeVector:
        self._check(other)
        return LatticeVector(self.values - other.values)

    def __mul__(self, c: float) -> LatticeVector:
        return LatticeVector(self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> LatticeVector:
        return LatticeVector(-self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticeVector):
            return NotImplemented
        return self.half_width == other.half_width and bool(
            np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"LatticeVector(N={self.half_width}, values={self.values!r})"

    # constructors

    @classmethod
    def zeros(cls, half_width: int) -> LatticeVector:
        if half_width < 0:
            raise LatticeError("half_width must be >= 0")
        return cls(np.zeros(2 * half_width + 1))

    @classmethod
    def unit(cls, half_width: int, site: int) -> LatticeVector:
        """The unit vector ``e_site``."""
        v = np.zeros(2 * half_width + 1)
        if not -half_width <= site <= half_width:
            raise LatticeError(f"site {site} outside -{half_width}..{half_width}")
        v[site + half_width] = 1.0
        return cls(v)

    @classmethod
    def from_function(cls, half_width: int, f) -> LatticeVector:
        sites = np.arange(-half_width, half_width + 1)
        return cls(np.asarray(f(sites), dtype=float) * np.ones(sites.size))

    def widen(self, half_width: int) -> LatticeVector:
        """Zero-pad to a larger window."""
        if half_width < self.half_width:
            raise LatticeError("cannot widen to a smaller half_width")
        pad = half_width - self.half_width
        return LatticeVector(np.pad(self.values, pad))

    def restrict(self, half_width: int) -> LatticeVector:
        if half_width > self.half_width:
            raise LatticeError("cannot restrict to a larger half_width")
        cut = self.half_width - half_width
        return LatticeVector(self.values[cut : self.values.size - cut])

    # serialization

    def to_json(self) -> str:
        return json.dumps({"half_width": self.half_width, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> LatticeVector:
        data = json.loads(text)
        vec = cls(data["values"])
        if vec.half_width != int(data["half_width"]):
            raise LatticeError("half_width does not match the number of values")
        return vec

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["site", "value"])
        for i, x in zip(self.sites, self.values):
            writer.writerow([int(i), repr(float(x))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> LatticeVector:
        rows = list(csv.DictReader(io.StringIO(text)))
        sites = np.array([int(r["site"]) for r in rows])
        values = np.array([float(r["value"]) for r in rows])
        n = (len(rows) - 1) // 2
        if not np.array_equal(np.sort(sites), np.arange(-n, n + 1)):
            raise LatticeError("CSV sites must cover -N..N exactly once")
        out = np.empty_like(values)
        out[sites + n] = values
        return cls(out)


class SiteSequence(LatticeVector):
    """Per-site coefficient sequence (forcing ``g``, the ``a_i`` of the monotonicity bound)."""

    def __init__(self, values, role: str = "g"):
        super().__init__(values)
        object.__setattr__(self, "role", role)
        if role == "a" and np.any(self.values < 0):
            raise LatticeError("the sequence a must be nonnegative")

    def __repr__(self) -> str:
        return f"SiteSequence(role={self.role!r}, N={self.half_width})"


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, LatticeVector) else np.asarray(u, dtype=float)


# Array kernels act on the last axis so that batches of states share them.


def diff_forward(u: np.ndarray) -> np.ndarray:
    """``u_{i+1} - u_i`` for ``i = -(N+1)..N+1`` with zero padding."""
    pad = [(0, 0)] * (u.ndim - 1) + [(2, 2)]
    p = np.pad(u, pad)
    return p[..., 2:] - p[..., 1:-1]


def diff_backward(u: np.ndarray) -> np.ndarray:
    """``u_{i-1} - u_i`` for ``i = -(N+1)..N+1`` with zero padding."""
    pad = [(0, 0)] * (u.ndim - 1) + [(2, 2)]
    p = np.pad(u, pad)
    return p[..., :-2] - p[..., 1:-1]


def laplacian(u: np.ndarray) -> np.ndarray:
    """``-u_{i-1} + 2u_i - u_{i+1}`` on ``-N..N`` with zero padding."""
    out = 2.0 * u
    out[..., 1:] -= u[..., :-1]
    out[..., :-1] -= u[..., 1:]
    return out


def apply_B(u: LatticeVector) -> LatticeVector:
    """Forward difference; the result lives on ``-(N+1)..N+1``."""
    return LatticeVector(diff_forward(_vals(u)))


def apply_Bstar(u: LatticeVector) -> LatticeVector:
    """Backward difference (adjoint of ``B``); the result lives on ``-(N+1)..N+1``."""
    return LatticeVector(diff_backward(_vals(u)))


def apply_A(u: LatticeVector) -> LatticeVector:
    return LatticeVector(laplacian(_vals(u)))


def inner_product(u: LatticeVector, w: LatticeVector) -> float:
    """Inner product; the narrower argument is zero-padded to the wider window."""
    a, b = _vals(u), _vals(w)
    if a.size != b.size:
        pad = abs(a.size - b.size) // 2
        if a.size < b.size:
            a = np.pad(a, pad)
        else:
            b = np.pad(b, pad)
    return float(np.dot(a, b))


def norm_l2(u) -> float:
    return float(np.sqrt(np.dot(_vals(u), _vals(u))))


def norm_lp(u, q: float) -> float:
    if q < 1:
        raise LatticeError(f"norm exponent must be >= 1, got {q}")
    return float(np.sum(np.abs(_vals(u)) ** q) ** (1.0 / q))


def norm_l1(u) -> float:
    return float(np.sum(np.abs(_vals(u))))
