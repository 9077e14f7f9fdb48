"""Two-sided Wiener paths, the Wiener shift and the stationary Ornstein-Uhlenbeck process.

Paths live on the uniform grid ``t_k = k * dt`` for integer ``k`` in
``[k_min, k_max]`` with ``k_min <= 0 <= k_max``, so that time 0 is always a
node and shifts by grid multiples are exact index offsets.

Between nodes the Wiener path is taken piecewise linear.  The OU value is
then the exact stochastic convolution of that interpolant,

    z(t) = int_{-inf}^t e^{s-t} dw(s),

which obeys the one-step recursion ``z_{k+1} = e^{-dt} z_k + (1 - e^{-dt})/dt * (w_{k+1} - w_k)``.
The recursion starts from 0 at the earliest node, the part of the
integral left of the window being unavailable; its influence at time ``t``
is at most ``e^{t_min - t}`` times the path magnitude and is reported.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter


class GridError(ValueError):
    """Bad time grid or a request outside the sampled window."""


def _grid_index(t: float, dt: float) -> int:
    k = round(t / dt)
    if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise GridError(f"time {t} is not a multiple of the grid step {dt}")
    return int(k)


@dataclass(frozen=True, eq=False)
class _GridPath:
    seed: int
    dt: float
    k_min: int
    values: np.ndarray

    @property
    def k_max(self) -> int:
        return self.k_min + self.values.size - 1

    @property
    def t_min(self) -> float:
        return self.k_min * self.dt

    @property
    def t_max(self) -> float:
        return self.k_max * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1) * self.dt

    def index(self, t: float) -> int:
        """Array position of the grid time ``t``."""
        k = _grid_index(t, self.dt)
        if not self.k_min <= k <= self.k_max:
            raise GridError(f"time {t} outside [{self.t_min}, {self.t_max}]")
        return k - self.k_min

    def at(self, t: float) -> float:
        return float(self.values[self.index(t)])

    def interp(self, t):
        """Linear interpolation between nodes."""
        return np.interp(t, self.times, self.values)


@dataclass(frozen=True, eq=False)
class WienerPath(_GridPath):
    """Sampled two-sided Brownian path with ``w(0) = 0``.

    ``root`` keeps the originally sampled values and ``root_ref`` the index
    of the current origin inside it, so shifts compose exactly.
    """

    root: np.ndarray | None = None
    root_ref: int = 0

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


@dataclass(frozen=True, eq=False)
class OUPath(_GridPath):
    """Values ``z(theta_t omega)`` on the grid of the source Wiener path.

    ``source_sup`` is ``max |w|`` of the source path; together with
    ``t_min`` it bounds the effect of starting the recursion inside the
    window (see :meth:`truncation_bound`).
    """

    source_sup: float = 0.0

    @property
    def z_values(self) -> np.ndarray:
        return self.values

    def truncation_bound(self, t):
        return np.exp(self.t_min - np.asarray(t, dtype=float)) * 2.0 * self.source_sup

    def shift(self, s: float) -> OUPath:
        """The OU path of the shifted noise, ``tau -> z(theta_{tau+s} omega)``."""
        k = _grid_index(s, self.dt)
        if not self.k_min <= k <= self.k_max:
            raise GridError(f"shift {s} leaves the sampled window")
        return OUPath(self.seed, self.dt, self.k_min - k, self.values, self.source_sup)

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Node values from ``t0`` to ``t1`` inclusive."""
        return self.values[self.index(t0) : self.index(t1) + 1]

    def integral(self, t0: float, t1: float) -> float:
        """Exact integral of the piecewise-linear ``z`` between grid times."""
        if t1 < t0:
            return -self.integral(t1, t0)
        zz = self.window(t0, t1)
        return float(self.dt * (zz.sum() - 0.5 * (zz[0] + zz[-1]))) if zz.size > 1 else 0.0


def sample_wiener(seed: int, t_min: float, t_max: float, dt: float) -> WienerPath:
    """Seeded two-sided Brownian path.

    The forward (``t > 0``) and backward (``t < 0``) halves are drawn from
    two independent streams spawned from ``seed``, so each half only depends
    on the seed and its own length.
    """
    if not dt > 0:
        raise GridError("dt must be positive")
    if not t_min <= 0 <= t_max:
        raise GridError("the grid must satisfy t_min <= 0 <= t_max")
    if t_min == t_max:
        raise GridError("degenerate grid: t_min == t_max")
    k_min = -int(np.ceil(-t_min / dt - 1e-9))
    k_max = int(np.ceil(t_max / dt - 1e-9))
    fwd_ss, bwd_ss = np.random.SeedSequence(seed).spawn(2)
    sd = np.sqrt(dt)
    fwd = np.cumsum(np.random.default_rng(fwd_ss).normal(0.0, sd, k_max))
    bwd = np.cumsum(np.random.default_rng(bwd_ss).normal(0.0, sd, -k_min))
    values = np.concatenate([bwd[::-1], [0.0], fwd])
    values.setflags(write=False)
    return WienerPath(int(seed), float(dt), k_min, values)


def shift(path: WienerPath, s: float) -> WienerPath:
    """``(theta_s w)(tau) = w(tau + s) - w(s)`` on the shifted grid."""
    k = _grid_index(s, path.dt)
    if not path.k_min <= k <= path.k_max:
        raise GridError(
            f"shift {s} outside the sampled window [{path.t_min}, {path.t_max}]"
        )
    root = path.values if path.root is None else path.root
    ref = (-path.k_min if path.root is None else path.root_ref) + k
    values = root - root[ref]
    values.setflags(write=False)
    return WienerPath(path.seed, path.dt, path.k_min - k, values, root, ref)


def ou_path(path: WienerPath) -> OUPath:
    h = path.dt
    decay = np.exp(-h)
    gain = -np.expm1(-h) / h
    z = np.empty(path.values.size)
    z[0] = 0.0
    z[1:] = lfilter([gain], [1.0, -decay], path.increments())
    z.setflags(write=False)
    sup = float(np.max(np.abs(path.values)))
    return OUPath(path.seed, h, path.k_min, z, sup)


def z_direct(path: WienerPath, t: float) -> float:
    """``-int_{t_min - t}^0 e^tau (theta_t w)(tau) dtau`` for the piecewise-linear path."""
    i = path.index(t)
    h = path.dt
    f = path.values[: i + 1] - path.values[i]
    if f.size < 2:
        return 0.0
    s = path.times[:i]
    m = np.diff(f) / h
    eh = np.exp(h)
    cells = np.exp(s - t) * (f[:-1] * (eh - 1.0) + m * ((h - 1.0) * eh + 1.0))
    return -float(cells.sum())


@dataclass
class TemperednessReport:
    times: np.ndarray
    ratio: np.ndarray  # |z(theta_t w)| / |t|
    mean: np.ndarray  # (1/t) int_0^t z(theta_s w) ds
    threshold: float
    vanishing: bool
    decreasing: bool
    nonfinite: bool = False
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "vanishing" if self.vanishing else "not vanishing"

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "ratio": self.ratio.tolist(),
            "mean": self.mean.tolist(),
            "threshold": self.threshold,
            "verdict": self.verdict,
            "decreasing": self.decreasing,
            "nonfinite": self.nonfinite,
        }


def _running_integral(z: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros(z.size)
    out[1:] = np.cumsum(0.5 * dt * (z[1:] + z[:-1]))
    return out


def temperedness_diag(ou: OUPath, threshold: float = 0.05) -> TemperednessReport:
    """Sample ``|z|/|t|`` and the running mean of ``z`` at dyadic times ``+-2^j``.

    The verdict is "vanishing" when both diagnostics stay below
    ``threshold`` over the later half of the sampled dyadic times.
    """
    nonfinite = not bool(np.all(np.isfinite(ou.values)))
    i0 = ou.index(0.0)
    fwd = _running_integral(ou.values[i0:], ou.dt)
    bwd = _running_integral(ou.values[: i0 + 1][::-1], ou.dt)
    times, ratio, mean = [], [], []
    for sign, limit, cum in ((1, ou.t_max, fwd), (-1, -ou.t_min, bwd)):
        j = 0
        while 2.0**j <= limit + 1e-12:
            t = sign * 2.0**j
            j += 1
            try:
                k = _grid_index(t, ou.dt)
            except GridError:
                continue
            times.append(t)
            ratio.append(abs(ou.values[k - ou.k_min]) / abs(t))
            # (1/t) int_0^t z ds, oriented, equals int over [0,|t|] of the reflected path / |t|
            mean.append(cum[abs(k)] / abs(t))
    order = np.argsort(times)
    times, ratio, mean = (np.asarray(x, dtype=float)[order] for x in (times, ratio, mean))
    notes = []
    if nonfinite:
        notes.append("non-finite OU values encountered")
    vanishing, decreasing = False, False
    if times.size:
        late = np.abs(times) >= np.sqrt(np.max(np.abs(times)))
        vanishing = bool(
            not nonfinite
            and np.all(ratio[late] < threshold)
            and np.all(np.abs(mean[late]) < threshold)
        )
        logt = np.log(np.abs(times))
        y = np.log(np.maximum(ratio, 1e-300) + np.maximum(np.abs(mean), 1e-300))
        decreasing = bool(times.size > 1 and np.polyfit(logt, y, 1)[0] <= 0)
    else:
        notes.append("grid too short for dyadic sampling")
    return TemperednessReport(times, ratio, mean, threshold, vanishing, decreasing, nonfinite, notes)


def paths_to_csv(path: WienerPath, ou: OUPath | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "omega", "z"])
    z = ou.values if ou is not None else ou_path(path).values
    for t, om, zz in zip(path.times, path.values, z):
        w.writerow([repr(float(t)), repr(float(om)), repr(float(zz))])
    return buf.getvalue()


def path_manifest(path: WienerPath) -> str:
    return json.dumps(
        {
            "seed": path.seed,
            "dt": path.dt,
            "t_min": path.t_min,
            "t_max": path.t_max,
            "k_min": path.k_min,
            "k_max": path.k_max,
        },
        indent=2,
    )
