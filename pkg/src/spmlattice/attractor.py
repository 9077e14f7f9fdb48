"""Pullback experiments: absorbing radius, absorption, tail nullity and attraction.

Every experiment works on one long two-sided Wiener path per seed.  The
state ``phi(t, theta_{-t} omega) v0`` is obtained by integrating along the
OU path from time ``-t`` to ``0``; all pullback times of a seed are run in a
single staggered batch (rows join the integration at their own start time)
so different pullback times see exactly the same noise.

Random sets are finite sample clouds: 0, ``+-r e_i`` at a few sites and
``r`` times seeded random unit directions.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from spmlattice.dynamics import ModelParams, integrate_batch
from spmlattice.integrator import IntegrationError
from spmlattice.lattice import LatticeVector
from spmlattice.noise import GridError, OUPath, ou_path, sample_wiener

GAUSS_X, GAUSS_W = np.polynomial.legendre.leggauss(4)
GAUSS_X = 0.5 * (GAUSS_X + 1.0)
GAUSS_W = 0.5 * GAUSS_W

# Bound on |rho'| for the smoothstep cut-off used in the tail bound.
CUTOFF_SLOPE = 2.0


def cutoff(s):
    """C^1 cut-off: 0 on [0, 1], 1 on [2, inf), smoothstep in between."""
    x = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


class _SeedTagged:
    """Picklable wrapper that stamps the task's seed onto integration failures."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, task):
        try:
            return self.fn(task)
        except IntegrationError as exc:
            exc.seed = task[0]
            raise


def _map(fn, items, workers: int):
    fn = _SeedTagged(fn)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# absorbing radius


@dataclass
class AbsorbingRadius:
    R_squared: float
    horizon: float
    quad_dt: float
    tail_estimate: float
    at: float = 0.0  # evaluated for theta_at omega

    @property
    def R(self) -> float:
        return float(np.sqrt(self.R_squared))


def _weight_integral(ou: OUPath, params: ModelParams, t0: float, t1: float, quad_dt: float | None):
    """``int_{t0}^{t1} exp(-2a z(s) + lam (s - t1) + 2a int_s^{t1} z) ds`` (``a`` = alpha).

    ``z`` is linear on each OU cell, so the inner integral is exact and the
    outer one uses 4-point Gauss-Legendre panels inside the cells.
    Returns the integral and the integrand at ``t0``.
    """
    dt = ou.dt
    h = dt if quad_dt is None else quad_dt
    sub = int(round(dt / h))
    if sub < 1 or abs(sub * h - dt) > 1e-12 * dt:
        raise ValueError("quad_dt must divide the OU grid step")
    lam, al = params.lam, params.alpha
    zn = ou.window(t0, t1)
    if sub > 1:
        fine = np.linspace(0, 1, sub + 1)[:-1]
        zn = np.concatenate(
            [(zn[:-1, None] + fine[None, :] * np.diff(zn)[:, None]).ravel(), zn[-1:]]
        )
    n = zn.size - 1
    if n == 0:
        return 0.0, 1.0
    s_right = t1 - h * np.arange(n)[::-1]  # right end of each panel
    za, zb = zn[:-1], zn[1:]
    trap = 0.5 * h * (za + zb)
    q_right = np.concatenate([np.cumsum(trap[::-1])[::-1][1:], [0.0]])  # int_{panel end}^{t1} z
    x = GAUSS_X[None, :]
    zs = za[:, None] + x * (zb - za)[:, None]
    qs = q_right[:, None] + h * ((1 - x) * za[:, None] + 0.5 * (1 - x * x) * (zb - za)[:, None])
    s = s_right[:, None] - h * (1 - x)
    expo = -2.0 * al * zs + lam * (s - t1) + 2.0 * al * qs
    total = float(h * np.sum(GAUSS_W[None, :] * np.exp(expo)))
    q0 = q_right[0] + trap[0]
    left = float(np.exp(-2.0 * al * zn[0] + lam * (t0 - t1) + 2.0 * al * q0))
    return total, left


def absorbing_radius(
    ou: OUPath, params: ModelParams, horizon: float = 50.0, quad_dt: float | None = None, at: float = 0.0
) -> AbsorbingRadius:
    """Radius of the absorbing ball at ``theta_at omega``.

    ``R^2 = 1 + (8|g|^2/lambda + 2|a|_1) int_{-inf}^0 exp(-2 alpha z(s) + lambda s + 2 alpha int_s^0 z) ds``
    truncated to ``[-horizon, 0]``.  ``tail_estimate`` extrapolates the
    omitted part from the integrand at ``-horizon`` with the
    ``e^{lambda s}`` decay, inflated by ``e^{2 alpha max|z|}``; it is an
    estimate, not a rigorous bound.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if at - horizon < ou.t_min - 1e-12 or at > ou.t_max + 1e-12:
        raise GridError(
            f"horizon {horizon} at {at} exceeds the OU path domain [{ou.t_min}, {ou.t_max}]"
        )
    c = params.forcing_constant
    if c == 0.0:
        return AbsorbingRadius(1.0, horizon, quad_dt or ou.dt, 0.0, at)
    integral, left = _weight_integral(ou, params, at - horizon, at, quad_dt)
    zmax = float(np.max(np.abs(ou.window(at - horizon, at))))
    tail = c * left * np.exp(2.0 * params.alpha * zmax) * 2.0 / params.lam
    return AbsorbingRadius(1.0 + c * integral, horizon, quad_dt or ou.dt, float(tail), at)


def tail_energy(v: LatticeVector, I0: int) -> float:
    """``sum_{|i| > I0} v_i^2``."""
    n = v.half_width
    if not 0 <= I0 <= n:
        raise ValueError(f"I0 must lie in 0..{n}, got {I0}")
    x = v.values
    return float(np.sum(x[: n - I0] ** 2) + np.sum(x[n + I0 + 1 :] ** 2))


def _tail_profile(x: np.ndarray) -> np.ndarray:
    """``T[I0] = sum_{|i|>I0} x_i^2`` for all ``I0 = 0..N`` (last axis = sites)."""
    n = (x.shape[-1] - 1) // 2
    sq = x**2
    pair = sq[..., n + 1 :] + sq[..., :n][..., ::-1]  # |i| = 1..N
    rev = np.cumsum(pair[..., ::-1], axis=-1)[..., ::-1]  # sum over |i| >= k, k = 1..N
    return np.concatenate([rev, np.zeros(x.shape[:-1] + (1,))], axis=-1)


def hausdorff_semidistance(X, Y) -> float:
    """``sup_{x in X} inf_{y in Y} |x - y|`` over finite sets of lattice vectors."""
    Xa = np.array([x.values if isinstance(x, LatticeVector) else x for x in X], dtype=float)
    Ya = np.array([y.values if isinstance(y, LatticeVector) else y for y in Y], dtype=float)
    if Xa.size == 0 or Ya.size == 0 or len(X) == 0 or len(Y) == 0:
        raise ValueError("both sets must be non-empty")
    if Xa.shape[1] != Ya.shape[1]:
        raise ValueError("sets live on different truncations")
    return float(np.max(np.min(cdist(Xa, Ya), axis=1)))


def sample_ball(half_width: int, radius: float, seed: int, n_random: int = 4, sites=None) -> np.ndarray:
    """Deterministic cloud in the ball: 0, +-radius e_i, and radius * random unit vectors."""
    n = half_width
    size = 2 * n + 1
    if sites is None:
        sites = sorted({0, -(n // 2), n // 2})
    pts = [np.zeros(size)]
    for i in sites:
        for sgn in (1.0, -1.0):
            e = np.zeros(size)
            e[i + n] = sgn * radius
            pts.append(e)
    rng = np.random.default_rng([int(seed), 7919])
    for _ in range(n_random):
        d = rng.standard_normal(size)
        pts.append(radius * d / np.linalg.norm(d))
    return np.array(pts)


def pullback_path(seed: int, span: float, dt: float) -> OUPath:
    """OU path of a seed over a window reaching back ``max(50, 10 span)``."""
    t_min = -max(50.0, 10.0 * span)
    return ou_path(sample_wiener(seed, t_min, dt, dt))


def pullback_states(ou: OUPath, params: ModelParams, V0: np.ndarray, pullback_times, tol: float):
    """``phi(t, theta_{-t} omega) v`` for every ``t`` in ``pullback_times`` and every row of ``V0``.

    ``V0`` is ``(samples, sites)`` or ``(times, samples, sites)`` when the
    initial cloud depends on the pullback time.  Returns
    ``(times, samples, sites)``.
    """
    times = np.asarray(pullback_times, dtype=float)
    tmax = float(times.max())
    V0 = np.asarray(V0, dtype=float)
    if V0.ndim == 2:
        V0 = np.broadcast_to(V0, (times.size,) + V0.shape)
    m = V0.shape[1]
    rows = V0.reshape(-1, V0.shape[-1])
    starts = np.repeat(tmax - times, m)
    base = ou.shift(-tmax)
    _, states, _ = integrate_batch(rows, [base] * rows.shape[0], params, tmax, tol, [tmax], starts)
    return states[-1].reshape(times.size, m, -1)


# absorption


@dataclass
class AttractorReport:
    """Per-seed, per-pullback-time diagnostics of one experiment."""

    experiment: str
    pullback_times: list
    seeds: list
    radius_sq: dict = field(default_factory=dict)  # seed -> R^2(omega)
    max_norm: dict = field(default_factory=dict)  # seed -> [max sample norm per t]
    inside: dict = field(default_factory=dict)  # seed -> [bool per t]
    absorption_time: dict = field(default_factory=dict)  # seed -> first t absorbed for good
    bound_time: dict = field(default_factory=dict)  # seed -> first t the energy bound guarantees it
    tail_profiles: dict = field(default_factory=dict)  # seed -> [[sup tail per I0] per t]
    distances: dict = field(default_factory=dict)  # seed -> {"AB": [...], "BA": [...], "mutual": [...]}
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def enc(o):
            if isinstance(o, np.ndarray):
                return o.tolist()
            if isinstance(o, (np.floating, np.integer, np.bool_)):
                return o.item()
            raise TypeError(type(o))

        return json.dumps(
            {k: ({str(kk): vv for kk, vv in v.items()} if isinstance(v, dict) else v)
             for k, v in self.__dict__.items()},
            default=enc,
            indent=2,
            sort_keys=True,
        )

    def matrix_csv(self) -> str:
        """Rows: pullback time; columns: per-seed diagnostics."""
        cols, data = [], []
        for seed in self.seeds:
            for name, src in (("max_norm", self.max_norm), ("inside", self.inside)):
                if seed in src:
                    cols.append(f"{name}_s{seed}")
                    data.append([float(x) for x in src[seed]])
            if seed in self.distances:
                cols.append(f"mutual_s{seed}")
                data.append([float(x) for x in self.distances[seed]["mutual"]])
            if seed in self.extra.get("min_I0", {}):
                cols.append(f"min_I0_s{seed}")
                data.append([float(x) for x in self.extra["min_I0"][seed]])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + cols)
        for j, t in enumerate(self.pullback_times):
            w.writerow([repr(float(t))] + [repr(col[j]) for col in data])
        return buf.getvalue()

    def long_csv(self) -> str:
        """Plot-ready long format: experiment, seed, t, quantity, value."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "seed", "t", "quantity", "value"])
        for seed in self.seeds:
            series = {}
            if seed in self.max_norm:
                series["max_norm"] = self.max_norm[seed]
            if seed in self.distances:
                series.update({f"dist_{k}": v for k, v in self.distances[seed].items()})
            if seed in self.extra.get("min_I0", {}):
                series["min_I0"] = self.extra["min_I0"][seed]
            for q, vals in series.items():
                for t, val in zip(self.pullback_times, vals):
                    w.writerow([self.experiment, seed, repr(float(t)), q, repr(float(val))])
            if seed in self.radius_sq:
                w.writerow([self.experiment, seed, "0.0", "R_squared", repr(float(self.radius_sq[seed]))])
        return buf.getvalue()


def _bound_time(ou: OUPath, params: ModelParams, B: float, tmax: float) -> float:
    """First grid time after which ``e^{-lambda t + 2 alpha int_{-t}^0 z} B^2 <= 1`` stays true up to ``tmax``."""
    if B <= 1.0:
        return 0.0
    zz = ou.window(-tmax, 0.0)[::-1]  # z at 0, -dt, -2dt, ...
    cum = np.concatenate([[0.0], np.cumsum(0.5 * ou.dt * (zz[1:] + zz[:-1]))])
    t = np.arange(zz.size) * ou.dt
    ok = -params.lam * t + 2.0 * params.alpha * cum + 2.0 * np.log(B) <= 0.0
    if not ok[-1]:
        return float("inf")
    bad = np.flatnonzero(~ok)
    return float(t[bad[-1] + 1]) if bad.size else 0.0


def _absorb_seed(args):
    seed, B, times, params, dt, tol, horizon, n_random = args
    tmax = max(times)
    ou = pullback_path(seed, tmax + horizon, dt)
    R = absorbing_radius(ou, params, horizon)
    V0 = sample_ball(params.half_width, B, seed, n_random)
    if B == 0:
        V0 = V0[:1]
    final = pullback_states(ou, params, V0, times, tol)
    norms = np.sqrt(np.sum(final**2, axis=-1)).max(axis=1)
    inside = norms <= R.R
    absorbed = None
    for j in range(len(times)):
        if np.all(inside[j:]):
            absorbed = times[j]
            break
    return {
        "R2": R.R_squared,
        "max_norm": norms.tolist(),
        "inside": inside.tolist(),
        "absorbed": absorbed,
        "bound_time": _bound_time(ou, params, B, tmax),
    }


def absorption_experiment(
    B_radius: float,
    pullback_times,
    seeds,
    params: ModelParams,
    *,
    dt: float = 0.01,
    tol: float = 1e-7,
    horizon: float = 50.0,
    n_random: int = 4,
    workers: int = 1,
) -> AttractorReport:
    """Pull a ball of radius ``B_radius`` back and compare its image with ``R(omega)``.

    ``absorption_time`` is the first tested time from which every later
    tested time has all samples inside the ball of radius ``R(omega)``;
    ``bound_time`` is when the energy bound itself guarantees absorption.
    """
    times = sorted(float(t) for t in pullback_times)
    if not times or times[0] <= 0:
        raise ValueError("pullback times must be positive")
    if B_radius < 0:
        raise ValueError("B_radius must be nonnegative")
    tasks = [(int(s), float(B_radius), times, params, dt, tol, horizon, n_random) for s in seeds]
    results = _map(_absorb_seed, tasks, workers)
    rep = AttractorReport("absorb", times, [int(s) for s in seeds])
    for s, r in zip(rep.seeds, results):
        rep.radius_sq[s] = r["R2"]
        rep.max_norm[s] = r["max_norm"]
        rep.inside[s] = r["inside"]
        rep.absorption_time[s] = r["absorbed"]
        rep.bound_time[s] = r["bound_time"]
    rep.extra["B_radius"] = B_radius
    return rep


# temperedness of R^2


@dataclass
class RTemperednessReport:
    seeds: list
    gammas: list
    times: list
    radius_sq: dict  # seed -> [R^2(theta_{-t} omega)]
    weighted: dict  # (seed, gamma) -> [e^{-gamma t} R^2(theta_{-t} omega)]
    decreasing: dict
    decay_ratio: dict  # final / initial
    threshold: float = 1e-2

    @property
    def passed(self) -> bool:
        return all(self.decreasing.values()) and all(r < self.threshold for r in self.decay_ratio.values())

    def to_json(self) -> str:
        return json.dumps(
            {
                "seeds": self.seeds,
                "gammas": self.gammas,
                "times": self.times,
                "radius_sq": {str(k): v for k, v in self.radius_sq.items()},
                "weighted": {f"{k[0]}:{k[1]}": v for k, v in self.weighted.items()},
                "decreasing": {f"{k[0]}:{k[1]}": v for k, v in self.decreasing.items()},
                "decay_ratio": {f"{k[0]}:{k[1]}": v for k, v in self.decay_ratio.items()},
                "passed": self.passed,
            },
            indent=2,
            sort_keys=True,
        )


def temperedness_of_R(
    seeds, gamma_list, t_list, params: ModelParams, *, dt: float = 0.01, horizon: float = 50.0,
    threshold: float = 1e-2,
) -> RTemperednessReport:
    """``e^{-gamma t} R^2(theta_{-t} omega)`` along ``t_list``.

    ``decreasing`` asks for a negative log-linear trend; ``decay_ratio`` is
    the final value over the first.
    """
    times = [float(t) for t in t_list]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("t_list must be increasing")
    radius_sq, weighted, decreasing, ratio = {}, {}, {}, {}
    for seed in seeds:
        ou = pullback_path(int(seed), max(times) + horizon, dt)
        r2 = np.array([absorbing_radius(ou, params, horizon, at=-t).R_squared for t in times])
        radius_sq[int(seed)] = r2.tolist()
        for gam in gamma_list:
            w = np.exp(-gam * np.array(times)) * r2
            key = (int(seed), float(gam))
            weighted[key] = w.tolist()
            slope = np.polyfit(times, np.log(w), 1)[0] if len(times) > 1 else 0.0
            decreasing[key] = bool(slope < 0)
            ratio[key] = float(w[-1] / w[0])
    return RTemperednessReport([int(s) for s in seeds], [float(g) for g in gamma_list], times,
                               radius_sq, weighted, decreasing, ratio, threshold)


# tail nullity


def _nullity_seed(args):
    seed, eps, times, params, dt, tol, horizon, n_random = args
    tmax = max(times)
    n = params.half_width
    ou = pullback_path(seed, tmax + horizon, dt)
    R0 = absorbing_radius(ou, params, horizon)
    sites = sorted({-n, -(n // 2), 0, n // 2, n})
    clouds = []
    r_start = []
    for t in times:
        Rt = absorbing_radius(ou, params, horizon, at=-t)
        r_start.append(Rt.R)
        clouds.append(sample_ball(n, Rt.R, seed, n_random, sites))
    final = pullback_states(ou, params, np.array(clouds), times, tol)
    prof = _tail_profile(final).max(axis=1)  # (times, N+1): sup over samples
    min_I0 = [int(np.flatnonzero(row <= eps * eps)[0]) for row in prof]
    # components of the cut-off energy bound at the detected I0
    c1 = params.p
    forcing_tail = 2.0 * params.a.values + params.g.values**2 / params.lam
    absi = np.abs(np.arange(-n, n + 1))
    comps = []
    for j, t in enumerate(times):
        zint = ou.integral(-t, 0.0)
        decay = float(np.exp(-params.lam * t + 2.0 * params.alpha * zint)) * r_start[j] ** 2
        ncut = max(1, min_I0[j])
        diss = 6.0 * CUTOFF_SLOPE * c1 / (params.lam * ncut) * R0.R_squared
        wint, _ = _weight_integral(ou, params, -t, 0.0, None)
        force = float(forcing_tail[absi >= ncut].sum()) * wint
        cut_energy = float(np.max(np.sum(cutoff(absi / ncut) * final[j] ** 2, axis=-1)))
        comps.append({"I0": ncut, "decay_term": decay, "dissipation_term": diss,
                      "forcing_term": force, "cutoff_energy": cut_energy})
    return {"R2": R0.R_squared, "profile": prof.tolist(), "min_I0": min_I0, "components": comps}


def nullity_experiment(
    epsilon: float,
    pullback_times,
    seeds,
    params: ModelParams,
    *,
    dt: float = 0.01,
    tol: float = 1e-7,
    horizon: float = 50.0,
    n_random: int = 4,
    workers: int = 1,
) -> AttractorReport:
    """Minimal ``I0`` with ``sup_v sum_{|i|>I0} |phi_i(t, theta_{-t} w, v)|^2 <= eps^2``.

    Initial data are sample clouds of the absorbing ball ``K(theta_{-t} omega)``.
    ``extra["T_N"]`` holds, per seed, the earliest tested time from which
    the detected ``I0`` never increases again together with the largest
    ``I0`` seen from then on.
    """
    times = sorted(float(t) for t in pullback_times)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    tasks = [(int(s), float(epsilon), times, params, dt, tol, horizon, n_random) for s in seeds]
    results = _map(_nullity_seed, tasks, workers)
    rep = AttractorReport("tails", times, [int(s) for s in seeds])
    rep.extra.update({"epsilon": epsilon, "min_I0": {}, "components": {}, "T_N": {}})
    for s, r in zip(rep.seeds, results):
        rep.radius_sq[s] = r["R2"]
        rep.tail_profiles[s] = r["profile"]
        rep.extra["min_I0"][s] = r["min_I0"]
        rep.extra["components"][s] = r["components"]
        m = r["min_I0"]
        j0 = next(j for j in range(len(m)) if all(m[k + 1] <= m[k] for k in range(j, len(m) - 1)))
        rep.extra["T_N"][s] = (times[j0], max(m[j0:]))
    return rep


# pullback attraction


def _pullback_seed(args):
    seed, A, B, times, params, dt, tol = args
    ou = pullback_path(seed, max(times), dt)
    V0 = np.concatenate([A, B])
    final = pullback_states(ou, params, V0, times, tol)
    na = A.shape[0]
    ab, ba = [], []
    for j in range(len(times)):
        ab.append(hausdorff_semidistance(final[j, :na], final[j, na:]))
        ba.append(hausdorff_semidistance(final[j, na:], final[j, :na]))
    return {"AB": ab, "BA": ba, "mutual": [max(x, y) for x, y in zip(ab, ba)]}


def pullback_attraction(
    setA,
    setB,
    pullback_times,
    seed,
    params: ModelParams,
    *,
    dt: float = 0.01,
    tol: float = 1e-7,
    workers: int = 1,
) -> AttractorReport:
    """Hausdorff semi-distances between the pullback images of two finite sets.

    ``seed`` may be a single seed or a list of seeds.
    """
    A = np.array([x.values if isinstance(x, LatticeVector) else x for x in setA], dtype=float)
    B = np.array([x.values if isinstance(x, LatticeVector) else x for x in setB], dtype=float)
    if A.size == 0 or B.size == 0:
        raise ValueError("both sets must be non-empty")
    seeds = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    times = sorted(float(t) for t in pullback_times)
    tasks = [(s, A, B, times, params, dt, tol) for s in seeds]
    results = _map(_pullback_seed, tasks, workers)
    rep = AttractorReport("pullback", times, seeds)
    for s, r in zip(seeds, results):
        rep.distances[s] = r
    return rep
