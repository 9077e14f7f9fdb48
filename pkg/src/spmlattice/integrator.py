"""Adaptive Dormand-Prince 5(4) stepping for batches of lattice states.

The driver advances an array ``y`` of shape ``(rows, sites)`` with one
shared step size.  Steps never straddle a *stop* time, which lets callers
keep the right-hand side smooth inside every step (the OU path is only
piecewise linear) and read states at exact checkpoint times.

Rows may start late: a row whose start time has not been reached is held
at zero with zero derivative and contributes nothing to the error norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

SAFETY = 0.9
PI_ALPHA = 0.7 / 5
PI_BETA = 0.4 / 5
MAX_GROWTH = 5.0
MIN_SHRINK = 0.2


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float, row: int | None = None):
        super().__init__(f"{message} at t={t:.10g}" + ("" if row is None else f" (row {row})"))
        self.message = message
        self.t = t
        self.row = row
        self.seed = None

    def __reduce__(self):
        # keep (message, t, row) and any seed tag across process boundaries
        return (type(self), (self.message, self.t, self.row), self.__dict__)


class StepSizeUnderflow(IntegrationError):
    """The controller drove the step below the representable resolution."""


class BlowUpError(IntegrationError):
    """The state left the admissible magnitude or became non-finite."""


@dataclass
class StepLog:
    accepted: int = 0
    rejected: int = 0
    times: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    errors: list = field(default_factory=list)


def dopri5(
    f,
    t0: float,
    y0: np.ndarray,
    stops: np.ndarray,
    tol: float,
    *,
    checkpoints: np.ndarray | None = None,
    starts: np.ndarray | None = None,
    blowup: float = 1e8,
    h_max: float = np.inf,
    log_steps: bool = True,
):
    """Integrate ``y' = f(t, y)`` from ``t0`` through the sorted ``stops``.

    The local error estimate of each step, divided by the step length, is
    held below ``tol * max(1, |y_row|_inf)`` for every row (error per unit
    time).  Returns ``(checkpoint_times, states, log)`` where ``states`` has
    shape ``(len(checkpoints), rows, sites)``.
    """
    y = np.array(y0, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    stops = np.asarray(stops, dtype=float)
    if stops.size == 0 or stops[0] <= t0 or np.any(np.diff(stops) <= 0):
        raise ValueError("stops must be strictly increasing and after t0")
    if checkpoints is None:
        checkpoints = stops[-1:]
    checkpoints = np.asarray(checkpoints, dtype=float)
    want = np.isin(stops, checkpoints)
    record_t0 = bool(np.any(np.isclose(checkpoints, t0, rtol=0, atol=1e-12)))

    rows = y.shape[0]
    if starts is None:
        active = np.ones(rows, dtype=bool)
        y_start = None
    else:
        starts = np.asarray(starts, dtype=float)
        y_start = y.copy()
        active = starts <= t0 + 1e-12
        y[~active] = 0.0

    out_t, out_y = [], []
    if record_t0:
        out_t.append(t0)
        out_y.append(y.copy())

    log = StepLog()
    t = t0
    h = min(h_max, stops[0] - t0)
    err_prev = 1.0
    k1 = None
    mask = active[:, None].astype(float)

    def stage(tt, yy):
        with np.errstate(over="raise", invalid="raise"):
            try:
                d = f(tt, yy)
            except FloatingPointError as exc:
                raise BlowUpError(f"floating point overflow in right-hand side ({exc})", tt) from None
        return d * mask

    for j, stop in enumerate(stops):
        while t < stop:
            if k1 is None:
                k1 = stage(t, y)
            h_eff = min(h, stop - t)
            last = h_eff >= stop - t
            if h_eff < 1e-13 * max(1.0, abs(t)):
                raise StepSizeUnderflow("step size underflow", t)
            ks = [k1]
            for i in range(1, 7):
                yi = y + h_eff * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
                ks.append(stage(t + _C[i] * h_eff, yi))
            y_new = y + h_eff * sum(b * k for b, k in zip(_B5, ks) if b != 0.0)
            e = h_eff * sum(c * k for c, k in zip(_E, ks) if c != 0.0)
            scale = tol * np.maximum(1.0, np.max(np.abs(y_new), axis=1))
            err = float(np.max(np.max(np.abs(e), axis=1) / (h_eff * scale)))
            if not np.isfinite(err):
                raise BlowUpError("non-finite error estimate", t)
            if err <= 1.0:
                t_next = stop if last else t + h_eff
                y = y_new
                k1 = ks[6]  # first-same-as-last
                norms = np.sqrt(np.sum(y * y, axis=1))
                if np.any(~np.isfinite(norms)) or np.any(norms > blowup):
                    bad = int(np.argmax(np.where(np.isfinite(norms), norms, np.inf)))
                    raise BlowUpError("state norm exceeded the blow-up guard", t_next, bad)
                log.accepted += 1
                if log_steps:
                    log.times.append(t_next)
                    log.steps.append(h_eff)
                    log.errors.append(err)
                fac = SAFETY * max(err, 1e-10) ** -PI_ALPHA * err_prev**PI_BETA
                err_prev = max(err, 1e-4)
                t = t_next
                if not last:
                    h = h_eff * min(MAX_GROWTH, max(MIN_SHRINK, fac))
                else:
                    h = max(h, h_eff * min(MAX_GROWTH, max(MIN_SHRINK, fac)))
                h = min(h, h_max)
            else:
                log.rejected += 1
                fac = SAFETY * err ** -(1 / 5)
                h = h_eff * max(MIN_SHRINK, min(1.0, fac))
        if starts is not None:
            newly = (~active) & (starts <= t + 1e-12)
            if np.any(newly):
                active |= newly
                y[newly] = y_start[newly]
                mask = active[:, None].astype(float)
                k1 = None
        if want[j]:
            out_t.append(t)
            out_y.append(y.copy())
    return np.array(out_t), np.array(out_y), log
