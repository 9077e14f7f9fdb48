"""Experiment configuration: JSON ingestion, site profiles and validation.

Schema (all sections optional except ``model``)::

    {
      "model": {"lambda": 1.0, "p": 2.0, "alpha": 0.5, "half_width": 64,
                "g": <profile>, "a": <profile>,
                "phi": {"kind": "power_law"} | {"kind": "user_table", "table": [[u, f], ...]}},
      "noise": {"seeds": [0, 1], "dt": 0.01, "horizon": 50.0},
      "integrator": {"tol": 1e-7},
      "experiment": {...subcommand knobs...},
      "verify_phi": {"c1": .., "c2": .., "k": .., "a_bound": 0.0},
      "output": "results"
    }

A ``<profile>`` is a list of ``2N+1`` numbers, ``{"csv": "path"}`` with
``site,value`` rows, or a named profile ``{"profile": name, ...}`` with
``name`` one of ``zero``, ``gaussian-bump`` (amplitude, width, center),
``geometric-decay`` (amplitude, ratio), ``compact`` (amplitude, support),
``unit`` (site, amplitude).
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from spmlattice.dynamics import ModelParams
from spmlattice.lattice import LatticeVector
from spmlattice.nonlinearity import PhiSpec


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "model": {
        "lambda": 1.0,
        "p": 2.0,
        "alpha": 0.5,
        "half_width": 32,
        "g": {"profile": "zero"},
        "a": {"profile": "zero"},
        "phi": {"kind": "power_law"},
    },
    "noise": {"seeds": [0], "dt": 0.01, "horizon": 50.0},
    "integrator": {"tol": 1e-7},
    "experiment": {
        "T": 5.0,
        "v0": {"profile": "gaussian-bump", "amplitude": 1.0, "width": 3.0},
        "tail_sites": None,  # default: 0, N/4, N/2
        "snapshots": False,
        "B_radius": 10.0,
        "pullback_times": [1.0, 2.0, 5.0, 10.0, 20.0],
        "n_random": 4,
        "radii": [1.0, 10.0],
        "attraction_tol": 1e-4,
        "epsilon_ladder": [1e-1, 1e-2, 1e-3],
        "gamma_list": [0.1],
        "t_list": [1.0, 10.0, 50.0, 100.0],
        "ou_T": 1000.0,
        "temper_threshold": 0.05,
        "export_path": False,
    },
    "verify_phi": {},
    "output": "results",
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and base[k] and k not in ("g", "a", "v0", "phi"):
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def load_config(path: str | Path | None) -> dict:
    """Read and merge a config file over the defaults; parse errors carry line context."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        ctx = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {ctx}\n    {' ' * (exc.colno - 1)}^"
        ) from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = _merge(DEFAULTS, data)
    cfg["_base_dir"] = str(Path(path).resolve().parent)
    return cfg


def site_profile(spec, half_width: int, base_dir: str | None = None, name: str = "profile") -> np.ndarray:
    n = half_width
    sites = np.arange(-n, n + 1)
    if isinstance(spec, list):
        arr = np.asarray(spec, dtype=float)
        if arr.shape != (2 * n + 1,):
            raise ConfigError(f"{name}: expected {2 * n + 1} values, got {arr.size}")
        return arr
    if not isinstance(spec, dict):
        raise ConfigError(f"{name}: a profile must be a list or an object")
    if "csv" in spec:
        p = Path(spec["csv"])
        if base_dir and not p.is_absolute():
            p = Path(base_dir) / p
        try:
            vec = LatticeVector.from_csv(p.read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"{name}: cannot read {p}: {exc}") from None
        if vec.half_width != n:
            raise ConfigError(f"{name}: CSV has half_width {vec.half_width}, expected {n}")
        return vec.values.copy()
    kind = spec.get("profile")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "zero":
        return np.zeros(sites.size)
    if kind == "gaussian-bump":
        width = float(spec.get("width", 2.0))
        center = float(spec.get("center", 0.0))
        if width <= 0:
            raise ConfigError(f"{name}: width must be positive")
        return amp * np.exp(-((sites - center) ** 2) / (2 * width**2))
    if kind == "geometric-decay":
        r = float(spec.get("ratio", 0.5))
        if not 0 <= r < 1:
            raise ConfigError(f"{name}: ratio must lie in [0, 1)")
        return amp * r ** np.abs(sites)
    if kind == "compact":
        s = int(spec.get("support", 5))
        return np.where(np.abs(sites) <= s, amp, 0.0)
    if kind == "unit":
        site = int(spec.get("site", 0))
        if abs(site) > n:
            raise ConfigError(f"{name}: site {site} outside the lattice")
        return np.where(sites == site, amp, 0.0)
    raise ConfigError(f"{name}: unknown profile {kind!r}")


def model_params(cfg: dict) -> ModelParams:
    m = cfg["model"]
    base = cfg.get("_base_dir")
    try:
        n = int(m["half_width"])
        if n < 0:
            raise ConfigError("model.half_width must be >= 0")
        phi_cfg = m.get("phi") or {"kind": "power_law"}
        p = float(m["p"])
        if phi_cfg.get("kind", "power_law") == "power_law":
            phi = PhiSpec("power_law", p)
        else:
            phi = PhiSpec("user_table", p, tuple(tuple(map(float, r)) for r in phi_cfg["table"]))
        return ModelParams.build(
            n,
            lam=float(m["lambda"]),
            p=p,
            alpha=float(m["alpha"]),
            g=site_profile(m["g"], n, base, "model.g"),
            a=site_profile(m["a"], n, base, "model.a"),
            phi=phi,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"model: {exc}") from None


def validate(cfg: dict) -> dict:
    """Check everything that can be checked before any computation."""
    model_params(cfg)
    nz = cfg["noise"]
    seeds = nz.get("seeds")
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("noise.seeds must be a non-empty list of integers")
    if not float(nz["dt"]) > 0:
        raise ConfigError("noise.dt must be positive")
    if not float(nz["horizon"]) > 0:
        raise ConfigError("noise.horizon must be positive")
    if not float(cfg["integrator"]["tol"]) > 0:
        raise ConfigError("integrator.tol must be positive")
    ex = cfg["experiment"]
    if not float(ex["T"]) > 0:
        raise ConfigError("experiment.T must be positive")
    pts = ex["pullback_times"]
    if not pts or any(float(t) <= 0 for t in pts):
        raise ConfigError("experiment.pullback_times must be positive")
    if any(float(e) <= 0 for e in ex["epsilon_ladder"]):
        raise ConfigError("experiment.epsilon_ladder must be positive")
    n = int(cfg["model"]["half_width"])
    site_profile(ex["v0"], n, cfg.get("_base_dir"), "experiment.v0")
    if ex["tail_sites"] is not None and any(not 0 <= int(i) <= n for i in ex["tail_sites"]):
        raise ConfigError("experiment.tail_sites must lie in 0..half_width")
    return cfg


def tail_sites(cfg: dict) -> list[int]:
    sites = cfg["experiment"]["tail_sites"]
    if sites is None:
        n = int(cfg["model"]["half_width"])
        return sorted({0, n // 4, n // 2})
    return [int(i) for i in sites]


def resolved(cfg: dict) -> dict:
    """Config as echoed into manifests (internal keys dropped)."""
    return {k: v for k, v in cfg.items() if not k.startswith("_")}
