"""Run configuration parsing and artifact writers.

Configuration is a flat key=value file (``#`` comments allowed).  Model keys
are bare (``r``, ``mu``, ...); other sections use dotted keys
(``ode.rel_tol``, ``sim.dt``, ``grid.x_count``, ``solver.eta_tol``).
CSV artifacts carry full double precision so reruns are byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError
from .ode import OdeControls
from .params import ModelParams
from .simulate import SimConfig

MODEL_KEYS = ("r", "mu", "sigma", "rho", "alpha", "delta", "gamma")


@dataclass(frozen=True)
class GridSpec:
    x_count: int = 400
    y_count: int = 400
    x_cap: float = 50.0


@dataclass
class RunConfig:
    params: ModelParams
    ode: OdeControls = field(default_factory=OdeControls)
    grid: GridSpec = field(default_factory=GridSpec)
    sim: SimConfig | None = None
    eta_tol: float = 1e-12
    out_dir: Path = Path(".")


def parse_kv_file(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value (got {raw!r})")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _get_float(kv: dict[str, str], key: str, default=None) -> float:
    if key not in kv:
        if default is None:
            raise UsageError(f"missing config key: {key}")
        return default
    try:
        return float(kv[key])
    except ValueError as exc:
        raise UsageError(f"config key {key} is not a number: {kv[key]!r}") from exc


def _get_int(kv: dict[str, str], key: str, default: int) -> int:
    if key not in kv:
        return default
    try:
        return int(kv[key])
    except ValueError as exc:
        raise UsageError(f"config key {key} is not an integer: {kv[key]!r}") from exc


def build_run_config(kv: dict[str, str], out_dir: str | Path = ".") -> RunConfig:
    """Assemble a RunConfig, failing with a usage error on any missing model key."""
    params = ModelParams(**{k: _get_float(kv, k) for k in MODEL_KEYS})
    ode = OdeControls(
        rel_tol=_get_float(kv, "ode.rel_tol", 1e-10),
        abs_tol=_get_float(kv, "ode.abs_tol", 1e-12),
        max_step=_get_float(kv, "ode.max_step", float("inf")),
        min_step=_get_float(kv, "ode.min_step", 1e-14),
        max_steps=_get_int(kv, "ode.max_steps", 10**6),
    )
    grid = GridSpec(
        x_count=_get_int(kv, "grid.x_count", 400),
        y_count=_get_int(kv, "grid.y_count", 400),
        x_cap=_get_float(kv, "grid.x_cap", 50.0),
    )
    sim = None
    if any(k.startswith("sim.") for k in kv):
        sim = SimConfig(
            dt=_get_float(kv, "sim.dt", 1e-3),
            horizon_T=_get_float(kv, "sim.horizon_T", 60.0),
            n_paths=_get_int(kv, "sim.n_paths", 20000),
            seed=_get_int(kv, "sim.seed", 12345),
            x0=_get_float(kv, "sim.x0", 5.0),
        )
    return RunConfig(
        params=params,
        ode=ode,
        grid=grid,
        sim=sim,
        eta_tol=_get_float(kv, "solver.eta_tol", 1e-12),
        out_dir=Path(out_dir),
    )


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    n = len(columns[0])
    for col in columns:
        if len(col) != n:
            raise ValueError("ragged CSV columns")
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for i in range(n):
            f.write(",".join(_fmt(col[i]) for col in columns) + "\n")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_summary(path: Path, entries: dict) -> None:
    with open(path, "w", newline="\n") as f:
        for key, value in entries.items():
            f.write(f"{key}={_fmt(value)}\n")


def append_summary(path: Path, entries: dict) -> None:
    with open(path, "a", newline="\n") as f:
        for key, value in entries.items():
            f.write(f"{key}={_fmt(value)}\n")
