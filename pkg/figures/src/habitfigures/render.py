"""Render the standard figures from habitpolicy CSV artifacts.

This package reads the delimited files only; it has no in-process coupling
to the solver, so the solver remains fully testable without it and any run
directory (or hand-built CSVs with the documented headers) can be plotted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_IDS = (
    "phi_H",
    "dual",
    "policy_ce",
    "xstar_vs_delta",
    "pi_vs_z_and_xstar_vs_SR",
    "alpha_sensitivity_and_addictive",
)


class FigureInputError(ValueError):
    """Missing file, missing column, or empty table."""


@dataclass
class FigureSpec:
    figure_id: str
    inputs: list[Path]
    output: Path
    labels: list[str] = field(default_factory=list)


def load_csv(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FigureInputError(f"input file not found: {path}")
    with open(path) as f:
        header = f.readline().strip()
    cols = header.split(",") if header else []
    for name in required:
        if name not in cols:
            raise FigureInputError(f"{path}: missing column {name!r}")
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    if data.shape == () or data.size == 0:
        raise FigureInputError(f"{path}: no data rows")
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def _save(fig, output: Path) -> Path:
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return output


def render_phi_H(traj_csv: Path, bracket_csv: Path, output: Path) -> Path:
    """Two panels: the accepted (phi, H) trajectory plus the bracketing
    trial shots colored by their exit side."""
    t = load_csv(traj_csv, ("y", "phi", "H"))
    b = load_csv(bracket_csv, ("eta", "exit_kind", "exit_y"))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.semilogx(t["y"], t["phi"], "k-", lw=1.5, label="phi(y)")
    ax1.set_xlabel("dual variable y")
    ax1.set_ylabel("phi")
    ax1.set_title("marginal-utility level phi")
    ax2.semilogx(t["y"], t["H"], "k-", lw=1.5, label="accepted trajectory")
    kinds = np.asarray(b["exit_kind"], dtype=str)
    for kind, color, label in (
        ("exit_top", "tab:red", "trial exits top"),
        ("exit_bottom", "tab:blue", "trial exits bottom"),
    ):
        mask = kinds == kind
        if mask.any():
            ax2.plot(b["eta"][mask], np.zeros(mask.sum()) + np.nan, color=color)
            ax2.scatter(b["eta"][mask], np.interp(b["eta"][mask], t["y"][::-1],
                                                  t["H"][::-1]),
                        s=12, color=color, label=label, zorder=3)
    ax2.axhline(float(np.max(t["H"])), color="gray", lw=0.6, ls=":")
    ax2.set_xlabel("dual variable y")
    ax2.set_ylabel("H")
    ax2.set_title("auxiliary function H and trial boundaries")
    ax2.legend(fontsize=8)
    fig.suptitle("free-boundary trajectory, y* = %.6f" % float(t["y"][0]))
    return _save(fig, output)


def render_dual(dual_csv: Path, output: Path) -> Path:
    d = load_csv(dual_csv, ("y", "u", "u_prime", "u_second"))
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for ax, col, label in zip(axes, ("u", "u_prime", "u_second"),
                              ("u(y)", "u'(y)", "u''(y)")):
        ax.semilogx(d["y"], d[col], "k-", lw=1.2)
        ax.set_xlabel("dual variable y")
        ax.set_ylabel(label)
    axes[2].set_yscale("log")
    fig.suptitle("convex dual and derivatives")
    return _save(fig, output)


def render_policy_ce(policy_csv: Path, output: Path) -> Path:
    """theta*(x) on the left; c*(x) vs CE(x) with their crossing on the right."""
    d = load_csv(policy_csv, ("x", "c_star", "theta_star", "v", "ce"))
    x = d["x"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(x, d["theta_star"], "k-", lw=1.5)
    ax1.set_xlabel("wealth-to-habit ratio x")
    ax1.set_ylabel("investment-to-habit theta*(x)")
    ax1.set_xlim(x[0], x[-1])
    ax2.plot(x, d["c_star"], "k-", lw=1.5, label="c*(x)")
    ax2.plot(x, d["ce"], "r--", lw=1.5, label="CE(x)")
    gap = d["c_star"] - d["ce"]
    flips = np.nonzero(np.diff(np.sign(gap)) != 0)[0]
    if flips.size:
        i = flips[-1]
        w = gap[i] / (gap[i] - gap[i + 1])
        x0 = x[i] + w * (x[i + 1] - x[i])
        c0 = d["ce"][i] + w * (d["ce"][i + 1] - d["ce"][i])
        ax2.plot([x0], [c0], "ko", ms=5)
        ax2.annotate(f"({x0:.2f}, {c0:.3f})", (x0, c0),
                     textcoords="offset points", xytext=(8, -12), fontsize=8)
    ax2.set_xlabel("wealth-to-habit ratio x")
    ax2.set_ylabel("consumption-to-habit")
    ax2.set_xlim(x[0], x[-1])
    ax2.legend()
    fig.suptitle("optimal investment, consumption and certainty equivalent")
    return _save(fig, output)


def _load_sweep(sweep_csv: Path, parameter: str):
    d = load_csv(sweep_csv, ("param", "value", "x_star", "status"))
    params = np.asarray(d["param"], dtype=str)
    status = np.asarray(d["status"], dtype=str)
    mask = (params == parameter) & (status == "ok")
    if not mask.any():
        raise FigureInputError(
            f"{sweep_csv}: no successful rows for parameter {parameter!r}"
        )
    return d["value"][mask], d["x_star"][mask]


def render_xstar_vs_delta(sweep_csv: Path, output: Path) -> Path:
    values, x_star = _load_sweep(sweep_csv, "delta")
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(values, x_star, "ko-", ms=4)
    ax.set_xlabel("discount rate delta")
    ax.set_ylabel("critical ratio x*")
    ax.set_title("sensitivity of x* to the discount rate")
    return _save(fig, output)


def render_pi_vs_z_and_xstar_vs_SR(policy_csv: Path, sweep_csv: Path,
                                   output: Path) -> Path:
    d = load_csv(policy_csv, ("x", "theta_star"))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    # pi(1, z) = z * theta*(1/z): reuse the policy grid via z = 1/x
    x = d["x"]
    z = 1.0 / x[::-1]
    pi = (d["theta_star"] / x)[::-1]
    ax1.plot(z, pi, "k-", lw=1.5)
    ax1.set_xlabel("habit z (wealth fixed at 1)")
    ax1.set_ylabel("risky investment pi(1, z)")
    ax1.set_title("absolute investment vs habit")
    values, x_star = _load_sweep(sweep_csv, "sharpe_ratio")
    ax2.plot(values, x_star, "ko-", ms=4)
    ax2.set_xlabel("Sharpe ratio (mu - r)/sigma")
    ax2.set_ylabel("critical ratio x*")
    ax2.set_title("sensitivity of x* to the Sharpe ratio")
    return _save(fig, output)


def render_alpha_sensitivity(policy_csvs: list[Path], labels: list[str],
                             output: Path) -> Path:
    """Overlay theta*(x) and c*(x) for several habit-floor fractions."""
    if len(policy_csvs) < 2:
        raise FigureInputError("need at least two policy CSVs to compare")
    if len(labels) != len(policy_csvs):
        labels = [Path(p).stem for p in policy_csvs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for path, label in zip(policy_csvs, labels):
        d = load_csv(path, ("x", "c_star", "theta_star"))
        ax1.plot(d["x"], d["theta_star"], lw=1.3, label=label)
        ax2.plot(d["x"], d["c_star"], lw=1.3, label=label)
    ax1.set_xlabel("wealth-to-habit ratio x")
    ax1.set_ylabel("theta*(x)")
    ax2.set_xlabel("wealth-to-habit ratio x")
    ax2.set_ylabel("c*(x)")
    ax1.legend(fontsize=8)
    ax2.legend(fontsize=8)
    fig.suptitle("policy sensitivity to the habit-floor fraction")
    return _save(fig, output)


def render(spec: FigureSpec) -> Path:
    if spec.figure_id == "phi_H":
        return render_phi_H(spec.inputs[0], spec.inputs[1], spec.output)
    if spec.figure_id == "dual":
        return render_dual(spec.inputs[0], spec.output)
    if spec.figure_id == "policy_ce":
        return render_policy_ce(spec.inputs[0], spec.output)
    if spec.figure_id == "xstar_vs_delta":
        return render_xstar_vs_delta(spec.inputs[0], spec.output)
    if spec.figure_id == "pi_vs_z_and_xstar_vs_SR":
        return render_pi_vs_z_and_xstar_vs_SR(spec.inputs[0], spec.inputs[1], spec.output)
    if spec.figure_id == "alpha_sensitivity_and_addictive":
        return render_alpha_sensitivity(spec.inputs, spec.labels, spec.output)
    raise FigureInputError(f"unknown figure id {spec.figure_id!r}; know {FIGURE_IDS}")


def render_all(run_dir: Path, out_dir: Path | None = None) -> tuple[list[Path], list[str]]:
    """Render every figure whose inputs exist in ``run_dir``.

    Returns (written paths, skip messages); callers treat zero written
    figures as a failure.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FigureInputError(f"run directory not found: {run_dir}")
    out_dir = run_dir if out_dir is None else Path(out_dir)
    written: list[Path] = []
    skipped: list[str] = []

    def attempt(figure_id, inputs, output):
        missing = [str(p) for p in inputs if not Path(p).exists()]
        if missing:
            skipped.append(f"{figure_id}: missing {', '.join(missing)}")
            return
        written.append(render(FigureSpec(figure_id, list(inputs), output)))

    attempt("phi_H", [run_dir / "phi_H.csv", run_dir / "bracket_history.csv"],
            out_dir / "fig_phi_H.png")
    attempt("dual", [run_dir / "dual.csv"], out_dir / "fig_dual.png")
    attempt("policy_ce", [run_dir / "policy.csv"], out_dir / "fig_policy_ce.png")
    sweep = run_dir / "sweep.csv"
    if sweep.exists():
        try:
            written.append(render_xstar_vs_delta(sweep, out_dir / "fig_xstar_vs_delta.png"))
        except FigureInputError as exc:
            skipped.append(f"xstar_vs_delta: {exc}")
        try:
            written.append(render_pi_vs_z_and_xstar_vs_SR(
                run_dir / "policy.csv", sweep, out_dir / "fig_pi_z_xstar_SR.png"))
        except FigureInputError as exc:
            skipped.append(f"pi_vs_z_and_xstar_vs_SR: {exc}")
    else:
        skipped.append("xstar_vs_delta: missing sweep.csv")
        skipped.append("pi_vs_z_and_xstar_vs_SR: missing sweep.csv")
    skipped.append("alpha_sensitivity_and_addictive: needs explicit inputs "
                   "(several policy.csv files); use the alpha-sensitivity command")
    return written, skipped
