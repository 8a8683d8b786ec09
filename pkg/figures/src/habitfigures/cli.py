"""Command line entry points: one command per figure plus render-all."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import (
    FigureInputError,
    FigureSpec,
    render,
    render_all,
)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="habit-figures",
        description="Render figures from habitpolicy CSV artifacts",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("render-all", help="render every figure available in a run directory")
    sp.add_argument("run_dir", type=Path)
    sp.add_argument("--out", type=Path, default=None)

    for fig_id, nargs, helptext in (
        ("phi-H", 2, "phi_H.csv bracket_history.csv"),
        ("dual", 1, "dual.csv"),
        ("policy-ce", 1, "policy.csv"),
        ("xstar-vs-delta", 1, "sweep.csv (delta sweep)"),
        ("pi-z-xstar-sr", 2, "policy.csv sweep.csv (sharpe sweep)"),
    ):
        sp = sub.add_parser(fig_id, help=f"inputs: {helptext}")
        sp.add_argument("inputs", nargs=nargs, type=Path)
        sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("alpha-sensitivity", help="overlay several policy.csv files")
    sp.add_argument("inputs", nargs="+", type=Path)
    sp.add_argument("--labels", nargs="*", default=[])
    sp.add_argument("--out", type=Path, required=True)

    args = ap.parse_args(argv)
    ids = {
        "phi-H": "phi_H",
        "dual": "dual",
        "policy-ce": "policy_ce",
        "xstar-vs-delta": "xstar_vs_delta",
        "pi-z-xstar-sr": "pi_vs_z_and_xstar_vs_SR",
        "alpha-sensitivity": "alpha_sensitivity_and_addictive",
    }
    try:
        if args.command == "render-all":
            written, skipped = render_all(args.run_dir, args.out)
            for path in written:
                print(f"wrote {path}")
            for msg in skipped:
                print(f"skipped {msg}")
            if not written:
                print("error: no figure could be rendered", file=sys.stderr)
                return 1
            return 0
        spec = FigureSpec(
            figure_id=ids[args.command],
            inputs=list(args.inputs),
            output=args.out,
            labels=list(getattr(args, "labels", [])),
        )
        print(f"wrote {render(spec)}")
        return 0
    except FigureInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
