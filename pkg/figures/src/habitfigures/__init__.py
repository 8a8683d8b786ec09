"""Figure rendering for habitpolicy CSV artifacts (CSV-in, PNG-out)."""

from .render import (
    FIGURE_IDS,
    FigureInputError,
    FigureSpec,
    load_csv,
    render,
    render_all,
)

__version__ = "0.1.0"
