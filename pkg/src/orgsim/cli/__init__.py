"""Command-line pipeline and static figure/table emitters."""

from orgsim.cli.config import DEFAULTS, load_config, render_config, write_config
from orgsim.cli.emit import PlotSpec, Series, emit_csv, emit_plot, nice_ticks, render_svg
from orgsim.cli.main import build_parser, main

__all__ = [
    "DEFAULTS", "PlotSpec", "Series", "build_parser", "emit_csv", "emit_plot", "load_config", "main",
    "nice_ticks", "render_config", "render_svg", "write_config",
]
