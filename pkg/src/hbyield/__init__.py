"""Pad-layout-aware yield model and Monte Carlo simulator for Cu-Cu hybrid bonding."""

from hbyield.config import ConfigError, ProcessConfig
from hbyield.defect import DefectParams
from hbyield.kernels import BACKEND
from hbyield.layout import (CellKind, DieSpec, LayoutError, PadBlockGrid, WaferSpec, build_layout,
                            build_random_redundant_layout, generate_wafer_map)
from hbyield.overlay import OverlayParams
from hbyield.recess import RecessParams
from hbyield.report import YieldReport

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CellKind", "ConfigError", "DefectParams", "DieSpec", "LayoutError",
    "OverlayParams", "PadBlockGrid", "ProcessConfig", "RecessParams", "WaferSpec",
    "YieldReport", "build_layout", "build_random_redundant_layout", "generate_wafer_map",
]
