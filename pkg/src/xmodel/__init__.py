"""Day-ahead electricity price forecasting from auction sale and purchase curves."""
from .classes import ClassPartition, build_partition, class_volumes, mean_curve, mean_surfaces
from .curves import Intersection, PriceCurve, VolumeSurface, aggregate_curve, clear, intersect
from .errors import XModelError
from .evaluation import coverage, rolling_study, score_table
from .grid import DEFAULT_GRID, PriceGrid, Side
from .ingest import load_panel, read_panel_csv, save_panel
from .panel import PanelDataset
from .pipeline import XModelConfig, fit_window, forecast_day
from .synthetic import SyntheticConfig, generate_synthetic

__version__ = "0.1.0"
