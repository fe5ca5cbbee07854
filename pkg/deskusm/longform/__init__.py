from .models import MIN_SEEDS, MIN_SURVIVING_SEEDS, LongFormArm, LongFormExperimentSpec, LongFormReport, RunOutcome
from .experiment import PLOT_COLUMNS, check_geometry, run_longform, summarize
from .reporter import write_plot_data, write_report

__all__ = [
    "MIN_SEEDS",
    "MIN_SURVIVING_SEEDS",
    "LongFormArm",
    "LongFormExperimentSpec",
    "LongFormReport",
    "RunOutcome",
    "PLOT_COLUMNS",
    "check_geometry",
    "run_longform",
    "summarize",
    "write_plot_data",
    "write_report",
]
