"""Post-hoc comparison of approximation sets."""

from .metrics import (
    HighlightTriple,
    common_def_magnitude,
    dominated_flags,
    front_hypervolume,
    hypervolume,
    locality_probe,
    median_index,
    reference_point,
    select_highlights,
    select_median_run,
    similarity_range,
    trade_off_angles,
)
from .pipeline import REEVAL_SEED, ApproximationSet, common_samples, reevaluate_set
from .report import (
    analyze,
    export_report,
    hypervolumes_from_csv,
    read_fronts_csv,
    render_svg,
    summarize,
    write_fronts_csv,
)

__all__ = [
    "REEVAL_SEED",
    "ApproximationSet",
    "HighlightTriple",
    "analyze",
    "common_def_magnitude",
    "common_samples",
    "dominated_flags",
    "export_report",
    "front_hypervolume",
    "hypervolume",
    "hypervolumes_from_csv",
    "locality_probe",
    "median_index",
    "read_fronts_csv",
    "reevaluate_set",
    "reference_point",
    "render_svg",
    "select_highlights",
    "select_median_run",
    "similarity_range",
    "summarize",
    "trade_off_angles",
    "write_fronts_csv",
]
