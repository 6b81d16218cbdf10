//! Detection metrics, ratio reports, sweeps and ablations.

mod boxes;
mod report;
mod sweep;

pub use boxes::{
    extract_boxes, match_counts, match_metrics, DetectionSet, MatchCounts, Metrics, PostProcess,
    ScoredBox,
};
pub use report::{
    defended_detections, ratio_report, views, CropSize, CropSpec, EvalOptions, EvalReport,
    SampleBreakdown, Transform, View,
};
pub use sweep::{
    ablate, ablation_csv, grid_configs, overlay, patch_at_mui, recolor, reports_csv, save_overlay,
    sweep, AblationCell, AblationGrid, Color, MuiSelection, MuiSource, SweepAxis,
    ABLATION_CSV_HEADER, MUI_TOLERANCE, REPORT_CSV_HEADER, TEXT_COLORS,
};
