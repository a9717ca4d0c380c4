//! Relevance maps and bar charts built from a trained ensemble.

mod chart;
mod prm;

pub use chart::{render_global_chart, render_local_chart, rss_statistics, stats_table, ClassRssStats, BAR_SCALE};
pub use prm::{
    aggregate, build_prm, overlay_prm, select_informative, shannon_entropy, yen_from_histogram,
    yen_threshold, Prm, DEFAULT_PRM_LAYER, HISTOGRAM_BINS,
};
