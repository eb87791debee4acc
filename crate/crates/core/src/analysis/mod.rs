mod aggregate;
mod ans;
mod plots;
mod regression;
mod report;

pub use aggregate::{aggregate_accuracy, spearman, weber_fit_for, AccuracyPoint, GroupBy};
pub use ans::{ans_accuracy, fit_weber, WeberFit, WeberPoint, W_MAX, W_MIN};
pub use plots::{render_svg, Figure, Mark, Series};
pub use regression::{
    exclude_invariant_cells, fit_logistic, format_significant, logistic_regression,
    significance_stars, CoefficientRow, Design, ExcludedCell, RegressionSpec, Variable,
    INVARIANCE_THRESHOLD,
};
pub use report::{analyze_trials, plot_figures, AnalysisOptions, AnalysisSummary, ModelTrials};
