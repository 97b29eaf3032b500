//! Sweep configuration, execution, Pareto analysis, plotting and oracles.

pub mod checks;
pub mod config;
pub mod output;
pub mod pareto;
pub mod plot;
pub mod run;

pub use config::{ExperimentConfig, ModelGrid, Scenario, ScenarioVariant};
pub use output::{family_of, pareto_table, read_results, summarize, write_outputs, ParetoRow, SummaryRow};
pub use pareto::{budget_optimum, mark_dominated, pareto_front, ParetoPoint};
pub use plot::plot_results;
pub use run::{run_cells, run_experiment, CellTrace, ExperimentResult, FailureRow, MetricRow, ResultRow, RESULT_COLUMNS};
