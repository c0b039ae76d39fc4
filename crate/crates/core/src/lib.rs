//! Inference economics for transformer decoding: latency and cost of
//! serving a model on a given accelerator as a function of batch size,
//! instance size and parallelism layout.
//!
//! ```
//! use infereco::catalog::{accelerator_preset, model_preset};
//! use infereco::optimizer::{pareto_frontier, sweep, utility_optimal_point};
//! use infereco::{SearchGrid, Workload};
//!
//! let model = model_preset("llama3-70b")?.with_precisions(Some(8), None);
//! let gpu = accelerator_preset("h100-sxm")?;
//! let points = sweep(&model, &gpu, &Workload::new(0.0, 1), &SearchGrid::default(), None)?;
//! let frontier = pareto_frontier(&points);
//! let best = utility_optimal_point(&frontier, 3.0)?;
//! assert!(best.tokens_per_second > 50.0);
//! # Ok::<(), infereco::Error>(())
//! ```

pub mod catalog;
pub mod error;
pub mod optimizer;
pub mod parallelism;
pub mod perf;
pub mod roofline;
pub mod specdec;

pub use catalog::{AcceleratorSpec, ModelArchitecture};
pub use error::{Error, Result};
pub use optimizer::{ParetoPoint, SearchGrid, SpeculationSetup};
pub use parallelism::ParallelismPlan;
pub use perf::{LatencyBreakdown, Workload};
