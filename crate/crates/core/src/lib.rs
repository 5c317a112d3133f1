//! Negatively correlated natural evolution strategies (NCNES).
//!
//! λ search processes each hold a diagonal Gaussian and follow the natural
//! gradient of their expected (rank-shaped) fitness plus `phi` times their
//! summed Bhattacharyya distance to the other processes. The diversity term
//! keeps the processes spread over different regions of the search space.
//!
//! ```no_run
//! use ncnes_core::{objective, optimizer, RunConfig};
//!
//! let rastrigin = objective::build("rastrigin", 10, 0.0).unwrap();
//! let mut cfg = RunConfig::for_objective(rastrigin.spec(), 30_000);
//! cfg.seed = 7;
//! let report = optimizer::run(cfg, rastrigin).unwrap();
//! println!("best {} after {} evaluations", report.best_fitness, report.evals);
//! ```
//!
//! Modules:
//! * [`gaussian`]: the distribution type, sampling and Bhattacharyya distance.
//! * [`gradient`]: utilities, gradients, Fisher diagonals, step-size schedule, updates.
//! * [`optimizer`]: the generation loop and run reports.
//! * [`baseline`]: the heuristic NCS-C comparison baseline.
//! * [`objective`]: benchmark functions, noise handling and a cart-pole policy task.
//! * [`parallel`]: serial / island / hybrid engines and speedup measurement.

pub mod baseline;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod gradient;
pub mod objective;
pub mod optimizer;
pub mod parallel;
pub mod stream;

pub use config::{InitBox, NcsSettings, Reevals, RunConfig, UpdateRule};
pub use error::{Error, Result};
pub use gaussian::{SampleBatch, SearchDistribution, VAR_FLOOR};
pub use gradient::{FisherDiagonals, GradientPair, Sense, Utilities, FISHER_FLOOR};
pub use optimizer::{CurveRecord, Ncnes, RunReport};
pub use parallel::{ExecPlan, Exchange, Mode, TimingReport};
