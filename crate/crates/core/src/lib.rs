//! Distributed proximal SVRG for L1-regularized linear models.
//!
//! The solver minimizes
//!
//! ```text
//! P(w) = (1/n) * sum_i h(x_i . w; y_i) + (lambda1/2) * |w|^2 + lambda2 * |w|_1
//! ```
//!
//! over instances spread across `p` workers. Each outer round broadcasts the
//! iterate, reduces a full mean gradient, runs one variance-reduced proximal
//! epoch per worker against that worker's shard, and averages the results.
//! Epochs touch only the coordinates that matter: off-support coordinates
//! evolve by a closed-form geometric recurrence ([`recovery`]) and are only
//! materialized when a sampled instance actually reads them.
//!
//! How well this averaging scheme converges depends on how the data was
//! split. The [`partition`] module builds the splits (uniform, label-skewed,
//! label-split, replicated) and measures their quality: the gap between the
//! global objective and the average of locally-solved objectives, and its
//! growth rate relative to squared distance from the optimum.
//!
//! Rounds run on in-process threads or across TCP sockets ([`engine`]); both
//! transports reduce in worker order and share seeded sampling streams, so a
//! run's trace is bitwise-identical regardless of transport or thread count.

pub mod data;
pub mod engine;
pub mod objective;
pub mod partition;
pub mod recovery;
pub mod rngutil;
pub mod solver;
pub mod synth;

pub use data::{parse_libsvm, read_libsvm, DataError, Dataset, Instance, SparseVector};
pub use engine::{
    run_tcp_worker, train_tcp_loopback, EngineError, InProcessEngine, RoundEngine, RoundOutput,
    TcpMasterEngine,
};
pub use objective::{objective_value, prox_l1, ConfigError, Loss, Model};
pub use partition::{
    estimate_gamma, local_global_gap, quadratic_gap_1d, sample_anchors, GapReport, Partition,
    PartitionError, PartitionKind, QuadraticGap,
};
pub use recovery::{recover_coordinate, replay_coordinate, RecoveryBranch};
pub use solver::{
    default_eta, default_inner_steps, prox_svrg_train, pscope_train, reference_solution,
    SolverConfig, SolverError, TraceRow, TrainOutput, TrainTrace,
};
