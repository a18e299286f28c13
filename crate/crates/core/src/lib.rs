//! Distributed Adaptive Newton Learning (DANL).
//!
//! A server aggregates worker Hessians once at the initial model, projects the
//! average onto `{H ⪰ μI}` and reuses its Cholesky factor for every
//! preconditioned step. Workers train heterogeneous pruned sub-models chosen
//! region by region, and the server fills gaps with each worker's most recent
//! gradient fragment.
//!
//! Modules, bottom-up: [`linalg`], [`loss`], [`data`], [`pruning`],
//! [`protocol`], [`baselines`], [`harness`].

pub mod baselines;
pub mod data;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod protocol;
pub mod pruning;
