//! Batch runs over seeds or instances. Uses rayon with the `parallel`
//! feature and a plain loop otherwise.

use crate::audit::{run_and_audit, AuditReport};
use crate::error::Result;
use crate::problem::Instance;
use crate::solver::SolverConfig;

/// Maps `f` over `items`, in parallel when the feature is enabled.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seq_map(items, f)
    }
}

pub fn seq_map<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Solves and audits every instance. Results keep the input order.
pub fn audit_all(instances: &[Instance], cfg: &SolverConfig, parallel: bool) -> Vec<Result<AuditReport>> {
    let job = |inst: &Instance| run_and_audit(inst, cfg, None).map(|(_, _, report)| report);
    if parallel {
        par_map(instances, job)
    } else {
        seq_map(instances, job)
    }
}
