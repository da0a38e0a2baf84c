use std::sync::atomic::{AtomicU64, Ordering};

use super::{FleetConfig, FleetError, Job, Transport};
use crate::graph::{forward, ExecError, GraphError, Model, NodeExecutor, NodeRequest};
use crate::qsim::Shots;

/// Runs each node on the first device of its assigned provider.
#[derive(Debug)]
pub struct Orchestrator<T> {
    transport: T,
    fleet: FleetConfig,
    shots: Shots,
    next_job: AtomicU64,
}

impl<T: Transport> Orchestrator<T> {
    pub fn new(transport: T, fleet: FleetConfig, shots: Shots) -> Result<Self, FleetError> {
        fleet.validate()?;
        Ok(Orchestrator {
            transport,
            fleet,
            shots,
            next_job: AtomicU64::new(0),
        })
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn fleet(&self) -> &FleetConfig {
        &self.fleet
    }

    pub fn shots(&self) -> Shots {
        self.shots
    }
}

impl<T: Transport> NodeExecutor for Orchestrator<T> {
    fn execute(&self, request: NodeRequest<'_>) -> Result<Vec<f64>, ExecError> {
        let fail = |message: String| ExecError::Transport {
            node: request.node,
            provider: request.provider.clone(),
            message,
        };
        let profile = self
            .fleet
            .provider(request.provider)
            .map_err(|_| ExecError::UnknownProvider(request.provider.clone()))?;
        // Job ids carry the node so provider logs can be grouped per node.
        let job = Job {
            job_id: format!("n{}-{}", request.node, self.next_job.fetch_add(1, Ordering::Relaxed)),
            device: profile.default_device().id.clone(),
            shots: self.shots,
            seed: request.seed,
            circuit: request.circuit.clone(),
        };
        let result = self
            .transport
            .send(request.provider, &job)
            .map_err(|e| fail(e.to_string()))?;
        if result.job_id != job.job_id {
            return Err(fail(format!("reply for {} to job {}", result.job_id, job.job_id)));
        }
        match (result.is_ok(), result.expectations) {
            (true, Some(z)) => Ok(z),
            _ => Err(fail(result.message.unwrap_or_else(|| "error without message".into()))),
        }
    }

    fn concurrent(&self) -> bool {
        true
    }
}

/// Logits of one sample with every node executed by its provider.
/// Sibling nodes are dispatched concurrently.
pub fn execute_distributed<T: Transport>(
    model: &Model,
    features: &[f64],
    orchestrator: &Orchestrator<T>,
    seed: u64,
) -> Result<Vec<f64>, GraphError> {
    forward(model, features, orchestrator, seed)
}
