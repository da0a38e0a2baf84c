//! Simulated cloud providers and the orchestrator that spreads a model over them.
//!
//! Providers speak newline-delimited JSON over TCP. The same request handler
//! backs an in-process [`Loopback`] transport used by tests and searches.

mod client;
mod daemon;
mod orchestrator;
mod protocol;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{submit, Loopback, TcpTransport, Transport};
pub use daemon::{serve, serve_service, Daemon, LogEntry, ProviderService};
pub use orchestrator::{execute_distributed, Orchestrator};
pub use protocol::{Job, JobResult, JobStatus};

use crate::graph::ProviderId;
use crate::qsim::NoiseSpec;

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("invalid provider profile: {0}")]
    Profile(String),
    #[error("no provider {0} in the fleet")]
    UnknownProvider(ProviderId),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: String,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub id: ProviderId,
    pub devices: Vec<DeviceProfile>,
    /// `host:port` the daemon binds and clients dial.
    pub endpoint: String,
}

impl ProviderProfile {
    pub fn validate(&self) -> Result<(), FleetError> {
        if self.devices.is_empty() {
            return Err(FleetError::Profile(format!("{} has no devices", self.id)));
        }
        let mut seen = BTreeSet::new();
        for d in &self.devices {
            if !seen.insert(d.id.as_str()) {
                return Err(FleetError::Profile(format!("{}: duplicate device {}", self.id, d.id)));
            }
            d.noise
                .validate()
                .map_err(|e| FleetError::Profile(format!("{}/{}: {e}", self.id, d.id)))?;
        }
        Ok(())
    }

    pub fn device(&self, id: &str) -> Option<&DeviceProfile> {
        self.devices.iter().find(|d| d.id == id)
    }

    /// The device jobs go to when none is named.
    pub fn default_device(&self) -> &DeviceProfile {
        &self.devices[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub providers: Vec<ProviderProfile>,
}

const DEFAULT_NOISE: [(f64, f64, f64); 4] = [
    (0.001, 0.01, 0.02),
    (0.002, 0.02, 0.03),
    (0.0005, 0.008, 0.015),
    (0.003, 0.03, 0.04),
];

pub const DEFAULT_BASE_PORT: u16 = 7101;

impl FleetConfig {
    /// `count` providers `qcp1..`, one device `b1` each, on consecutive local ports.
    pub fn default_fleet(count: usize) -> Result<FleetConfig, FleetError> {
        if !(1..=DEFAULT_NOISE.len()).contains(&count) {
            return Err(FleetError::Profile(format!("default fleets have 1..=4 providers, not {count}")));
        }
        let providers = DEFAULT_NOISE[..count]
            .iter()
            .enumerate()
            .map(|(i, &(p1, p2, ro))| ProviderProfile {
                id: ProviderId(format!("qcp{}", i + 1)),
                devices: vec![DeviceProfile {
                    id: "b1".into(),
                    noise: NoiseSpec {
                        p1,
                        p2,
                        readout_flip: ro,
                    },
                }],
                endpoint: format!("127.0.0.1:{}", DEFAULT_BASE_PORT + i as u16),
            })
            .collect();
        Ok(FleetConfig { providers })
    }

    /// Same providers with every device made noiseless.
    pub fn noiseless(&self) -> FleetConfig {
        let mut fleet = self.clone();
        for p in &mut fleet.providers {
            for d in &mut p.devices {
                d.noise = NoiseSpec::NOISELESS;
            }
        }
        fleet
    }

    pub fn validate(&self) -> Result<(), FleetError> {
        let mut seen = BTreeSet::new();
        for p in &self.providers {
            if !seen.insert(&p.id) {
                return Err(FleetError::Profile(format!("duplicate provider {}", p.id)));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn provider(&self, id: &ProviderId) -> Result<&ProviderProfile, FleetError> {
        self.providers
            .iter()
            .find(|p| &p.id == id)
            .ok_or_else(|| FleetError::UnknownProvider(id.clone()))
    }

    pub fn provider_ids(&self) -> Vec<ProviderId> {
        self.providers.iter().map(|p| p.id.clone()).collect()
    }
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig::default_fleet(3).expect("three default providers")
    }
}
