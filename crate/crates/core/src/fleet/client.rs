use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::{FleetConfig, FleetError, Job, JobResult, ProviderService};
use crate::graph::ProviderId;

/// Sends one request to `endpoint` and waits for its answer, retrying once
/// if the connection is reset. The whole call respects `timeout`.
pub fn submit(endpoint: &str, job: &Job, timeout: Duration) -> Result<JobResult, FleetError> {
    let deadline = Instant::now() + timeout;
    let mut line = serde_json::to_string(job).expect("jobs serialize");
    line.push('\n');
    match roundtrip(endpoint, &line, deadline) {
        Err(e) if is_reset(&e) && Instant::now() < deadline => roundtrip(endpoint, &line, deadline),
        other => other,
    }
    .map_err(|e| match e.kind() {
        ErrorKind::TimedOut | ErrorKind::WouldBlock => FleetError::Transport(format!("{endpoint}: timed out")),
        _ => FleetError::Transport(format!("{endpoint}: {e}")),
    })
    .and_then(|reply| {
        serde_json::from_str(&reply).map_err(|e| FleetError::Transport(format!("{endpoint}: bad reply: {e}")))
    })
}

fn is_reset(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted | ErrorKind::BrokenPipe | ErrorKind::UnexpectedEof
    )
}

fn remaining(deadline: Instant) -> io::Result<Duration> {
    deadline
        .checked_duration_since(Instant::now())
        .filter(|d| !d.is_zero())
        .ok_or_else(|| io::Error::from(ErrorKind::TimedOut))
}

fn roundtrip(endpoint: &str, line: &str, deadline: Instant) -> io::Result<String> {
    let addr = endpoint
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(ErrorKind::InvalidInput, "endpoint resolves to nothing"))?;
    let stream = TcpStream::connect_timeout(&addr, remaining(deadline)?)?;
    stream.set_nodelay(true)?;
    stream.set_write_timeout(Some(remaining(deadline)?))?;
    (&stream).write_all(line.as_bytes())?;
    stream.set_read_timeout(Some(remaining(deadline)?))?;
    let mut reply = String::new();
    if BufReader::new(&stream).read_line(&mut reply)? == 0 {
        return Err(ErrorKind::UnexpectedEof.into());
    }
    Ok(reply)
}

/// Delivers jobs to providers.
pub trait Transport: Send + Sync {
    fn send(&self, provider: &ProviderId, job: &Job) -> Result<JobResult, FleetError>;
}

/// Talks to provider daemons over TCP.
#[derive(Debug, Clone)]
pub struct TcpTransport {
    endpoints: BTreeMap<ProviderId, String>,
    timeout: Duration,
}

impl TcpTransport {
    pub fn new(fleet: &FleetConfig, timeout: Duration) -> Self {
        TcpTransport {
            endpoints: fleet.providers.iter().map(|p| (p.id.clone(), p.endpoint.clone())).collect(),
            timeout,
        }
    }
}

impl Transport for TcpTransport {
    fn send(&self, provider: &ProviderId, job: &Job) -> Result<JobResult, FleetError> {
        let endpoint = self
            .endpoints
            .get(provider)
            .ok_or_else(|| FleetError::UnknownProvider(provider.clone()))?;
        submit(endpoint, job, self.timeout)
    }
}

/// In-process providers. Jobs still pass through the JSON wire form.
#[derive(Debug, Clone)]
pub struct Loopback {
    services: BTreeMap<ProviderId, Arc<ProviderService>>,
}

impl Loopback {
    pub fn new(fleet: &FleetConfig) -> Result<Self, FleetError> {
        let services = fleet
            .providers
            .iter()
            .map(|p| Ok((p.id.clone(), Arc::new(ProviderService::new(p.clone())?))))
            .collect::<Result<_, FleetError>>()?;
        Ok(Loopback { services })
    }

    pub fn service(&self, provider: &ProviderId) -> Option<&Arc<ProviderService>> {
        self.services.get(provider)
    }

    pub fn services(&self) -> impl Iterator<Item = (&ProviderId, &Arc<ProviderService>)> {
        self.services.iter()
    }

    pub fn clear_logs(&self) {
        self.services.values().for_each(|s| s.clear_log());
    }
}

impl Transport for Loopback {
    fn send(&self, provider: &ProviderId, job: &Job) -> Result<JobResult, FleetError> {
        let service = self
            .services
            .get(provider)
            .ok_or_else(|| FleetError::UnknownProvider(provider.clone()))?;
        let reply = service.handle_line(&serde_json::to_string(job).expect("jobs serialize"));
        serde_json::from_str(&reply).map_err(|e| FleetError::Transport(e.to_string()))
    }
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, provider: &ProviderId, job: &Job) -> Result<JobResult, FleetError> {
        (**self).send(provider, job)
    }
}
