use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::protocol::salvage_job_id;
use super::{FleetError, Job, JobResult, ProviderProfile};
use crate::qsim::{simulate_noisy, Circuit};

/// A circuit as the provider received it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub job_id: String,
    pub device: String,
    pub circuit: Circuit,
}

/// Request handling shared by the TCP daemon and the loopback transport.
pub struct ProviderService {
    profile: ProviderProfile,
    log: Mutex<Vec<LogEntry>>,
    journal: Option<Mutex<Box<dyn Write + Send>>>,
}

impl std::fmt::Debug for ProviderService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderService")
            .field("profile", &self.profile)
            .field("journal", &self.journal.is_some())
            .finish_non_exhaustive()
    }
}

impl ProviderService {
    pub fn new(profile: ProviderProfile) -> Result<Self, FleetError> {
        profile.validate()?;
        Ok(ProviderService {
            profile,
            log: Mutex::new(Vec::new()),
            journal: None,
        })
    }

    /// Also appends every received job to `sink`, one JSON [`LogEntry`] per line.
    pub fn with_journal(mut self, sink: impl Write + Send + 'static) -> Self {
        self.journal = Some(Mutex::new(Box::new(sink)));
        self
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    pub fn handle(&self, job: Job) -> JobResult {
        let entry = LogEntry {
            job_id: job.job_id.clone(),
            device: job.device.clone(),
            circuit: job.circuit.clone(),
        };
        if let Some(journal) = &self.journal {
            let mut line = serde_json::to_string(&entry).expect("log entries serialize");
            line.push('\n');
            let mut w = journal.lock().expect("journal lock");
            if let Err(e) = w.write_all(line.as_bytes()).and_then(|_| w.flush()) {
                warn!("{}: journal write failed: {e}", self.profile.id);
            }
        }
        self.log.lock().expect("log lock").push(entry);
        let Some(device) = self.profile.device(&job.device) else {
            return JobResult::error(job.job_id, format!("unknown device {}", job.device));
        };
        match simulate_noisy(&job.circuit, &device.noise, job.shots, job.seed) {
            Ok(z) => JobResult::ok(job.job_id, z),
            Err(e) => JobResult::error(job.job_id, e.to_string()),
        }
    }

    /// One request line in, one response line out (without the newline).
    pub fn handle_line(&self, line: &str) -> String {
        let result = match serde_json::from_str::<Job>(line) {
            Ok(job) => self.handle(job),
            Err(e) => {
                debug!("{}: unparsable request: {e}", self.profile.id);
                JobResult::error(salvage_job_id(line), "parse")
            }
        };
        serde_json::to_string(&result).expect("results serialize")
    }

    /// Everything received so far, in arrival order.
    pub fn log(&self) -> Vec<LogEntry> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().expect("log lock").clear();
    }
}

/// A provider daemon listening on a TCP socket.
#[derive(Debug)]
pub struct Daemon {
    addr: SocketAddr,
    service: Arc<ProviderService>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

/// Binds `profile.endpoint` and serves jobs on a background thread, one
/// thread per connection.
pub fn serve(profile: ProviderProfile) -> Result<Daemon, FleetError> {
    serve_service(ProviderService::new(profile)?)
}

/// As [`serve`], for a service that is already set up.
pub fn serve_service(service: ProviderService) -> Result<Daemon, FleetError> {
    let service = Arc::new(service);
    let listener = TcpListener::bind(&service.profile.endpoint)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let accept = {
        let service = Arc::clone(&service);
        let stop = Arc::clone(&stop);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                match stream {
                    Ok(stream) => {
                        let service = Arc::clone(&service);
                        std::thread::spawn(move || serve_connection(stream, &service));
                    }
                    Err(e) => warn!("accept failed: {e}"),
                }
            }
        })
    };
    Ok(Daemon {
        addr,
        service,
        stop,
        accept: Some(accept),
    })
}

fn serve_connection(stream: TcpStream, service: &ProviderService) {
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    for line in BufReader::new(stream).lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let mut reply = service.handle_line(&line);
        reply.push('\n');
        if writer.write_all(reply.as_bytes()).and_then(|_| writer.flush()).is_err() {
            break;
        }
    }
}

impl Daemon {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn service(&self) -> &Arc<ProviderService> {
        &self.service
    }

    pub fn log(&self) -> Vec<LogEntry> {
        self.service.log()
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        if let Some(h) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            // Wake the blocking accept.
            let _ = TcpStream::connect(self.addr);
            let _ = h.join();
        }
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}
