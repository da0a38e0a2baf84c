use serde::{Deserialize, Serialize};

use crate::qsim::{Circuit, Shots};

/// One circuit execution request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub device: String,
    pub shots: Shots,
    pub seed: u64,
    pub circuit: Circuit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub job_id: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expectations: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl JobResult {
    pub fn ok(job_id: String, expectations: Vec<f64>) -> Self {
        JobResult {
            job_id,
            status: JobStatus::Ok,
            expectations: Some(expectations),
            message: None,
        }
    }

    pub fn error(job_id: String, message: impl Into<String>) -> Self {
        JobResult {
            job_id,
            status: JobStatus::Error,
            expectations: None,
            message: Some(message.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == JobStatus::Ok
    }
}

/// Best-effort job id from a line that failed to parse as a [`Job`].
pub(crate) fn salvage_job_id(line: &str) -> String {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("job_id").and_then(|id| id.as_str()).map(str::to_owned))
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::GateOp;

    #[test]
    fn request_wire_form() {
        let job = Job {
            job_id: "j1".into(),
            device: "b1".into(),
            shots: Shots::Count(8092),
            seed: 7,
            circuit: Circuit::from_ops(4, vec![GateOp::ry(0, 1.5)]).unwrap(),
        };
        let v = serde_json::to_value(&job).unwrap();
        assert_eq!(v["shots"], 8092);
        assert_eq!(v["circuit"]["ops"][0]["g"], "ry");
        let back: Job = serde_json::from_value(v).unwrap();
        assert_eq!(back, job);
    }

    #[test]
    fn result_omits_absent_fields() {
        let r = serde_json::to_string(&JobResult::ok("a".into(), vec![1.0])).unwrap();
        assert_eq!(r, r#"{"job_id":"a","status":"ok","expectations":[1.0]}"#);
        let e = serde_json::to_string(&JobResult::error("".into(), "parse")).unwrap();
        assert_eq!(e, r#"{"job_id":"","status":"error","message":"parse"}"#);
    }

    #[test]
    fn salvage() {
        assert_eq!(salvage_job_id(r#"{"job_id":"x","circuit":3}"#), "x");
        assert_eq!(salvage_job_id("garbage"), "");
    }
}
