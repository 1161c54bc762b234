//! Experiment manifests: the resolved configuration of a run together with
//! content digests of everything it read and wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, ExitCode};
use crate::jobs::{parse_json, read_text, Job};
use crate::logfmt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Job,
    pub started: String,
    pub finished: String,
    pub exit_code: i32,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// `<out>.manifest.json` next to the primary output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn digest(path: &Path) -> CliResult<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: format!("{:x}", Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs `job`, then writes its manifest. Returns the job's exit code.
pub fn execute(job: &Job) -> CliResult<ExitCode> {
    let started = now();
    let inputs = job.inputs().iter().map(|p| digest(p)).collect::<CliResult<Vec<_>>>()?;
    let outcome = job.run()?;
    let outputs = outcome.outputs.iter().map(|p| digest(p)).collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        command: job.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: job.seed(),
        config: job.clone(),
        started,
        finished: now(),
        exit_code: outcome.code as i32,
        inputs,
        outputs,
    };
    let path = manifest_path(job.out());
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    logfmt::info(
        "manifest.written",
        &[("path", path.display().to_string()), ("exit_code", manifest.exit_code.to_string())],
    );
    Ok(outcome.code)
}

/// Re-executes a manifest into `out_dir` (a temporary directory if `None`)
/// and compares output digests file by file.
pub fn rerun(manifest: &Path, out_dir: Option<&Path>) -> CliResult<ExitCode> {
    let m: Manifest = parse_json(&read_text(manifest)?)?;
    let mut mismatches = 0usize;
    for input in &m.inputs {
        let now = digest(&input.path)?;
        if now.sha256 != input.sha256 {
            logfmt::error("rerun.input_changed", &[("path", input.path.display().to_string())]);
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(CliError {
            code: ExitCode::Mismatch,
            message: format!("{mismatches} input file(s) changed since the recorded run"),
        });
    }
    let tmp;
    let dir = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| CliError::io(format!("cannot create {}: {e}", d.display())))?;
            d.to_path_buf()
        }
        None => {
            tmp = tempfile::tempdir().map_err(|e| CliError::io(format!("cannot create a temporary directory: {e}")))?;
            tmp.path().to_path_buf()
        }
    };
    let mut job = m.config.clone();
    job.retarget(&dir);
    let code = execute(&job)?;
    if code as i32 != m.exit_code {
        logfmt::error(
            "rerun.exit_code",
            &[("recorded", m.exit_code.to_string()), ("rerun", (code as i32).to_string())],
        );
        mismatches += 1;
    }
    for old in &m.outputs {
        let name = old.path.file_name().unwrap_or_default();
        let new = digest(&dir.join(name))?;
        let same = new.sha256 == old.sha256;
        logfmt::emit(
            if same { "info" } else { "error" },
            "rerun.digest",
            &[
                ("file", name.to_string_lossy().into_owned()),
                ("recorded", old.sha256.clone()),
                ("rerun", new.sha256),
                ("identical", same.to_string()),
            ],
        );
        mismatches += usize::from(!same);
    }
    if mismatches > 0 {
        Err(CliError {
            code: ExitCode::Mismatch,
            message: format!("{mismatches} difference(s) against the recorded manifest"),
        })
    } else {
        Ok(ExitCode::Ok)
    }
}
