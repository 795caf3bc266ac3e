//! Ensemble directories and run manifests.

use std::path::{Path, PathBuf};
use std::time::Duration;

use benn_core::ensemble::{EnsembleModel, Member, Rule, Strategy, TrainingMode};
use serde::{Deserialize, Serialize};

use crate::container::{checkpoint_bytes, network_from_checkpoint, sha256_hex};
use crate::error::{read, write, BennError, Result};

pub const ENSEMBLE_MANIFEST: &str = "ensemble.json";
pub const RUN_MANIFEST: &str = "run_manifest.json";
const MEMBERS_DIR: &str = "members";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub seed: u64,
    pub alpha: f64,
    pub sha256: String,
}

/// Contents of `ensemble.json`. Holds no timestamps, so identical training
/// runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub strategy: String,
    pub mode: String,
    pub rule: String,
    pub uniform_alpha: bool,
    pub rounds: usize,
    pub config_sha256: String,
    pub members: Vec<MemberEntry>,
}

fn member_path(dir: &Path, sha: &str) -> PathBuf {
    dir.join(MEMBERS_DIR).join(format!("{sha}.ckpt"))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| BennError::io(path, e))
}

/// Writes member checkpoints under `members/` named by content hash, plus
/// the manifest. `rounds` is the number of rounds attempted.
pub fn save_ensemble(model: &EnsembleModel, rounds: usize, dir: &Path) -> Result<EnsembleManifest> {
    create_dir(&dir.join(MEMBERS_DIR))?;
    let mut members = Vec::new();
    for m in model.members() {
        let bytes = checkpoint_bytes(&m.network);
        let sha = sha256_hex(&bytes);
        write(&member_path(dir, &sha), &bytes)?;
        members.push(MemberEntry { seed: m.seed, alpha: m.alpha, sha256: sha });
    }
    let manifest = EnsembleManifest {
        format_version: crate::container::FORMAT_VERSION,
        strategy: model.strategy.to_string(),
        mode: model.mode.to_string(),
        rule: model.rule.to_string(),
        uniform_alpha: model.uniform,
        rounds,
        config_sha256: sha256_hex(model.config().to_text().as_bytes()),
        members,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write(&dir.join(ENSEMBLE_MANIFEST), &json)?;
    Ok(manifest)
}

pub fn load_ensemble(dir: &Path) -> Result<EnsembleModel> {
    let manifest: EnsembleManifest = serde_json::from_slice(&read(&dir.join(ENSEMBLE_MANIFEST))?)?;
    if manifest.format_version != crate::container::FORMAT_VERSION {
        return Err(BennError::Format(format!("unsupported ensemble version {}", manifest.format_version)));
    }
    let mut members = Vec::with_capacity(manifest.members.len());
    for entry in &manifest.members {
        let bytes = read(&member_path(dir, &entry.sha256))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(BennError::Format(format!("member {} does not match its hash", entry.sha256)));
        }
        members.push(Member { network: network_from_checkpoint(&bytes)?, alpha: entry.alpha, seed: entry.seed });
    }
    let strategy: Strategy = manifest.strategy.parse()?;
    let mode: TrainingMode = manifest.mode.parse()?;
    let rule: Rule = manifest.rule.parse()?;
    let mut model = EnsembleModel::new(members, strategy, mode, rule)?;
    model.uniform = manifest.uniform_alpha;
    Ok(model)
}

/// True when `path` holds an ensemble directory rather than a single checkpoint.
pub fn is_ensemble_dir(path: &Path) -> bool {
    path.join(ENSEMBLE_MANIFEST).is_file()
}

/// Per-invocation record: everything needed to rerun, plus wall-clock data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config_sha256: Option<String>,
    pub seeds: Vec<u64>,
    pub git_describe: Option<String>,
    pub started_unix_secs: u64,
    pub elapsed_secs: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>) -> Self {
        let started = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap_or(Duration::ZERO)
            .as_secs();
        RunManifest {
            command_line,
            config_sha256: None,
            seeds: Vec::new(),
            git_describe: git_describe(),
            started_unix_secs: started,
            elapsed_secs: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write(&dir.join(RUN_MANIFEST), &json)
    }
}

fn git_describe() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .stderr(std::process::Stdio::null())
        .output()
        .ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}
