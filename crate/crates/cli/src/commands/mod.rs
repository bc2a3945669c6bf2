pub mod fit;
pub mod kinetics;
pub mod mc_average;
pub mod predict;
pub mod simulate;

use std::path::PathBuf;

use crate::config::LoadedConfig;

/// Settings shared by every subcommand after flags and config are merged.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: LoadedConfig,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub strict: bool,
}

impl Context {
    pub fn workers_label(&self) -> String {
        match self.workers {
            Some(n) => n.to_string(),
            None => "default".into(),
        }
    }
}
