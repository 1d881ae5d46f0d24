use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use famphrase_core::ranker::words_from_tsv_line;
use famphrase_core::study::protocol::Pools;
use famphrase_core::study::{RandomDictionaries, StudyConfig};

use crate::ServiceError;

#[derive(Debug, Clone, Deserialize)]
pub struct DictionaryPaths {
    pub nouns: PathBuf,
    pub verbs: PathBuf,
    pub adjectives: PathBuf,
}

/// Service settings, usually read from a TOML file. Relative paths are
/// resolved against the file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub admin_token: String,
    pub event_log: PathBuf,
    /// Ranked TSV per story, best candidate first.
    #[serde(default)]
    pub pools: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub random_dictionaries: Option<DictionaryPaths>,
    #[serde(default)]
    pub study: StudyConfig,
}

fn default_listen() -> SocketAddr {
    ([127, 0, 0, 1], 8080).into()
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.event_log);
        self.pools.values_mut().for_each(fix);
        if let Some(d) = &mut self.random_dictionaries {
            fix(&mut d.nouns);
            fix(&mut d.verbs);
            fix(&mut d.adjectives);
        }
    }

    /// The study configuration with dictionaries loaded.
    pub fn study_config(&self) -> Result<StudyConfig, ServiceError> {
        let mut study = self.study.clone();
        if let Some(d) = &self.random_dictionaries {
            study.random_dictionaries = RandomDictionaries::from_files(&d.nouns, &d.verbs, &d.adjectives)
                .map_err(|e| ServiceError::Config(format!("random dictionaries: {e}")))?;
        }
        study.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(study)
    }

    pub fn load_pools(&self) -> Result<Pools, ServiceError> {
        let mut pools = Pools::new();
        for (story, path) in &self.pools {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ServiceError::Config(format!("pool for `{story}` at {}: {e}", path.display())))?;
            let entries = text
                .lines()
                .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
                .map(|l| {
                    words_from_tsv_line(l)
                        .ok_or_else(|| ServiceError::Config(format!("malformed ranked line in {}: {l}", path.display())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            pools.insert(story.clone(), entries);
        }
        Ok(pools)
    }
}
