//! Run configuration files.
//!
//! A run file names a map, a network/training profile with optional partial
//! overrides, and the predators' preference specs. It resolves to a fully
//! explicit [`RunConfig`], whose snapshot can be written next to the run
//! artifacts and loaded again to repeat the run exactly.
//!
//! ```toml
//! run_id = "desk"
//! seed = 7
//! map = "bundled:desk8"
//! profile = "desk"
//!
//! [training]
//! episodes = 6000
//!
//! [[agents]]
//! preferences = "tunable"
//! [[agents]]
//! preferences = [0.005, 0.025, 0.0, 0.97]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, GridMap};
use crate::error::{Error, Result};
use crate::prefs::{PreferenceSpace, PreferenceVector};
use crate::qnet::NetConfig;
use crate::trainer::{AgentSpec, RunOutput, TrainingConfig};

/// File name of the resolved snapshot inside a run directory.
pub const SNAPSHOT_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    #[default]
    Desk,
    /// Every network and training field is given explicitly.
    Custom,
}

/// Where the map comes from: `bundled:wolfpack16`, `bundled:desk8`, or a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapSource {
    Bundled(String),
    File(PathBuf),
}

impl MapSource {
    pub fn parse(spec: &str, base_dir: &Path) -> Self {
        match spec.strip_prefix("bundled:") {
            Some(name) => MapSource::Bundled(name.to_string()),
            None => {
                let p = Path::new(spec);
                MapSource::File(if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) })
            }
        }
    }

    pub fn load(&self) -> Result<GridMap> {
        match self {
            MapSource::Bundled(name) => match name.as_str() {
                "wolfpack16" => Ok(GridMap::canonical()),
                "desk8" => Ok(GridMap::desk()),
                other => Err(Error::config(format!(
                    "unknown bundled map {other:?} (expected wolfpack16 or desk8)"
                ))),
            },
            MapSource::File(path) => {
                if !path.is_file() {
                    return Err(Error::config(format!("map file {} does not exist", path.display())));
                }
                GridMap::load(path)
            }
        }
    }
}

impl fmt::Display for MapSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapSource::Bundled(name) => write!(f, "bundled:{name}"),
            MapSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

/// How one predator's training preferences are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PreferenceSpec {
    /// `"tunable"`, `"cooperative"` or `"competitive"`.
    Named(String),
    /// One fixed vector.
    Fixed([f64; 4]),
    /// An explicit candidate list sampled uniformly.
    Space(Vec<[f64; 4]>),
}

impl PreferenceSpec {
    pub fn space(&self) -> Result<PreferenceSpace> {
        match self {
            PreferenceSpec::Named(name) => match name.as_str() {
                "tunable" => Ok(PreferenceSpace::training()),
                "cooperative" => Ok(PreferenceSpace::fixed(PreferenceVector::COOPERATIVE)),
                "competitive" => Ok(PreferenceSpace::fixed(PreferenceVector::COMPETITIVE)),
                other => Err(Error::config(format!(
                    "unknown preference spec {other:?} (expected tunable, cooperative or competitive)"
                ))),
            },
            PreferenceSpec::Fixed(w) => Ok(PreferenceSpace::fixed(PreferenceVector::new(*w)?)),
            PreferenceSpec::Space(ws) => PreferenceSpace::from_candidates(
                ws.iter().map(|w| PreferenceVector::new(*w)).collect::<Result<_>>()?,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub preferences: PreferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl AgentEntry {
    pub fn tunable() -> Self {
        AgentEntry {
            preferences: PreferenceSpec::Named("tunable".into()),
            seed: None,
        }
    }

    pub fn spec(&self) -> Result<AgentSpec> {
        Ok(AgentSpec {
            space: self.preferences.space()?,
            seed: self.seed,
        })
    }
}

/// The file as written by a user; `net` and `training` are partial overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    #[serde(default)]
    run_id: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    map: String,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    profile: Profile,
    #[serde(default)]
    checkpoint_every: Option<u64>,
    #[serde(default)]
    env: Option<EnvConfig>,
    #[serde(default)]
    net: Option<toml::Table>,
    #[serde(default)]
    training: Option<toml::Table>,
    #[serde(default)]
    agents: Vec<AgentEntry>,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_id: String,
    pub map_source: MapSource,
    pub map: GridMap,
    pub output_dir: PathBuf,
    pub checkpoint_every: Option<u64>,
    pub env: EnvConfig,
    pub net: NetConfig,
    pub training: TrainingConfig,
    pub agents: Vec<AgentEntry>,
}

fn merge(base: &mut toml::Table, overrides: &toml::Table) {
    for (k, v) in overrides {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn to_table<T: Serialize>(value: &T) -> toml::Table {
    toml::Table::try_from(value).expect("config types serialize to TOML tables")
}

fn resolve_section<T>(name: &str, base: Option<T>, overrides: Option<&toml::Table>) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut table = base.as_ref().map(to_table).unwrap_or_default();
    if let Some(o) = overrides {
        merge(&mut table, o);
    }
    table
        .try_into()
        .map_err(|e| Error::config(format!("[{name}]: {}", e.to_string().trim())))
}

impl RunConfig {
    /// Loads a TOML (or, by `.json` extension, JSON) run file. Relative paths
    /// inside it are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        let is_json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, base_dir, is_json)
            .map_err(|e| Error::config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        Self::parse(text, base_dir, false)
    }

    fn parse(text: &str, base_dir: &Path, is_json: bool) -> Result<Self> {
        let file: RunFile = if is_json {
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::config(e.to_string().trim().to_string()))?
        };
        let map_source = MapSource::parse(&file.map, base_dir);
        let map = map_source.load()?;
        let sized = |net: NetConfig| NetConfig {
            input_height: map.height(),
            input_width: map.width(),
            ..net
        };
        let (net_base, training_base) = match file.profile {
            Profile::Paper => (Some(sized(NetConfig::paper())), Some(TrainingConfig::paper())),
            Profile::Desk => (Some(sized(NetConfig::desk())), Some(TrainingConfig::desk())),
            Profile::Custom => (None, None),
        };
        let net: NetConfig = resolve_section("net", net_base, file.net.as_ref())?;
        let mut training: TrainingConfig =
            resolve_section("training", training_base, file.training.as_ref())?;
        if let Some(seed) = file.seed {
            training.seed = seed;
        }
        let agents = if file.agents.is_empty() {
            vec![AgentEntry::tunable(); 2]
        } else {
            file.agents
        };
        let output_dir = match file.output_dir {
            Some(p) if p.is_relative() => base_dir.join(p),
            Some(p) => p,
            None => base_dir.join("runs"),
        };
        let cfg = RunConfig {
            run_id: file.run_id.unwrap_or_else(|| format!("run-{}", training.seed)),
            map_source,
            map,
            output_dir,
            checkpoint_every: file.checkpoint_every,
            env: file.env.unwrap_or_default(),
            net,
            training,
            agents,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.training.validate()?;
        if (self.net.input_height, self.net.input_width) != (self.map.height(), self.map.width()) {
            return Err(Error::config(format!(
                "network input {}x{} does not match the {}x{} map",
                self.net.input_height,
                self.net.input_width,
                self.map.height(),
                self.map.width()
            )));
        }
        if !(2..=crate::env::MAX_PREDATORS).contains(&self.agents.len()) {
            return Err(Error::config(format!(
                "need two or three agents, got {}",
                self.agents.len()
            )));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::config(format!("invalid run_id {:?}", self.run_id)));
        }
        self.agent_specs().map(|_| ())
    }

    pub fn agent_specs(&self) -> Result<Vec<AgentSpec>> {
        self.agents.iter().map(AgentEntry::spec).collect()
    }

    /// Trains every predator on one fixed vector instead of its configured space.
    pub fn fix_preferences(&mut self, w: PreferenceVector) {
        for a in &mut self.agents {
            a.preferences = PreferenceSpec::Fixed(w.0);
        }
    }

    pub fn output(&self) -> RunOutput {
        RunOutput {
            dir: self.output_dir.clone(),
            run_id: self.run_id.clone(),
            checkpoint_every: self.checkpoint_every,
        }
    }

    /// A fully explicit TOML document that loads back to an equal config.
    pub fn snapshot(&self) -> String {
        let map = match &self.map_source {
            MapSource::File(p) => std::path::absolute(p).unwrap_or_else(|_| p.clone()),
            MapSource::Bundled(_) => PathBuf::from(self.map_source.to_string()),
        };
        let file = RunFile {
            run_id: Some(self.run_id.clone()),
            seed: Some(self.training.seed),
            map: map.display().to_string(),
            output_dir: Some(std::path::absolute(&self.output_dir).unwrap_or_else(|_| self.output_dir.clone())),
            profile: Profile::Custom,
            checkpoint_every: self.checkpoint_every,
            env: Some(self.env),
            net: Some(to_table(&self.net)),
            training: Some(to_table(&self.training)),
            agents: self.agents.clone(),
        };
        toml::to_string(&file).expect("run config serializes")
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.output().run_dir().join(SNAPSHOT_FILE)
    }

    pub fn write_snapshot(&self) -> Result<PathBuf> {
        let path = self.snapshot_path();
        crate::trainer::write_file(&path, self.snapshot().as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml_str(text, Path::new("/tmp"))
    }

    #[test]
    fn desk_profile_defaults() {
        let cfg = parse("map = \"bundled:desk8\"\nprofile = \"desk\"\n").unwrap();
        assert_eq!(cfg.net, NetConfig::desk());
        assert_eq!(cfg.training, TrainingConfig::desk());
        assert_eq!(cfg.agents.len(), 2);
        assert_eq!(cfg.run_id, "run-0");
    }

    #[test]
    fn overrides_merge_onto_the_profile() {
        let cfg = parse(
            "map = \"bundled:desk8\"\nseed = 7\n[training]\nepisodes = 10\n[training.adam]\nlearning_rate = 0.01\n[net]\ndense = [16]\n",
        )
        .unwrap();
        assert_eq!(cfg.training.episodes, 10);
        assert_eq!(cfg.training.seed, 7);
        assert_eq!(cfg.training.adam.learning_rate, 0.01);
        assert_eq!(cfg.training.adam.beta1, 0.9);
        assert_eq!(cfg.training.gamma, TrainingConfig::desk().gamma);
        assert_eq!(cfg.net.dense, vec![16]);
        assert_eq!(cfg.net.conv, NetConfig::desk().conv);
    }

    #[test]
    fn paper_profile_on_the_canonical_map() {
        let cfg = parse("map = \"bundled:wolfpack16\"\nprofile = \"paper\"\n").unwrap();
        assert_eq!(cfg.net, NetConfig::paper());
        assert_eq!(cfg.training, TrainingConfig::paper());
    }

    #[test]
    fn missing_map_is_a_config_error() {
        let err = parse("map = \"no/such.map\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(parse("map = \"bundled:nope\"\n").is_err());
    }

    #[test]
    fn inconsistent_fields_are_rejected() {
        assert!(parse("map = \"bundled:desk8\"\n[net]\ninput_height = 16\n").is_err());
        assert!(parse("map = \"bundled:desk8\"\nbogus = 1\n").is_err());
        assert!(parse("map = \"bundled:desk8\"\n[[agents]]\npreferences = \"tunable\"\n").is_err());
        assert!(parse("map = \"bundled:desk8\"\nprofile = \"custom\"\n").is_err());
        let bad_w = "map = \"bundled:desk8\"\n[[agents]]\npreferences = \"tunable\"\n[[agents]]\npreferences = [0.5, 0.5, 0.5, 2.0]\n";
        assert!(parse(bad_w).is_err());
    }

    #[test]
    fn preference_specs() {
        let text = "map = \"bundled:desk8\"\n[[agents]]\npreferences = \"cooperative\"\nseed = 3\n[[agents]]\npreferences = [[0.005, 0.025, 0.97, 0.0], [0.005, 0.025, 0.0, 0.97]]\n[[agents]]\npreferences = [0.005, 0.025, 0.97, 0.0]\n";
        let specs = parse(text).unwrap().agent_specs().unwrap();
        assert_eq!(specs[0].space.candidates(), &[PreferenceVector::COOPERATIVE]);
        assert_eq!(specs[0].seed, Some(3));
        assert_eq!(specs[1].space.len(), 2);
        assert_eq!(specs[2].space.candidates(), &[PreferenceVector::COMPETITIVE]);
    }

    #[test]
    fn fixing_preferences_gives_a_one_vector_space() {
        let mut cfg = parse("map = \"bundled:desk8\"\n").unwrap();
        cfg.fix_preferences(PreferenceVector::COOPERATIVE);
        for s in cfg.agent_specs().unwrap() {
            assert_eq!(s.space.len(), 1);
        }
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = parse("map = \"bundled:desk8\"\nseed = 11\nrun_id = \"x\"\ncheckpoint_every = 5\n[training]\nepisodes = 3\n[[agents]]\npreferences = \"tunable\"\n[[agents]]\npreferences = \"competitive\"\nseed = 9\n").unwrap();
        let again = RunConfig::from_toml_str(&cfg.snapshot(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, cfg);
        assert!(cfg.snapshot().contains("profile = \"custom\""));
    }

    #[test]
    fn json_files_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"map": "bundled:desk8", "training": {"episodes": 2}}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.training.episodes, 2);
        assert_eq!(cfg.output_dir, dir.path().join("runs"));
    }

    #[test]
    fn map_files_resolve_relative_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tiny.map"), "......\n.#....\n......\n......\n......\n......\n").unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "map = \"tiny.map\"\nprofile = \"desk\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.map.width(), 6);
        assert_eq!(cfg.net.input_width, 6);
    }
}
