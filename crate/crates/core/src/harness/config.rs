use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::RunParams;
use crate::benchgen::{BenchmarkKind, GenParams, Topology};
use crate::bus::BusConfig;
use crate::model::{AdapterConfig, AdapterKind};
use crate::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    DsaOracle,
    Random,
    FmcDsa,
    CopaDsa,
    Nas,
}

impl Archetype {
    pub const ALL: [Archetype; 5] =
        [Archetype::DsaOracle, Archetype::Random, Archetype::FmcDsa, Archetype::CopaDsa, Archetype::Nas];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::DsaOracle => "dsa-oracle",
            Archetype::Random => "random",
            Archetype::FmcDsa => "fmc-dsa",
            Archetype::CopaDsa => "copa-dsa",
            Archetype::Nas => "nas",
        }
    }

    /// Baselines run symbolically and ignore the adapter.
    pub fn is_baseline(self) -> bool {
        matches!(self, Archetype::DsaOracle | Archetype::Random)
    }
}

impl std::str::FromStr for Archetype {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown archetype '{s}'"))
    }
}

/// One run: which task, which agents, which adapter, which seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: BenchmarkKind,
    pub topology: Topology,
    pub n: usize,
    pub m: usize,
    /// Colors or slots; 4 for coloring and 8 for meetings when unset.
    pub domain: Option<usize>,
    pub archetype: Archetype,
    pub adapter: AdapterConfig,
    /// DSA stochasticity; 0.1, or 0.03 for NAS, when unset.
    pub epsilon: Option<f64>,
    /// CoPA negotiation rounds.
    pub rounds: usize,
    /// 100 for baselines and 50 for archetypes when unset.
    pub iterations: Option<usize>,
    pub instance_seed: u64,
    pub run_seed: u64,
    pub drop: f64,
    pub max_delay: usize,
    pub budget_factor: usize,
    pub capture_prompts: bool,
    /// Load the task from this document instead of generating it.
    pub task_file: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: BenchmarkKind::Ldgc,
            topology: Topology::Random,
            n: 10,
            m: 23,
            domain: None,
            archetype: Archetype::DsaOracle,
            adapter: AdapterConfig::default(),
            epsilon: None,
            rounds: 2,
            iterations: None,
            instance_seed: 0,
            run_seed: 0,
            drop: 0.0,
            max_delay: 0,
            budget_factor: 6,
            capture_prompts: false,
            task_file: None,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn domain(&self) -> usize {
        self.domain.unwrap_or(match self.benchmark {
            BenchmarkKind::Ldms => 8,
            _ => 4,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(if self.archetype == Archetype::Nas { 0.03 } else { 0.1 })
    }

    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(if self.archetype.is_baseline() { 100 } else { 50 })
    }

    /// Seed of every random stream in the run.
    pub fn stream_seed(&self) -> u64 {
        stream::mix(self.instance_seed, self.run_seed)
    }

    pub fn adapter_label(&self) -> String {
        if self.archetype.is_baseline() {
            "-".into()
        } else {
            self.adapter.label()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.task_file.is_none() {
            if self.n < 2 {
                return bad(format!("need at least 2 agents, got {}", self.n));
            }
            if self.benchmark != BenchmarkKind::Ldms && (self.m < self.n - 1 || self.m > self.n * (self.n - 1) / 2) {
                return bad(format!("{} edges cannot form a connected simple graph on {} nodes", self.m, self.n));
            }
            if self.domain() < 2 {
                return bad(format!("domain size {} is below 2", self.domain()));
            }
        }
        if let Some(e) = self.epsilon {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("epsilon {e} is outside [0, 1]"));
            }
        }
        if self.iterations() == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.drop) {
            return bad(format!("drop probability {} is outside [0, 1]", self.drop));
        }
        if self.budget_factor == 0 {
            return bad("budget_factor must be at least 1".into());
        }
        if !self.archetype.is_baseline() {
            self.adapter.validate()?;
        }
        Ok(())
    }

    pub fn gen_params(&self) -> GenParams {
        let mut p = GenParams::new(self.benchmark, self.n, self.m, self.domain(), self.instance_seed);
        p.topology = self.topology;
        p
    }

    pub fn run_params(&self, bounds: (u64, u64)) -> RunParams {
        let seed = self.stream_seed();
        let mut p = RunParams::new(self.epsilon(), self.iterations(), seed);
        p.bus = BusConfig { drop: self.drop, max_delay: self.max_delay, seed };
        p.rounds = self.rounds;
        p.bounds = bounds;
        p.budget_factor = self.budget_factor;
        p
    }

    /// File-name friendly identifier, unique within a sweep.
    pub fn run_id(&self, task_name: &str) -> String {
        let adapter = if self.archetype.is_baseline() {
            String::new()
        } else {
            let label = match self.adapter.kind {
                AdapterKind::Scripted => "scripted".to_string(),
                AdapterKind::Noisy => format!("noisy{}", self.adapter.noise),
                AdapterKind::Remote => format!("remote-{}", self.adapter.model),
            };
            let clean: String =
                label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect();
            format!("-{clean}")
        };
        let extra = if self.drop > 0.0 || self.max_delay > 0 {
            format!("-drop{}-delay{}", self.drop, self.max_delay)
        } else {
            String::new()
        };
        format!("{task_name}-{}{adapter}{extra}-r{}", self.archetype.as_str(), self.run_seed)
    }
}

/// Grid of runs around a base configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    #[serde(default)]
    pub base: RunConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Instance seeds `0..instances` when `instance_seeds` is empty.
    pub instances: Option<u64>,
    pub instance_seeds: Vec<u64>,
    pub run_seeds: Vec<u64>,
    pub archetypes: Vec<Archetype>,
    pub adapters: Vec<AdapterConfig>,
}

impl SweepManifest {
    /// Parses either a manifest with `[base]`/`[sweep]` tables or a single
    /// run configuration.
    pub fn parse(text: &str) -> Result<SweepManifest, HarnessError> {
        let value: toml::Table = toml::from_str(text).map_err(|e| HarnessError::format("config", e))?;
        if value.contains_key("base") || value.contains_key("sweep") {
            toml::from_str(text).map_err(|e| HarnessError::format("sweep manifest", e))
        } else {
            let base: RunConfig = toml::from_str(text).map_err(|e| HarnessError::format("run config", e))?;
            Ok(SweepManifest { base, sweep: SweepSpec::default() })
        }
    }

    pub fn expand(&self) -> Result<Vec<RunConfig>, HarnessError> {
        let s = &self.sweep;
        let seeds: Vec<u64> = if !s.instance_seeds.is_empty() {
            s.instance_seeds.clone()
        } else if let Some(k) = s.instances {
            (0..k).collect()
        } else {
            vec![self.base.instance_seed]
        };
        let run_seeds = if s.run_seeds.is_empty() { vec![self.base.run_seed] } else { s.run_seeds.clone() };
        let archetypes = if s.archetypes.is_empty() { vec![self.base.archetype] } else { s.archetypes.clone() };
        let adapters = if s.adapters.is_empty() { vec![self.base.adapter.clone()] } else { s.adapters.clone() };
        let mut out = Vec::new();
        for &arch in &archetypes {
            // Baselines do not depend on the adapter; run them once.
            let adapters: &[AdapterConfig] = if arch.is_baseline() { &adapters[..1] } else { &adapters };
            for adapter in adapters {
                for &seed in &seeds {
                    for &rs in &run_seeds {
                        let cfg = RunConfig {
                            archetype: arch,
                            adapter: adapter.clone(),
                            instance_seed: seed,
                            run_seed: rs,
                            ..self.base.clone()
                        };
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_archetype() {
        let mut c = RunConfig::default();
        assert_eq!((c.iterations(), c.epsilon(), c.domain()), (100, 0.1, 4));
        c.archetype = Archetype::Nas;
        assert_eq!((c.iterations(), c.epsilon()), (50, 0.03));
        c.benchmark = BenchmarkKind::Ldms;
        assert_eq!(c.domain(), 8);
    }

    #[test]
    fn sweep_fans_out() {
        let text = r#"
[base]
benchmark = "ldgc"
n = 10
m = 23

[sweep]
instances = 10
archetypes = ["dsa-oracle", "random", "fmc-dsa"]
"#;
        let runs = SweepManifest::parse(text).unwrap().expand().unwrap();
        assert_eq!(runs.len(), 30);
        let ids: std::collections::BTreeSet<String> =
            runs.iter().map(|r| r.run_id(&r.gen_params().task_name())).collect();
        assert_eq!(ids.len(), 30);
    }

    #[test]
    fn single_config_and_typos() {
        let m = SweepManifest::parse("archetype = \"nas\"\ninstance_seed = 4\n").unwrap();
        assert_eq!(m.expand().unwrap().len(), 1);
        assert!(SweepManifest::parse("archetyp = \"nas\"\n").is_err());
        assert!(SweepManifest::parse("epsilon = 2.0\n").unwrap().expand().is_err());
    }

    #[test]
    fn baselines_ignore_extra_adapters() {
        let text = r#"
[sweep]
instances = 2
archetypes = ["random", "fmc-dsa"]
adapters = [{ kind = "scripted" }, { kind = "noisy", noise = 0.35 }]
"#;
        assert_eq!(SweepManifest::parse(text).unwrap().expand().unwrap().len(), 2 + 4);
    }
}
