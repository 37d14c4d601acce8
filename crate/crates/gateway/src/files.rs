//! Data directory layout and typed loaders for every artifact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use jambayes_core::alerting::{Alert, PolicyStore, POLICY_SCHEMA_VERSION};
use jambayes_core::bn::BayesNet;
use jambayes_core::bottleneck::{BottleneckSet, CongestionProfile};
use jambayes_core::cases::io::{read_cases, read_incidents, SchemaFile, CASES_FILE, RESOLVED_INCIDENTS_FILE, SCHEMA_FILE};
use jambayes_core::cases::{CaseLibrary, ResolvedIncident};
use jambayes_core::future_surprise::FutureSurpriseModel;
use jambayes_core::reliability::ReliabilityModel;
use jambayes_core::sim::io::{load_dir, Streams};
use jambayes_core::surprise::MarginalModel;

pub const SIM_CONFIG_FILE: &str = "sim.toml";
pub const PROFILE_FILE: &str = "profile.json";
pub const BOTTLENECKS_FILE: &str = "bottlenecks.json";
pub const MODEL_FILE: &str = "model.json";
pub const RELIABILITY_FILE: &str = "reliability.json";
pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const MARGINAL_FILE: &str = "marginal.json";
pub const SURPRISES_FILE: &str = "surprises.jsonl";
pub const SURPRISE_SUMMARY_FILE: &str = "surprise_summary.json";
pub const FUTURE_SURPRISE_FILE: &str = "future_surprise.json";
pub const FNFP_FILE: &str = "fnfp.csv";
pub const FUTURE_SURPRISE_SUMMARY_FILE: &str = "future_surprise_summary.json";
pub const POLICIES_FILE: &str = "policies.json";
pub const ALERTS_FILE: &str = "alerts.jsonl";

#[derive(Debug, Clone)]
pub struct DataDir {
    pub root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> DataDir {
        DataDir { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    pub fn read(&self, name: &str) -> Result<String> {
        let p = self.path(name);
        std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        std::fs::create_dir_all(&self.root).with_context(|| format!("creating {}", self.root.display()))?;
        let p = self.path(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.root).with_context(|| format!("creating {}", self.root.display()))?;
        let p = self.path(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    }

    pub fn streams(&self) -> Result<Streams> {
        load_dir(&self.root).with_context(|| format!("loading streams from {}", self.root.display()))
    }

    pub fn profile(&self) -> Result<CongestionProfile> {
        serde_json::from_str(&self.read(PROFILE_FILE)?).context("parsing profile.json")
    }

    pub fn bottlenecks(&self) -> Result<BottleneckSet> {
        BottleneckSet::from_json(&self.read(BOTTLENECKS_FILE)?).context("parsing bottlenecks.json")
    }

    pub fn schema(&self) -> Result<SchemaFile> {
        Ok(SchemaFile::from_json(&self.read(SCHEMA_FILE)?).context("parsing schema.json")?)
    }

    pub fn cases(&self) -> Result<CaseLibrary> {
        let schema = self.schema()?;
        let p = self.path(CASES_FILE);
        let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
        Ok(read_cases(BufReader::new(f), &schema).context("parsing cases.csv")?)
    }

    pub fn incidents(&self) -> Result<Vec<ResolvedIncident>> {
        let p = self.path(RESOLVED_INCIDENTS_FILE);
        let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
        Ok(read_incidents(BufReader::new(f)).context("parsing incidents.jsonl")?)
    }

    pub fn model(&self) -> Result<BayesNet> {
        Ok(BayesNet::from_json(&self.read(MODEL_FILE)?).context("parsing model.json")?)
    }

    pub fn reliability(&self) -> Result<Option<ReliabilityModel>> {
        self.optional(RELIABILITY_FILE, |s| Ok(ReliabilityModel::from_json(s)?))
    }

    pub fn marginal(&self) -> Result<Option<MarginalModel>> {
        self.optional(MARGINAL_FILE, |s| Ok(MarginalModel::from_json(s)?))
    }

    pub fn future_surprise(&self) -> Result<Option<FutureSurpriseModel>> {
        self.optional(FUTURE_SURPRISE_FILE, |s| Ok(FutureSurpriseModel::from_json(s)?))
    }

    pub fn policies(&self) -> Result<PolicyStore> {
        if !self.exists(POLICIES_FILE) {
            return Ok(PolicyStore {
                schema_version: POLICY_SCHEMA_VERSION,
                ..PolicyStore::default()
            });
        }
        Ok(PolicyStore::from_json(&self.read(POLICIES_FILE)?).context("parsing policies.json")?)
    }

    pub fn save_policies(&self, store: &PolicyStore) -> Result<()> {
        self.write(POLICIES_FILE, &store.to_json())
    }

    pub fn append_alerts(&self, alerts: &[Alert]) -> Result<()> {
        if alerts.is_empty() {
            return Ok(());
        }
        let p = self.path(ALERTS_FILE);
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&p)
            .with_context(|| format!("opening {}", p.display()))?;
        for a in alerts {
            writeln!(f, "{}", serde_json::to_string(a)?)?;
        }
        Ok(())
    }

    fn optional<T>(&self, name: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
        if !self.exists(name) {
            return Ok(None);
        }
        parse(&self.read(name)?)
            .with_context(|| format!("parsing {name}"))
            .map(Some)
    }
}

impl AsRef<Path> for DataDir {
    fn as_ref(&self) -> &Path {
        &self.root
    }
}
