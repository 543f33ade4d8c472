//! On-disk workspace: `series/*.csv`, `trees/*.plato` and `catalog.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use plato_core::query::Catalog;
use plato_core::{BuildConfig, FunctionKind, PlatoTree, StopRule, TimeSeries};
use serde::{Deserialize, Serialize};

pub const CATALOG_FILE: &str = "catalog.json";
pub const CATALOG_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Compression {
    Paa,
    Plr,
}

impl From<Compression> for FunctionKind {
    fn from(c: Compression) -> Self {
        match c {
            Compression::Paa => FunctionKind::Constant,
            Compression::Plr => FunctionKind::Linear,
        }
    }
}

impl From<FunctionKind> for Compression {
    fn from(k: FunctionKind) -> Self {
        match k {
            FunctionKind::Constant => Compression::Paa,
            FunctionKind::Linear => Compression::Plr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    /// Split while `L > tau`.
    Tau,
    /// Split while the segment is longer than `kappa`.
    Kappa,
    /// Stop as soon as either holds.
    Either,
}

impl From<Stop> for StopRule {
    fn from(s: Stop) -> Self {
        match s {
            Stop::Tau => StopRule::TauOnly,
            Stop::Kappa => StopRule::KappaOnly,
            Stop::Either => StopRule::TauOrKappa,
        }
    }
}

impl From<StopRule> for Stop {
    fn from(s: StopRule) -> Self {
        match s {
            StopRule::TauOnly => Stop::Tau,
            StopRule::KappaOnly => Stop::Kappa,
            StopRule::TauOrKappa => Stop::Either,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub compression: Compression,
    pub tau: f64,
    pub kappa: u64,
    pub stop_rule: Stop,
}

impl From<&BuildConfig<f64>> for ConfigEntry {
    fn from(c: &BuildConfig<f64>) -> Self {
        Self { compression: c.kind.into(), tau: c.tau, kappa: c.kappa, stop_rule: c.stop_rule.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub length: u64,
    /// Relative to the workspace root.
    pub series: PathBuf,
    pub tree: PathBuf,
    pub config: ConfigEntry,
    pub node_count: usize,
    pub tree_bytes: u64,
    pub raw_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub format: u32,
    pub series: BTreeMap<String, Entry>,
}

impl Default for CatalogFile {
    fn default() -> Self {
        Self { format: CATALOG_FORMAT, series: BTreeMap::new() }
    }
}

pub struct Workspace {
    pub root: PathBuf,
    pub catalog: CatalogFile,
}

impl Workspace {
    /// Opens `root`, starting an empty catalog if there is none.
    pub fn open(root: impl Into<PathBuf>) -> anyhow::Result<Self> {
        let root = root.into();
        let path = root.join(CATALOG_FILE);
        let catalog = if path.exists() {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let catalog: CatalogFile =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if catalog.format != CATALOG_FORMAT {
                bail!("{} has format {}, expected {CATALOG_FORMAT}", path.display(), catalog.format);
            }
            catalog
        } else {
            CatalogFile::default()
        };
        Ok(Self { root, catalog })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn save(&self) -> anyhow::Result<()> {
        fs::create_dir_all(&self.root)?;
        let path = self.root.join(CATALOG_FILE);
        let tmp = self.root.join(format!("{CATALOG_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(&self.catalog)? + "\n")?;
        fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn query_catalog(&self) -> Catalog {
        self.catalog.series.iter().map(|(id, e)| (id.clone(), e.length)).collect()
    }

    pub fn entry(&self, id: &str) -> anyhow::Result<&Entry> {
        self.catalog.series.get(id).with_context(|| format!("series `{id}` is not in the catalog"))
    }

    /// Loads the tree of `id` and checks it against its catalog entry.
    pub fn load_tree(&self, id: &str) -> anyhow::Result<PlatoTree<f64>> {
        let entry = self.entry(id)?;
        let path = self.resolve(&entry.tree);
        let tree = PlatoTree::<f64>::load(&path).with_context(|| format!("loading {}", path.display()))?;
        if tree.len() != entry.length {
            bail!("{} covers {} points, catalog says {}", path.display(), tree.len(), entry.length);
        }
        if tree.series_id() != id {
            bail!("{} belongs to series `{}`, not `{id}`", path.display(), tree.series_id());
        }
        Ok(tree)
    }

    pub fn load_series(&self, id: &str) -> anyhow::Result<TimeSeries<f64>> {
        let entry = self.entry(id)?;
        let path = self.resolve(&entry.series);
        let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let series = TimeSeries::read_csv(id, file).with_context(|| format!("reading {}", path.display()))?;
        if series.len() != entry.length {
            bail!("{} has {} points, catalog says {}", path.display(), series.len(), entry.length);
        }
        Ok(series)
    }
}
