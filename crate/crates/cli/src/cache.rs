//! On-disk table cache. Each distinct set of table inputs gets its own
//! directory `<cache_dir>/<key>` holding the six tables and a manifest of
//! their checksums, so a repeated request is a pure read.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use conjgamma::inversion::ProfileTables;
use conjgamma::kernels::{KernelKind, KernelTable, RadialKernels};
use conjgamma::quad::QuadSettings;
use conjgamma::{Error, Execution, LogGridTable};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub key: String,
    pub dimension: u32,
    /// `(file name, data checksum)` in a fixed order.
    pub tables: Vec<(String, String)>,
}

/// Loaded or freshly built tables.
pub struct TableSet {
    pub dir: PathBuf,
    pub cache_hit: bool,
    pub profiles: Arc<ProfileTables>,
    pub levy: Arc<KernelTable>,
    pub green: Arc<KernelTable>,
}

impl TableSet {
    pub fn checksums(&self) -> Vec<(String, String, usize)> {
        self.all()
            .into_iter()
            .map(|(name, t)| (name, t.checksum(), t.len()))
            .collect()
    }

    fn all(&self) -> Vec<(String, &LogGridTable)> {
        vec![
            (file_name(&self.profiles.u), &self.profiles.u),
            (file_name(&self.profiles.v), &self.profiles.v),
            (file_name(&self.profiles.jump_tail), &self.profiles.jump_tail),
            (file_name(&self.profiles.mu), &self.profiles.mu),
            (file_name(&self.levy.table), &self.levy.table),
            (file_name(&self.green.table), &self.green.table),
        ]
    }
}

fn file_name(t: &LogGridTable) -> String {
    format!("{}.tbl", t.target)
}

pub fn cache_dir_for(config: &RunConfig) -> PathBuf {
    config.cache_dir.join(&config.table_key()[..16])
}

/// Loads the tables for `config` from the cache, building them on a miss.
/// A manifest whose files fail verification is an error, not a miss.
pub fn ensure_tables(config: &RunConfig, exec: Execution) -> Result<TableSet, CliError> {
    let dir = cache_dir_for(config);
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
            CliError::Core(Error::TableIntegrity {
                path: manifest_path.clone(),
                detail: format!("unreadable manifest: {e}"),
            })
        })?;
        if manifest.key == config.table_key() {
            return load(config, &dir, &manifest);
        }
    }
    build(config, &dir, exec)
}

fn load(config: &RunConfig, dir: &Path, manifest: &Manifest) -> Result<TableSet, CliError> {
    let read = |name: &str| -> Result<LogGridTable, CliError> {
        let path = dir.join(name);
        let t = LogGridTable::read(&path)?;
        let want = manifest
            .tables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
            .ok_or_else(|| Error::TableIntegrity {
                path: path.clone(),
                detail: "header mismatch: file not listed in manifest".into(),
            })?;
        if t.checksum() != want {
            return Err(Error::TableIntegrity {
                path,
                detail: format!(
                    "header mismatch: checksum {} differs from manifest {want}",
                    t.checksum()
                ),
            }
            .into());
        }
        Ok(t)
    };
    let dim = config.dim()?;
    let profiles = ProfileTables::from_tables(
        config.profiles,
        read("u.tbl")?,
        read("v.tbl")?,
        read("jump_tail.tbl")?,
        read("mu.tbl")?,
    )?;
    let levy_name = format!("{}.tbl", KernelTable::target_name(KernelKind::LevyJ, dim));
    let green_name = format!("{}.tbl", KernelTable::target_name(KernelKind::GreenG, dim));
    let levy = KernelTable::from_table(KernelKind::LevyJ, dim, read(&levy_name)?)?;
    let green = KernelTable::from_table(KernelKind::GreenG, dim, read(&green_name)?)?;
    Ok(TableSet {
        dir: dir.to_path_buf(),
        cache_hit: true,
        profiles: Arc::new(profiles),
        levy: Arc::new(levy),
        green: Arc::new(green),
    })
}

fn build(config: &RunConfig, dir: &Path, exec: Execution) -> Result<TableSet, CliError> {
    let dim = config.dim()?;
    let profiles = Arc::new(ProfileTables::build(config.profiles, exec)?);
    let kernels = RadialKernels::new(profiles.clone(), dim)
        .with_quad(QuadSettings::default().with_rel_tol(config.kernel_quad_rel_tol));
    let ppd = config.kernel_points_per_decade;
    let (glo, ghi) = KernelTable::GREEN_RANGE;
    let (jlo, jhi) = KernelTable::LEVY_RANGE;
    let levy = Arc::new(KernelTable::build(&kernels, KernelKind::LevyJ, jlo, jhi, ppd, exec)?);
    let green = Arc::new(KernelTable::build(&kernels, KernelKind::GreenG, glo, ghi, ppd, exec)?);
    let set = TableSet {
        dir: dir.to_path_buf(),
        cache_hit: false,
        profiles,
        levy,
        green,
    };
    std::fs::create_dir_all(dir)?;
    let mut tables = Vec::new();
    for (name, t) in set.all() {
        t.write(&dir.join(&name))?;
        tables.push((name, t.checksum()));
    }
    let manifest = Manifest {
        key: config.table_key(),
        dimension: config.dimension,
        tables,
    };
    // the manifest goes last so an interrupted build is simply rebuilt
    std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(set)
}
