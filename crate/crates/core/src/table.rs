//! Positive functions tabulated on a geometric grid, with log-log linear
//! interpolation and a versioned text persistence format.
//!
//! File layout:
//!
//! ```text
//! #conjgamma-table format_version=1 target=u t_min=1e-14 t_max=1000000 points_per_decade=512 count=10241 sha256=<hex> key=value ...
//! t,value
//! 1e-14,27.97...
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a reload
//! reproduces every `f64` bit for bit. The checksum covers the rows after the
//! header line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "#conjgamma-table";

#[derive(Debug, Clone, PartialEq)]
pub struct LogGridTable {
    pub target: String,
    pub t_min: f64,
    pub t_max: f64,
    pub points_per_decade: usize,
    /// Extra header fields: inversion settings, kernel kind, dimension, ...
    pub provenance: BTreeMap<String, String>,
    ln_t_min: f64,
    ln_step: f64,
    grid: Vec<f64>,
    values: Vec<f64>,
    ln_values: Vec<f64>,
}

/// Grid point `i` of a geometric grid; computed identically at build and load.
fn grid_point(t_min: f64, points_per_decade: usize, i: usize) -> f64 {
    t_min * 10f64.powf(i as f64 / points_per_decade as f64)
}

fn grid_len(t_min: f64, t_max: f64, points_per_decade: usize) -> usize {
    ((t_max / t_min).log10() * points_per_decade as f64).round() as usize + 1
}

impl LogGridTable {
    /// Tabulates `f` on the grid `t_min·10^{i/ppd}`. Evaluation runs under
    /// `exec`; values must be finite and positive.
    pub fn build<F>(
        target: &str,
        t_min: f64,
        t_max: f64,
        points_per_decade: usize,
        provenance: BTreeMap<String, String>,
        exec: Execution,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        if !(t_min > 0.0 && t_max > t_min && points_per_decade > 0) {
            return Err(Error::InvalidParameter(format!(
                "table grid [{t_min}, {t_max}] with {points_per_decade} points per decade"
            )));
        }
        let n = grid_len(t_min, t_max, points_per_decade);
        let grid: Vec<f64> = (0..n).map(|i| grid_point(t_min, points_per_decade, i)).collect();
        let values = exec.try_map(&grid, |&t| f(t))?;
        Self::from_parts(target, t_min, points_per_decade, provenance, grid, values)
    }

    fn from_parts(
        target: &str,
        t_min: f64,
        points_per_decade: usize,
        provenance: BTreeMap<String, String>,
        grid: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if let Some((t, v)) = grid.iter().zip(&values).find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Consistency {
                what: format!("table {target}"),
                detail: format!("non-positive or non-finite value {v} at t = {t}"),
            });
        }
        let ln_values = values.iter().map(|v| v.ln()).collect();
        Ok(LogGridTable {
            target: target.to_string(),
            t_min,
            t_max: *grid.last().expect("grid has at least one point"),
            points_per_decade,
            provenance,
            ln_t_min: t_min.ln(),
            ln_step: std::f64::consts::LN_10 / points_per_decade as f64,
            grid,
            values,
            ln_values,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }

    /// Log-log linear interpolation; `None` outside `[t_min, t_max]`.
    #[inline]
    pub fn eval(&self, t: f64) -> Option<f64> {
        if !self.contains(t) {
            return None;
        }
        let x = (t.ln() - self.ln_t_min) / self.ln_step;
        let last = self.grid.len() - 1;
        let i = (x.floor().max(0.0) as usize).min(last.saturating_sub(1));
        if last == 0 {
            return Some(self.values[0]);
        }
        let w = (x - i as f64).clamp(0.0, 1.0);
        Some((self.ln_values[i] * (1.0 - w) + self.ln_values[i + 1] * w).exp())
    }

    /// Value at the lower end of the grid.
    pub fn first(&self) -> (f64, f64) {
        (self.grid[0], self.values[0])
    }

    /// Value at the upper end of the grid.
    pub fn last(&self) -> (f64, f64) {
        let n = self.grid.len() - 1;
        (self.grid[n], self.values[n])
    }

    fn body(&self) -> String {
        let mut body = String::with_capacity(self.grid.len() * 40);
        body.push_str("t,value\n");
        for (t, v) in self.grid.iter().zip(&self.values) {
            writeln!(body, "{t:e},{v:e}").expect("writing to a String");
        }
        body
    }

    /// SHA-256 of the data rows, hex encoded.
    pub fn checksum(&self) -> String {
        hex(&Sha256::digest(self.body().as_bytes()))
    }

    pub fn to_text(&self) -> String {
        let body = self.body();
        let mut header = format!(
            "{MAGIC} format_version={FORMAT_VERSION} target={} t_min={:e} t_max={:e} points_per_decade={} count={} sha256={}",
            self.target,
            self.t_min,
            self.t_max,
            self.points_per_decade,
            self.grid.len(),
            hex(&Sha256::digest(body.as_bytes())),
        );
        for (k, v) in &self.provenance {
            write!(header, " {k}={v}").expect("writing to a String");
        }
        header.push('\n');
        header + &body
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Reads and verifies a table file: header fields, checksum and that the
    /// rows sit exactly on the declared grid.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|detail| Error::TableIntegrity {
            path: path.to_path_buf(),
            detail,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let (header, body) = text.split_once('\n').ok_or_else(|| "missing header line".to_string())?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(MAGIC) {
            return Err(format!("header does not start with {MAGIC}"));
        }
        let mut map: BTreeMap<String, String> = fields
            .filter_map(|kv| kv.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut take = |key: &str| {
            map.remove(key)
                .ok_or_else(|| format!("header mismatch: missing field {key}"))
        };
        let version: u32 = take("format_version")?
            .parse()
            .map_err(|e| format!("header mismatch: format_version: {e}"))?;
        if version != FORMAT_VERSION {
            return Err(format!(
                "header mismatch: format_version {version}, expected {FORMAT_VERSION}"
            ));
        }
        let target = take("target")?;
        let num = |s: String, key: &str| s.parse::<f64>().map_err(|e| format!("header mismatch: {key}: {e}"));
        let t_min = num(take("t_min")?, "t_min")?;
        let t_max = num(take("t_max")?, "t_max")?;
        let ppd: usize = take("points_per_decade")?
            .parse()
            .map_err(|e| format!("header mismatch: points_per_decade: {e}"))?;
        let count: usize = take("count")?
            .parse()
            .map_err(|e| format!("header mismatch: count: {e}"))?;
        let sha = take("sha256")?;
        let actual = hex(&Sha256::digest(body.as_bytes()));
        if actual != sha {
            return Err(format!("header mismatch: sha256 {sha} but data hashes to {actual}"));
        }
        let mut lines = body.lines();
        if lines.next() != Some("t,value") {
            return Err("missing column header `t,value`".into());
        }
        let mut grid = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| format!("row {i}: expected `t,value`"))?;
            let t: f64 = t.parse().map_err(|e| format!("row {i}: {e}"))?;
            let v: f64 = v.parse().map_err(|e| format!("row {i}: {e}"))?;
            if t != grid_point(t_min, ppd, i) {
                return Err(format!("row {i}: t = {t} is off the declared grid"));
            }
            grid.push(t);
            values.push(v);
        }
        if grid.len() != count || count != grid_len(t_min, t_max, ppd) {
            return Err(format!("header mismatch: count {count}, found {} rows", grid.len()));
        }
        Self::from_parts(&target, t_min, ppd, map, grid, values).map_err(|e| e.to_string())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_table() -> LogGridTable {
        let mut prov = BTreeMap::new();
        prov.insert("accuracy".to_string(), "1e-6".to_string());
        LogGridTable::build("test", 1e-3, 1e2, 16, prov, Execution::Sequential, |t| {
            Ok(t.powf(-1.5) * (1.0 + t).ln())
        })
        .unwrap()
    }

    #[test]
    fn grid_shape() {
        let t = sample_table();
        assert_eq!(t.len(), 5 * 16 + 1);
        assert!(t.grid().windows(2).all(|w| w[0] < w[1]));
        assert!((t.t_max - 1e2).abs() < 1e-10);
    }

    #[test]
    fn interpolation_is_exact_for_power_laws() {
        let t = LogGridTable::build("pow", 1e-4, 1e4, 8, BTreeMap::new(), Execution::Sequential, |t| {
            Ok(3.0 * t.powf(-2.25))
        })
        .unwrap();
        for x in [1.3e-4, 0.077, 1.0, 512.0] {
            let v = t.eval(x).unwrap();
            assert!((v / (3.0 * x.powf(-2.25)) - 1.0).abs() < 1e-12);
        }
        assert!(t.eval(1e-5).is_none());
        assert!(t.eval(2e4).is_none());
    }

    #[test]
    fn rejects_nonpositive_values() {
        let r = LogGridTable::build("bad", 1.0, 10.0, 4, BTreeMap::new(), Execution::Sequential, |t| {
            Ok(2.0 - t)
        });
        assert!(matches!(r, Err(Error::Consistency { .. })));
    }

    #[test]
    fn reload_is_bit_exact() {
        let t = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tbl");
        t.write(&path).unwrap();
        let back = LogGridTable::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.provenance["accuracy"], "1e-6");
    }

    #[test]
    fn corrupted_file_is_rejected() {
        let t = sample_table();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tbl");
        let text = t.to_text().replacen(",", ",9", 2);
        fs::write(&path, text).unwrap();
        let err = LogGridTable::read(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t.tbl"), "{msg}");
        assert!(msg.contains("header mismatch"), "{msg}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = sample_table().to_text().replace("format_version=1", "format_version=7");
        assert!(LogGridTable::parse(&text).unwrap_err().contains("format_version"));
    }

    proptest! {
        #[test]
        fn roundtrip_arbitrary_values(vals in proptest::collection::vec(1e-300f64..1e300, 9)) {
            let t = LogGridTable::build("p", 1.0, 100.0, 4, BTreeMap::new(), Execution::Sequential, |x| {
                let i = ((x.log10() * 4.0).round()) as usize;
                Ok(vals[i])
            }).unwrap();
            let back = LogGridTable::parse(&t.to_text()).unwrap();
            prop_assert_eq!(back.values(), t.values());
        }
    }
}
