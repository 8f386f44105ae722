//! Parameters from flags and flat key-value config files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use orbitq_core::oracle::TruncationSpec;
use orbitq_core::SystemParams;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// TOML file with keys lambda1, lambda2, mu, mu1, mu2; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    mu: Option<f64>,
    mu1: Option<f64>,
    mu2: Option<f64>,
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl ParamArgs {
    pub fn resolve(&self) -> Result<SystemParams> {
        let file = match &self.config {
            Some(path) => read_config(path)?,
            None => ConfigFile::default(),
        };
        let pick = |name: &str, flag: Option<f64>, cfg: Option<f64>| -> Result<f64> {
            match flag.or(cfg) {
                Some(v) => Ok(v),
                None => bail!("missing parameter {name} (use --{name} or a config file)"),
            }
        };
        let p = SystemParams::new(
            pick("lambda1", self.lambda1, file.lambda1)?,
            pick("lambda2", self.lambda2, file.lambda2)?,
            pick("mu", self.mu, file.mu)?,
            pick("mu1", self.mu1, file.mu1)?,
            pick("mu2", self.mu2, file.mu2)?,
        )?;
        Ok(p)
    }

    /// Only the values that were given, for sweeps that fill in the rest.
    pub fn partial(&self) -> Result<[Option<f64>; 5]> {
        let file = match &self.config {
            Some(path) => read_config(path)?,
            None => ConfigFile::default(),
        };
        Ok([
            self.lambda1.or(file.lambda1),
            self.lambda2.or(file.lambda2),
            self.mu.or(file.mu),
            self.mu1.or(file.mu1),
            self.mu2.or(file.mu2),
        ])
    }
}

#[derive(Debug, Clone, Args)]
pub struct TruncationArgs {
    #[arg(long, default_value_t = 120)]
    pub mmax: usize,
    #[arg(long, default_value_t = 120)]
    pub nmax: usize,
    /// Accepted probability mass on the truncation rim.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 480)]
    pub max_level: usize,
}

impl TruncationArgs {
    pub fn spec(&self) -> TruncationSpec {
        TruncationSpec {
            m_max: self.mmax,
            n_max: self.nmax,
            tol: self.tol,
            max_level: self.max_level,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    #[test]
    fn flags_override_config() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "lambda1 = 1.0\nlambda2 = 1.0\nmu = 4\nmu1 = 2.0\nmu2 = 2.0").unwrap();
        let args = ParamArgs {
            config: Some(f.path().to_path_buf()),
            mu2: Some(2.5),
            ..Default::default()
        };
        let p = args.resolve().unwrap();
        assert_eq!(p.mu, 4.0);
        assert_eq!(p.mu2, 2.5);
    }

    #[test]
    fn unknown_and_missing_keys() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "lambda1 = 1.0\nlambda3 = 2.0").unwrap();
        let args = ParamArgs {
            config: Some(f.path().to_path_buf()),
            ..Default::default()
        };
        assert!(args.resolve().is_err());
        let args = ParamArgs {
            lambda1: Some(1.0),
            ..Default::default()
        };
        let err = args.resolve().unwrap_err().to_string();
        assert!(err.contains("lambda2"), "{err}");
    }

    #[test]
    fn nonpositive_rates_rejected() {
        let args = ParamArgs {
            lambda1: Some(1.0),
            lambda2: Some(-1.0),
            mu: Some(4.0),
            mu1: Some(2.0),
            mu2: Some(2.0),
            ..Default::default()
        };
        assert!(args.resolve().is_err());
    }
}
