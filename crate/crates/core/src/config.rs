//! Run configuration: every tunable of a tracking run in one flat file.

use std::path::{Path, PathBuf};

use crate::core_tracker::{DEFAULT_K, DEFAULT_SCALES, DEFAULT_SEARCH_SCALE};
use crate::error::{Error, Result};
use crate::kvfile::KvFile;
use crate::maskgen::DEFAULT_CELL;
use crate::refiner::{DEFAULT_ALPHA1, DEFAULT_ALPHA2};
use crate::strategy::StrategyParams;

/// Environment variable that replaces the configured root seed.
pub const SEED_ENV: &str = "TSDM_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub strategy: StrategyParams,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Search window side relative to the previous box.
    pub search_scale: f64,
    /// Tile side of the two-color mask.
    pub cell: usize,
    pub core_k: usize,
    pub core_scales: Vec<f64>,
    /// Root of every random stream in a run.
    pub seed: u64,
    pub weights: Option<PathBuf>,
    pub enable_mg: bool,
    pub enable_dr: bool,
    /// 2 paints masked pixels with both mask colors, 1 with the first only.
    pub mask_colors: u8,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: StrategyParams::default(),
            alpha1: DEFAULT_ALPHA1,
            alpha2: DEFAULT_ALPHA2,
            search_scale: DEFAULT_SEARCH_SCALE,
            cell: DEFAULT_CELL,
            core_k: DEFAULT_K,
            core_scales: DEFAULT_SCALES.to_vec(),
            seed: 0,
            weights: None,
            enable_mg: true,
            enable_dr: true,
            mask_colors: 2,
        }
    }
}

const KEYS: [&str; 15] = [
    "mu1",
    "mu2",
    "mu3",
    "gamma_frac",
    "alpha1",
    "alpha2",
    "search_scale",
    "cell",
    "core_k",
    "core_scales",
    "seed",
    "weights",
    "enable_mg",
    "enable_dr",
    "mask_colors",
];

impl RunConfig {
    /// Parses a config file; absent keys keep their defaults. A relative
    /// `weights` path is resolved against `base_dir` when given.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        kv.reject_unknown(|k| KEYS.contains(&k))?;
        let d = RunConfig::default();
        let core_scales = match kv.raw("core_scales") {
            None => d.core_scales,
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad value `{v}` for `core_scales`")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let weights = kv.raw("weights").map(|w| {
            let p = PathBuf::from(w);
            match base_dir {
                Some(base) if p.is_relative() => base.join(p),
                _ => p,
            }
        });
        let cfg = RunConfig {
            strategy: StrategyParams {
                mu1: kv.get_or("mu1", d.strategy.mu1)?,
                mu2: kv.get_or("mu2", d.strategy.mu2)?,
                mu3: kv.get_or("mu3", d.strategy.mu3)?,
                gamma_frac: kv.get_or("gamma_frac", d.strategy.gamma_frac)?,
            },
            alpha1: kv.get_or("alpha1", d.alpha1)?,
            alpha2: kv.get_or("alpha2", d.alpha2)?,
            search_scale: kv.get_or("search_scale", d.search_scale)?,
            cell: kv.get_or("cell", d.cell)?,
            core_k: kv.get_or("core_k", d.core_k)?,
            core_scales,
            seed: kv.get_or("seed", d.seed)?,
            weights,
            enable_mg: kv.get_or("enable_mg", d.enable_mg)?,
            enable_dr: kv.get_or("enable_dr", d.enable_dr)?,
            mask_colors: kv.get_or("mask_colors", d.mask_colors)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Replaces the seed with `value` when present (the content of
    /// [`SEED_ENV`]).
    pub fn with_seed_override(mut self, value: Option<&str>) -> Result<Self> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(self)
    }

    pub fn with_env_seed(self) -> Result<Self> {
        let value = std::env::var(SEED_ENV).ok();
        self.with_seed_override(value.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        if !(self.alpha1 > 0.0 && self.alpha1 <= 1.0) {
            return Err(Error::Config("alpha1 must lie in (0, 1]".into()));
        }
        if !(self.alpha2 > 0.0 && self.alpha2.is_finite()) {
            return Err(Error::Config("alpha2 must be positive".into()));
        }
        if !(self.search_scale > 1.0 && self.search_scale.is_finite()) {
            return Err(Error::Config("search_scale must exceed 1".into()));
        }
        if self.cell == 0 || self.core_k == 0 {
            return Err(Error::Config("cell and core_k must be at least 1".into()));
        }
        if self.core_scales.is_empty() || self.core_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("core_scales must be positive and non-empty".into()));
        }
        if !matches!(self.mask_colors, 1 | 2) {
            return Err(Error::Config("mask_colors must be 1 or 2".into()));
        }
        Ok(())
    }

    /// The config as a file [`RunConfig::parse`] reads back unchanged.
    pub fn to_text(&self) -> String {
        let s = &self.strategy;
        let scales: Vec<String> = self.core_scales.iter().map(|v| v.to_string()).collect();
        let mut out = format!(
            "mu1 = {}\nmu2 = {}\nmu3 = {}\ngamma_frac = {}\nalpha1 = {}\nalpha2 = {}\n\
             search_scale = {}\ncell = {}\ncore_k = {}\ncore_scales = {}\nseed = {}\n\
             enable_mg = {}\nenable_dr = {}\nmask_colors = {}\n",
            s.mu1,
            s.mu2,
            s.mu3,
            s.gamma_frac,
            self.alpha1,
            self.alpha2,
            self.search_scale,
            self.cell,
            self.core_k,
            scales.join(","),
            self.seed,
            self.enable_mg,
            self.enable_dr,
            self.mask_colors
        );
        if let Some(w) = &self.weights {
            out.push_str(&format!("weights = {}\n", w.display()));
        }
        out
    }
}
