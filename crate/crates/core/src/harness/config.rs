use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mcmc::ChainConfig;
use crate::TestConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mixture,
    Rank1,
    GroupSparse,
    Spline,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Logistic,
        ModelKind::Mixture,
        ModelKind::Rank1,
        ModelKind::GroupSparse,
        ModelKind::Spline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Mixture => "mixture",
            ModelKind::Rank1 => "rank1",
            ModelKind::GroupSparse => "group_sparse",
            ModelKind::Spline => "spline",
        }
    }

    /// Signal values swept when no grid is given.
    pub fn default_signal_grid(self) -> Vec<f64> {
        match self {
            ModelKind::Logistic => (0..=10).map(|i| i as f64 / 10.0).collect(),
            ModelKind::Mixture => (0..=5).map(|i| i as f64 / 10.0).collect(),
            ModelKind::Rank1 => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            ModelKind::GroupSparse => vec![0.0, 0.3, 0.6, 0.9],
            ModelKind::Spline => (0..=6).map(|i| i as f64 * 0.3).collect(),
        }
    }

    /// Sample size (matrix side for rank1) of the reference design.
    pub fn default_size(self) -> usize {
        match self {
            ModelKind::Logistic => 100,
            ModelKind::Mixture => 200,
            ModelKind::Rank1 => 10,
            ModelKind::GroupSparse => 100,
            ModelKind::Spline => 50,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "logistic" => Ok(ModelKind::Logistic),
            "mixture" => Ok(ModelKind::Mixture),
            "rank1" | "rank_1" => Ok(ModelKind::Rank1),
            "group_sparse" | "groupsparse" => Ok(ModelKind::GroupSparse),
            "spline" => Ok(ModelKind::Spline),
            other => Err(Error::Parse(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Acssb,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Acssb => "acssb",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "acssb" => Ok(Method::Acssb),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub signal_grid: Vec<f64>,
    pub trials: usize,
    pub alpha: f64,
    pub b: usize,
    pub m: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Overrides the model's reference sample size.
    pub size: Option<usize>,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Record wall-clock runtimes. Off by default so that reruns are byte-identical.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(model: ModelKind) -> Self {
        let chain = ChainConfig::default();
        Self {
            model,
            signal_grid: model.default_signal_grid(),
            trials: 500,
            alpha: 0.05,
            b: 25,
            m: 300,
            burn_in: chain.burn_in,
            thin: chain.thin,
            seed: 0,
            methods: vec![Method::Acssb, Method::Oracle],
            size: None,
            threads: None,
            timing: false,
        }
    }

    pub fn size(&self) -> usize {
        self.size.unwrap_or_else(|| self.model.default_size())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter("alpha must lie in [0, 1]".into()));
        }
        if self.b < 1 {
            return Err(Error::InvalidParameter("B must be at least 1".into()));
        }
        if self.thin < 1 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if self.signal_grid.is_empty() || self.signal_grid.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("signal grid must be non-empty and finite".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn test_config(&self, seed: u64) -> Result<TestConfig> {
        Ok(TestConfig {
            b: self.b,
            m: self.m,
            chain: ChainConfig::new(self.burn_in, self.thin)?,
            seed,
        })
    }

    /// Apply one `key = value` setting. Keys mirror the field names; `B`
    /// and `M` are accepted in either case.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::Parse(format!("invalid {what} '{value}'"));
        match key.trim() {
            "model" => {
                let model: ModelKind = value.parse()?;
                if model != self.model {
                    self.signal_grid = model.default_signal_grid();
                }
                self.model = model;
            }
            "signal_grid" | "signal-grid" => self.signal_grid = parse_grid(value)?,
            "trials" => self.trials = value.parse().map_err(|_| bad("trials"))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "B" | "b" => self.b = value.parse().map_err(|_| bad("B"))?,
            "M" | "m" => self.m = value.parse().map_err(|_| bad("M"))?,
            "burn_in" | "burn-in" => self.burn_in = value.parse().map_err(|_| bad("burn_in"))?,
            "thin" => self.thin = value.parse().map_err(|_| bad("thin"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "n" | "size" => self.size = Some(value.parse().map_err(|_| bad("n"))?),
            "threads" => self.threads = Some(value.parse().map_err(|_| bad("threads"))?),
            "timing" => self.timing = value.parse().map_err(|_| bad("timing"))?,
            other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parse flat `key = value` text. Blank lines and `#` comments are skipped.
    /// A `model` line is applied first so that later keys override its defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let model = pairs
            .iter()
            .find(|(k, _)| k == "model")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(ModelKind::Logistic);
        let mut cfg = Self::new(model);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "model") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let grid: Vec<String> = self.signal_grid.iter().map(|c| c.to_string()).collect();
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let mut out = format!(
            "model = {}\nsignal_grid = {}\ntrials = {}\nalpha = {}\nB = {}\nM = {}\nburn_in = {}\nthin = {}\nseed = {}\nmethods = {}\n",
            self.model,
            grid.join(","),
            self.trials,
            self.alpha,
            self.b,
            self.m,
            self.burn_in,
            self.thin,
            self.seed,
            methods.join(",")
        );
        if let Some(n) = self.size {
            out.push_str(&format!("n = {n}\n"));
        }
        if let Some(t) = self.threads {
            out.push_str(&format!("threads = {t}\n"));
        }
        if self.timing {
            out.push_str("timing = true\n");
        }
        out
    }
}

/// Comma-separated values, or `start:stop:count` for an equally spaced grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("invalid signal grid '{s}'"));
    if let [a, b, k] = s.split(':').collect::<Vec<_>>()[..] {
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        return Ok(crate::numerics::quad::linspace(a, b, k));
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}
