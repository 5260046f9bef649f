//! Resolved experiment configuration: defaults, then a TOML or JSON file,
//! then command-line flags.

use crate::error::{config_err, CliError};
use catmap::classical::{validate_map, HyperbolicMap};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Spectrum,
    Deloc,
    Wigner,
    Egorov,
    Words,
    Fup,
    Porosity,
    Qe,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Deloc => "deloc",
            Experiment::Wigner => "wigner",
            Experiment::Egorov => "egorov",
            Experiment::Words => "words",
            Experiment::Fup => "fup",
            Experiment::Porosity => "porosity",
            Experiment::Qe => "qe",
        }
    }

    fn default_n(self) -> &'static str {
        match self {
            Experiment::Spectrum | Experiment::Wigner => "101",
            Experiment::Deloc => "101:501:2",
            Experiment::Egorov => "51:501:50",
            Experiment::Words => "101:501:100",
            Experiment::Qe => "101:401:100",
            Experiment::Fup | Experiment::Porosity => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TieBreakName {
    Window,
    Solver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BasisName {
    Deterministic,
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SideName {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    /// `DE`, four comma-separated integers `a,b,c,d`, or `{"matrix": [[a,b],[c,d]]}`.
    pub map: String,
    /// `start:end:step`, `start:end`, a comma list, or a single value.
    pub n: Option<String>,
    pub window: [f64; 2],
    pub seed: u64,
    pub tie_break: TieBreakName,
    pub basis: BasisName,
    pub rotations: usize,
    /// Bump `(cx, cy, r0, r1)` for the C₁ proxy.
    pub probe: Option<[f64; 4]>,
    pub mode_max: i64,
    pub max_power: u32,
    pub t: usize,
    pub rho: f64,
    pub delta: f64,
    pub random_x: usize,
    /// `cantor:BASE:DIGITS` or `cantor:BASE:DIGITS:LEVEL`.
    pub family: Option<String>,
    /// Level range `a:b` for FUP scans.
    pub levels: String,
    pub smooth: Option<f64>,
    pub set_file: Option<String>,
    pub word: Option<String>,
    pub side: SideName,
    pub kappa: f64,
    pub resolution: usize,
    pub threshold: f64,
    pub nu: f64,
    pub tau0: f64,
    pub tau1: f64,
    /// `cos-y`, `cos-eta`, or a path to a symbol JSON file.
    pub symbol: String,
    /// `eigen:J`, `position:J` or `uniform`.
    pub state: String,
    pub l_max: i64,
    pub husimi: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            map: "DE".into(),
            n: None,
            window: [0.3, 0.7],
            seed: 0,
            tie_break: TieBreakName::Window,
            basis: BasisName::Deterministic,
            rotations: 8,
            probe: Some([0.5, 0.5, 0.1, 0.2]),
            mode_max: 8,
            max_power: 4,
            t: 2,
            rho: 0.25,
            delta: 0.4,
            random_x: 4,
            family: None,
            levels: "3:7".into(),
            smooth: None,
            set_file: None,
            word: None,
            side: SideName::Plus,
            kappa: 0.05,
            resolution: 2048,
            threshold: 1e-6,
            nu: 0.1,
            tau0: 0.01,
            tau1: 1.0,
            symbol: "cos-y".into(),
            state: "eigen:0".into(),
            l_max: 8,
            husimi: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; `.json` is parsed as JSON, anything else as TOML.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
        }
    }

    /// Fixes the experiment and fills experiment-dependent defaults.
    pub fn resolve(mut self, experiment: Experiment) -> Result<Self, CliError> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(config_err(format!("config is for '{}', not '{}'", e.name(), experiment.name())));
            }
        }
        self.experiment = Some(experiment);
        if self.n.is_none() && !experiment.default_n().is_empty() {
            self.n = Some(experiment.default_n().into());
        }
        let [a1, a2] = self.window;
        if !(0.0..1.0).contains(&a1) || !(a1 < a2 && a2 <= 1.0) {
            return Err(config_err(format!("window needs 0 <= a1 < a2 <= 1, got {a1},{a2}")));
        }
        Ok(self)
    }

    pub fn experiment(&self) -> Experiment {
        self.experiment.expect("resolved config")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hyperbolic_map(&self) -> Result<HyperbolicMap, CliError> {
        parse_map(&self.map)
    }

    /// The N list, checked against the kernel condition `gcd(2b, N) = 1`.
    pub fn n_values(&self, map: &HyperbolicMap) -> Result<Vec<usize>, CliError> {
        let spec = self.n.as_deref().ok_or_else(|| config_err("no N values given"))?;
        let ns = parse_n_list(spec)?;
        let b = map.entries[0][1];
        for &n in &ns {
            if b == 0 || gcd(2 * b.unsigned_abs(), n as u64) != 1 {
                return Err(config_err(format!("N = {n} is not supported by the kernel (needs gcd(2b, N) = 1 with b = {b})")));
            }
        }
        Ok(ns)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn parse_map(s: &str) -> Result<HyperbolicMap, CliError> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("de") {
        return Ok(HyperbolicMap::degli_esposti());
    }
    if t.starts_with('{') {
        return HyperbolicMap::from_json(t).map_err(|e| config_err(format!("map: {e}")));
    }
    let v: Vec<i64> = t
        .split(',')
        .map(|x| x.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_err(format!("map '{s}' is not DE, a,b,c,d or a JSON literal")))?;
    if v.len() != 4 {
        return Err(config_err(format!("map '{s}' needs four entries")));
    }
    validate_map([[v[0], v[1]], [v[2], v[3]]]).map_err(|e| config_err(format!("map: {e}")))
}

pub fn parse_n_list(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || config_err(format!("cannot parse N list '{s}'"));
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
    let ns: Vec<usize> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let (start, end, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(bad()),
        };
        if step == 0 || start > end {
            return Err(bad());
        }
        (start..=end).step_by(step).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if ns.is_empty() || ns.contains(&0) {
        return Err(config_err(format!("N list '{s}' must hold positive values")));
    }
    Ok(ns)
}

/// Comma-separated floats of a fixed count.
pub fn parse_floats<const K: usize>(s: &str, what: &str) -> Result<[f64; K], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_err(format!("{what} '{s}' is not a list of numbers")))?;
    v.try_into().map_err(|_| config_err(format!("{what} '{s}' needs {K} values")))
}
