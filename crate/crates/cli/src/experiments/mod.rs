//! Experiment registry and the uniform driver.

pub mod cca;
pub mod disco;
pub mod dmd;
pub mod selection;
pub mod simulate;
pub mod transfer;

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::parse_params;
use crate::error::{CliError, Result};
use crate::report::Report;

/// Seed used when neither the configuration nor the command line sets one.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    Simulate,
    DmdReal,
    DmdImag,
    EdmdPt,
    GedmdPt,
    CcaSuperposition,
    DiscoQho,
    DiscoHydrogen,
    ModelSelectionHydrogen,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Self::Simulate,
        Self::DmdReal,
        Self::DmdImag,
        Self::EdmdPt,
        Self::GedmdPt,
        Self::CcaSuperposition,
        Self::DiscoQho,
        Self::DiscoHydrogen,
        Self::ModelSelectionHydrogen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::DmdReal => "dmd-real",
            Self::DmdImag => "dmd-imag",
            Self::EdmdPt => "edmd-pt",
            Self::GedmdPt => "gedmd-pt",
            Self::CcaSuperposition => "cca-superposition",
            Self::DiscoQho => "disco-qho",
            Self::DiscoHydrogen => "disco-hydrogen",
            Self::ModelSelectionHydrogen => "model-selection-hydrogen",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| CliError::UnknownExperiment(s.into()))
    }
}

/// What an experiment module contributes to a [`Report`].
pub struct Outcome {
    pub metrics: serde_json::Map<String, serde_json::Value>,
    pub checks: Vec<crate::report::Check>,
    pub tables: Vec<crate::report::Table>,
}

fn drive<P, F>(exp: Experiment, params: &toml::Table, seed: u64, run: F) -> Result<Report>
where
    P: DeserializeOwned + Serialize,
    F: FnOnce(&P, u64) -> Result<Outcome>,
{
    let p: P = parse_params(params)?;
    let resolved = serde_json::to_value(&p)?;
    let out = run(&p, seed)?;
    Ok(Report { experiment: exp, seed, params: resolved, metrics: out.metrics, checks: out.checks, tables: out.tables })
}

/// Parses the experiment's parameters (unknown keys are rejected), runs it
/// and collects metrics, checks and plot tables.
pub fn run_experiment(exp: Experiment, params: &toml::Table, seed: Option<u64>) -> Result<Report> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    match exp {
        Experiment::Simulate => drive(exp, params, seed, simulate::outcome),
        Experiment::DmdReal => drive(exp, params, seed, |p, s| dmd::outcome(p, s, dmd::Mode::Real)),
        Experiment::DmdImag => drive(exp, params, seed, |p, s| dmd::outcome(p, s, dmd::Mode::Imaginary)),
        Experiment::EdmdPt => drive(exp, params, seed, transfer::edmd_outcome),
        Experiment::GedmdPt => drive(exp, params, seed, transfer::gedmd_outcome),
        Experiment::CcaSuperposition => drive(exp, params, seed, cca::outcome),
        Experiment::DiscoQho => drive(exp, params, seed, disco::qho_outcome),
        Experiment::DiscoHydrogen => drive(exp, params, seed, disco::hydrogen_outcome),
        Experiment::ModelSelectionHydrogen => drive(exp, params, seed, selection::outcome),
    }
}

/// Parses an experiment's parameter table without running it.
pub fn parse_experiment_params(exp: Experiment, params: &toml::Table) -> Result<()> {
    match exp {
        Experiment::Simulate => parse_params::<simulate::Params>(params).map(drop),
        Experiment::DmdReal | Experiment::DmdImag => parse_params::<dmd::Params>(params).map(drop),
        Experiment::EdmdPt => parse_params::<transfer::EdmdParams>(params).map(drop),
        Experiment::GedmdPt => parse_params::<transfer::GedmdParams>(params).map(drop),
        Experiment::CcaSuperposition => parse_params::<cca::Params>(params).map(drop),
        Experiment::DiscoQho => parse_params::<disco::QhoParams>(params).map(drop),
        Experiment::DiscoHydrogen => parse_params::<disco::HydrogenParams>(params).map(drop),
        Experiment::ModelSelectionHydrogen => parse_params::<selection::Params>(params).map(drop),
    }
}

/// Inserts a serializable value into a metrics map.
pub(crate) fn put(m: &mut serde_json::Map<String, serde_json::Value>, key: &str, v: impl Serialize) {
    m.insert(key.into(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        let err = "dmd".parse::<Experiment>().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("unknown experiment"));
    }
}
