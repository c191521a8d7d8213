//! TOML configuration loading and flag resolution. Flags win over the
//! config file; missing values fall back to documented defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use orsim_core::adversary::AdversarySpec;
use orsim_core::engine::Protocol;
use orsim_core::rng::{split_seed, stream};
use orsim_core::tree::PitreeParams;
use orsim_core::types::PartyId;
use orsim_core::{PibflyParams, SimError, SimpleInput};

use crate::{parse_party, random_input, Cli};

/// Raw file shape; every field is optional so partial configs work.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    experiment: FileExperiment,
    #[serde(default)]
    params: FileParams,
    #[serde(default)]
    adversary: FileAdversary,
    #[serde(default)]
    input: FileInput,
    #[serde(default)]
    equalize: FileEqualize,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileExperiment {
    protocol: Option<String>,
    seed: Option<u64>,
    trials: Option<u32>,
    out: Option<PathBuf>,
    adversary: Option<String>,
    oracle_mode: Option<bool>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileParams {
    n_parties: Option<u32>,
    lambda: Option<u32>,
    kappa: Option<f64>,
    chi: Option<u32>,
    d: Option<u32>,
    iterations: Option<u32>,
    alpha_hops: Option<u32>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAdversary {
    target: Option<u32>,
    alpha_schedule: Option<Vec<f64>>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileInput {
    recipients: Option<Vec<u32>>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEqualize {
    i: Option<u32>,
    j: Option<u32>,
}

/// Protocol-level numeric parameters after resolution.
#[derive(Clone, Serialize)]
pub struct Params {
    pub n_parties: u32,
    pub lambda: u32,
    pub kappa: f64,
    pub chi: u32,
    pub d: u32,
    /// Butterfly iteration count D.
    pub iterations: u32,
    /// Strawman intermediary count.
    pub alpha_hops: u32,
}

/// Fully resolved configuration, echoed verbatim into every output.
#[derive(Clone, Serialize)]
pub struct ResolvedConfig {
    pub version: String,
    pub protocol_name: String,
    pub adversary_name: String,
    pub seed: u64,
    pub trials: u32,
    pub oracle_mode: bool,
    pub params: Params,
    pub target: Option<u32>,
    pub alpha_schedule: Option<Vec<f64>>,
    pub recipients: Option<Vec<u32>>,
    pub equalize_i: Option<u32>,
    pub equalize_j: Option<u32>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl ResolvedConfig {
    pub fn load(cli: &Cli) -> Result<Self, SimError> {
        let file: FileConfig = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    SimError::config(format!("cannot read {}: {e}", path.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| SimError::config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let protocol_name = cli
            .protocol
            .clone()
            .or(file.experiment.protocol)
            .unwrap_or_else(|| "pibfly".to_string());
        let adversary_name = cli
            .adversary
            .clone()
            .or(file.experiment.adversary)
            .unwrap_or_else(|| "passive".to_string());
        let resolved = ResolvedConfig {
            version: env!("CARGO_PKG_VERSION").to_string(),
            protocol_name,
            adversary_name,
            seed: cli.seed.or(file.experiment.seed).unwrap_or(1),
            trials: cli.trials.or(file.experiment.trials).unwrap_or(1),
            oracle_mode: cli.oracle_mode || file.experiment.oracle_mode.unwrap_or(false),
            params: Params {
                n_parties: file.params.n_parties.unwrap_or(16),
                lambda: file.params.lambda.unwrap_or(16),
                kappa: file.params.kappa.unwrap_or(0.25),
                chi: file.params.chi.unwrap_or(4),
                d: file.params.d.unwrap_or(4),
                iterations: file.params.iterations.unwrap_or(4),
                alpha_hops: file.params.alpha_hops.unwrap_or(3),
            },
            target: file.adversary.target,
            alpha_schedule: file.adversary.alpha_schedule,
            recipients: file.input.recipients,
            equalize_i: file.equalize.i,
            equalize_j: file.equalize.j,
            out_dir: cli
                .out
                .clone()
                .or(file.experiment.out)
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        // Surface parameter problems as config errors before any run.
        resolved.protocol()?.validate()?;
        resolved.adversary_spec()?;
        Ok(resolved)
    }

    pub fn protocol(&self) -> Result<Protocol, SimError> {
        let p = &self.params;
        match self.protocol_name.as_str() {
            "pitree" => Ok(Protocol::Pitree(PitreeParams::new(
                p.n_parties,
                p.lambda,
                p.kappa,
                p.chi,
                p.d,
            )?)),
            "pibfly" => {
                let tree = PitreeParams::new(p.n_parties, p.lambda, p.kappa, p.chi, p.d)?;
                Ok(Protocol::Pibfly(PibflyParams::new(tree, p.iterations)?))
            }
            "strawman" => Ok(Protocol::Strawman {
                n_parties: p.n_parties,
                alpha_hops: p.alpha_hops,
            }),
            other => Err(SimError::config(format!(
                "unknown protocol '{other}' (expected pitree | pibfly | strawman)"
            ))),
        }
    }

    pub fn adversary_spec(&self) -> Result<AdversarySpec, SimError> {
        let target = || -> Result<PartyId, SimError> {
            parse_party(
                self.target
                    .ok_or_else(|| SimError::config("this adversary needs [adversary] target"))?,
                self.params.n_parties,
                "target",
            )
        };
        let spec = match self.adversary_name.as_str() {
            "passive" => AdversarySpec::Passive,
            "isolating" => AdversarySpec::Isolating { target: target()? },
            "uniform_isolating" => AdversarySpec::UniformIsolating,
            "sender_targeting" => AdversarySpec::SenderTargeting { target: target()? },
            "singleton_dropping" => AdversarySpec::SingletonDropping {
                alpha_schedule: self.alpha_schedule.clone().ok_or_else(|| {
                    SimError::config("singleton_dropping needs [adversary] alpha_schedule")
                })?,
            },
            "pair_dropping" => AdversarySpec::PairDropping,
            other => {
                return Err(SimError::config(format!(
                    "unknown adversary '{other}'"
                )))
            }
        };
        if spec.mode() == orsim_core::adversary::Mode::Oracle && !self.oracle_mode {
            return Err(SimError::config(
                "this strategy uses ground-truth information; pass --oracle-mode to allow it",
            ));
        }
        Ok(spec)
    }

    pub fn adversary(&self, seed: u64) -> Result<orsim_core::AdversaryConfig, SimError> {
        Ok(orsim_core::AdversaryConfig {
            spec: self.adversary_spec()?,
            kappa: self.params.kappa,
            seed,
        })
    }

    /// The run input: explicit recipients if configured, otherwise a
    /// seed-derived random permutation.
    pub fn input(&self, seed: u64) -> Result<SimpleInput, SimError> {
        match &self.recipients {
            Some(r) => SimpleInput::new(r.iter().map(|&v| PartyId(v)).collect()),
            None => Ok(random_input(
                self.params.n_parties,
                split_seed(seed, stream::INPUT),
            )),
        }
    }

    pub fn swap_pair(
        &self,
        i: Option<u32>,
        j: Option<u32>,
    ) -> Result<(PartyId, PartyId), SimError> {
        let i = parse_party(
            i.or(self.equalize_i).unwrap_or(1),
            self.params.n_parties,
            "i",
        )?;
        let j = parse_party(
            j.or(self.equalize_j).unwrap_or(2),
            self.params.n_parties,
            "j",
        )?;
        if i == j {
            return Err(SimError::config("i and j must differ"));
        }
        Ok((i, j))
    }
}
