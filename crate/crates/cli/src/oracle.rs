use std::time::Duration;

use clap::{Args, ValueEnum};
use lcfg_core::preferences::ExternalOracle;
use lcfg_core::protocol::{ExternalPlugin, HttpEndpoint, PromptProtocol, PromptTemplate, StdioEndpoint, DEFAULT_TIMEOUT_MS};
use lcfg_core::{Error, OracleSpec, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleChoice {
    Perfect,
    Logit,
    Noise,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolChoice {
    Standard,
    Cot,
    Coalt,
}

#[derive(Clone, Debug, Args)]
pub struct OracleArgs {
    /// Preference oracle for every agent.
    #[arg(long, value_enum, default_value_t = OracleChoice::Perfect)]
    pub oracle: OracleChoice,
    /// Rationality threshold for logit and noise oracles.
    #[arg(long, default_value_t = 0.15)]
    pub epsilon: f64,
    /// Consistency on gaps below the critical gap (noise oracle).
    #[arg(long, default_value_t = 0.86)]
    pub p_critical: f64,
    /// Consistency on larger gaps (noise oracle).
    #[arg(long, default_value_t = 0.98)]
    pub p_easy: f64,
    /// Gap below which a decision is critical; defaults to 2 * epsilon.
    #[arg(long)]
    pub critical_gap: Option<f64>,
    /// Answers per decision, combined by majority vote.
    #[arg(long, default_value_t = 1)]
    pub majority_k: u32,
    /// Plugin command line, split on whitespace; speaks JSON lines on stdio.
    #[arg(long)]
    pub oracle_cmd: Option<String>,
    /// Plugin HTTP endpoint receiving one JSON query per POST.
    #[arg(long, conflicts_with = "oracle_cmd")]
    pub oracle_url: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub oracle_timeout_ms: u64,
    /// Prompt template rendered for external oracles.
    #[arg(long, value_enum, default_value_t = ProtocolChoice::Coalt)]
    pub protocol: ProtocolChoice,
}

impl OracleArgs {
    pub fn spec(&self, seed: u64) -> Result<OracleSpec> {
        let spec = match self.oracle {
            OracleChoice::Perfect => OracleSpec::perfect(),
            OracleChoice::Logit => OracleSpec::logit(self.epsilon),
            OracleChoice::Noise => OracleSpec::consistency_noise(self.p_critical, self.p_easy, self.epsilon),
            OracleChoice::External => OracleSpec::external(),
        };
        let mut spec = spec.with_seed(seed).with_majority(self.majority_k);
        if let Some(g) = self.critical_gap {
            spec = spec.with_critical_gap(g);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn has_endpoint(&self) -> bool {
        self.oracle_cmd.is_some() || self.oracle_url.is_some()
    }

    /// The plugin behind `--oracle-cmd` or `--oracle-url`, if either was given.
    pub fn plugin(&self) -> Result<Option<Box<dyn ExternalOracle>>> {
        let template = PromptTemplate::builtin(match self.protocol {
            ProtocolChoice::Standard => PromptProtocol::Standard,
            ProtocolChoice::Cot => PromptProtocol::Cot,
            ProtocolChoice::Coalt => PromptProtocol::Coalt,
        });
        let timeout = Duration::from_millis(self.oracle_timeout_ms);
        if let Some(cmd) = &self.oracle_cmd {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::InvalidParameter("--oracle-cmd is empty".into()));
            }
            let ep = StdioEndpoint::spawn(&argv)?;
            return Ok(Some(Box::new(ExternalPlugin::new(ep).with_template(template).with_timeout(timeout))));
        }
        if let Some(url) = &self.oracle_url {
            let ep = HttpEndpoint::new(url.clone());
            return Ok(Some(Box::new(ExternalPlugin::new(ep).with_template(template).with_timeout(timeout))));
        }
        if self.oracle == OracleChoice::External {
            return Err(Error::ExternalUnavailable);
        }
        Ok(None)
    }
}
