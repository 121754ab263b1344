use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Biological parameters of the recruitment model plus the total population.
///
/// On input, `b` and `b_hat` default to `mu` when omitted, which is the
/// condition under which the total population is conserved and the reduced
/// three-dimensional system applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ParamsFile")]
pub struct ModelParams {
    /// Risk perception due to prevalence (>= 0).
    pub a1: f64,
    /// Risk perception due to treatment (<= 0).
    pub a2: f64,
    /// Infectious rate.
    pub beta: f64,
    /// Treatment efficacy.
    pub eta: f64,
    /// Recovery rate of treated individuals.
    pub gamma: f64,
    /// Mortality rate.
    pub mu: f64,
    /// Treatment rate.
    pub tau: f64,
    /// Birth rate of the susceptible and non-core population.
    pub b: f64,
    /// Birth rate of the infected population.
    pub b_hat: f64,
    #[serde(rename = "T_total")]
    pub t_total: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    a1: f64,
    a2: f64,
    beta: f64,
    eta: f64,
    gamma: f64,
    mu: f64,
    tau: f64,
    b: Option<f64>,
    b_hat: Option<f64>,
    #[serde(rename = "T_total")]
    t_total: f64,
}

impl From<ParamsFile> for ModelParams {
    fn from(f: ParamsFile) -> Self {
        ModelParams {
            a1: f.a1,
            a2: f.a2,
            beta: f.beta,
            eta: f.eta,
            gamma: f.gamma,
            mu: f.mu,
            tau: f.tau,
            b: f.b.unwrap_or(f.mu),
            b_hat: f.b_hat.unwrap_or(f.mu),
            t_total: f.t_total,
        }
    }
}

impl ModelParams {
    /// Reference parameter set, with a limit cycle around E1:
    /// a1 = 8, a2 = -2.3, beta = 1, eta = 0.41, gamma = 0.46, mu = 0.44,
    /// tau = 0.002, T = 100.
    pub fn baseline() -> Self {
        ModelParams {
            a1: 8.0,
            a2: -2.3,
            beta: 1.0,
            eta: 0.41,
            gamma: 0.46,
            mu: 0.44,
            tau: 0.002,
            b: 0.44,
            b_hat: 0.44,
            t_total: 100.0,
        }
    }

    /// Infectivity of treated individuals, (1 - eta) * beta.
    #[inline]
    pub fn beta_hat(&self) -> f64 {
        (1.0 - self.eta) * self.beta
    }

    /// True when b = b_hat = mu, i.e. the total population is constant.
    pub fn conserves_population(&self) -> bool {
        self.b == self.mu && self.b_hat == self.mu
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::A1 => self.a1,
            ParamName::A2 => self.a2,
            ParamName::Beta => self.beta,
            ParamName::Eta => self.eta,
            ParamName::Gamma => self.gamma,
            ParamName::Mu => self.mu,
            ParamName::Tau => self.tau,
        }
    }

    /// Copy with one parameter replaced. Changing `mu` drags `b` and `b_hat`
    /// along when they were tied to it.
    pub fn with(&self, name: ParamName, value: f64) -> Self {
        let mut p = *self;
        match name {
            ParamName::A1 => p.a1 = value,
            ParamName::A2 => p.a2 = value,
            ParamName::Beta => p.beta = value,
            ParamName::Eta => p.eta = value,
            ParamName::Gamma => p.gamma = value,
            ParamName::Mu => {
                if self.conserves_population() {
                    p.b = value;
                    p.b_hat = value;
                }
                p.mu = value;
            }
            ParamName::Tau => p.tau = value,
        }
        p
    }

    /// Hard checks (finite values, positive population) fail with
    /// [`Error::InvalidParameter`]. Range violations of the biological box
    /// only produce warnings, since boundary values are needed for the
    /// unfolding analysis.
    pub fn validate(&self) -> Result<Vec<String>> {
        let fields = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("beta", self.beta),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("tau", self.tau),
            ("b", self.b),
            ("b_hat", self.b_hat),
            ("T_total", self.t_total),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        if self.t_total <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "T_total must be positive, got {}",
                self.t_total
            )));
        }

        let mut warnings = Vec::new();
        if self.a1 < 0.0 {
            warnings.push(format!("a1 = {} is negative", self.a1));
        }
        if self.a2 > 0.0 {
            warnings.push(format!("a2 = {} is positive", self.a2));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            warnings.push(format!("beta = {} outside (0, 1]", self.beta));
        }
        for (name, v) in fields[3..9].iter() {
            if !(0.0..=1.0).contains(v) {
                warnings.push(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if !self.conserves_population() {
            warnings.push("b = b_hat = mu does not hold; the reduced system assumes it".into());
        }
        if self.gamma + self.mu == 0.0 {
            warnings.push("gamma + mu = 0: on the boundary of the parameter box".into());
        }
        Ok(warnings)
    }
}

/// Parameters that can be swept or bisected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamName {
    A1,
    A2,
    Beta,
    Eta,
    Gamma,
    Mu,
    Tau,
}

impl ParamName {
    pub const ALL: [ParamName; 7] = [
        ParamName::A1,
        ParamName::A2,
        ParamName::Beta,
        ParamName::Eta,
        ParamName::Gamma,
        ParamName::Mu,
        ParamName::Tau,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::A1 => "a1",
            ParamName::A2 => "a2",
            ParamName::Beta => "beta",
            ParamName::Eta => "eta",
            ParamName::Gamma => "gamma",
            ParamName::Mu => "mu",
            ParamName::Tau => "tau",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown parameter name '{s}'")))
    }
}
