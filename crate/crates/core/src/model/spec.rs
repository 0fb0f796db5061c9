use serde::{Deserialize, Serialize};

use super::emission::{Emission, EmissionSpec};
use super::stationary::stationary_distribution;
use super::types::{ParamSpace, ProbVector, TransitionMatrix};
use crate::error::{Error, Result};

/// How `Q_theta` depends on `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransitionSpec {
    /// Parameter-free matrix.
    Fixed { matrix: Vec<Vec<f64>> },
    /// One logit parameter `u`; the chain leaves its state with probability
    /// `a = 1 / (1 + e^-u)`, spread evenly over the other states.
    SymmetricSwitch,
}

impl TransitionSpec {
    pub fn param_count(&self) -> usize {
        match self {
            TransitionSpec::Fixed { .. } => 0,
            TransitionSpec::SymmetricSwitch => 1,
        }
    }

    fn build(&self, states: usize, params: &[f64]) -> Result<TransitionMatrix> {
        match self {
            TransitionSpec::Fixed { matrix } => TransitionMatrix::from_rows_unchecked(matrix.clone()),
            TransitionSpec::SymmetricSwitch => {
                if states == 1 {
                    return Ok(TransitionMatrix::identity(1));
                }
                let a = 1.0 / (1.0 + (-params[0]).exp());
                let off = a / (states - 1) as f64;
                let rows =
                    (0..states).map(|i| (0..states).map(|j| if i == j { 1.0 - a } else { off }).collect()).collect();
                TransitionMatrix::from_rows_unchecked(rows)
            }
        }
    }
}

/// Law of `X_1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialLaw {
    /// The stationary distribution of `Q_theta`.
    #[default]
    Stationary,
    Fixed {
        probs: Vec<f64>,
    },
}

/// Parametric family `theta -> (r_theta, Q_theta, g_theta)` over `S` states.
///
/// `theta` is laid out as the emission parameters followed by the
/// transition parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct HmmSpec {
    states: usize,
    emission: EmissionSpec,
    transition: TransitionSpec,
    initial: InitialLaw,
    space: ParamSpace,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    states: usize,
    dim: usize,
    emission: EmissionSpec,
    transition: TransitionSpec,
    #[serde(default)]
    initial: InitialLaw,
    space: ParamSpace,
}

impl TryFrom<RawSpec> for HmmSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        let spec = HmmSpec::new(raw.states, raw.emission, raw.transition, raw.initial, raw.space)?;
        if spec.dim() != raw.dim {
            return Err(Error::Dimension { expected: spec.dim(), got: raw.dim });
        }
        Ok(spec)
    }
}

impl From<HmmSpec> for RawSpec {
    fn from(s: HmmSpec) -> RawSpec {
        RawSpec {
            states: s.states,
            dim: s.dim(),
            emission: s.emission,
            transition: s.transition,
            initial: s.initial,
            space: s.space,
        }
    }
}

impl HmmSpec {
    /// Checks shapes and that a fixed transition matrix is row-stochastic.
    pub fn new(
        states: usize,
        emission: EmissionSpec,
        transition: TransitionSpec,
        initial: InitialLaw,
        space: ParamSpace,
    ) -> Result<Self> {
        if let TransitionSpec::Fixed { matrix } = &transition {
            TransitionMatrix::new(matrix.clone())?;
        }
        Self::new_unchecked(states, emission, transition, initial, space)
    }

    /// Like [`HmmSpec::new`] but accepts a fixed matrix whose rows do not sum
    /// to one, so that [`validate_spec`](super::validate_spec) can report it.
    pub fn new_unchecked(
        states: usize,
        emission: EmissionSpec,
        transition: TransitionSpec,
        initial: InitialLaw,
        space: ParamSpace,
    ) -> Result<Self> {
        if states == 0 {
            return Err(Error::invalid("state count must be at least 1"));
        }
        emission.check()?;
        if let TransitionSpec::Fixed { matrix } = &transition {
            let m = TransitionMatrix::from_rows_unchecked(matrix.clone())?;
            if m.states() != states {
                return Err(Error::Dimension { expected: states, got: m.states() });
            }
        }
        if let InitialLaw::Fixed { probs } = &initial {
            if probs.len() != states {
                return Err(Error::Dimension { expected: states, got: probs.len() });
            }
            ProbVector::new(probs.clone())?;
        }
        let dim = emission.param_count(states) + transition.param_count();
        if space.dim() != dim {
            return Err(Error::Dimension { expected: dim, got: space.dim() });
        }
        Ok(Self { states, emission, transition, initial, space })
    }

    /// Gaussian means with known `sigma` and a fixed chain (`d = S`).
    pub fn gaussian_means(sigma: f64, transition: TransitionMatrix, space: ParamSpace) -> Result<Self> {
        Self::new(
            transition.states(),
            EmissionSpec::GaussianMean { sigma },
            TransitionSpec::Fixed { matrix: transition.rows() },
            InitialLaw::Stationary,
            space,
        )
    }

    /// Two-state Gaussian means plus the switching logit (`d = 3`).
    pub fn gaussian_switching(sigma: f64, space: ParamSpace) -> Result<Self> {
        Self::new(
            2,
            EmissionSpec::GaussianMean { sigma },
            TransitionSpec::SymmetricSwitch,
            InitialLaw::Stationary,
            space,
        )
    }

    /// Categorical emissions over `symbols` symbols with a fixed chain.
    pub fn finite_alphabet(symbols: usize, transition: TransitionMatrix, space: ParamSpace) -> Result<Self> {
        Self::new(
            transition.states(),
            EmissionSpec::FiniteAlphabet { symbols },
            TransitionSpec::Fixed { matrix: transition.rows() },
            InitialLaw::Stationary,
            space,
        )
    }

    /// Poisson rates with a fixed chain.
    pub fn poisson_rates(transition: TransitionMatrix, space: ParamSpace) -> Result<Self> {
        Self::new(
            transition.states(),
            EmissionSpec::PoissonRate,
            TransitionSpec::Fixed { matrix: transition.rows() },
            InitialLaw::Stationary,
            space,
        )
    }

    /// Single state: i.i.d. `N(theta, sigma^2)` observations.
    pub fn iid_gaussian(sigma: f64, space: ParamSpace) -> Result<Self> {
        Self::new(
            1,
            EmissionSpec::GaussianMean { sigma },
            TransitionSpec::Fixed { matrix: vec![vec![1.0]] },
            InitialLaw::Stationary,
            space,
        )
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn dim(&self) -> usize {
        self.emission.param_count(self.states) + self.transition.param_count()
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn emission_spec(&self) -> &EmissionSpec {
        &self.emission
    }

    pub fn transition_spec(&self) -> &TransitionSpec {
        &self.transition
    }

    pub fn initial_law(&self) -> &InitialLaw {
        &self.initial
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self.initial, InitialLaw::Stationary)
    }

    /// Same family on a different box.
    pub fn with_space(&self, space: ParamSpace) -> Result<Self> {
        Self::new_unchecked(self.states, self.emission.clone(), self.transition.clone(), self.initial.clone(), space)
    }

    /// The transition matrix at `theta` (rows not checked).
    pub fn transition(&self, theta: &[f64]) -> Result<TransitionMatrix> {
        self.check_dim(theta)?;
        let split = self.emission.param_count(self.states);
        self.transition.build(self.states, &theta[split..])
    }

    pub fn emission(&self, theta: &[f64]) -> Result<Emission> {
        self.check_dim(theta)?;
        let split = self.emission.param_count(self.states);
        self.emission.resolve(self.states, &theta[..split])
    }

    /// Resolves the model at `theta`. Membership in the box is not checked.
    pub fn resolve(&self, theta: &[f64]) -> Result<HmmParams> {
        let transition = self.transition(theta)?;
        let emission = self.emission(theta)?;
        let initial = match &self.initial {
            InitialLaw::Stationary => stationary_distribution(&transition)?,
            InitialLaw::Fixed { probs } => ProbVector::new(probs.clone())?,
        };
        Ok(HmmParams { initial, transition, emission })
    }

    /// Resolves after checking `theta` lies in the box.
    pub fn resolve_in_space(&self, theta: &[f64]) -> Result<HmmParams> {
        self.space.check(theta)?;
        self.resolve(theta)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: theta.len() });
        }
        Ok(())
    }
}

/// A family resolved at one parameter value.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmParams {
    pub initial: ProbVector,
    pub transition: TransitionMatrix,
    pub emission: Emission,
}

impl HmmParams {
    pub fn states(&self) -> usize {
        self.transition.states()
    }
}
