//! Comparison schemes and the message-splitting scheme family.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{mrc_coefficients, ChannelSet, MrcCoefficients};
use crate::config::SystemConfig;
use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::pairing::{random_pairing, sus_mg_pairing, PairingPolicy};
use crate::rates::{InterferenceMode, RateReport};
use crate::sca::{delta_search, sca_solve, PowerProblem, SocpOutcome};
use crate::streams::{make_decoding_order, DecodingOrder, OrderLabel, StreamLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeId {
    CrsmaSusmg,
    CrsmaRandom,
    CnomaSusmgFixedDelta,
    RsmaSusmg,
    NomaSusmg,
    #[serde(rename = "scheme-1")]
    Scheme1,
    #[serde(rename = "scheme-2")]
    Scheme2,
    #[serde(rename = "scheme-3")]
    Scheme3,
    #[serde(rename = "scheme-4")]
    Scheme4,
    #[serde(rename = "scheme-5")]
    Scheme5,
    #[serde(rename = "scheme-6")]
    Scheme6,
}

impl SchemeId {
    pub const ALL: [SchemeId; 11] = [
        Self::CrsmaSusmg,
        Self::CrsmaRandom,
        Self::CnomaSusmgFixedDelta,
        Self::RsmaSusmg,
        Self::NomaSusmg,
        Self::Scheme1,
        Self::Scheme2,
        Self::Scheme3,
        Self::Scheme4,
        Self::Scheme5,
        Self::Scheme6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CrsmaSusmg => "crsma-susmg",
            Self::CrsmaRandom => "crsma-random",
            Self::CnomaSusmgFixedDelta => "cnoma-susmg-fixed-delta",
            Self::RsmaSusmg => "rsma-susmg",
            Self::NomaSusmg => "noma-susmg",
            Self::Scheme1 => "scheme-1",
            Self::Scheme2 => "scheme-2",
            Self::Scheme3 => "scheme-3",
            Self::Scheme4 => "scheme-4",
            Self::Scheme5 => "scheme-5",
            Self::Scheme6 => "scheme-6",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }
}

/// How many sub-messages each user sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPlan {
    /// Every CCU and every CEU sends two.
    All,
    /// Like [`SplitPlan::All`] except the CEU of the first pair sends one.
    AllButOneCeu,
    /// CCUs send two, CEUs one.
    CcuOnly,
    None,
}

impl SplitPlan {
    /// `(ccu parts, ceu parts)` per pair.
    pub fn parts(self, pairs: usize) -> (Vec<u8>, Vec<u8>) {
        match self {
            Self::All => (vec![2; pairs], vec![2; pairs]),
            Self::AllButOneCeu => {
                let mut ceu = vec![2; pairs];
                if let Some(first) = ceu.first_mut() {
                    *first = 1;
                }
                (vec![2; pairs], ceu)
            }
            Self::CcuOnly => (vec![2; pairs], vec![1; pairs]),
            Self::None => (vec![1; pairs], vec![1; pairs]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaPolicy {
    Optimized,
    Fixed(f64),
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingChoice {
    SusMg,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPolicy {
    /// Use the order label handed to [`evaluate_scheme`].
    Labelled,
    /// Users by descending effective gain.
    DescendingGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub id: SchemeId,
    pub split: SplitPlan,
    pub cooperative: bool,
    pub delta: DeltaPolicy,
    pub pairing: PairingChoice,
    pub order: OrderPolicy,
}

impl SchemeSpec {
    pub fn of(id: SchemeId) -> Self {
        use SchemeId::*;
        let (split, cooperative, delta, pairing, order) = match id {
            CrsmaSusmg | Scheme3 => (
                SplitPlan::CcuOnly,
                true,
                DeltaPolicy::Optimized,
                PairingChoice::SusMg,
                OrderPolicy::Labelled,
            ),
            CrsmaRandom => (
                SplitPlan::CcuOnly,
                true,
                DeltaPolicy::Optimized,
                PairingChoice::Random,
                OrderPolicy::Labelled,
            ),
            CnomaSusmgFixedDelta => (
                SplitPlan::None,
                true,
                DeltaPolicy::Fixed(0.5),
                PairingChoice::SusMg,
                OrderPolicy::Labelled,
            ),
            RsmaSusmg | Scheme6 => (
                SplitPlan::AllButOneCeu,
                false,
                DeltaPolicy::NotApplicable,
                PairingChoice::SusMg,
                OrderPolicy::Labelled,
            ),
            NomaSusmg => (
                SplitPlan::None,
                false,
                DeltaPolicy::NotApplicable,
                PairingChoice::SusMg,
                OrderPolicy::DescendingGain,
            ),
            Scheme1 => (
                SplitPlan::AllButOneCeu,
                true,
                DeltaPolicy::Optimized,
                PairingChoice::SusMg,
                OrderPolicy::Labelled,
            ),
            Scheme2 => (
                SplitPlan::All,
                true,
                DeltaPolicy::Optimized,
                PairingChoice::SusMg,
                OrderPolicy::Labelled,
            ),
            Scheme4 => (
                SplitPlan::None,
                true,
                DeltaPolicy::Optimized,
                PairingChoice::SusMg,
                OrderPolicy::Labelled,
            ),
            Scheme5 => (
                SplitPlan::All,
                false,
                DeltaPolicy::NotApplicable,
                PairingChoice::SusMg,
                OrderPolicy::Labelled,
            ),
        };
        Self {
            id,
            split,
            cooperative,
            delta,
            pairing,
            order,
        }
    }

    pub fn layout(&self, pairing: &PairingPolicy) -> Result<StreamLayout> {
        let (ccu, ceu) = self.split.parts(pairing.len());
        StreamLayout::new(pairing, ccu, ceu, self.cooperative)
    }

    pub fn pair_users(&self, ch: &ChannelSet, config: &SystemConfig) -> Result<PairingPolicy> {
        match self.pairing {
            PairingChoice::SusMg => Ok(sus_mg_pairing(ch, config)),
            PairingChoice::Random => {
                // independent of the channel stream but fixed by the seed
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_9A1B);
                random_pairing(ch, config, &mut rng)
            }
        }
    }

    pub fn decoding_order(
        &self,
        layout: &StreamLayout,
        coeffs: &MrcCoefficients,
        label: OrderLabel,
    ) -> Result<DecodingOrder> {
        match self.order {
            OrderPolicy::Labelled => make_decoding_order(label, layout),
            OrderPolicy::DescendingGain => DecodingOrder::descending_gain(layout, coeffs),
        }
    }
}

/// Order and interference model used to evaluate a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub order: OrderLabel,
    /// Interference model of the reported rates; powers are always
    /// optimized with static inter-pair interference.
    pub mode: InterferenceMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            order: OrderLabel::Order3,
            mode: InterferenceMode::StaticIpi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeStatus {
    Feasible,
    Infeasible,
    SolverFailure,
}

impl fmt::Display for SchemeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Feasible => "feasible",
            Self::Infeasible => "infeasible",
            Self::SolverFailure => "solver-failure",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: SchemeId,
    pub status: SchemeStatus,
    pub pairing: Vec<(usize, usize)>,
    /// Slot split used; `None` for non-cooperative schemes.
    pub delta: Option<f64>,
    pub report: Option<RateReport>,
    pub solve: Option<SocpOutcome>,
}

impl SchemeOutcome {
    pub fn feasible(&self) -> bool {
        self.status == SchemeStatus::Feasible
    }

    pub fn sum_rate(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.sum_rate)
    }

    pub fn iterations(&self) -> usize {
        self.solve.as_ref().map_or(0, |s| s.iterations)
    }
}

/// Pair users, optimize powers (and the slot split where the scheme allows)
/// and report rates.
pub fn evaluate_scheme(
    spec: &SchemeSpec,
    ch: &ChannelSet,
    config: &SystemConfig,
    opts: EvalOptions,
) -> Result<SchemeOutcome> {
    let pairing = spec.pair_users(ch, config)?;
    evaluate_with_pairing(spec, &pairing, &mrc_coefficients(ch, config), config, opts)
}

pub fn evaluate_with_pairing(
    spec: &SchemeSpec,
    pairing: &PairingPolicy,
    coeffs: &MrcCoefficients,
    config: &SystemConfig,
    opts: EvalOptions,
) -> Result<SchemeOutcome> {
    let layout = spec.layout(pairing)?;
    let order = spec.decoding_order(&layout, coeffs, opts.order)?;
    let problem = PowerProblem::new(&layout, coeffs, &order, config)?;
    let solved = match spec.delta {
        DeltaPolicy::Optimized => match delta_search(&problem) {
            Ok(ds) => Some(ds.outcome),
            Err(Error::InstanceInfeasible) => None,
            Err(e) => return Err(e),
        },
        DeltaPolicy::Fixed(d) => Some(sca_solve(&problem, d)?),
        DeltaPolicy::NotApplicable => Some(sca_solve(&problem, 1.0)?),
    };
    let mut out = SchemeOutcome {
        scheme: spec.id,
        status: SchemeStatus::Infeasible,
        pairing: pairing.pairs.clone(),
        delta: None,
        report: None,
        solve: None,
    };
    let Some(solve) = solved else {
        return Ok(out);
    };
    out.status = match solve.status {
        SolveStatus::Optimal => SchemeStatus::Feasible,
        SolveStatus::Infeasible => SchemeStatus::Infeasible,
        SolveStatus::NumericalFailure => SchemeStatus::SolverFailure,
    };
    if out.feasible() {
        let report = crate::rates::rates_at_bs(
            &layout,
            &solve.powers,
            coeffs,
            &order,
            opts.mode,
            problem.qos,
        )?;
        if !report.feasible() {
            log::warn!("{}: solved powers miss a QoS target", spec.id);
            out.status = SchemeStatus::Infeasible;
        }
        out.delta = spec.cooperative.then_some(solve.delta);
        out.report = Some(report);
    }
    out.solve = Some(solve);
    Ok(out)
}
