//! Network drops: BS channel vectors, user-to-user links and the MRC
//! coefficients derived from them.
//!
//! User ids are 0-based indices. Under the disparity ladder they are ordered
//! by descending path-loss factor, so id 0 is the strongest user on average.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{db_to_linear, SystemConfig};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// Path loss decreasing from 1 in uniform steps, unit-variance Rayleigh fading.
    DisparityLadder,
    /// Exponentially distributed power gains with the configured dB means.
    ExponentialMean,
}

impl std::str::FromStr for ChannelMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "disparity-ladder" => Ok(Self::DisparityLadder),
            "exponential-mean" => Ok(Self::ExponentialMean),
            other => Err(format!("unknown channel mode `{other}`")),
        }
    }
}

impl std::fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::DisparityLadder => "disparity-ladder",
            Self::ExponentialMean => "exponential-mean",
        })
    }
}

/// All channels of one network drop. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    antennas: usize,
    bs: Vec<Vec<Complex64>>,
    /// Symmetric user-to-user links; the diagonal is zero and unused.
    cross: Vec<Vec<Complex64>>,
    tau: Vec<f64>,
    /// Mean per-antenna power gain of a user with `tau == 1`.
    scale: f64,
}

impl ChannelSet {
    /// Assemble a channel set from explicit vectors. `cross` must be a full
    /// `K x K` matrix; only the upper triangle is read and mirrored.
    pub fn from_parts(bs: Vec<Vec<Complex64>>, cross: Vec<Vec<Complex64>>, tau: Vec<f64>) -> Self {
        let antennas = bs.first().map_or(0, Vec::len);
        let k = bs.len();
        assert!(
            bs.iter().all(|h| h.len() == antennas),
            "ragged channel vectors"
        );
        assert_eq!(tau.len(), k);
        assert_eq!(cross.len(), k);
        let mut sym = vec![vec![Complex64::new(0.0, 0.0); k]; k];
        for i in 0..k {
            assert_eq!(cross[i].len(), k);
            for j in (i + 1)..k {
                sym[i][j] = cross[i][j];
                sym[j][i] = cross[i][j];
            }
        }
        Self {
            antennas,
            bs,
            cross: sym,
            tau,
            scale: 1.0,
        }
    }

    pub fn users(&self) -> usize {
        self.bs.len()
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// BS channel vector of user `k`.
    pub fn bs(&self, k: usize) -> &[Complex64] {
        &self.bs[k]
    }

    /// Link between users `i` and `j` (reciprocal).
    pub fn cross(&self, i: usize, j: usize) -> Complex64 {
        self.cross[i][j]
    }

    pub fn norm_sq(&self, k: usize) -> f64 {
        self.bs[k].iter().map(Complex64::norm_sqr).sum()
    }

    /// User ids sorted by descending `||h_k||`, ties by ascending id.
    pub fn strength_ranking(&self) -> Vec<usize> {
        let norms: Vec<f64> = (0..self.users()).map(|k| self.norm_sq(k)).collect();
        let mut ids: Vec<usize> = (0..self.users()).collect();
        ids.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        ids
    }

    /// One line per user: `id tau ||h||^2`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for k in 0..self.users() {
            let _ = writeln!(out, "{k} {:.6} {:.6}", self.tau[k], self.norm_sq(k));
        }
        out
    }
}

/// Path-loss ladder `1, 1 - s, 1 - 2s, ...` with `s = 1/K` rounded to two
/// decimals (K = 6 gives 1, 0.83, ..., 0.15). Falls back to the exact `1/K`
/// when rounding would push the last user to a non-positive factor.
pub fn disparity_ladder(users: usize) -> Vec<f64> {
    let exact = 1.0 / users as f64;
    let rounded = (exact * 100.0).round() / 100.0;
    let step = if 1.0 - (users as f64 - 1.0) * rounded > 1e-9 {
        rounded
    } else {
        exact
    };
    (0..users).map(|k| 1.0 - k as f64 * step).collect()
}

/// Draw a reproducible network drop from `config.seed`.
pub fn generate_channels(config: &SystemConfig, mode: ChannelMode) -> Result<ChannelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    generate_channels_with(config, mode, || {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Same as [`generate_channels`] with an explicit small-scale fading source.
/// Fading values are consumed user by user (all BS antennas), then the
/// user-to-user links in row-major upper-triangle order.
pub fn generate_channels_with(
    config: &SystemConfig,
    mode: ChannelMode,
    mut fading: impl FnMut() -> Complex64,
) -> Result<ChannelSet> {
    config.validate()?;
    let k = config.users;
    let n = config.antennas;

    let (tau, scale, cross_gain): (Vec<f64>, f64, Box<dyn Fn(usize, usize, &[f64]) -> f64>) =
        match mode {
            ChannelMode::DisparityLadder => (
                disparity_ladder(k),
                1.0,
                Box::new(|i, j, tau: &[f64]| (tau[i] * tau[j]).sqrt()),
            ),
            ChannelMode::ExponentialMean => {
                let lu = db_to_linear(config.lambda_u_db);
                let lv = db_to_linear(config.lambda_v_db);
                let lvu = db_to_linear(config.lambda_vu_db);
                let top = lu.max(lv);
                let tau = (0..k)
                    .map(|i| if i < k / 2 { lu / top } else { lv / top })
                    .collect();
                (tau, top, Box::new(move |_, _, _: &[f64]| lvu))
            }
        };

    let bs: Vec<Vec<Complex64>> = (0..k)
        .map(|user| {
            let amp = (scale * tau[user]).sqrt();
            (0..n).map(|_| fading() * amp).collect()
        })
        .collect();

    let mut cross = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let h = fading() * cross_gain(i, j, &tau).sqrt();
            cross[i][j] = h;
            cross[j][i] = h;
        }
    }

    Ok(ChannelSet {
        antennas: n,
        bs,
        cross,
        tau,
        scale,
    })
}

/// Post-MRC gains consumed by every rate expression.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcCoefficients {
    /// `||h_k||^4 / N^2`
    pub self_gain: Vec<f64>,
    /// `|h_k^H h_k'|^2 / N^2`, symmetric, diagonal equal to `self_gain`.
    pub cross_gain: Vec<Vec<f64>>,
    /// Expected post-combining noise `||h_k||^2 sigma^2 / N^2`.
    pub noise_gain: Vec<f64>,
    /// `|h_{i,j}|^2` for the user-to-user links (zero diagonal).
    pub link_gain: Vec<Vec<f64>>,
    pub sigma2: f64,
}

impl MrcCoefficients {
    pub fn users(&self) -> usize {
        self.self_gain.len()
    }
}

pub fn mrc_coefficients(ch: &ChannelSet, config: &SystemConfig) -> MrcCoefficients {
    let k = ch.users();
    let n2 = (ch.antennas() * ch.antennas()) as f64;
    let mut cross_gain = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let inner: Complex64 = ch
                .bs(i)
                .iter()
                .zip(ch.bs(j))
                .map(|(a, b)| a.conj() * b)
                .sum();
            let g = inner.norm_sqr() / n2;
            cross_gain[i][j] = g;
            cross_gain[j][i] = g;
        }
    }
    let self_gain = (0..k)
        .map(|i| {
            let g = ch.norm_sq(i) / ch.antennas() as f64;
            g * g
        })
        .collect::<Vec<_>>();
    // keep the diagonal bit-identical to self_gain
    for (i, row) in cross_gain.iter_mut().enumerate() {
        row[i] = self_gain[i];
    }
    let noise_gain = (0..k).map(|i| ch.norm_sq(i) * config.sigma2 / n2).collect();
    let link_gain = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        ch.cross(i, j).norm_sqr()
                    }
                })
                .collect()
        })
        .collect();
    MrcCoefficients {
        self_gain,
        cross_gain,
        noise_gain,
        link_gain,
        sigma2: config.sigma2,
    }
}
