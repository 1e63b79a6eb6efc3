//! CCU selection and CCU/CEU pairing.
//!
//! CCUs are picked greedily by semi-orthogonal user selection (SUS); each
//! CEU is then matched to a CCU by CEU-proposing deferred acceptance with
//! the cross-link magnitude `|h_{v,u}|` as the utility on both sides.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingMethod {
    SusMg,
    Random,
}

/// One-to-one CCU/CEU assignment. `pairs` is sorted by CCU id; the position
/// of a pair in this list is its pair index everywhere else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingPolicy {
    pub pairs: Vec<(usize, usize)>,
    pub method: PairingMethod,
}

impl PairingPolicy {
    pub fn new(mut pairs: Vec<(usize, usize)>, method: PairingMethod) -> Result<Self> {
        pairs.sort_unstable();
        let policy = Self { pairs, method };
        policy.check(2 * policy.pairs.len())?;
        Ok(policy)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ccus(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.0)
    }

    pub fn ceus(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.1)
    }

    /// Verify this is a perfect matching over users `0..users`.
    pub fn check(&self, users: usize) -> Result<()> {
        if self.pairs.len() * 2 != users {
            return Err(Error::InvalidPairing(format!(
                "{} pairs cannot cover {users} users",
                self.pairs.len()
            )));
        }
        let mut seen = vec![false; users];
        for &(u, v) in &self.pairs {
            for id in [u, v] {
                if id >= users || std::mem::replace(&mut seen[id], true) {
                    return Err(Error::InvalidPairing(format!(
                        "user {id} missing from range or matched twice"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One SUS round: who was in the candidate pool, who won, and the residual
/// direction `g_j` of the winner.
#[derive(Debug, Clone)]
pub struct SusRound {
    pub pool: Vec<usize>,
    pub selected: usize,
    pub direction: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct SusSelection {
    /// CCUs in selection order.
    pub ccus: Vec<usize>,
    /// Remaining users, ascending id.
    pub ceus: Vec<usize>,
    pub rounds: Vec<SusRound>,
    /// CCUs added by the largest-norm fallback after the pool ran dry.
    pub fallback: Vec<usize>,
}

fn norm_sq(x: &[Complex64]) -> f64 {
    x.iter().map(Complex64::norm_sqr).sum()
}

/// `g^H h`
fn inner(g: &[Complex64], h: &[Complex64]) -> Complex64 {
    g.iter().zip(h).map(|(a, b)| a.conj() * b).sum()
}

/// `|h^H g| / (||h|| ||g||)`, zero when either vector vanishes.
pub fn projection_ratio(h: &[Complex64], g: &[Complex64]) -> f64 {
    let denom = (norm_sq(h) * norm_sq(g)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        inner(h, g).norm() / denom
    }
}

/// Greedy semi-orthogonal selection of `K/2` CCUs.
pub fn sus_select(ch: &ChannelSet, config: &SystemConfig) -> SusSelection {
    let users = ch.users();
    let target = users / 2;
    let n = ch.antennas();
    if target > n {
        log::warn!("selecting {target} CCUs with only {n} antennas; SUS will fall back to norms");
    }

    // zero-norm users have no direction and only enter through the fallback
    let mut pool: Vec<usize> = (0..users).filter(|&k| norm_sq(ch.bs(k)) > 0.0).collect();
    let mut directions: Vec<Vec<Complex64>> = Vec::new();
    let mut ccus = Vec::with_capacity(target);
    let mut rounds = Vec::new();

    let mut j = 1;
    while j <= n && !pool.is_empty() && ccus.len() < target {
        let mut best: Option<(usize, f64, Vec<Complex64>)> = None;
        for &u in &pool {
            let h = ch.bs(u);
            let mut g = h.to_vec();
            for d in &directions {
                let dn = norm_sq(d);
                if dn == 0.0 {
                    continue;
                }
                let c = inner(d, h) / dn;
                for (gi, di) in g.iter_mut().zip(d) {
                    *gi -= c * di;
                }
            }
            let gn = norm_sq(&g);
            if best.as_ref().map_or(true, |b| gn > b.1) {
                best = Some((u, gn, g));
            }
        }
        let (chosen, _, g) = best.expect("pool is non-empty");
        rounds.push(SusRound {
            pool: pool.clone(),
            selected: chosen,
            direction: g.clone(),
        });
        ccus.push(chosen);
        pool.retain(|&u| u != chosen && projection_ratio(ch.bs(u), &g) < config.theta);
        directions.push(g);
        j += 1;
    }

    let mut fallback = Vec::new();
    if ccus.len() < target {
        for k in ch.strength_ranking() {
            if ccus.len() == target {
                break;
            }
            if !ccus.contains(&k) {
                ccus.push(k);
                fallback.push(k);
            }
        }
    }

    let ceus = (0..users).filter(|k| !ccus.contains(k)).collect();
    SusSelection {
        ccus,
        ceus,
        rounds,
        fallback,
    }
}

/// Preference utilities and the CEU-side ranked lists.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceProfile {
    pub ccus: Vec<usize>,
    pub ceus: Vec<usize>,
    /// `utility[i][j]` for CCU `ccus[i]` and CEU `ceus[j]`.
    pub utility: Vec<Vec<f64>>,
    /// For each CEU (by position), CCU positions by descending utility.
    pub lists: Vec<Vec<usize>>,
}

impl PreferenceProfile {
    /// Build a profile straight from a utility matrix (rows CCU, columns CEU).
    pub fn from_utility(ccus: Vec<usize>, ceus: Vec<usize>, utility: Vec<Vec<f64>>) -> Self {
        assert_eq!(utility.len(), ccus.len());
        assert!(utility.iter().all(|r| r.len() == ceus.len()));
        let lists = (0..ceus.len())
            .map(|j| {
                let mut order: Vec<usize> = (0..ccus.len()).collect();
                order.sort_by(|&a, &b| {
                    utility[b][j]
                        .total_cmp(&utility[a][j])
                        .then(ccus[a].cmp(&ccus[b]))
                });
                order
            })
            .collect();
        Self {
            ccus,
            ceus,
            utility,
            lists,
        }
    }

    /// CCU ids ranked by CEU `ceus[j]`.
    pub fn ranked_ccus(&self, j: usize) -> Vec<usize> {
        self.lists[j].iter().map(|&i| self.ccus[i]).collect()
    }
}

pub fn build_preferences(ch: &ChannelSet, ccus: &[usize], ceus: &[usize]) -> PreferenceProfile {
    let utility = ccus
        .iter()
        .map(|&u| ceus.iter().map(|&v| ch.cross(v, u).norm()).collect())
        .collect();
    PreferenceProfile::from_utility(ccus.to_vec(), ceus.to_vec(), utility)
}

/// CEU-proposing deferred acceptance. Returns the CEU position held by each
/// CCU position and the number of proposals made.
pub(crate) fn deferred_acceptance(prefs: &PreferenceProfile) -> (Vec<usize>, usize) {
    let m = prefs.ccus.len();
    assert_eq!(m, prefs.ceus.len(), "matching sides differ in size");
    let mut held: Vec<Option<usize>> = vec![None; m];
    let mut next = vec![0usize; m];
    let mut free: Vec<usize> = (0..m).rev().collect();
    let mut proposals = 0;

    while let Some(v) = free.pop() {
        let u = prefs.lists[v][next[v]];
        next[v] += 1;
        proposals += 1;
        match held[u] {
            None => held[u] = Some(v),
            Some(current) if prefs.utility[u][v] > prefs.utility[u][current] => {
                held[u] = Some(v);
                free.push(current);
            }
            Some(_) => free.push(v),
        }
    }
    (
        held.into_iter()
            .map(|v| v.expect("complete lists"))
            .collect(),
        proposals,
    )
}

pub fn matching_game(prefs: &PreferenceProfile) -> PairingPolicy {
    let (held, _) = deferred_acceptance(prefs);
    let pairs = held
        .iter()
        .enumerate()
        .map(|(i, &j)| (prefs.ccus[i], prefs.ceus[j]))
        .collect();
    PairingPolicy::new(pairs, PairingMethod::SusMg).expect("deferred acceptance is perfect")
}

/// Pairs `(ccu, ceu)` from `pairs` that block it: both sides strictly prefer
/// each other to their assigned partners.
pub fn blocking_pairs(prefs: &PreferenceProfile, pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let pos_u = |id: usize| prefs.ccus.iter().position(|&u| u == id).unwrap();
    let pos_v = |id: usize| prefs.ceus.iter().position(|&v| v == id).unwrap();
    let mut partner_of_u = vec![0; prefs.ccus.len()];
    let mut partner_of_v = vec![0; prefs.ceus.len()];
    for &(u, v) in pairs {
        partner_of_u[pos_u(u)] = pos_v(v);
        partner_of_v[pos_v(v)] = pos_u(u);
    }
    let mut out = Vec::new();
    for i in 0..prefs.ccus.len() {
        for j in 0..prefs.ceus.len() {
            if partner_of_u[i] == j {
                continue;
            }
            let w = prefs.utility[i][j];
            let u_prefers = w > prefs.utility[i][partner_of_u[i]];
            let v_prefers = w > prefs.utility[partner_of_v[j]][j];
            if u_prefers && v_prefers {
                out.push((prefs.ccus[i], prefs.ceus[j]));
            }
        }
    }
    out
}

/// SUS selection followed by the matching game.
pub fn sus_mg_pairing(ch: &ChannelSet, config: &SystemConfig) -> PairingPolicy {
    let sel = sus_select(ch, config);
    let prefs = build_preferences(ch, &sel.ccus, &sel.ceus);
    matching_game(&prefs)
}

/// Uniformly random half/half split and uniformly random matching.
pub fn random_pairing<R: Rng + ?Sized>(
    ch: &ChannelSet,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<PairingPolicy> {
    config.validate()?;
    let mut ids: Vec<usize> = (0..ch.users()).collect();
    ids.shuffle(rng);
    let half = ids.len() / 2;
    let pairs = (0..half).map(|i| (ids[i], ids[half + i])).collect();
    PairingPolicy::new(pairs, PairingMethod::Random)
}
