//! Achievable rates for a pairing, power allocation and decoding order.
//!
//! Every rate is `weight * log2(1 + SINR)` where the SINR comes from a
//! [`SinrTerm`]. The same terms feed the convex surrogate in [`crate::sca`],
//! so the optimizer and the evaluator always agree on the interference sets.

use serde::{Deserialize, Serialize};

use crate::channel::MrcCoefficients;
use crate::error::Result;
use crate::streams::{DecodingOrder, PowerAllocation, Slot, StreamId, StreamKind, StreamLayout};

/// Slack used when comparing rates against QoS thresholds.
pub const QOS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceMode {
    /// Streams of other pairs always interfere at full power; inside a pair
    /// only streams decoded later interfere.
    StaticIpi,
    /// Any stream already decoded, in any pair, has been cancelled.
    SicGlobal,
}

impl std::str::FromStr for InterferenceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "static-ipi" => Ok(Self::StaticIpi),
            "sic-global" => Ok(Self::SicGlobal),
            other => Err(format!("unknown interference mode `{other}`")),
        }
    }
}

impl std::fmt::Display for InterferenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::StaticIpi => "static-ipi",
            Self::SicGlobal => "sic-global",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosThresholds {
    pub ccu: f64,
    pub ceu: f64,
}

impl QosThresholds {
    pub const NONE: Self = Self { ccu: 0.0, ceu: 0.0 };
}

/// `gain * P_signal / (sum_i coeff_i * P_i + noise)`
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTerm {
    pub signal: StreamId,
    pub gain: f64,
    pub interference: Vec<(StreamId, f64)>,
    pub noise: f64,
}

impl SinrTerm {
    pub fn interference_power(&self, pa: &PowerAllocation) -> f64 {
        self.interference
            .iter()
            .map(|&(s, c)| c * pa.get(s))
            .sum::<f64>()
            + self.noise
    }

    pub fn sinr(&self, pa: &PowerAllocation) -> f64 {
        let num = self.gain * pa.get(self.signal);
        if num <= 0.0 {
            return 0.0;
        }
        num / self.interference_power(pa)
    }
}

/// Term indices for one CEU message part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CeuPartTerms {
    /// Own transmission decoded at the BS.
    pub direct: usize,
    /// Relayed copy decoded at the BS (cooperative layouts only).
    pub relay: Option<usize>,
    /// Own transmission decoded at the paired CCU (cooperative layouts only).
    pub at_ccu: Option<usize>,
}

/// All SINR terms of a layout under one decoding order and interference mode.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub layout: StreamLayout,
    pub terms: Vec<SinrTerm>,
    /// Per pair, one term per CCU part.
    pub ccu_terms: Vec<Vec<usize>>,
    /// Per pair, one entry per CEU part.
    pub ceu_terms: Vec<Vec<CeuPartTerms>>,
}

impl LinkModel {
    pub fn build(
        layout: &StreamLayout,
        coeffs: &MrcCoefficients,
        order: &DecodingOrder,
        mode: InterferenceMode,
    ) -> Result<Self> {
        order.validate(layout)?;
        let streams = layout.streams();
        let pos = |s: StreamId| order.position(s).expect("validated order");

        let bs_term = |s: StreamId| -> SinrTerm {
            let me = layout.owner(s);
            let slot = layout.slot(s);
            let interference = streams
                .iter()
                .filter(|&&o| o != s && layout.slot(o) == slot)
                .filter(|&&o| {
                    let later = pos(o) > pos(s);
                    match (slot, mode) {
                        (Slot::Direct, _) | (_, InterferenceMode::StaticIpi) => {
                            o.pair != s.pair || later
                        }
                        (_, InterferenceMode::SicGlobal) => later,
                    }
                })
                .map(|&o| (o, coeffs.cross_gain[me][layout.owner(o)]))
                .collect();
            SinrTerm {
                signal: s,
                gain: coeffs.self_gain[me],
                interference,
                noise: coeffs.noise_gain[me],
            }
        };

        // CEU part decoded by its paired CCU during the DT phase
        let ccu_term = |s: StreamId| -> SinrTerm {
            let relay = layout.ccu(s.pair);
            let interference = streams
                .iter()
                .filter(|&&o| {
                    matches!(o.kind, StreamKind::CeuDirect(_))
                        && o != s
                        && (o.pair != s.pair || pos(o) > pos(s))
                })
                .map(|&o| (o, coeffs.link_gain[layout.owner(o)][relay]))
                .collect();
            SinrTerm {
                signal: s,
                gain: coeffs.link_gain[layout.ceu(s.pair)][relay],
                interference,
                noise: coeffs.sigma2,
            }
        };

        let mut terms = Vec::new();
        let mut push = |t: SinrTerm| {
            terms.push(t);
            terms.len() - 1
        };
        let mut ccu_terms = Vec::with_capacity(layout.len());
        let mut ceu_terms = Vec::with_capacity(layout.len());
        for l in 0..layout.len() {
            ccu_terms.push(
                (1..=layout.ccu_parts[l])
                    .map(|b| push(bs_term(StreamId::ccu(l, b))))
                    .collect(),
            );
            ceu_terms.push(
                (1..=layout.ceu_parts[l])
                    .map(|i| {
                        let d = StreamId::direct(l, i);
                        CeuPartTerms {
                            direct: push(bs_term(d)),
                            relay: layout
                                .cooperative
                                .then(|| push(bs_term(StreamId::relay(l, i)))),
                            at_ccu: layout.cooperative.then(|| push(ccu_term(d))),
                        }
                    })
                    .collect(),
            );
        }
        Ok(Self {
            layout: layout.clone(),
            terms,
            ccu_terms,
            ceu_terms,
        })
    }

    /// `(DT weight, CT weight)`; a non-cooperative frame is one full slot.
    pub fn slot_weights(&self, delta: f64) -> (f64, f64) {
        if self.layout.cooperative {
            (delta, 1.0 - delta)
        } else {
            (1.0, 1.0)
        }
    }

    pub fn evaluate(&self, pa: &PowerAllocation, qos: QosThresholds) -> RateReport {
        let (w_dt, w_ct) = self.slot_weights(pa.delta);
        let rate = |t: usize, w: f64| w * (1.0 + self.terms[t].sinr(pa)).log2();
        let l = self.layout.len();
        let mut report = RateReport {
            r_u: vec![0.0; l],
            r_v_tot: vec![0.0; l],
            r_v_relay_limit: vec![0.0; l],
            r_v: vec![0.0; l],
            sum_rate: 0.0,
            ccu_ok: vec![false; l],
            ceu_ok: vec![false; l],
            stream_rates: Vec::new(),
        };
        for p in 0..l {
            for &t in &self.ccu_terms[p] {
                let r = rate(t, w_ct);
                report.stream_rates.push((self.terms[t].signal, r));
                report.r_u[p] += r;
            }
            for part in &self.ceu_terms[p] {
                let direct = rate(part.direct, w_dt);
                report
                    .stream_rates
                    .push((self.terms[part.direct].signal, direct));
                let (tot, limit) = match (part.relay, part.at_ccu) {
                    (Some(rt), Some(ct)) => {
                        let relayed = rate(rt, w_ct);
                        report.stream_rates.push((self.terms[rt].signal, relayed));
                        (direct + relayed, rate(ct, w_dt))
                    }
                    _ => (direct, f64::INFINITY),
                };
                report.r_v_tot[p] += tot;
                report.r_v_relay_limit[p] += limit;
                report.r_v[p] += tot.min(limit);
            }
            report.ccu_ok[p] = report.r_u[p] >= qos.ccu - QOS_TOL;
            report.ceu_ok[p] = report.r_v[p] >= qos.ceu - QOS_TOL;
        }
        report.sum_rate = report.r_u.iter().sum::<f64>() + report.r_v.iter().sum::<f64>();
        report
    }
}

/// Per-pair rates in bps/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_u: Vec<f64>,
    /// DT plus CT rate of each CEU at the BS.
    pub r_v_tot: Vec<f64>,
    /// Rate at which the paired CCU can decode the CEU (infinite without relaying).
    pub r_v_relay_limit: Vec<f64>,
    /// Delivered CEU rate. For a CEU with a single message part this is
    /// `min(r_v_tot, r_v_relay_limit)`; split CEUs take the minimum per part.
    pub r_v: Vec<f64>,
    pub sum_rate: f64,
    pub ccu_ok: Vec<bool>,
    pub ceu_ok: Vec<bool>,
    pub stream_rates: Vec<(StreamId, f64)>,
}

impl RateReport {
    pub fn feasible(&self) -> bool {
        self.ccu_ok.iter().chain(&self.ceu_ok).all(|&ok| ok)
    }

    pub fn stream_rate(&self, s: StreamId) -> Option<f64> {
        self.stream_rates.iter().find(|x| x.0 == s).map(|x| x.1)
    }
}

/// Rate at which the CCU of `pair` decodes its CEU during the DT phase,
/// with every other CEU interfering at full power.
pub fn rate_ceu_at_ccu(
    layout: &StreamLayout,
    pair: usize,
    pa: &PowerAllocation,
    coeffs: &MrcCoefficients,
) -> f64 {
    let u = layout.ccu(pair);
    let v = layout.ceu(pair);
    let interference: f64 = (0..layout.len())
        .filter(|&q| q != pair)
        .map(|q| coeffs.link_gain[layout.ceu(q)][u] * pa.ceu_total(layout, q))
        .sum();
    let signal = coeffs.link_gain[v][u] * pa.ceu_total(layout, pair);
    pa.delta * (1.0 + signal / (interference + coeffs.sigma2)).log2()
}

/// Rates of every user seen at the BS, composed with the relay limit.
pub fn rates_at_bs(
    layout: &StreamLayout,
    pa: &PowerAllocation,
    coeffs: &MrcCoefficients,
    order: &DecodingOrder,
    mode: InterferenceMode,
    qos: QosThresholds,
) -> Result<RateReport> {
    Ok(LinkModel::build(layout, coeffs, order, mode)?.evaluate(pa, qos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channels, mrc_coefficients, ChannelMode};
    use crate::config::SystemConfig;
    use crate::pairing::{sus_mg_pairing, PairingMethod, PairingPolicy};
    use crate::streams::{make_decoding_order, OrderLabel};

    /// Single pair with unit self gain, unit noise, unit link gain.
    fn unit_pair() -> (StreamLayout, MrcCoefficients) {
        let p = PairingPolicy::new(vec![(0, 1)], PairingMethod::SusMg).unwrap();
        let coeffs = MrcCoefficients {
            self_gain: vec![1.0, 1.0],
            cross_gain: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            noise_gain: vec![1.0, 1.0],
            link_gain: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            sigma2: 1.0,
        };
        (StreamLayout::crsma(&p), coeffs)
    }

    fn drop6(seed: u64) -> (SystemConfig, StreamLayout, MrcCoefficients) {
        let cfg = SystemConfig {
            seed,
            sigma2: 1e-2,
            ..SystemConfig::default()
        };
        let ch = generate_channels(&cfg, ChannelMode::DisparityLadder).unwrap();
        let coeffs = mrc_coefficients(&ch, &cfg);
        let layout = StreamLayout::crsma(&sus_mg_pairing(&ch, &cfg));
        (cfg, layout, coeffs)
    }

    fn random_powers(layout: &StreamLayout, seed: u64, delta: f64) -> PowerAllocation {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pa = PowerAllocation::zeros(layout.len(), delta);
        for s in layout.streams() {
            pa.set(s, rng.random_range(0.001..0.1));
        }
        pa
    }

    #[test]
    fn ceu_at_ccu_unit_case() {
        let (layout, coeffs) = unit_pair();
        let pa = PowerAllocation::single_pair(0.0, 0.0, 0.0, 1.0, 0.5);
        assert!((rate_ceu_at_ccu(&layout, 0, &pa, &coeffs) - 0.5).abs() < 1e-15);
        let pa = PowerAllocation::single_pair(1.0, 1.0, 1.0, 0.0, 0.5);
        assert_eq!(rate_ceu_at_ccu(&layout, 0, &pa, &coeffs), 0.0);
    }

    #[test]
    fn ceu_at_ccu_matches_term_sum() {
        let (_, layout, coeffs) = drop6(3);
        let pa = random_powers(&layout, 1, 0.4);
        for pair in 0..3 {
            let u = layout.ccu(pair);
            let v = layout.ceu(pair);
            let mut interference = 0.0;
            for q in 0..3 {
                if q != pair {
                    let vq = layout.ceu(q);
                    interference += coeffs.link_gain[vq][u] * pa.ceu[q][0];
                }
            }
            let oracle = 0.4
                * (1.0 + coeffs.link_gain[v][u] * pa.ceu[pair][0] / (interference + coeffs.sigma2))
                    .log2();
            let got = rate_ceu_at_ccu(&layout, pair, &pa, &coeffs);
            assert!((got - oracle).abs() < 1e-12);
            // the LinkModel's DT term agrees
            let order = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
            let report = rates_at_bs(
                &layout,
                &pa,
                &coeffs,
                &order,
                InterferenceMode::StaticIpi,
                QosThresholds::NONE,
            )
            .unwrap();
            assert!((report.r_v_relay_limit[pair] - got).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pair_unit_sinrs() {
        let (layout, coeffs) = unit_pair();
        let order = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
        let pa = PowerAllocation::single_pair(1.0, 1.0, 1.0, 1.0, 0.5);
        let r = rates_at_bs(
            &layout,
            &pa,
            &coeffs,
            &order,
            InterferenceMode::StaticIpi,
            QosThresholds::NONE,
        )
        .unwrap();
        let u1 = r.stream_rate(StreamId::ccu(0, 1)).unwrap();
        let u2 = r.stream_rate(StreamId::ccu(0, 2)).unwrap();
        let rel = r.stream_rate(StreamId::relay(0, 1)).unwrap();
        assert!((u1 - 0.5 * (1.0 + 1.0 / 3.0f64).log2()).abs() < 1e-15);
        assert!((u2 - 0.5 * 1.5f64.log2()).abs() < 1e-15);
        assert!((rel - 0.5).abs() < 1e-15);
    }

    #[test]
    fn full_dt_slot_zeroes_ccu_rates() {
        let (_, layout, coeffs) = drop6(4);
        let pa = random_powers(&layout, 2, 1.0);
        let order = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
        let r = rates_at_bs(
            &layout,
            &pa,
            &coeffs,
            &order,
            InterferenceMode::StaticIpi,
            QosThresholds::NONE,
        )
        .unwrap();
        assert!(r.r_u.iter().all(|&x| x == 0.0));
        assert!(r
            .stream_rates
            .iter()
            .filter(|(s, _)| matches!(s.kind, StreamKind::Relay(_)))
            .all(|(_, x)| *x == 0.0));
    }

    /// Decode streams one at a time, subtracting each from a running ledger
    /// of received power as seen through every user's combiner.
    fn ledger_oracle(
        layout: &StreamLayout,
        pa: &PowerAllocation,
        coeffs: &MrcCoefficients,
        order: &DecodingOrder,
    ) -> Vec<(StreamId, f64)> {
        let users = coeffs.users();
        let ct: Vec<StreamId> = order
            .sequence
            .iter()
            .copied()
            .filter(|s| !matches!(s.kind, StreamKind::CeuDirect(_)))
            .collect();
        // ledger[k] = total CT power still on the air after combining with h_k
        let mut ledger = vec![0.0; users];
        for s in &ct {
            for k in 0..users {
                ledger[k] += coeffs.cross_gain[k][layout.owner(*s)] * pa.get(*s);
            }
        }
        let mut out = Vec::new();
        for s in &ct {
            let k = layout.owner(*s);
            let own = coeffs.self_gain[k] * pa.get(*s);
            let interference = ledger[k] - own;
            let sinr = own / (interference + coeffs.noise_gain[k]);
            out.push((*s, (1.0 - pa.delta) * (1.0 + sinr).log2()));
            for j in 0..users {
                ledger[j] -= coeffs.cross_gain[j][k] * pa.get(*s);
            }
        }
        out
    }

    #[test]
    fn sic_global_matches_sequential_ledger() {
        for seed in 0..5 {
            let (_, layout, coeffs) = drop6(seed);
            let pa = random_powers(&layout, seed + 10, 0.3);
            for label in [OrderLabel::Order1, OrderLabel::Order2, OrderLabel::Order3] {
                let order = make_decoding_order(label, &layout).unwrap();
                let r = rates_at_bs(
                    &layout,
                    &pa,
                    &coeffs,
                    &order,
                    InterferenceMode::SicGlobal,
                    QosThresholds::NONE,
                )
                .unwrap();
                for (s, oracle) in ledger_oracle(&layout, &pa, &coeffs, &order) {
                    let got = r.stream_rate(s).unwrap();
                    assert!(
                        (got - oracle).abs() < 1e-9,
                        "{label} {s}: {got} vs {oracle}"
                    );
                }
            }
        }
    }

    #[test]
    fn static_ipi_matches_explicit_formulas() {
        // direct transcription of the CT-phase rates for order 3
        let (_, layout, coeffs) = drop6(6);
        let pa = random_powers(&layout, 7, 0.35);
        let order = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
        let r = rates_at_bs(
            &layout,
            &pa,
            &coeffs,
            &order,
            InterferenceMode::StaticIpi,
            QosThresholds::NONE,
        )
        .unwrap();
        for p in 0..3 {
            let u = layout.ccu(p);
            let v = layout.ceu(p);
            let mut ipi_u = 0.0;
            let mut ipi_v = 0.0;
            for q in 0..3 {
                if q == p {
                    continue;
                }
                let uq = layout.ccu(q);
                ipi_u += coeffs.cross_gain[u][uq] * (pa.ccu[q][0] + pa.ccu[q][1] + pa.relay[q][0]);
                ipi_v += coeffs.cross_gain[v][layout.ceu(q)] * pa.ceu[q][0];
            }
            let s = coeffs.self_gain[u];
            let n = coeffs.noise_gain[u];
            let w = 1.0 - pa.delta;
            let r1 = w
                * (1.0 + s * pa.ccu[p][0] / (s * pa.ccu[p][1] + s * pa.relay[p][0] + ipi_u + n))
                    .log2();
            let r2 = w * (1.0 + s * pa.ccu[p][1] / (s * pa.relay[p][0] + ipi_u + n)).log2();
            let rv2 = w * (1.0 + s * pa.relay[p][0] / (ipi_u + n)).log2();
            let rv1 = pa.delta
                * (1.0 + coeffs.self_gain[v] * pa.ceu[p][0] / (ipi_v + coeffs.noise_gain[v]))
                    .log2();
            let tot = rv1 + rv2;
            let limit = rate_ceu_at_ccu(&layout, p, &pa, &coeffs);
            assert!((r.r_u[p] - (r1 + r2)).abs() < 1e-12);
            assert!((r.r_v_tot[p] - tot).abs() < 1e-12);
            assert!((r.r_v_relay_limit[p] - limit).abs() < 1e-12);
            assert_eq!(r.r_v[p], tot.min(limit));
        }
        let total: f64 = r.r_u.iter().sum::<f64>() + r.r_v.iter().sum::<f64>();
        assert!((r.sum_rate - total).abs() < 1e-12);
    }

    #[test]
    fn zero_power_zero_rate() {
        let (_, layout, coeffs) = drop6(1);
        let pa = PowerAllocation::zeros(3, 0.5);
        for mode in [InterferenceMode::StaticIpi, InterferenceMode::SicGlobal] {
            let order = make_decoding_order(OrderLabel::Order1, &layout).unwrap();
            let r = rates_at_bs(&layout, &pa, &coeffs, &order, mode, QosThresholds::NONE).unwrap();
            assert_eq!(r.sum_rate, 0.0);
        }
    }

    #[test]
    fn qos_flags() {
        let (layout, coeffs) = unit_pair();
        let order = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
        let pa = PowerAllocation::single_pair(1.0, 1.0, 1.0, 1.0, 0.5);
        let r = rates_at_bs(
            &layout,
            &pa,
            &coeffs,
            &order,
            InterferenceMode::StaticIpi,
            QosThresholds {
                ccu: 10.0,
                ceu: 0.1,
            },
        )
        .unwrap();
        assert!(!r.ccu_ok[0]);
        assert!(r.ceu_ok[0]);
        assert!(!r.feasible());
    }
}
