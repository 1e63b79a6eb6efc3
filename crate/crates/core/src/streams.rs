//! Stream bookkeeping: which streams exist for a pairing and message-split
//! plan, how much power each carries, and the order the BS decodes them in.

use serde::{Deserialize, Serialize};

use crate::channel::MrcCoefficients;
use crate::error::{Error, Result};
use crate::pairing::PairingPolicy;

/// Kind of a stream within a pair. Parts are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StreamKind {
    /// CCU's own sub-message `s_{u,b}`.
    CcuSub(u8),
    /// CEU message part re-encoded and forwarded by the CCU in the CT phase.
    Relay(u8),
    /// CEU message part as sent by the CEU itself.
    CeuDirect(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamId {
    pub pair: usize,
    pub kind: StreamKind,
}

impl StreamId {
    pub fn ccu(pair: usize, part: u8) -> Self {
        Self {
            pair,
            kind: StreamKind::CcuSub(part),
        }
    }

    pub fn relay(pair: usize, part: u8) -> Self {
        Self {
            pair,
            kind: StreamKind::Relay(part),
        }
    }

    pub fn direct(pair: usize, part: u8) -> Self {
        Self {
            pair,
            kind: StreamKind::CeuDirect(part),
        }
    }

    pub fn part(&self) -> u8 {
        match self.kind {
            StreamKind::CcuSub(p) | StreamKind::Relay(p) | StreamKind::CeuDirect(p) => p,
        }
    }
}

impl std::fmt::Display for StreamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            StreamKind::CcuSub(b) => write!(f, "u{b}@{}", self.pair),
            StreamKind::Relay(i) => write!(f, "rel{i}@{}", self.pair),
            StreamKind::CeuDirect(i) => write!(f, "v{i}@{}", self.pair),
        }
    }
}

/// Time slot a stream occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// DT phase, fraction `delta` of the frame.
    Direct,
    /// CT phase, fraction `1 - delta`.
    Cooperative,
    /// Non-cooperative transmission over the whole frame.
    Full,
}

/// Streams induced by a pairing and a per-user message-split plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamLayout {
    pub pairs: Vec<(usize, usize)>,
    /// Sub-message count (1 or 2) of each pair's CCU.
    pub ccu_parts: Vec<u8>,
    /// Sub-message count (1 or 2) of each pair's CEU.
    pub ceu_parts: Vec<u8>,
    pub cooperative: bool,
}

impl StreamLayout {
    pub fn new(
        pairing: &PairingPolicy,
        ccu_parts: Vec<u8>,
        ceu_parts: Vec<u8>,
        cooperative: bool,
    ) -> Result<Self> {
        let l = pairing.len();
        if ccu_parts.len() != l || ceu_parts.len() != l {
            return Err(Error::InvalidPairing(
                "split plan length differs from pair count".into(),
            ));
        }
        if ccu_parts
            .iter()
            .chain(&ceu_parts)
            .any(|p| !(1..=2).contains(p))
        {
            return Err(Error::InvalidPairing("split counts must be 1 or 2".into()));
        }
        Ok(Self {
            pairs: pairing.pairs.clone(),
            ccu_parts,
            ceu_parts,
            cooperative,
        })
    }

    /// Two-part CCUs, single-part CEUs, cooperative relaying.
    pub fn crsma(pairing: &PairingPolicy) -> Self {
        let l = pairing.len();
        Self::new(pairing, vec![2; l], vec![1; l], true).expect("valid plan")
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ccu(&self, pair: usize) -> usize {
        self.pairs[pair].0
    }

    pub fn ceu(&self, pair: usize) -> usize {
        self.pairs[pair].1
    }

    /// User whose antenna radiates the stream.
    pub fn owner(&self, s: StreamId) -> usize {
        match s.kind {
            StreamKind::CcuSub(_) | StreamKind::Relay(_) => self.ccu(s.pair),
            StreamKind::CeuDirect(_) => self.ceu(s.pair),
        }
    }

    pub fn slot(&self, s: StreamId) -> Slot {
        match (self.cooperative, s.kind) {
            (false, _) => Slot::Full,
            (true, StreamKind::CeuDirect(_)) => Slot::Direct,
            (true, _) => Slot::Cooperative,
        }
    }

    pub fn contains(&self, s: StreamId) -> bool {
        if s.pair >= self.len() || s.part() == 0 {
            return false;
        }
        match s.kind {
            StreamKind::CcuSub(b) => b <= self.ccu_parts[s.pair],
            StreamKind::Relay(i) => self.cooperative && i <= self.ceu_parts[s.pair],
            StreamKind::CeuDirect(i) => i <= self.ceu_parts[s.pair],
        }
    }

    /// Every power-carrying stream, pair by pair.
    pub fn streams(&self) -> Vec<StreamId> {
        let mut out = Vec::new();
        for l in 0..self.len() {
            for b in 1..=self.ccu_parts[l] {
                out.push(StreamId::ccu(l, b));
            }
            for i in 1..=self.ceu_parts[l] {
                if self.cooperative {
                    out.push(StreamId::relay(l, i));
                }
                out.push(StreamId::direct(l, i));
            }
        }
        out
    }

    /// Streams funded from the CCU budget of `pair`.
    pub fn ccu_streams(&self, pair: usize) -> Vec<StreamId> {
        let mut out: Vec<StreamId> = (1..=self.ccu_parts[pair])
            .map(|b| StreamId::ccu(pair, b))
            .collect();
        if self.cooperative {
            out.extend((1..=self.ceu_parts[pair]).map(|i| StreamId::relay(pair, i)));
        }
        out
    }

    /// Streams funded from the CEU budget of `pair`.
    pub fn ceu_streams(&self, pair: usize) -> Vec<StreamId> {
        (1..=self.ceu_parts[pair])
            .map(|i| StreamId::direct(pair, i))
            .collect()
    }
}

/// Transmit powers in watts plus the DT slot fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// `P_{u,b}` per pair, index `b - 1`.
    pub ccu: Vec<[f64; 2]>,
    /// Relay powers per pair and CEU part.
    pub relay: Vec<[f64; 2]>,
    /// CEU powers per pair and part.
    pub ceu: Vec<[f64; 2]>,
    pub delta: f64,
}

impl PowerAllocation {
    pub fn zeros(pairs: usize, delta: f64) -> Self {
        Self {
            ccu: vec![[0.0; 2]; pairs],
            relay: vec![[0.0; 2]; pairs],
            ceu: vec![[0.0; 2]; pairs],
            delta,
        }
    }

    /// Single-pair C-RSMA powers `(P_{u,1}, P_{u,2}, P_{u,relay}, P_v)`.
    pub fn single_pair(p_u1: f64, p_u2: f64, p_relay: f64, p_v: f64, delta: f64) -> Self {
        Self {
            ccu: vec![[p_u1, p_u2]],
            relay: vec![[p_relay, 0.0]],
            ceu: vec![[p_v, 0.0]],
            delta,
        }
    }

    pub fn pairs(&self) -> usize {
        self.ccu.len()
    }

    pub fn get(&self, s: StreamId) -> f64 {
        let i = s.part() as usize - 1;
        match s.kind {
            StreamKind::CcuSub(_) => self.ccu[s.pair][i],
            StreamKind::Relay(_) => self.relay[s.pair][i],
            StreamKind::CeuDirect(_) => self.ceu[s.pair][i],
        }
    }

    pub fn set(&mut self, s: StreamId, watts: f64) {
        let i = s.part() as usize - 1;
        match s.kind {
            StreamKind::CcuSub(_) => self.ccu[s.pair][i] = watts,
            StreamKind::Relay(_) => self.relay[s.pair][i] = watts,
            StreamKind::CeuDirect(_) => self.ceu[s.pair][i] = watts,
        }
    }

    pub fn ccu_total(&self, layout: &StreamLayout, pair: usize) -> f64 {
        layout.ccu_streams(pair).iter().map(|&s| self.get(s)).sum()
    }

    pub fn ceu_total(&self, layout: &StreamLayout, pair: usize) -> f64 {
        layout.ceu_streams(pair).iter().map(|&s| self.get(s)).sum()
    }

    /// Check non-negativity, per-user budgets (with `tol` slack) and the slot range.
    pub fn within_budget(
        &self,
        layout: &StreamLayout,
        p_u_max: f64,
        p_v_max: f64,
        tol: f64,
    ) -> bool {
        let nonneg = layout.streams().iter().all(|&s| self.get(s) >= -tol);
        let budgets = (0..layout.len()).all(|l| {
            self.ccu_total(layout, l) <= p_u_max + tol && self.ceu_total(layout, l) <= p_v_max + tol
        });
        nonneg && budgets && (0.0..=1.0).contains(&self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderLabel {
    /// CEU messages pair by pair, then all first CCU parts, then all second parts.
    Order1,
    /// Pair by pair: CCU parts, then the CEU message.
    Order2,
    /// All first CCU parts, all second parts, then CEU messages pair by pair.
    Order3,
    Custom,
}

impl std::str::FromStr for OrderLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "order-1" | "1" => Ok(Self::Order1),
            "order-2" | "2" => Ok(Self::Order2),
            "order-3" | "3" => Ok(Self::Order3),
            other => Err(format!("unknown decoding order `{other}`")),
        }
    }
}

impl std::fmt::Display for OrderLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Order1 => "order-1",
            Self::Order2 => "order-2",
            Self::Order3 => "order-3",
            Self::Custom => "custom",
        })
    }
}

/// Total order over the streams the BS decodes. A CEU part's own transmission
/// sits right after its relayed copy, since the two carry the same message
/// and are combined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodingOrder {
    pub sequence: Vec<StreamId>,
    pub label: OrderLabel,
}

/// CEU message group of one pair: relayed copy then own copy, per part.
fn ceu_group(layout: &StreamLayout, pair: usize) -> Vec<StreamId> {
    let mut out = Vec::new();
    for i in 1..=layout.ceu_parts[pair] {
        if layout.cooperative {
            out.push(StreamId::relay(pair, i));
        }
        out.push(StreamId::direct(pair, i));
    }
    out
}

fn ccu_layer(layout: &StreamLayout, part: u8) -> impl Iterator<Item = StreamId> + '_ {
    (0..layout.len())
        .filter(move |&l| layout.ccu_parts[l] >= part)
        .map(move |l| StreamId::ccu(l, part))
}

pub fn make_decoding_order(label: OrderLabel, layout: &StreamLayout) -> Result<DecodingOrder> {
    let l = layout.len();
    let sequence: Vec<StreamId> = match label {
        OrderLabel::Order1 => (0..l)
            .flat_map(|p| ceu_group(layout, p))
            .chain(ccu_layer(layout, 1))
            .chain(ccu_layer(layout, 2))
            .collect(),
        OrderLabel::Order2 => (0..l)
            .flat_map(|p| {
                (1..=layout.ccu_parts[p])
                    .map(move |b| StreamId::ccu(p, b))
                    .chain(ceu_group(layout, p))
            })
            .collect(),
        OrderLabel::Order3 => ccu_layer(layout, 1)
            .chain(ccu_layer(layout, 2))
            .chain((0..l).flat_map(|p| ceu_group(layout, p)))
            .collect(),
        OrderLabel::Custom => {
            return Err(Error::InvalidOrder(
                "custom orders are built explicitly, not from a label".into(),
            ))
        }
    };
    let order = DecodingOrder { sequence, label };
    order.validate(layout)?;
    Ok(order)
}

impl DecodingOrder {
    pub fn custom(sequence: Vec<StreamId>, layout: &StreamLayout) -> Result<Self> {
        let order = Self {
            sequence,
            label: OrderLabel::Custom,
        };
        order.validate(layout)?;
        Ok(order)
    }

    /// Uplink NOMA convention: users by descending effective gain, each
    /// user's parts in ascending order.
    pub fn descending_gain(layout: &StreamLayout, coeffs: &MrcCoefficients) -> Result<Self> {
        let mut groups: Vec<(usize, Vec<StreamId>)> = Vec::new();
        for p in 0..layout.len() {
            let own: Vec<StreamId> = (1..=layout.ccu_parts[p])
                .map(|b| StreamId::ccu(p, b))
                .collect();
            groups.push((layout.ccu(p), own));
            groups.push((layout.ceu(p), ceu_group(layout, p)));
        }
        groups.sort_by(|a, b| {
            coeffs.self_gain[b.0]
                .total_cmp(&coeffs.self_gain[a.0])
                .then(a.0.cmp(&b.0))
        });
        Self::custom(groups.into_iter().flat_map(|g| g.1).collect(), layout)
    }

    pub fn position(&self, s: StreamId) -> Option<usize> {
        self.sequence.iter().position(|&x| x == s)
    }

    /// Every stream of the layout exactly once; each CEU part directly after
    /// its relayed copy in cooperative layouts.
    pub fn validate(&self, layout: &StreamLayout) -> Result<()> {
        let expected = layout.streams();
        if self.sequence.len() != expected.len() {
            return Err(Error::InvalidOrder(format!(
                "expected {} streams, got {}",
                expected.len(),
                self.sequence.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.sequence {
            if !layout.contains(*s) {
                return Err(Error::InvalidOrder(format!("stream {s} not in layout")));
            }
            if !seen.insert(*s) {
                return Err(Error::InvalidOrder(format!("stream {s} listed twice")));
            }
        }
        if layout.cooperative {
            for (i, s) in self.sequence.iter().enumerate() {
                if let StreamKind::CeuDirect(part) = s.kind {
                    let prev = i.checked_sub(1).map(|j| self.sequence[j]);
                    if prev != Some(StreamId::relay(s.pair, part)) {
                        return Err(Error::InvalidOrder(format!(
                            "{s} must directly follow its relayed copy"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::PairingMethod;

    fn pairing(l: usize) -> PairingPolicy {
        PairingPolicy::new((0..l).map(|i| (i, l + i)).collect(), PairingMethod::SusMg).unwrap()
    }

    fn ct_only(order: &DecodingOrder) -> Vec<StreamId> {
        order
            .sequence
            .iter()
            .copied()
            .filter(|s| !matches!(s.kind, StreamKind::CeuDirect(_)))
            .collect()
    }

    #[test]
    fn single_pair_orders() {
        let layout = StreamLayout::crsma(&pairing(1));
        let o2 = make_decoding_order(OrderLabel::Order2, &layout).unwrap();
        let o3 = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
        let o1 = make_decoding_order(OrderLabel::Order1, &layout).unwrap();
        let expect = vec![
            StreamId::ccu(0, 1),
            StreamId::ccu(0, 2),
            StreamId::relay(0, 1),
        ];
        assert_eq!(ct_only(&o2), expect);
        assert_eq!(ct_only(&o3), expect);
        let mut a = ct_only(&o1);
        a.sort();
        let mut b = expect.clone();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn three_pair_order3() {
        let layout = StreamLayout::crsma(&pairing(3));
        let o = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
        let expect: Vec<StreamId> = (0..3)
            .map(|l| StreamId::ccu(l, 1))
            .chain((0..3).map(|l| StreamId::ccu(l, 2)))
            .chain((0..3).map(|l| StreamId::relay(l, 1)))
            .collect();
        assert_eq!(ct_only(&o), expect);
    }

    #[test]
    fn two_pair_order2() {
        let layout = StreamLayout::crsma(&pairing(2));
        let o = make_decoding_order(OrderLabel::Order2, &layout).unwrap();
        let expect = vec![
            StreamId::ccu(0, 1),
            StreamId::ccu(0, 2),
            StreamId::relay(0, 1),
            StreamId::ccu(1, 1),
            StreamId::ccu(1, 2),
            StreamId::relay(1, 1),
        ];
        assert_eq!(ct_only(&o), expect);
    }

    #[test]
    fn order1_puts_ceu_messages_first() {
        let layout = StreamLayout::crsma(&pairing(3));
        let o = make_decoding_order(OrderLabel::Order1, &layout).unwrap();
        assert_eq!(o.sequence[0], StreamId::relay(0, 1));
        assert_eq!(o.sequence[1], StreamId::direct(0, 1));
        assert_eq!(o.sequence[6], StreamId::ccu(0, 1));
        assert_eq!(*o.sequence.last().unwrap(), StreamId::ccu(2, 2));
    }

    #[test]
    fn direct_stream_must_follow_relay() {
        let layout = StreamLayout::crsma(&pairing(1));
        let bad = vec![
            StreamId::direct(0, 1),
            StreamId::relay(0, 1),
            StreamId::ccu(0, 1),
            StreamId::ccu(0, 2),
        ];
        assert!(DecodingOrder::custom(bad, &layout).is_err());
        let missing = vec![
            StreamId::ccu(0, 1),
            StreamId::relay(0, 1),
            StreamId::direct(0, 1),
        ];
        assert!(DecodingOrder::custom(missing, &layout).is_err());
    }

    #[test]
    fn split_ceu_parts_stay_adjacent() {
        let p = pairing(2);
        let layout = StreamLayout::new(&p, vec![2, 2], vec![2, 1], true).unwrap();
        for label in [OrderLabel::Order1, OrderLabel::Order2, OrderLabel::Order3] {
            let o = make_decoding_order(label, &layout).unwrap();
            let r1 = o.position(StreamId::relay(0, 1)).unwrap();
            let r2 = o.position(StreamId::relay(0, 2)).unwrap();
            assert_eq!(r2, r1 + 2, "{label}");
        }
    }

    #[test]
    fn non_cooperative_layout_has_no_relays() {
        let layout = StreamLayout::new(&pairing(2), vec![2, 2], vec![2, 1], false).unwrap();
        assert!(!layout
            .streams()
            .iter()
            .any(|s| matches!(s.kind, StreamKind::Relay(_))));
        let o = make_decoding_order(OrderLabel::Order3, &layout).unwrap();
        assert_eq!(o.sequence.len(), 7);
    }

    #[test]
    fn budget_check() {
        let layout = StreamLayout::crsma(&pairing(1));
        let pa = PowerAllocation::single_pair(0.1, 0.05, 0.05, 0.03, 0.5);
        assert!(pa.within_budget(&layout, 0.2, 0.03, 1e-12));
        assert!(!pa.within_budget(&layout, 0.19, 0.03, 1e-12));
    }
}
