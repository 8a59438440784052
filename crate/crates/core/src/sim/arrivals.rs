use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::ids::RelationId;
use crate::routing::MaterialFlowRelation;
use crate::time::{secs_to_millis, SimTime};

/// Stable per-relation seed derivation (FNV-1a over the id, mixed with the run seed).
pub(crate) fn stream_seed(seed: u64, salt: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

/// Release times of one relation: equal spacing of `60 / throughput` seconds,
/// each gap scaled by a lognormal factor with mean 1 and the relation's
/// coefficient of variation.
#[derive(Clone, Debug)]
pub struct ArrivalStream {
    relation_id: RelationId,
    next_secs: f64,
    spacing: f64,
    jitter: Option<LogNormal<f64>>,
    rng: ChaCha8Rng,
}

fn jitter_for(variability: f64) -> Option<LogNormal<f64>> {
    (variability > 0.0).then(|| {
        let sigma2 = (1.0 + variability * variability).ln();
        LogNormal::new(-sigma2 / 2.0, sigma2.sqrt()).expect("finite lognormal parameters")
    })
}

impl ArrivalStream {
    pub fn new(relation: &MaterialFlowRelation, seed: u64) -> Self {
        ArrivalStream {
            relation_id: relation.relation_id.clone(),
            next_secs: 0.0,
            spacing: 60.0 / relation.required_throughput,
            jitter: jitter_for(relation.variability),
            rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, relation.relation_id.as_str())),
        }
    }

    pub fn relation_id(&self) -> &RelationId {
        &self.relation_id
    }

    /// The next release; advances the stream.
    pub fn next_release(&mut self) -> SimTime {
        let t = SimTime::from_millis(secs_to_millis(self.next_secs));
        let factor = self.jitter.map_or(1.0, |d| d.sample(&mut self.rng));
        self.next_secs += self.spacing * factor;
        t
    }

    /// Upcoming release without advancing.
    pub fn peek(&self) -> SimTime {
        SimTime::from_millis(secs_to_millis(self.next_secs))
    }

    /// Switches to a new rate from `now` on: the pending gap is rescaled.
    pub fn set_throughput(&mut self, now: SimTime, throughput: f64) {
        let new_spacing = 60.0 / throughput;
        let remaining = (self.next_secs - now.as_secs()).max(0.0);
        self.next_secs = now.as_secs() + remaining * new_spacing / self.spacing;
        self.spacing = new_spacing;
    }
}

/// All releases of a relation strictly before the horizon.
pub fn generate_arrivals(relation: &MaterialFlowRelation, horizon: SimTime, seed: u64) -> Vec<SimTime> {
    let mut stream = ArrivalStream::new(relation, seed);
    let mut out = Vec::new();
    loop {
        let t = stream.next_release();
        if t >= horizon {
            return out;
        }
        out.push(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(tp: f64, v: f64) -> MaterialFlowRelation {
        MaterialFlowRelation { variability: v, ..MaterialFlowRelation::new("r", "a", "b", tp) }
    }

    #[test]
    fn zero_variability_is_equally_spaced() {
        let got = generate_arrivals(&rel(6.0, 0.0), SimTime::from_millis(60_000), 1);
        let want: Vec<SimTime> = (0..6).map(|k| SimTime::from_millis(k * 10_000)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn jittered_arrivals_repeat_for_a_seed() {
        let h = SimTime::from_millis(600_000);
        assert_eq!(generate_arrivals(&rel(6.0, 0.5), h, 42), generate_arrivals(&rel(6.0, 0.5), h, 42));
        assert_ne!(generate_arrivals(&rel(6.0, 0.5), h, 42), generate_arrivals(&rel(6.0, 0.5), h, 43));
    }

    #[test]
    fn mean_gap_matches_throughput() {
        let mut s = ArrivalStream::new(&rel(6.0, 0.5), 7);
        let first = s.next_release();
        let mut last = first;
        for _ in 0..10_000 {
            last = s.next_release();
        }
        let mean = (last - first) as f64 / 1000.0 / 10_000.0;
        assert!((mean - 10.0).abs() / 10.0 < 0.02, "mean gap {mean}");
    }

    #[test]
    fn rate_change_rescales_pending_gap() {
        let mut s = ArrivalStream::new(&rel(6.0, 0.0), 0);
        assert_eq!(s.next_release(), SimTime::ZERO);
        s.set_throughput(SimTime::from_millis(5_000), 12.0);
        assert_eq!(s.next_release(), SimTime::from_millis(7_500));
        assert_eq!(s.next_release(), SimTime::from_millis(12_500));
    }
}
