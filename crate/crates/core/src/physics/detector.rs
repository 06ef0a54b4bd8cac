use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::DetectorModel;

/// Origin of a detector event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventSource {
    Signal,
    Dark,
    Afterpulse,
}

/// An event that survived the dead time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accepted {
    /// Arrival time before jitter, in picoseconds.
    pub arrival_ps: u64,
    /// Grid bin the jittered detection was assigned to.
    pub bin: i64,
    pub source: EventSource,
}

impl Accepted {
    pub fn time_ps(&self, bin_ps: u64) -> i64 {
        self.bin * bin_ps as i64
    }
}

/// Free-running detector fed with a time-ordered stream of candidate clicks.
///
/// Dead time is non-paralyzable: a candidate arriving less than the dead
/// time after the last *accepted* event is dropped and does not extend the
/// blind interval. Dark counts are a Poisson process generated lazily;
/// afterpulses are queued at exponential delays and face the same dead time.
#[derive(Debug)]
pub struct DetectorStream<R> {
    dead_ps: u64,
    afterpulse_prob: f64,
    afterpulse_delay: Option<Exp<f64>>,
    jitter: Option<Normal<f64>>,
    dark_gap: Option<Exp<f64>>,
    bin_ps: f64,
    rng: R,
    last_accept: Option<u64>,
    next_dark: u64,
    afterpulses: BinaryHeap<Reverse<u64>>,
}

impl<R: Rng> DetectorStream<R> {
    pub fn new(model: &DetectorModel<f64>, bin_ps: f64, start_ps: u64, mut rng: R) -> Self {
        let dark_gap = (model.dcr_cps > 0.0).then(|| Exp::new(model.dcr_cps * 1e-12).expect("positive rate"));
        let next_dark = match &dark_gap {
            Some(d) => start_ps.saturating_add(d.sample(&mut rng) as u64),
            None => u64::MAX,
        };
        Self {
            dead_ps: (model.dead_time_s * 1e12).round() as u64,
            afterpulse_prob: model.afterpulse_prob,
            afterpulse_delay: (model.afterpulse_prob > 0.0)
                .then(|| Exp::new(1.0 / (model.afterpulse_delay_s * 1e12)).expect("positive delay")),
            jitter: (model.jitter_sigma_ps > 0.0).then(|| Normal::new(0.0, model.jitter_sigma_ps).expect("finite sigma")),
            dark_gap,
            bin_ps,
            rng,
            last_accept: None,
            next_dark,
            afterpulses: BinaryHeap::new(),
        }
    }

    pub fn dead_time_ps(&self) -> u64 {
        self.dead_ps
    }

    /// Time of the most recent accepted event.
    pub fn last_accept_ps(&self) -> Option<u64> {
        self.last_accept
    }

    fn offer(&mut self, t: u64, source: EventSource, out: &mut Vec<Accepted>) {
        if let Some(last) = self.last_accept {
            if t < last.saturating_add(self.dead_ps) {
                return;
            }
        }
        self.last_accept = Some(t);
        if let Some(delay) = &self.afterpulse_delay {
            if self.rng.random::<f64>() < self.afterpulse_prob {
                let d = delay.sample(&mut self.rng).max(1.0);
                self.afterpulses.push(Reverse(t.saturating_add(d as u64)));
            }
        }
        let smeared = match &self.jitter {
            Some(n) => t as f64 + n.sample(&mut self.rng),
            None => t as f64,
        };
        let bin = (smeared / self.bin_ps + 0.5).floor() as i64;
        out.push(Accepted { arrival_ps: t, bin, source });
    }

    /// Processes internal events (dark counts, afterpulses) strictly before `t_ps`.
    pub fn advance_to(&mut self, t_ps: u64, out: &mut Vec<Accepted>) {
        loop {
            let ap = self.afterpulses.peek().map(|r| r.0).unwrap_or(u64::MAX);
            let next = ap.min(self.next_dark);
            if next >= t_ps {
                break;
            }
            if ap <= self.next_dark {
                self.afterpulses.pop();
                self.offer(ap, EventSource::Afterpulse, out);
            } else {
                let t = self.next_dark;
                let gap = self.dark_gap.as_ref().map(|d| d.sample(&mut self.rng)).unwrap_or(f64::INFINITY);
                self.next_dark = if gap.is_finite() { t.saturating_add(gap.max(1.0) as u64) } else { u64::MAX };
                self.offer(t, EventSource::Dark, out);
            }
        }
    }

    /// Feeds one candidate click; candidates must arrive in time order.
    pub fn push(&mut self, t_ps: u64, out: &mut Vec<Accepted>) {
        self.advance_to(t_ps, out);
        self.offer(t_ps, EventSource::Signal, out);
    }

    /// Flushes internal events up to (not including) `end_ps`.
    pub fn finish(&mut self, end_ps: u64, out: &mut Vec<Accepted>) {
        self.advance_to(end_ps, out);
    }
}

/// Runs a sorted batch of candidate click times through a detector observed
/// over `[0, window_end_ps)`.
pub fn apply_detector<R: Rng>(
    events_ps: &[u64],
    det: &DetectorModel<f64>,
    bin_ps: f64,
    window_end_ps: u64,
    rng: R,
) -> Vec<Accepted> {
    debug_assert!(events_ps.windows(2).all(|w| w[0] <= w[1]), "events must be time ordered");
    let mut stream = DetectorStream::new(det, bin_ps, 0, rng);
    let mut out = Vec::with_capacity(events_ps.len());
    for &t in events_ps.iter().take_while(|&&t| t < window_end_ps) {
        stream.push(t, &mut out);
    }
    stream.finish(window_end_ps, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Domain};

    fn quiet(dead_time_s: f64) -> DetectorModel<f64> {
        DetectorModel { dead_time_s, ..DetectorModel::ideal() }
    }

    #[test]
    fn dead_time_suppresses_close_click() {
        // two clicks 1 us apart, 27 us dead time
        let out = apply_detector(&[0, 1_000_000], &quiet(27e-6), 100.0, 10_000_000, stream_rng(1, Domain::Aux, 0));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].arrival_ps, 0);
    }

    #[test]
    fn identity_configuration() {
        let events: Vec<u64> = (0..500).map(|i| i * 400 + (i % 2) * 200).collect();
        let out = apply_detector(&events, &quiet(0.0), 100.0, u64::MAX, stream_rng(2, Domain::Aux, 0));
        assert_eq!(out.iter().map(|a| a.arrival_ps).collect::<Vec<_>>(), events);
        for a in &out {
            assert_eq!(a.bin * 100, a.arrival_ps as i64);
            assert_eq!(a.source, EventSource::Signal);
        }
    }

    #[test]
    fn dead_time_filter_after_identity() {
        let events: Vec<u64> = (0..100).map(|i| i * 300).collect();
        let out = apply_detector(&events, &quiet(1e-9), 100.0, u64::MAX, stream_rng(3, Domain::Aux, 0));
        // 1 ns = 1000 ps: every fourth 300 ps candidate survives
        let expected: Vec<u64> = events.iter().copied().filter(|t| t % 1200 == 0).collect();
        assert_eq!(out.iter().map(|a| a.arrival_ps).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn dark_counts_follow_rate() {
        let det = DetectorModel { dcr_cps: 1e6, ..DetectorModel::ideal() };
        // 10 ms window at 1 Mcps: 10^4 expected
        let out = apply_detector(&[], &det, 100.0, 10_000_000_000, stream_rng(4, Domain::Aux, 0));
        let n = out.len() as f64;
        assert!((n - 1e4).abs() < 5.0 * 100.0, "{n}");
        assert!(out.iter().all(|a| a.source == EventSource::Dark));
    }
}
