//! Sub-window partitioning and exact per-window marginal likelihoods.
//!
//! Summing the complete-data density over parent labelings is a sum over
//! compositions of the event list into contiguous episodes, and the density
//! factorizes over episodes. A forward pass over episode blocks gives the
//! marginal likelihood in O(n²); a matching backward pass gives block
//! posteriors and every expected sufficient statistic the M-step needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    complete_log_density, log_poisson, log_survival_tail, parent_log_density, EventSequence,
    LabelAssignment, Mark, ModelParams,
};

/// Largest window the brute-force enumeration accepts.
pub const MAX_ENUMERATION_EVENTS: usize = 20;

#[derive(Clone, Debug)]
pub struct WindowPartition {
    pub sub_window_length: f64,
    pub windows: Vec<EventSequence>,
}

impl WindowPartition {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.windows.iter().map(EventSequence::len).sum()
    }
}

/// Split `[start, T]` into consecutive windows of length `s`; a shorter
/// remainder window is kept. Windows are half-open except the last, which
/// also owns an event sitting exactly at `T`.
pub fn partition(events: &EventSequence, s: f64) -> Result<WindowPartition> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sub_window_length",
            reason: format!("must be positive, got {s}"),
        });
    }
    let start = events.window_start();
    let end = events.window_end();
    let ratio = (end - start) / s;
    let rounded = ratio.round();
    let count = if (ratio - rounded).abs() < 1e-9 * ratio.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    };
    let windows = (0..count)
        .map(|m| {
            let lo = start + m as f64 * s;
            let last = m + 1 == count;
            let hi = if last { end } else { start + (m + 1) as f64 * s };
            events.restrict(lo, hi, last)
        })
        .collect();
    Ok(WindowPartition {
        sub_window_length: s,
        windows,
    })
}

/// Running log-sum-exp.
#[derive(Clone, Copy, Debug)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    const EMPTY: LogSum = LogSum {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    #[inline]
    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    #[inline]
    fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Log-sum-exp of a slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let mut acc = LogSum::EMPTY;
    values.iter().for_each(|v| acc.add(*v));
    acc.value()
}

/// Deterministic statistics of one episode block `[i..=j]`.
#[derive(Clone, Copy, Debug, Default)]
struct BlockShape {
    segments: [usize; 2],
    events: [usize; 2],
}

impl BlockShape {
    fn switches(&self) -> usize {
        self.segments[0] + self.segments[1] - 1
    }
}

/// Per-event terms shared by every block touching an event.
struct WindowTerms<'a> {
    events: &'a EventSequence,
    params: &'a ModelParams,
    parent: Vec<f64>,
    offspring: Vec<f64>,
    tail: f64,
}

impl<'a> WindowTerms<'a> {
    fn new(events: &'a EventSequence, params: &'a ModelParams) -> Self {
        let n = events.len();
        let marks = events.marks();
        let parent = (0..n)
            .map(|l| parent_log_density(events, l, &params.hazard) + params.log_first_mark(marks[l]))
            .collect();
        let offspring = (0..n)
            .map(|l| {
                if l == 0 {
                    f64::NEG_INFINITY
                } else {
                    params.offspring(marks[l]).log_density(events.gap(l))
                }
            })
            .collect();
        WindowTerms {
            events,
            params,
            parent,
            offspring,
            tail: log_survival_tail(events, &params.hazard),
        }
    }

    /// Call `visit(j, log φ(i, j), shape)` for every block starting at `i`.
    #[inline]
    fn scan(&self, i: usize, mut visit: impl FnMut(usize, f64, &BlockShape)) {
        let marks = self.events.marks();
        let gamma = self.params.gamma;
        let mut shape = BlockShape::default();
        let mut current = marks[i];
        let mut run = 1usize;
        let mut closed = 0.0;
        let mut body = self.parent[i];
        shape.segments[current.index()] = 1;
        shape.events[current.index()] = 1;
        #[allow(clippy::needless_range_loop)] // j also indexes the offspring terms
        for j in i..self.events.len() {
            if j > i {
                let m = marks[j];
                body += self.offspring[j];
                shape.events[m.index()] += 1;
                if m == current {
                    run += 1;
                } else {
                    closed += log_poisson(run - 1, self.params.mu(current));
                    current = m;
                    run = 1;
                    shape.segments[m.index()] += 1;
                }
            }
            let phi = body
                + closed
                + log_poisson(run - 1, self.params.mu(current))
                + log_poisson(shape.switches(), gamma);
            visit(j, phi, &shape);
        }
    }

    /// `forward[k]` = log-sum over compositions of the first `k` events.
    fn forward(&self) -> Vec<f64> {
        let n = self.events.len();
        let mut acc = vec![LogSum::EMPTY; n + 1];
        acc[0].add(0.0);
        let mut forward = vec![f64::NEG_INFINITY; n + 1];
        forward[0] = 0.0;
        for i in 0..n {
            let a = acc[i].value();
            forward[i] = a;
            if a == f64::NEG_INFINITY {
                continue;
            }
            self.scan(i, |j, phi, _| acc[j + 1].add(a + phi));
        }
        forward[n] = acc[n].value();
        forward
    }

    /// `backward[k]` = log-sum over compositions of events `k..n`.
    fn backward(&self) -> Vec<f64> {
        let n = self.events.len();
        let mut backward = vec![f64::NEG_INFINITY; n + 1];
        backward[n] = 0.0;
        for i in (0..n).rev() {
            let mut acc = LogSum::EMPTY;
            self.scan(i, |j, phi, _| acc.add(phi + backward[j + 1]));
            backward[i] = acc.value();
        }
        backward
    }
}

/// Marginal log-likelihood of one window via the episode-block recursion.
pub fn dp_loglik(window: &EventSequence, params: &ModelParams) -> f64 {
    let terms = WindowTerms::new(window, params);
    if window.is_empty() {
        return terms.tail;
    }
    terms.forward()[window.len()] + terms.tail
}

/// Marginal log-likelihood by summing the complete-data density over all
/// `2^(n−1)` labelings with the first event a parent.
pub fn enumerate_loglik(window: &EventSequence, params: &ModelParams) -> Result<f64> {
    let n = window.len();
    if n > MAX_ENUMERATION_EVENTS {
        return Err(Error::TooManyEvents {
            n,
            max: MAX_ENUMERATION_EVENTS,
        });
    }
    if n == 0 {
        return complete_log_density(window, &LabelAssignment { labels: vec![] }, params);
    }
    let mut terms = Vec::with_capacity(1 << (n - 1));
    for mask in 0u32..(1u32 << (n - 1)) {
        let labels = labelling_from_mask(n, mask);
        terms.push(complete_log_density(window, &labels, params)?);
    }
    Ok(log_sum_exp(&terms))
}

/// Labeling whose bit `l − 1` of `mask` marks event `l` (l ≥ 1) as a parent.
pub fn labelling_from_mask(n: usize, mask: u32) -> LabelAssignment {
    let mut labels = vec![false; n];
    if n > 0 {
        labels[0] = true;
    }
    for (l, label) in labels.iter_mut().enumerate().skip(1) {
        *label = mask >> (l - 1) & 1 == 1;
    }
    LabelAssignment { labels }
}

/// One event with its posterior parent probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventPosterior {
    pub time: f64,
    /// Previous event time, or the window start for a window's first event.
    pub previous: f64,
    pub mark: Mark,
    pub parent_prob: f64,
    /// First event of its window: `previous` is the window start and the
    /// event is a parent by construction.
    #[serde(default)]
    pub opens_window: bool,
}

impl EventPosterior {
    pub fn gap(&self) -> f64 {
        self.time - self.previous
    }

    pub fn offspring_prob(&self) -> f64 {
        1.0 - self.parent_prob
    }
}

/// Posterior expected sufficient statistics of one or more windows.
///
/// Arrays indexed by mark hold `[repost, original]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub events: Vec<EventPosterior>,
    /// Survival intervals `(t_n, window end)` with unit weight.
    pub tails: Vec<(f64, f64)>,
    /// `E[K]`.
    pub expected_episodes: f64,
    /// `E[Σ_k (n_k − 1)]`.
    pub expected_switches: f64,
    /// Expected number of parents that are original posts.
    pub expected_original_parents: f64,
    /// Expected number of segments by type.
    pub expected_segments: [f64; 2],
    /// Expected `Σ (l − 1)` over segments by type.
    pub expected_segment_excess: [f64; 2],
    /// Expected offspring counts by mark.
    pub expected_offspring: [f64; 2],
    /// Expected offspring gap sums by mark.
    pub expected_offspring_gap: [f64; 2],
    /// Expected offspring log-gap sums by mark.
    pub expected_offspring_log_gap: [f64; 2],
    pub log_likelihood: f64,
    pub window_count: usize,
}

impl WindowStats {
    /// Fold another window (or aggregate) into this one.
    pub fn absorb(&mut self, other: &WindowStats) {
        self.events.extend(other.events.iter().cloned());
        self.tails.extend(other.tails.iter().copied());
        self.expected_episodes += other.expected_episodes;
        self.expected_switches += other.expected_switches;
        self.expected_original_parents += other.expected_original_parents;
        for z in 0..2 {
            self.expected_segments[z] += other.expected_segments[z];
            self.expected_segment_excess[z] += other.expected_segment_excess[z];
            self.expected_offspring[z] += other.expected_offspring[z];
            self.expected_offspring_gap[z] += other.expected_offspring_gap[z];
            self.expected_offspring_log_gap[z] += other.expected_offspring_log_gap[z];
        }
        self.log_likelihood += other.log_likelihood;
        self.window_count += other.window_count;
    }

    /// Sum per-window statistics with compensated summation of the
    /// log-likelihood.
    pub fn aggregate<'a>(parts: impl IntoIterator<Item = &'a WindowStats>) -> WindowStats {
        let mut total = WindowStats::default();
        let mut comp = 0.0;
        let mut ll = 0.0;
        for part in parts {
            // Neumaier
            let t = ll + part.log_likelihood;
            if ll.abs() >= part.log_likelihood.abs() {
                comp += (ll - t) + part.log_likelihood;
            } else {
                comp += (part.log_likelihood - t) + ll;
            }
            ll = t;
            total.absorb(part);
        }
        total.log_likelihood = ll + comp;
        total
    }

    pub fn parent_probs(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.parent_prob).collect()
    }
}

/// Posterior label probabilities and expected statistics for one window.
pub fn posterior_stats(window: &EventSequence, params: &ModelParams) -> WindowStats {
    let terms = WindowTerms::new(window, params);
    let n = window.len();
    let mut stats = WindowStats {
        tails: vec![(window.last_time(), window.window_end())],
        window_count: 1,
        ..WindowStats::default()
    };
    if n == 0 {
        stats.log_likelihood = terms.tail;
        return stats;
    }
    let forward = terms.forward();
    let backward = terms.backward();
    let log_z = forward[n];
    let marks = window.marks();
    let mut parent = vec![0.0; n];
    for i in 0..n {
        let a = forward[i] - log_z;
        if a == f64::NEG_INFINITY {
            continue;
        }
        terms.scan(i, |j, phi, shape| {
            let p = (a + phi + backward[j + 1]).exp();
            if p == 0.0 {
                return;
            }
            parent[i] += p;
            stats.expected_switches += p * shape.switches() as f64;
            for z in 0..2 {
                stats.expected_segments[z] += p * shape.segments[z] as f64;
                stats.expected_segment_excess[z] += p * (shape.events[z] - shape.segments[z]) as f64;
            }
        });
    }
    parent[0] = 1.0;
    for (l, pi) in parent.iter_mut().enumerate() {
        *pi = pi.clamp(0.0, 1.0);
        let mark = marks[l];
        let gap = window.gap(l);
        stats.expected_episodes += *pi;
        if mark == Mark::Original {
            stats.expected_original_parents += *pi;
        }
        let off = 1.0 - *pi;
        if l > 0 && off > 0.0 {
            let z = mark.index();
            stats.expected_offspring[z] += off;
            stats.expected_offspring_gap[z] += off * gap;
            stats.expected_offspring_log_gap[z] += off * gap.ln();
        }
        stats.events.push(EventPosterior {
            time: window.times()[l],
            previous: window.previous_time(l),
            mark,
            parent_prob: *pi,
            opens_window: l == 0,
        });
    }
    stats.log_likelihood = log_z + terms.tail;
    stats
}
