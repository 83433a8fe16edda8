//! Domain types, episode/segment combinatorics, and the complete-data density.

use rand::Rng;
use rand_distr::{Distribution, Exp, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::hazard::HazardSpec;

/// Observed event type: an original post or a repost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mark {
    Repost = 0,
    Original = 1,
}

impl Mark {
    pub const BOTH: [Mark; 2] = [Mark::Repost, Mark::Original];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_bit(bit: u8) -> Option<Mark> {
        match bit {
            0 => Some(Mark::Repost),
            1 => Some(Mark::Original),
            _ => None,
        }
    }

    #[inline]
    pub fn flip(self) -> Mark {
        match self {
            Mark::Repost => Mark::Original,
            Mark::Original => Mark::Repost,
        }
    }
}

/// Event times (days) with marks on an observation window.
///
/// Gap `l` is `times[l] - times[l - 1]`, with the window start standing in
/// for `times[-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSequence {
    window_start: f64,
    window_end: f64,
    times: Vec<f64>,
    marks: Vec<Mark>,
}

impl EventSequence {
    pub fn new(window_start: f64, window_end: f64, times: Vec<f64>, marks: Vec<Mark>) -> Result<Self> {
        if !(window_start.is_finite() && window_end.is_finite()) || window_end < window_start {
            return Err(Error::InvalidEvents(format!(
                "window [{window_start}, {window_end}] is not a finite interval"
            )));
        }
        if times.len() != marks.len() {
            return Err(Error::InvalidEvents(format!(
                "{} times but {} marks",
                times.len(),
                marks.len()
            )));
        }
        if let Some(first) = times.first() {
            if *first < window_start {
                return Err(Error::InvalidEvents(format!(
                    "first event {first} precedes window start {window_start}"
                )));
            }
        }
        if let Some(last) = times.last() {
            if *last > window_end {
                return Err(Error::InvalidEvents(format!(
                    "last event {last} is after window end {window_end}"
                )));
            }
        }
        for (l, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidEvents(format!(
                    "times must be strictly increasing: event {} at {} follows {}",
                    l + 1,
                    w[1],
                    w[0]
                )));
            }
        }
        Ok(EventSequence {
            window_start,
            window_end,
            times,
            marks,
        })
    }

    pub fn empty(window_start: f64, window_end: f64) -> Self {
        EventSequence {
            window_start,
            window_end,
            times: Vec::new(),
            marks: Vec::new(),
        }
    }

    pub fn window_start(&self) -> f64 {
        self.window_start
    }

    pub fn window_end(&self) -> f64 {
        self.window_end
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Time of the event before `l`, or the window start for `l = 0`.
    #[inline]
    pub fn previous_time(&self, l: usize) -> f64 {
        if l == 0 {
            self.window_start
        } else {
            self.times[l - 1]
        }
    }

    #[inline]
    pub fn gap(&self, l: usize) -> f64 {
        self.times[l] - self.previous_time(l)
    }

    pub fn gaps(&self) -> Vec<f64> {
        (0..self.len()).map(|l| self.gap(l)).collect()
    }

    /// Time of the last event, or the window start when empty.
    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(self.window_start)
    }

    /// Same events shifted by `offset` days.
    pub fn shifted(&self, offset: f64) -> Self {
        EventSequence {
            window_start: self.window_start + offset,
            window_end: self.window_end + offset,
            times: self.times.iter().map(|t| t + offset).collect(),
            marks: self.marks.clone(),
        }
    }

    /// Events in `[start, end)` (or `[start, end]` when `closed`), re-windowed.
    pub fn restrict(&self, start: f64, end: f64, closed: bool) -> Self {
        let lo = self.times.partition_point(|t| *t < start);
        let hi = if closed {
            self.times.partition_point(|t| *t <= end)
        } else {
            self.times.partition_point(|t| *t < end)
        };
        let hi = hi.max(lo);
        EventSequence {
            window_start: start,
            window_end: end,
            times: self.times[lo..hi].to_vec(),
            marks: self.marks[lo..hi].to_vec(),
        }
    }
}

/// Parent (`true`) / offspring (`false`) indicator per event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelAssignment {
    pub labels: Vec<bool>,
}

impl LabelAssignment {
    pub fn new(labels: Vec<bool>) -> Result<Self> {
        if labels.first() == Some(&false) {
            return Err(Error::InvalidLabels("the first event must be a parent".into()));
        }
        Ok(LabelAssignment { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Offspring gap-time distribution for one mark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum OffspringGap {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffspringFamily {
    Exponential,
    Weibull,
}

impl OffspringGap {
    pub fn family(&self) -> OffspringFamily {
        match self {
            OffspringGap::Exponential { .. } => OffspringFamily::Exponential,
            OffspringGap::Weibull { .. } => OffspringFamily::Weibull,
        }
    }

    /// Exponential with the given mean, or a Weibull of shape one.
    pub fn with_mean(family: OffspringFamily, mean: f64) -> Self {
        match family {
            OffspringFamily::Exponential => OffspringGap::Exponential { rate: 1.0 / mean },
            OffspringFamily::Weibull => OffspringGap::Weibull {
                shape: 1.0,
                scale: mean,
            },
        }
    }

    pub fn log_density(&self, d: f64) -> f64 {
        match *self {
            OffspringGap::Exponential { rate } => rate.ln() - rate * d,
            OffspringGap::Weibull { shape, scale } => {
                let z = d / scale;
                shape.ln() - scale.ln() + (shape - 1.0) * z.ln() - z.powf(shape)
            }
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        match *self {
            OffspringGap::Exponential { rate } => -(-rate * v).exp_m1(),
            OffspringGap::Weibull { shape, scale } => -(-(v / scale).powf(shape)).exp_m1(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            OffspringGap::Exponential { rate } => 1.0 / rate,
            OffspringGap::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            OffspringGap::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            OffspringGap::Weibull { shape, scale } => {
                Weibull::new(scale, shape).expect("validated weibull").sample(rng)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            OffspringGap::Exponential { .. } => 1,
            OffspringGap::Weibull { .. } => 2,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            OffspringGap::Exponential { rate } => vec![rate],
            OffspringGap::Weibull { shape, scale } => vec![shape, scale],
        }
    }

    pub fn with_values(&self, v: &[f64]) -> Self {
        match self {
            OffspringGap::Exponential { .. } => OffspringGap::Exponential { rate: v[0] },
            OffspringGap::Weibull { .. } => OffspringGap::Weibull {
                shape: v[0],
                scale: v[1],
            },
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        let ok = self.values().iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name,
                reason: format!("offspring parameters must be positive and finite: {self:?}"),
            })
        }
    }
}

/// Full parameter vector of the episodic model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Probability that an episode opens with an original post.
    pub alpha: f64,
    /// Poisson mean of the number of extra segments per episode.
    pub gamma: f64,
    /// Poisson mean of extra events in an original-post segment.
    pub mu1: f64,
    /// Poisson mean of extra events in a repost segment.
    pub mu0: f64,
    pub rho1: OffspringGap,
    pub rho0: OffspringGap,
    pub hazard: HazardSpec,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("must lie in (0, 1), got {}", self.alpha),
            });
        }
        for (name, v) in [("gamma", self.gamma), ("mu1", self.mu1), ("mu0", self.mu0)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be nonnegative and finite, got {v}"),
                });
            }
        }
        self.rho1.validate("rho1")?;
        self.rho0.validate("rho0")?;
        if self.rho1.family() != self.rho0.family() {
            return Err(Error::InvalidParameter {
                name: "rho0",
                reason: "both marks must use the same offspring family".into(),
            });
        }
        self.hazard.validate()
    }

    #[inline]
    pub fn mu(&self, mark: Mark) -> f64 {
        match mark {
            Mark::Original => self.mu1,
            Mark::Repost => self.mu0,
        }
    }

    #[inline]
    pub fn offspring(&self, mark: Mark) -> &OffspringGap {
        match mark {
            Mark::Original => &self.rho1,
            Mark::Repost => &self.rho0,
        }
    }

    pub fn offspring_family(&self) -> OffspringFamily {
        self.rho1.family()
    }

    /// Log-probability that an episode opens with `mark`.
    #[inline]
    pub fn log_first_mark(&self, mark: Mark) -> f64 {
        match mark {
            Mark::Original => self.alpha.ln(),
            Mark::Repost => (1.0 - self.alpha).ln(),
        }
    }

    /// Flattened coordinates: α, γ, μ₁, μ₀, ρ₁…, ρ₀…, β….
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.alpha, self.gamma, self.mu1, self.mu0];
        v.extend(self.rho1.values());
        v.extend(self.rho0.values());
        v.extend(self.hazard.beta.iter().copied());
        v
    }

    /// Inverse of [`to_vec`](Self::to_vec), keeping this value's families.
    pub fn with_vec(&self, v: &[f64]) -> Self {
        let r1 = self.rho1.dim();
        let r0 = self.rho0.dim();
        ModelParams {
            alpha: v[0],
            gamma: v[1],
            mu1: v[2],
            mu0: v[3],
            rho1: self.rho1.with_values(&v[4..4 + r1]),
            rho0: self.rho0.with_values(&v[4 + r1..4 + r1 + r0]),
            hazard: self.hazard.with_beta(v[4 + r1 + r0..].to_vec()),
        }
    }

    pub fn dim(&self) -> usize {
        4 + self.rho1.dim() + self.rho0.dim() + self.hazard.dim()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["alpha", "gamma", "mu1", "mu0"].iter().map(|s| s.to_string()).collect();
        for (tag, gap) in [("rho1", &self.rho1), ("rho0", &self.rho0)] {
            match gap {
                OffspringGap::Exponential { .. } => names.push(tag.to_string()),
                OffspringGap::Weibull { .. } => {
                    names.push(format!("{tag}_shape"));
                    names.push(format!("{tag}_scale"));
                }
            }
        }
        names.extend((0..self.hazard.dim()).map(|k| format!("beta{k}")));
        names
    }
}

/// A maximal run of equal marks inside an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub mark: Mark,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Episode {
    /// First event index (the parent).
    pub start: usize,
    /// Last event index, inclusive.
    pub end: usize,
    pub segments: Vec<Segment>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EpisodeDecomposition {
    pub episodes: Vec<Episode>,
}

impl EpisodeDecomposition {
    pub fn event_count(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    /// Labels reproducing this decomposition.
    pub fn labels(&self) -> LabelAssignment {
        let mut labels = vec![false; self.event_count()];
        for ep in &self.episodes {
            labels[ep.start] = true;
        }
        LabelAssignment { labels }
    }
}

/// Split `marks` into maximal runs.
pub fn runs(marks: &[Mark]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for &m in marks {
        match out.last_mut() {
            Some(seg) if seg.mark == m => seg.len += 1,
            _ => out.push(Segment { mark: m, len: 1 }),
        }
    }
    out
}

pub fn decompose(events: &EventSequence, labels: &LabelAssignment) -> Result<EpisodeDecomposition> {
    if labels.len() != events.len() {
        return Err(Error::InvalidLabels(format!(
            "{} labels for {} events",
            labels.len(),
            events.len()
        )));
    }
    if labels.labels.first() == Some(&false) {
        return Err(Error::InvalidLabels("the first event must be a parent".into()));
    }
    let mut episodes = Vec::new();
    let n = events.len();
    let mut start = 0;
    for l in 1..=n {
        if l == n || labels.labels[l] {
            episodes.push(Episode {
                start,
                end: l - 1,
                segments: runs(&events.marks()[start..l]),
            });
            start = l;
        }
    }
    Ok(EpisodeDecomposition { episodes })
}

/// `log(rate^k e^{-rate} / k!)`, with `0^0 = 1`.
#[inline]
pub fn log_poisson(k: usize, rate: f64) -> f64 {
    if k == 0 {
        -rate
    } else if rate <= 0.0 {
        f64::NEG_INFINITY
    } else {
        k as f64 * rate.ln() - rate - ln_factorial(k as u64)
    }
}

/// Parent-gap log density of event `l`: `log λ(t_l) − ∫_{t_{l−1}}^{t_l} λ`.
#[inline]
pub fn parent_log_density(events: &EventSequence, l: usize, hazard: &HazardSpec) -> f64 {
    let t = events.times()[l];
    hazard.log_rate(t) - hazard.integral(events.previous_time(l), t)
}

/// `log P(no parent in (t_n, T])`.
pub fn log_survival_tail(events: &EventSequence, hazard: &HazardSpec) -> f64 {
    -hazard.integral(events.last_time(), events.window_end())
}

/// Log of the joint density of times, marks and parent labels.
pub fn complete_log_density(
    events: &EventSequence,
    labels: &LabelAssignment,
    params: &ModelParams,
) -> Result<f64> {
    params.validate()?;
    let tail = log_survival_tail(events, &params.hazard);
    if events.is_empty() {
        return Ok(tail);
    }
    let decomposition = decompose(events, labels)?;
    let mut total = tail;
    for (l, &is_parent) in labels.labels.iter().enumerate() {
        let mark = events.marks()[l];
        if is_parent {
            total += parent_log_density(events, l, &params.hazard) + params.log_first_mark(mark);
        } else {
            total += params.offspring(mark).log_density(events.gap(l));
        }
    }
    for ep in &decomposition.episodes {
        total += log_poisson(ep.segments.len() - 1, params.gamma);
        for seg in &ep.segments {
            total += log_poisson(seg.len - 1, params.mu(seg.mark));
        }
    }
    Ok(total)
}

/// `e^{−γ}(α − 1/2) cosh γ`, the closed form of the even-term Poisson series.
pub fn c_coefficient(gamma: f64, alpha: f64) -> f64 {
    // e^{-γ} cosh γ = (1 + e^{-2γ}) / 2 avoids overflow for large γ.
    (alpha - 0.5) * 0.5 * (1.0 + (-2.0 * gamma).exp())
}

/// Expected number of events in one episode.
pub fn expected_events_per_episode(params: &ModelParams) -> f64 {
    let c = c_coefficient(params.gamma, params.alpha);
    0.5 * (2.0 + params.mu1 + params.mu0) * (params.gamma + 1.0) + c * (params.mu1 - params.mu0)
}

/// Expected episode length, counting `1 + μ_z` mean gaps per segment of type `z`.
pub fn expected_episode_length(params: &ModelParams) -> f64 {
    let c = c_coefficient(params.gamma, params.alpha);
    let a1 = params.rho1.mean() * (1.0 + params.mu1);
    let a0 = params.rho0.mean() * (1.0 + params.mu0);
    0.5 * (a1 + a0) * (params.gamma + 1.0) + c * (a1 - a0)
}
