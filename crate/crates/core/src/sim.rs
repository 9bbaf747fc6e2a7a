//! Synthetic propagation traces, arrival processes, and the trace CSV format.
//!
//! Every trace draws a latent class, then an archetype within that class.
//! Final views come from the class; the shape of the view curve, the
//! branching factor, and the share rate come from the archetype. The label
//! is always recomputed from the realized final view count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, Normal};

use crate::error::{Error, Result};
use crate::model::{ContextVector, PopularityStatus, RawFeatures, VideoTrace};
use crate::partition::Hypercube;

/// View-count thresholds separating popularity levels. Status is the number
/// of thresholds the final view count strictly exceeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopularityThresholds(Vec<u64>);

impl PopularityThresholds {
    pub fn new(thresholds: Vec<u64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Config(
                "at least one popularity threshold is required".into(),
            ));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "popularity thresholds must be strictly increasing".into(),
            ));
        }
        Ok(PopularityThresholds(thresholds))
    }

    /// Popular iff more than 10000 views.
    pub fn binary() -> Self {
        PopularityThresholds(vec![10_000])
    }

    /// Low / medium / high split at 2000 and 10000 views.
    pub fn refined() -> Self {
        PopularityThresholds(vec![2_000, 10_000])
    }

    pub fn levels(&self) -> usize {
        self.0.len() + 1
    }

    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn status(&self, final_views: u64) -> PopularityStatus {
        PopularityStatus(self.0.iter().filter(|&&t| final_views > t).count())
    }
}

/// Normalization of raw features into the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMap {
    pub view_cap: f64,
    pub brf_cap: f64,
    /// Append per-period views (log-scaled against `view_cap`) as a fourth coordinate.
    pub period_views: bool,
}

impl Default for FeatureMap {
    fn default() -> Self {
        FeatureMap {
            view_cap: 200_000.0,
            brf_cap: 5_000.0,
            period_views: false,
        }
    }
}

impl FeatureMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.view_cap > 0.0 && self.brf_cap > 0.0) {
            return Err(Error::Config("feature caps must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        if self.period_views {
            4
        } else {
            3
        }
    }

    pub fn normalize(&self, raw: &RawFeatures) -> ContextVector {
        let log_ratio =
            |v: u64, cap: f64| ((1.0 + v as f64).ln() / (1.0 + cap).ln()).clamp(0.0, 1.0);
        let mut coords = vec![
            log_ratio(raw.cum_views, self.view_cap),
            log_ratio(raw.brf, self.brf_cap),
            raw.shr.clamp(0.0, 1.0),
        ];
        if self.period_views {
            coords.push(log_ratio(raw.period_views, self.view_cap));
        }
        ContextVector::new(coords).expect("clamped coordinates are in range")
    }
}

/// Normalizes one age's raw features with the given caps.
pub fn normalize_features(raw: &RawFeatures, features: &FeatureMap) -> ContextVector {
    features.normalize(raw)
}

/// Shape of the cumulative view curve, with ages as fractions of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewCurve {
    /// Front-loaded saturation `1 - exp(-n/τ)`.
    Decay { tau: (f64, f64) },
    /// A trickle of views until the takeoff age, then a fast saturation.
    Takeoff {
        takeoff: (f64, f64),
        tau: (f64, f64),
        /// Share of final views reached by the takeoff age.
        base_share: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archetype {
    pub name: String,
    pub weight: f64,
    /// Median and log-scale sigma of the final branching factor.
    pub brf: (f64, f64),
    /// Beta shape parameters of the share rate.
    pub shr: (f64, f64),
    pub curve: ViewCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub name: String,
    pub prior: f64,
    /// Median and log-scale sigma of final cumulative views.
    pub final_views: (f64, f64),
    pub archetypes: Vec<Archetype>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub horizon: usize,
    pub classes: Vec<ClassProfile>,
    pub thresholds: PopularityThresholds,
    pub features: FeatureMap,
    pub seed: u64,
}

fn decay(name: &str, weight: f64, brf: (f64, f64), shr: (f64, f64), tau: (f64, f64)) -> Archetype {
    Archetype {
        name: name.into(),
        weight,
        brf,
        shr,
        curve: ViewCurve::Decay { tau },
    }
}

fn popular_archetypes() -> Vec<Archetype> {
    vec![
        decay("broadcast", 0.5, (300.0, 0.6), (2.0, 18.0), (0.2, 0.6)),
        Archetype {
            name: "viral".into(),
            weight: 0.5,
            brf: (25.0, 0.8),
            shr: (9.0, 11.0),
            curve: ViewCurve::Takeoff {
                takeoff: (0.25, 0.6),
                tau: (0.05, 0.2),
                base_share: 0.02,
            },
        },
    ]
}

fn quiet_archetype() -> Vec<Archetype> {
    vec![decay("quiet", 1.0, (15.0, 0.8), (2.0, 18.0), (0.05, 0.3))]
}

impl SimParams {
    /// Two classes, 10% popular, popular iff final views exceed 10000.
    pub fn binary(horizon: usize, seed: u64) -> Self {
        SimParams {
            horizon,
            classes: vec![
                ClassProfile {
                    name: "unpopular".into(),
                    prior: 0.9,
                    final_views: (600.0, 0.8),
                    archetypes: quiet_archetype(),
                },
                ClassProfile {
                    name: "popular".into(),
                    prior: 0.1,
                    final_views: (40_000.0, 0.5),
                    archetypes: popular_archetypes(),
                },
            ],
            thresholds: PopularityThresholds::binary(),
            features: FeatureMap::default(),
            seed,
        }
    }

    /// Three classes against the 2000 / 10000 thresholds.
    pub fn refined(horizon: usize, seed: u64) -> Self {
        let medium = vec![
            decay("steady", 0.5, (60.0, 0.6), (2.0, 18.0), (0.1, 0.4)),
            Archetype {
                name: "spark".into(),
                weight: 0.5,
                brf: (15.0, 0.8),
                shr: (5.0, 15.0),
                curve: ViewCurve::Takeoff {
                    takeoff: (0.2, 0.5),
                    tau: (0.05, 0.2),
                    base_share: 0.05,
                },
            },
        ];
        SimParams {
            horizon,
            classes: vec![
                ClassProfile {
                    name: "low".into(),
                    prior: 0.6,
                    final_views: (500.0, 0.6),
                    archetypes: quiet_archetype(),
                },
                ClassProfile {
                    name: "medium".into(),
                    prior: 0.3,
                    final_views: (4_500.0, 0.35),
                    archetypes: medium,
                },
                ClassProfile {
                    name: "high".into(),
                    prior: 0.1,
                    final_views: (40_000.0, 0.5),
                    archetypes: popular_archetypes(),
                },
            ],
            thresholds: PopularityThresholds::refined(),
            features: FeatureMap::default(),
            seed,
        }
    }

    /// Replaces the class priors, in class order.
    pub fn with_priors(mut self, priors: &[f64]) -> Result<Self> {
        if priors.len() != self.classes.len() {
            return Err(Error::Config(format!(
                "expected {} priors",
                self.classes.len()
            )));
        }
        for (c, &p) in self.classes.iter_mut().zip(priors) {
            c.prior = p;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        self.features.validate()?;
        if self.classes.is_empty() {
            return Err(Error::Config("no latent classes".into()));
        }
        let total: f64 = self.classes.iter().map(|c| c.prior).sum();
        if self.classes.iter().any(|c| !(c.prior >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(
                "class priors must be non-negative and sum to 1".into(),
            ));
        }
        for c in &self.classes {
            let (median, sigma) = c.final_views;
            if !(median > 0.0 && sigma >= 0.0) {
                return Err(Error::Config(format!(
                    "bad view distribution for class {}",
                    c.name
                )));
            }
            if c.archetypes.is_empty() || c.archetypes.iter().any(|a| !(a.weight > 0.0)) {
                return Err(Error::Config(format!(
                    "class {} needs weighted archetypes",
                    c.name
                )));
            }
            for a in &c.archetypes {
                let ok = a.brf.0 > 0.0
                    && a.brf.1 >= 0.0
                    && a.shr.0 > 0.0
                    && a.shr.1 > 0.0
                    && match a.curve {
                        ViewCurve::Decay { tau } => 0.0 < tau.0 && tau.0 <= tau.1,
                        ViewCurve::Takeoff {
                            takeoff,
                            tau,
                            base_share,
                        } => {
                            0.0 < takeoff.0
                                && takeoff.0 <= takeoff.1
                                && takeoff.1 < 1.0
                                && 0.0 < tau.0
                                && tau.0 <= tau.1
                                && (0.0..1.0).contains(&base_share)
                        }
                    };
                if !ok {
                    return Err(Error::Config(format!(
                        "bad parameters for archetype {}",
                        a.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.thresholds.levels()
    }
}

fn pick<'a, T, R: Rng + ?Sized>(rng: &mut R, items: &'a [T], weight: impl Fn(&T) -> f64) -> &'a T {
    let total: f64 = items.iter().map(&weight).sum();
    let mut u = rng.random::<f64>() * total;
    for item in items {
        let w = weight(item);
        if u < w {
            return item;
        }
        u -= w;
    }
    items
        .iter()
        .rev()
        .find(|i| weight(i) > 0.0)
        .unwrap_or(&items[0])
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn lognormal<R: Rng + ?Sized>(rng: &mut R, (median, sigma): (f64, f64)) -> f64 {
    LogNormal::new(median.ln(), sigma)
        .expect("validated lognormal parameters")
        .sample(rng)
}

/// Cumulative share of final views reached by each age, ending at exactly 1.
fn curve_shares<R: Rng + ?Sized>(rng: &mut R, curve: &ViewCurve, horizon: usize) -> Vec<f64> {
    let h = horizon as f64;
    let saturating =
        |n: f64, tau: f64, span: f64| (1.0 - (-n / tau).exp()) / (1.0 - (-span / tau).exp());
    match *curve {
        ViewCurve::Decay { tau } => {
            let tau = uniform_in(rng, tau) * h;
            (1..=horizon)
                .map(|n| saturating(n as f64, tau, h))
                .collect()
        }
        ViewCurve::Takeoff {
            takeoff,
            tau,
            base_share,
        } => {
            let start = (uniform_in(rng, takeoff) * h).floor();
            let tau = uniform_in(rng, tau) * h;
            (1..=horizon)
                .map(|n| {
                    let n = n as f64;
                    if n <= start {
                        base_share * n / start.max(1.0)
                    } else {
                        base_share + (1.0 - base_share) * saturating(n - start, tau, h - start)
                    }
                })
                .collect()
        }
    }
}

/// Draws one trace using `rng`.
pub fn generate_trace<R: Rng + ?Sized>(params: &SimParams, id: u64, rng: &mut R) -> VideoTrace {
    let horizon = params.horizon;
    let class = pick(rng, &params.classes, |c| c.prior);
    let archetype = pick(rng, &class.archetypes, |a| a.weight);
    let final_views = lognormal(rng, class.final_views).round().min(1e15);
    let brf_total = lognormal(rng, archetype.brf);
    let shr_base: f64 = Beta::new(archetype.shr.0, archetype.shr.1)
        .expect("validated beta parameters")
        .sample(rng);
    let shr_noise = Normal::new(0.0, 0.01).expect("fixed sigma");
    let shares = curve_shares(rng, &archetype.curve, horizon);
    let brf_tau = (0.03 * horizon as f64).max(0.5);

    let mut raw = Vec::with_capacity(horizon);
    let mut prev = 0u64;
    for (i, share) in shares.iter().enumerate() {
        let n = (i + 1) as f64;
        let cum = if i + 1 == horizon {
            final_views as u64
        } else {
            ((final_views * share).round() as u64).max(prev)
        };
        let brf = ((brf_total * (1.0 - (-n / brf_tau).exp())).round() as u64).min(cum);
        let shr = (shr_base + shr_noise.sample(rng)).clamp(0.0, 1.0);
        raw.push(RawFeatures {
            cum_views: cum,
            period_views: cum - prev,
            brf,
            shr,
        });
        prev = cum;
    }
    // The branching factor is capped by views, so keep it monotone after the cap.
    for i in 1..raw.len() {
        raw[i].brf = raw[i].brf.max(raw[i - 1].brf).min(raw[i].cum_views);
    }
    trace_from_raw(id, raw, &params.features, &params.thresholds)
}

/// Builds a trace from raw measurements; the label is derived from final views.
pub fn trace_from_raw(
    id: u64,
    raw: Vec<RawFeatures>,
    features: &FeatureMap,
    thresholds: &PopularityThresholds,
) -> VideoTrace {
    let status = thresholds.status(raw.last().map_or(0, |r| r.cum_views));
    VideoTrace {
        id,
        contexts: raw.iter().map(|r| features.normalize(r)).collect(),
        status,
        raw: Some(raw),
    }
}

/// Per-trace seed derived from the master seed.
pub fn trace_seed(master: u64, id: u64) -> u64 {
    master ^ id
}

/// Generates traces `0..count`, each from its own derived seed.
pub fn generate_corpus(params: &SimParams, count: usize) -> Result<Vec<VideoTrace>> {
    params.validate()?;
    Ok((0..count as u64)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(trace_seed(params.seed, id));
            generate_trace(params, id, &mut rng)
        })
        .collect())
}

const TRACE_HEADER: [&str; 7] = [
    "video_id",
    "age",
    "cum_views",
    "period_views",
    "brf",
    "shr",
    "final_status",
];

/// Writes traces in the trace CSV format. Traces without raw features are rejected.
pub fn write_traces<W: Write>(out: W, traces: &[VideoTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Internal(format!("csv write: {e}"));
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for t in traces {
        let raw = t
            .raw
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("trace {} has no raw features", t.id)))?;
        for (i, r) in raw.iter().enumerate() {
            w.write_record([
                t.id.to_string(),
                (i + 1).to_string(),
                r.cum_views.to_string(),
                r.period_views.to_string(),
                r.brf.to_string(),
                r.shr.to_string(),
                t.status.0.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()
        .map_err(|e| Error::Internal(format!("csv flush: {e}")))?;
    Ok(())
}

pub fn write_traces_file(path: &Path, traces: &[VideoTrace]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_traces(BufWriter::new(file), traces).map_err(|e| match e {
        Error::Internal(m) => Error::io(path, std::io::Error::other(m)),
        other => other,
    })
}

/// Reads trace CSV rows, renormalizing contexts and recomputing labels.
/// Rows of one video must be contiguous with ages `1..=N`, and every video
/// must share the same `N`. A non-empty `final_status` must agree with the
/// label implied by the final view count.
pub fn read_traces<R: Read>(
    input: R,
    source: &str,
    features: &FeatureMap,
    thresholds: &PopularityThresholds,
) -> Result<Vec<VideoTrace>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?;
    if header.iter().map(str::trim).ne(TRACE_HEADER) {
        return Err(Error::parse(
            source,
            1,
            format!("header must be {}", TRACE_HEADER.join(",")),
        ));
    }

    struct Partial {
        id: u64,
        raw: Vec<RawFeatures>,
        declared: Option<(usize, u64)>,
    }
    let mut traces = Vec::new();
    let mut horizon: Option<usize> = None;
    let mut current: Option<Partial> = None;

    let mut finish = |p: Partial, line: u64, traces: &mut Vec<VideoTrace>| -> Result<()> {
        match horizon {
            None => horizon = Some(p.raw.len()),
            Some(h) if h != p.raw.len() => {
                return Err(Error::parse(
                    source,
                    line,
                    format!("video {} has {} ages, expected {h}", p.id, p.raw.len()),
                ))
            }
            _ => {}
        }
        let trace = trace_from_raw(p.id, p.raw, features, thresholds);
        if let Some((declared, at)) = p.declared {
            if declared != trace.status.0 {
                return Err(Error::Integrity {
                    path: source.to_string(),
                    line: at,
                    message: format!(
                        "video {} declares status {declared} but its final views imply {}",
                        trace.id, trace.status
                    ),
                });
            }
        }
        traces.push(trace);
        Ok(())
    };

    let mut line = 1;
    for rec in rdr.records() {
        line += 1;
        let rec = rec.map_err(|e| Error::parse(source, line, e.to_string()))?;
        if rec.len() != TRACE_HEADER.len() {
            return Err(Error::parse(
                source,
                line,
                format!("expected {} fields", TRACE_HEADER.len()),
            ));
        }
        let field = |i: usize| rec[i].trim();
        let int = |i: usize| -> Result<u64> {
            field(i).parse().map_err(|_| {
                Error::parse(
                    source,
                    line,
                    format!("bad {} {:?}", TRACE_HEADER[i], field(i)),
                )
            })
        };
        let id = int(0)?;
        let age = int(1)? as usize;
        let raw = RawFeatures {
            cum_views: int(2)?,
            period_views: int(3)?,
            brf: int(4)?,
            shr: field(5)
                .parse()
                .ok()
                .filter(|v: &f64| (0.0..=1.0).contains(v))
                .ok_or_else(|| Error::parse(source, line, format!("bad shr {:?}", field(5))))?,
        };
        let declared = match field(6) {
            "" => None,
            s => Some((
                s.parse::<usize>()
                    .map_err(|_| Error::parse(source, line, format!("bad final_status {s:?}")))?,
                line,
            )),
        };

        if current.as_ref().is_some_and(|p| p.id != id) {
            finish(current.take().expect("checked"), line - 1, &mut traces)?;
        }
        match current.as_mut() {
            None => {
                if age != 1 {
                    return Err(Error::parse(
                        source,
                        line,
                        format!("video {id} must start at age 1"),
                    ));
                }
                current = Some(Partial {
                    id,
                    raw: vec![raw],
                    declared,
                });
            }
            Some(p) => {
                if age != p.raw.len() + 1 {
                    return Err(Error::parse(
                        source,
                        line,
                        format!("video {id}: expected age {}, found {age}", p.raw.len() + 1),
                    ));
                }
                let prev = p.raw.last().expect("non-empty");
                if raw.cum_views < prev.cum_views {
                    return Err(Error::Integrity {
                        path: source.to_string(),
                        line,
                        message: format!("video {id}: cumulative views decrease at age {age}"),
                    });
                }
                if declared.is_some()
                    && p.declared
                        .is_some_and(|(d, _)| Some(d) != declared.map(|x| x.0))
                {
                    return Err(Error::parse(
                        source,
                        line,
                        format!("video {id}: final_status changes"),
                    ));
                }
                p.declared = p.declared.or(declared);
                p.raw.push(raw);
            }
        }
    }
    if let Some(p) = current.take() {
        finish(p, line, &mut traces)?;
    }
    Ok(traces)
}

pub fn load_traces(
    path: &Path,
    features: &FeatureMap,
    thresholds: &PopularityThresholds,
) -> Result<Vec<VideoTrace>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_traces(
        std::io::BufReader::new(file),
        &path.display().to_string(),
        features,
        thresholds,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalKind {
    Worst,
    Best,
}

impl std::str::FromStr for ArrivalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "worst" => Ok(ArrivalKind::Worst),
            "best" => Ok(ArrivalKind::Best),
            other => Err(Error::Config(format!("unknown arrival kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ArrivalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArrivalKind::Worst => "worst",
            ArrivalKind::Best => "best",
        })
    }
}

/// Largest grid enumerated by the worst-case generator.
const MAX_GRID_POINTS: u128 = 1 << 28;

/// Smallest `m` with `m^d >= k`.
fn grid_side(k: usize, d: usize) -> Option<u128> {
    let mut m = (k as f64).powf(1.0 / d as f64).ceil().max(1.0) as u128;
    let pow = |m: u128| m.checked_pow(d as u32);
    while m > 1 && pow(m - 1).is_some_and(|v| v >= k as u128) {
        m -= 1;
    }
    while pow(m)? < k as u128 {
        m += 1;
    }
    Some(m)
}

/// Level of the cube holding a best-case arrival batch.
pub fn best_case_level(k: usize, p: f64) -> u32 {
    ((k as f64).log2() / p).ceil().max(0.0) as u32 + 1
}

/// `K` contexts for the regret experiments. Worst case: a jittered grid whose
/// points are pairwise at least `K^{-1/d}` apart. Best case: uniform points
/// inside one randomly placed cube of level `⌈log2(K)/p⌉ + 1`.
pub fn generate_arrival_contexts<R: Rng + ?Sized>(
    kind: ArrivalKind,
    k: usize,
    d: usize,
    p: f64,
    rng: &mut R,
) -> Result<Vec<ContextVector>> {
    if k == 0 || d == 0 || !(p > 0.0) {
        return Err(Error::Config(
            "arrival generation needs K >= 1, d >= 1, p > 0".into(),
        ));
    }
    match kind {
        ArrivalKind::Worst => {
            let m = grid_side(k, d)
                .filter(|&m| {
                    m.checked_pow(d as u32)
                        .is_some_and(|v| v <= MAX_GRID_POINTS)
                })
                .ok_or_else(|| {
                    Error::InfeasibleArrival(format!(
                        "{k} points in dimension {d} need too fine a grid"
                    ))
                })?;
            if m == 1 {
                let x = (0..d).map(|_| rng.random::<f64>()).collect();
                return Ok(vec![ContextVector::new(x)?]);
            }
            let cells = m.pow(d as u32) as usize;
            let spacing = 1.0 / (m - 1) as f64;
            let min_dist = (k as f64).powf(-1.0 / d as f64);
            let jitter = ((spacing - min_dist) / 2.0).max(0.0);
            let mut chosen = index::sample(rng, cells, k).into_vec();
            chosen.shuffle(rng);
            chosen
                .into_iter()
                .map(|mut cell| {
                    let coords = (0..d)
                        .map(|_| {
                            let g = (cell as u128 % m) as f64 * spacing;
                            cell /= m as usize;
                            let e = if jitter > 0.0 {
                                rng.random_range(-jitter..=jitter)
                            } else {
                                0.0
                            };
                            (g + e).clamp(0.0, 1.0)
                        })
                        .collect();
                    ContextVector::new(coords)
                })
                .collect()
        }
        ArrivalKind::Best => {
            let level = best_case_level(k, p);
            if level > 52 {
                return Err(Error::InfeasibleArrival(format!(
                    "level-{level} cube is below float resolution"
                )));
            }
            let cells = 1u64 << level;
            let cube = Hypercube {
                level,
                coords: (0..d).map(|_| rng.random_range(0..cells) as u32).collect(),
            };
            let side = cube.side();
            (0..k)
                .map(|_| {
                    let coords = cube
                        .coords
                        .iter()
                        .map(|&c| {
                            let lo = c as f64 * side;
                            // stay strictly below the upper face
                            (lo + rng.random::<f64>() * side).min(lo + side * (1.0 - f64::EPSILON))
                        })
                        .collect();
                    ContextVector::new(coords)
                })
                .collect()
        }
    }
}

pub fn write_arrivals<W: Write>(out: W, contexts: &[ContextVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Internal(format!("csv write: {e}"));
    let d = contexts.first().map_or(0, ContextVector::dim);
    let header: Vec<String> = std::iter::once("index".to_string())
        .chain((0..d).map(|i| format!("x_{i}")))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for (i, x) in contexts.iter().enumerate() {
        let row: Vec<String> = std::iter::once(i.to_string())
            .chain(x.coords().iter().map(f64::to_string))
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::Internal(format!("csv flush: {e}")))?;
    Ok(())
}
