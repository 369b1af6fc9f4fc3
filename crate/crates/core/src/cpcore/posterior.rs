//! Posterior over change-point configurations and everything derived from it.
//!
//! All enumeration runs over contiguous rank chunks. The chunk boundaries
//! depend only on the number of configurations, never on the worker count,
//! and partial results are merged in chunk order. Results are therefore
//! bit-identical for any number of workers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::LogSumExp;

use super::combinatorics::{advance, count_configurations, count_configurations_u64, unrank, unrank_into, CpConfiguration};
use super::evidence::{AnalysisGrid, EvidenceEvaluator, SegmentTable};

/// Default refusal threshold for exhaustive enumeration.
pub const DEFAULT_BUDGET: u64 = 500_000_000;

/// Largest configuration count for which [`posterior`] keeps a per-rank table.
pub const DENSE_LIMIT: u64 = 1 << 27;

/// Configurations whose weight relative to the heaviest one seen so far is
/// below this are left out of fit moments. Even 2^32 of them move the result
/// by less than 1e-12 relative.
pub const FIT_WEIGHT_CUTOFF: f64 = 1e-22;

const MIN_CHUNK: u64 = 4096;
const TARGET_CHUNKS: u64 = 4096;

/// Worker count and enumeration budget.
#[derive(Clone, Copy, Debug)]
pub struct Enumeration {
    /// `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub budget: u64,
}

impl Default for Enumeration {
    fn default() -> Self {
        Enumeration {
            workers: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl Enumeration {
    pub fn with_workers(workers: usize) -> Self {
        Enumeration {
            workers: Some(workers),
            ..Default::default()
        }
    }

    /// Validates `m` against the grid and returns the configuration count.
    pub fn admit(&self, grid: &AnalysisGrid, m: usize) -> Result<u64> {
        let n = grid.len();
        if n < m + 3 {
            return Err(Error::SeriesTooShort {
                len: n,
                needed: m + 3,
            });
        }
        let exact = count_configurations(n, m)?;
        match count_configurations_u64(n, m)? {
            Some(count) if count <= self.budget => Ok(count),
            _ => Err(Error::BudgetExceeded {
                count: exact.to_string(),
                budget: self.budget,
            }),
        }
    }

    fn run<T, F>(&self, total: u64, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, u64) -> T + Sync + Send,
    {
        let chunks = chunk_ranges(total);
        let workers = self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1);
        if workers == 1 || chunks.len() == 1 {
            return chunks.iter().map(|&(s, e)| job(s, e)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| chunks.par_iter().map(|&(s, e)| job(s, e)).collect())
    }
}

/// Contiguous `[start, end)` rank ranges covering `0..total`.
pub fn chunk_ranges(total: u64) -> Vec<(u64, u64)> {
    let len = total.div_ceil(TARGET_CHUNKS).max(MIN_CHUNK);
    let mut out = Vec::with_capacity(total.div_ceil(len) as usize);
    let mut start = 0;
    while start < total {
        let end = (start + len).min(total);
        out.push((start, end));
        start = end;
    }
    out
}

/// Segment table for an enumeration of `total` configurations, if it pays off.
fn segment_table(grid: &AnalysisGrid, total: u64) -> Option<SegmentTable> {
    SegmentTable::worthwhile(grid.len(), total).then(|| SegmentTable::new(grid))
}

/// Walks the configurations of ranks `start..end`, handing each one with its
/// rank to `visit` after the evaluator has solved it.
fn walk_chunk<F>(
    grid: &AnalysisGrid,
    table: Option<&SegmentTable>,
    m: usize,
    start: u64,
    end: u64,
    mut visit: F,
) where
    F: FnMut(u64, &[usize], &mut EvidenceEvaluator<'_>),
{
    let mut eval = match table {
        Some(table) => EvidenceEvaluator::with_table(grid, m, table),
        None => EvidenceEvaluator::new(grid, m),
    }
    .expect("admitted grid");
    let mut config = vec![0; m];
    unrank_into(start, grid.len(), &mut config);
    let mut rank = start;
    loop {
        eval.solve(&config);
        visit(rank, &config, &mut eval);
        rank += 1;
        if rank == end {
            break;
        }
        let more = advance(&mut config, grid.len());
        debug_assert!(more);
    }
}

/// Posterior over all configurations of `m` change points, one log evidence per rank.
#[derive(Clone, Debug)]
pub struct CpPosterior {
    grid: AnalysisGrid,
    m: usize,
    log_evidence: Vec<f64>,
    log_sum: f64,
}

impl CpPosterior {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &AnalysisGrid {
        &self.grid
    }

    pub fn count(&self) -> u64 {
        self.log_evidence.len() as u64
    }

    /// Log evidence per lexicographic rank.
    pub fn log_evidence(&self) -> &[f64] {
        &self.log_evidence
    }

    /// Log of the prior-weighted evidence sum (uniform configuration prior).
    pub fn log_z(&self) -> f64 {
        self.log_sum - (self.count() as f64).ln()
    }

    /// Log posterior probability of the configuration with the given rank.
    pub fn log_probability(&self, rank: u64) -> f64 {
        self.log_evidence[rank as usize] - self.log_sum
    }

    pub fn probability(&self, rank: u64) -> f64 {
        self.log_probability(rank).exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_evidence
            .iter()
            .map(|le| (le - self.log_sum).exp())
            .collect()
    }

    /// Lexicographically smallest configuration of maximal posterior.
    pub fn map_configuration(&self) -> CpConfiguration {
        let mut best = 0;
        for (r, le) in self.log_evidence.iter().enumerate() {
            if *le > self.log_evidence[best] {
                best = r;
            }
        }
        unrank(best as u64, self.grid.len(), self.m).expect("valid rank")
    }
}

/// Evaluates every configuration of `m` change points and normalizes.
pub fn posterior(grid: &AnalysisGrid, m: usize, opts: &Enumeration) -> Result<CpPosterior> {
    let total = opts.admit(grid, m)?;
    if total > DENSE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "{total} configurations are too many for a per-configuration table; \
             use the streaming analysis instead"
        )));
    }
    let table = segment_table(grid, total);
    let parts = opts.run(total, |start, end| {
        let mut les = Vec::with_capacity((end - start) as usize);
        let mut lse = LogSumExp::new();
        walk_chunk(grid, table.as_ref(), m, start, end, |_, _, eval| {
            let le = eval.current_log_evidence();
            lse.add(le);
            les.push(le);
        });
        (les, lse)
    });
    let mut log_evidence = Vec::with_capacity(total as usize);
    let mut lse = LogSumExp::new();
    for (les, part) in parts {
        log_evidence.extend(les);
        lse.merge(&part);
    }
    let log_sum = lse.value();
    if !log_sum.is_finite() {
        return Err(Error::InvalidParameter(
            "posterior normalization is not finite".into(),
        ));
    }
    Ok(CpPosterior {
        grid: grid.clone(),
        m,
        log_evidence,
        log_sum,
    })
}

/// Log of the uniform-prior model evidence for `m` change points.
pub fn log_model_evidence(grid: &AnalysisGrid, m: usize, opts: &Enumeration) -> Result<f64> {
    let total = opts.admit(grid, m)?;
    let table = segment_table(grid, total);
    let parts = opts.run(total, |start, end| {
        let mut lse = LogSumExp::new();
        walk_chunk(grid, table.as_ref(), m, start, end, |_, _, eval| lse.add(eval.current_log_evidence()));
        lse
    });
    let mut lse = LogSumExp::new();
    for p in &parts {
        lse.merge(p);
    }
    Ok(lse.value() - (total as f64).ln())
}

/// Posterior mass of one change point's position, indexed by grid index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalPdf {
    /// 1-based position of the change point within the configuration.
    pub ordinal: usize,
    /// Mass per grid index; the endpoints always carry zero.
    pub mass: Vec<f64>,
}

impl MarginalPdf {
    /// Index of the largest mass; the earliest one on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.mass.iter().enumerate() {
            if p > self.mass[best] {
                best = i;
            }
        }
        best
    }
}

/// Marginal position distributions of each change point.
pub fn marginal_pdfs(post: &CpPosterior, opts: &Enumeration) -> Vec<MarginalPdf> {
    let n = post.grid.len();
    let m = post.m;
    if m == 0 {
        return Vec::new();
    }
    let parts = opts.run(post.count(), |start, end| {
        let mut mass = vec![0.0; m * n];
        let mut config = vec![0; m];
        unrank_into(start, n, &mut config);
        for rank in start..end {
            let p = post.probability(rank);
            for (j, &idx) in config.iter().enumerate() {
                mass[j * n + idx] += p;
            }
            if rank + 1 < end {
                advance(&mut config, n);
            }
        }
        mass
    });
    let mut total = vec![0.0; m * n];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
        .chunks(n)
        .enumerate()
        .map(|(j, mass)| MarginalPdf {
            ordinal: j + 1,
            mass: mass.to_vec(),
        })
        .collect()
}

/// Posterior-weighted trend with its credibility band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentFit {
    pub eval_times: Vec<f64>,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    pub band_multiplier: f64,
}

impl SegmentFit {
    pub fn lower(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| m - self.band_multiplier * s)
            .collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.sigma)
            .map(|(m, s)| m + self.band_multiplier * s)
            .collect()
    }
}

/// Default credibility multiplier of the fit band.
pub const DEFAULT_BAND_MULTIPLIER: f64 = 3.0;

fn check_fit_dof(grid: &AnalysisGrid, m: usize) -> Result<()> {
    if grid.len() < m + 5 {
        return Err(Error::SeriesTooShort {
            len: grid.len(),
            needed: m + 5,
        });
    }
    Ok(())
}

/// Weighted first and second moments of the per-configuration fits, kept
/// as a weighted running mean and sum of squared deviations so merging and
/// rescaling never subtract large nearly equal numbers.
#[derive(Clone, Debug)]
struct FitMoments {
    weight: f64,
    mean: Vec<f64>,
    spread: Vec<f64>,
    within: Vec<f64>,
}

impl FitMoments {
    fn new(len: usize) -> Self {
        FitMoments {
            weight: 0.0,
            mean: vec![0.0; len],
            spread: vec![0.0; len],
            within: vec![0.0; len],
        }
    }

    /// Adds one configuration; `var_scale` multiplies every entry of `var`.
    fn add(&mut self, w: f64, fit: &[f64], var: &[f64], var_scale: f64) {
        if w == 0.0 {
            return;
        }
        self.weight += w;
        let frac = w / self.weight;
        let w_var = w * var_scale;
        for k in 0..fit.len() {
            let delta = fit[k] - self.mean[k];
            self.mean[k] += delta * frac;
            self.spread[k] += w * delta * (fit[k] - self.mean[k]);
            self.within[k] += w_var * var[k];
        }
    }

    fn scale(&mut self, factor: f64) {
        self.weight *= factor;
        for k in 0..self.mean.len() {
            self.spread[k] *= factor;
            self.within[k] *= factor;
        }
    }

    fn merge(&mut self, other: &FitMoments) {
        if other.weight == 0.0 {
            return;
        }
        if self.weight == 0.0 {
            *self = other.clone();
            return;
        }
        let total = self.weight + other.weight;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * other.weight / total;
            self.spread[k] += other.spread[k] + delta * delta * self.weight * other.weight / total;
            self.within[k] += other.within[k];
        }
        self.weight = total;
    }

    fn finish(&self, eval_times: &[f64], band_multiplier: f64) -> SegmentFit {
        let sigma = self
            .spread
            .iter()
            .zip(&self.within)
            .map(|(s, v)| ((s + v) / self.weight).max(0.0).sqrt())
            .collect();
        SegmentFit {
            eval_times: eval_times.to_vec(),
            mean: self.mean.clone(),
            sigma,
            band_multiplier,
        }
    }
}

/// Scratch buffers for per-configuration predictions.
struct Prediction {
    ordinates: Vec<f64>,
    fit: Vec<f64>,
    var: Vec<f64>,
    var_scale_dof: f64,
    var_scale: f64,
}

impl Prediction {
    fn new(m: usize, n: usize, len: usize) -> Self {
        Prediction {
            ordinates: vec![0.0; m + 2],
            fit: vec![0.0; len],
            var: vec![0.0; len],
            var_scale_dof: (n - m - 4) as f64,
            var_scale: 0.0,
        }
    }

    fn compute(&mut self, eval: &mut EvidenceEvaluator<'_>, eval_times: &[f64]) {
        eval.predict_into(eval_times, &mut self.ordinates, &mut self.fit, &mut self.var);
        self.var_scale = eval.floored_rss() / self.var_scale_dof;
    }
}

/// Posterior-weighted piecewise-linear fit evaluated at `eval_times`.
pub fn segment_fit(
    post: &CpPosterior,
    eval_times: &[f64],
    band_multiplier: f64,
    opts: &Enumeration,
) -> Result<SegmentFit> {
    let grid = &post.grid;
    let m = post.m;
    check_fit_dof(grid, m)?;
    check_eval_times(eval_times)?;
    let peak = post.log_evidence.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cutoff = peak + FIT_WEIGHT_CUTOFF.ln();
    let table = segment_table(grid, post.count());
    let parts = opts.run(post.count(), |start, end| {
        let mut moments = FitMoments::new(eval_times.len());
        let mut pred = Prediction::new(m, grid.len(), eval_times.len());
        walk_chunk(grid, table.as_ref(), m, start, end, |rank, _, eval| {
            if post.log_evidence[rank as usize] < cutoff {
                return;
            }
            pred.compute(eval, eval_times);
            moments.add(post.probability(rank), &pred.fit, &pred.var, pred.var_scale);
        });
        moments
    });
    let mut total = FitMoments::new(eval_times.len());
    for p in &parts {
        total.merge(p);
    }
    Ok(total.finish(eval_times, band_multiplier))
}

fn check_eval_times(eval_times: &[f64]) -> Result<()> {
    if eval_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("non-finite evaluation time".into()));
    }
    if eval_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("evaluation times must be ascending".into()));
    }
    Ok(())
}

/// One entry of a ranked configuration list.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedConfiguration {
    pub configuration: CpConfiguration,
    /// Lexicographic rank among all configurations.
    pub rank: u64,
    pub probability: f64,
    /// 1-based position in the posterior ordering divided by the total count.
    pub percentile: f64,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    log_evidence: f64,
    rank: u64,
}

// Better candidates compare as smaller, so a max-heap keeps the worst on top.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .log_evidence
            .total_cmp(&self.log_evidence)
            .then(self.rank.cmp(&other.rank))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

#[derive(Clone, Debug)]
struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, log_evidence: f64, rank: u64) {
        if self.k == 0 {
            return;
        }
        let cand = Candidate { log_evidence, rank };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if cand < *self.heap.peek().expect("non-empty") {
            self.heap.pop();
            self.heap.push(cand);
        }
    }

    fn merge(&mut self, other: &TopK) {
        for c in other.heap.iter() {
            self.offer(c.log_evidence, c.rank);
        }
    }

    fn into_sorted(self) -> Vec<Candidate> {
        self.heap.into_sorted_vec()
    }
}

fn ranked(
    cands: Vec<Candidate>,
    log_sum: f64,
    total: u64,
    n_points: usize,
    m: usize,
) -> Vec<RankedConfiguration> {
    cands
        .into_iter()
        .enumerate()
        .map(|(pos, c)| RankedConfiguration {
            configuration: unrank(c.rank, n_points, m).expect("valid rank"),
            rank: c.rank,
            probability: (c.log_evidence - log_sum).exp(),
            percentile: (pos + 1) as f64 / total as f64,
        })
        .collect()
}

/// The `k` most probable configurations, best first; ties go to the
/// lexicographically smaller configuration.
pub fn top_configurations(post: &CpPosterior, k: usize) -> Vec<RankedConfiguration> {
    let mut top = TopK::new(k.min(post.log_evidence.len()));
    for (rank, &le) in post.log_evidence.iter().enumerate() {
        top.offer(le, rank as u64);
    }
    ranked(top.into_sorted(), post.log_sum, post.count(), post.grid.len(), post.m)
}

/// What a streaming analysis should produce besides the normalization.
#[derive(Clone, Debug)]
pub struct AnalysisRequest {
    pub m: usize,
    pub top_k: usize,
    pub marginals: bool,
    /// Evaluation times of the fit; `None` skips the fit.
    pub fit_times: Option<Vec<f64>>,
    pub band_multiplier: f64,
}

impl AnalysisRequest {
    pub fn new(m: usize) -> Self {
        AnalysisRequest {
            m,
            top_k: 10,
            marginals: true,
            fit_times: None,
            band_multiplier: DEFAULT_BAND_MULTIPLIER,
        }
    }
}

/// Single-pass summary of a posterior that is never stored per configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub m: usize,
    pub n_points: usize,
    pub count: u64,
    /// Log of the uniform-prior model evidence.
    pub log_z: f64,
    pub marginals: Vec<MarginalPdf>,
    pub top: Vec<RankedConfiguration>,
    pub fit: Option<SegmentFit>,
}

impl Analysis {
    pub fn count_exact(&self) -> BigUint {
        BigUint::from(self.count)
    }

    pub fn map_configuration(&self) -> Option<&RankedConfiguration> {
        self.top.first()
    }
}

struct ChunkSummary {
    lse: LogSumExp,
    marginal: Vec<f64>,
    fit: Option<FitMoments>,
    top: TopK,
}

impl ChunkSummary {
    // Accumulators are held relative to exp(lse.max()).
    fn rescale(&mut self, factor: f64) {
        for v in &mut self.marginal {
            *v *= factor;
        }
        if let Some(f) = &mut self.fit {
            f.scale(factor);
        }
    }
}

/// Enumerates all configurations once, accumulating normalization,
/// marginals, top-k and fit moments in log-scaled form.
pub fn analyze(grid: &AnalysisGrid, req: &AnalysisRequest, opts: &Enumeration) -> Result<Analysis> {
    let m = req.m;
    let n = grid.len();
    let total = opts.admit(grid, m)?;
    if let Some(times) = &req.fit_times {
        check_fit_dof(grid, m)?;
        check_eval_times(times)?;
    }
    let track_marginals = req.marginals && m > 0;
    let fit_times = req.fit_times.as_deref();
    let top_k = req.top_k.min(total as usize);

    let table = segment_table(grid, total);
    let parts = opts.run(total, |start, end| {
        let mut summary = ChunkSummary {
            lse: LogSumExp::new(),
            marginal: if track_marginals { vec![0.0; m * n] } else { Vec::new() },
            fit: fit_times.map(|t| FitMoments::new(t.len())),
            top: TopK::new(top_k),
        };
        let mut pred = fit_times.map(|t| Prediction::new(m, n, t.len()));
        walk_chunk(grid, table.as_ref(), m, start, end, |rank, config, eval| {
            let le = eval.current_log_evidence();
            summary.top.offer(le, rank);
            let old_max = summary.lse.max();
            summary.lse.add(le);
            let new_max = summary.lse.max();
            if new_max > old_max && old_max > f64::NEG_INFINITY {
                summary.rescale((old_max - new_max).exp());
            }
            let w = (le - new_max).exp();
            if track_marginals {
                for (j, &idx) in config.iter().enumerate() {
                    summary.marginal[j * n + idx] += w;
                }
            }
            if let (Some(pred), Some(fit), Some(times)) = (&mut pred, &mut summary.fit, fit_times) {
                if w < FIT_WEIGHT_CUTOFF {
                    return;
                }
                pred.compute(eval, times);
                fit.add(w, &pred.fit, &pred.var, pred.var_scale);
            }
        });
        summary
    });

    let mut lse = LogSumExp::new();
    for p in &parts {
        lse.merge(&p.lse);
    }
    let log_sum = lse.value();
    if !log_sum.is_finite() {
        return Err(Error::InvalidParameter(
            "posterior normalization is not finite".into(),
        ));
    }
    let mut marginal = vec![0.0; if track_marginals { m * n } else { 0 }];
    let mut fit = fit_times.map(|t| FitMoments::new(t.len()));
    let mut top = TopK::new(top_k);
    for p in &parts {
        // Bring the chunk's relative accumulators onto the global normalization.
        let factor = (p.lse.max() - log_sum).exp();
        for (t, v) in marginal.iter_mut().zip(&p.marginal) {
            *t += v * factor;
        }
        if let (Some(total), Some(part)) = (&mut fit, &p.fit) {
            let mut part = part.clone();
            part.scale(factor);
            total.merge(&part);
        }
        top.merge(&p.top);
    }

    Ok(Analysis {
        m,
        n_points: n,
        count: total,
        log_z: log_sum - (total as f64).ln(),
        marginals: if track_marginals {
            marginal
                .chunks(n)
                .enumerate()
                .map(|(j, mass)| MarginalPdf {
                    ordinal: j + 1,
                    mass: mass.to_vec(),
                })
                .collect()
        } else {
            Vec::new()
        },
        top: ranked(top.into_sorted(), log_sum, total, n, m),
        fit: fit.map(|f| f.finish(fit_times.unwrap_or_default(), req.band_multiplier)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knee(n: usize, k: usize) -> AnalysisGrid {
        let values = (0..n)
            .map(|i| {
                if i <= k {
                    0.2 + 0.01 * i as f64
                } else {
                    0.2 + 0.01 * k as f64 + 0.05 * (i - k) as f64
                }
            })
            .collect();
        AnalysisGrid::indexed(values).unwrap()
    }

    #[test]
    fn chunks_cover_all_ranks() {
        for total in [1u64, 5, 4096, 4097, 10_000_000] {
            let chunks = chunk_ranges(total);
            assert_eq!(chunks[0].0, 0);
            assert_eq!(chunks.last().unwrap().1, total);
            assert!(chunks.windows(2).all(|w| w[0].1 == w[1].0));
        }
    }

    #[test]
    fn noiseless_knee_is_map() {
        let grid = knee(15, 6);
        let post = posterior(&grid, 1, &Enumeration::default()).unwrap();
        assert_eq!(post.map_configuration().indices(), &[6]);
        let top = top_configurations(&post, 1);
        assert_eq!(top[0].configuration.indices(), &[6]);
    }

    #[test]
    fn budget_refusal() {
        let grid = knee(40, 20);
        let opts = Enumeration {
            workers: Some(1),
            budget: 100,
        };
        assert!(matches!(posterior(&grid, 2, &opts), Err(Error::BudgetExceeded { .. })));
        assert!(matches!(
            posterior(&grid, 38, &opts),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn fit_refuses_without_variance_dof() {
        let grid = knee(6, 3);
        let post = posterior(&grid, 2, &Enumeration::default()).unwrap();
        assert!(segment_fit(&post, grid.times(), 3.0, &Enumeration::default()).is_err());
    }

    #[test]
    fn streaming_matches_dense() {
        let values: Vec<f64> = (0..14).map(|i| ((i * 7) % 5) as f64 * 0.1 + 0.03 * i as f64).collect();
        let grid = AnalysisGrid::indexed(values).unwrap();
        let opts = Enumeration::with_workers(1);
        let post = posterior(&grid, 2, &opts).unwrap();
        let mut req = AnalysisRequest::new(2);
        req.top_k = 5;
        req.fit_times = Some(grid.times().to_vec());
        let stream = analyze(&grid, &req, &opts).unwrap();
        assert!((stream.log_z - post.log_z()).abs() < 1e-12);
        let dense_marg = marginal_pdfs(&post, &opts);
        for (a, b) in stream.marginals.iter().zip(&dense_marg) {
            for (x, y) in a.mass.iter().zip(&b.mass) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let fit = segment_fit(&post, grid.times(), 3.0, &opts).unwrap();
        let sfit = stream.fit.unwrap();
        for k in 0..fit.mean.len() {
            assert!((fit.mean[k] - sfit.mean[k]).abs() < 1e-12);
            assert!((fit.sigma[k] - sfit.sigma[k]).abs() < 1e-12);
        }
        assert_eq!(stream.top, top_configurations(&post, 5));
    }
}
