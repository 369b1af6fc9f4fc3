//! Marginal likelihood of a piecewise-linear trend for one change-point
//! configuration.
//!
//! The design ordinates at the `M = m + 2` knots enter through hat basis
//! functions, so every row of the `N x M` design matrix `G` has at most two
//! adjacent non-zeros. With a flat prior on the ordinates and a Jeffreys prior
//! on the noise scale the evidence integrates in closed form:
//!
//! ```text
//! log p = -1/2 log det(G'G) - k log(rho) + log Gamma(k) - k log(pi) - log 2,   k = (N - M) / 2
//! ```
//!
//! where `rho` is the residual sum of squares of the least-squares fit. The
//! last two terms depend only on `(N, M)` and are kept so that evidences stay
//! comparable across different numbers of change points.
//!
//! `G` is triangularized row by row with Givens rotations. Because the rows
//! arrive in time order, `R` stays upper bidiagonal and each row costs at most
//! two rotations, i.e. `O(N)` per configuration with `O(M)` state. The state
//! after the row of knot `j` only depends on the first `j` knots, so it is
//! cached and reused across lexicographically adjacent configurations.

use std::f64::consts::{LN_2, PI};

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

use super::combinatorics::CpConfiguration;

/// Relative floor applied to the residual sum of squares.
pub const RHO_FLOOR_RELATIVE: f64 = 1e-12;

/// Time stamps and values of the series under analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisGrid {
    times: Vec<f64>,
    values: Vec<f64>,
    // Values minus their mean. The hat basis spans constants, so factoring
    // these instead changes nothing but the rounding, which no longer
    // depends on the level of the series.
    centered: Vec<f64>,
    offset: f64,
    rho_floor: f64,
}

impl AnalysisGrid {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} time stamps but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 3 {
            return Err(Error::SeriesTooShort {
                len: times.len(),
                needed: 3,
            });
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "time stamps must be strictly increasing".into(),
            ));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite grid entry".into()));
        }
        let rho_floor = residual_floor(&values);
        let offset = values.iter().sum::<f64>() / values.len() as f64;
        let centered = values.iter().map(|v| v - offset).collect();
        Ok(AnalysisGrid {
            times,
            values,
            centered,
            offset,
            rho_floor,
        })
    }

    /// Grid with time stamps `0, 1, ..., N-1`.
    pub fn indexed(values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|i| i as f64).collect();
        Self::new(times, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn centered(&self) -> &[f64] {
        &self.centered
    }

    /// Lower bound applied to the residual sum of squares.
    pub fn rho_floor(&self) -> f64 {
        self.rho_floor
    }
}

// Scaled by the centered sum of squares so the floor follows affine maps of the values.
fn residual_floor(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let centered: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let raw: f64 = values.iter().map(|v| v * v).sum();
    (RHO_FLOOR_RELATIVE * centered)
        .max(RHO_FLOOR_RELATIVE * RHO_FLOOR_RELATIVE * raw)
        .max(f64::MIN_POSITIVE)
}

/// `log Gamma(k) - k log(pi) - log 2` with `k = (N - M) / 2`.
pub fn evidence_constant(n_points: usize, n_knots: usize) -> f64 {
    let k = (n_points - n_knots) as f64 / 2.0;
    ln_gamma(k) - k * PI.ln() - LN_2
}

/// Log evidence of a single configuration.
pub fn log_evidence(grid: &AnalysisGrid, config: &CpConfiguration) -> Result<f64> {
    CpConfiguration::new(config.indices().to_vec(), grid.len())?;
    let mut eval = EvidenceEvaluator::new(grid, config.len())?;
    Ok(eval.evaluate(config.indices()))
}

/// QR summary of the rows strictly inside one segment, in the segment's own
/// two columns: upper triangle `[[p, q], [0, s]]`, rotated right-hand side
/// `(u, v)` and the residual sum of squares left over.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct SegmentBlock {
    p: f64,
    q: f64,
    s: f64,
    u: f64,
    v: f64,
    rss: f64,
}

impl SegmentBlock {
    fn compute(grid: &AnalysisGrid, left: usize, right: usize) -> Self {
        let times = grid.times();
        let values = grid.centered();
        let (ta, tb) = (times[left], times[right]);
        let span = tb - ta;
        let mut diag = [0.0; 2];
        let mut sup = [0.0; 2];
        let mut rhs = [0.0; 2];
        let mut rss = 0.0;
        for i in left + 1..right {
            let t = times[i];
            let w_left = (tb - t) / span;
            let w_right = (t - ta) / span;
            absorb_row(&mut diag, &mut sup, &mut rhs, &mut rss, 0, w_left, w_right, values[i]);
        }
        SegmentBlock {
            p: diag[0],
            q: sup[0],
            s: diag[1],
            u: rhs[0],
            v: rhs[1],
            rss,
        }
    }
}

/// Segment blocks for every knot pair of a grid.
///
/// Worth building when the number of configurations dwarfs `N^2`; every
/// configuration then costs `O(M)` instead of `O(N)`.
pub struct SegmentTable {
    n_points: usize,
    blocks: Vec<SegmentBlock>,
}

/// Grids longer than this never get a table.
pub const SEGMENT_TABLE_MAX_POINTS: usize = 512;

impl SegmentTable {
    pub fn new(grid: &AnalysisGrid) -> Self {
        let n = grid.len();
        let mut blocks = vec![SegmentBlock::default(); n * n];
        for left in 0..n {
            for right in left + 1..n {
                blocks[left * n + right] = SegmentBlock::compute(grid, left, right);
            }
        }
        SegmentTable { n_points: n, blocks }
    }

    /// Whether enumerating `count` configurations justifies a table.
    pub fn worthwhile(n_points: usize, count: u64) -> bool {
        n_points <= SEGMENT_TABLE_MAX_POINTS && count as f64 > (n_points * n_points) as f64 / 4.0
    }

    fn get(&self, left: usize, right: usize) -> SegmentBlock {
        self.blocks[left * self.n_points + right]
    }
}

/// Offsets into one cached QR state: `[diag | sup | rhs | rss]`.
#[derive(Clone, Copy)]
struct Layout {
    knots: usize,
}

impl Layout {
    fn stride(self) -> usize {
        3 * self.knots + 1
    }
}

/// Reusable evidence calculator for a fixed grid and change-point count.
///
/// The factor is assembled knot by knot: each knot contributes a unit row,
/// each segment its [`SegmentBlock`]. One state is kept per knot level, so
/// consecutive calls that share a prefix of change points only redo the
/// levels after the first changed knot.
pub struct EvidenceEvaluator<'g> {
    grid: &'g AnalysisGrid,
    table: Option<&'g SegmentTable>,
    layout: Layout,
    constant: f64,
    half_dof: f64,
    knots: Vec<usize>,
    states: Vec<f64>,
    valid_levels: usize,
    // Diagonal and first off-diagonal of (G'G)^-1, filled by `predict_into`.
    inv_diag: Vec<f64>,
    inv_off: Vec<f64>,
}

impl<'g> EvidenceEvaluator<'g> {
    pub fn new(grid: &'g AnalysisGrid, m: usize) -> Result<Self> {
        let n = grid.len();
        let n_knots = m + 2;
        if n <= n_knots {
            return Err(Error::SeriesTooShort {
                len: n,
                needed: n_knots + 1,
            });
        }
        let layout = Layout { knots: n_knots };
        let mut knots = vec![0; n_knots];
        knots[n_knots - 1] = n - 1;
        let mut states = vec![0.0; n_knots * layout.stride()];
        // Level 0 holds the unit row of the first knot.
        states[0] = 1.0;
        states[2 * n_knots] = grid.centered()[0];
        Ok(EvidenceEvaluator {
            grid,
            table: None,
            layout,
            constant: evidence_constant(n, n_knots),
            half_dof: (n - n_knots) as f64 / 2.0,
            knots,
            states,
            valid_levels: 1,
            inv_diag: vec![0.0; n_knots],
            inv_off: vec![0.0; n_knots],
        })
    }

    /// Evaluator reading segment blocks from a precomputed table of the same grid.
    pub fn with_table(grid: &'g AnalysisGrid, m: usize, table: &'g SegmentTable) -> Result<Self> {
        if table.n_points != grid.len() {
            return Err(Error::InvalidParameter("segment table built for another grid".into()));
        }
        let mut eval = Self::new(grid, m)?;
        eval.table = Some(table);
        Ok(eval)
    }

    pub fn grid(&self) -> &AnalysisGrid {
        self.grid
    }

    /// Number of change points this evaluator was built for.
    pub fn change_points(&self) -> usize {
        self.layout.knots - 2
    }

    /// Log evidence of the configuration given by its interior indices.
    ///
    /// The indices must form a valid configuration for the grid.
    pub fn evaluate(&mut self, config: &[usize]) -> f64 {
        self.solve(config);
        self.current_log_evidence()
    }

    /// Assembles the factor; afterwards the final state describes `config`.
    pub(crate) fn solve(&mut self, config: &[usize]) {
        let n_knots = self.layout.knots;
        debug_assert_eq!(config.len() + 2, n_knots);
        let mut first_changed = n_knots - 1;
        for (pos, &c) in config.iter().enumerate() {
            if self.knots[pos + 1] != c {
                first_changed = pos + 1;
                break;
            }
        }
        // Level j is valid iff knots[0..=j] are unchanged.
        let mut level = self.valid_levels.min(first_changed);
        self.knots[1..n_knots - 1].copy_from_slice(config);
        while level < n_knots {
            self.extend_level(level);
            level += 1;
        }
        self.valid_levels = n_knots;
    }

    // State `level` = state `level - 1` plus the unit row of knot `level`
    // and the block of the segment ending there.
    fn extend_level(&mut self, level: usize) {
        let stride = self.layout.stride();
        let n_knots = self.layout.knots;
        let left = self.knots[level - 1];
        let right = self.knots[level];
        let block = match self.table {
            Some(table) => table.get(left, right),
            None => SegmentBlock::compute(self.grid, left, right),
        };

        let (before, after) = self.states.split_at_mut(level * stride);
        let cur = &mut after[..stride];
        cur.copy_from_slice(&before[(level - 1) * stride..]);
        let (diag, rest) = cur.split_at_mut(n_knots);
        let (sup, rest) = rest.split_at_mut(n_knots);
        let (rhs, rss) = rest.split_at_mut(n_knots);
        let rss = &mut rss[0];

        diag[level] = 1.0;
        rhs[level] = self.grid.centered()[right];
        let col = level - 1;
        absorb_row(diag, sup, rhs, rss, col, block.p, block.q, block.u);
        absorb_row(diag, sup, rhs, rss, level, block.s, 0.0, block.v);
        *rss += block.rss;
    }

    fn final_state(&self) -> (&[f64], &[f64], &[f64], f64) {
        let stride = self.layout.stride();
        let n_knots = self.layout.knots;
        let s = &self.states[(n_knots - 1) * stride..];
        (
            &s[..n_knots],
            &s[n_knots..2 * n_knots],
            &s[2 * n_knots..3 * n_knots],
            s[3 * n_knots],
        )
    }

    /// Residual sum of squares after flooring.
    pub(crate) fn floored_rss(&self) -> f64 {
        self.final_state().3.max(self.grid.rho_floor())
    }

    /// `log det(G'G)` of the last solved configuration.
    pub(crate) fn log_det(&self) -> f64 {
        let (diag, ..) = self.final_state();
        2.0 * diag.iter().map(|d| d.abs().ln()).sum::<f64>()
    }

    pub(crate) fn current_log_evidence(&self) -> f64 {
        -0.5 * self.log_det() - self.half_dof * self.floored_rss().ln() + self.constant
    }

    /// Least-squares ordinates of the last solved configuration.
    pub(crate) fn ordinates_into(&self, out: &mut [f64]) {
        let (diag, sup, rhs, _) = self.final_state();
        let n_knots = self.layout.knots;
        out[n_knots - 1] = rhs[n_knots - 1] / diag[n_knots - 1];
        for j in (0..n_knots - 1).rev() {
            out[j] = (rhs[j] - sup[j] * out[j + 1]) / diag[j];
        }
        for o in out.iter_mut() {
            *o += self.grid.offset;
        }
    }

    /// Fitted value and `g(t)' (G'G)^-1 g(t)` of the last solved
    /// configuration at each evaluation time. Times must be ascending; those
    /// outside the data range extend the outermost segments linearly.
    pub(crate) fn predict_into(
        &mut self,
        eval_times: &[f64],
        ordinates: &mut [f64],
        mean_out: &mut [f64],
        leverage_out: &mut [f64],
    ) {
        self.ordinates_into(ordinates);
        let n_knots = self.layout.knots;
        {
            // Rows of R^-1 satisfy v_j = (e_j - sup_j v_{j+1}) / d_j, which gives
            // the tridiagonal part of R^-1 R^-T from the bottom up.
            let stride = self.layout.stride();
            let s = &self.states[(n_knots - 1) * stride..];
            let (diag, sup) = (&s[..n_knots], &s[n_knots..2 * n_knots]);
            let last = n_knots - 1;
            self.inv_diag[last] = 1.0 / (diag[last] * diag[last]);
            self.inv_off[last] = 0.0;
            for j in (0..last).rev() {
                let next = self.inv_diag[j + 1];
                self.inv_diag[j] = (1.0 + sup[j] * sup[j] * next) / (diag[j] * diag[j]);
                self.inv_off[j] = -sup[j] * next / diag[j];
            }
        }
        let times = self.grid.times();
        // Within a segment, in u = t - t_left, the mean is linear and the
        // leverage quadratic. Times up to and including a knot belong to the
        // segment on its left.
        let mut k = 0;
        for seg in 0..n_knots - 1 {
            let ta = times[self.knots[seg]];
            let tb = times[self.knots[seg + 1]];
            let end = if seg + 2 == n_knots {
                eval_times.len()
            } else {
                k + eval_times[k..].partition_point(|&t| t <= tb)
            };
            let inv = 1.0 / (tb - ta);
            let (ya, yb) = (ordinates[seg], ordinates[seg + 1]);
            let slope = (yb - ya) * inv;
            let (sa, sab, sb) = (self.inv_diag[seg], self.inv_off[seg], self.inv_diag[seg + 1]);
            let lin = 2.0 * (sab - sa) * inv;
            let quad = (sa - 2.0 * sab + sb) * inv * inv;
            for ((&t, mean), lev) in eval_times[k..end]
                .iter()
                .zip(&mut mean_out[k..end])
                .zip(&mut leverage_out[k..end])
            {
                let u = t - ta;
                *mean = ya + slope * u;
                *lev = sa + (lin + quad * u) * u;
            }
            k = end;
        }
    }
}

/// Rotates one design row (`a` at column `col`, `b` at `col + 1`) into the
/// bidiagonal factor; whatever is left of its right-hand side is residual.
#[allow(clippy::too_many_arguments)]
#[inline]
fn absorb_row(
    diag: &mut [f64],
    sup: &mut [f64],
    rhs: &mut [f64],
    rss: &mut f64,
    col: usize,
    a: f64,
    b: f64,
    y: f64,
) {
    let n_knots = diag.len();
    let (mut c, mut x0, mut x1, mut y) = (col, a, b, y);
    loop {
        if x0 == 0.0 {
            if x1 == 0.0 || c + 1 >= n_knots {
                *rss += y * y;
                return;
            }
            c += 1;
            x0 = x1;
            x1 = 0.0;
            continue;
        }
        let d = diag[c];
        if d == 0.0 {
            diag[c] = x0;
            sup[c] = x1;
            rhs[c] = y;
            return;
        }
        let r = (d * d + x0 * x0).sqrt();
        let cs = d / r;
        let sn = x0 / r;
        diag[c] = r;
        let s_old = sup[c];
        sup[c] = cs * s_old + sn * x1;
        let z = rhs[c];
        rhs[c] = cs * z + sn * y;
        y = cs * y - sn * z;
        x0 = cs * x1 - sn * s_old;
        x1 = 0.0;
        c += 1;
        if c >= n_knots {
            *rss += y * y;
            return;
        }
    }
}
