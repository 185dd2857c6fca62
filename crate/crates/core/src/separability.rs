//! Separability certificates for attention-based node selection.
//!
//! A point is strictly separable from the rest of a set exactly when it lies
//! outside their convex hull; both sides are decided with a small dense
//! simplex solver so they can be cross-checked.

use serde::{Deserialize, Serialize};

use crate::attention::Gatv2Score;
use crate::error::{check_dim, usage, Error, Result};
use crate::mlp::{fit, Activation, FitBudget, FitReport, MlpSpec, Sample};
use crate::numkit::{dist, dot, norm, softmax, Matrix, Rng};

/// Pivot and feasibility tolerance of the simplex solver.
pub const LP_TOLERANCE: f64 = 1e-9;
/// Separation margins at or below this are treated as inseparable.
pub const MARGIN_BAND: f64 = 1e-6;
/// Selection error used when a certificate is built without an explicit one.
pub const DEFAULT_EPSILON: f64 = 1e-4;

const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective · x` subject to the constraints and `x ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    pub solution: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        *self.rows[r].last().expect("tableau rows are non-empty")
    }

    fn value(&self, cost: &[f64]) -> f64 {
        (0..self.rows.len())
            .map(|r| cost[self.basis[r]] * self.rhs(r))
            .sum()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Primal simplex with Bland's rule over the `allowed` columns.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<Outcome> {
        let cols = cost.len();
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Internal("simplex exceeded its pivot budget".into()));
            }
            let entering = (0..cols).find(|&j| {
                allowed[j] && !self.basis.contains(&j) && {
                    let reduced = cost[j]
                        - (0..self.rows.len())
                            .map(|r| cost[self.basis[r]] * self.rows[r][j])
                            .sum::<f64>();
                    reduced > LP_TOLERANCE
                }
            });
            let Some(e) = entering else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][e];
                if a <= LP_TOLERANCE {
                    continue;
                }
                let ratio = self.rhs(r) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, best)) => {
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && self.basis[r] < self.basis[br])
                        {
                            Some((r, ratio))
                        } else {
                            Some((br, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(r, e);
        }
    }
}

/// Two-phase primal simplex (Bland's rule, tolerance [`LP_TOLERANCE`]).
/// Deterministic: identical inputs give identical pivots.
pub fn solve_lp(problem: &LpProblem) -> Result<LpResult> {
    let n = problem.num_vars();
    for c in &problem.constraints {
        check_dim("LP constraint width", n, c.coeffs.len())?;
    }
    let m = problem.constraints.len();
    let mut slack_cols = 0;
    let mut art_cols = 0;
    let normalized: Vec<(Vec<f64>, Relation, f64)> = problem
        .constraints
        .iter()
        .map(|c| {
            let (coeffs, rel, rhs) = if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            };
            match rel {
                Relation::Le => slack_cols += 1,
                Relation::Ge => {
                    slack_cols += 1;
                    art_cols += 1;
                }
                Relation::Eq => art_cols += 1,
            }
            (coeffs, rel, rhs)
        })
        .collect();

    let total = n + slack_cols + art_cols;
    let art_start = n + slack_cols;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut s, mut a) = (n, art_start);
    for (coeffs, rel, rhs) in normalized {
        let mut row = vec![0.0; total + 1];
        row[..n].copy_from_slice(&coeffs);
        row[total] = rhs;
        match rel {
            Relation::Le => {
                row[s] = 1.0;
                basis.push(s);
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                row[a] = 1.0;
                basis.push(a);
                s += 1;
                a += 1;
            }
            Relation::Eq => {
                row[a] = 1.0;
                basis.push(a);
                a += 1;
            }
        }
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis,
        pivots: 0,
    };

    let phase1: Vec<f64> = (0..total)
        .map(|j| if j >= art_start { -1.0 } else { 0.0 })
        .collect();
    let everything = vec![true; total];
    t.optimize(&phase1, &everything)?;
    if t.value(&phase1) < -LP_TOLERANCE {
        return Ok(LpResult {
            status: LpStatus::Infeasible,
            solution: vec![0.0; n],
            objective: f64::NAN,
            pivots: t.pivots,
        });
    }
    for r in 0..m {
        if t.basis[r] >= art_start {
            if let Some(c) = (0..art_start).find(|&c| t.rows[r][c].abs() > LP_TOLERANCE) {
                t.pivot(r, c);
            }
        }
    }

    let mut phase2 = vec![0.0; total];
    phase2[..n].copy_from_slice(&problem.objective);
    let allowed: Vec<bool> = (0..total).map(|j| j < art_start).collect();
    let outcome = t.optimize(&phase2, &allowed)?;
    let mut solution = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            solution[t.basis[r]] = t.rhs(r);
        }
    }
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
    };
    Ok(LpResult {
        status,
        objective: dot(&problem.objective, &solution),
        solution,
        pivots: t.pivots,
    })
}

/// Max-margin direction `w` with `‖w‖_∞ ≤ 1` maximising
/// `min_{j≠i} w · (x_i − x_j)`. The margin is clamped at 0.
pub fn max_margin(i: usize, x: &Matrix) -> Result<(Vec<f64>, f64)> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(usage("strict separation needs at least two points"));
    }
    if i >= n {
        return Err(usage(format!("point index {i} out of range for {n} points")));
    }
    // variables: w⁺ (d), w⁻ (d), t
    let mut objective = vec![0.0; 2 * d + 1];
    objective[2 * d] = 1.0;
    let mut lp = LpProblem::new(objective);
    let xi = x.row(i);
    for j in (0..n).filter(|&j| j != i) {
        let mut row = vec![0.0; 2 * d + 1];
        for (k, (a, b)) in xi.iter().zip(x.row(j)).enumerate() {
            row[k] = a - b;
            row[d + k] = b - a;
        }
        row[2 * d] = -1.0;
        lp.constrain(row, Relation::Ge, 0.0);
    }
    for k in 0..2 * d {
        let mut row = vec![0.0; 2 * d + 1];
        row[k] = 1.0;
        lp.constrain(row, Relation::Le, 1.0);
    }
    let res = solve_lp(&lp)?;
    if res.status != LpStatus::Optimal {
        return Err(Error::Internal(format!(
            "separation LP for point {i} ended {:?}",
            res.status
        )));
    }
    let w: Vec<f64> = (0..d).map(|k| res.solution[k] - res.solution[d + k]).collect();
    Ok((w, res.solution[2 * d]))
}

/// A separating direction and its margin `min_{j≠i} w · (x_i − x_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub direction: Vec<f64>,
    pub margin: f64,
}

/// The max-margin box-normalised direction, or `None` when the margin is
/// within [`MARGIN_BAND`].
pub fn strict_separation(i: usize, x: &Matrix) -> Result<Option<Separation>> {
    let (w, t) = max_margin(i, x)?;
    Ok((t > MARGIN_BAND).then_some(Separation {
        direction: w,
        margin: t,
    }))
}

/// Whether `p` is a convex combination of the rows of `points`.
pub fn hull_member(p: &[f64], points: &Matrix) -> Result<bool> {
    let (k, d) = points.shape();
    if k == 0 {
        return Err(usage("hull_member needs at least one point"));
    }
    check_dim("hull_member point width", d, p.len())?;
    let mut lp = LpProblem::new(vec![0.0; k]);
    for c in 0..d {
        let row: Vec<f64> = (0..k).map(|j| points.get(j, c)).collect();
        lp.constrain(row, Relation::Eq, p[c]);
    }
    lp.constrain(vec![1.0; k], Relation::Eq, 1.0);
    Ok(solve_lp(&lp)?.status == LpStatus::Optimal)
}

/// Per-node selection directions `v'_i` (unit Euclidean norm) with margins
/// `δ_i = min_{j≠i} v'_i · (x_i − x_j)`, and an amplification `c` such
/// that `softmax_j(c · x_j · v'_i)` puts weight at least `1 − ε` on `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityCertificate {
    pub directions: Matrix,
    pub margins: Vec<f64>,
    pub delta: f64,
    pub amplification: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub seed: Option<u64>,
}

impl SeparabilityCertificate {
    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        self.directions.row(i)
    }

    /// Same certificate with `c` recomputed for a new `ε`.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.amplification = amplification_for(self.delta, epsilon, self.len())?;
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_amplification(mut self, c: f64) -> Self {
        self.amplification = c;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CertificateOutcome {
    Certified(SeparabilityCertificate),
    Failed {
        inseparable: Vec<usize>,
        /// Box-normalised LP margin for every point.
        margins: Vec<f64>,
    },
}

impl CertificateOutcome {
    pub fn certificate(self) -> Option<SeparabilityCertificate> {
        match self {
            CertificateOutcome::Certified(c) => Some(c),
            CertificateOutcome::Failed { .. } => None,
        }
    }
}

/// Runs [`strict_separation`] for every point.
pub fn vdelta_certificate(x: &Matrix) -> Result<CertificateOutcome> {
    let (n, d) = x.shape();
    let mut directions = Matrix::zeros(n, d);
    let mut margins = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    let mut inseparable = Vec::new();
    for i in 0..n {
        let (w, t) = max_margin(i, x)?;
        raw.push(t);
        if t <= MARGIN_BAND {
            inseparable.push(i);
            continue;
        }
        let len = norm(&w);
        for (o, v) in directions.row_mut(i).iter_mut().zip(&w) {
            *o = v / len;
        }
        let dir = directions.row(i);
        let xi = dot(dir, x.row(i));
        let margin = (0..n)
            .filter(|&j| j != i)
            .map(|j| xi - dot(dir, x.row(j)))
            .fold(f64::INFINITY, f64::min);
        margins.push(margin);
    }
    if !inseparable.is_empty() {
        return Ok(CertificateOutcome::Failed {
            inseparable,
            margins: raw,
        });
    }
    let delta = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CertificateOutcome::Certified(SeparabilityCertificate {
        directions,
        amplification: amplification_for(delta, DEFAULT_EPSILON, n)?,
        margins,
        delta,
        epsilon: DEFAULT_EPSILON,
        tolerance: LP_TOLERANCE,
        seed: None,
    }))
}

/// Smallest `c` with `e^{cδ} / (e^{cδ} + n − 1) ≥ 1 − ε`.
pub fn amplification_for(delta: f64, epsilon: f64, n: usize) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(usage(format!("amplification needs δ > 0, got {delta}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(usage(format!("amplification needs 0 < ε < 1, got {epsilon}")));
    }
    if n < 2 {
        return Err(usage("amplification needs n ≥ 2"));
    }
    Ok(((n - 1) as f64 * (1.0 - epsilon) / epsilon).ln() / delta)
}

/// Lower bound on the selection weight for margin `delta`.
pub fn selection_bound(c: f64, delta: f64, n: usize) -> f64 {
    1.0 / (1.0 + (n as f64 - 1.0) * (-c * delta).exp())
}

/// `softmax_j(c · x_j · v'_i)` over all nodes.
pub fn selection_weights(
    x: &Matrix,
    cert: &SeparabilityCertificate,
    target: usize,
) -> Result<Vec<f64>> {
    check_dim("selection nodes", cert.len(), x.rows())?;
    if target >= x.rows() {
        return Err(usage(format!("target {target} out of range")));
    }
    let v = cert.direction(target);
    let scores: Vec<f64> = x
        .row_iter()
        .map(|row| cert.amplification * dot(row, v))
        .collect();
    softmax(&scores)
}

/// Smallest distance between points of different sets.
pub fn delta_nonlin_sep(sets: &[Matrix]) -> Result<f64> {
    if sets.len() < 2 {
        return Err(usage("need at least two sets"));
    }
    let d = sets[0].cols();
    for s in sets {
        if s.rows() == 0 {
            return Err(usage("every set must be non-empty"));
        }
        check_dim("set feature width", d, s.cols())?;
    }
    let mut best = f64::INFINITY;
    for (a, sa) in sets.iter().enumerate() {
        for sb in &sets[a + 1..] {
            for p in sa.row_iter() {
                for q in sb.row_iter() {
                    best = best.min(dist(p, q));
                }
            }
        }
    }
    Ok(best)
}

/// Training settings for [`train_gatv2_selector`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub hidden: usize,
    pub slope: f64,
    /// Training points drawn per set, in addition to the set's own points.
    pub samples_per_set: usize,
    /// Jitter radius around each set point for the drawn samples.
    pub jitter: f64,
    pub budget: FitBudget,
    pub seed: u64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            slope: 0.2,
            samples_per_set: 64,
            jitter: 0.0,
            budget: FitBudget {
                max_epochs: 3000,
                learning_rate: 1e-2,
                final_lr_fraction: 0.01,
                batch_size: 0,
                target_sup_error: Some(0.1),
                eval_every: 25,
            },
            seed: 7,
        }
    }
}

/// Value the selector is fitted to on the target set (0 elsewhere).
pub const TARGET_LEVEL: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gatv2Selector {
    /// Unamplified score; only the second (candidate) half of `W` is used.
    pub score: Gatv2Score,
    pub target: usize,
    /// `min f(target set) − max f(other sets)` on the validation points.
    pub achieved_gap: f64,
    pub requested_gap: f64,
    pub fit: FitReport,
}

impl Gatv2Selector {
    pub fn reached_gap(&self) -> bool {
        self.achieved_gap >= self.requested_gap
    }

    /// Amplification giving selection weight at least `weight` among `n`
    /// candidates, one from each gap-separated group.
    pub fn amplification_for_weight(&self, weight: f64, n: usize) -> Result<f64> {
        if self.achieved_gap <= 0.0 {
            return Err(usage("selector has no positive gap"));
        }
        amplification_for(self.achieved_gap, 1.0 - weight, n)
    }

    /// `softmax_j(c · α(·, x_j))` over the rows of `x`.
    pub fn weights(&self, x: &Matrix, c: f64) -> Result<Vec<f64>> {
        let d = self.score.input_dim();
        check_dim("selector candidate width", d, x.cols())?;
        let zero = vec![0.0; d];
        let scores: Vec<f64> = x
            .row_iter()
            .map(|row| c * self.score.eval(&zero, row))
            .collect();
        softmax(&scores)
    }
}

/// Fits a one-hidden-layer LeakyReLU network to 1.5 on the target set and 0
/// on the others, then reads it as a GATv2 score of the candidate node:
/// `a` = output weights, `W = [0 | W₁]`, `b = b₁`.
pub fn train_gatv2_selector(
    sets: &[Matrix],
    target: usize,
    gap: f64,
    cfg: &SelectorConfig,
) -> Result<Gatv2Selector> {
    let delta = delta_nonlin_sep(sets)?;
    if delta <= 0.0 {
        return Err(usage("sets overlap, so no selector can separate them"));
    }
    if target >= sets.len() {
        return Err(usage(format!("target set {target} out of range")));
    }
    let d = sets[0].cols();
    let mut rng = Rng::derive(cfg.seed, 0x5e1);
    let jittered = |s: &Matrix, rng: &mut Rng| -> Vec<Vec<f64>> {
        (0..cfg.samples_per_set)
            .map(|_| {
                let base = s.row(rng.below(s.rows()));
                base.iter()
                    .map(|v| v + cfg.jitter * rng.uniform(-1.0, 1.0))
                    .collect()
            })
            .collect()
    };
    let mut train: Vec<Sample> = Vec::new();
    let mut holdout: Vec<Sample> = Vec::new();
    for (k, s) in sets.iter().enumerate() {
        let level = if k == target { TARGET_LEVEL } else { 0.0 };
        for p in s.to_rows().into_iter().chain(jittered(s, &mut rng)) {
            train.push((p, vec![level]));
        }
        for p in jittered(s, &mut rng) {
            holdout.push((p, vec![level]));
        }
    }
    let spec = MlpSpec::new(vec![d, cfg.hidden, 1], Activation::LeakyRelu { slope: cfg.slope })?;
    let (params, report) = fit(&spec, &train, &holdout, &cfg.budget, &mut rng)?;

    let hidden = &params.layers()[0];
    let out = &params.layers()[1];
    let mut w = Matrix::zeros(cfg.hidden, 2 * d);
    for h in 0..cfg.hidden {
        w.row_mut(h)[d..].copy_from_slice(hidden.weights.row(h));
    }
    let score = Gatv2Score::new(out.weights.row(0).to_vec(), w, hidden.bias.clone(), cfg.slope)?;

    let zero = vec![0.0; d];
    let mut lo_target = f64::INFINITY;
    let mut hi_other = f64::NEG_INFINITY;
    for (k, s) in sets.iter().enumerate() {
        for p in s.row_iter() {
            let v = score.eval(&zero, p);
            if k == target {
                lo_target = lo_target.min(v);
            } else {
                hi_other = hi_other.max(v);
            }
        }
    }
    for (p, y) in &holdout {
        let v = score.eval(&zero, p);
        if y[0] > 0.0 {
            lo_target = lo_target.min(v);
        } else {
            hi_other = hi_other.max(v);
        }
    }
    Ok(Gatv2Selector {
        score,
        target,
        achieved_gap: lo_target - hi_other,
        requested_gap: gap,
        fit: report,
    })
}

/// Rejection-samples `n` points in `R^d` with norms in `[0.8, 0.95]` until
/// the certificate margin reaches `min_delta`.
pub fn random_certified_instance(
    n: usize,
    d: usize,
    min_delta: f64,
    max_tries: usize,
    rng: &mut Rng,
) -> Result<(Matrix, SeparabilityCertificate)> {
    if n < 2 || d == 0 {
        return Err(usage("certified instances need n ≥ 2 and d ≥ 1"));
    }
    for _ in 0..max_tries {
        let mut x = Matrix::zeros(n, d);
        for i in 0..n {
            let dir = rng.normal_vec(d);
            let scale = rng.uniform(0.8, 0.95) / norm(&dir);
            x.row_mut(i)
                .iter_mut()
                .zip(&dir)
                .for_each(|(o, v)| *o = scale * v);
        }
        if let CertificateOutcome::Certified(cert) = vdelta_certificate(&x)? {
            if cert.delta >= min_delta {
                return Ok((x, cert));
            }
        }
    }
    Err(usage(format!(
        "no instance with margin ≥ {min_delta} in {max_tries} draws (n = {n}, d = {d})"
    )))
}

/// Three clusters on a line; the middle one lies in the convex hull of the
/// outer two and is the selection target.
pub fn three_cluster_instance(points_per_cluster: usize, spread: f64) -> Vec<Matrix> {
    [-1.0, 0.0, 1.0]
        .iter()
        .map(|&centre| {
            Matrix::from_fn(points_per_cluster, 1, |r, _| {
                if points_per_cluster == 1 {
                    centre
                } else {
                    centre - spread + 2.0 * spread * r as f64 / (points_per_cluster - 1) as f64
                }
            })
        })
        .collect()
}


#[cfg(test)]
mod proptests {
    use super::{max_margin, solve_lp, LpProblem, Relation};
    use crate::numkit::{gaussian_matrix, Rng};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lp_is_deterministic(seed in 0u64..100_000) {
            let mut rng = Rng::new(seed);
            let x = gaussian_matrix(6, 3, &mut rng).unwrap();
            prop_assert_eq!(max_margin(2, &x).unwrap(), max_margin(2, &x).unwrap());
            let mut lp = LpProblem::new(rng.normal_vec(3));
            lp.constrain(rng.normal_vec(3), Relation::Le, 1.0)
                .constrain(vec![1.0, 1.0, 1.0], Relation::Le, 2.0);
            prop_assert_eq!(solve_lp(&lp).unwrap(), solve_lp(&lp).unwrap());
        }
    }
}
