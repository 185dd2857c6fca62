//! Reference attention layers.
//!
//! Row convention throughout: node features are rows of `X`, and a weight
//! matrix acts on the right, so `q_i = x_i W_Q`, `k_i = x_i W_K` and
//! `v_i = x_i W_V`. The unnormalised score is
//! `α'(u, v) = (u W_Q) · (v W_K) = u W_Q W_Kᵀ vᵀ`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, usage, Result};
use crate::numkit::{
    dot, elu, gaussian_matrix, leaky_relu, norm, softmax, uniform_ball_rows, Matrix, Rng,
};

/// Query, key and value matrices of one self-attention layer.
/// `W_Q`, `W_K` are `d × d'`; `W_V` is `d × d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttnWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl AttnWeights {
    pub fn new(w_q: Matrix, w_k: Matrix, w_v: Matrix) -> Result<Self> {
        check_dim("W_Q/W_K rows", w_q.rows(), w_k.rows())?;
        check_dim("W_Q/W_K cols", w_q.cols(), w_k.cols())?;
        check_dim("W_V rows", w_q.rows(), w_v.rows())?;
        check_dim("W_V square", w_v.rows(), w_v.cols())?;
        Ok(Self { w_q, w_k, w_v })
    }

    /// Random weights with every spectral norm equal to `norm`.
    pub fn random(d: usize, d_proj: usize, norm: f64, rng: &mut Rng) -> Result<Self> {
        use crate::numkit::matrix_with_spectral_norm as m;
        Self::new(
            m(d, d_proj, norm, rng)?,
            m(d, d_proj, norm, rng)?,
            m(d, d, norm, rng)?,
        )
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn proj_dim(&self) -> usize {
        self.w_q.cols()
    }

    pub fn query(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.proj_dim()];
        self.w_q.vecmul_into(x, &mut out);
        out
    }

    pub fn key(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.proj_dim()];
        self.w_k.vecmul_into(x, &mut out);
        out
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.w_v.vecmul_into(x, &mut out);
        out
    }

    /// Unchecked `α'(u, v)`.
    #[inline]
    pub(crate) fn score(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(&self.query(u), &self.key(v))
    }
}

/// Unnormalised bilinear score `α'(u, v) = u W_Q W_Kᵀ vᵀ`.
pub fn unnorm_score(u: &[f64], v: &[f64], w: &AttnWeights) -> Result<f64> {
    check_dim("unnorm_score u", w.dim(), u.len())?;
    check_dim("unnorm_score v", w.dim(), v.len())?;
    Ok(w.score(u, v))
}

/// Full softmax self-attention: row `i` is `Σ_j softmax_j(α'(x_i, x_j)) v_j`.
pub fn self_attention(x: &Matrix, w: &AttnWeights) -> Result<Matrix> {
    check_dim("self_attention feature dim", w.dim(), x.cols())?;
    let n = x.rows();
    let keys: Vec<Vec<f64>> = x.row_iter().map(|r| w.key(r)).collect();
    let values: Vec<Vec<f64>> = x.row_iter().map(|r| w.value(r)).collect();
    let mut out = Matrix::zeros(n, w.dim());
    for i in 0..n {
        let q = w.query(x.row(i));
        let scores: Vec<f64> = keys.iter().map(|k| dot(&q, k)).collect();
        let probs = softmax(&scores)?;
        let row = out.row_mut(i);
        for (p, v) in probs.iter().zip(&values) {
            for (o, vv) in row.iter_mut().zip(v) {
                *o += p * vv;
            }
        }
    }
    Ok(out)
}

/// Positive feature map approximating the softmax kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// Positive random features `exp(−‖x‖²/2)/√m · [exp(w_k·x)]_k` with the
    /// `m` rows of `projection` drawn i.i.d. from `N(0, I)` once and frozen.
    Performer { projection: Matrix },
    /// `elu(x) + 1`, elementwise.
    LinearTransformer { dim: usize },
}

impl FeatureMap {
    pub fn performer(m: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(FeatureMap::Performer {
            projection: gaussian_matrix(m, dim, rng)?,
        })
    }

    pub fn linear_transformer(dim: usize) -> Self {
        FeatureMap::LinearTransformer { dim }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Performer { projection } => projection.cols(),
            FeatureMap::LinearTransformer { dim } => *dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Performer { projection } => projection.rows(),
            FeatureMap::LinearTransformer { dim } => *dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureMap::Performer { .. } => "performer",
            FeatureMap::LinearTransformer { .. } => "linear-transformer",
        }
    }

    /// Unchecked `φ(x)`.
    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Performer { projection } => {
                let m = projection.rows() as f64;
                let log_pre = -0.5 * dot(x, x);
                let scale = 1.0 / m.sqrt();
                projection
                    .row_iter()
                    .map(|w| scale * (log_pre + dot(w, x)).exp())
                    .collect()
            }
            FeatureMap::LinearTransformer { .. } => x.iter().map(|&v| elu(v) + 1.0).collect(),
        }
    }

    /// Lower bound on `φ(q) · φ(k)` for all `‖q‖, ‖k‖ ≤ radius`.
    ///
    /// Performer: every factor satisfies `exp(−r²/2 − ‖w_l‖ r) / √m`, so the
    /// product is at least `Σ_l exp(−r² − 2‖w_l‖ r) / m`. Linear
    /// transformer: `elu(t) + 1 ≥ exp(−r)` for `|t| ≤ r`, giving
    /// `d · exp(−2r)`.
    pub fn pair_lower_bound(&self, radius: f64) -> f64 {
        match self {
            FeatureMap::Performer { projection } => {
                let m = projection.rows() as f64;
                projection
                    .row_iter()
                    .map(|w| (-radius * radius - 2.0 * norm(w) * radius).exp())
                    .sum::<f64>()
                    / m
            }
            FeatureMap::LinearTransformer { dim } => *dim as f64 * (-2.0 * radius).exp(),
        }
    }
}

pub fn phi(x: &[f64], fm: &FeatureMap) -> Result<Vec<f64>> {
    check_dim("feature map input", fm.input_dim(), x.len())?;
    Ok(fm.apply(x))
}

/// `φ(x) · φ(y)`, the random-feature estimate of `exp(x · y)`.
pub fn kernel_estimate(x: &[f64], y: &[f64], fm: &FeatureMap) -> Result<f64> {
    if !matches!(fm, FeatureMap::Performer { .. }) {
        return Err(usage("kernel_estimate needs a performer feature map"));
    }
    Ok(dot(&phi(x, fm)?, &phi(y, fm)?))
}

/// Kernelised attention, regrouped form:
/// `x_i' = (φ(q_i)ᵀ Σ_j φ(k_j) ⊗ v_j) / (φ(q_i)ᵀ Σ_j φ(k_j))`.
/// The two sums are shared by every row, so the cost is linear in `n`.
pub fn approx_attention(x: &Matrix, w: &AttnWeights, fm: &FeatureMap) -> Result<Matrix> {
    check_dim("approx_attention feature dim", w.dim(), x.cols())?;
    check_dim("feature map input", w.proj_dim(), fm.input_dim())?;
    let (m, d) = (fm.output_dim(), w.dim());
    let mut key_sum = vec![0.0; m];
    let mut kv_sum = Matrix::zeros(m, d);
    for row in x.row_iter() {
        let pk = fm.apply(&w.key(row));
        let v = w.value(row);
        for (l, &p) in pk.iter().enumerate() {
            key_sum[l] += p;
            for (acc, vv) in kv_sum.row_mut(l).iter_mut().zip(&v) {
                *acc += p * vv;
            }
        }
    }
    let mut out = Matrix::zeros(x.rows(), d);
    for (i, row) in x.row_iter().enumerate() {
        let pq = fm.apply(&w.query(row));
        let denom = dot(&pq, &key_sum);
        let numer = kv_sum.vecmul(&pq)?;
        for (o, nv) in out.row_mut(i).iter_mut().zip(&numer) {
            *o = nv / denom;
        }
    }
    Ok(out)
}

/// Kernelised attention evaluated pair by pair:
/// `x_i' = Σ_j [φ(q_i)·φ(k_j) / Σ_k φ(q_i)·φ(k_k)] v_j`.
/// Quadratic in `n`; kept as the independent route to [`approx_attention`].
pub fn approx_attention_pairwise(
    x: &Matrix,
    w: &AttnWeights,
    fm: &FeatureMap,
) -> Result<Matrix> {
    check_dim("approx_attention feature dim", w.dim(), x.cols())?;
    check_dim("feature map input", w.proj_dim(), fm.input_dim())?;
    let keys: Vec<Vec<f64>> = x.row_iter().map(|r| fm.apply(&w.key(r))).collect();
    let values: Vec<Vec<f64>> = x.row_iter().map(|r| w.value(r)).collect();
    let mut out = Matrix::zeros(x.rows(), w.dim());
    for i in 0..x.rows() {
        let pq = fm.apply(&w.query(x.row(i)));
        let sims: Vec<f64> = keys.iter().map(|k| dot(&pq, k)).collect();
        let total: f64 = sims.iter().sum();
        let row = out.row_mut(i);
        for (s, v) in sims.iter().zip(&values) {
            for (o, vv) in row.iter_mut().zip(v) {
                *o += s / total * vv;
            }
        }
    }
    Ok(out)
}

/// Smallest denominator `φ(q_i) · Σ_j φ(k_j)` over the rows of `x`.
pub fn min_denominator(x: &Matrix, w: &AttnWeights, fm: &FeatureMap) -> f64 {
    let m = fm.output_dim();
    let mut key_sum = vec![0.0; m];
    for row in x.row_iter() {
        for (s, p) in key_sum.iter_mut().zip(fm.apply(&w.key(row))) {
            *s += p;
        }
    }
    x.row_iter()
        .map(|row| dot(&fm.apply(&w.query(row)), &key_sum))
        .fold(f64::INFINITY, f64::min)
}

/// Analytic lower bound on every denominator of [`approx_attention`] for
/// `n` nodes when `‖x_i‖ < c1` and `‖W_Q‖, ‖W_K‖ < c2`.
pub fn denominator_lower_bound(fm: &FeatureMap, n: usize, c1: f64, c2: f64) -> f64 {
    n as f64 * fm.pair_lower_bound(c1 * c2)
}

/// GATv2 scoring `a · LeakyReLU(W [u ‖ v] + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gatv2Score {
    pub a: Vec<f64>,
    /// `h × 2d`, acting on the concatenation `[u ‖ v]`.
    pub w: Matrix,
    pub b: Vec<f64>,
    pub slope: f64,
}

impl Gatv2Score {
    pub fn new(a: Vec<f64>, w: Matrix, b: Vec<f64>, slope: f64) -> Result<Self> {
        check_dim("GATv2 a", w.rows(), a.len())?;
        check_dim("GATv2 b", w.rows(), b.len())?;
        if w.cols() % 2 != 0 {
            return Err(usage("GATv2 W must act on a concatenation of two equal halves"));
        }
        Ok(Self { a, w, b, slope })
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols() / 2
    }

    #[inline]
    pub(crate) fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = self.input_dim();
        let mut total = 0.0;
        for h in 0..self.w.rows() {
            let row = self.w.row(h);
            let pre = self.b[h] + dot(&row[..d], u) + dot(&row[d..], v);
            total += self.a[h] * leaky_relu(pre, self.slope);
        }
        total
    }

    /// Same score with every output scaled by `c`.
    pub fn amplified(&self, c: f64) -> Self {
        Self {
            a: self.a.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

pub fn gatv2_score(u: &[f64], v: &[f64], g: &Gatv2Score) -> Result<f64> {
    check_dim("gatv2 u", g.input_dim(), u.len())?;
    check_dim("gatv2 v", g.input_dim(), v.len())?;
    Ok(g.eval(u, v))
}

/// Outcome of checking the boundedness assumptions on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Every row norm strictly below `c1`.
    pub as2_ok: bool,
    /// Spectral norms of `W_Q`, `W_K`, `W_V` strictly below `c2`.
    pub as3_ok: bool,
    pub max_row_norm: f64,
    pub spectral_norms: [f64; 3],
    /// `[−c1²c2², c1²c2²]`, containing every score when both hold.
    pub score_bounds: (f64, f64),
}

pub fn check_assumptions(x: &Matrix, w: &AttnWeights, c1: f64, c2: f64) -> AssumptionReport {
    let max_row_norm = x.row_iter().map(norm).fold(0.0, f64::max);
    let spectral_norms = [
        w.w_q.spectral_norm(),
        w.w_k.spectral_norm(),
        w.w_v.spectral_norm(),
    ];
    let bound = c1 * c1 * c2 * c2;
    AssumptionReport {
        as2_ok: max_row_norm < c1,
        as3_ok: spectral_norms.iter().all(|&s| s < c2),
        max_row_norm,
        spectral_norms,
        score_bounds: (-bound, bound),
    }
}

/// Median relative error of [`kernel_estimate`] at one feature count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSweepPoint {
    pub features: usize,
    pub median_rel_error: f64,
}

/// Relative error `|φ(x)·φ(y) − exp(x·y)| / exp(x·y)` over `pairs` random
/// pairs in the unit ball and `seeds` feature draws per count. The pairs are
/// fixed by `seed`; feature maps use derived streams.
pub fn kernel_convergence(
    features: &[usize],
    dim: usize,
    pairs: usize,
    seeds: u64,
    seed: u64,
) -> Result<Vec<KernelSweepPoint>> {
    if pairs == 0 || seeds == 0 || dim == 0 {
        return Err(usage("kernel sweep needs pairs, seeds and dim ≥ 1"));
    }
    let mut rng = Rng::new(seed);
    let xs = uniform_ball_rows(pairs, dim, 1.0, &mut rng);
    let ys = uniform_ball_rows(pairs, dim, 1.0, &mut rng);
    features
        .iter()
        .map(|&m| {
            let mut errs = Vec::with_capacity(pairs * seeds as usize);
            for s in 0..seeds {
                let fm = FeatureMap::performer(m, dim, &mut Rng::derive(seed ^ s, m as u64))?;
                for (x, y) in xs.row_iter().zip(ys.row_iter()) {
                    let exact = dot(x, y).exp();
                    errs.push((kernel_estimate(x, y, &fm)? - exact).abs() / exact);
                }
            }
            errs.sort_by(f64::total_cmp);
            let mid = errs.len() / 2;
            let median = if errs.len() % 2 == 0 {
                0.5 * (errs[mid - 1] + errs[mid])
            } else {
                errs[mid]
            };
            Ok(KernelSweepPoint {
                features: m,
                median_rel_error: median,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::uniform_ball_rows;

    fn random_instance(n: usize, d: usize, seed: u64) -> (Matrix, AttnWeights) {
        let mut rng = Rng::new(seed);
        let x = gaussian_matrix(n, d, &mut rng).unwrap();
        let w = AttnWeights::new(
            gaussian_matrix(d, d, &mut rng).unwrap().scale(0.5),
            gaussian_matrix(d, d, &mut rng).unwrap().scale(0.5),
            gaussian_matrix(d, d, &mut rng).unwrap(),
        )
        .unwrap();
        (x, w)
    }

    fn triple_loop_score(u: &[f64], v: &[f64], w: &AttnWeights) -> f64 {
        let mut s = 0.0;
        for a in 0..u.len() {
            for b in 0..v.len() {
                for c in 0..w.proj_dim() {
                    s += u[a] * w.w_q.get(a, c) * w.w_k.get(b, c) * v[b];
                }
            }
        }
        s
    }

    #[test]
    fn unnorm_score_examples() {
        let eye = AttnWeights::new(Matrix::identity(2), Matrix::identity(2), Matrix::identity(2))
            .unwrap();
        assert_eq!(unnorm_score(&[1.0, 0.0], &[1.0, 0.0], &eye).unwrap(), 1.0);
        let zero_q =
            AttnWeights::new(Matrix::zeros(2, 2), Matrix::identity(2), Matrix::identity(2)).unwrap();
        assert_eq!(unnorm_score(&[3.0, 1.0], &[-2.0, 5.0], &zero_q).unwrap(), 0.0);
        assert!(unnorm_score(&[1.0], &[1.0, 0.0], &eye).is_err());

        let (x, w) = random_instance(2, 4, 1);
        let got = unnorm_score(x.row(0), x.row(1), &w).unwrap();
        assert!((got - triple_loop_score(x.row(0), x.row(1), &w)).abs() <= 1e-12);
    }

    #[test]
    fn self_attention_small_cases() {
        let (x, w) = random_instance(1, 3, 2);
        let out = self_attention(&x, &w).unwrap();
        assert_eq!(out.row(0), w.value(x.row(0)).as_slice());

        let row = vec![0.3, -0.7, 1.1];
        let same = Matrix::from_rows(&[row.clone(), row.clone(), row.clone()]).unwrap();
        let out = self_attention(&same, &w).unwrap();
        let v = w.value(&row);
        for r in out.row_iter() {
            for (a, b) in r.iter().zip(&v) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn self_attention_matches_double_loop() {
        let (x, w) = random_instance(3, 2, 3);
        let out = self_attention(&x, &w).unwrap();
        for i in 0..3 {
            let scores: Vec<f64> = (0..3)
                .map(|j| triple_loop_score(x.row(i), x.row(j), &w))
                .collect();
            let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..2 {
                let mut want = 0.0;
                for j in 0..3 {
                    let mut vj = 0.0;
                    for k in 0..2 {
                        vj += x.get(j, k) * w.w_v.get(k, c);
                    }
                    want += e[j] / z * vj;
                }
                assert!((out.get(i, c) - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn phi_at_zero() {
        let fm = FeatureMap::performer(16, 3, &mut Rng::new(4)).unwrap();
        let p = phi(&[0.0; 3], &fm).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!((kernel_estimate(&[0.0; 3], &[0.0; 3], &fm).unwrap() - 1.0).abs() < 1e-15);

        let lt = FeatureMap::linear_transformer(3);
        assert_eq!(phi(&[0.0; 3], &lt).unwrap(), vec![1.0; 3]);
        assert!(kernel_estimate(&[0.0; 3], &[0.0; 3], &lt).is_err());
    }

    #[test]
    fn phi_is_positive() {
        let mut rng = Rng::new(5);
        let fm = FeatureMap::performer(32, 4, &mut rng).unwrap();
        let lt = FeatureMap::linear_transformer(4);
        for _ in 0..50 {
            let x: Vec<f64> = rng.normal_vec(4).iter().map(|v| 3.0 * v).collect();
            assert!(phi(&x, &fm).unwrap().iter().all(|&v| v > 0.0));
            assert!(phi(&x, &lt).unwrap().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn kernel_estimate_near_e() {
        let e = std::f64::consts::E;
        let mut est: Vec<f64> = (0..20)
            .map(|s| {
                let fm = FeatureMap::performer(4096, 2, &mut Rng::new(100 + s)).unwrap();
                kernel_estimate(&[1.0, 0.0], &[1.0, 0.0], &fm).unwrap()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        assert!((mean / e - 1.0).abs() < 0.10, "mean {mean}");
        est.sort_by(f64::total_cmp);
        let median = 0.5 * (est[9] + est[10]);
        assert!((median / e - 1.0).abs() < 0.03, "median {median}");
    }

    #[test]
    fn kernel_error_shrinks_with_features() {
        let (x, y) = ([0.6, 0.3], [0.5, -0.2]);
        let exact = dot(&x, &y).exp();
        let mut last = f64::INFINITY;
        for m in [64, 256, 1024, 4096] {
            let mut errs: Vec<f64> = (0..20)
                .map(|s| {
                    let fm = FeatureMap::performer(m, 2, &mut Rng::derive(s, m as u64)).unwrap();
                    (kernel_estimate(&x, &y, &fm).unwrap() - exact).abs()
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            let med = 0.5 * (errs[9] + errs[10]);
            assert!(med <= last, "m={m}: {med} > {last}");
            last = med;
        }
    }

    #[test]
    fn kernel_sweep_is_monotone() {
        let pts = kernel_convergence(&[64, 256, 1024], 3, 30, 5, 1).unwrap();
        assert!(pts.windows(2).all(|w| w[1].median_rel_error <= w[0].median_rel_error));
        assert!(kernel_convergence(&[8], 3, 0, 5, 1).is_err());
    }

    #[test]
    fn approx_attention_forms_agree() {
        for seed in 0..20 {
            let (x, w) = random_instance(6, 3, seed);
            let x = x.scale(0.4);
            let fm = FeatureMap::performer(24, 3, &mut Rng::derive(seed, 9)).unwrap();
            let a = approx_attention(&x, &w, &fm).unwrap();
            let b = approx_attention_pairwise(&x, &w, &fm).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-12);
            let lt = FeatureMap::linear_transformer(3);
            let a = approx_attention(&x, &w, &lt).unwrap();
            let b = approx_attention_pairwise(&x, &w, &lt).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-12);
        }
    }

    #[test]
    fn approx_attention_trivial_cases() {
        let (x, w) = random_instance(1, 3, 12);
        let fm = FeatureMap::performer(8, 3, &mut Rng::new(1)).unwrap();
        let out = approx_attention(&x, &w, &fm).unwrap();
        for (a, b) in out.row(0).iter().zip(w.value(x.row(0))) {
            assert!((a - b).abs() <= 1e-14);
        }
        let row = vec![0.2, 0.1, -0.3];
        let same = Matrix::from_rows(&[row.clone(), row.clone(), row]).unwrap();
        let out = approx_attention(&same, &w, &fm).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.row(1), out.row(2));
    }

    #[test]
    fn denominators_respect_analytic_bound() {
        let mut rng = Rng::new(21);
        for _ in 0..20 {
            let (c1, c2) = (1.0, 1.0);
            let x = uniform_ball_rows(10, 3, 0.999 * c1, &mut rng);
            let w = AttnWeights::random(3, 3, 0.99 * c2, &mut rng).unwrap();
            let fm = FeatureMap::performer(16, 3, &mut rng).unwrap();
            let bound = denominator_lower_bound(&fm, 10, c1, c2);
            assert!(bound > 0.0);
            assert!(min_denominator(&x, &w, &fm) >= bound);
            let lt = FeatureMap::linear_transformer(3);
            assert!(min_denominator(&x, &w, &lt) >= denominator_lower_bound(&lt, 10, c1, c2));
        }
    }

    #[test]
    fn gatv2_examples() {
        let b = vec![0.5, -1.0];
        let g = Gatv2Score::new(vec![1.0, 2.0], Matrix::zeros(2, 4), b, 0.2).unwrap();
        let want = 0.5 + 2.0 * (-0.2);
        assert!((gatv2_score(&[3.0, 1.0], &[-1.0, 4.0], &g).unwrap() - want).abs() < 1e-15);

        // positive pre-activations: linear regime
        let w = Matrix::from_rows(&[vec![1.0, 0.5, 0.25, 1.0], vec![0.5, 0.5, 1.0, 0.0]]).unwrap();
        let g = Gatv2Score::new(vec![0.7, -1.3], w.clone(), vec![0.0, 0.0], 0.2).unwrap();
        let (u, v) = ([0.4, 0.9], [0.1, 0.3]);
        let cat = [u[0], u[1], v[0], v[1]];
        let lin = dot(&[0.7, -1.3], &w.matvec(&cat).unwrap());
        assert!((gatv2_score(&u, &v, &g).unwrap() - lin).abs() < 1e-14);

        let mut rng = Rng::new(31);
        let g = Gatv2Score::new(
            rng.normal_vec(5),
            gaussian_matrix(5, 6, &mut rng).unwrap(),
            rng.normal_vec(5),
            0.2,
        )
        .unwrap();
        let u = rng.normal_vec(3);
        let v = rng.normal_vec(3);
        let mut want = 0.0;
        for h in 0..5 {
            let mut pre = g.b[h];
            for k in 0..3 {
                pre += g.w.get(h, k) * u[k] + g.w.get(h, 3 + k) * v[k];
            }
            want += g.a[h] * if pre >= 0.0 { pre } else { 0.2 * pre };
        }
        assert!((gatv2_score(&u, &v, &g).unwrap() - want).abs() <= 1e-12);
    }

    #[test]
    fn assumption_checks() {
        let w = AttnWeights::random(2, 2, 0.5, &mut Rng::new(1)).unwrap();
        let zero = Matrix::zeros(4, 2);
        assert!(check_assumptions(&zero, &w, 1e-3, 1.0).as2_ok);
        let edge = Matrix::from_rows(&[vec![0.6, 0.8], vec![0.0, 0.1]]).unwrap();
        assert!(!check_assumptions(&edge, &w, 1.0, 1.0).as2_ok);
        assert!(!check_assumptions(&zero, &w, 1.0, 0.5).as3_ok);

        let mut rng = Rng::new(2);
        let x = uniform_ball_rows(12, 3, 1.5, &mut rng);
        let w = AttnWeights::random(3, 3, 0.9, &mut rng).unwrap();
        let rep = check_assumptions(&x, &w, 1.5, 1.0);
        assert!(rep.as2_ok && rep.as3_ok);
        for i in 0..12 {
            for j in 0..12 {
                let s = unnorm_score(x.row(i), x.row(j), &w).unwrap();
                assert!(rep.score_bounds.0 <= s && s <= rep.score_bounds.1);
            }
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::{approx_attention, self_attention, AttnWeights, FeatureMap};
    use crate::numkit::{uniform_ball_rows, Rng};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn attention_layers_are_permutation_equivariant(seed in 0u64..100_000, n in 1usize..9, d in 1usize..5) {
            let mut rng = Rng::new(seed);
            let x = uniform_ball_rows(n, d, 1.0, &mut rng);
            let w = AttnWeights::random(d, d, 0.9, &mut rng).unwrap();
            let perm = rng.permutation(n);
            let px = x.permute_rows(&perm);

            let full = self_attention(&x, &w).unwrap().permute_rows(&perm);
            prop_assert!(self_attention(&px, &w).unwrap().max_abs_diff(&full) <= 1e-12);

            let fm = FeatureMap::performer(16, d, &mut rng).unwrap();
            let approx = approx_attention(&x, &w, &fm).unwrap().permute_rows(&perm);
            prop_assert!(approx_attention(&px, &w, &fm).unwrap().max_abs_diff(&approx) <= 1e-12);
        }
    }
}
