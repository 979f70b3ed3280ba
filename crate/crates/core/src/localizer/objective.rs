//! Regularized multinomial negative log-likelihood
//!
//! ```text
//! J(β) = (λ/2)‖β‖² − Σ_j [ Σ_b y_b^j β^b·x^j − log Σ_a exp(β^a·x^j) ]
//! ∂J/∂β^b = λβ^b − Σ_j (y_b^j − p_b(x^j)) x^j
//! ```
//!
//! Samples are held in fixed-size row blocks. Each block's contribution is
//! computed independently (in parallel when enabled) and the partial sums are
//! added in block order, so the result does not depend on thread count.

use crate::linalg::gemm;
use crate::par;

pub(crate) const BLOCK_ROWS: usize = 128;

struct Block {
    /// rows × features, row-major.
    x: Vec<f64>,
    labels: Vec<usize>,
}

/// Design matrix and labels laid out for blocked evaluation.
pub(crate) struct Design {
    blocks: Vec<Block>,
    pub features: usize,
    pub classes: usize,
}

impl Design {
    pub fn new<'a>(rows: impl IntoIterator<Item = (&'a [f64], usize)>, features: usize, classes: usize) -> Self {
        let mut blocks = Vec::new();
        let mut cur = Block {
            x: Vec::with_capacity(BLOCK_ROWS * features),
            labels: Vec::with_capacity(BLOCK_ROWS),
        };
        for (x, label) in rows {
            debug_assert_eq!(x.len(), features);
            debug_assert!(label < classes);
            cur.x.extend_from_slice(x);
            cur.labels.push(label);
            if cur.labels.len() == BLOCK_ROWS {
                blocks.push(std::mem::replace(
                    &mut cur,
                    Block {
                        x: Vec::with_capacity(BLOCK_ROWS * features),
                        labels: Vec::with_capacity(BLOCK_ROWS),
                    },
                ));
            }
        }
        if !cur.labels.is_empty() {
            blocks.push(cur);
        }
        Design {
            blocks,
            features,
            classes,
        }
    }

    /// XᵀX, features × features row-major.
    pub fn gram(&self) -> Vec<f64> {
        let l = self.features;
        let mut g = vec![0.0; l * l];
        for b in &self.blocks {
            gemm(l, b.labels.len(), l, 1.0, &b.x, true, &b.x, 1.0, &mut g);
        }
        g
    }

    /// The same samples with every row mapped to x·V, for V features × `r`
    /// row-major with orthonormal columns. The objective is unchanged under
    /// β ↦ Vᵀβ when V is square.
    pub fn rotated(&self, v: &[f64], r: usize) -> Design {
        let l = self.features;
        let blocks = par::map(&self.blocks, |b| {
            let m = b.labels.len();
            let mut x = vec![0.0; m * r];
            gemm(m, l, r, 1.0, &b.x, false, v, 0.0, &mut x);
            Block {
                x,
                labels: b.labels.clone(),
            }
        });
        Design {
            blocks,
            features: r,
            classes: self.classes,
        }
    }

    /// Approximate inverse Hessian diagonal for coefficients laid out like
    /// `evaluate`'s `w`: 1 / (λ + p(1−p)·h_k) for column curvatures `h_k`, with
    /// p the uniform class probability.
    pub fn preconditioner(&self, column_curvature: &[f64], lambda: f64) -> Vec<f64> {
        let p = 1.0 / self.classes as f64;
        let curv = p * (1.0 - p);
        let mut out = Vec::with_capacity(self.features * self.classes);
        for &s in column_curvature {
            let h = lambda + curv * s.max(0.0);
            let d = if h > 0.0 { 1.0 / h } else { 1.0 };
            out.extend(std::iter::repeat(d).take(self.classes));
        }
        out
    }

    /// Objective and gradient at `w`, the coefficients stored features × classes
    /// row-major (equivalently β as a column-major classes × features matrix).
    pub fn evaluate(&self, w: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
        let (l, c) = (self.features, self.classes);
        let partials = par::map(&self.blocks, |b| self.block_terms(b, w));
        let mut value = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
        for (g, wv) in grad.iter_mut().zip(w) {
            *g = lambda * wv;
        }
        for (loss, gb) in partials {
            value += loss;
            for (g, v) in grad.iter_mut().zip(&gb) {
                *g += v;
            }
        }
        debug_assert_eq!(grad.len(), l * c);
        value
    }

    fn block_terms(&self, b: &Block, w: &[f64]) -> (f64, Vec<f64>) {
        let (l, c) = (self.features, self.classes);
        let m = b.labels.len();
        let mut scores = vec![0.0; m * c];
        gemm(m, l, c, 1.0, &b.x, false, w, 0.0, &mut scores);
        let mut loss = 0.0;
        for (row, &y) in scores.chunks_mut(c).zip(&b.labels) {
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let true_gap = max - row[y];
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            // log-sum-exp minus the true-class score, both relative to max
            loss += sum.ln() + true_gap;
            let inv = 1.0 / sum;
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[y] -= 1.0;
        }
        let mut g = vec![0.0; l * c];
        gemm(l, m, c, 1.0, &b.x, true, &scores, 0.0, &mut g);
        (loss, g)
    }
}
