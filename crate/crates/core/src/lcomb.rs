//! Trainable linear channel combiner.
//!
//! Each output channel is a convex combination of the input channels, with
//! weights given by a row-wise softmax over unconstrained logits. With `k`
//! set, each row keeps only its `k` largest weights, renormalised to sum to 1.

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::tensor::SeriesTensor;

/// Default `k` for the top-k variant.
pub const DEFAULT_TOP_K: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct LcombAdapter {
    logits: Matrix,
    k: Option<usize>,
}

impl LcombAdapter {
    /// Zero logits, i.e. uniform attention over the `d_in` channels.
    pub fn new(d_in: usize, d_out: usize, k: Option<usize>) -> Result<Self> {
        if d_out == 0 || d_out > d_in {
            return Err(invalid!("reduced dimension D'={d_out} must be in 1..=D with D={d_in}"));
        }
        Self::from_logits(Matrix::zeros(d_out, d_in), k)
    }

    pub fn from_logits(logits: Matrix, k: Option<usize>) -> Result<Self> {
        if logits.rows() == 0 || logits.cols() == 0 {
            return Err(invalid!("logits must be non-empty"));
        }
        if logits.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(invalid!("logits must be finite"));
        }
        check_k(k, logits.cols())?;
        Ok(Self { logits, k })
    }

    pub fn d_in(&self) -> usize {
        self.logits.cols()
    }

    pub fn d_out(&self) -> usize {
        self.logits.rows()
    }

    pub fn k(&self) -> Option<usize> {
        self.k
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub(crate) fn logits_mut(&mut self) -> &mut [f64] {
        self.logits.as_mut_slice()
    }

    /// Row-softmax of the logits, top-k masked and renormalised when `k` is set.
    pub fn attention(&self) -> Result<Matrix> {
        check_k(self.k, self.d_in())?;
        let mut a = self.softmax();
        if let Some(k) = self.k {
            for i in 0..a.rows() {
                keep_top_k(a.row_mut(i), k);
            }
        }
        Ok(a)
    }

    /// Plain row-softmax, ignoring `k`.
    pub fn softmax(&self) -> Matrix {
        let mut a = self.logits.clone();
        for i in 0..a.rows() {
            softmax_in_place(a.row_mut(i));
        }
        a
    }

    /// `y[n][t] = attention · x[n][t]`.
    pub fn apply(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        self.check_input(x)?;
        let a = self.attention()?;
        let (n, t, _) = x.shape();
        let mut out = vec![0.0; n * t * self.d_out()];
        for (dst, src) in out.chunks_exact_mut(self.d_out()).zip(x.values().chunks_exact(self.d_in())) {
            a.mul_vec_into(src, dst);
        }
        SeriesTensor::new(n, t, self.d_out(), out)
    }

    /// Gradient of `Σ ⟨grad_y, apply(x)⟩` with respect to the logits.
    ///
    /// The attention gradient `Σ_{n,t} grad_y[n,t] ⊗ x[n,t]` is pulled back
    /// through the plain row-softmax. When `k` is set the top-k mask is treated
    /// as the identity (straight-through), so the result is exact only for
    /// `k = None`.
    pub fn apply_backward(&self, x: &SeriesTensor, grad_y: &SeriesTensor) -> Result<Matrix> {
        self.check_input(x)?;
        let expected = (x.n_samples(), x.n_steps(), self.d_out());
        if grad_y.shape() != expected {
            return Err(invalid!(
                "output gradient has shape {:?}, expected {expected:?}",
                grad_y.shape()
            ));
        }
        let (d_in, d_out) = (self.d_in(), self.d_out());
        let mut grad_a = Matrix::zeros(d_out, d_in);
        for (g, v) in grad_y.values().chunks_exact(d_out).zip(x.values().chunks_exact(d_in)) {
            for (i, &gi) in g.iter().enumerate() {
                if gi == 0.0 {
                    continue;
                }
                for (acc, &vj) in grad_a.row_mut(i).iter_mut().zip(v) {
                    *acc += gi * vj;
                }
            }
        }
        Ok(self.softmax_backward(&grad_a))
    }

    /// Pulls an attention-matrix gradient back to the logits through the row softmax:
    /// `∂L/∂z_ij = a_ij (g_ij − Σ_k a_ik g_ik)`.
    pub fn softmax_backward(&self, grad_attention: &Matrix) -> Matrix {
        let a = self.softmax();
        let mut out = Matrix::zeros(a.rows(), a.cols());
        for i in 0..a.rows() {
            let (ai, gi) = (a.row(i), grad_attention.row(i));
            let inner: f64 = ai.iter().zip(gi).map(|(p, g)| p * g).sum();
            for ((o, &p), &g) in out.row_mut(i).iter_mut().zip(ai).zip(gi) {
                *o = p * (g - inner);
            }
        }
        out
    }

    fn check_input(&self, x: &SeriesTensor) -> Result<()> {
        if x.n_channels() != self.d_in() {
            return Err(invalid!(
                "combiner expects {} channels, input has {}",
                self.d_in(),
                x.n_channels()
            ));
        }
        Ok(())
    }
}

fn check_k(k: Option<usize>, d: usize) -> Result<()> {
    match k {
        Some(0) => Err(invalid!("top-k requires k >= 1")),
        Some(k) if k > d => Err(invalid!("top-k k={k} exceeds channel count D={d}")),
        _ => Ok(()),
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Zeroes all but the `k` largest entries (ties to the lower index) and renormalises.
fn keep_top_k(row: &mut [f64], k: usize) {
    if k >= row.len() {
        return;
    }
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    for &j in &order[k..] {
        row[j] = 0.0;
    }
    let sum: f64 = order[..k].iter().map(|&j| row[j]).sum();
    for &j in &order[..k] {
        row[j] /= sum;
    }
}
