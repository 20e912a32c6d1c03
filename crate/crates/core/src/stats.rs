//! Method comparison: summaries, Welch's unequal-variance t-test, pairwise
//! p-value matrices and average ranks.

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSample {
    pub method_id: String,
    pub values: Vec<f64>,
}

impl MethodSample {
    pub fn new(method_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self { method_id: method_id.into(), values }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom; `+∞` when both variances vanish.
    pub dof: f64,
    pub p_two_sided: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseMatrix {
    pub method_ids: Vec<String>,
    pub p: Vec<Vec<f64>>,
}

/// Mean and sample standard deviation (`n − 1`); the deviation is 0 for one value.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

pub fn welch_t_test(a: &MethodSample, b: &MethodSample) -> Result<WelchResult> {
    for s in [a, b] {
        if s.values.len() < 2 {
            return Err(invalid!(
                "method `{}` has {} value(s); Welch's test needs at least 2",
                s.method_id,
                s.values.len()
            ));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("method `{}` has non-finite values", s.method_id));
        }
    }
    let (na, nb) = (a.values.len() as f64, b.values.len() as f64);
    let (ma, sa) = summarize(&a.values);
    let (mb, sb) = summarize(&b.values);
    let (qa, qb) = (sa * sa / na, sb * sb / nb);
    let se2 = qa + qb;
    if se2 == 0.0 {
        return Ok(if ma == mb {
            WelchResult { t: 0.0, dof: f64::INFINITY, p_two_sided: 1.0 }
        } else {
            WelchResult { t: (ma - mb).signum() * f64::INFINITY, dof: f64::INFINITY, p_two_sided: 0.0 }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let p = regularized_incomplete_beta(dof / (dof + t * t), dof / 2.0, 0.5)?;
    Ok(WelchResult { t, dof, p_two_sided: p.clamp(0.0, 1.0) })
}

/// Regularised incomplete beta `I_x(a, b)` by Lentz's continued fraction,
/// evaluated on whichever side of `(a+1)/(a+b+2)` converges fastest.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(invalid!("incomplete beta needs x in [0,1], a > 0, b > 0 (x={x}, a={a}, b={b})"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_continued_fraction(x, a, b) / a)
    } else {
        Ok(1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b)
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Symmetric matrix of two-sided Welch p-values with unit diagonal.
pub fn pairwise_pvalues(samples: &[MethodSample]) -> Result<PairwiseMatrix> {
    if samples.len() < 2 {
        return Err(invalid!("pairwise comparison needs at least 2 methods, got {}", samples.len()));
    }
    let m = samples.len();
    let mut p = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let r = welch_t_test(&samples[i], &samples[j]).map_err(|e| {
                invalid!("comparing `{}` with `{}`: {e}", samples[i].method_id, samples[j].method_id)
            })?;
            p[i][j] = r.p_two_sided;
            p[j][i] = r.p_two_sided;
        }
    }
    Ok(PairwiseMatrix { method_ids: samples.iter().map(|s| s.method_id.clone()).collect(), p })
}

/// Ranks of `values` by descending value (1 = largest), ties sharing the mean of their ranks.
pub fn rank_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}

/// Mean per-method rank over datasets; `acc[dataset][method]`.
pub fn average_rank(acc: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = acc.first().map_or(0, Vec::len);
    if acc.is_empty() || m == 0 {
        return Err(invalid!("average rank needs a non-empty accuracy table"));
    }
    if let Some(i) = acc.iter().position(|row| row.len() != m) {
        return Err(invalid!("dataset row {i} has {} methods, expected {m}", acc[i].len()));
    }
    let mut total = vec![0.0; m];
    for row in acc {
        for (t, r) in total.iter_mut().zip(rank_descending(row)) {
            *t += r;
        }
    }
    Ok(total.into_iter().map(|t| t / acc.len() as f64).collect())
}

/// Formats `x` with 6 significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exponent) {
        let decimals = (5 - exponent).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding may carry into a new digit (e.g. 9.999995 -> 10.00000)
        let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|&c| c == '0').count();
        if digits > 6 && decimals > 0 {
            let decimals = decimals - 1;
            return format!("{x:.decimals$}");
        }
        s
    } else {
        format!("{x:.5e}")
    }
}
