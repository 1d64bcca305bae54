//! Paired t-tests, the exact sign test, and the special functions they need.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("paired series differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("observation {0} is not finite")]
    NonFinite(usize),
    #[error("sign test needs at least one success or failure")]
    EmptySignTest,
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    /// Two-tailed p-value.
    pub p_value: f64,
    pub df: usize,
}

pub fn mean_sd(xs: &[f64]) -> Result<MeanSd> {
    if xs.len() < 2 {
        return Err(StatsError::TooFewObservations {
            needed: 2,
            got: xs.len(),
        });
    }
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    Ok(MeanSd {
        mean,
        sd: (ss / (n - 1.0)).sqrt(),
    })
}

/// Paired t-test on `baseline - grafted`.
///
/// Identical series give t = 0 and p = 1. Constant nonzero differences give an
/// infinite statistic and p = 0.
pub fn paired_t(baseline: &[f64], grafted: &[f64]) -> Result<TestResult> {
    if baseline.len() != grafted.len() {
        return Err(StatsError::LengthMismatch(baseline.len(), grafted.len()));
    }
    let diffs: Vec<f64> = baseline.iter().zip(grafted).map(|(a, b)| a - b).collect();
    let MeanSd { mean, sd } = mean_sd(&diffs)?;
    let n = diffs.len();
    let df = n - 1;
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TestResult {
                statistic: 0.0,
                p_value: 1.0,
                df,
            }
        } else {
            TestResult {
                statistic: f64::INFINITY.copysign(mean),
                p_value: 0.0,
                df,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(TestResult {
        statistic: t,
        p_value: student_t_two_tailed(t, df as f64),
        df,
    })
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// One-tailed exact sign test: P(X >= successes) for X ~ Binomial(n, 1/2),
/// n = successes + failures.
pub fn sign_test(successes: u64, failures: u64) -> Result<f64> {
    let n = successes + failures;
    if n == 0 {
        return Err(StatsError::EmptySignTest);
    }
    if n <= 127 {
        // C(n, k) fits in a u128 for n <= 127 and so does 2^n.
        let mut c: u128 = 1;
        let mut tail: u128 = 0;
        for k in 0..=n {
            if k >= successes {
                tail += c;
            }
            // C(n, k+1) = C(n, k) * (n-k) / (k+1), reduced first to stay in range.
            let d = (k + 1) as u128;
            let g = gcd(c, d);
            c = (c / g) * ((n - k) as u128 / (d / g));
        }
        return Ok(tail as f64 / 2f64.powi(n as i32));
    }
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let terms: Vec<f64> = (successes..=n).map(|k| ln_choose(n, k) + ln_half_n).collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((max.exp() * terms.iter().map(|t| (t - max).exp()).sum::<f64>()).min(1.0))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Natural log of the gamma function for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Continued fraction for the incomplete beta, evaluated with modified Lentz.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
