//! Scott-Knott effect-size-difference ranking of methods.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{Error, Result};

/// Significance level of both the normality check and the split test.
pub const ALPHA: f64 = 0.05;
/// Cohen's d below which two groups are considered the same.
pub const NEGLIGIBLE_D: f64 = 0.2;

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro-Wilk W and its p-value (Royston's approximation), for
/// `3 <= n <= 5000`. Returns `None` when the sample has no spread.
pub fn shapiro_wilk(sample: &[f64]) -> Result<Option<(f64, f64)>> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::Config(format!("normality test needs 3..=5000 values, got {n}")));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] < 1e-19 * x[n - 1].abs().max(1.0) {
        return Ok(None);
    }
    let an = n as f64;
    let half = n / 2;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = 0.5f64.sqrt();
    } else {
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let m: Vec<f64> = (1..=half)
            .map(|i| std_normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let c1 = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        let c2 = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let a1 = poly(&c1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&c2, rsn);
            a[1] = a2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            (2, fac)
        } else {
            (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }
    let mean = x.iter().sum::<f64>() / an;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let b: f64 = (0..half).map(|i| a[i] * (x[n - 1 - i] - x[i])).sum();
    let w = (b * b / ss).min(1.0);

    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::PI / 3.0;
        (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else {
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut y = (1.0 - w).ln();
        let (m, s) = if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], an);
            if y >= gamma {
                return Ok(Some((w, 1e-99)));
            }
            y = -(gamma - y).ln();
            (poly(&[0.5440, -0.39978, 0.025054, -6.714e-4], an), poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp())
        } else {
            let xx = an.ln();
            (poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], xx), poly(&[-0.4803, -0.082676, 0.0030302], xx).exp())
        };
        1.0 - std_normal.cdf((y - m) / s)
    };
    Ok(Some((w, p)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Cohen's d with pooled standard deviation; infinite when the pooled
/// spread is zero but the means differ.
pub fn cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let dof = (a.len() + b.len()) as f64 - 2.0;
    let pooled = if dof > 0.0 { ((ss(a, ma) + ss(b, mb)) / dof).sqrt() } else { 0.0 };
    let diff = (ma - mb).abs();
    if pooled == 0.0 {
        return if diff == 0.0 { 0.0 } else { f64::INFINITY };
    }
    diff / pooled
}

/// Clusters of methods, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkEsdResult {
    /// Method name to rank (1 = best).
    pub ranks: BTreeMap<String, usize>,
    /// Methods in each cluster, best cluster first, best mean first within.
    pub clusters: Vec<Vec<String>>,
    /// Cohen's d between cluster `i` and `i + 1`.
    pub effect_sizes: Vec<f64>,
    /// Whether observations were log-transformed after the normality check.
    pub log_transformed: bool,
}

struct Group<'a> {
    names: Vec<&'a str>,
    values: Vec<f64>,
}

fn pooled<'a>(methods: &[(&'a str, Vec<f64>)]) -> Group<'a> {
    Group {
        names: methods.iter().map(|m| m.0).collect(),
        values: methods.iter().flat_map(|m| m.1.iter().copied()).collect(),
    }
}

/// Best split index and its p-value for an ordered run of methods.
fn best_split(methods: &[(&str, Vec<f64>)]) -> Option<(usize, f64, f64)> {
    if methods.len() < 2 {
        return None;
    }
    let all = pooled(methods).values;
    let grand = mean(&all);
    let mut best: Option<(usize, f64)> = None;
    for cut in 1..methods.len() {
        let left = pooled(&methods[..cut]).values;
        let right = pooled(&methods[cut..]).values;
        let between = left.len() as f64 * (mean(&left) - grand).powi(2)
            + right.len() as f64 * (mean(&right) - grand).powi(2);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((cut, between));
        }
    }
    let (cut, between) = best?;
    if between <= 0.0 {
        return None;
    }
    let left = pooled(&methods[..cut]).values;
    let right = pooled(&methods[cut..]).values;
    let within: f64 = [&left, &right]
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let dof = all.len() as f64 - 2.0;
    let p = if within <= 0.0 {
        0.0
    } else {
        let f = between / (within / dof);
        let dist = FisherSnedecor::new(1.0, dof).expect("positive degrees of freedom");
        1.0 - dist.cdf(f)
    };
    Some((cut, p, cohens_d(&left, &right)))
}

fn partition<'a>(methods: &[(&'a str, Vec<f64>)], out: &mut Vec<Group<'a>>) {
    match best_split(methods) {
        Some((cut, p, d)) if p < ALPHA && d >= NEGLIGIBLE_D => {
            partition(&methods[..cut], out);
            partition(&methods[cut..], out);
        }
        _ => out.push(pooled(methods)),
    }
}

/// Ranks methods by their per-task observations.
///
/// All lists must have the same length, at least 3. If any method fails a
/// Shapiro-Wilk check at [`ALPHA`], every value is mapped to `ln(x + 1)`.
/// Methods are ordered by mean (ties by name), split recursively where the
/// between-group sum of squares is largest and an F test is significant,
/// and finally adjacent clusters with negligible effect size are merged.
pub fn scott_knott_esd(methods: &BTreeMap<String, Vec<f64>>, higher_is_better: bool) -> Result<SkEsdResult> {
    if methods.len() < 2 {
        return Err(Error::Config(format!("need at least 2 methods, got {}", methods.len())));
    }
    let len = methods.values().next().map_or(0, Vec::len);
    for (name, v) in methods {
        if v.len() != len {
            return Err(Error::Config(format!(
                "method `{name}` has {} observations, expected {len}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("observation of method `{name}`")));
        }
    }
    if len < 3 {
        return Err(Error::Config(format!("need at least 3 observations per method, got {len}")));
    }

    let mut log_transformed = false;
    for v in methods.values() {
        if let Some((_, p)) = shapiro_wilk(v)? {
            if p < ALPHA {
                log_transformed = true;
                break;
            }
        }
    }
    if log_transformed && methods.values().flatten().any(|&x| x <= -1.0) {
        return Err(Error::Data("log transform needs every value above -1".into()));
    }
    let mut ordered: Vec<(&str, Vec<f64>)> = methods
        .iter()
        .map(|(n, v)| {
            let vals = if log_transformed { v.iter().map(|x| x.ln_1p()).collect() } else { v.clone() };
            (n.as_str(), vals)
        })
        .collect();
    ordered.sort_by(|a, b| {
        let (ma, mb) = (mean(&a.1), mean(&b.1));
        let by_mean = if higher_is_better { mb.total_cmp(&ma) } else { ma.total_cmp(&mb) };
        by_mean.then(a.0.cmp(b.0))
    });

    let mut groups = Vec::new();
    partition(&ordered, &mut groups);
    loop {
        let merge_at = (0..groups.len().saturating_sub(1))
            .find(|&i| cohens_d(&groups[i].values, &groups[i + 1].values) < NEGLIGIBLE_D);
        let Some(i) = merge_at else { break };
        let next = groups.remove(i + 1);
        groups[i].names.extend(next.names);
        groups[i].values.extend(next.values);
    }

    let effect_sizes = groups.windows(2).map(|w| cohens_d(&w[0].values, &w[1].values)).collect();
    let mut ranks = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        for n in &g.names {
            ranks.insert(n.to_string(), i + 1);
        }
    }
    Ok(SkEsdResult {
        ranks,
        clusters: groups.iter().map(|g| g.names.iter().map(|n| n.to_string()).collect()).collect(),
        effect_sizes,
        log_transformed,
    })
}
