//! Independent oracles shared by the integration and acceptance targets.

#![allow(dead_code)]

use cai_lab::cai::AnalyticModel;
use cai_lab::gaussian::{normal_pdf, DiagGaussian};

/// Model whose next-state mean is `±m` by the sign of the action, variance `v`.
pub fn two_means(m: f64, v: f64) -> AnalyticModel<impl Fn(&[f64], &[f64]) -> DiagGaussian> {
    AnalyticModel {
        state_dim: 1,
        action_dim: 1,
        f: move |_: &[f64], a: &[f64]| DiagGaussian::new(vec![if a[0] >= 0.0 { m } else { -m }], vec![v]).unwrap(),
    }
}

/// `I(S'; A)` for an equal mixture of `N(m, v)` and `N(-m, v)`: the mixture
/// entropy by composite Simpson quadrature minus the component entropy.
pub fn two_means_cmi(m: f64, v: f64) -> f64 {
    let sd = v.sqrt();
    let (lo, hi) = (-m - 12.0 * sd, m + 12.0 * sd);
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let p = 0.5 * normal_pdf(x, m, v) + 0.5 * normal_pdf(x, -m, v);
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        if p > 0.0 {
            acc -= w * p * p.ln();
        }
    }
    let mixture_entropy = acc * h / 3.0;
    mixture_entropy - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * v).ln()
}

fn counts(scores: &[f64], labels: &[bool], t: f64) -> (u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    for (s, l) in scores.iter().zip(labels) {
        if *s >= t {
            if *l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (tp, fp)
}

fn distinct_desc(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

/// AUC by comparing every positive with every negative.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, li) in labels.iter().enumerate() {
        if *li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, lj) in labels.iter().enumerate() {
            if *lj {
                continue;
            }
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}

/// Step-wise average precision, recounting the confusion matrix at each distinct threshold.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|l| **l).count() as u64;
    let mut ap = 0.0;
    let mut prev = 0;
    for t in distinct_desc(scores) {
        let (tp, fp) = counts(scores, labels, t);
        if tp > prev {
            ap += (tp - prev) as f64 / pos as f64 * (tp as f64 / (tp + fp) as f64);
        }
        prev = tp;
    }
    ap
}

/// Best F1 and the lowest threshold attaining it.
pub fn brute_f1(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let pos = labels.iter().filter(|l| **l).count() as u64;
    let mut best = (-1.0, f64::INFINITY);
    for t in distinct_desc(scores) {
        let (tp, fp) = counts(scores, labels, t);
        let f1 = (2 * tp) as f64 / (2 * tp + fp + (pos - tp)) as f64;
        if f1 >= best.0 {
            best = (f1, t);
        }
    }
    best
}
