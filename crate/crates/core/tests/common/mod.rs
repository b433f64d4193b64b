//! Shared helpers: literal loop transcriptions of the metric definitions and
//! random curve generators. Kept deliberately naive.

#![allow(dead_code, clippy::needless_range_loop)]

use mismatch_core::{Direction, MetricSeries, PairedRun};
use rand::Rng;

pub fn series(name: &str, values: &[f64]) -> MetricSeries {
    let steps = (0..values.len() as u64).collect();
    MetricSeries::new(name, "loss", Direction::LowerIsBetter, steps, values.to_vec()).unwrap()
}

pub fn run(pretext: &[f64], target: &[f64]) -> PairedRun {
    PairedRun::new(series("pretext", pretext), series("target", target)).unwrap()
}

pub fn random_curve(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.0..10.0)).collect()
}

pub mod oracle {
    /// `m_i^T - m_i^P`.
    pub fn m3(t: &[f64], p: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..t.len() {
            out.push(t[i] - p[i]);
        }
        out
    }

    pub fn mm3(t: &[f64], p: &[f64]) -> f64 {
        let mut sum = 0.0;
        for i in 0..t.len() {
            sum += t[i] - p[i];
        }
        sum / t.len() as f64
    }

    /// `m_i - min_{j <= i} m_j`, with the minimum recomputed from scratch.
    pub fn sm3(t: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..t.len() {
            let mut min = t[0];
            for j in 0..=i {
                if t[j] < min {
                    min = t[j];
                }
            }
            out.push(t[i] - min);
        }
        out
    }

    pub fn msm3(t: &[f64]) -> f64 {
        let s = sm3(t);
        let mut sum = 0.0;
        for v in &s {
            sum += v;
        }
        sum / s.len() as f64
    }

    pub fn csm3(t: &[f64]) -> f64 {
        sm3(t)[t.len() - 1]
    }

    pub fn msm3_max(t: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for v in sm3(t) {
            if v > max {
                max = v;
            }
        }
        max
    }

    /// `100 x / (m_1 - m_b)`; `None` when the baseline is also the best.
    pub fn normalize(t: &[f64]) -> Option<Vec<f64>> {
        let m1 = t[0];
        let mut mb = t[0];
        for &v in t {
            if v < mb {
                mb = v;
            }
        }
        if m1 == mb {
            return None;
        }
        let mut out = Vec::new();
        for &x in t {
            out.push(100.0 * x / (m1 - mb));
        }
        Some(out)
    }

    pub fn ofm(t: &[f64]) -> Option<Vec<f64>> {
        normalize(t).map(|n| sm3(&n))
    }

    pub fn mofm(t: &[f64]) -> Option<f64> {
        normalize(t).map(|n| msm3(&n))
    }

    pub fn cofm(t: &[f64]) -> Option<f64> {
        normalize(t).map(|n| csm3(&n))
    }

    pub fn mofm_max(t: &[f64]) -> Option<f64> {
        normalize(t).map(|n| msm3_max(&n))
    }
}

/// Largest absolute difference; panics on length mismatch.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
