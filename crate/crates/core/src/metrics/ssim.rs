//! Structural similarity over a 7×7 Gaussian window.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{mean_std, MetricError};
use crate::editor::ImageGray;
use crate::perturb::PerturbationType;

pub const WINDOW: usize = 7;
pub const SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let mut g = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= sum);
    g
}

fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cov: f64) -> f64 {
    ((2.0 * mx * my + C1) * (2.0 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
}

/// Mean SSIM over all valid 7×7 windows. Images smaller than the window
/// use one global window with uniform weights.
pub fn ssim(x: &ImageGray, y: &ImageGray) -> Result<f64, MetricError> {
    if x.dimensions() != y.dimensions() {
        let (a, b) = x.dimensions();
        let (c, d) = y.dimensions();
        return Err(MetricError::DimensionMismatch(a, b, c, d));
    }
    let (w, h) = (x.width() as usize, x.height() as usize);
    let xs: Vec<f64> = x.pixels().iter().map(|&v| f64::from(v)).collect();
    let ys: Vec<f64> = y.pixels().iter().map(|&v| f64::from(v)).collect();

    if w < WINDOW || h < WINDOW {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
        let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
        let cov = xs
            .iter()
            .zip(&ys)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>()
            / n;
        return Ok(ssim_from_moments(mx, my, vx, vy, cov));
    }

    let g = gaussian_taps();
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let planes: [Vec<f64>; 5] = [
        xs.clone(),
        ys.clone(),
        xs.iter().map(|v| v * v).collect(),
        ys.iter().map(|v| v * v).collect(),
        xs.iter().zip(&ys).map(|(a, b)| a * b).collect(),
    ];
    // separable filtering: horizontal pass to ow×h, then vertical to ow×oh
    let filtered: Vec<Vec<f64>> = planes
        .iter()
        .map(|p| {
            let mut horiz = vec![0.0; ow * h];
            for r in 0..h {
                let row = &p[r * w..(r + 1) * w];
                for c in 0..ow {
                    horiz[r * ow + c] = (0..WINDOW).map(|k| g[k] * row[c + k]).sum();
                }
            }
            let mut out = vec![0.0; ow * oh];
            for r in 0..oh {
                for (k, gk) in g.iter().enumerate() {
                    let src = &horiz[(r + k) * ow..(r + k + 1) * ow];
                    for (o, s) in out[r * ow..(r + 1) * ow].iter_mut().zip(src) {
                        *o += gk * s;
                    }
                }
            }
            out
        })
        .collect();

    let [mu_x, mu_y, xx, yy, xy] = [
        &filtered[0],
        &filtered[1],
        &filtered[2],
        &filtered[3],
        &filtered[4],
    ];
    let total: f64 = (0..ow * oh)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            ssim_from_moments(mx, my, xx[i] - mx * mx, yy[i] - my * my, xy[i] - mx * my)
        })
        .sum();
    Ok(total / (ow * oh) as f64)
}

/// SSIM of many pairs, computed in parallel; results keep input order.
pub fn ssim_many(pairs: &[(&ImageGray, &ImageGray)]) -> Vec<Result<f64, MetricError>> {
    use rayon::prelude::*;
    pairs.par_iter().map(|(x, y)| ssim(x, y)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(values);
        Some(Self {
            mean,
            std,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsimSummary {
    pub per_type: BTreeMap<PerturbationType, MeanStd>,
    pub overall: MeanStd,
}

/// Mean and population std of SSIM scores, per perturbation type and overall.
pub fn ssim_summary(scores: &[(PerturbationType, f64)]) -> Result<SsimSummary, MetricError> {
    let all: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let overall = MeanStd::of(&all).ok_or_else(|| MetricError::Empty("no SSIM pairs".into()))?;
    let mut grouped: BTreeMap<PerturbationType, Vec<f64>> = BTreeMap::new();
    for (t, s) in scores {
        grouped.entry(*t).or_default().push(*s);
    }
    let per_type = grouped
        .into_iter()
        .filter_map(|(t, v)| MeanStd::of(&v).map(|m| (t, m)))
        .collect();
    Ok(SsimSummary { per_type, overall })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: u32, h: u32) -> ImageGray {
        let px = (0..w * h).map(|i| ((i * 37) % 251) as u8).collect();
        ImageGray::new(w, h, px).unwrap()
    }

    #[test]
    fn identical_is_one() {
        let a = ramp(40, 33);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let small = ramp(5, 4);
        assert!((ssim(&small, &small).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_images() {
        let a = ImageGray::filled(16, 16, 100);
        let b = ImageGray::filled(16, 16, 120);
        let want = (2.0 * 100.0 * 120.0 + C1) / (100.0f64.powi(2) + 120.0f64.powi(2) + C1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.9836).abs() < 1e-4);
    }

    #[test]
    fn symmetric_and_sized() {
        let a = ramp(20, 20);
        let mut b = a.clone();
        b.set(3, 4, 0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!(matches!(
            ssim(&a, &ramp(20, 21)),
            Err(MetricError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn taps_sum_to_one() {
        assert!((gaussian_taps().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn summary_groups_by_type() {
        let s = ssim_summary(&[
            (PerturbationType::Insertion, 0.8),
            (PerturbationType::Insertion, 0.6),
            (PerturbationType::Deletion, 0.7),
        ])
        .unwrap();
        let ins = s.per_type[&PerturbationType::Insertion];
        assert!((ins.mean - 0.7).abs() < 1e-12 && (ins.std - 0.1).abs() < 1e-12);
        assert!((s.overall.mean - 0.7).abs() < 1e-12);
        assert!(!s.per_type.contains_key(&PerturbationType::IntraClass));
        assert!(ssim_summary(&[]).is_err());
    }
}
