//! Brute-force reference implementations, written straight from the
//! definitions and sharing no code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;

pub fn auroc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &ti) in truth.iter().enumerate() {
        if !ti {
            continue;
        }
        for (j, &tj) in truth.iter().enumerate() {
            if tj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Rank of item `i` when sorted by descending score, earlier index first on ties.
fn rank(scores: &[f64], i: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
        .count()
}

pub fn auprc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let positives: Vec<usize> = (0..truth.len()).filter(|&i| truth[i]).collect();
    if positives.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for &i in &positives {
        let r = rank(scores, i);
        let tp = positives.iter().filter(|&&j| rank(scores, j) <= r).count();
        sum += tp as f64 / r as f64;
    }
    Some(sum / positives.len() as f64)
}

pub fn f1(scores: &[f64], truth: &[bool], t: f64) -> f64 {
    let tp = (0..scores.len())
        .filter(|&i| scores[i] >= t && truth[i])
        .count();
    let fp = (0..scores.len())
        .filter(|&i| scores[i] >= t && !truth[i])
        .count();
    let fn_ = (0..scores.len())
        .filter(|&i| scores[i] < t && truth[i])
        .count();
    if tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

pub fn tune_threshold(scores: &[f64], truth: &[bool]) -> f64 {
    let pos = truth.iter().filter(|&&t| t).count();
    let constant = scores.iter().all(|&s| s == scores[0]);
    if pos == 0 || pos == truth.len() || constant {
        return 0.5;
    }
    let mut best_t = 0.5;
    let mut best_f = -1.0;
    for k in 1..=99 {
        let t = k as f64 / 100.0;
        let f = f1(scores, truth, t);
        if f > best_f {
            best_f = f;
            best_t = t;
        }
    }
    best_t
}

pub fn entropy(rows: &[[f64; 5]]) -> f64 {
    let h = |p: f64| {
        let mut e = 0.0;
        if p > 0.0 {
            e -= p * p.ln();
        }
        if p < 1.0 {
            e -= (1.0 - p) * (1.0 - p).ln();
        }
        e
    };
    let mut total = 0.0;
    for row in rows {
        let mut s = 0.0;
        for &p in row {
            s += h(p);
        }
        total += s / 5.0;
    }
    total / rows.len() as f64
}

pub fn ece(scores: &[f64], truth: &[bool], bins: usize) -> f64 {
    let n = scores.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let members: Vec<usize> = (0..scores.len())
            .filter(|&i| {
                let p = scores[i];
                if b == bins - 1 {
                    p * bins as f64 >= b as f64
                } else {
                    (p * bins as f64).floor() as usize == b
                }
            })
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let conf = members.iter().map(|&i| scores[i]).sum::<f64>() / m;
        let acc = members.iter().filter(|&&i| truth[i]).count() as f64 / m;
        total += m / n * (conf - acc).abs();
    }
    total
}

/// A random prediction/truth instance: `n` rows, 5 labels, with a mix of
/// continuous, rounded (tied) and saturated probabilities.
pub fn random_instance(rng: &mut impl Rng, n: usize) -> (Vec<[f64; 5]>, Vec<[bool; 5]>) {
    let style = rng.random_range(0..3);
    let prevalence: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.05..0.6));
    let mut probs = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let t: [bool; 5] = std::array::from_fn(|j| rng.random_bool(prevalence[j]));
        let p: [f64; 5] = std::array::from_fn(|j| {
            let signal = if t[j] { 0.25 } else { 0.0 };
            let raw: f64 = (rng.random::<f64>() * 0.75 + signal).min(1.0);
            match style {
                0 => raw,
                1 => (raw * 20.0).round() / 20.0,
                _ => {
                    if rng.random_bool(0.1) {
                        if rng.random_bool(0.5) {
                            0.0
                        } else {
                            1.0
                        }
                    } else {
                        (raw * 100.0).round() / 100.0
                    }
                }
            }
        });
        probs.push(p);
        truth.push(t);
    }
    (probs, truth)
}

/// Mean SSIM over every 7×7 window, each computed directly with central
/// moments under Gaussian (σ = 1.5) weights.
pub fn ssim(w: usize, h: usize, x: &[u8], y: &[u8]) -> f64 {
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut weights = [[0.0f64; 7]; 7];
    let mut norm = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - 3.0).powi(2) + (j as f64 - 3.0).powi(2);
            *cell = (-d2 / (2.0 * 1.5 * 1.5)).exp();
            norm += *cell;
        }
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - 7 {
        for c in 0..=w - 7 {
            let at = |img: &[u8], i: usize, j: usize| f64::from(img[(r + i) * w + c + j]);
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..7 {
                for j in 0..7 {
                    let wt = weights[i][j] / norm;
                    mx += wt * at(x, i, j);
                    my += wt * at(y, i, j);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..7 {
                for j in 0..7 {
                    let wt = weights[i][j] / norm;
                    let (dx, dy) = (at(x, i, j) - mx, at(y, i, j) - my);
                    vx += wt * dx * dx;
                    vy += wt * dy * dy;
                    cov += wt * dx * dy;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}
