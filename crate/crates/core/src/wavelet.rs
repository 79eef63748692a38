//! Discrete wavelet transform with the 20-tap Daubechies-10 filter and
//! universal soft-threshold denoising.
//!
//! Signals are padded to the next multiple of `2^level` by symmetric
//! reflection, transformed with periodic convolution, thresholded, inverted
//! and truncated back to the original length. The synthesis step is the
//! adjoint of the analysis step, so reconstruction is exact for orthogonal
//! filters.

use crate::error::{Error, Result};

/// Daubechies-10 scaling (low-pass) filter, 20 taps.
///
/// Derived by spectral factorization of the degree-9 half-band polynomial;
/// the unit tests verify unit energy, orthogonality at even shifts and ten
/// vanishing moments of the induced wavelet filter.
pub const DB10_LO: [f64; 20] = [
    -1.326420289452124428e-5,
    9.358867032006959192e-5,
    -1.164668551292854490e-4,
    -6.858566949597116186e-4,
    1.992405295185056130e-3,
    1.395351747052901064e-3,
    -1.073317548333057453e-2,
    3.606553566956169701e-3,
    3.321267405934100192e-2,
    -2.945753682187581338e-2,
    -7.139414716639708169e-2,
    9.305736460357234840e-2,
    1.273693403357932519e-1,
    -1.959462743773770499e-1,
    -2.498464243273153806e-1,
    2.811723436605774729e-1,
    6.884590394536035385e-1,
    5.272011889317256284e-1,
    1.881768000776914973e-1,
    2.667005790055555423e-2,
];

/// Quadrature-mirror high-pass filter: `g[k] = (-1)^k h[L-1-k]`.
fn db10_hi() -> [f64; 20] {
    let mut g = [0.0; 20];
    for (k, slot) in g.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *slot = sign * DB10_LO[20 - 1 - k];
    }
    g
}

/// One analysis level: periodic correlation with both filters, decimated
/// by two. `signal.len()` must be even.
fn analysis_step(signal: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = signal.len();
    let half = n / 2;
    let hi = db10_hi();
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for j in 0..20 {
            let idx = (2 * k + j) % n;
            a += DB10_LO[j] * signal[idx];
            d += hi[j] * signal[idx];
        }
        approx[k] = a;
        detail[k] = d;
    }
    (approx, detail)
}

/// One synthesis level: the exact adjoint of `analysis_step`.
fn synthesis_step(approx: &[f64], detail: &[f64]) -> Vec<f64> {
    let half = approx.len();
    let n = half * 2;
    let hi = db10_hi();
    let mut out = vec![0.0; n];
    for k in 0..half {
        for j in 0..20 {
            let idx = (2 * k + j) % n;
            out[idx] += DB10_LO[j] * approx[k] + hi[j] * detail[k];
        }
    }
    out
}

/// Multi-level forward transform. Returns the coarsest approximation and
/// the detail bands from finest (`details[0]`) to coarsest.
pub fn dwt(signal: &[f64], level: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_level(signal.len(), level)?;
    let mut approx = signal.to_vec();
    let mut details = Vec::with_capacity(level);
    for _ in 0..level {
        let (a, d) = analysis_step(&approx);
        details.push(d);
        approx = a;
    }
    Ok((approx, details))
}

/// Inverse of [`dwt`].
pub fn idwt(approx: &[f64], details: &[Vec<f64>]) -> Vec<f64> {
    let mut current = approx.to_vec();
    for d in details.iter().rev() {
        current = synthesis_step(&current, d);
    }
    current
}

fn check_level(len: usize, level: usize) -> Result<()> {
    if level == 0 {
        return Err(Error::Domain("decomposition level must be >= 1".into()));
    }
    if len < (1usize << level) {
        return Err(Error::Domain(format!(
            "level {level} too deep for signal length {len}"
        )));
    }
    if len % (1 << level) != 0 {
        return Err(Error::Domain(format!(
            "signal length {len} is not a multiple of 2^{level}"
        )));
    }
    Ok(())
}

/// Pad by symmetric reflection at the right edge to the next multiple of
/// `2^level`.
fn pad_symmetric(signal: &[f64], level: usize) -> Vec<f64> {
    let n = signal.len();
    let block = 1usize << level;
    let target = n.div_ceil(block) * block;
    let mut padded = Vec::with_capacity(target);
    padded.extend_from_slice(signal);
    let mut step_back = true;
    // reflect x[n-2], x[n-3], ..., bouncing at the edges for long pads
    let mut pos = n.saturating_sub(1);
    while padded.len() < target {
        if n == 1 {
            padded.push(signal[0]);
            continue;
        }
        if step_back {
            if pos == 0 {
                step_back = false;
                pos = 1;
            } else {
                pos -= 1;
            }
        } else if pos + 1 >= n {
            step_back = true;
            pos = n - 2;
        } else {
            pos += 1;
        }
        padded.push(signal[pos]);
    }
    padded
}

fn median_abs(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x.abs() <= t {
        0.0
    } else {
        x.signum() * (x.abs() - t)
    }
}

/// Denoise a signal by soft-thresholding every detail band at
/// `alpha * sigma_hat * sqrt(2 ln L)`, with `sigma_hat` the median absolute
/// deviation of the finest details over 0.6745 and `L` the padded length.
pub fn daubechies10_denoise(signal: &[f64], level: usize, alpha: f64) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Ok(Vec::new());
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!("threshold multiplier {alpha} must be >= 0")));
    }
    if signal.len() < (1usize << level) {
        return Err(Error::Domain(format!(
            "level {level} too deep for signal length {}",
            signal.len()
        )));
    }
    let padded = pad_symmetric(signal, level);
    let (approx, mut details) = dwt(&padded, level)?;
    let sigma_hat = median_abs(&details[0]) / 0.6745;
    let threshold = alpha * sigma_hat * (2.0 * (padded.len() as f64).ln()).sqrt();
    for band in &mut details {
        for v in band.iter_mut() {
            *v = soft_threshold(*v, threshold);
        }
    }
    let mut out = idwt(&approx, &details);
    out.truncate(signal.len());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn filter_identities() {
        let sum: f64 = DB10_LO.iter().sum();
        assert!((sum - 2.0_f64.sqrt()).abs() < 1e-14);
        let energy: f64 = DB10_LO.iter().map(|x| x * x).sum();
        assert!((energy - 1.0).abs() < 1e-14);
        for m in 1..10 {
            let dot: f64 = (0..20 - 2 * m).map(|i| DB10_LO[i] * DB10_LO[i + 2 * m]).sum();
            assert!(dot.abs() < 1e-14, "shift {m}: {dot}");
        }
    }

    #[test]
    fn wavelet_filter_has_ten_vanishing_moments() {
        let g = db10_hi();
        for p in 0..10u32 {
            let moment: f64 = g
                .iter()
                .enumerate()
                .map(|(k, &v)| v * (k as f64).powi(p as i32))
                .sum();
            // conditioning worsens with the moment order
            let tol = 1e-10 * 20f64.powi(p as i32);
            assert!(moment.abs() < tol, "moment {p}: {moment}");
        }
    }

    #[test]
    fn perfect_reconstruction_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        // includes bands shorter than the filter support (periodization
        // keeps the bank orthogonal for any even band length)
        for &(len, level) in &[(128usize, 2usize), (128, 5), (640, 5), (1024, 3)] {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, d) = dwt(&x, level).unwrap();
            let back = idwt(&a, &d);
            for i in 0..len {
                assert!((back[i] - x[i]).abs() < 1e-10, "len={len} level={level} i={i}");
            }
        }
    }

    #[test]
    fn constant_signal_passes_through_unchanged() {
        let x = vec![0.75; 100];
        let out = daubechies10_denoise(&x, 2, 3.0).unwrap();
        assert_eq!(out.len(), 100);
        for v in &out {
            assert!((v - 0.75).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn denoising_contracts_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut wins = 0;
        let trials = 1000;
        for _ in 0..trials {
            let x: Vec<f64> = (0..100)
                .map(|_| {
                    let u1: f64 = rng.random::<f64>().max(1e-12);
                    let u2: f64 = rng.random();
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let out = daubechies10_denoise(&x, 3, 3.0).unwrap();
            let var = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
            };
            if var(&out) < var(&x) {
                wins += 1;
            }
        }
        assert_eq!(wins, trials, "thresholding must reduce variance on noise");
    }

    #[test]
    fn level_too_deep_is_an_error() {
        let x = vec![0.0; 20];
        assert!(daubechies10_denoise(&x, 5, 3.0).is_err());
        assert!(dwt(&vec![0.0; 100], 3).is_err(), "100 is not a multiple of 8");
        assert!(dwt(&vec![0.0; 64], 7).is_err());
    }

    #[test]
    fn window_lengths_pad_to_valid_sizes() {
        // the benchmark windows are 100 sites at levels 2..=5
        for level in 2..=5 {
            let x = vec![0.5; 100];
            let out = daubechies10_denoise(&x, level, 3.0).unwrap();
            assert_eq!(out.len(), 100);
        }
    }
}
