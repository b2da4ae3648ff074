//! Desk-scale stand-ins for real benchmark data: three regimes with clearly
//! different dynamics, plus a mixture used as an unseen finetune target.

use crate::numerics::{Matrix, Rng};

use super::RawDataset;

pub const LENGTH: usize = 4000;
pub const FEATURES: usize = 4;
pub const SINE_PERIODS: [usize; FEATURES] = [12, 24, 36, 48];
pub const SINE_NOISE: f64 = 0.1;
pub const AR_PHI: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Sinusoid,
    Autoregressive,
    RandomWalk,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Sinusoid, Regime::Autoregressive, Regime::RandomWalk];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Sinusoid => "sine",
            Regime::Autoregressive => "ar1",
            Regime::RandomWalk => "walk",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Regime::Sinusoid => 1,
            Regime::Autoregressive => 2,
            Regime::RandomWalk => 3,
        }
    }
}

/// `len × d` values of one regime.
pub fn regime_values(regime: Regime, len: usize, d: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(len, d);
    for j in 0..d {
        match regime {
            Regime::Sinusoid => {
                let period = SINE_PERIODS[j % SINE_PERIODS.len()] as f64;
                let phase = rng.uniform(0.0, std::f64::consts::TAU);
                for t in 0..len {
                    let angle = std::f64::consts::TAU * t as f64 / period + phase;
                    m[(t, j)] = angle.sin() + SINE_NOISE * rng.normal();
                }
            }
            Regime::Autoregressive => {
                let mut x = rng.normal() / (1.0 - AR_PHI * AR_PHI).sqrt();
                for t in 0..len {
                    m[(t, j)] = x;
                    x = AR_PHI * x + rng.normal();
                }
            }
            Regime::RandomWalk => {
                let mut x = 0.0;
                for t in 0..len {
                    x += rng.normal();
                    m[(t, j)] = x;
                }
            }
        }
    }
    m
}

fn with_dates(name: &str, values: Matrix) -> RawDataset {
    let mut ds = RawDataset::from_matrix(name, values);
    ds.timestamps = (0..ds.len()).map(hourly_timestamp).collect();
    ds.granularity = Some("1 hour".into());
    ds
}

/// The three regimes, each `LENGTH × FEATURES`, deterministic in `seed`.
pub fn regimes(seed: u64) -> Vec<RawDataset> {
    Regime::ALL
        .iter()
        .map(|&r| {
            let mut rng = Rng::new(seed).fork(r.stream());
            with_dates(r.name(), regime_values(r, LENGTH, FEATURES, &mut rng))
        })
        .collect()
}

/// `weight · sine + (1 − weight) · ar1`, drawn from streams independent of `regimes`.
pub fn mixture(seed: u64, weight: f64) -> RawDataset {
    let mut rng = Rng::new(seed).fork(17);
    let a = regime_values(Regime::Sinusoid, LENGTH, FEATURES, &mut rng);
    let b = regime_values(Regime::Autoregressive, LENGTH, FEATURES, &mut rng);
    let mut m = Matrix::zeros(LENGTH, FEATURES);
    for t in 0..LENGTH {
        for j in 0..FEATURES {
            m[(t, j)] = weight * a[(t, j)] + (1.0 - weight) * b[(t, j)];
        }
    }
    with_dates("mix", m)
}

/// `YYYY-MM-DD HH:00:00` for hour `h` after 2020-01-01 00:00.
fn hourly_timestamp(h: usize) -> String {
    // Days since 1970-01-01 for 2020-01-01.
    let days = 18262 + (h / 24) as i64;
    let (y, m, d) = civil_from_days(days);
    format!("{y:04}-{m:02}-{d:02} {:02}:00:00", h % 24)
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn autocorrelation(x: &[f64], lag: usize) -> f64 {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum();
        cov / var
    }

    #[test]
    fn shapes_and_determinism() {
        let a = regimes(3);
        let b = regimes(3);
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.values.shape(), (LENGTH, FEATURES));
            assert_eq!(x.values, y.values);
        }
        assert_ne!(regimes(4)[0].values, a[0].values);
    }

    #[test]
    fn sine_autocorrelation_at_period() {
        let ds = &regimes(11)[0];
        for j in 0..FEATURES {
            let col = ds.values.column(j);
            let r = autocorrelation(&col, SINE_PERIODS[j]);
            assert!(r > 0.8, "feature {j}: {r}");
        }
    }

    #[test]
    fn ar_lag_one_autocorrelation_near_phi() {
        let ds = &regimes(12)[1];
        let r = autocorrelation(&ds.values.column(0), 1);
        assert!((r - AR_PHI).abs() < 0.05, "{r}");
    }

    #[test]
    fn timestamps_roll_over_months() {
        assert_eq!(hourly_timestamp(0), "2020-01-01 00:00:00");
        assert_eq!(hourly_timestamp(31 * 24 + 5), "2020-02-01 05:00:00");
        assert_eq!(hourly_timestamp(60 * 24), "2020-03-01 00:00:00");
    }
}
