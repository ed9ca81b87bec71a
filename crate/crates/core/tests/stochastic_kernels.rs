use jumpfbsde::kernels::{
    compound_poisson, cox_counts, gamma_subordinator, gaussian_increments, merton_jump_sizes, poisson_counts,
    vg_increments, Purpose, RngStream,
};
use proptest::prelude::*;

mod common;
use common::{kolmogorov_survival, ks_two_sample_p};

const N: usize = 1_000_000;

fn stream(index: u64, purpose: Purpose) -> RngStream {
    RngStream::new(2024, index, 0, purpose)
}

struct Moments {
    mean: f64,
    var: f64,
    n: f64,
}

impl Moments {
    fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
        for x in xs {
            n += 1.0;
            s += x;
            s2 += x * x;
        }
        let mean = s / n;
        Self { mean, var: (s2 / n - mean * mean) * n / (n - 1.0), n }
    }

    fn mean_se(&self) -> f64 {
        (self.var / self.n).sqrt()
    }
}

/// Standard error of the sample variance from the fourth central moment.
fn variance_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2) / n).sqrt()
}

#[test]
fn kolmogorov_oracle_values() {
    assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-3);
    assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-3);
}

#[test]
fn gaussian_moments() {
    let dt = 0.02;
    let xs = gaussian_increments(&stream(1, Purpose::Brownian), N, 1, dt).unwrap().into_vec();
    let m = Moments::of(xs.iter().copied());
    assert!(m.mean.abs() <= 4.0 * m.mean_se(), "mean {}", m.mean);
    assert!((m.var - dt).abs() <= 4.0 * variance_se(&xs), "var {}", m.var);
}

#[test]
fn gaussian_zero_dt_and_determinism() {
    let z = gaussian_increments(&stream(2, Purpose::Brownian), 50, 3, 0.0).unwrap();
    assert_eq!(z.shape(), (50, 3));
    assert!(z.as_slice().iter().all(|&v| v == 0.0));
    let a = gaussian_increments(&stream(3, Purpose::Brownian), 100, 2, 0.1).unwrap();
    let b = gaussian_increments(&stream(3, Purpose::Brownian), 100, 2, 0.1).unwrap();
    assert_eq!(a, b);
    assert!(gaussian_increments(&stream(3, Purpose::Brownian), 1, 1, -1.0).is_err());
}

#[test]
fn poisson_moments_and_dispersion() {
    let (lambda, dt) = (3.0, 1.0 / 50.0);
    let counts = poisson_counts(&stream(4, Purpose::JumpCount), lambda, dt, N).unwrap();
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let m = Moments::of(xs.iter().copied());
    assert!((m.mean - 0.06).abs() <= 4.0 * (0.06f64 / N as f64).sqrt(), "mean {}", m.mean);
    assert!((m.var - 0.06).abs() <= 4.0 * variance_se(&xs), "var {}", m.var);
}

#[test]
fn poisson_degenerate_and_invalid() {
    assert!(poisson_counts(&stream(5, Purpose::JumpCount), 0.0, 0.1, 1000).unwrap().iter().all(|&c| c == 0));
    assert!(poisson_counts(&stream(5, Purpose::JumpCount), -1.0, 0.1, 10).is_err());
}

#[test]
fn merton_marks_moments() {
    let xs = merton_jump_sizes(&stream(6, Purpose::JumpMarks), N, 0.0, 0.2).unwrap();
    let m = Moments::of(xs.iter().copied());
    assert!(m.mean.abs() <= 4.0 * m.mean_se());
    let sd_se = variance_se(&xs) / (2.0 * 0.2);
    assert!((m.var.sqrt() - 0.2).abs() <= 4.0 * sd_se, "sd {}", m.var.sqrt());
}

#[test]
fn merton_marks_degenerate_and_deterministic() {
    assert!(merton_jump_sizes(&stream(7, Purpose::JumpMarks), 100, 0.3, 0.0).unwrap().iter().all(|&e| e == 0.3));
    let a = merton_jump_sizes(&stream(8, Purpose::JumpMarks), 100, 0.0, 0.2).unwrap();
    let b = merton_jump_sizes(&stream(8, Purpose::JumpMarks), 100, 0.0, 0.2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn compound_poisson_moment_identity() {
    let (lambda, dt, alpha, xi) = (3.0, 0.5, 0.1, 0.2);
    let batch =
        compound_poisson(&stream(9, Purpose::JumpCount), &stream(9, Purpose::JumpMarks), N, lambda, dt, alpha, xi)
            .unwrap();
    assert!(batch.is_consistent());
    let sums = batch.mark_sums(|e| e);
    let m = Moments::of(sums.iter().copied());
    assert!((m.mean - lambda * dt * alpha).abs() <= 4.0 * m.mean_se(), "mean {}", m.mean);
    let var = lambda * dt * (alpha * alpha + xi * xi);
    assert!((m.var - var).abs() <= 4.0 * variance_se(&sums), "var {} vs {var}", m.var);
}

#[test]
fn vg_increment_mean() {
    let (dt, theta, sigma, kappa) = (1.0 / 30.0, -0.1, 0.2, 0.1);
    let xs = vg_increments(&stream(10, Purpose::Subordinator), N, dt, theta, sigma, kappa).unwrap();
    let m = Moments::of(xs.iter().copied());
    assert!((m.mean - theta * dt).abs() <= 4.0 * m.mean_se(), "mean {}", m.mean);
    let var = sigma * sigma * dt + theta * theta * kappa * dt;
    assert!((m.var - var).abs() <= 4.0 * variance_se(&xs), "var {} vs {var}", m.var);
}

#[test]
fn gamma_subordinator_moments() {
    let (dt, kappa) = (1.0 / 30.0, 0.1);
    let gs = gamma_subordinator(&stream(11, Purpose::Subordinator), N, dt, kappa).unwrap();
    let m = Moments::of(gs.iter().copied());
    assert!((m.mean - dt).abs() <= 4.0 * m.mean_se());
    assert!((m.var - kappa * dt).abs() <= 4.0 * variance_se(&gs), "var {}", m.var);
    assert!(gs.iter().all(|&g| g >= 0.0));
}

#[test]
fn vg_small_kappa_variance_approaches_brownian() {
    let (dt, sigma, kappa) = (0.02, 0.2, 1e-4);
    let xs = vg_increments(&stream(12, Purpose::Subordinator), 200_000, dt, -0.1, sigma, kappa).unwrap();
    let m = Moments::of(xs.iter().copied());
    let tol = 4.0 * variance_se(&xs) + 0.01 * dt * kappa;
    assert!((m.var - sigma * sigma * dt).abs() <= tol, "var {}", m.var);
}

#[test]
fn vg_zero_parameters_give_zero() {
    let xs = vg_increments(&stream(13, Purpose::Subordinator), 1000, 0.1, 0.0, 0.0, 0.1).unwrap();
    assert!(xs.iter().all(|&x| x == 0.0));
    assert!(vg_increments(&stream(13, Purpose::Subordinator), 10, 0.1, 0.0, 0.2, 0.0).is_err());
}

#[test]
fn cox_degenerate_and_invalid() {
    let z = cox_counts(&stream(14, Purpose::CommonCount), &vec![0.0; 500], 0.1).unwrap();
    assert!(z.iter().all(|&c| c == 0));
    assert!(cox_counts(&stream(14, Purpose::CommonCount), &[1.0, -0.5], 0.1).is_err());
}

#[test]
fn cox_constant_intensity_matches_poisson_law() {
    let (lambda, dt, n) = (3.0, 1.0, 100_000);
    let cox = cox_counts(&stream(15, Purpose::CommonCount), &vec![lambda; n], dt).unwrap();
    let poi = poisson_counts(&stream(16, Purpose::JumpCount), lambda, dt, n).unwrap();
    let p = ks_two_sample_p(&cox, &poi);
    assert!(p > 0.01, "KS p-value {p}");
}

#[test]
fn cox_mean_tracks_intensities() {
    let n = 400_000;
    let lam: Vec<f64> = (0..n).map(|j| 0.5 + 4.0 * (j % 7) as f64 / 6.0).collect();
    let dt = 0.25;
    let counts = cox_counts(&stream(17, Purpose::CommonCount), &lam, dt).unwrap();
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let expected: f64 = lam.iter().map(|l| l * dt).sum();
    assert!((total - expected).abs() <= 4.0 * expected.sqrt(), "{total} vs {expected}");
}

#[test]
fn distinct_streams_are_uncorrelated() {
    let n = 100_000;
    let check = |a: Vec<f64>, b: Vec<f64>| {
        let ma = Moments::of(a.iter().copied());
        let mb = Moments::of(b.iter().copied());
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma.mean) * (y - mb.mean)).sum::<f64>() / (n as f64 - 1.0);
        let rho = cov / (ma.var * mb.var).sqrt();
        assert!(rho.abs() < 0.01, "rho {rho}");
    };
    let g = |s: RngStream| gaussian_increments(&s, n, 1, 1.0).unwrap().into_vec();
    check(g(RngStream::new(1, 0, 0, Purpose::Brownian)), g(RngStream::new(1, 1, 0, Purpose::Brownian)));
    check(g(RngStream::new(1, 0, 0, Purpose::Brownian)), g(RngStream::new(1, 0, 1, Purpose::Brownian)));
    check(g(RngStream::new(1, 0, 0, Purpose::Brownian)), g(RngStream::new(1, 0, 0, Purpose::CommonBrownian)));
    check(g(RngStream::new(1, 0, 0, Purpose::Brownian)), g(RngStream::new(2, 0, 0, Purpose::Brownian)));
}

proptest! {
    #[test]
    fn jump_batches_are_consistent(seed in 0u64..10_000, lambda in 0.0f64..20.0, dt in 0.0f64..1.0) {
        let b = compound_poisson(
            &RngStream::new(seed, 0, 0, Purpose::JumpCount),
            &RngStream::new(seed, 0, 0, Purpose::JumpMarks),
            64, lambda, dt, 0.0, 0.2,
        ).unwrap();
        prop_assert!(b.is_consistent());
        prop_assert_eq!(b.len(), 64);
    }

    #[test]
    fn same_stream_same_draws(seed in any::<u64>(), index in any::<u64>(), step in 0u64..1_000_000) {
        let s = RngStream::new(seed, index, step, Purpose::Subordinator);
        let a = vg_increments(&s, 8, 0.05, -0.1, 0.2, 0.1).unwrap();
        let b = vg_increments(&s, 8, 0.05, -0.1, 0.2, 0.1).unwrap();
        prop_assert_eq!(a, b);
    }
}
