/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov p-value for integer samples.
pub fn ks_two_sample_p(a: &[u32], b: &[u32]) -> f64 {
    let top = *a.iter().chain(b).max().unwrap() as usize;
    let cdf = |xs: &[u32]| {
        let mut h = vec![0usize; top + 1];
        for &x in xs {
            h[x as usize] += 1;
        }
        let mut acc = 0;
        h.iter()
            .map(|c| {
                acc += c;
                acc as f64 / xs.len() as f64
            })
            .collect::<Vec<_>>()
    };
    let (fa, fb) = (cdf(a), cdf(b));
    let d = fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (n, m) = (a.len() as f64, b.len() as f64);
    kolmogorov_survival(d * (n * m / (n + m)).sqrt())
}
