//! Deterministic numerical kernel shared by every pillar.
//!
//! Everything here is a pure function of its inputs except [`SeededRng`],
//! which is a single-owner stream. Non-finite inputs are rejected rather than
//! propagated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("series is empty")]
    Empty,
    #[error("series contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series is constant; {0} is undefined")]
    Constant(&'static str),
    #[error("percentile level {0} is outside [0, 1]")]
    BadLevel(f64),
}

/// An ordered list of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Series(Vec<f64>);

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Series {
    type Error = StatsError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Series::new(v)
    }
}

impl From<Series> for Vec<f64> {
    fn from(s: Series) -> Self {
        s.0
    }
}

impl AsRef<[f64]> for Series {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

fn check_nonempty(xs: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(xs)
}

fn check_pair(xs: &[f64], ys: &[f64], min_len: usize) -> Result<(), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < min_len {
        return Err(StatsError::TooShort {
            needed: min_len,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    check_finite(ys)
}

pub fn mean(xs: &[f64]) -> Result<f64, StatsError> {
    check_nonempty(xs)?;
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Linear-interpolation percentile at fractional rank `h = (n - 1) * p` over
/// the sorted values.
pub fn percentile(xs: &[f64], p: f64) -> Result<f64, StatsError> {
    check_nonempty(xs)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::BadLevel(p));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Min-max normalization onto `[0, 1]`. A constant series maps to all zeros so
/// that an uninformative indicator carries zero dispersion downstream.
pub fn minmax_norm(xs: &[f64]) -> Result<Vec<f64>, StatsError> {
    check_nonempty(xs)?;
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let range = hi - lo;
    if range <= 0.0 {
        return Ok(vec![0.0; xs.len()]);
    }
    Ok(xs.iter().map(|x| (x - lo) / range).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// Divide by `M`.
    Population,
    /// Divide by `M - 1`.
    Sample,
}

pub fn std_dev(xs: &[f64], mode: StdMode) -> Result<f64, StatsError> {
    let min_len = match mode {
        StdMode::Population => 1,
        StdMode::Sample => 2,
    };
    if xs.len() < min_len {
        return Err(if xs.is_empty() {
            StatsError::Empty
        } else {
            StatsError::TooShort {
                needed: min_len,
                got: xs.len(),
            }
        });
    }
    let mu = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
    let denom = match mode {
        StdMode::Population => xs.len() as f64,
        StdMode::Sample => (xs.len() - 1) as f64,
    };
    Ok((ss / denom).sqrt())
}

/// Least-squares line `y = slope_k * t + intercept_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope_k: f64,
    pub intercept_d: f64,
}

impl TrendFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.slope_k * t + self.intercept_d
    }
}

/// Ordinary least squares over `(t, y)` points. The fit is computed on
/// centered abscissae so large day counts do not cost precision.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<TrendFit, StatsError> {
    if points.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: points.len(),
        });
    }
    for (i, (t, y)) in points.iter().enumerate() {
        if !t.is_finite() || !y.is_finite() {
            return Err(StatsError::NonFinite(i));
        }
    }
    let n = points.len() as f64;
    let t_bar = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_bar = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), &(t, y)| {
        let dt = t - t_bar;
        (sxy + dt * (y - y_bar), sxx + dt * dt)
    });
    if sxx == 0.0 {
        return Err(StatsError::Constant("slope"));
    }
    let slope_k = sxy / sxx;
    Ok(TrendFit {
        slope_k,
        intercept_d: y_bar - slope_k * t_bar,
    })
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check_pair(xs, ys, 2)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant("pearson correlation"));
    }
    // one sqrt of the product keeps r(x, x) exactly 1
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Fractional (mid) ranks, 1-based; tied values share their average rank.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check_pair(xs, ys, 2)?;
    pearson(&midranks(xs), &midranks(ys))
}

/// Kendall's tau-b, adjusted for ties on either side.
pub fn kendall(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check_pair(xs, ys, 2)?;
    let n = xs.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = xs[i].total_cmp(&xs[j]) as i64;
            let dy = ys[i].total_cmp(&ys[j]) as i64;
            if xs[i] == xs[j] {
                ties_x += 1;
            }
            if ys[i] == ys[j] {
                ties_y += 1;
            }
            if xs[i] != xs[j] && ys[i] != ys[j] {
                if dx == dy {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - ties_x) * (pairs - ties_y)) as f64).sqrt();
    if denom == 0.0 {
        return Err(StatsError::Constant("kendall tau-b"));
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// SplitMix64 finalizer, used to derive independent per-task seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for task `index` of a run seeded with `seed`: `seed ^ mix64(index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ mix64(index)
}

/// ChaCha8 stream seeded through `SeedableRng::seed_from_u64`.
///
/// The stream is platform-independent. Normal draws use the ziggurat sampler
/// from `rand_distr`; subset draws use `rand::seq::index::sample` and are
/// returned sorted.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `k` distinct indices drawn uniformly from `0..n`, ascending.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut picked = rand::seq::index::sample(&mut self.inner, n, k).into_vec();
        picked.sort_unstable();
        picked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentile_interpolates_at_fractional_rank() {
        let xs = [0.0, 25.0, 50.0, 75.0, 100.0];
        // h = 3.6 -> 75 + 0.6 * 25
        assert!((percentile(&xs, 0.9).unwrap() - 90.0).abs() < 1e-12);
        // h = 0.4 -> 0 + 0.4 * 25
        assert!((percentile(&xs, 0.1).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 0.37).unwrap(), 7.0);
        assert_eq!(percentile(&[], 0.5), Err(StatsError::Empty));
        assert!(matches!(percentile(&xs, 1.5), Err(StatsError::BadLevel(_))));
    }

    #[test]
    fn minmax_cases() {
        assert_eq!(minmax_norm(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_norm(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(minmax_norm(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn ols_cases() {
        let fit = ols_fit(&[(0.0, 0.2), (10.0, 0.3), (20.0, 0.4)]).unwrap();
        assert!((fit.slope_k - 0.01).abs() < 1e-12);
        assert!((fit.intercept_d - 0.2).abs() < 1e-12);

        let fit = ols_fit(&[(0.0, 3.5), (1.0, 3.5)]).unwrap();
        assert_eq!(fit.slope_k, 0.0);
        assert_eq!(fit.intercept_d, 3.5);

        let fit = ols_fit(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!((fit.slope_k - 1.0).abs() < 1e-15);
        assert!(fit.intercept_d.abs() < 1e-15);

        assert_eq!(
            ols_fit(&[(4.0, 1.0), (4.0, 2.0)]),
            Err(StatsError::Constant("slope"))
        );
    }

    #[test]
    fn correlation_closed_forms() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&x, &[1.0; 4]).is_err());

        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 3.0, 2.0];
        assert!((spearman(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!((kendall(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(kendall(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn kendall_tau_b_with_ties() {
        // x ties on one pair: n0 = 6, n1 = 1, n2 = 0
        // pairs: (0,1) c, (0,2) c, (0,3) c, (1,2) tie-x, (1,3) c, (2,3) c -> C=5, D=0
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let expected = 5.0 / (5.0f64 * 6.0).sqrt();
        assert!((kendall(&x, &y).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn std_dev_cases() {
        assert_eq!(std_dev(&[1.0, 1.0, 1.0], StdMode::Population).unwrap(), 0.0);
        assert_eq!(std_dev(&[0.0, 2.0], StdMode::Population).unwrap(), 1.0);
        assert!((std_dev(&[0.0, 2.0], StdMode::Sample).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(std_dev(&[1.0], StdMode::Sample).is_err());
    }

    #[test]
    fn rng_is_deterministic() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        let xs: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_ne!(SeededRng::new(43).next_u64(), xs[0]);
    }

    #[test]
    fn rng_normal_moments() {
        let mut rng = SeededRng::new(7);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.standard_normal()).collect();
        assert!(mean(&draws).unwrap().abs() < 0.02);
        assert!((std_dev(&draws, StdMode::Sample).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn rng_subset_contract() {
        let mut rng = SeededRng::new(1);
        for _ in 0..50 {
            let s = rng.subset(10, 3);
            assert_eq!(s.len(), 3);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 10));
        }
        assert!(rng.subset(5, 0).is_empty());
    }

    #[test]
    fn rank_correlations_on_permutations_up_to_eight() {
        for n in 2..=8 {
            let id: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let rev: Vec<f64> = id.iter().rev().copied().collect();
            assert!((spearman(&id, &id).unwrap() - 1.0).abs() < 1e-12);
            assert!((kendall(&id, &id).unwrap() - 1.0).abs() < 1e-12);
            assert!((spearman(&id, &rev).unwrap() + 1.0).abs() < 1e-12);
            assert!((kendall(&id, &rev).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    fn finite_vec(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, min..max)
    }

    proptest! {
        #[test]
        fn percentile_endpoints(xs in finite_vec(1, 30)) {
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(percentile(&xs, 0.0).unwrap(), lo);
            prop_assert_eq!(percentile(&xs, 1.0).unwrap(), hi);
        }

        #[test]
        fn minmax_affine_invariant(xs in finite_vec(2, 30), a in 0.01f64..100.0, b in -50.0f64..50.0) {
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi - lo > 1e-3);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let nx = minmax_norm(&xs).unwrap();
            let ny = minmax_norm(&ys).unwrap();
            for (p, q) in nx.iter().zip(&ny) {
                prop_assert!((p - q).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(p));
            }
        }

        #[test]
        fn ols_residuals_orthogonal(pts in prop::collection::vec((0.0f64..400.0, 0.0f64..1.0), 2..40)) {
            let fit = match ols_fit(&pts) { Ok(f) => f, Err(_) => return Ok(()) };
            let (mut r1, mut rt, mut scale) = (0.0, 0.0, 0.0);
            for &(t, y) in &pts {
                let r = y - fit.predict(t);
                r1 += r;
                rt += r * t;
                scale += t.abs() + 1.0;
            }
            prop_assert!(r1.abs() <= 1e-9 * scale);
            prop_assert!(rt.abs() <= 1e-9 * scale * 400.0);
        }

        #[test]
        fn spearman_monotone_transform_is_one(xs in prop::collection::hash_set(-1000i32..1000, 2..25)) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (x / 100.0).exp() + x * 3.0).collect();
            prop_assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn population_sample_identity(xs in finite_vec(2, 40)) {
            let m = xs.len() as f64;
            let p = std_dev(&xs, StdMode::Population).unwrap();
            let s = std_dev(&xs, StdMode::Sample).unwrap();
            let lhs = p * p * m;
            let rhs = s * s * (m - 1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0));
        }
    }

    #[test]
    fn series_rejects_non_finite() {
        assert_eq!(Series::new(vec![1.0, f64::NAN]), Err(StatsError::NonFinite(1)));
        assert!(Series::new(vec![1.0, 2.0]).is_ok());
    }
}
