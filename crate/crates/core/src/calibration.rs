//! Leave-one-benchmark-out model capability calibration.
//!
//! Every benchmark is a round-robin tournament: a higher score beats a lower
//! one, and scores equal after rounding to four decimals tie. A model's win
//! rate for held-out benchmark `b` pools its battles on every other benchmark
//! it entered, and the capability damps that rate by a fourth-root
//! log-balance of how many pool benchmarks the model covers.
//!
//! Battle points are kept as integers (two per win, one per tie) so that
//! profiles are exact functions of the pool and never depend on the
//! held-out benchmark's scores.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::MatrixView;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("LOBO calibration needs at least 2 benchmarks, got {0}")]
    EmptyPool(usize),
    #[error("model `{model}` has no battles outside held-out benchmark `{held_out}`")]
    AbsentModel { model: String, held_out: String },
    #[error("log-balance pool size must be at least 1")]
    ZeroPool,
    #[error("participation count {n} exceeds pool size {pool}")]
    BadParticipation { n: usize, pool: usize },
}

/// What to do with a model that has no battles in the LOBO pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentPolicy {
    #[default]
    Error,
    /// Assign capability 0.
    Zero,
}

impl std::str::FromStr for AbsentPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "error" => Ok(Self::Error),
            "zero" => Ok(Self::Zero),
            other => Err(format!("unknown absent-model policy `{other}` (expected error|zero)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BattleTally {
    pub wins: u32,
    pub ties: u32,
    pub losses: u32,
    pub opponents: u32,
}

impl BattleTally {
    /// `2 * wins + ties`.
    pub fn doubled_points(&self) -> u64 {
        2 * self.wins as u64 + self.ties as u64
    }
}

fn tie_key(score: f64) -> i64 {
    (score * 1e4).round() as i64
}

/// Round-robin tallies for one benchmark of the view.
pub fn tally_battles(view: &MatrixView, benchmark: &str) -> BTreeMap<String, BattleTally> {
    let Some(row) = view.rows.get(benchmark) else {
        return BTreeMap::new();
    };
    let keys: Vec<(&String, i64)> = row.iter().map(|(m, o)| (m, tie_key(o.score))).collect();
    let opponents = keys.len().saturating_sub(1) as u32;
    keys.iter()
        .map(|&(model, k)| {
            let mut t = BattleTally {
                wins: 0,
                ties: 0,
                losses: 0,
                opponents,
            };
            for &(other, k2) in &keys {
                if other == model {
                    continue;
                }
                match k.cmp(&k2) {
                    std::cmp::Ordering::Greater => t.wins += 1,
                    std::cmp::Ordering::Equal => t.ties += 1,
                    std::cmp::Ordering::Less => t.losses += 1,
                }
            }
            (model.clone(), t)
        })
        .collect()
}

/// Pooled win rate `sum(win + 0.5 tie) / sum(N_b' - 1)` over the given
/// tallies, which must already exclude the held-out benchmark. `None` when
/// the model has no battles in the pool.
pub fn lobo_win_rate<'a>(tallies: impl IntoIterator<Item = &'a BattleTally>) -> Option<f64> {
    let (points, opponents) = tallies
        .into_iter()
        .fold((0u64, 0u64), |(p, o), t| (p + t.doubled_points(), o + t.opponents as u64));
    (opponents > 0).then(|| points as f64 / 2.0 / opponents as f64)
}

/// Fourth-root log-balance: `win_rate * (ln(1+n) / ln(1+pool))^(1/4)`.
pub fn capability(win_rate: f64, n_i: usize, pool_size: usize) -> Result<f64, CalibrationError> {
    if pool_size == 0 {
        return Err(CalibrationError::ZeroPool);
    }
    if n_i > pool_size {
        return Err(CalibrationError::BadParticipation {
            n: n_i,
            pool: pool_size,
        });
    }
    let balance = (n_i as f64).ln_1p() / (pool_size as f64).ln_1p();
    Ok(win_rate * balance.powf(0.25))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityProfile {
    pub held_out: String,
    pub theta: BTreeMap<String, f64>,
    pub win_rate: BTreeMap<String, f64>,
    pub participation: BTreeMap<String, usize>,
    pub pool_size: usize,
}

#[derive(Default, Clone, Copy)]
struct Totals {
    points: u64,
    opponents: u64,
    benchmarks: usize,
}

/// One profile per benchmark of `participants`.
///
/// Battles come from `battles` (the base-variant view). A profile for `b`
/// covers every model that scores on `b` in `participants` (the view the
/// pillars consume), with capabilities computed from `battles` minus `b`.
pub fn calibrate_all(
    battles: &MatrixView,
    participants: &MatrixView,
    policy: AbsentPolicy,
) -> Result<BTreeMap<String, CapabilityProfile>, CalibrationError> {
    let n_bench = participants.rows.len();
    if n_bench < 2 {
        return Err(CalibrationError::EmptyPool(n_bench));
    }
    let pool_size = n_bench - 1;

    let tallies: BTreeMap<&str, BTreeMap<String, BattleTally>> = battles
        .rows
        .keys()
        .map(|b| (b.as_str(), tally_battles(battles, b)))
        .collect();
    let mut totals: BTreeMap<&str, Totals> = BTreeMap::new();
    for row in tallies.values() {
        for (m, t) in row {
            let e = totals.entry(m.as_str()).or_default();
            e.points += t.doubled_points();
            e.opponents += t.opponents as u64;
            e.benchmarks += 1;
        }
    }

    participants
        .rows
        .par_iter()
        .map(|(held_out, row)| {
            let own = tallies.get(held_out.as_str());
            let mut profile = CapabilityProfile {
                held_out: held_out.clone(),
                theta: BTreeMap::new(),
                win_rate: BTreeMap::new(),
                participation: BTreeMap::new(),
                pool_size,
            };
            for model in row.keys() {
                let mut pool = totals.get(model.as_str()).copied().unwrap_or_default();
                if let Some(t) = own.and_then(|r| r.get(model)) {
                    pool.points -= t.doubled_points();
                    pool.opponents -= t.opponents as u64;
                    pool.benchmarks -= 1;
                }
                let win = if pool.opponents > 0 {
                    pool.points as f64 / 2.0 / pool.opponents as f64
                } else {
                    match policy {
                        AbsentPolicy::Error => {
                            return Err(CalibrationError::AbsentModel {
                                model: model.clone(),
                                held_out: held_out.clone(),
                            })
                        }
                        AbsentPolicy::Zero => 0.0,
                    }
                };
                let n_i = pool.benchmarks.min(pool_size);
                profile.theta.insert(model.clone(), capability(win, n_i, pool_size)?);
                profile.win_rate.insert(model.clone(), win);
                profile.participation.insert(model.clone(), n_i);
            }
            Ok((held_out.clone(), profile))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Observation;
    use chrono::NaiveDate;

    fn view(rows: &[(&str, &[(&str, f64)])]) -> MatrixView {
        let date = NaiveDate::from_ymd_opt(2025, 1, 1).unwrap();
        MatrixView {
            rows: rows
                .iter()
                .map(|(b, entries)| {
                    let row = entries
                        .iter()
                        .map(|(m, s)| (m.to_string(), Observation { score: *s, eval_date: date }))
                        .collect();
                    (b.to_string(), row)
                })
                .collect(),
        }
    }

    #[test]
    fn tally_hand_enumeration() {
        let v = view(&[("b1", &[("A", 80.0), ("B", 60.0), ("C", 60.0)])]);
        let t = tally_battles(&v, "b1");
        assert_eq!((t["A"].wins, t["A"].ties, t["A"].losses), (2, 0, 0));
        assert_eq!((t["B"].wins, t["B"].ties, t["B"].losses), (0, 1, 1));
        assert_eq!((t["C"].wins, t["C"].ties, t["C"].losses), (0, 1, 1));
        for x in t.values() {
            assert_eq!(x.wins + x.ties + x.losses, x.opponents);
        }
    }

    #[test]
    fn tally_ties_and_total_order() {
        let v = view(&[("b", &[("A", 5.0), ("B", 5.00001), ("C", 5.0)])]);
        assert!(tally_battles(&v, "b").values().all(|t| t.ties == 2));

        let v = view(&[("b", &[("A", 1.0), ("B", 2.0), ("C", 3.0), ("D", 4.0)])]);
        let t = tally_battles(&v, "b");
        let wins: Vec<u32> = ["A", "B", "C", "D"].iter().map(|m| t[*m].wins).collect();
        assert_eq!(wins, vec![0, 1, 2, 3]);
    }

    #[test]
    fn points_sum_to_pair_count() {
        let v = view(&[("b", &[("A", 1.0), ("B", 1.0), ("C", 3.0), ("D", 4.0), ("E", 3.0)])]);
        let total: u64 = tally_battles(&v, "b").values().map(|t| t.doubled_points()).sum();
        assert_eq!(total, 5 * 4); // 2 * N(N-1)/2
    }

    #[test]
    fn win_rate_examples() {
        let v = view(&[
            ("b1", &[("A", 80.0), ("B", 60.0), ("C", 60.0)]),
            ("b2", &[("A", 50.0), ("B", 70.0), ("C", 50.0)]),
        ]);
        let t1 = tally_battles(&v, "b1");
        let t2 = tally_battles(&v, "b2");
        assert_eq!(lobo_win_rate([&t1["A"], &t2["A"]]), Some(0.625));

        let all_win = BattleTally { wins: 3, ties: 0, losses: 0, opponents: 3 };
        assert_eq!(lobo_win_rate([&all_win, &all_win]), Some(1.0));
        let all_tie = BattleTally { wins: 0, ties: 4, losses: 0, opponents: 4 };
        assert_eq!(lobo_win_rate([&all_tie]), Some(0.5));
        assert_eq!(lobo_win_rate([]), None);
    }

    #[test]
    fn capability_examples() {
        assert_eq!(capability(0.7, 5, 5).unwrap(), 0.7);
        assert_eq!(capability(0.0, 3, 10).unwrap(), 0.0);
        // independent evaluation: 0.5 * (ln 4 / ln 11)^0.25
        assert!((capability(0.5, 3, 10).unwrap() - 0.435_989_786_530_476_26).abs() < 1e-12);
        assert_eq!(capability(0.5, 1, 0), Err(CalibrationError::ZeroPool));
    }

    #[test]
    fn capability_monotone() {
        for n in 0..10 {
            let mut last = -1.0;
            for w in 0..=10 {
                let th = capability(w as f64 / 10.0, n, 10).unwrap();
                assert!(th >= last);
                assert!((0.0..=1.0).contains(&th));
                last = th;
            }
        }
        for w in [0.1, 0.5, 0.9] {
            let thetas: Vec<f64> = (0..=10).map(|n| capability(w, n, 10).unwrap()).collect();
            assert!(thetas.windows(2).all(|p| p[0] <= p[1]));
        }
    }

    #[test]
    fn two_benchmark_profiles_use_the_other_only() {
        let v = view(&[
            ("b1", &[("A", 80.0), ("B", 60.0), ("C", 40.0)]),
            ("b2", &[("A", 10.0), ("B", 20.0), ("C", 30.0)]),
        ]);
        let p = calibrate_all(&v, &v, AbsentPolicy::Error).unwrap();
        assert_eq!(p["b1"].win_rate["C"], 1.0);
        assert_eq!(p["b2"].win_rate["C"], 0.0);
        assert_eq!(p["b1"].pool_size, 1);
        assert_eq!(p["b1"].participation["A"], 1);
        for prof in p.values() {
            for (m, th) in &prof.theta {
                assert!(*th <= prof.win_rate[m]);
                assert_eq!(*th == 0.0, prof.win_rate[m] == 0.0);
            }
        }
    }

    #[test]
    fn single_benchmark_is_error() {
        let v = view(&[("b1", &[("A", 80.0), ("B", 60.0), ("C", 40.0)])]);
        assert_eq!(
            calibrate_all(&v, &v, AbsentPolicy::Error),
            Err(CalibrationError::EmptyPool(1))
        );
    }

    #[test]
    fn absent_model_policy() {
        let v = view(&[
            ("b1", &[("A", 80.0), ("B", 60.0), ("C", 40.0), ("D", 1.0)]),
            ("b2", &[("A", 10.0), ("B", 20.0), ("C", 30.0)]),
        ]);
        assert!(matches!(
            calibrate_all(&v, &v, AbsentPolicy::Error),
            Err(CalibrationError::AbsentModel { model, .. }) if model == "D"
        ));
        let p = calibrate_all(&v, &v, AbsentPolicy::Zero).unwrap();
        assert_eq!(p["b1"].theta["D"], 0.0);
    }

    /// Direct recomputation of the pooled win rate and log-balance from the
    /// raw view, with no shared totals.
    fn oracle_theta(v: &MatrixView, held_out: &str, model: &str) -> f64 {
        let pool: Vec<&String> = v.rows.keys().filter(|b| *b != held_out).collect();
        let (mut num, mut den, mut n) = (0.0, 0.0, 0usize);
        for b in &pool {
            let row = &v.rows[*b];
            let Some(mine) = row.get(model) else { continue };
            n += 1;
            for (other, o) in row {
                if other == model {
                    continue;
                }
                let (a, c) = ((mine.score * 1e4).round(), (o.score * 1e4).round());
                if a > c {
                    num += 1.0;
                } else if a == c {
                    num += 0.5;
                }
                den += 1.0;
            }
        }
        let w = num / den;
        w * ((1.0 + n as f64).ln() / (1.0 + pool.len() as f64).ln()).powf(0.25)
    }

    #[test]
    fn three_benchmark_fixture_matches_oracle() {
        let v = view(&[
            ("b1", &[("A", 80.0), ("B", 60.0), ("C", 60.0), ("D", 10.0)]),
            ("b2", &[("A", 50.0), ("B", 70.0), ("C", 50.0)]),
            ("b3", &[("B", 33.0), ("C", 90.0), ("D", 12.5), ("E", 40.0)]),
        ]);
        let p = calibrate_all(&v, &v, AbsentPolicy::Zero).unwrap();
        for (b, prof) in &p {
            for (m, th) in &prof.theta {
                let has_pool = v.rows.iter().any(|(bb, r)| bb != b && r.contains_key(m));
                if has_pool {
                    assert!((th - oracle_theta(&v, b, m)).abs() < 1e-15, "{b}/{m}");
                }
            }
        }
    }
}
