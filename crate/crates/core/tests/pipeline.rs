use std::time::Instant;

use bhi_core::aggregation::WeightingMode;
use bhi_core::pipeline::{run_pipeline, PipelineInputs, PipelineOptions};
use bhi_core::robustness;
use bhi_core::synthetic::{self, SyntheticSpec};

#[test]
fn robustness_fixture_end_to_end() {
    let ds = synthetic::generate(&SyntheticSpec::ROBUSTNESS);
    let aligned = ds.aligned().unwrap();
    let report = run_pipeline(PipelineInputs::new(&aligned, &ds.snapshot), &PipelineOptions::default()).unwrap();
    assert_eq!(report.benchmarks.len(), 12);
    assert_eq!(report.dropped_benchmarks.len(), 2);
    let mut ranks: Vec<usize> = report.benchmarks.iter().map(|b| b.rank).collect();
    ranks.sort();
    assert_eq!(ranks, (1..=12).collect::<Vec<_>>());
    assert!((report.critic.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for w in report.benchmarks.windows(2) {
        assert!(w[0].bhi >= w[1].bhi);
    }
    for b in &report.benchmarks {
        let s = &b.saturation;
        assert!((s.s_as - (0.8 * s.s_sta + 0.2 * s.s_dyn)).abs() < 1e-12);
        let i = &b.impact;
        assert!((i.s_imp - (i.cv_weights.w_usage * i.n_usage + i.cv_weights.w_comm * i.s_comm)).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&b.bhi));
    }
    println!("{}", serde_json::to_string_pretty(&report.critic).unwrap());
}

#[test]
fn equal_mode_ranks_by_mean() {
    let ds = synthetic::generate(&SyntheticSpec::ROBUSTNESS);
    let aligned = ds.aligned().unwrap();
    let opts = PipelineOptions { weighting: WeightingMode::Equal, ..Default::default() };
    let report = run_pipeline(PipelineInputs::new(&aligned, &ds.snapshot), &opts).unwrap();
    for b in &report.benchmarks {
        let p = b.pillars();
        assert!((b.bhi - (p.s_disc + p.s_as + p.s_imp) / 3.0).abs() < 1e-15);
    }
    assert_eq!(report.weights, [1.0 / 3.0; 3]);
}

#[test]
fn performance_fixture_audit_time() {
    let ds = synthetic::generate(&SyntheticSpec::PERFORMANCE);
    let aligned = ds.aligned().unwrap();
    let t = Instant::now();
    let report = run_pipeline(PipelineInputs::new(&aligned, &ds.snapshot), &PipelineOptions::default()).unwrap();
    let elapsed = t.elapsed();
    assert_eq!(report.benchmarks.len(), 106);
    println!("audit 106x91: {elapsed:?}");
}

#[test]
fn delta_sweep_on_separated_fixture() {
    let ds = synthetic::well_separated(3);
    let aligned = ds.aligned().unwrap();
    let inputs = PipelineInputs::new(&aligned, &ds.snapshot);
    let s = robustness::delta_sweep(inputs, &PipelineOptions::default(), &robustness::default_delta_sweep()).unwrap();
    for p in &s.sweep {
        println!("{:.3} rho {:.4} w_disc {:.4}", p.delta_frac, p.spearman, p.w_disc);
        assert!(p.spearman >= 0.95);
    }
}

