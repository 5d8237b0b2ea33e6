use newsrank::metrics::{daily_series, series_values, Metric, MetricOptions};
use newsrank::model::{partition_by_arm, Arm};
use newsrank::simulator::{run_experiment, run_experiment_traced, SimConfig, TRACE_TOP_N};
use newsrank::stats::mann_whitney_u;

fn small(seed: u64) -> SimConfig {
    SimConfig {
        n_users: 150,
        n_articles_per_day: 12,
        n_days: 3,
        warmup_days: 1,
        seed,
        min_article_clicks: 2,
        ..SimConfig::default()
    }
}

#[test]
fn tracing_leaves_the_log_unchanged() {
    let cfg = small(7);
    let mut trace = Vec::new();
    let traced = run_experiment_traced(&cfg, Some(&mut trace)).unwrap();
    let plain = run_experiment(&cfg).unwrap();
    assert_eq!(traced.log.events, plain.log.events);
    assert!(!trace.is_empty());

    let (shared, personal): (Vec<_>, Vec<_>) = trace.iter().partition(|r| r.user_id.is_none());
    assert!(!shared.is_empty() && !personal.is_empty());
    assert!(shared.iter().all(|r| r.s4.is_none()));
    assert!(personal
        .iter()
        .all(|r| r.arm == Arm::Personalization && r.s4.is_some() && r.rank < TRACE_TOP_N));
    for r in &trace {
        for s in [r.s1, r.s2, r.s3, r.cs].into_iter().chain(r.s4) {
            assert!((0.0..=100.0).contains(&s), "{r:?}");
        }
    }
    assert!(trace.windows(2).all(|w| w[0].at <= w[1].at));
}

#[test]
fn composite_orders_each_traced_ranking() {
    let mut trace = Vec::new();
    run_experiment_traced(&small(3), Some(&mut trace)).unwrap();
    for w in trace.windows(2) {
        let same = w[0].at == w[1].at && w[0].arm == w[1].arm && w[0].user_id == w[1].user_id;
        if same && w[1].rank == w[0].rank + 1 {
            assert!(w[0].cs >= w[1].cs - 1e-12, "{:?} then {:?}", w[0], w[1]);
        }
    }
}

#[test]
fn aa_daily_ctr_rarely_differs() {
    let opts = MetricOptions::default();
    let seeds = 20u64;
    let mut quiet = 0;
    for seed in 0..seeds {
        let cfg = SimConfig {
            seed,
            ..SimConfig::homogeneous_readers()
        };
        let out = run_experiment(&cfg).unwrap();
        let parts = partition_by_arm(&out.log);
        let a = series_values(&daily_series(&parts.treatment, Metric::Ctr, 0, &opts));
        let b = series_values(&daily_series(&parts.control, Metric::Ctr, 0, &opts));
        // A noon start spreads the run over one extra calendar day.
        assert_eq!(a.len(), cfg.n_days + 1);
        quiet += usize::from(mann_whitney_u(&a, &b).p_value > 0.05);
    }
    assert!(quiet * 10 >= seeds as usize * 9, "{quiet} of {seeds}");
}
