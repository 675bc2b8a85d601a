use ora_core::scorelab::*;
use ora_core::soldb::{BudgetStamp, FeatureSignature, MetricsRecord, SolutionId, SolutionRecord};
use proptest::prelude::*;

fn metrics(collisions: f64, teleports: f64, stops: f64, braking: f64, ttc: f64, speed: f64, var: f64) -> MetricsRecord {
    [
        (COLLISIONS, collisions),
        (TELEPORTS, teleports),
        (EMERGENCY_STOPS, stops),
        (EMERGENCY_BRAKING, braking),
        (CRITICAL_TTC, ttc),
        (AVG_SPEED, speed),
        (SPEED_VARIANCE, var),
    ]
    .into_iter()
    .collect()
}

#[test]
fn simulator_example_safety() {
    let cfg = ScoringConfig::default();
    // The simulator output example: braking 4, ttc 28, speed 12.51, variance 16.22.
    let m = metrics(0.0, 0.0, 0.0, 4.0, 28.0, 12.51, 16.22);
    assert_eq!(safety_score(&m, &cfg).unwrap(), 78.0);
}

#[test]
fn reversion_transcript_safety_goes_negative() {
    let m = metrics(0.5, 4.5, 0.0, 0.0, 144.0, 0.29, 2.235);
    assert_eq!(safety_score(&m, &ScoringConfig::default()).unwrap(), -132.0);
}

#[test]
fn combined_from_perfect_speed_and_smoothness() {
    let cfg = ScoringConfig::default();
    let m = metrics(0.0, 0.0, 0.0, 4.0, 28.0, 13.89, 0.0);
    assert_eq!(combined_score(&m, &cfg).unwrap(), 89.0);
}

#[test]
fn transcript_signatures() {
    let cfg = ScoringConfig::default();
    let cases = [
        (metrics(0.5, 4.5, 0.0, 0.0, 73.0, 0.290, 2.235), vec![0, 0, 3]),
        (metrics(0.5, 5.5, 0.0, 0.0, 144.0, 0.290, 2.41), vec![0, 0, 3]),
        (metrics(30.0, 3.5, 0.0, 0.5, 297.5, 0.775, 6.17), vec![0, 0, 2]),
        (metrics(12.5, 4.5, 0.0, 0.0, 177.0, 0.42, 2.88), vec![0, 0, 3]),
    ];
    for (m, want) in cases {
        assert_eq!(behavioral_signature(&m, &cfg).unwrap(), FeatureSignature(want));
    }
}

#[test]
fn collision_dominates_safety_level() {
    let cfg = ScoringConfig::default();
    let m = metrics(0.5, 0.0, 0.0, 0.0, 0.0, 13.89, 0.0);
    assert_eq!(behavioral_signature(&m, &cfg).unwrap().0[0], 0);
}

#[test]
fn winner_normalizes_to_one() {
    let entries: Vec<BenchmarkEntry> = [("a", 0.71), ("b", 0.93), ("c", 0.42), ("d", 0.88), ("e", 0.64)]
        .iter()
        .map(|(a, s)| BenchmarkEntry { problem: "tsp".into(), algorithm: a.to_string(), raw_score: *s, llm_calls: 10, evaluations: 10 })
        .collect();
    let n = normalized_scores(&entries, Direction::Maximize).unwrap();
    assert_eq!(n.values().filter(|v| **v == 1.0).count(), 1);
    assert_eq!(n["b"], 1.0);
    assert_eq!(n["c"], 0.0);
}

fn rec(serial: u64, score: Option<f64>, llm: u64, evals: u64) -> SolutionRecord {
    SolutionRecord {
        id: SolutionId { lead: 1, round: 1, count: 0, serial },
        idea: String::new(),
        code: format!("{serial}"),
        callbacks: None,
        experiment_summary: String::new(),
        metrics: MetricsRecord::default(),
        features: FeatureSignature::default(),
        score: score.unwrap_or(f64::NEG_INFINITY),
        parent_ids: vec![],
        valid: score.is_some(),
        round: 1,
        lead: 1,
        attempts: 1,
        budget: BudgetStamp { llm_calls: llm, evaluations: evals },
    }
}

#[test]
fn best_so_far_is_monotone_on_both_axes() {
    let records = vec![rec(0, Some(1.0), 0, 1), rec(1, Some(0.5), 4, 2), rec(2, None, 6, 3), rec(3, Some(2.0), 9, 5), rec(4, Some(1.5), 9, 7)];
    let c = best_so_far_curve(&records, BudgetAxis::LlmCalls, Direction::Maximize);
    assert_eq!(c, vec![
        CurvePoint { budget: 0, best: 1.0 },
        CurvePoint { budget: 4, best: 1.0 },
        CurvePoint { budget: 9, best: 2.0 },
    ]);
    let e = best_so_far_curve(&records, BudgetAxis::Evaluations, Direction::Maximize);
    assert_eq!(e.len(), 4);
    assert!(e.windows(2).all(|w| w[1].best >= w[0].best && w[1].budget > w[0].budget));
}

#[test]
fn report_files() {
    let dir = tempfile::tempdir().unwrap();
    let entries = vec![
        BenchmarkEntry { problem: "p".into(), algorithm: "x".into(), raw_score: 10.0, llm_calls: 3, evaluations: 4 },
        BenchmarkEntry { problem: "p".into(), algorithm: "y".into(), raw_score: 2.0, llm_calls: 3, evaluations: 4 },
    ];
    let table = dir.path().join("p.csv");
    write_problem_table(&table, &entries, Direction::Maximize).unwrap();
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text, "problem,algorithm,raw_score,normalized,llm_calls,evaluations\np,x,10,1.000,3,4\np,y,2,0.000,3,4\n");
    let curve = dir.path().join("c.csv");
    write_curve_csv(&curve, BudgetAxis::Evaluations, &[CurvePoint { budget: 1, best: 0.5 }]).unwrap();
    assert_eq!(std::fs::read_to_string(&curve).unwrap(), "evaluations,best_score\n1,0.5\n");
}

fn arb_metrics() -> impl Strategy<Value = MetricsRecord> {
    (0.0..5.0f64, 0.0..5.0f64, 0.0..10.0f64, 0.0..10.0f64, 0.0..300.0f64, 0.0..30.0f64, 0.0..40.0f64)
        .prop_map(|(a, b, c, d, e, f, g)| metrics(a, b, c, d, e, f, g))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn sub_scores_bounded_and_monotone(x in 0.0..50.0f64, dx in 0.0..10.0f64) {
        let cfg = ScoringConfig::default();
        for f in [|v: f64, c: &ScoringConfig| smoothness_score(v, c), |v: f64, c: &ScoringConfig| speed_score(c.target_speed + v, c)] {
            let (a, b) = (f(x, &cfg), f(x + dx, &cfg));
            prop_assert!((0.0..=100.0).contains(&a));
            prop_assert!(b <= a);
        }
        prop_assert!(speed_score((cfg.target_speed - x).max(0.0), &cfg) >= speed_score((cfg.target_speed - x - dx).max(0.0), &cfg));
    }

    #[test]
    fn safety_has_exact_coefficients(m in arb_metrics(), h in 0.5..4.0f64) {
        let cfg = ScoringConfig::default();
        let base = safety_score(&m, &cfg).unwrap();
        for (key, coeff) in [(COLLISIONS, 50.0), (TELEPORTS, 30.0), (EMERGENCY_STOPS, 5.0), (EMERGENCY_BRAKING, 2.0), (CRITICAL_TTC, 0.5)] {
            let mut bumped = m.clone();
            bumped.insert(key, m.get(key).unwrap() + h);
            let slope = (safety_score(&bumped, &cfg).unwrap() - base) / h;
            prop_assert!((slope + coeff).abs() < 1e-9, "{key}: {slope}");
        }
    }

    #[test]
    fn combined_is_weighted_sum(m in arb_metrics()) {
        let cfg = ScoringConfig::default();
        let s = safety_score(&m, &cfg).unwrap();
        let v = speed_score(m.get(AVG_SPEED).unwrap(), &cfg);
        let g = smoothness_score(m.get(SPEED_VARIANCE).unwrap(), &cfg);
        prop_assert_eq!(combined_score(&m, &cfg).unwrap(), 0.5 * s + 0.3 * v + 0.2 * g);
    }

    #[test]
    fn signature_ignores_unused_metrics(m in arb_metrics(), fuel in 0.0..20.0f64) {
        let cfg = ScoringConfig::default();
        let mut with_fuel = m.clone();
        with_fuel.insert("avg_fuel_consumption", fuel);
        let sig = behavioral_signature(&m, &cfg).unwrap();
        prop_assert_eq!(&sig, &behavioral_signature(&with_fuel, &cfg).unwrap());
        prop_assert!(sig.0.iter().all(|l| *l <= 3));
    }

    #[test]
    fn normalization_is_affine_invariant(scores in prop::collection::vec(-100.0..100.0f64, 2..8), a in 0.1..10.0f64, b in -50.0..50.0f64) {
        let mk = |f: &dyn Fn(f64) -> f64| scores.iter().enumerate().map(|(i, s)| BenchmarkEntry {
            problem: "p".into(), algorithm: format!("a{i}"), raw_score: f(*s), llm_calls: 0, evaluations: 0,
        }).collect::<Vec<_>>();
        let plain = normalized_scores(&mk(&|x| x), Direction::Maximize);
        let moved = normalized_scores(&mk(&|x| a * x + b), Direction::Maximize);
        match (plain, moved) {
            (Ok(p), Ok(m)) => for (k, v) in p {
                prop_assert!((v - m[&k]).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&v));
            },
            (Err(_), Err(_)) => {}
            (p, m) => prop_assert!(false, "{p:?} vs {m:?}"),
        }
    }
}
