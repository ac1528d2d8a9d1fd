use super::*;
use crate::data::generate_synthetic;
use crate::scoring;

fn quick() -> MineRequest {
    MineRequest {
        search: SearchParams { beam_width: 20, max_depth: 2, ..SearchParams::default() },
        direction: DirectionOptions { restarts: 4, ..DirectionOptions::default() },
        ..MineRequest::default()
    }
}

fn spread_request() -> MineRequest {
    MineRequest { kind: MineKind::Spread, ..quick() }
}

fn cluster_names() -> [&'static str; 3] {
    ["a3 = '1'", "a4 = '1'", "a5 = '1'"]
}

#[test]
fn session_is_shareable() {
    fn is<T: Send + Sync>() {}
    is::<Session>();
}

#[test]
fn first_iteration_finds_a_cluster() {
    let mut s = Session::new(generate_synthetic(0), DlParams::default()).unwrap();
    let first = s.mine_next(&quick()).unwrap().to_vec();
    assert!(cluster_names().contains(&first[0].description.as_str()));
    let again = s.mine_next(&quick()).unwrap().to_vec();
    assert_eq!(first, again);
}

#[test]
fn assimilated_pattern_drops() {
    let mut s = Session::new(generate_synthetic(1), DlParams::default()).unwrap();
    let top = s.mine_next(&quick()).unwrap()[0].clone();
    s.assimilate_choice(&top.id).unwrap();
    assert_eq!(s.iteration(), 1);
    assert!(s.candidates().is_empty());
    let next = s.mine_next(&quick()).unwrap().to_vec();
    assert!(next[..2].iter().all(|c| c.description != top.description));
    let Pattern::Location(l) = &top.pattern else { panic!() };
    let (mu, cov) = s.model().mean_marginal(&l.extension).unwrap();
    let ic = scoring::ic_location(s.model(), &l.extension, &l.mean).unwrap();
    let floor = scoring::ic_location_from_marginal(&mu, &cov, &mu).unwrap();
    assert!((ic - floor).abs() < 1e-8);
    assert!(ic / top.score.dl < top.score.si);
}

#[test]
fn stale_ids_and_gating() {
    let mut s = Session::new(generate_synthetic(2), DlParams::default()).unwrap();
    assert!(matches!(s.assimilate_choice("nope"), Err(SessionError::StaleId(_))));
    assert!(matches!(s.mine_next(&spread_request()), Err(SessionError::SpreadWithoutLocation)));
    let top = s.mine_next(&quick()).unwrap()[0].clone();
    s.assimilate_choice(&top.id).unwrap();
    // the cache was invalidated by the assimilation
    assert!(matches!(s.assimilate_choice(&top.id), Err(SessionError::StaleId(_))));
    let spread = s.mine_next(&spread_request()).unwrap()[0].clone();
    assert_eq!(spread.pattern.kind(), PatternKind::Spread);
    assert!(spread.score.is_valid());
    s.assimilate_choice(&spread.id).unwrap();
    assert_eq!(s.iteration(), 1);
    assert!(!s.spread_available());
    assert!(matches!(s.mine_next(&spread_request()), Err(SessionError::SpreadWithoutLocation)));
    assert_eq!(s.timings().len(), 2);
    assert_eq!(s.timings()[1].kind, PatternKind::Spread);
}

#[test]
fn cluster_detail_flags_both_targets() {
    for seed in 0..4 {
        let mut s = Session::new(generate_synthetic(seed), DlParams::default()).unwrap();
        let cands = s.mine_next(&quick()).unwrap().to_vec();
        for c in cands.iter().filter(|c| cluster_names().contains(&c.description.as_str())) {
            let d = s.pattern_detail(&c.id).unwrap();
            assert_eq!(d.attributes.len(), 2);
            for a in &d.attributes {
                assert!(a.observed_mean < a.lower || a.observed_mean > a.upper, "seed {seed} {a:?}");
                assert!((a.expected_mean - (a.lower + a.upper) / 2.0).abs() < 1e-12);
            }
            assert!(d.attributes[0].si >= d.attributes[1].si);
            assert!(d.spread.is_none());
            assert_eq!(d.score, c.score);
        }
    }
}

#[test]
fn satisfied_pattern_detail_sits_at_floor() {
    let mut s = Session::new(generate_synthetic(4), DlParams::default()).unwrap();
    let top = s.mine_next(&quick()).unwrap()[0].clone();
    s.assimilate_choice(&top.id).unwrap();
    let d = s.pattern_detail(&top.id).unwrap();
    for a in &d.attributes {
        assert!((a.observed_mean - a.expected_mean).abs() < 1e-9);
        let var = ((a.upper - a.expected_mean) / 1.96).powi(2);
        let floor = 0.5 * (std::f64::consts::TAU * var).ln() / top.score.dl;
        assert!((a.si - floor).abs() < 1e-9);
    }
}

#[test]
fn spread_detail_grids() {
    let mut s = Session::new(generate_synthetic(5), DlParams::default()).unwrap();
    let top = s.mine_next(&quick()).unwrap()[0].clone();
    s.assimilate_choice(&top.id).unwrap();
    let sp = s.mine_next(&spread_request()).unwrap()[0].clone();
    let d = s.pattern_detail(&sp.id).unwrap();
    let sd = d.spread.unwrap();
    assert_eq!(sd.grid.len(), CDF_POINTS);
    assert_eq!(sd.model_cdf.len(), CDF_POINTS);
    assert_eq!(sd.subgroup_cdf.len(), CDF_POINTS);
    for c in [&sd.model_cdf, &sd.subgroup_cdf] {
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.iter().all(|x| (0.0..=1.0).contains(x)));
    }
    // μ ± 4σ of a near-normal mixture holds almost all model mass
    assert!(sd.model_cdf[0] < 1e-3 && sd.model_cdf[CDF_POINTS - 1] > 1.0 - 1e-3);
    let mid = (sd.grid[0] + sd.grid[CDF_POINTS - 1]) / 2.0;
    assert!((sd.grid[100] - mid).abs() < 1e-12);
    assert_ne!(sd.observed_variance, sd.expected_variance);
}

#[test]
fn json_round_trip_and_reload_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new(generate_synthetic(6), DlParams::default()).unwrap();
    for _ in 0..3 {
        s.auto_step(&quick(), true).unwrap();
    }
    assert_eq!(s.iteration(), 3);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    s.save(&a).unwrap();
    let mut loaded = Session::load(&a).unwrap();
    loaded.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(loaded.iteration(), 3);
    let x = s.mine_next(&quick()).unwrap().to_vec();
    let y = loaded.mine_next(&quick()).unwrap().to_vec();
    assert_eq!(x, y);
}

#[test]
fn load_rejects_bad_files() {
    let mut s = Session::new(generate_synthetic(7), DlParams::default()).unwrap();
    s.auto_step(&quick(), false).unwrap();
    let text = s.to_json().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["schema_version"] = 2.into();
    assert!(matches!(Session::from_json(&v.to_string()), Err(SessionError::SchemaVersion { found: 2 })));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["model"]["blocks"][0]["sigma"] = serde_json::json!([[1.0, 3.0], [3.0, 1.0]]);
    let err = Session::from_json(&v.to_string()).unwrap_err();
    assert!(err.to_string().contains("positive definite"), "{err}");
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["iteration"] = 5.into();
    assert!(matches!(Session::from_json(&v.to_string()), Err(SessionError::Invalid(_))));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["assimilated"][0] = "0000".into();
    assert!(matches!(Session::from_json(&v.to_string()), Err(SessionError::Invalid(_))));
}

#[test]
fn replay_reproduces_model() {
    let mut s = Session::new(generate_synthetic(8), DlParams::default()).unwrap();
    for _ in 0..3 {
        s.auto_step(&quick(), true).unwrap();
    }
    let replayed = s.replay().unwrap();
    assert!(replayed.max_row_difference(s.model()).unwrap() <= 1e-10);
}

#[test]
fn reset_restores_prior() {
    let mut s = Session::new(generate_synthetic(9), DlParams::default()).unwrap();
    let before = s.mine_next(&quick()).unwrap().to_vec();
    s.auto_step(&quick(), true).unwrap();
    s.reset();
    assert_eq!(s.iteration(), 0);
    assert!(s.assimilated().is_empty() && s.timings().is_empty());
    assert_eq!(s.model(), s.initial_model());
    assert_eq!(s.mine_next(&quick()).unwrap(), &before[..]);
}

#[test]
fn auto_and_interactive_agree() {
    let ds = Arc::new(generate_synthetic(10));
    let mut auto = Session::new(ds.clone(), DlParams::default()).unwrap();
    let mut manual = Session::new(ds, DlParams::default()).unwrap();
    for _ in 0..2 {
        auto.auto_step(&quick(), true).unwrap();
        let top = manual.mine_next(&quick()).unwrap()[0].id.clone();
        manual.assimilate_choice(&top).unwrap();
        let sp = manual.mine_next(&spread_request()).unwrap()[0].id.clone();
        manual.assimilate_choice(&sp).unwrap();
    }
    assert_eq!(auto.model().to_json().unwrap(), manual.model().to_json().unwrap());
    assert_eq!(auto.assimilated(), manual.assimilated());
}

#[test]
fn ids_are_content_hashes() {
    let mut s = Session::new(generate_synthetic(11), DlParams::default()).unwrap();
    let c = s.mine_next(&quick()).unwrap().to_vec();
    let ids: std::collections::HashSet<&String> = c.iter().map(|c| &c.id).collect();
    assert_eq!(ids.len(), c.len());
    for x in &c {
        assert_eq!(pattern_id(&x.pattern), x.id);
    }
}
