use groundplan::datagen::{gen_plan_dataset, generate_to_dir, DatasetKind, KeystepRecord, Records};
use groundplan::eval::*;
use groundplan::executor::{CorruptionConfig, ExecConfig, PlannerKind};
use groundplan::scene::{CameraRig, TaskSuite};
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn cfg() -> ExecConfig {
    ExecConfig { rig: CameraRig::default_with_resolution(128), ..ExecConfig::default() }
}

fn records(suite: &TaskSuite, episodes: usize, seed: u64) -> Vec<KeystepRecord> {
    match gen_plan_dataset(suite, episodes, seed, &cfg()).unwrap().records {
        Records::Plan(r) => r,
        Records::Refexp(_) => unreachable!(),
    }
}

fn malformed() -> PlannerKind {
    PlannerKind::Corrupted(CorruptionConfig { p_malformed: 1.0, ..Default::default() })
}

#[test]
fn oracle_offline_is_perfect_from_disk() {
    let suite = TaskSuite::builtin();
    let dir = tempfile::tempdir().unwrap();
    generate_to_dir(DatasetKind::Plan, &suite, 2, 1, &cfg(), dir.path()).unwrap();
    let r = eval_offline(dir.path(), &suite, &PlannerKind::Oracle).unwrap();
    assert_eq!(r.groups.len(), 4);
    for m in r.groups.values().chain([&r.overall]) {
        assert_eq!((m.act, m.obj, m.grd), (100.0, 100.0, 100.0));
    }
    assert!(r.overall.obj_keysteps > 0 && r.overall.obj_keysteps < r.overall.keysteps);
}

#[test]
fn malformed_planner_scores_zero() {
    let suite = TaskSuite::builtin();
    let r = eval_offline_records(&records(&suite, 1, 2), &suite, &malformed()).unwrap();
    assert_eq!((r.overall.act, r.overall.obj, r.overall.grd), (0.0, 0.0, 0.0));
    assert!(r.keysteps.iter().all(|s| s.parse_error.is_some()));
}

#[test]
fn wrong_object_rate_shows_in_obj_accuracy() {
    let suite = TaskSuite::builtin();
    let recs = records(&suite, 28, 3);
    let planner = PlannerKind::Corrupted(CorruptionConfig::wrong_object(0.5, 17));
    let r = eval_offline_records(&recs, &suite, &planner).unwrap();
    assert!(r.overall.obj_keysteps >= 400, "only {} scored keysteps", r.overall.obj_keysteps);
    assert!((r.overall.obj - 50.0).abs() <= 5.0, "Obj = {}", r.overall.obj);
    assert_eq!(r.overall.act, 100.0);
}

#[test]
fn offline_metrics_ignore_record_order() {
    let suite = TaskSuite::builtin().subset(|t| t.group.to_string() != "L4");
    let mut recs = records(&suite, 2, 4);
    let planner = PlannerKind::Corrupted(CorruptionConfig { p_wrong_object: 0.3, p_wrong_action: 0.2, ..Default::default() });
    let a = eval_offline_records(&recs, &suite, &planner).unwrap();
    recs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
    let b = eval_offline_records(&recs, &suite, &planner).unwrap();
    assert_eq!(a, b);
}

#[test]
fn grounding_is_perfect_only_for_exact_masks() {
    let suite = TaskSuite::builtin().subset(|t| t.name == "pick_and_place" && t.variation == 0);
    let recs = records(&suite, 1, 5);
    let r = recs.iter().find(|r| r.gt_plan.object.is_some()).unwrap();
    let group = "L1";
    assert_eq!(score_keystep(r, group, Ok(&r.gt_plan)).grd, Some(1.0));

    let mut off = r.gt_plan.clone();
    let m = &mut off.object.as_mut().unwrap().masks[0];
    let (u, v) = (0..m.width()).flat_map(|u| (0..m.height()).map(move |v| (u, v))).find(|&(u, v)| !m.get(u, v)).unwrap();
    m.set(u, v, true);
    let s = score_keystep(r, group, Ok(&off));
    assert!(s.grd.unwrap() < 1.0 && s.grd.unwrap() > 0.9);
    assert_eq!(s.obj, Some(true));

    let mut missing = r.gt_plan.clone();
    missing.object = None;
    let s = score_keystep(r, group, Ok(&missing));
    assert_eq!((s.obj, s.grd), (Some(false), Some(0.0)));
}

#[test]
fn oracle_online_is_perfect_and_reproducible() {
    let suite = TaskSuite::builtin().subset(|t| t.name == "push_button" || t.name == "pick_and_place");
    let a = eval_online(&suite, &PlannerKind::Oracle, &cfg(), 3, 2, 7).unwrap();
    for v in &a.variations {
        assert_eq!((v.mean, v.std), (1.0, 0.0), "{}", v.key());
        assert_eq!(v.episodes.len(), 6);
    }
    a.validate().unwrap();
    let b = eval_online(&suite, &PlannerKind::Oracle, &cfg(), 3, 2, 7).unwrap();
    assert_eq!(a, b);
    let json = render_report(&EvalReport::Online(a.clone()), ReportFormat::Json);
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, EvalReport::Online(a));
}

#[test]
fn sr_does_not_rise_with_corruption() {
    let suite = TaskSuite::builtin().subset(|t| t.has_tag("reactive"));
    let mut last = f64::INFINITY;
    for p in [0.0, 0.15, 0.3, 0.5] {
        let planner = PlannerKind::Corrupted(CorruptionConfig::wrong_object(p, 7));
        let sr = eval_online(&suite, &planner, &ExecConfig::default(), 10, 1, 3).unwrap().mean_sr();
        assert!(sr <= last, "SR rose to {sr} at p = {p} (was {last})");
        last = sr;
    }
}

#[test]
fn invalid_results_are_rejected() {
    let suite = TaskSuite::builtin().subset(|t| t.name == "push_button");
    let mut r = eval_online(&suite, &PlannerKind::Oracle, &cfg(), 1, 2, 0).unwrap();
    r.variations[0].mean = 1.5;
    assert!(r.validate().is_err());
    let bad = PlannerKind::Corrupted(CorruptionConfig { p_wrong_object: 0.8, p_malformed: 0.8, ..Default::default() });
    assert!(eval_online(&suite, &bad, &cfg(), 1, 1, 0).is_err());
}
