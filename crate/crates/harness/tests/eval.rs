mod common;

use common::{config, dataset, recipe, SIZE};
use vkchain::data::Phase;
use vkchain::eval::{evaluate, evaluate_model, evaluate_policy, EvalSpec};
use vkchain::train::train_vkt;
use vkchain::HarnessError;
use vkchain_envsim::{scripted_closure, PolicyInput, RobotVariant, RolloutConfig, World};

fn spec(variant: RobotVariant, episodes: usize, chained: bool) -> EvalSpec {
    EvalSpec { variant, episodes, seed: 21, chained, views: 2, image_size: SIZE, rollout: RolloutConfig::default() }
}

// the policy outlives the borrow of its world, so each world is leaked (a few hundred bytes)
fn scripted(w: &World) -> impl FnMut(&PolicyInput) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut p = scripted_closure(Box::leak(Box::new(w.clone())), 24);
    move |i: &PolicyInput| p(i).map_err(HarnessError::from)
}

#[test]
fn scripted_policy_always_reaches() {
    for v in RobotVariant::ALL {
        let r = evaluate_policy(&spec(v, 40, false), scripted).unwrap();
        assert_eq!(r.success_rate(), 1.0, "{v}");
        assert_eq!(r.success_length, None);
    }
}

#[test]
fn scripted_policy_completes_every_chain() {
    let r = evaluate_policy(&spec(RobotVariant::Planar4, 20, true), scripted).unwrap();
    assert_eq!(r.success_length, Some(3.0));
    assert_eq!(r.success_rate(), 1.0);
}

#[test]
fn standing_still_rarely_succeeds() {
    for v in RobotVariant::ALL {
        let zero = vec![vec![0.0; v.action_dim()]];
        let r = evaluate_policy(&spec(v, 1000, false), |_| |_: &PolicyInput| Ok(zero.clone())).unwrap();
        assert!(r.success_rate() <= 0.05, "{v}: {}", r.success_rate());
    }
}

#[test]
fn evaluation_is_reproducible_and_checks_heads() {
    let dir = tempfile::tempdir().unwrap();
    let d = dataset(dir.path(), RobotVariant::Planar3, 2);
    let ckpt = dir.path().join("vkt");
    let o = train_vkt(&recipe(Phase::VktBackbone, vec![d], 2), &config(), &ckpt).unwrap();

    assert!(matches!(evaluate(&ckpt, RobotVariant::Planar3, 3, 1, false), Err(HarnessError::Model(_))));
    let mut model = o.model;
    model.register_head("planar3", 4).unwrap();
    let a = evaluate_model(&model, &spec(RobotVariant::Planar3, 5, false)).unwrap();
    let b = evaluate_model(&model, &spec(RobotVariant::Planar3, 5, false)).unwrap();
    assert_eq!(a, b);
    assert!(evaluate_model(&model, &spec(RobotVariant::Planar4, 5, false)).is_err());
    let wrong_size = EvalSpec { image_size: 32, ..spec(RobotVariant::Planar3, 5, false) };
    assert!(matches!(evaluate_model(&model, &wrong_size), Err(HarnessError::Validation(_))));
}
