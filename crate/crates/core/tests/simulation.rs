use std::collections::BTreeSet;
use std::sync::Arc;

use social_rl::experiments::io::{read_dataset, write_dataset};
use social_rl::experiments::{run_experiments, simulation_seed, Experiment, ExperimentPlan, Phase, Protocol, SharedSetup};
use social_rl::gridworld::default_layouts;
use social_rl::registry::ParamRegistry;
use social_rl::rl::{AgentParams, ModelKind};

fn plan(n_sims: usize, seed: u64, record_steps: bool) -> ExperimentPlan {
    ExperimentPlan {
        experiments: Experiment::ALL.to_vec(),
        models: ModelKind::ALL.to_vec(),
        n_sims,
        base_seed: seed,
        protocol: Protocol::default(),
        record_steps,
    }
}

fn file_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical_and_round_trip() {
    let layouts = default_layouts();
    let registry = ParamRegistry::builtin();
    let a = run_experiments(&layouts, &registry, &plan(3, 42, true)).unwrap();
    let b = run_experiments(&layouts, &registry, &plan(3, 42, true)).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(&a, da.path()).unwrap();
    write_dataset(&b, db.path()).unwrap();
    let fa = file_bytes(da.path());
    assert_eq!(fa, file_bytes(db.path()));
    let names: BTreeSet<_> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for f in ["episodes.csv", "values.csv", "beliefs.csv", "world.csv", "visited.csv", "steps.csv"] {
        assert!(names.contains(f), "{f} missing");
    }
    let episodes = String::from_utf8(fa.iter().find(|(n, _)| n == "episodes.csv").unwrap().1.clone()).unwrap();
    assert_eq!(episodes.lines().filter(|l| !l.starts_with('#')).count(), 1 + 3 * 3 * 6 * 20);

    let mut back = read_dataset(da.path()).unwrap();
    let mut expected = a.clone();
    for r in expected.records.iter_mut().chain(back.records.iter_mut()) {
        r.step_records.clear();
    }
    assert_eq!(back.records, expected.records);
}

#[test]
fn simulations_share_worlds_and_experts_across_conditions() {
    let layouts = default_layouts();
    let registry = ParamRegistry::builtin();
    let ds = run_experiments(&layouts, &registry, &plan(4, 7, false)).unwrap();
    for sim in 0..4 {
        let recs: Vec<_> = ds.records.iter().filter(|r| r.sim == sim).collect();
        assert_eq!(recs.len(), 18);
        for r in &recs {
            assert_eq!(r.train_world, recs[0].train_world);
            assert!(Arc::ptr_eq(&r.expert, &recs[0].expert));
            assert_eq!(r.episodes.len(), 20);
        }
        // The training phase does not depend on the experiment.
        for m in ModelKind::ALL {
            let by_exp: Vec<_> = recs.iter().filter(|r| r.model == m).collect();
            let train = |i: usize| by_exp[i].episodes[..10].to_vec();
            assert_eq!(train(0), train(1));
            assert_eq!(train(0), train(2));
        }
    }
    let worlds: BTreeSet<_> = (0..4)
        .map(|i| format!("{:?}", ds.records.iter().find(|r| r.sim == i).unwrap().train_world))
        .collect();
    assert!(worlds.len() > 1, "different simulations draw different worlds");
}

#[test]
fn dyna_without_planning_reduces_to_q_learning() {
    let layouts = default_layouts();
    let expert = ParamRegistry::builtin().expert().unwrap();
    let mf = AgentParams {
        alpha: 0.4,
        gamma: 0.9,
        beta: 0.7,
        ..Default::default()
    };
    let mb = AgentParams {
        eta: Some(0.3),
        lambda: Some(0.0),
        ..mf
    };
    let protocol = Protocol::default();
    for i in 0..5 {
        let setup = SharedSetup::new(&layouts, simulation_seed(3, i), expert, &protocol).unwrap();
        for exp in Experiment::ALL {
            let a = setup.run(exp, ModelKind::AS_MF, mf, &protocol, i, true).unwrap();
            let b = setup.run(exp, ModelKind::AS_MB, mb, &protocol, i, true).unwrap();
            assert_eq!(a.step_records, b.step_records);
            assert_eq!(a.episodes, b.episodes);
            assert_eq!(a.learner_q, b.learner_q);
        }
    }
}

#[test]
fn episode_rows_respect_reward_bounds() {
    let layouts = default_layouts();
    let ds = run_experiments(&layouts, &ParamRegistry::builtin(), &plan(3, 11, false)).unwrap();
    for r in &ds.records {
        for (k, e) in r.episodes.iter().enumerate() {
            assert_eq!(e.episode, k + 1);
            assert_eq!(e.phase, if k < 10 { Phase::Train } else { Phase::Test });
            assert!(e.steps >= 1 && e.steps <= 40);
            assert!(e.cum_reward >= -40);
            if e.terminated_by_reward {
                assert!(e.cum_reward <= 75 + 200 - (e.steps as i32 - 1));
            } else {
                assert_eq!(e.cum_reward, -(e.steps as i32));
                assert_eq!(e.steps, 40);
            }
        }
    }
}

#[test]
fn social_learners_act_asocially_without_the_expert() {
    use social_rl::experiments::{run_episode, EpisodeRngs, PolicyComponent};
    use social_rl::rl::Agent;
    use social_rl::rng::{stream, Purpose};

    let layouts = default_layouts();
    let registry = ParamRegistry::builtin();
    let ds = run_experiments(&layouts, &registry, &plan(2, 5, true)).unwrap();
    for r in ds.records.iter().filter(|r| r.model.is_social()) {
        for steps in &r.step_records[10..] {
            assert!(steps.iter().all(|s| s.component == PolicyComponent::Asocial && s.expert_state.is_none()));
        }
        // Same tables, same streams: the asocial counterpart behaves identically.
        let world = social_rl::gridworld::WorldConfig::from_descriptor(&layouts, &r.test_world).unwrap();
        let mut social = Agent::new(r.model, registry.learner(r.model).unwrap()).unwrap();
        let base = r.model.asocial_counterpart();
        let mut params = registry.learner(r.model).unwrap();
        params.omega = None;
        params.kappa = None;
        let mut asocial = Agent::new(base, params).unwrap();
        social.q = r.learner_q.clone();
        asocial.q = r.learner_q.clone();
        let run = |agent: &mut Agent| {
            let (mut a, mut p, mut n) = (
                stream(1, Purpose::LearnerActions),
                stream(1, Purpose::LearnerPlanning),
                stream(1, Purpose::LearnerNoise),
            );
            let mut rngs = EpisodeRngs {
                actions: &mut a,
                planning: &mut p,
                noise: &mut n,
            };
            let start = world.start_states()[0].index();
            run_episode(agent, &world, start, None, 40, &mut rngs, true).unwrap()
        };
        assert_eq!(run(&mut social), run(&mut asocial));
    }
}
