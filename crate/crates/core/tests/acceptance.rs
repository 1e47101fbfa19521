//! Acceptance suite. Runs every criterion at its stated scale and tolerance
//! and prints one PASS/FAIL line per criterion.

use std::collections::HashSet;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use social_rl::dp::{optimal_q, OPTIMAL_GAMMA, OPTIMAL_TOL};
use social_rl::experiments::io::write_dataset;
use social_rl::experiments::{
    run_experiments, simulation_seed, Dataset, Experiment, ExperimentPlan, Protocol, SharedSetup, SimRecord,
};
use social_rl::gridworld::{
    assemble_world, default_layouts, sample_noise, sample_world, Action, QuadrantLayout, Rotation, WorldConfig,
    CENTRAL_STARTS, N_ACTIONS, N_STATES,
};
use social_rl::metrics::{
    belief_transfer, pooled_sem, stability_deviations, value_transfer, window_means, DistanceGroups, Group, Summary,
};
use social_rl::optimizer::differential_evolution;
use social_rl::registry::ParamRegistry;
use social_rl::rl::{AgentParams, BeliefModel, ModelKind};
use social_rl::social::{belief_distance_map, DISTANCE_CAP, DISTANCE_MAX_ITER, DISTANCE_TOL};

const N_SIMS: usize = 200;
const BASE_SEED: u64 = 1;

struct Report {
    lines: Vec<(bool, String, String)>,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((pass, name.to_string(), detail));
    }
}

fn assemblies() -> Vec<([usize; 4], [Rotation; 4])> {
    let mut out = Vec::new();
    for code in 0..256usize {
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, c, d];
                        if (0..4).all(|i| p.contains(&i)) {
                            out.push((p, [0, 1, 2, 3].map(|i| Rotation::from_quarter_turns((code >> (2 * i)) & 3))));
                        }
                    }
                }
            }
        }
    }
    out
}

fn combinatorics(r: &mut Report, layouts: &[QuadrantLayout; 4]) {
    let all = assemblies();
    let distinct: HashSet<_> = all
        .iter()
        .map(|(p, rot)| {
            assemble_world(layouts, *p, *rot, [0, 25, 50, 75], CENTRAL_STARTS)
                .unwrap()
                .adjacency()
                .to_vec()
        })
        .collect();
    r.check(
        "environment combinatorics",
        all.len() == 6144 && distinct.len() == 6144,
        format!("{} assemblies, {} distinct adjacency structures", all.len(), distinct.len()),
    );
}

fn noise(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
    let n = 1_000_000;
    let (mut s, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let x = f64::from(sample_noise(&mut rng));
        s += x;
        sq += x * x;
    }
    let mean = s / n as f64;
    let var = sq / n as f64 - mean * mean;
    r.check(
        "noise moments",
        mean.abs() < 0.5 && (98.0..=102.0).contains(&var),
        format!("mean {mean:.4}, variance {var:.3} over 10^6 draws"),
    );
}

fn backward_induction(w: &WorldConfig, horizon: usize) -> Vec<[f64; N_ACTIONS]> {
    let mut v = vec![0.0; N_STATES];
    let mut q = vec![[0.0; N_ACTIONS]; N_STATES];
    for _ in 0..horizon {
        for s in 0..N_STATES {
            if w.is_terminal(s) {
                q[s] = [0.0; N_ACTIONS];
                continue;
            }
            for a in Action::ALL {
                let n = w.step_dynamics(s, a);
                q[s][a.index()] = match w.reward_value_at(n) {
                    Some(x) if x > 0 => f64::from(x),
                    _ => -1.0 + OPTIMAL_GAMMA * v[n],
                };
            }
        }
        for s in 0..N_STATES {
            v[s] = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    q
}

fn oracles(r: &mut Report, layouts: &[QuadrantLayout; 4]) {
    let mut worst: f64 = 0.0;
    for (k, (p, rot)) in assemblies().into_iter().enumerate() {
        let values = [[0, 25, 50, 75], [75, 50, 25, 0], [25, 75, 0, 50], [50, 0, 75, 25]][k % 4];
        let w = assemble_world(layouts, p, rot, values, CENTRAL_STARTS).unwrap();
        let opt = optimal_q(&w, OPTIMAL_GAMMA, OPTIMAL_TOL);
        let oracle = backward_induction(&w, 400);
        for s in 0..N_STATES {
            for a in 0..N_ACTIONS {
                worst = worst.max((opt.values.get(s, a) - oracle[s][a]).abs());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
    let mut worst_d: f64 = 0.0;
    for _ in 0..20 {
        let w = sample_world(layouts, &mut rng);
        let mut b = BeliefModel::grid();
        for s in 0..N_STATES {
            for a in Action::ALL {
                let next = w.step_dynamics(s, a);
                for n in b.support(s).to_vec() {
                    b.set_prob(s, a.index(), n, if n == next { 1.0 } else { 0.0 }).unwrap();
                }
            }
        }
        for target in 0..N_STATES {
            let map = belief_distance_map(&b, target, DISTANCE_CAP, DISTANCE_TOL, DISTANCE_MAX_ITER);
            let bfs = w.bfs_distance(&[target]).unwrap();
            for s in 0..N_STATES {
                worst_d = worst_d.max((map.values[s] - f64::from(bfs[s].unwrap())).abs());
            }
        }
    }
    r.check(
        "oracle equivalence",
        worst < 1e-4 && worst_d < 1e-3,
        format!("optimal_q vs horizon-400 DP max |diff| {worst:.2e} on 6144 worlds; belief distances vs BFS max |diff| {worst_d:.2e} on 20 worlds"),
    );
}

fn dyna_reduction(r: &mut Report, layouts: &[QuadrantLayout; 4], registry: &ParamRegistry) {
    let mf = registry.learner(ModelKind::AS_MF).unwrap();
    let mb = AgentParams {
        eta: Some(registry.learner(ModelKind::AS_MB).unwrap().eta()),
        lambda: Some(0.0),
        ..mf
    };
    let protocol = Protocol::default();
    let expert = registry.expert().unwrap();
    let mut identical = 0;
    let n = 50;
    for i in 0..n {
        let setup = SharedSetup::new(layouts, simulation_seed(BASE_SEED, i), expert, &protocol).unwrap();
        let a = setup.run(Experiment::Exp1, ModelKind::AS_MF, mf, &protocol, i, true).unwrap();
        let b = setup.run(Experiment::Exp1, ModelKind::AS_MB, mb, &protocol, i, true).unwrap();
        if a.step_records == b.step_records && a.learner_q == b.learner_q {
            identical += 1;
        }
    }
    r.check(
        "dyna reduction",
        identical == n,
        format!("{identical}/{n} simulations with bit-identical trajectories and Q tables"),
    );
}

fn records<'a>(ds: &'a Dataset, e: Experiment, m: ModelKind) -> Vec<&'a SimRecord> {
    ds.select(e, m).collect()
}

fn phase(ds: &Dataset, e: Experiment, m: ModelKind, episodes: std::ops::RangeInclusive<usize>) -> Summary {
    Summary::of_values(&window_means(&records(ds, e, m), episodes))
}

/// `a - b` in units of pooled SEM.
fn margin(a: &Summary, b: &Summary) -> f64 {
    (a.mean - b.mean) / pooled_sem(a, b)
}

fn fmt(s: &Summary) -> String {
    format!("{:.2}±{:.2}", s.mean, s.sem)
}

fn exp1_orderings(r: &mut Report, ds: &Dataset) {
    let e = Experiment::Exp1;
    let test = |m| phase(ds, e, m, 11..=20);
    let train = |m| phase(ds, e, m, 1..=10);
    let (as_mf, as_mb, db_mf) = (test(ModelKind::AS_MF), test(ModelKind::AS_MB), test(ModelKind::DB_MF));
    let vs: Vec<(ModelKind, Summary, Summary)> = [ModelKind::VS_MF, ModelKind::VS_MB]
        .into_iter()
        .map(|m| (m, train(m), test(m)))
        .collect();
    let m1 = margin(&as_mb, &as_mf);
    let m2 = margin(&as_mf, &db_mf);
    let stable = vs.iter().all(|(_, tr, te)| margin(te, tr).abs() < 2.0);
    r.check(
        "exp1 test-phase ordering",
        m1 >= 2.0 && m2 >= 2.0 && stable,
        format!(
            "AS-MB {} vs AS-MF {} ({m1:.2} SEM); AS-MF vs DB-MF {} ({m2:.2} SEM); {}",
            fmt(&as_mb),
            fmt(&as_mf),
            fmt(&db_mf),
            vs.iter()
                .map(|(m, tr, te)| format!("{} train {} test {} ({:.2} SEM)", m.name(), fmt(tr), fmt(te), margin(te, tr)))
                .collect::<Vec<_>>()
                .join("; ")
        ),
    );

    let base = train(ModelKind::AS_MB);
    let social = [ModelKind::DB_MF, ModelKind::DB_MB, ModelKind::VS_MF, ModelKind::VS_MB];
    let margins: Vec<(ModelKind, Summary, f64)> = social
        .into_iter()
        .map(|m| {
            let s = train(m);
            (m, s, margin(&s, &base))
        })
        .collect();
    r.check(
        "exp1 training ordering",
        margins.iter().all(|(_, _, x)| *x >= 2.0),
        format!(
            "AS-MB {}; {}",
            fmt(&base),
            margins
                .iter()
                .map(|(m, s, x)| format!("{} {} ({x:.2} SEM)", m.name(), fmt(s)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

fn grouped<F>(ds: &Dataset, layouts: &[QuadrantLayout; 4], m: ModelKind, stat: F) -> Vec<std::collections::BTreeMap<Group, Option<f64>>>
where
    F: Fn(&SimRecord, &DistanceGroups) -> std::collections::BTreeMap<Group, Option<f64>>,
{
    records(ds, Experiment::Exp1, m)
        .into_iter()
        .map(|rec| {
            let w = WorldConfig::from_descriptor(layouts, &rec.train_world).unwrap();
            stat(rec, &DistanceGroups::new(&w, 8))
        })
        .collect()
}

fn at(per_sim: &[std::collections::BTreeMap<Group, Option<f64>>], d: u32) -> Summary {
    Summary::of(per_sim.iter().map(|m| m[&Group::Distance(d)]))
}

fn value_transfer_check(r: &mut Report, ds: &Dataset, layouts: &[QuadrantLayout; 4]) {
    let vt = |m| grouped(ds, layouts, m, |rec, g| value_transfer(&rec.learner_q, &rec.expert.q, g));
    let mut ok = true;
    let mut detail = Vec::new();
    for m in [ModelKind::VS_MF, ModelKind::VS_MB, ModelKind::DB_MB, ModelKind::DB_MF] {
        let (own, base) = (vt(m), vt(m.asocial_counterpart()));
        for d in 1..=3 {
            let (a, b) = (at(&own, d), at(&base, d));
            let x = margin(&a, &b);
            let pass = if m == ModelKind::DB_MF { x < 2.0 } else { x >= 2.0 };
            ok &= pass;
            detail.push(format!("{} d{d} {} vs {} ({x:.2} SEM)", m.name(), fmt(&a), fmt(&b)));
        }
    }
    r.check("value transfer", ok, detail.join("; "));
}

fn belief_transfer_check(r: &mut Report, ds: &Dataset, layouts: &[QuadrantLayout; 4]) {
    let bt = |m| {
        grouped(ds, layouts, m, |rec, g| {
            belief_transfer(rec.learner_beliefs.as_ref().unwrap(), &rec.expert.beliefs, g)
        })
    };
    let base = bt(ModelKind::AS_MB);
    let mut ok = true;
    let mut detail = Vec::new();
    for m in [ModelKind::DB_MB, ModelKind::VS_MB] {
        let own = bt(m);
        let norm: Vec<Summary> = (1..=4)
            .map(|d| {
                Summary::of(own.iter().zip(&base).map(|(a, b)| {
                    let g = Group::Distance(d);
                    a[&g].zip(b[&g]).map(|(x, y)| x - y)
                }))
            })
            .collect();
        let positive = norm[..2].iter().all(|s| s.mean / s.sem >= 2.0);
        let decreasing = norm.windows(2).all(|w| w[1].mean <= w[0].mean);
        ok &= positive && decreasing;
        detail.push(format!(
            "{} d1..4 {}",
            m.name(),
            norm.iter().map(fmt).collect::<Vec<_>>().join(" ")
        ));
    }
    r.check("belief transfer", ok, detail.join("; "));
}

fn recovery_check(r: &mut Report, ds: &Dataset) {
    let mut ok = true;
    let mut detail = Vec::new();
    for m in [ModelKind::AS_MB, ModelKind::DB_MB, ModelKind::VS_MB] {
        let recs = records(ds, Experiment::Exp2, m);
        let late = window_means(&recs, 18..=20);
        let first = window_means(&recs, 11..=11);
        let diff = Summary::of_values(&late.iter().zip(&first).map(|(a, b)| a - b).collect::<Vec<_>>());
        let x = diff.mean / diff.sem;
        ok &= x >= 2.0;
        detail.push(format!("{} episodes 18-20 minus 11: {} ({x:.2} SEM)", m.name(), fmt(&diff)));
    }
    r.check("exp2 recovery", ok, detail.join("; "));
}

fn stability_check(r: &mut Report, ds: &Dataset) {
    let devs = |m| -> Vec<f64> {
        stability_deviations(ds, ds, m)
            .unwrap()
            .into_iter()
            .map(|(a, b)| b.zip(a).map(|(b, a)| b - a).unwrap_or(f64::NAN))
            .collect()
    };
    let (as_mb, vs_mb) = (devs(ModelKind::AS_MB), devs(ModelKind::VS_MB));
    let mean = |v: &[f64]| Summary::of(v.iter().map(|x| Some(*x))).mean;
    let (sa, sv) = (mean(&as_mb).signum(), mean(&vs_mb).signum());
    // Per-simulation difference of deviations, each oriented by its own mean,
    // so the mean difference equals |mean AS-MB| - |mean VS-MB|.
    let diff = Summary::of(as_mb.iter().zip(&vs_mb).map(|(a, v)| Some(sa * a - sv * v)));
    let x = diff.mean / diff.sem;
    r.check(
        "exp3 stability",
        x >= 2.0,
        format!(
            "mean deviation AS-MB {:.4}, VS-MB {:.4}; |AS-MB| - |VS-MB| = {} ({x:.2} SEM, {} simulations excluded)",
            mean(&as_mb),
            mean(&vs_mb),
            fmt(&diff),
            diff.excluded
        ),
    );
}

fn determinism_check(r: &mut Report, ds: &Dataset, layouts: &[QuadrantLayout; 4], registry: &ParamRegistry) {
    let small = |n| ExperimentPlan {
        experiments: Experiment::ALL.to_vec(),
        models: ModelKind::ALL.to_vec(),
        n_sims: n,
        base_seed: BASE_SEED,
        protocol: Protocol::default(),
        record_steps: false,
    };
    let n = 20;
    let again = run_experiments(layouts, registry, &small(n)).unwrap();
    let prefix = Dataset {
        records: ds.records.iter().filter(|r| r.sim < n).cloned().collect(),
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(&again, a.path()).unwrap();
    write_dataset(&prefix, b.path()).unwrap();
    let mut same_bytes = true;
    for f in ["episodes.csv", "values.csv", "beliefs.csv", "world.csv", "visited.csv", "expert.csv"] {
        same_bytes &= std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
    }
    let mut paired = true;
    for sim in 0..N_SIMS {
        let worlds: HashSet<String> = ds
            .records
            .iter()
            .filter(|r| r.sim == sim)
            .map(|r| format!("{:?}", r.train_world))
            .collect();
        paired &= worlds.len() == 1;
    }
    r.check(
        "determinism and pairing",
        same_bytes && paired,
        format!("rerun byte-identical: {same_bytes}; one world per simulation across 3 experiments x 6 models: {paired}"),
    );
}

fn de_check(r: &mut Report) {
    let config = social_rl::optimizer::DEConfig {
        population: Some(40),
        generations: 100,
        seed: BASE_SEED,
        ..Default::default()
    };
    let res = differential_evolution(&[(-5.0, 5.0); 2], &config, |x| Ok(-(x[0] * x[0] + x[1] * x[1]))).unwrap();
    let dist = res.best.iter().map(|v| v * v).sum::<f64>().sqrt();
    let monotone = res.history.windows(2).all(|w| w[1].best_so_far >= w[0].best_so_far);
    r.check(
        "DE sanity",
        dist < 1e-3 && monotone,
        format!("best at distance {dist:.2e} from the optimum; best-so-far non-decreasing: {monotone}"),
    );
}

fn main() {
    let clock = Instant::now();
    let layouts = default_layouts();
    let registry = ParamRegistry::builtin();
    let mut report = Report { lines: Vec::new() };

    combinatorics(&mut report, &layouts);
    noise(&mut report);
    oracles(&mut report, &layouts);
    dyna_reduction(&mut report, &layouts, &registry);

    let plan = ExperimentPlan {
        experiments: Experiment::ALL.to_vec(),
        models: ModelKind::ALL.to_vec(),
        n_sims: N_SIMS,
        base_seed: BASE_SEED,
        protocol: Protocol::default(),
        record_steps: false,
    };
    let ds = run_experiments(&layouts, &registry, &plan).unwrap();
    exp1_orderings(&mut report, &ds);
    value_transfer_check(&mut report, &ds, &layouts);
    belief_transfer_check(&mut report, &ds, &layouts);
    recovery_check(&mut report, &ds);
    stability_check(&mut report, &ds);
    determinism_check(&mut report, &ds, &layouts, &registry);
    de_check(&mut report);

    let failed: Vec<&str> = report.lines.iter().filter(|l| !l.0).map(|l| l.1.as_str()).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0?}",
        report.lines.len() - failed.len(),
        report.lines.len(),
        clock.elapsed()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
