//! Statistics computed from finished simulations: performance curves,
//! value and belief transfer, value accuracy and belief stability, all
//! summarised as mean ± SEM across simulations.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::dp::{optimal_q, OPTIMAL_GAMMA, OPTIMAL_TOL};
use crate::error::{Error, Result};
use crate::experiments::{check_paired, Dataset, Experiment, Phase, SimRecord};
use crate::gridworld::{QuadrantLayout, WorldConfig, WorldDescriptor, N_ACTIONS, N_STATES};
use crate::rl::{BeliefModel, ModelKind, QTable};

pub const METRICS_HEADER: &str = "# social-rl metrics v1";

/// Average ranks (1-based), ties share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either input is constant or the
/// lengths are unusable.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Mean ± SEM over simulations, with undefined values excluded and counted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
    pub excluded: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut kept = Vec::new();
        let mut excluded = 0;
        for v in values {
            match v {
                Some(x) if x.is_finite() => kept.push(x),
                _ => excluded += 1,
            }
        }
        let n = kept.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                sem: f64::NAN,
                n,
                excluded,
            };
        }
        let mean = kept.iter().sum::<f64>() / n as f64;
        let sem = if n < 2 {
            0.0
        } else {
            let var = kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Summary {
            mean,
            sem,
            n,
            excluded,
        }
    }

    pub fn of_values(values: &[f64]) -> Self {
        Self::of(values.iter().map(|v| Some(*v)))
    }

    /// Fewer than two contributing simulations; SEM is reported as 0.
    pub fn is_degenerate(&self) -> bool {
        self.n < 2
    }
}

/// Square root of the summed squared SEMs.
pub fn pooled_sem(a: &Summary, b: &Summary) -> f64 {
    (a.sem * a.sem + b.sem * b.sem).sqrt()
}

/// Distance bucket of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Distance(u32),
    /// Everything beyond the last reported distance.
    Tail(u32),
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Distance(d) => write!(f, "{d}"),
            Group::Tail(d) => write!(f, "{d}+"),
        }
    }
}

/// Wall-respecting distance of every state to the nearest designated
/// reward cell (all four, including the zero-valued one).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGroups {
    pub distance: Vec<Option<u32>>,
    pub max_bucket: u32,
}

impl DistanceGroups {
    pub fn new(world: &WorldConfig, max_bucket: u32) -> Self {
        DistanceGroups {
            distance: world.reward_distances(),
            max_bucket,
        }
    }

    pub fn group(&self, s: usize) -> Option<Group> {
        self.distance[s].map(|d| {
            if d > self.max_bucket {
                Group::Tail(self.max_bucket + 1)
            } else {
                Group::Distance(d)
            }
        })
    }

    /// Groups reported in tables: distances 1..=max plus the tail.
    pub fn reported(&self) -> Vec<Group> {
        (1..=self.max_bucket)
            .map(Group::Distance)
            .chain(std::iter::once(Group::Tail(self.max_bucket + 1)))
            .collect()
    }

    pub fn states_in(&self, g: Group) -> impl Iterator<Item = usize> + '_ {
        (0..self.distance.len()).filter(move |&s| self.group(s) == Some(g))
    }
}

fn q_entries(q: &QTable, states: &[usize]) -> Vec<f64> {
    states
        .iter()
        .flat_map(|&s| (0..N_ACTIONS).map(move |a| q.get(s, a)))
        .collect()
}

fn belief_entries(b: &BeliefModel, states: &[usize]) -> Vec<f64> {
    states
        .iter()
        .flat_map(|&s| (0..N_ACTIONS).flat_map(move |a| b.probs(s, a).iter().copied()))
        .collect()
}

/// Spearman between learner and expert Q over all state-action pairs of
/// each reported group.
pub fn value_transfer(learner: &QTable, expert: &QTable, groups: &DistanceGroups) -> BTreeMap<Group, Option<f64>> {
    groups
        .reported()
        .into_iter()
        .map(|g| {
            let states: Vec<usize> = groups.states_in(g).collect();
            (g, spearman(&q_entries(learner, &states), &q_entries(expert, &states)))
        })
        .collect()
}

/// Pearson between learner and expert beliefs per reported group.
pub fn belief_transfer(learner: &BeliefModel, expert: &BeliefModel, groups: &DistanceGroups) -> BTreeMap<Group, Option<f64>> {
    groups
        .reported()
        .into_iter()
        .map(|g| {
            let states: Vec<usize> = groups.states_in(g).collect();
            (g, pearson(&belief_entries(learner, &states), &belief_entries(expert, &states)))
        })
        .collect()
}

/// Pearson between learner and expert beliefs over every state.
pub fn pooled_belief_transfer(learner: &BeliefModel, expert: &BeliefModel) -> Option<f64> {
    let states: Vec<usize> = (0..N_STATES).collect();
    pearson(&belief_entries(learner, &states), &belief_entries(expert, &states))
}

/// Spearman between learner Q and Q* over visited states of each group.
/// Groups with fewer than two visited states are undefined.
pub fn value_accuracy(
    learner: &QTable,
    optimal: &QTable,
    visited: &std::collections::BTreeSet<usize>,
    groups: &DistanceGroups,
) -> BTreeMap<Group, Option<f64>> {
    groups
        .reported()
        .into_iter()
        .map(|g| {
            let states: Vec<usize> = groups.states_in(g).filter(|s| visited.contains(s)).collect();
            let value = if states.len() < 2 {
                None
            } else {
                spearman(&q_entries(learner, &states), &q_entries(optimal, &states))
            };
            (g, value)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    pub model: String,
    pub statistic: String,
    pub group: String,
    pub value: f64,
    pub sem: f64,
    pub n: usize,
    pub excluded_count: usize,
}

impl MetricsRow {
    fn new(experiment: &str, model: &str, statistic: &str, group: impl ToString, s: Summary) -> Self {
        MetricsRow {
            experiment: experiment.into(),
            model: model.into(),
            statistic: statistic.into(),
            group: group.to_string(),
            value: s.mean,
            sem: s.sem,
            n: s.n,
            excluded_count: s.excluded,
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mean: self.value,
            sem: self.sem,
            n: self.n,
            excluded: self.excluded_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct MetricsCsv {
    experiment: String,
    model: String,
    statistic: String,
    group: String,
    value: f64,
    sem: f64,
    n: usize,
    excluded_count: usize,
}

impl MetricsTable {
    pub fn find(&self, experiment: &str, model: &str, statistic: &str, group: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| {
            r.experiment == experiment && r.model == model && r.statistic == statistic && r.group == group
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        writeln!(buf, "{METRICS_HEADER}")?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in &self.rows {
                w.serialize(MetricsCsv {
                    experiment: r.experiment.clone(),
                    model: r.model.clone(),
                    statistic: r.statistic.clone(),
                    group: r.group.clone(),
                    value: r.value,
                    sem: r.sem,
                    n: r.n,
                    excluded_count: r.excluded_count,
                })?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)
            .map_err(|e| Error::input(path, format!("cannot write metrics: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::input(path, e.to_string()))?;
        let rows = reader
            .deserialize::<MetricsCsv>()
            .map(|r| {
                r.map(|r| MetricsRow {
                    experiment: r.experiment,
                    model: r.model,
                    statistic: r.statistic,
                    group: r.group,
                    value: r.value,
                    sem: r.sem,
                    n: r.n,
                    excluded_count: r.excluded_count,
                })
                .map_err(|e| Error::input(path, e.to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(MetricsTable { rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricsConfig {
    /// Largest distance reported on its own; farther states form the tail.
    pub max_bucket: u32,
    /// Quantile bins of the belief-stability inset.
    pub inset_bins: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            max_bucket: 8,
            inset_bins: 5,
        }
    }
}

/// Rebuilds worlds from descriptors, reusing earlier ones.
struct WorldCache<'a> {
    layouts: &'a [QuadrantLayout; 4],
    max_bucket: u32,
    cache: Vec<(WorldDescriptor, WorldConfig, DistanceGroups)>,
}

impl<'a> WorldCache<'a> {
    fn new(layouts: &'a [QuadrantLayout; 4], max_bucket: u32) -> Self {
        WorldCache {
            layouts,
            max_bucket,
            cache: Vec::new(),
        }
    }

    fn get(&mut self, d: &WorldDescriptor) -> Result<(&WorldConfig, &DistanceGroups)> {
        let i = match self.cache.iter().position(|(k, _, _)| k == d) {
            Some(i) => i,
            None => {
                let w = WorldConfig::from_descriptor(self.layouts, d)?;
                let g = DistanceGroups::new(&w, self.max_bucket);
                self.cache.push((d.clone(), w, g));
                self.cache.len() - 1
            }
        };
        let (_, w, g) = &self.cache[i];
        Ok((w, g))
    }
}

/// Per-simulation mean reward over the given 1-based episodes.
pub fn window_means(records: &[&SimRecord], episodes: std::ops::RangeInclusive<usize>) -> Vec<f64> {
    records
        .iter()
        .map(|r| {
            let rows: Vec<f64> = r
                .episodes
                .iter()
                .filter(|e| episodes.contains(&e.episode))
                .map(|e| f64::from(e.cum_reward))
                .collect();
            rows.iter().sum::<f64>() / rows.len() as f64
        })
        .collect()
}

/// Mean cumulative reward per episode, per-phase means and the expert
/// reference line for one experiment.
pub fn performance_curves(dataset: &Dataset, experiment: Experiment) -> Vec<MetricsRow> {
    let exp = experiment.name();
    let mut rows = Vec::new();
    let mut expert_values = None;
    for model in dataset.models(experiment) {
        let recs: Vec<&SimRecord> = dataset.select(experiment, model).collect();
        let n_eps = recs.iter().map(|r| r.episodes.len()).max().unwrap_or(0);
        for e in 1..=n_eps {
            let s = Summary::of_values(&window_means(&recs, e..=e));
            rows.push(MetricsRow::new(exp, model.name(), "performance", e, s));
        }
        for phase in [Phase::Train, Phase::Test] {
            let vals: Vec<f64> = recs
                .iter()
                .map(|r| {
                    let v: Vec<f64> = r
                        .episodes
                        .iter()
                        .filter(|e| e.phase == phase)
                        .map(|e| f64::from(e.cum_reward))
                        .collect();
                    v.iter().sum::<f64>() / v.len() as f64
                })
                .collect();
            rows.push(MetricsRow::new(exp, model.name(), "phase_performance", phase.name(), Summary::of_values(&vals)));
        }
        if expert_values.is_none() {
            expert_values = Some(
                recs.iter()
                    .map(|r| {
                        let eps = &r.expert.episodes;
                        (!eps.is_empty()).then(|| {
                            eps.iter().map(|e| f64::from(e.cum_reward)).sum::<f64>() / eps.len() as f64
                        })
                    })
                    .collect::<Vec<_>>(),
            );
        }
    }
    if let Some(vals) = expert_values {
        rows.push(MetricsRow::new(exp, "expert", "expert_performance", "train", Summary::of(vals)));
    }
    rows
}

fn grouped_rows(
    exp: &str,
    model: &str,
    statistic: &str,
    per_sim: &[BTreeMap<Group, Option<f64>>],
    groups: &[Group],
) -> Vec<MetricsRow> {
    groups
        .iter()
        .map(|g| {
            let s = Summary::of(per_sim.iter().map(|m| m.get(g).copied().flatten()));
            MetricsRow::new(exp, model, statistic, g, s)
        })
        .collect()
}

/// Pairwise difference of two per-simulation group maps; undefined when
/// either side is.
fn paired_difference(a: &BTreeMap<Group, Option<f64>>, b: &BTreeMap<Group, Option<f64>>) -> BTreeMap<Group, Option<f64>> {
    a.iter()
        .map(|(g, x)| (*g, x.zip(b.get(g).copied().flatten()).map(|(x, y)| x - y)))
        .collect()
}

fn log_exclusions(rows: &[MetricsRow]) {
    for r in rows.iter().filter(|r| r.excluded_count > 0) {
        log::info!(
            "{} {} {} group {}: {} simulation(s) excluded (undefined correlation)",
            r.experiment,
            r.model,
            r.statistic,
            r.group,
            r.excluded_count
        );
    }
}

/// Every statistic for every experiment present in the dataset.
pub fn compute_metrics(dataset: &Dataset, layouts: &[QuadrantLayout; 4], config: &MetricsConfig) -> Result<MetricsTable> {
    let mut rows = Vec::new();
    let mut worlds = WorldCache::new(layouts, config.max_bucket);
    let reported = DistanceGroups {
        distance: Vec::new(),
        max_bucket: config.max_bucket,
    }
    .reported();

    for experiment in dataset.experiments() {
        let exp = experiment.name();
        rows.extend(performance_curves(dataset, experiment));

        // Value and belief transfer at the end of each simulation.
        let mut raw_beliefs: BTreeMap<ModelKind, Vec<(usize, BTreeMap<Group, Option<f64>>)>> = BTreeMap::new();
        for model in dataset.models(experiment) {
            let mut transfer = Vec::new();
            for r in dataset.select(experiment, model) {
                let (_, groups) = worlds.get(&r.train_world)?;
                transfer.push(value_transfer(&r.learner_q, &r.expert.q, groups));
                if let Some(b) = &r.learner_beliefs {
                    raw_beliefs
                        .entry(model)
                        .or_default()
                        .push((r.sim, belief_transfer(b, &r.expert.beliefs, groups)));
                }
            }
            rows.extend(grouped_rows(exp, model.name(), "value_transfer", &transfer, &reported));
        }
        for (model, per_sim) in &raw_beliefs {
            let maps: Vec<_> = per_sim.iter().map(|(_, m)| m.clone()).collect();
            rows.extend(grouped_rows(exp, model.name(), "belief_transfer_raw", &maps, &reported));
        }
        if let Some(baseline) = raw_beliefs.get(&ModelKind::AS_MB) {
            let base: BTreeMap<usize, &BTreeMap<Group, Option<f64>>> =
                baseline.iter().map(|(sim, m)| (*sim, m)).collect();
            for (model, per_sim) in &raw_beliefs {
                let diffs: Vec<_> = per_sim
                    .iter()
                    .map(|(sim, m)| match base.get(sim) {
                        Some(b) => paired_difference(m, b),
                        None => m.keys().map(|g| (*g, None)).collect(),
                    })
                    .collect();
                rows.extend(grouped_rows(exp, model.name(), "belief_transfer", &diffs, &reported));
            }
        }

        if experiment == Experiment::Exp2 {
            for model in dataset.models(experiment) {
                let mut acc = Vec::new();
                for r in dataset.select(experiment, model) {
                    let (world, groups) = worlds.get(&r.test_world)?;
                    let opt = optimal_q(world, OPTIMAL_GAMMA, OPTIMAL_TOL);
                    acc.push(value_accuracy(&r.learner_q, &opt.values, &r.visited, groups));
                }
                rows.extend(grouped_rows(exp, model.name(), "value_accuracy", &acc, &reported));
            }
        }
    }

    let exps = dataset.experiments();
    if exps.contains(&Experiment::Exp3) {
        if !exps.contains(&Experiment::Exp1) {
            return Err(Error::Unpaired(
                "belief stability for exp3 needs the paired exp1 simulations".into(),
            ));
        }
        rows.extend(belief_stability(dataset, dataset, config.inset_bins)?);
    }

    log_exclusions(&rows);
    Ok(MetricsTable { rows })
}

/// Per-simulation pooled belief-transfer correlation of one model.
fn pooled_transfer(dataset: &Dataset, experiment: Experiment, model: ModelKind) -> Vec<(usize, Option<f64>)> {
    dataset
        .select(experiment, model)
        .filter_map(|r| {
            r.learner_beliefs
                .as_ref()
                .map(|b| (r.sim, pooled_belief_transfer(b, &r.expert.beliefs)))
        })
        .collect()
}

/// Belief-stability deviations (Exp. 3 minus Exp. 1, per simulation) of one model.
pub fn stability_deviations(exp1: &Dataset, exp3: &Dataset, model: ModelKind) -> Result<Vec<(Option<f64>, Option<f64>)>> {
    let a: Vec<&SimRecord> = exp1.select(Experiment::Exp1, model).collect();
    let b: Vec<&SimRecord> = exp3.select(Experiment::Exp3, model).collect();
    check_paired(&a, &b)?;
    let base = pooled_transfer(exp1, Experiment::Exp1, model);
    let shifted = pooled_transfer(exp3, Experiment::Exp3, model);
    Ok(base.into_iter().zip(shifted).map(|((_, x), (_, y))| (x, y)).collect())
}

/// Deviation summary per model-based model plus quantile-binned inset data.
pub fn belief_stability(exp1: &Dataset, exp3: &Dataset, bins: usize) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    let models = exp3.models(Experiment::Exp3);
    for model in models.into_iter().filter(|m| m.is_model_based()) {
        let pairs = stability_deviations(exp1, exp3, model)?;
        let deviations = pairs.iter().map(|(x, y)| x.zip(*y).map(|(x, y)| y - x));
        rows.push(MetricsRow::new("exp3", model.name(), "belief_stability", "all", Summary::of(deviations)));

        let mut defined: Vec<(f64, f64)> = pairs.iter().filter_map(|(x, y)| x.zip(*y)).collect();
        defined.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (k, bin) in quantile_bins(defined.len(), bins).into_iter().enumerate() {
            let chunk = &defined[bin];
            let xs: Vec<f64> = chunk.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = chunk.iter().map(|p| p.1).collect();
            let label = format!("q{}", k + 1);
            let sy = Summary::of_values(&ys);
            rows.push(MetricsRow::new("exp3", model.name(), "stability_inset_x", &label, Summary::of_values(&xs)));
            rows.push(MetricsRow::new("exp3", model.name(), "stability_inset_y", &label, sy));
            rows.push(MetricsRow::new(
                "exp3",
                model.name(),
                "stability_inset_y_ci95",
                &label,
                Summary {
                    mean: 1.96 * sy.sem,
                    ..sy
                },
            ));
        }
    }
    Ok(rows)
}

/// Splits `n` sorted items into `bins` contiguous ranges whose sizes differ
/// by at most one.
pub fn quantile_bins(n: usize, bins: usize) -> Vec<std::ops::Range<usize>> {
    let bins = bins.min(n).max(1);
    (0..bins).map(|k| (k * n / bins)..((k + 1) * n / bins)).collect()
}
