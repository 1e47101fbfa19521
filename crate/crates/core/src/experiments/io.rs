//! CSV persistence of a [`Dataset`]. Every file starts with a versioned
//! `#` comment line; rows are written in dataset order (experiment, model,
//! simulation, then table coordinates), so reruns are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{Dataset, EpisodeRow, Experiment, ExpertSnapshot, Phase, SimRecord};
use crate::error::{Error, Result};
use crate::gridworld::{Cell, Rotation, WorldDescriptor, N_ACTIONS, N_STATES};
use crate::rl::{BeliefModel, ModelKind, QTable};

const SCHEMA_VERSION: &str = "v1";
const EXPERT_MODEL: &str = "expert";

#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub episodes: PathBuf,
    pub expert: PathBuf,
    pub values: PathBuf,
    pub beliefs: PathBuf,
    pub world: PathBuf,
    pub visited: PathBuf,
    pub steps: PathBuf,
}

impl OutputFiles {
    pub fn in_dir(dir: &Path) -> Self {
        OutputFiles {
            episodes: dir.join("episodes.csv"),
            expert: dir.join("expert.csv"),
            values: dir.join("values.csv"),
            beliefs: dir.join("beliefs.csv"),
            world: dir.join("world.csv"),
            visited: dir.join("visited.csv"),
            steps: dir.join("steps.csv"),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeCsv {
    experiment: String,
    model: String,
    sim: usize,
    episode: usize,
    phase: String,
    cum_reward: i32,
    steps: usize,
    terminated_by_reward: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExpertCsv {
    experiment: String,
    sim: usize,
    episode: usize,
    phase: String,
    cum_reward: i32,
    steps: usize,
    terminated_by_reward: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValueCsv {
    experiment: String,
    model: String,
    sim: usize,
    state: usize,
    action: usize,
    q_value: f64,
    source: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BeliefCsv {
    experiment: String,
    model: String,
    sim: usize,
    state: usize,
    action: usize,
    successor: usize,
    probability: f64,
    source: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WorldCsv {
    experiment: String,
    sim: usize,
    phase: String,
    position: usize,
    quadrant: usize,
    rotation: u32,
    reward_value: i32,
    start_row: usize,
    start_col: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct VisitedCsv {
    experiment: String,
    model: String,
    sim: usize,
    state: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepCsv {
    experiment: String,
    model: String,
    sim: usize,
    episode: usize,
    step: usize,
    state: usize,
    action: usize,
    reward: i32,
    expert_state: Option<usize>,
    component: String,
}

struct TableWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl TableWriter {
    fn create(path: &Path, table: &str) -> Result<Self> {
        let file = File::create(path)
            .map_err(|e| Error::input(path, format!("cannot create output file: {e}")))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "# social-rl {table} {SCHEMA_VERSION}")?;
        Ok(TableWriter {
            inner: csv::Writer::from_writer(buf),
        })
    }

    fn row<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Writes all tables of `dataset` into `dir` (created if missing).
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::input(dir, format!("cannot create output directory: {e}")))?;
    let files = OutputFiles::in_dir(dir);

    let mut episodes = TableWriter::create(&files.episodes, "episodes")?;
    let mut values = TableWriter::create(&files.values, "values")?;
    let mut beliefs = TableWriter::create(&files.beliefs, "beliefs")?;
    let mut visited = TableWriter::create(&files.visited, "visited")?;
    let has_steps = dataset.records.iter().any(|r| !r.step_records.is_empty());
    let mut steps = if has_steps {
        Some(TableWriter::create(&files.steps, "steps")?)
    } else {
        None
    };

    for r in &dataset.records {
        let exp = r.experiment.name();
        let model = r.model.name();
        for e in &r.episodes {
            episodes.row(&EpisodeCsv {
                experiment: exp.into(),
                model: model.into(),
                sim: r.sim,
                episode: e.episode,
                phase: e.phase.name().into(),
                cum_reward: e.cum_reward,
                steps: e.steps,
                terminated_by_reward: e.terminated_by_reward,
            })?;
        }
        write_q(&mut values, exp, model, r.sim, &r.learner_q, "learner")?;
        if let Some(b) = &r.learner_beliefs {
            write_beliefs(&mut beliefs, exp, model, r.sim, b, "learner")?;
        }
        for &s in &r.visited {
            visited.row(&VisitedCsv {
                experiment: exp.into(),
                model: model.into(),
                sim: r.sim,
                state: s,
            })?;
        }
        if let Some(w) = steps.as_mut() {
            for (e, ep) in r.step_records.iter().enumerate() {
                for (t, s) in ep.iter().enumerate() {
                    w.row(&StepCsv {
                        experiment: exp.into(),
                        model: model.into(),
                        sim: r.sim,
                        episode: e + 1,
                        step: t + 1,
                        state: s.state,
                        action: s.action.index(),
                        reward: s.reward,
                        expert_state: s.expert_state,
                        component: s.component.name().into(),
                    })?;
                }
            }
        }
    }

    // Per-simulation tables, one entry per (experiment, sim).
    let mut expert = TableWriter::create(&files.expert, "expert")?;
    let mut world = TableWriter::create(&files.world, "world")?;
    for r in per_sim(dataset) {
        let exp = r.experiment.name();
        write_q(&mut values, exp, EXPERT_MODEL, r.sim, &r.expert.q, "expert")?;
        write_beliefs(&mut beliefs, exp, EXPERT_MODEL, r.sim, &r.expert.beliefs, "expert")?;
        for e in &r.expert.episodes {
            expert.row(&ExpertCsv {
                experiment: exp.into(),
                sim: r.sim,
                episode: e.episode,
                phase: e.phase.name().into(),
                cum_reward: e.cum_reward,
                steps: e.steps,
                terminated_by_reward: e.terminated_by_reward,
            })?;
        }
        for (phase, d) in [(Phase::Train, &r.train_world), (Phase::Test, &r.test_world)] {
            for p in 0..4 {
                world.row(&WorldCsv {
                    experiment: exp.into(),
                    sim: r.sim,
                    phase: phase.name().into(),
                    position: p,
                    quadrant: d.permutation[p],
                    rotation: d.rotations[p].degrees(),
                    reward_value: d.reward_values[p],
                    start_row: d.start_states[p].row,
                    start_col: d.start_states[p].col,
                })?;
            }
        }
    }

    for w in [episodes, values, beliefs, visited, expert, world] {
        w.finish()?;
    }
    if let Some(w) = steps {
        w.finish()?;
    }
    Ok(files)
}

/// First record of every (experiment, sim) pair, in dataset order.
fn per_sim(dataset: &Dataset) -> Vec<&SimRecord> {
    let mut seen = BTreeSet::new();
    let mut out: Vec<&SimRecord> = dataset
        .records
        .iter()
        .filter(|r| seen.insert((r.experiment, r.sim)))
        .collect();
    out.sort_by_key(|r| (r.experiment, r.sim));
    out
}

fn write_q(w: &mut TableWriter, exp: &str, model: &str, sim: usize, q: &QTable, source: &str) -> Result<()> {
    for (state, action, q_value) in q.snapshot() {
        w.row(&ValueCsv {
            experiment: exp.into(),
            model: model.into(),
            sim,
            state,
            action,
            q_value,
            source: source.into(),
        })?;
    }
    Ok(())
}

fn write_beliefs(
    w: &mut TableWriter,
    exp: &str,
    model: &str,
    sim: usize,
    b: &BeliefModel,
    source: &str,
) -> Result<()> {
    for (state, action, successor, probability) in b.snapshot() {
        w.row(&BeliefCsv {
            experiment: exp.into(),
            model: model.into(),
            sim,
            state,
            action,
            successor,
            probability,
            source: source.into(),
        })?;
    }
    Ok(())
}

fn read_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::input(path, format!("cannot open: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::input(path, e.to_string())))
        .collect()
}

type Key = (Experiment, String, usize);

fn parse_exp(path: &Path, s: &str) -> Result<Experiment> {
    s.parse().map_err(|e: String| Error::input(path, e))
}

/// Rebuilds a dataset from the tables written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let files = OutputFiles::in_dir(dir);

    let mut episodes: BTreeMap<Key, Vec<EpisodeRow>> = BTreeMap::new();
    for row in read_table::<EpisodeCsv>(&files.episodes)? {
        let key = (parse_exp(&files.episodes, &row.experiment)?, row.model, row.sim);
        episodes.entry(key).or_default().push(EpisodeRow {
            episode: row.episode,
            phase: row.phase.parse().map_err(|e: String| Error::input(&files.episodes, e))?,
            cum_reward: row.cum_reward,
            steps: row.steps,
            terminated_by_reward: row.terminated_by_reward,
        });
    }

    let mut q_tables: BTreeMap<Key, QTable> = BTreeMap::new();
    for row in read_table::<ValueCsv>(&files.values)? {
        let key = (parse_exp(&files.values, &row.experiment)?, row.model, row.sim);
        if row.state >= N_STATES || row.action >= N_ACTIONS {
            return Err(Error::input(&files.values, format!("state/action out of range: {}/{}", row.state, row.action)));
        }
        q_tables
            .entry(key)
            .or_insert_with(|| QTable::new(N_STATES))
            .set(row.state, row.action, row.q_value);
    }

    let mut belief_tables: BTreeMap<Key, BeliefModel> = BTreeMap::new();
    for row in read_table::<BeliefCsv>(&files.beliefs)? {
        let key = (parse_exp(&files.beliefs, &row.experiment)?, row.model, row.sim);
        if row.state >= N_STATES || row.action >= N_ACTIONS {
            return Err(Error::input(&files.beliefs, format!("state/action out of range: {}/{}", row.state, row.action)));
        }
        belief_tables
            .entry(key)
            .or_insert_with(BeliefModel::grid)
            .set_prob(row.state, row.action, row.successor, row.probability)
            .map_err(|e| Error::input(&files.beliefs, e.to_string()))?;
    }

    let mut visited: BTreeMap<Key, BTreeSet<usize>> = BTreeMap::new();
    for row in read_table::<VisitedCsv>(&files.visited)? {
        let key = (parse_exp(&files.visited, &row.experiment)?, row.model, row.sim);
        visited.entry(key).or_default().insert(row.state);
    }

    let mut expert_rows: BTreeMap<(Experiment, usize), Vec<EpisodeRow>> = BTreeMap::new();
    for row in read_table::<ExpertCsv>(&files.expert)? {
        let key = (parse_exp(&files.expert, &row.experiment)?, row.sim);
        expert_rows.entry(key).or_default().push(EpisodeRow {
            episode: row.episode,
            phase: row.phase.parse().map_err(|e: String| Error::input(&files.expert, e))?,
            cum_reward: row.cum_reward,
            steps: row.steps,
            terminated_by_reward: row.terminated_by_reward,
        });
    }

    let mut worlds: BTreeMap<(Experiment, usize, Phase), WorldDescriptor> = BTreeMap::new();
    for row in read_table::<WorldCsv>(&files.world)? {
        let phase: Phase = row.phase.parse().map_err(|e: String| Error::input(&files.world, e))?;
        let key = (parse_exp(&files.world, &row.experiment)?, row.sim, phase);
        if row.position >= 4 {
            return Err(Error::input(&files.world, format!("board position {} out of range", row.position)));
        }
        let d = worlds.entry(key).or_insert_with(|| WorldDescriptor {
            permutation: [0; 4],
            rotations: [Rotation::R0; 4],
            reward_values: [0; 4],
            start_states: [Cell::new(0, 0); 4],
        });
        let p = row.position;
        d.permutation[p] = row.quadrant;
        d.rotations[p] = Rotation::from_degrees(row.rotation)
            .ok_or_else(|| Error::input(&files.world, format!("bad rotation {}", row.rotation)))?;
        d.reward_values[p] = row.reward_value;
        d.start_states[p] = Cell::new(row.start_row, row.start_col);
    }

    let mut experts: BTreeMap<(Experiment, usize), Arc<ExpertSnapshot>> = BTreeMap::new();
    let mut records = Vec::with_capacity(episodes.len());
    for ((experiment, model_name, sim), eps) in episodes {
        let key = (experiment, model_name.clone(), sim);
        let model: ModelKind = model_name
            .parse()
            .map_err(|_| Error::input(&files.episodes, format!("unknown model `{model_name}`")))?;
        let expert = match experts.get(&(experiment, sim)) {
            Some(e) => Arc::clone(e),
            None => {
                let ek = (experiment, EXPERT_MODEL.to_string(), sim);
                let missing = |what: &str, path: &Path| {
                    Error::input(path, format!("no expert {what} for {experiment} sim {sim}"))
                };
                let snap = Arc::new(ExpertSnapshot {
                    q: q_tables.remove(&ek).ok_or_else(|| missing("values", &files.values))?,
                    beliefs: belief_tables
                        .remove(&ek)
                        .ok_or_else(|| missing("beliefs", &files.beliefs))?,
                    episodes: expert_rows.remove(&(experiment, sim)).unwrap_or_default(),
                });
                experts.insert((experiment, sim), Arc::clone(&snap));
                snap
            }
        };
        let world = |phase| {
            worlds.get(&(experiment, sim, phase)).cloned().ok_or_else(|| {
                Error::input(&files.world, format!("no {} world for {experiment} sim {sim}", phase.name()))
            })
        };
        records.push(SimRecord {
            experiment,
            model,
            sim,
            episodes: eps,
            learner_q: q_tables
                .remove(&key)
                .ok_or_else(|| Error::input(&files.values, format!("no values for {model} {experiment} sim {sim}")))?,
            learner_beliefs: belief_tables.remove(&key),
            visited: visited.remove(&key).unwrap_or_default(),
            expert,
            train_world: world(Phase::Train)?,
            test_world: world(Phase::Test)?,
            step_records: Vec::new(),
        });
    }
    let mut dataset = Dataset { records };
    dataset.sort();
    Ok(dataset)
}
