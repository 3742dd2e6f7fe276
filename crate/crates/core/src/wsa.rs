//! Water strider search over multilevel Otsu threshold vectors.
//!
//! Each strider holds a threshold vector. Every iteration the population is
//! dealt round-robin (best first) into territories; the best member of a
//! territory is its female and every male then tries, in order:
//!
//! 1. a mating move toward the female, `x + d * r` with probability `P`,
//!    otherwise `x + d * (1 + r)`, where `d = x_female - x`;
//! 2. if that does not beat its current fitness, a foraging move
//!    `x + 2 r (x_best - x)`;
//! 3. if foraging also fails, replacement by a larva drawn uniformly inside
//!    the territory's bounding box.
//!
//! Positions are repaired after every move (sort, clamp to `[1, L-1]`,
//! round, push duplicates up), so every stored position is a valid
//! [`ThresholdVector`]. Females never move, so the population best never
//! degrades.
//!
//! Randomness is drawn from a ChaCha stream keyed by `(iteration, strider)`,
//! which makes a run independent of how the males are scheduled across threads.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::otsu::{self, Histogram, ThresholdVector};

/// Which solution foraging moves toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestSource {
    Global,
    Territory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WsaConfig {
    pub population_size: usize,
    pub territories: usize,
    pub max_iterations: usize,
    pub mating_probability: f64,
    pub seed: u64,
    /// Number of cuts `m` (one less than the class count).
    pub thresholds: usize,
    pub best_source: BestSource,
    /// Draw a fresh random factor per coordinate instead of one per move.
    pub per_coordinate_rand: bool,
}

impl Default for WsaConfig {
    fn default() -> Self {
        WsaConfig {
            population_size: 20,
            territories: 5,
            max_iterations: 100,
            mating_probability: 0.5,
            seed: 0,
            thresholds: 1,
            best_source: BestSource::Global,
            per_coordinate_rand: false,
        }
    }
}

impl WsaConfig {
    pub fn validate(&self, levels: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.territories == 0 || self.population_size < 2 * self.territories {
            return bad(format!(
                "population {} must be at least twice the territory count {}",
                self.population_size, self.territories
            ));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.mating_probability) {
            return bad(format!(
                "mating probability {} not in [0, 1]",
                self.mating_probability
            ));
        }
        if self.thresholds == 0 || self.thresholds >= levels {
            return bad(format!(
                "cannot place {} cuts in {levels} gray levels",
                self.thresholds
            ));
        }
        Ok(())
    }

    /// Upper bound on objective evaluations for a full run.
    pub fn max_evaluations(&self) -> u64 {
        let males = (self.population_size - self.territories) as u64;
        self.population_size as u64 + 3 * males * self.max_iterations as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterStrider {
    /// Repaired, integer-valued cut positions.
    pub position: Vec<f64>,
    pub fitness: f64,
    pub territory: usize,
    pub sex: Sex,
}

impl WaterStrider {
    pub fn thresholds(&self) -> ThresholdVector {
        let cuts = self.position.iter().map(|&c| c as usize).collect();
        ThresholdVector::new(cuts, usize::MAX).expect("repaired position is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_fitness: f64,
    /// Cumulative objective evaluations, including initialization.
    pub evaluations: u64,
    /// Cumulative wall-clock time in milliseconds.
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WsaTrace {
    pub initial_evaluations: u64,
    pub rows: Vec<TraceRow>,
}

impl WsaTrace {
    pub fn evaluations(&self) -> u64 {
        self.rows
            .last()
            .map_or(self.initial_evaluations, |r| r.evaluations)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,best_fitness,evaluations,elapsed_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.3}",
                r.iteration, r.best_fitness, r.evaluations, r.elapsed_ms
            );
        }
        out
    }
}

/// Between-class variance from exact prefix counts, with an evaluation counter.
#[derive(Debug)]
pub struct Objective {
    prefix_n: Vec<u64>,
    prefix_s: Vec<u64>,
    total: f64,
    global_mean: f64,
    evaluations: AtomicU64,
}

impl Objective {
    pub fn new(h: &Histogram) -> Result<Self> {
        if h.total() == 0 {
            return Err(Error::Histogram("histogram is empty (N = 0)".into()));
        }
        let mut prefix_n = vec![0u64; h.levels() + 1];
        let mut prefix_s = vec![0u64; h.levels() + 1];
        for (i, &c) in h.counts().iter().enumerate() {
            prefix_n[i + 1] = prefix_n[i] + c;
            prefix_s[i + 1] = prefix_s[i] + c * i as u64;
        }
        let total = h.total() as f64;
        Ok(Objective {
            global_mean: prefix_s[h.levels()] as f64 / total,
            prefix_n,
            prefix_s,
            total,
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn levels(&self) -> usize {
        self.prefix_n.len() - 1
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Fitness of a repaired position. Counts as one evaluation.
    pub fn evaluate(&self, position: &[f64]) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let levels = self.levels();
        let mut fitness = 0.0;
        let mut lo = 0;
        for hi in position
            .iter()
            .map(|&c| c as usize)
            .chain(std::iter::once(levels))
        {
            let n = self.prefix_n[hi] - self.prefix_n[lo];
            if n > 0 {
                let w = n as f64 / self.total;
                let mu = (self.prefix_s[hi] - self.prefix_s[lo]) as f64 / n as f64;
                fitness += w * (mu - self.global_mean).powi(2);
            }
            lo = hi;
        }
        fitness
    }
}

/// Sorts, clamps to `[1, L-1]`, rounds, and pushes duplicate cuts upward
/// (then back down from the top if they overflow).
pub fn repair(position: &mut [f64], levels: usize) {
    let max = (levels - 1) as f64;
    let m = position.len();
    for c in position.iter_mut() {
        *c = if c.is_nan() {
            1.0
        } else {
            c.clamp(1.0, max).round()
        };
    }
    position.sort_by(f64::total_cmp);
    for j in 1..m {
        if position[j] <= position[j - 1] {
            position[j] = position[j - 1] + 1.0;
        }
    }
    for j in (0..m).rev() {
        position[j] = position[j].min(max - (m - 1 - j) as f64);
    }
}

fn draw(rng: &mut ChaCha8Rng, dims: usize, per_coordinate: bool) -> Vec<f64> {
    if per_coordinate {
        (0..dims).map(|_| rng.gen::<f64>()).collect()
    } else {
        vec![rng.gen::<f64>(); dims]
    }
}

/// Mating update `x + d * r` (mating) or `x + d * (1 + r)`, with `d = female - x`.
pub fn mating_move(x: &[f64], female: &[f64], rand: &[f64], mating: bool) -> Vec<f64> {
    let shift = if mating { 0.0 } else { 1.0 };
    x.iter()
        .zip(female)
        .zip(rand)
        .map(|((xi, fi), r)| xi + (fi - xi) * (shift + r))
        .collect()
}

/// Foraging update `x + 2 r (best - x)`.
pub fn forage_move(x: &[f64], best: &[f64], rand: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(best)
        .zip(rand)
        .map(|((xi, bi), r)| xi + 2.0 * r * (bi - xi))
        .collect()
}

fn stream_rng(seed: u64, iteration: usize, strider: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | strider as u64);
    rng
}

/// Random initial population, each member repaired and evaluated once.
pub fn initialize(config: &WsaConfig, objective: &Objective) -> Result<Vec<WaterStrider>> {
    let levels = objective.levels();
    config.validate(levels)?;
    Ok((0..config.population_size)
        .into_par_iter()
        .map(|idx| {
            let mut rng = stream_rng(config.seed, 0, idx);
            let mut position: Vec<f64> = (0..config.thresholds)
                .map(|_| rng.gen_range(1.0..=(levels - 1) as f64))
                .collect();
            repair(&mut position, levels);
            let fitness = objective.evaluate(&position);
            WaterStrider {
                position,
                fitness,
                territory: 0,
                sex: Sex::Male,
            }
        })
        .collect())
}

/// Deals the fitness-ranked population round-robin into `territories` groups.
///
/// Returns member indices per territory, best first; the first member of each
/// territory becomes its female. Ties keep index order.
pub fn allocate_territories(
    population: &mut [WaterStrider],
    territories: usize,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| population[b].fitness.total_cmp(&population[a].fitness));
    let mut groups = vec![Vec::new(); territories];
    for (rank, &idx) in order.iter().enumerate() {
        groups[rank % territories].push(idx);
    }
    for (t, members) in groups.iter().enumerate() {
        for (k, &idx) in members.iter().enumerate() {
            population[idx].territory = t;
            population[idx].sex = if k == 0 { Sex::Female } else { Sex::Male };
        }
    }
    groups
}

/// Applies one mating move of `male` toward `female`.
pub fn mating_step(
    male: &WaterStrider,
    female: &WaterStrider,
    mating_probability: f64,
    per_coordinate: bool,
    levels: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mating = rng.gen::<f64>() < mating_probability;
    let r = draw(rng, male.position.len(), per_coordinate);
    let mut next = mating_move(&male.position, &female.position, &r, mating);
    repair(&mut next, levels);
    next
}

pub fn forage_step(
    ws: &WaterStrider,
    best: &[f64],
    per_coordinate: bool,
    levels: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let r = draw(rng, ws.position.len(), per_coordinate);
    let mut next = forage_move(&ws.position, best, &r);
    repair(&mut next, levels);
    next
}

/// Larva drawn uniformly in the bounding box of the territory members' positions.
/// Degenerate extents are widened by one level each side.
pub fn succession_step(members: &[&[f64]], levels: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dims = members[0].len();
    let mut larva: Vec<f64> = (0..dims)
        .map(|d| {
            let lo = members.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let hi = members
                .iter()
                .map(|p| p[d])
                .fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if hi > lo {
                (lo, hi)
            } else {
                (lo - 1.0, hi + 1.0)
            };
            rng.gen_range(lo..=hi)
        })
        .collect();
    repair(&mut larva, levels);
    larva
}

#[derive(Debug, Clone)]
pub struct WsaResult {
    pub thresholds: ThresholdVector,
    pub fitness: f64,
    pub trace: WsaTrace,
}

/// Runs the full search and returns the best strider found.
pub fn optimize(h: &Histogram, config: &WsaConfig) -> Result<WsaResult> {
    let objective = Objective::new(h)?;
    let levels = objective.levels();
    config.validate(levels)?;
    let start = Instant::now();
    let mut population = initialize(config, &objective)?;
    let mut trace = WsaTrace {
        initial_evaluations: objective.evaluations(),
        rows: Vec::with_capacity(config.max_iterations),
    };

    for iteration in 1..=config.max_iterations {
        let groups = allocate_territories(&mut population, config.territories);
        let snapshot = population.clone();
        let best_idx = groups[0][0];

        let updates: Vec<(usize, Vec<f64>, f64)> = groups
            .par_iter()
            .flat_map_iter(|members| {
                let female = &snapshot[members[0]];
                members[1..].iter().map(move |&idx| (idx, female, members))
            })
            .map(|(idx, female, members)| {
                let mut rng = stream_rng(config.seed, iteration, idx);
                let ws = &snapshot[idx];
                let before = ws.fitness;

                let next = mating_step(
                    ws,
                    female,
                    config.mating_probability,
                    config.per_coordinate_rand,
                    levels,
                    &mut rng,
                );
                let f = objective.evaluate(&next);
                if f > before {
                    return (idx, next, f);
                }

                let target = match config.best_source {
                    BestSource::Global => &snapshot[best_idx].position,
                    BestSource::Territory => &female.position,
                };
                let next = forage_step(ws, target, config.per_coordinate_rand, levels, &mut rng);
                let f = objective.evaluate(&next);
                if f > before {
                    return (idx, next, f);
                }

                let positions: Vec<&[f64]> = members
                    .iter()
                    .map(|&m| snapshot[m].position.as_slice())
                    .collect();
                let larva = succession_step(&positions, levels, &mut rng);
                let f = objective.evaluate(&larva);
                (idx, larva, f)
            })
            .collect();

        for (idx, position, fitness) in updates {
            population[idx].position = position;
            population[idx].fitness = fitness;
        }
        let best = population
            .iter()
            .map(|ws| ws.fitness)
            .fold(f64::NEG_INFINITY, f64::max);
        trace.rows.push(TraceRow {
            iteration,
            best_fitness: best,
            evaluations: objective.evaluations(),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    // lowest index among equal-fitness bests
    let best = population
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, ws)| match acc {
            Some((_, f)) if f >= ws.fitness => acc,
            _ => Some((i, ws.fitness)),
        })
        .map(|(i, _)| &population[i])
        .expect("non-empty population");
    Ok(WsaResult {
        thresholds: ThresholdVector::new(
            best.position.iter().map(|&c| c as usize).collect(),
            levels,
        )?,
        fitness: best.fitness,
        trace,
    })
}

/// How thresholds are chosen for [`segment`].
#[derive(Debug, Clone)]
pub enum SegmentMethod {
    Wsa(WsaConfig),
    Exhaustive { thresholds: usize, budget: u128 },
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// Class index per element, in the input's order.
    pub labels: Vec<u8>,
    pub thresholds: ThresholdVector,
    pub fitness: f64,
    pub trace: Option<WsaTrace>,
}

/// Thresholds `values` and labels each element with its class.
///
/// A histogram with a single occupied bin has no between-class structure;
/// every element is then labelled 0.
pub fn segment(values: &[u16], levels: usize, method: &SegmentMethod) -> Result<Segmentation> {
    let h = Histogram::from_values(values, levels);
    let (thresholds, fitness, trace) = match method {
        SegmentMethod::Wsa(config) => {
            let r = optimize(&h, config)?;
            (r.thresholds, r.fitness, Some(r.trace))
        }
        SegmentMethod::Exhaustive { thresholds, budget } => {
            let (t, f) = otsu::exhaustive_optimize(&h, *thresholds, *budget)?;
            (t, f, None)
        }
    };
    let occupied = h.counts().iter().filter(|&&c| c > 0).count();
    let labels = if occupied <= 1 {
        vec![0; values.len()]
    } else {
        thresholds.label(values)
    };
    Ok(Segmentation {
        labels,
        thresholds,
        fitness,
        trace,
    })
}
