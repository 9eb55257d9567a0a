//! Genetic architecture search over a modular NL2SQL design space.
//!
//! The space is a stack of named layers, each with a finite option set and
//! a validity predicate given as forbidden combinations. Search runs a
//! standard generational GA: fitness-proportional pair selection that
//! excludes the unique worst individual (Russian-Roulette), per-layer
//! module swap with probability `p_s`, per-layer module mutation with
//! probability `p_m`, and elitism.

mod fitness;

pub use fitness::{FitnessError, FitnessFn, FnFitness, TableFitness, TargetMetric, TestbedFitness};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub options: Vec<String>,
}

/// A forbidden combination: a genome matching every (layer, option) pair
/// listed here is invalid.
pub type ForbiddenCombo = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub forbidden: Vec<ForbiddenCombo>,
}

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("search space has no layers")]
    NoLayers,
    #[error("layer '{0}' has no options")]
    EmptyLayer(String),
    #[error("duplicate layer name '{0}'")]
    DuplicateLayer(String),
    #[error("duplicate option '{option}' in layer '{layer}'")]
    DuplicateOption { layer: String, option: String },
    #[error("forbidden combination references unknown layer '{0}'")]
    UnknownLayer(String),
    #[error("forbidden combination references unknown option '{option}' of layer '{layer}'")]
    UnknownOption { layer: String, option: String },
}

impl SearchSpace {
    pub fn new(layers: Vec<Layer>, forbidden: Vec<ForbiddenCombo>) -> Result<Self, SpaceError> {
        if layers.is_empty() {
            return Err(SpaceError::NoLayers);
        }
        let mut names = std::collections::BTreeSet::new();
        for layer in &layers {
            if layer.options.is_empty() {
                return Err(SpaceError::EmptyLayer(layer.name.clone()));
            }
            if !names.insert(layer.name.clone()) {
                return Err(SpaceError::DuplicateLayer(layer.name.clone()));
            }
            let mut opts = std::collections::BTreeSet::new();
            for option in &layer.options {
                if !opts.insert(option.clone()) {
                    return Err(SpaceError::DuplicateOption {
                        layer: layer.name.clone(),
                        option: option.clone(),
                    });
                }
            }
        }
        for combo in &forbidden {
            for (layer_name, option) in combo {
                let layer = layers
                    .iter()
                    .find(|l| &l.name == layer_name)
                    .ok_or_else(|| SpaceError::UnknownLayer(layer_name.clone()))?;
                if !layer.options.contains(option) {
                    return Err(SpaceError::UnknownOption {
                        layer: layer_name.clone(),
                        option: option.clone(),
                    });
                }
            }
        }
        Ok(SearchSpace { layers, forbidden })
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let raw: SearchSpace = serde_json::from_str(text).map_err(|e| e.to_string())?;
        SearchSpace::new(raw.layers, raw.forbidden).map_err(|e| e.to_string())
    }

    /// True when the assignment violates no forbidden combination.
    pub fn is_valid(&self, genome: &Genome) -> bool {
        'combos: for combo in &self.forbidden {
            for (layer_name, option) in combo {
                let Some(idx) = self.layers.iter().position(|l| &l.name == layer_name) else {
                    continue 'combos;
                };
                if self.layers[idx].options[genome.choices[idx] as usize] != *option {
                    continue 'combos;
                }
            }
            return false;
        }
        true
    }

    /// Number of assignments ignoring validity.
    pub fn raw_size(&self) -> usize {
        self.layers.iter().map(|l| l.options.len()).product()
    }
}

/// The default NL2SQL design space: pre-processing (schema linking, DB
/// content), prompting, generation (multi-step, intermediate
/// representation, decoding), and post-processing.
pub fn default_space() -> SearchSpace {
    let layer = |name: &str, options: &[&str]| Layer {
        name: name.to_string(),
        options: options.iter().map(|s| s.to_string()).collect(),
    };
    SearchSpace::new(
        vec![
            layer("pre_processing.schema_linking", &["none", "linking_on"]),
            layer("pre_processing.db_content", &["none", "content_on"]),
            layer("prompting", &["zero_shot", "few_shot_similarity"]),
            layer(
                "generation.multi_step",
                &["none", "skeleton_then_sql", "subquery_then_sql"],
            ),
            layer("generation.intermediate_rep", &["none", "natsql_tag"]),
            layer("generation.decoding", &["greedy", "beam", "constrained"]),
            layer(
                "post_processing",
                &[
                    "none",
                    "self_correction",
                    "self_consistency",
                    "exec_guided_selector",
                    "n_best_rerank",
                ],
            ),
        ],
        Vec::new(),
    )
    .expect("default space is well-formed")
}

/// One option index per layer; always valid for its space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome {
    pub choices: Vec<u16>,
}

impl Genome {
    /// Stable identity: layer options joined by `|`.
    pub fn key(&self, space: &SearchSpace) -> String {
        self.choices
            .iter()
            .zip(&space.layers)
            .map(|(c, l)| l.options[*c as usize].as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Parse a `|`-joined option key back into a genome.
    pub fn from_key(space: &SearchSpace, key: &str) -> Option<Genome> {
        let parts: Vec<&str> = key.split('|').collect();
        if parts.len() != space.layers.len() {
            return None;
        }
        let mut choices = Vec::with_capacity(parts.len());
        for (part, layer) in parts.iter().zip(&space.layers) {
            choices.push(layer.options.iter().position(|o| o == part)? as u16);
        }
        Some(Genome { choices })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub swap_probability: f64,
    pub mutation_probability: f64,
    pub elitism_count: usize,
    pub rng_seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population_size: 10,
            generations: 20,
            swap_probability: 0.5,
            mutation_probability: 0.2,
            elitism_count: 1,
            rng_seed: 0,
        }
    }
}

impl GaParams {
    fn validate(&self) -> Result<(), SearchError> {
        if self.population_size < 2 {
            return Err(SearchError::InvalidParams(
                "population_size must be at least 2".into(),
            ));
        }
        if self.elitism_count >= self.population_size {
            return Err(SearchError::InvalidParams(
                "elitism_count must be smaller than population_size".into(),
            ));
        }
        for (name, p) in [
            ("swap_probability", self.swap_probability),
            ("mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SearchError::InvalidParams(format!(
                    "{name} must be in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("no valid genome found after {0} sampling attempts")]
    NoValidGenome(usize),
    #[error("invalid GA parameters: {0}")]
    InvalidParams(String),
    #[error("fitness evaluation failed for genome '{}': {}", .0.genome_key, .0.message)]
    Fitness(FitnessError),
}

const INIT_ATTEMPTS: usize = 10_000;

/// Uniform rejection sampling of `population_size` valid genomes.
pub fn init_population(
    space: &SearchSpace,
    params: &GaParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Genome>, SearchError> {
    params.validate()?;
    let mut population = Vec::with_capacity(params.population_size);
    for _ in 0..params.population_size {
        population.push(sample_valid(space, rng)?);
    }
    Ok(population)
}

fn sample_valid(space: &SearchSpace, rng: &mut ChaCha8Rng) -> Result<Genome, SearchError> {
    for _ in 0..INIT_ATTEMPTS {
        let choices = space
            .layers
            .iter()
            .map(|l| rng.gen_range(0..l.options.len()) as u16)
            .collect();
        let genome = Genome { choices };
        if space.is_valid(&genome) {
            return Ok(genome);
        }
    }
    Err(SearchError::NoValidGenome(INIT_ATTEMPTS))
}

/// Russian-Roulette pair selection: two distinct indices drawn with
/// probability proportional to fitness over the candidate pool. The unique
/// strictly-lowest-fitness individual is excluded from the pool (ties mean
/// no exclusion); with all-equal fitness the draw is uniform.
pub fn select_pair(
    population_len: usize,
    fitnesses: &[f64],
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    assert!(
        population_len >= 2,
        "selection needs at least two individuals"
    );
    assert_eq!(population_len, fitnesses.len());

    let mut pool: Vec<usize> = (0..population_len).collect();
    if population_len > 2 {
        let min = fitnesses.iter().copied().fold(f64::INFINITY, f64::min);
        let worst: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| fitnesses[i] == min)
            .collect();
        if worst.len() == 1 {
            pool.retain(|&i| i != worst[0]);
        }
    }

    let first = weighted_pick(&pool, fitnesses, rng);
    let rest: Vec<usize> = pool.into_iter().filter(|&i| i != first).collect();
    let second = weighted_pick(&rest, fitnesses, rng);
    (first, second)
}

fn weighted_pick(pool: &[usize], fitnesses: &[f64], rng: &mut ChaCha8Rng) -> usize {
    debug_assert!(!pool.is_empty());
    let total: f64 = pool.iter().map(|&i| fitnesses[i]).sum();
    if total <= 0.0 {
        return pool[rng.gen_range(0..pool.len())];
    }
    let mut target = rng.gen::<f64>() * total;
    for &i in pool {
        target -= fitnesses[i];
        if target <= 0.0 {
            return i;
        }
    }
    *pool.last().expect("non-empty pool")
}

/// Per-layer module swap with probability `p_s`, reverting any layer whose
/// swap violates validity.
pub fn swap_modules(
    space: &SearchSpace,
    a: &Genome,
    b: &Genome,
    p_s: f64,
    rng: &mut ChaCha8Rng,
) -> (Genome, Genome) {
    let mut left = a.clone();
    let mut right = b.clone();
    for layer in 0..space.layers.len() {
        let draw: f64 = rng.gen();
        if draw >= p_s {
            continue;
        }
        std::mem::swap(&mut left.choices[layer], &mut right.choices[layer]);
        if !space.is_valid(&left) || !space.is_valid(&right) {
            std::mem::swap(&mut left.choices[layer], &mut right.choices[layer]);
        }
    }
    (left, right)
}

/// Per-layer module mutation with probability `p_m`: the option resamples
/// uniformly from the layer's other options, reverting on validity
/// violation.
pub fn mutate(space: &SearchSpace, genome: &Genome, p_m: f64, rng: &mut ChaCha8Rng) -> Genome {
    let mut out = genome.clone();
    for (layer_idx, layer) in space.layers.iter().enumerate() {
        let draw: f64 = rng.gen();
        if draw >= p_m || layer.options.len() < 2 {
            continue;
        }
        let current = out.choices[layer_idx] as usize;
        let mut pick = rng.gen_range(0..layer.options.len() - 1);
        if pick >= current {
            pick += 1;
        }
        let previous = out.choices[layer_idx];
        out.choices[layer_idx] = pick as u16;
        if !space.is_valid(&out) {
            out.choices[layer_idx] = previous;
        }
    }
    out
}

/// Every valid genome exactly once, in lexicographic layer-option order.
pub fn enumerate_space(space: &SearchSpace) -> impl Iterator<Item = Genome> + '_ {
    let widths: Vec<usize> = space.layers.iter().map(|l| l.options.len()).collect();
    let total: usize = widths.iter().product();
    (0..total).filter_map(move |mut idx| {
        let mut choices = vec![0u16; widths.len()];
        for (slot, width) in choices.iter_mut().zip(&widths).rev() {
            *slot = (idx % width) as u16;
            idx /= width;
        }
        let genome = Genome { choices };
        space.is_valid(&genome).then_some(genome)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub generation: usize,
    pub population: Vec<String>,
    pub fitnesses: Vec<f64>,
    pub best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_genome: String,
    pub best_fitness: f64,
    /// Snapshot per generation, including the initial population.
    pub trace: Vec<GenerationTrace>,
    /// Distinct genomes evaluated (fitness calls; memoized thereafter).
    pub evaluations: usize,
}

impl SearchResult {
    pub fn best(&self, space: &SearchSpace) -> Option<Genome> {
        Genome::from_key(space, &self.best_genome)
    }
}

/// Run the generational loop: selection, swap, mutation, elitism. Fitness
/// is memoized per distinct genome; the best-fitness trace is
/// non-decreasing whenever `elitism_count >= 1`.
pub fn evolve(
    space: &SearchSpace,
    params: &GaParams,
    fitness: &mut dyn FitnessFn,
) -> Result<SearchResult, SearchError> {
    params.validate()?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(params.rng_seed);
    let mut memo: HashMap<Vec<u16>, f64> = HashMap::new();
    let mut evaluations = 0usize;

    let mut population = init_population(space, params, &mut rng)?;
    let mut scores = eval_all(space, &population, fitness, &mut memo, &mut evaluations)?;

    let mut trace = Vec::with_capacity(params.generations + 1);
    trace.push(snapshot(space, 0, &population, &scores));

    for generation in 1..=params.generations {
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

        let mut next = Vec::with_capacity(params.population_size);
        for &idx in ranked.iter().take(params.elitism_count) {
            next.push(population[idx].clone());
        }
        while next.len() < params.population_size {
            let (i, j) = select_pair(population.len(), &scores, &mut rng);
            let (a, b) = swap_modules(
                space,
                &population[i],
                &population[j],
                params.swap_probability,
                &mut rng,
            );
            let a = mutate(space, &a, params.mutation_probability, &mut rng);
            let b = mutate(space, &b, params.mutation_probability, &mut rng);
            next.push(a);
            if next.len() < params.population_size {
                next.push(b);
            }
        }

        population = next;
        scores = eval_all(space, &population, fitness, &mut memo, &mut evaluations)?;
        trace.push(snapshot(space, generation, &population, &scores));
    }

    let (best_choices, best_fitness) = memo
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(k, v)| (k.clone(), *v))
        .expect("at least one genome evaluated");
    Ok(SearchResult {
        best_genome: Genome {
            choices: best_choices,
        }
        .key(space),
        best_fitness,
        trace,
        evaluations,
    })
}

fn eval_all(
    space: &SearchSpace,
    population: &[Genome],
    fitness: &mut dyn FitnessFn,
    memo: &mut HashMap<Vec<u16>, f64>,
    evaluations: &mut usize,
) -> Result<Vec<f64>, SearchError> {
    let mut scores = Vec::with_capacity(population.len());
    for genome in population {
        if let Some(&score) = memo.get(&genome.choices) {
            scores.push(score);
            continue;
        }
        let score = fitness
            .evaluate(space, genome)
            .map_err(SearchError::Fitness)?;
        memo.insert(genome.choices.clone(), score);
        *evaluations += 1;
        scores.push(score);
    }
    Ok(scores)
}

fn snapshot(
    space: &SearchSpace,
    generation: usize,
    population: &[Genome],
    scores: &[f64],
) -> GenerationTrace {
    GenerationTrace {
        generation,
        population: population.iter().map(|g| g.key(space)).collect(),
        fitnesses: scores.to_vec(),
        best_fitness: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
