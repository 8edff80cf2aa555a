//! Surrogate-driven random search with one hyperparameter held fixed, and
//! the per-iteration rank curves derived from it.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fanova::{dim_names, grid_points};
use crate::forest::Forest;
use crate::par;
use crate::seed::derive_seed;
use crate::space::{ConfigSpace, DimKind};
use crate::stats;

/// Anything the searches can score: a space to sample from and a prediction.
pub trait Surrogate: Sync {
    fn space(&self) -> &ConfigSpace;
    fn predict(&self, x: &[f64]) -> f64;
}

impl Surrogate for Forest {
    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn predict(&self, x: &[f64]) -> f64 {
        Forest::predict(self, x)
    }
}

/// A closure over the encoded point, for constructed test surfaces.
pub struct FnSurrogate<F> {
    pub space: ConfigSpace,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Surrogate for FnSurrogate<F> {
    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn predict(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

pub const SEARCH_ITERATIONS: usize = 500;
pub const REPEATS: usize = 10;

/// Draws an encoded point uniformly from the space, one dimension at a time
/// in a fixed order.
pub fn sample_point<R: Rng + ?Sized>(space: &ConfigSpace, rng: &mut R) -> Vec<f64> {
    space
        .dims
        .iter()
        .map(|d| match *d {
            DimKind::Continuous { low, high } => rng.random_range(low..high),
            DimKind::Integer { low, high } => rng.random_range(low..=high) as f64,
            DimKind::Categorical { size } => rng.random_range(0..size) as f64,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestSoFarCurve {
    /// Fixed dimension and its encoded value; `None` for an unconstrained search.
    pub fixed: Option<(usize, f64)>,
    pub seed: u64,
    /// Best surrogate prediction after each iteration.
    pub values: Vec<f64>,
}

impl BestSoFarCurve {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("empty curve")
    }
}

fn check_fixed(space: &ConfigSpace, dim: usize, value: f64) -> Result<()> {
    let ok = match space.dims.get(dim) {
        Some(DimKind::Continuous { low, high }) => value >= *low && value <= *high,
        Some(DimKind::Integer { low, high }) => {
            value.fract() == 0.0 && value >= *low as f64 && value <= *high as f64
        }
        Some(DimKind::Categorical { size }) => {
            value.fract() == 0.0 && value >= 0.0 && value < *size as f64
        }
        None => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "fixed value {value} outside dimension {dim}"
        )))
    }
}

/// Random search scored by the surrogate. Every field is drawn from the
/// seeded stream before the fixed one is overridden, so searches sharing a
/// seed see the same values everywhere else.
pub fn random_search<S: Surrogate + ?Sized>(
    surrogate: &S,
    fixed: Option<(usize, f64)>,
    iterations: usize,
    seed: u64,
) -> Result<BestSoFarCurve> {
    if let Some((dim, value)) = fixed {
        check_fixed(surrogate.space(), dim, value)?;
    }
    if iterations == 0 {
        return Err(Error::validation("a search needs at least one iteration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    let values = (0..iterations)
        .map(|_| {
            let mut x = sample_point(surrogate.space(), &mut rng);
            if let Some((dim, value)) = fixed {
                x[dim] = value;
            }
            best = best.max(surrogate.predict(&x));
            best
        })
        .collect();
    Ok(BestSoFarCurve {
        fixed,
        seed,
        values,
    })
}

pub fn fixed_search<S: Surrogate + ?Sized>(
    surrogate: &S,
    dim: usize,
    value: f64,
    iterations: usize,
    seed: u64,
) -> Result<BestSoFarCurve> {
    random_search(surrogate, Some((dim, value)), iterations, seed)
}

/// Mean of the per-value finals (each already averaged over repeats).
pub fn aggregate_y_star(finals: &[f64]) -> f64 {
    stats::mean(finals)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub iterations: usize,
    pub repeats: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            iterations: SEARCH_ITERATIONS,
            repeats: REPEATS,
        }
    }
}

/// Verification outcome for one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetVerification {
    pub dataset: String,
    pub names: Vec<String>,
    pub settings: SearchSettings,
    /// Score when not optimizing each hyperparameter.
    pub y_star: Vec<f64>,
    /// `value[j][t]`: best-so-far averaged over repeats and fixed values.
    pub value: Vec<Vec<f64>>,
    /// `rank[t][j]`: rank among hyperparameters, averaged over repeats.
    pub rank: Vec<Vec<f64>>,
}

/// Runs every (dimension, fixed value, repeat) search on one surrogate.
/// Repeat `r` uses the seed `derive_seed(seed, [r])` for all dimensions and values.
pub fn verify_dataset<S: Surrogate + ?Sized>(
    dataset: &str,
    surrogate: &S,
    settings: SearchSettings,
    seed: u64,
) -> Result<DatasetVerification> {
    let space = surrogate.space();
    let n = space.num_dims();
    if settings.repeats == 0 {
        return Err(Error::validation("at least one repeat is required"));
    }
    let grids: Vec<Vec<f64>> = space.dims.iter().map(grid_points).collect();
    let jobs: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|j| {
            let grids = &grids;
            (0..grids[j].len()).flat_map(move |f| (0..settings.repeats).map(move |r| (j, f, r)))
        })
        .collect();
    let curves = par::map(&jobs, |&(j, f, r)| {
        fixed_search(
            surrogate,
            j,
            grids[j][f],
            settings.iterations,
            derive_seed(seed, &[r as u64]),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    // per_repeat[r][j][t]: mean over fixed values
    let t_len = settings.iterations;
    let mut per_repeat = vec![vec![vec![0.0; t_len]; n]; settings.repeats];
    for (&(j, _, r), curve) in jobs.iter().zip(&curves) {
        let k = grids[j].len() as f64;
        for (acc, v) in per_repeat[r][j].iter_mut().zip(&curve.values) {
            *acc += v / k;
        }
    }

    let value: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..t_len)
                .map(|t| per_repeat.iter().map(|rep| rep[j][t]).sum::<f64>() / settings.repeats as f64)
                .collect()
        })
        .collect();

    let y_star = (0..n)
        .map(|j| {
            let finals: Vec<f64> = (0..grids[j].len())
                .map(|f| {
                    let lasts: Vec<f64> = jobs
                        .iter()
                        .zip(&curves)
                        .filter(|((jj, ff, _), _)| *jj == j && *ff == f)
                        .map(|(_, c)| c.last())
                        .collect();
                    stats::mean(&lasts)
                })
                .collect();
            aggregate_y_star(&finals)
        })
        .collect();

    let rank = (0..t_len)
        .map(|t| {
            let mut acc = vec![0.0; n];
            for rep in &per_repeat {
                // averaging identical curves can differ in the last bit; treat those as ties
                let at_t: Vec<f64> = rep.iter().map(|c| (c[t] * 1e12).round()).collect();
                for (a, r) in acc.iter_mut().zip(stats::average_ranks(&at_t, true)) {
                    *a += r / settings.repeats as f64;
                }
            }
            acc
        })
        .collect();

    Ok(DatasetVerification {
        dataset: dataset.to_string(),
        names: dim_names(space),
        settings,
        y_star,
        value,
        rank,
    })
}

/// Ranks averaged over datasets. Rank 1 is the highest score, that is the
/// hyperparameter least important to tune.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub names: Vec<String>,
    pub datasets: Vec<String>,
    /// `mean_rank[t][j]`.
    pub mean_rank: Vec<Vec<f64>>,
    /// `y_star[d][j]`.
    pub y_star: Vec<Vec<f64>>,
    pub averaging: String,
}

impl RankReport {
    pub fn final_ranks(&self) -> &[f64] {
        self.mean_rank.last().expect("empty rank report")
    }
}

pub fn rank_curves(results: &[DatasetVerification]) -> Result<RankReport> {
    let first = results
        .first()
        .ok_or_else(|| Error::validation("no verification results to rank"))?;
    let n = first.names.len();
    let t_len = first.rank.len();
    for r in results {
        if r.names != first.names || r.rank.iter().any(|row| row.len() != n) || r.y_star.len() != n {
            return Err(Error::validation(format!(
                "dataset {} does not cover every hyperparameter",
                r.dataset
            )));
        }
        if r.rank.len() != t_len {
            return Err(Error::validation("iteration counts differ between datasets"));
        }
    }
    let d = results.len() as f64;
    let mean_rank = (0..t_len)
        .map(|t| {
            (0..n)
                .map(|j| results.iter().map(|r| r.rank[t][j]).sum::<f64>() / d)
                .collect()
        })
        .collect();
    Ok(RankReport {
        names: first.names.clone(),
        datasets: results.iter().map(|r| r.dataset.clone()).collect(),
        mean_rank,
        y_star: results.iter().map(|r| r.y_star.clone()).collect(),
        averaging: "best-so-far averaged over fixed values per repeat; ranked per repeat; \
                    ranks averaged over repeats, then datasets"
            .to_string(),
    })
}

/// Spearman correlation between importance fractions and final average
/// ranks; positive when both orderings agree.
pub fn ranking_agreement(fractions: &[f64], final_ranks: &[f64]) -> Option<f64> {
    stats::spearman(fractions, final_ranks)
}

/// Rows of `dataset, hyperparameter, iteration, best_so_far, rank`; the
/// cross-dataset rows use the dataset name `all` and leave `best_so_far` empty.
pub fn write_verification_csv<W: Write>(
    out: W,
    results: &[DatasetVerification],
    report: &RankReport,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "hyperparameter", "iteration", "best_so_far", "rank"])?;
    for r in results {
        for (j, name) in r.names.iter().enumerate() {
            for t in 0..r.rank.len() {
                w.write_record([
                    r.dataset.as_str(),
                    name,
                    &(t + 1).to_string(),
                    &stats::fmt17(r.value[j][t]),
                    &stats::fmt17(r.rank[t][j]),
                ])?;
            }
        }
    }
    for (j, name) in report.names.iter().enumerate() {
        for (t, row) in report.mean_rank.iter().enumerate() {
            w.write_record(["all", name, &(t + 1).to_string(), "", &stats::fmt17(row[j])])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
