//! Random-forest regression surrogate whose leaves carry the axis-aligned
//! box they cover, so that marginals can be integrated exactly.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed::derive_seed;
use crate::space::{ConfigSpace, DimKind};
use crate::stats;

pub const DEFAULT_TREES: usize = 128;
pub const R2_THRESHOLD: f64 = 0.75;
pub const MIN_TREE_ROWS: usize = 10;
pub const MIN_QUALITY_ROWS: usize = 50;
pub const FOREST_FORMAT: &str = "qnn-importance-forest";
pub const FOREST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub bootstrap: bool,
    /// Candidate dimensions tried at each split.
    pub max_features: usize,
    /// Nodes with fewer rows become leaves.
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            bootstrap: true,
            max_features: 7,
            min_samples_split: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            tree: TreeParams::default(),
        }
    }
}

impl ForestParams {
    /// Bootstrap off, every dimension considered at every split.
    pub fn deterministic(n_trees: usize, num_dims: usize) -> Self {
        Self {
            n_trees,
            tree: TreeParams {
                bootstrap: false,
                max_features: num_dims,
                min_samples_split: 2,
            },
        }
    }
}

/// Constraint of a box along one dimension. Numeric intervals are half-open
/// `(lo, hi]`; the root interval starts one unit below the domain's low end
/// so that the low end itself is covered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Interval { lo: f64, hi: f64 },
    Categories { mask: u32 },
}

impl Constraint {
    pub fn root(dim: &DimKind) -> Self {
        match *dim {
            DimKind::Continuous { low, high } => Constraint::Interval { lo: low - 1.0, hi: high },
            DimKind::Integer { low, high } => Constraint::Interval {
                lo: low as f64 - 1.0,
                hi: high as f64,
            },
            DimKind::Categorical { size } => Constraint::Categories {
                mask: full_mask(size),
            },
        }
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Constraint::Interval { lo, hi } => v > lo && v <= hi,
            Constraint::Categories { mask } => v >= 0.0 && mask & (1 << v as u32) != 0,
        }
    }

    /// Fraction of the dimension's uniform measure covered by the constraint.
    pub fn measure(&self, dim: &DimKind) -> f64 {
        match (*self, *dim) {
            (Constraint::Interval { lo, hi }, DimKind::Continuous { low, high }) => {
                ((hi.min(high) - lo.max(low)).max(0.0)) / (high - low)
            }
            (Constraint::Interval { lo, hi }, DimKind::Integer { low, high }) => {
                integer_count(lo, hi, low, high) as f64 / (high - low + 1) as f64
            }
            (Constraint::Categories { mask }, DimKind::Categorical { size }) => {
                (mask & full_mask(size)).count_ones() as f64 / size as f64
            }
            _ => panic!("constraint kind does not match dimension kind"),
        }
    }
}

pub fn full_mask(size: usize) -> u32 {
    if size >= 32 {
        u32::MAX
    } else {
        (1u32 << size) - 1
    }
}

/// Number of integers `k` in `low..=high` with `lo < k <= hi`.
pub fn integer_count(lo: f64, hi: f64, low: i64, high: i64) -> i64 {
    let first = (lo.floor() as i64 + 1).max(low);
    let last = (hi.floor() as i64).min(high);
    (last - first + 1).max(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Left when `x <= threshold`.
    Threshold { threshold: f64 },
    /// Left when the category is in `left_mask`.
    Subset { left_mask: u32 },
}

impl SplitRule {
    #[inline]
    fn goes_left(&self, v: f64) -> bool {
        match *self {
            SplitRule::Threshold { threshold } => v <= threshold,
            SplitRule::Subset { left_mask } => left_mask & (1 << v as u32) != 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        dim: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        n_samples: usize,
        bounds: Vec<Constraint>,
    },
}

/// A leaf seen from the outside: its value and box.
#[derive(Clone, Copy, Debug)]
pub struct Leaf<'a> {
    pub value: f64,
    pub bounds: &'a [Constraint],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    dim,
                    rule,
                    left,
                    right,
                } => i = if rule.goes_left(x[*dim]) { *left } else { *right },
                Node::Leaf { value, .. } => return *value,
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = Leaf<'_>> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, bounds, .. } => Some(Leaf {
                value: *value,
                bounds,
            }),
            Node::Split { .. } => None,
        })
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// Dimensions used by at least one split.
    pub fn split_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { dim, .. } => Some(*dim),
                Node::Leaf { .. } => None,
            })
            .collect();
        dims.sort_unstable();
        dims.dedup();
        dims
    }

    /// A tree with a single leaf covering the whole space.
    pub fn constant(space: &ConfigSpace, value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf {
                value,
                n_samples: 0,
                bounds: space.dims.iter().map(Constraint::root).collect(),
            }],
        }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    space: &'a ConfigSpace,
    params: TreeParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    score: f64,
    dim: usize,
    rule: SplitRule,
}

impl Builder<'_> {
    fn leaf(&mut self, samples: &[usize], bounds: Vec<Constraint>) -> usize {
        let value = samples.iter().map(|&i| self.y[i]).sum::<f64>() / samples.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            n_samples: samples.len(),
            bounds,
        });
        self.nodes.len() - 1
    }

    fn build<R: Rng>(&mut self, samples: Vec<usize>, bounds: Vec<Constraint>, rng: &mut R) -> usize {
        let first = self.y[samples[0]];
        let constant = samples.iter().all(|&i| self.y[i] == first);
        if samples.len() < self.params.min_samples_split || constant {
            return self.leaf(&samples, bounds);
        }

        let mut dims: Vec<usize> = (0..self.space.num_dims()).collect();
        dims.shuffle(rng);
        let k = self.params.max_features.clamp(1, dims.len());
        let mut best = self.best_split(&samples, &bounds, &dims[..k]);
        if best.is_none() {
            best = self.best_split(&samples, &bounds, &dims[k..]);
        }
        let Some(best) = best else {
            return self.leaf(&samples, bounds);
        };

        let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| best.rule.goes_left(self.x[i][best.dim]));
        let mut left_bounds = bounds.clone();
        let mut right_bounds = bounds;
        match (best.rule, &mut left_bounds[best.dim], &mut right_bounds[best.dim]) {
            (
                SplitRule::Threshold { threshold },
                Constraint::Interval { hi, .. },
                Constraint::Interval { lo, .. },
            ) => {
                *hi = threshold;
                *lo = threshold;
            }
            (
                SplitRule::Subset { left_mask },
                Constraint::Categories { mask: lm },
                Constraint::Categories { mask: rm },
            ) => {
                *lm &= left_mask;
                *rm &= !left_mask;
            }
            _ => unreachable!("split rule does not match constraint kind"),
        }

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            n_samples: 0,
            bounds: Vec::new(),
        });
        let left = self.build(left_samples, left_bounds, rng);
        let right = self.build(right_samples, right_bounds, rng);
        self.nodes[id] = Node::Split {
            dim: best.dim,
            rule: best.rule,
            left,
            right,
        };
        id
    }

    /// Maximizes `S_L^2/n_L + S_R^2/n_R`, which minimizes the children's SSE.
    fn best_split(&self, samples: &[usize], bounds: &[Constraint], dims: &[usize]) -> Option<BestSplit> {
        let mut best: Option<BestSplit> = None;
        let mut consider = |score: f64, dim: usize, rule: SplitRule| {
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(BestSplit { score, dim, rule });
            }
        };
        let total: f64 = samples.iter().map(|&i| self.y[i]).sum();
        let n = samples.len() as f64;

        for &d in dims {
            match self.space.dims[d] {
                DimKind::Continuous { .. } | DimKind::Integer { .. } => {
                    let mut order: Vec<(f64, f64)> =
                        samples.iter().map(|&i| (self.x[i][d], self.y[i])).collect();
                    order.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let mut sum_left = 0.0;
                    for j in 0..order.len() - 1 {
                        sum_left += order[j].1;
                        if order[j].0 == order[j + 1].0 {
                            continue;
                        }
                        let nl = (j + 1) as f64;
                        let sum_right = total - sum_left;
                        let score = sum_left * sum_left / nl + sum_right * sum_right / (n - nl);
                        let threshold = 0.5 * (order[j].0 + order[j + 1].0);
                        consider(score, d, SplitRule::Threshold { threshold });
                    }
                }
                DimKind::Categorical { size } => {
                    let Constraint::Categories { mask: allowed } = bounds[d] else {
                        unreachable!()
                    };
                    let mut sums = vec![0.0; size];
                    let mut counts = vec![0usize; size];
                    for &i in samples {
                        let c = self.x[i][d] as usize;
                        sums[c] += self.y[i];
                        counts[c] += 1;
                    }
                    if counts.iter().filter(|&&c| c > 0).count() < 2 {
                        continue;
                    }
                    let lowest = allowed & allowed.wrapping_neg();
                    // Subsets of `allowed` holding its lowest category, excluding `allowed` itself.
                    let mut sub = allowed;
                    loop {
                        sub = (sub - 1) & allowed;
                        if sub == 0 {
                            break;
                        }
                        if sub & lowest == 0 {
                            continue;
                        }
                        let (mut sl, mut nl) = (0.0, 0usize);
                        for c in 0..size {
                            if sub & (1 << c) != 0 {
                                sl += sums[c];
                                nl += counts[c];
                            }
                        }
                        if nl == 0 || nl == samples.len() {
                            continue;
                        }
                        let sr = total - sl;
                        let nl = nl as f64;
                        let score = sl * sl / nl + sr * sr / (n - nl);
                        consider(score, d, SplitRule::Subset { left_mask: sub });
                    }
                }
            }
        }
        best
    }
}

fn check_rows(x: &[Vec<f64>], y: &[f64], space: &ConfigSpace) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::validation("row and target counts differ"));
    }
    if let Some(row) = x.iter().find(|r| !space.contains(r)) {
        return Err(Error::validation(format!("row {row:?} lies outside the space")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite target"));
    }
    Ok(())
}

/// Fits one tree, optionally on a bootstrap resample of the rows.
pub fn fit_tree<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    space: &ConfigSpace,
    params: TreeParams,
    rng: &mut R,
) -> Result<RegressionTree> {
    if x.len() < MIN_TREE_ROWS {
        return Err(Error::validation(format!(
            "{} rows; a tree needs at least {MIN_TREE_ROWS}",
            x.len()
        )));
    }
    check_rows(x, y, space)?;
    Ok(fit_tree_unchecked(x, y, space, params, rng))
}

fn fit_tree_unchecked<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    space: &ConfigSpace,
    params: TreeParams,
    rng: &mut R,
) -> RegressionTree {
    let samples: Vec<usize> = if params.bootstrap {
        (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
    } else {
        (0..x.len()).collect()
    };
    let mut builder = Builder {
        x,
        y,
        space,
        params,
        nodes: Vec::new(),
    };
    let bounds = space.dims.iter().map(Constraint::root).collect();
    builder.build(samples, bounds, rng);
    RegressionTree {
        nodes: builder.nodes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format: String,
    pub version: u32,
    pub space: ConfigSpace,
    pub trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn from_trees(space: ConfigSpace, trees: Vec<RegressionTree>) -> Self {
        Self {
            format: FOREST_FORMAT.to_string(),
            version: FOREST_VERSION,
            space,
            trees,
        }
    }

    /// Fits `params.n_trees` trees, each from its own seed stream.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        space: &ConfigSpace,
        params: ForestParams,
        seed: u64,
    ) -> Result<Self> {
        if x.len() < MIN_TREE_ROWS {
            return Err(Error::validation(format!(
                "{} rows; a forest needs at least {MIN_TREE_ROWS}",
                x.len()
            )));
        }
        check_rows(x, y, space)?;
        let trees = par::map_range(params.n_trees, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
            fit_tree_unchecked(x, y, space, params.tree, &mut rng)
        });
        Ok(Self::from_trees(space.clone(), trees))
    }

    /// Same as [`Forest::fit`] but always sequential; used as a bench baseline.
    pub fn fit_sequential(
        x: &[Vec<f64>],
        y: &[f64],
        space: &ConfigSpace,
        params: ForestParams,
        seed: u64,
    ) -> Result<Self> {
        check_rows(x, y, space)?;
        let trees = par::map_range_seq(params.n_trees, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
            fit_tree_unchecked(x, y, space, params.tree, &mut rng)
        });
        Ok(Self::from_trees(space.clone(), trees))
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let forest: Forest = serde_json::from_str(s)?;
        if forest.format != FOREST_FORMAT || forest.version != FOREST_VERSION {
            return Err(Error::validation(format!(
                "unsupported forest format {} v{}",
                forest.format, forest.version
            )));
        }
        Ok(forest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateQuality {
    pub r2: f64,
    pub rmse: f64,
    pub spearman_cc: f64,
    pub passed: bool,
    /// Targets had zero variance; `r2` is reported as 0.
    pub zero_variance: bool,
    pub n_rows: usize,
}

/// R2, RMSE and Spearman CC of pooled predictions. `passed` iff R2 >= 0.75.
pub fn regression_quality(targets: &[f64], predictions: &[f64]) -> SurrogateQuality {
    let m = stats::mean(targets);
    let sse: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(t, p)| (t - p).powi(2))
        .sum();
    let sst: f64 = targets.iter().map(|t| (t - m).powi(2)).sum();
    let n = targets.len() as f64;
    let zero_variance = sst == 0.0;
    let r2 = if zero_variance { 0.0 } else { 1.0 - sse / sst };
    SurrogateQuality {
        r2,
        rmse: (sse / n).sqrt(),
        spearman_cc: stats::spearman(targets, predictions).unwrap_or(0.0),
        passed: !zero_variance && r2 >= R2_THRESHOLD,
        zero_variance,
        n_rows: targets.len(),
    }
}

/// k-fold cross-validated quality of a freshly fitted forest per fold.
pub fn assess_quality(
    x: &[Vec<f64>],
    y: &[f64],
    space: &ConfigSpace,
    params: ForestParams,
    k: usize,
    seed: u64,
) -> Result<SurrogateQuality> {
    if x.len() < MIN_QUALITY_ROWS {
        return Err(Error::validation(format!(
            "{} successful rows; quality assessment needs at least {MIN_QUALITY_ROWS}",
            x.len()
        )));
    }
    if k < 2 || k > x.len() {
        return Err(Error::validation(format!("invalid fold count {k}")));
    }
    check_rows(x, y, space)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut predictions = vec![0.0; x.len()];
    for fold in 0..k {
        let test: Vec<usize> = order.iter().skip(fold).step_by(k).copied().collect();
        let mut is_test = vec![false; x.len()];
        test.iter().for_each(|&i| is_test[i] = true);
        let train: Vec<usize> = (0..x.len()).filter(|&i| !is_test[i]).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let forest = Forest::fit(&tx, &ty, space, params, derive_seed(seed, &[fold as u64 + 1]))?;
        for &i in &test {
            predictions[i] = forest.predict(&x[i]);
        }
    }
    Ok(regression_quality(y, &predictions))
}
