//! Functional ANOVA over a fitted forest: exact marginals from leaf boxes,
//! variance fractions for singletons and pairs, and marginal ranges.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Constraint, Forest, Node, RegressionTree};
use crate::par;
use crate::space::{ConfigSpace, DimKind, Hyperparameter, NUMERIC_GRID_POINTS};
use crate::stats;

/// All index pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn index_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

/// Display names of the dimensions: hyperparameter names for the QNN space,
/// `x0, x1, ...` otherwise.
pub fn dim_names(space: &ConfigSpace) -> Vec<String> {
    if *space == ConfigSpace::qnn() {
        Hyperparameter::ALL.iter().map(|h| h.name().to_string()).collect()
    } else {
        (0..space.num_dims()).map(|i| format!("x{i}")).collect()
    }
}

/// Grid on which marginals are tabulated: every category or integer, or
/// ten evenly spaced points (endpoints included) on a continuous range.
pub fn grid_points(dim: &DimKind) -> Vec<f64> {
    match *dim {
        DimKind::Continuous { low, high } => {
            let steps = (NUMERIC_GRID_POINTS - 1) as f64;
            (0..NUMERIC_GRID_POINTS)
                .map(|i| match i {
                    0 => low,
                    i if i == NUMERIC_GRID_POINTS - 1 => high,
                    i => low + (high - low) * i as f64 / steps,
                })
                .collect()
        }
        DimKind::Integer { low, high } => (low..=high).map(|v| v as f64).collect(),
        DimKind::Categorical { size } => (0..size).map(|v| v as f64).collect(),
    }
}

fn in_domain(dim: &DimKind, v: f64) -> bool {
    match *dim {
        DimKind::Continuous { low, high } => v >= low && v <= high,
        DimKind::Integer { low, high } => v.fract() == 0.0 && v >= low as f64 && v <= high as f64,
        DimKind::Categorical { size } => v.fract() == 0.0 && v >= 0.0 && v < size as f64,
    }
}

struct LeafMass<'a> {
    value: f64,
    bounds: &'a [Constraint],
    /// Per-dimension measure of the leaf box.
    measures: Vec<f64>,
}

fn leaf_masses<'a>(tree: &'a RegressionTree, space: &ConfigSpace) -> Vec<LeafMass<'a>> {
    tree.leaves()
        .map(|leaf| LeafMass {
            value: leaf.value,
            bounds: leaf.bounds,
            measures: leaf
                .bounds
                .iter()
                .zip(&space.dims)
                .map(|(c, d)| c.measure(d))
                .collect(),
        })
        .collect()
}

fn mass_outside(leaf: &LeafMass, subset: &[usize]) -> f64 {
    leaf.measures
        .iter()
        .enumerate()
        .filter(|(k, _)| !subset.contains(k))
        .map(|(_, m)| m)
        .product()
}

/// Average of the tree's prediction over all dimensions outside `subset`
/// with the dimensions in `subset` held at `values`.
pub fn tree_marginal(
    tree: &RegressionTree,
    space: &ConfigSpace,
    subset: &[usize],
    values: &[f64],
) -> Result<f64> {
    if subset.len() != values.len() {
        return Err(Error::validation("subset and value counts differ"));
    }
    for (&d, &v) in subset.iter().zip(values) {
        let dim = space
            .dims
            .get(d)
            .ok_or_else(|| Error::validation(format!("dimension {d} outside the space")))?;
        if !in_domain(dim, v) {
            return Err(Error::validation(format!("value {v} outside dimension {d}")));
        }
    }
    Ok(leaf_masses(tree, space)
        .iter()
        .filter(|l| subset.iter().zip(values).all(|(&d, &v)| l.bounds[d].contains(v)))
        .map(|l| l.value * mass_outside(l, subset))
        .sum())
}

/// Cells of one dimension that no leaf boundary cuts: `(representative, weight)`.
fn cells(tree: &RegressionTree, dim: &DimKind, d: usize) -> Vec<(f64, f64)> {
    match *dim {
        DimKind::Continuous { low, high } => {
            let mut cuts: Vec<f64> = tree
                .nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Split {
                        dim,
                        rule: crate::forest::SplitRule::Threshold { threshold },
                        ..
                    } if *dim == d && *threshold > low && *threshold < high => Some(*threshold),
                    _ => None,
                })
                .collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut edges = vec![low];
            edges.extend(cuts);
            edges.push(high);
            edges
                .windows(2)
                .map(|w| (0.5 * (w[0] + w[1]), (w[1] - w[0]) / (high - low)))
                .collect()
        }
        DimKind::Integer { low, high } => {
            let w = 1.0 / (high - low + 1) as f64;
            (low..=high).map(|v| (v as f64, w)).collect()
        }
        DimKind::Categorical { size } => (0..size).map(|v| (v as f64, 1.0 / size as f64)).collect(),
    }
}

/// Exact order-1 and order-2 variance components of one tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDecomposition {
    /// Global mean of the tree.
    pub mean: f64,
    /// Variance of the full predictor under the uniform measure.
    pub total: f64,
    /// `V_i` per dimension.
    pub singles: Vec<f64>,
    /// `V_ij` in [`index_pairs`] order.
    pub pairs: Vec<f64>,
}

impl TreeDecomposition {
    pub fn is_defined(&self) -> bool {
        self.total > 0.0
    }

    /// Fractions `V_U / V`, singles then pairs; `None` when `V = 0`.
    pub fn fractions(&self) -> Option<Vec<f64>> {
        self.is_defined().then(|| {
            self.singles
                .iter()
                .chain(&self.pairs)
                .map(|v| v / self.total)
                .collect()
        })
    }
}

pub fn variance_decomposition(tree: &RegressionTree, space: &ConfigSpace) -> TreeDecomposition {
    let n = space.num_dims();
    let leaves = leaf_masses(tree, space);
    let mass: Vec<f64> = leaves.iter().map(|l| l.measures.iter().product()).collect();
    let mean: f64 = leaves.iter().zip(&mass).map(|(l, m)| l.value * m).sum();
    let total: f64 = leaves
        .iter()
        .zip(&mass)
        .map(|(l, m)| m * (l.value - mean).powi(2))
        .sum::<f64>()
        .max(0.0);

    let split_dims = tree.split_dims();
    let dim_cells: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|d| {
            if split_dims.contains(&d) {
                cells(tree, &space.dims[d], d)
            } else {
                Vec::new()
            }
        })
        .collect();

    // a_i evaluated on the cells of dim i
    let single_marginals: Vec<Vec<f64>> = (0..n)
        .map(|d| {
            dim_cells[d]
                .iter()
                .map(|&(rep, _)| {
                    leaves
                        .iter()
                        .filter(|l| l.bounds[d].contains(rep))
                        .map(|l| l.value * mass_outside(l, &[d]))
                        .sum()
                })
                .collect()
        })
        .collect();

    // rounding can push an exact zero slightly negative
    let clamp = |v: f64| v.max(0.0);
    let singles: Vec<f64> = (0..n)
        .map(|d| {
            clamp(
                dim_cells[d]
                    .iter()
                    .zip(&single_marginals[d])
                    .map(|(&(_, w), a)| w * (a - mean).powi(2))
                    .sum(),
            )
        })
        .collect();

    let pairs = index_pairs(n)
        .into_iter()
        .map(|(i, j)| {
            if dim_cells[i].is_empty() || dim_cells[j].is_empty() {
                return 0.0;
            }
            let mut v = 0.0;
            for (ci, &(ri, wi)) in dim_cells[i].iter().enumerate() {
                let inside: Vec<&LeafMass> =
                    leaves.iter().filter(|l| l.bounds[i].contains(ri)).collect();
                for (cj, &(rj, wj)) in dim_cells[j].iter().enumerate() {
                    let a_ij: f64 = inside
                        .iter()
                        .filter(|l| l.bounds[j].contains(rj))
                        .map(|l| l.value * mass_outside(l, &[i, j]))
                        .sum();
                    let f = a_ij - single_marginals[i][ci] - single_marginals[j][cj] + mean;
                    v += wi * wj * f * f;
                }
            }
            clamp(v)
        })
        .collect();

    TreeDecomposition {
        mean,
        total,
        singles,
        pairs,
    }
}

/// Marginal values of one subset on its grid, per tree and tree-averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalTable {
    pub subset: Vec<usize>,
    pub names: Vec<String>,
    /// Grid points, each holding one encoded value per subset dimension.
    pub grid: Vec<Vec<f64>>,
    /// `per_tree[t][g]`.
    pub per_tree: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl MarginalTable {
    pub fn range(&self) -> f64 {
        let max = self.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.mean.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

pub fn marginal_table(forest: &Forest, subset: &[usize]) -> Result<MarginalTable> {
    let space = &forest.space;
    if subset.iter().any(|&d| d >= space.num_dims()) || subset.is_empty() || subset.len() > 2 {
        return Err(Error::validation(format!("invalid subset {subset:?}")));
    }
    let mut grid: Vec<Vec<f64>> = vec![vec![]];
    for &d in subset {
        grid = grid
            .into_iter()
            .flat_map(|g| {
                grid_points(&space.dims[d]).into_iter().map(move |v| {
                    let mut g = g.clone();
                    g.push(v);
                    g
                })
            })
            .collect();
    }
    let per_tree: Vec<Vec<f64>> = par::map(&forest.trees, |tree| {
        grid.iter()
            .map(|g| tree_marginal(tree, space, subset, g))
            .collect::<Result<Vec<f64>>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mean = (0..grid.len())
        .map(|g| per_tree.iter().map(|t| t[g]).sum::<f64>() / per_tree.len() as f64)
        .collect();
    let names = dim_names(space);
    Ok(MarginalTable {
        subset: subset.to_vec(),
        names: subset.iter().map(|&d| names[d].clone()).collect(),
        grid,
        per_tree,
        mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetImportance {
    pub subset: Vec<usize>,
    pub name: String,
    /// Mean of `V_U / V` over trees with `V > 0`.
    pub fraction: Option<f64>,
    /// Spread of the per-tree fractions (population sd).
    pub fraction_std: Option<f64>,
    /// Max minus min of the tree-averaged marginal; singletons only.
    pub marginal_range: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub names: Vec<String>,
    /// `V` per tree.
    pub total_variance: Vec<f64>,
    pub defined_trees: usize,
    /// Every tree had zero variance; all fractions are `None`.
    pub undefined: bool,
    /// Singletons in dimension order, then pairs in [`index_pairs`] order.
    pub subsets: Vec<SubsetImportance>,
    /// Singleton marginal tables.
    pub marginals: Vec<MarginalTable>,
}

impl ImportanceReport {
    pub fn singles(&self) -> &[SubsetImportance] {
        &self.subsets[..self.names.len()]
    }

    pub fn pairs(&self) -> &[SubsetImportance] {
        &self.subsets[self.names.len()..]
    }

    pub fn single_fractions(&self) -> Vec<Option<f64>> {
        self.singles().iter().map(|s| s.fraction).collect()
    }
}

pub fn aggregate_importance(forest: &Forest) -> Result<ImportanceReport> {
    let space = &forest.space;
    let n = space.num_dims();
    let decomps = par::map(&forest.trees, |t| variance_decomposition(t, space));
    let per_tree: Vec<Vec<f64>> = decomps.iter().filter_map(|d| d.fractions()).collect();
    let names = dim_names(space);
    let pairs = index_pairs(n);
    let marginals = (0..n)
        .map(|d| marginal_table(forest, &[d]))
        .collect::<Result<Vec<_>>>()?;

    let subsets = (0..n + pairs.len())
        .map(|u| {
            let (subset, name) = if u < n {
                (vec![u], names[u].clone())
            } else {
                let (i, j) = pairs[u - n];
                (vec![i, j], format!("{}:{}", names[i], names[j]))
            };
            let values: Vec<f64> = per_tree.iter().map(|f| f[u]).collect();
            let (fraction, fraction_std) = if values.is_empty() {
                (None, None)
            } else {
                (Some(stats::mean(&values)), Some(stats::variance(&values).sqrt()))
            };
            SubsetImportance {
                subset,
                name,
                fraction,
                fraction_std,
                marginal_range: (u < n).then(|| marginals[u].range()),
            }
        })
        .collect();

    Ok(ImportanceReport {
        names,
        total_variance: decomps.iter().map(|d| d.total).collect(),
        defined_trees: per_tree.len(),
        undefined: per_tree.is_empty(),
        subsets,
        marginals,
    })
}

/// Cross-dataset ranking of one hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedHyperparameter {
    pub name: String,
    pub median_fraction: f64,
    /// 1 = most important.
    pub rank: usize,
    /// 1 = most important group of three.
    pub level: usize,
}

/// Median singleton fraction across datasets, ranked, and cut into three
/// levels at the two largest gaps of the sorted medians.
pub fn median_ranking(reports: &[&ImportanceReport]) -> Result<Vec<RankedHyperparameter>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::validation("no importance reports to rank"))?;
    let names = &first.names;
    let medians: Vec<f64> = (0..names.len())
        .map(|d| {
            let vals: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.subsets.get(d).and_then(|s| s.fraction))
                .collect();
            if vals.is_empty() {
                0.0
            } else {
                stats::median(&vals)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| medians[b].total_cmp(&medians[a]).then(a.cmp(&b)));

    let mut gaps: Vec<(f64, usize)> = order
        .windows(2)
        .enumerate()
        .map(|(pos, w)| (medians[w[0]] - medians[w[1]], pos))
        .collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cuts: Vec<usize> = gaps.iter().take(2).map(|g| g.1).collect();
    cuts.sort_unstable();

    Ok(order
        .iter()
        .enumerate()
        .map(|(pos, &d)| RankedHyperparameter {
            name: names[d].clone(),
            median_fraction: medians[d],
            rank: pos + 1,
            level: 1 + cuts.iter().filter(|&&c| pos > c).count(),
        })
        .collect())
}

fn opt17(v: Option<f64>) -> String {
    v.map(stats::fmt17).unwrap_or_default()
}

/// One row per (dataset, subset): fraction, its per-tree sd, marginal range.
pub fn write_importance_csv<W: Write>(out: W, reports: &[(String, ImportanceReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "subset", "fraction", "fraction_std", "marginal_range"])?;
    for (dataset, report) in reports {
        for s in &report.subsets {
            w.write_record([
                dataset.as_str(),
                s.name.as_str(),
                &opt17(s.fraction),
                &opt17(s.fraction_std),
                &opt17(s.marginal_range),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::SplitRule;

    fn cat_space(sizes: &[usize]) -> ConfigSpace {
        ConfigSpace {
            dims: sizes.iter().map(|&size| DimKind::Categorical { size }).collect(),
        }
    }

    /// One split on categorical dim 0 of a binary-domain space.
    fn stump(space: &ConfigSpace, left: f64, right: f64) -> RegressionTree {
        let root: Vec<Constraint> = space.dims.iter().map(Constraint::root).collect();
        let mut l = root.clone();
        l[0] = Constraint::Categories { mask: 1 };
        let mut r = root;
        r[0] = Constraint::Categories { mask: 2 };
        RegressionTree {
            nodes: vec![
                Node::Split {
                    dim: 0,
                    rule: SplitRule::Subset { left_mask: 1 },
                    left: 1,
                    right: 2,
                },
                Node::Leaf {
                    value: left,
                    n_samples: 1,
                    bounds: l,
                },
                Node::Leaf {
                    value: right,
                    n_samples: 1,
                    bounds: r,
                },
            ],
        }
    }

    #[test]
    fn constant_tree() {
        let space = ConfigSpace::qnn();
        let tree = RegressionTree::constant(&space, 0.3);
        assert_eq!(tree_marginal(&tree, &space, &[2, 4], &[9.0, 1.0]).unwrap(), 0.3);
        let d = variance_decomposition(&tree, &space);
        assert_eq!(d.total, 0.0);
        assert!(d.fractions().is_none());
        let forest = Forest::from_trees(space, vec![tree]);
        let report = aggregate_importance(&forest).unwrap();
        assert!(report.undefined);
        assert!(report.subsets.iter().all(|s| s.fraction.is_none()));
    }

    #[test]
    fn stump_marginals_and_fraction() {
        let space = cat_space(&[2, 3, 2]);
        let tree = stump(&space, 0.2, 0.8);
        assert!((tree_marginal(&tree, &space, &[0], &[0.0]).unwrap() - 0.2).abs() < 1e-15);
        assert!((tree_marginal(&tree, &space, &[0], &[1.0]).unwrap() - 0.8).abs() < 1e-15);
        for v in 0..3 {
            let m = tree_marginal(&tree, &space, &[1], &[v as f64]).unwrap();
            assert!((m - 0.5).abs() < 1e-15);
        }
        let stump01 = stump(&space, 0.0, 1.0);
        let d = variance_decomposition(&stump01, &space);
        assert!((d.total - 0.25).abs() < 1e-15);
        let f = d.fractions().unwrap();
        assert!((f[0] - 1.0).abs() < 1e-15);
        assert!(f[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_domain_value() {
        let space = cat_space(&[2, 3]);
        let tree = stump(&space, 0.0, 1.0);
        assert!(tree_marginal(&tree, &space, &[1], &[3.0]).is_err());
        assert!(tree_marginal(&tree, &space, &[5], &[0.0]).is_err());
    }

    #[test]
    fn identical_trees_average_to_single_tree() {
        let space = cat_space(&[2, 2]);
        let tree = stump(&space, 0.1, 0.7);
        let single = variance_decomposition(&tree, &space).fractions().unwrap();
        let forest = Forest::from_trees(space, vec![tree; 5]);
        let report = aggregate_importance(&forest).unwrap();
        for (s, f) in report.subsets.iter().zip(&single) {
            assert!((s.fraction.unwrap() - f).abs() < 1e-15);
        }
        assert_eq!(report.subsets[1].marginal_range, Some(0.0));
        assert!((report.subsets[0].marginal_range.unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn levels_cut_at_largest_gaps() {
        let mk = |fracs: &[f64]| ImportanceReport {
            names: (0..fracs.len()).map(|i| format!("x{i}")).collect(),
            total_variance: vec![1.0],
            defined_trees: 1,
            undefined: false,
            subsets: fracs
                .iter()
                .enumerate()
                .map(|(i, &f)| SubsetImportance {
                    subset: vec![i],
                    name: format!("x{i}"),
                    fraction: Some(f),
                    fraction_std: Some(0.0),
                    marginal_range: Some(0.0),
                })
                .collect(),
            marginals: vec![],
        };
        let r = mk(&[0.5, 0.01, 0.2, 0.19, 0.02]);
        let ranked = median_ranking(&[&r]).unwrap();
        let names: Vec<&str> = ranked.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["x0", "x2", "x3", "x4", "x1"]);
        let levels: Vec<usize> = ranked.iter().map(|r| r.level).collect();
        assert_eq!(levels, [1, 2, 2, 3, 3]);
    }

    #[test]
    fn pair_order() {
        assert_eq!(index_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(index_pairs(10).len(), 45);
    }
}
