//! Tabular dataset ingestion (CSV and ARFF), preprocessing, and stratified
//! k-fold splitting with train-only standardization.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::LabeledSet;

/// Datasets wider than this after preprocessing are not simulated.
pub const MAX_FEATURES: usize = 20;

/// One dataset entry of a manifest file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub path: PathBuf,
    pub label_column: String,
    pub positive_label: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub openml_task_id: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    List(Vec<DatasetManifest>),
    Wrapped { datasets: Vec<DatasetManifest> },
    Single(DatasetManifest),
}

/// Reads a manifest (a single entry, a list, or `{"datasets": [...]}`).
/// Relative dataset paths are resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<DatasetManifest>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: ManifestFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut entries = match parsed {
        ManifestFile::List(v) | ManifestFile::Wrapped { datasets: v } => v,
        ManifestFile::Single(m) => vec![m],
    };
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(entries)
}

/// Parsed but untyped table. `None` marks a missing value.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    /// Columns declared nominal by the file itself (ARFF).
    pub nominal: Vec<bool>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn missing_marker(v: &str) -> bool {
    matches!(v, "" | "?" | "NA" | "NaN" | "nan")
}

fn cell(v: &str) -> Option<String> {
    let v = v.trim();
    (!missing_marker(v)).then(|| v.to_string())
}

/// Loads a CSV (header row required) or ARFF file and checks it against the
/// manifest entry.
pub fn load_dataset(path: &Path, manifest: &DatasetManifest) -> Result<RawTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(parse_err(path, "file is empty"));
    }
    let is_arff = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("arff"));
    let table = if is_arff {
        parse_arff(path, &text)?
    } else {
        parse_csv(path, &text)?
    };
    check_against_manifest(path, &table, manifest)?;
    Ok(table)
}

fn parse_csv(path: &Path, text: &str) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if columns.is_empty() || columns.iter().all(String::is_empty) {
        return Err(parse_err(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, format!("row {}: {e}", i + 2)))?;
        if record.len() != columns.len() {
            return Err(parse_err(
                path,
                format!("row {} has {} fields, header has {}", i + 2, record.len(), columns.len()),
            ));
        }
        rows.push(record.iter().map(cell).collect());
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    Ok(RawTable {
        nominal: vec![false; columns.len()],
        columns,
        rows,
    })
}

/// Splits on commas outside single or double quotes, stripping the quotes.
fn split_arff_values(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    for ch in line.chars() {
        match (quote, ch) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), c) => cur.push(c),
            (None, '\'' | '"') => quote = Some(ch),
            (None, ',') => out.push(std::mem::take(&mut cur).trim().to_string()),
            (None, c) => cur.push(c),
        }
    }
    out.push(cur.trim().to_string());
    out
}

fn parse_arff_attribute(path: &Path, rest: &str) -> Result<(String, bool)> {
    let rest = rest.trim();
    let (name, ty) = if let Some(q @ ('\'' | '"')) = rest.chars().next() {
        let end = rest[1..]
            .find(q)
            .ok_or_else(|| parse_err(path, format!("unterminated attribute name: {rest}")))?;
        (rest[1..1 + end].to_string(), rest[end + 2..].trim())
    } else {
        let mut it = rest.splitn(2, char::is_whitespace);
        let name = it.next().unwrap_or_default().to_string();
        (name, it.next().unwrap_or_default().trim())
    };
    if name.is_empty() || ty.is_empty() {
        return Err(parse_err(path, format!("malformed @attribute line: {rest}")));
    }
    let lower = ty.to_ascii_lowercase();
    let nominal = if ty.starts_with('{') {
        true
    } else if ["numeric", "real", "integer"].contains(&lower.as_str()) {
        false
    } else {
        return Err(parse_err(path, format!("unsupported attribute type {ty:?} for {name}")));
    };
    Ok((name, nominal))
}

fn parse_arff(path: &Path, text: &str) -> Result<RawTable> {
    let mut columns = Vec::new();
    let mut nominal = Vec::new();
    let mut rows = Vec::new();
    let mut in_data = false;
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            } else if lower.starts_with("@attribute") {
                let (name, is_nominal) = parse_arff_attribute(path, &line["@attribute".len()..])?;
                columns.push(name);
                nominal.push(is_nominal);
            } else if lower.starts_with("@data") {
                in_data = true;
            } else {
                return Err(parse_err(path, format!("line {}: unexpected {line:?}", lineno + 1)));
            }
            continue;
        }
        if line.starts_with('{') {
            return Err(parse_err(path, "sparse ARFF data is not supported"));
        }
        let values = split_arff_values(line);
        if values.len() != columns.len() {
            return Err(parse_err(
                path,
                format!(
                    "line {}: {} values for {} attributes",
                    lineno + 1,
                    values.len(),
                    columns.len()
                ),
            ));
        }
        rows.push(values.iter().map(|v| cell(v)).collect());
    }
    if columns.is_empty() {
        return Err(parse_err(path, "no @attribute declarations"));
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    Ok(RawTable {
        columns,
        nominal,
        rows,
    })
}

fn check_against_manifest(path: &Path, table: &RawTable, manifest: &DatasetManifest) -> Result<()> {
    let label = table.column_index(&manifest.label_column).ok_or_else(|| {
        parse_err(path, format!("label column {:?} not found", manifest.label_column))
    })?;
    for c in &manifest.categorical_columns {
        if table.column_index(c).is_none() {
            return Err(parse_err(path, format!("categorical column {c:?} not found")));
        }
    }
    let classes: BTreeSet<&str> = table
        .rows
        .iter()
        .filter_map(|r| r[label].as_deref())
        .collect();
    if classes.len() > 2 {
        return Err(Error::validation(format!(
            "label column {:?} has {} classes, expected 2",
            manifest.label_column,
            classes.len()
        )));
    }
    if !classes.contains(manifest.positive_label.as_str()) {
        return Err(Error::validation(format!(
            "positive label {:?} never occurs in {:?}",
            manifest.positive_label, manifest.label_column
        )));
    }
    Ok(())
}

/// Drops rows with missing values, maps the label to {0, 1}, one-hot encodes
/// categorical columns (categories in sorted order), and drops constant
/// columns. Scaling happens per fold.
pub fn preprocess(raw: &RawTable, manifest: &DatasetManifest) -> Result<Dataset> {
    let label_idx = raw
        .column_index(&manifest.label_column)
        .ok_or_else(|| Error::validation(format!("label column {:?} missing", manifest.label_column)))?;
    let rows: Vec<&Vec<Option<String>>> = raw
        .rows
        .iter()
        .filter(|r| r.iter().all(Option::is_some))
        .collect();
    if rows.is_empty() {
        return Err(Error::validation("no complete rows after dropping missing values"));
    }

    let labels: Vec<u8> = rows
        .iter()
        .map(|r| u8::from(r[label_idx].as_deref() == Some(manifest.positive_label.as_str())))
        .collect();
    let distinct: BTreeSet<u8> = labels.iter().copied().collect();
    if distinct.len() != 2 {
        return Err(Error::validation(format!(
            "{}: labels must contain both classes after preprocessing",
            manifest.name
        )));
    }

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (c, col_name) in raw.columns.iter().enumerate() {
        if c == label_idx {
            continue;
        }
        let values = rows.iter().map(|r| r[c].as_deref().unwrap_or_default());
        let categorical = raw.nominal[c] || manifest.categorical_columns.contains(col_name);
        if categorical {
            let cats: BTreeSet<&str> = values.clone().collect();
            for cat in cats {
                names.push(format!("{col_name}={cat}"));
                columns.push(values.clone().map(|v| f64::from(u8::from(v == cat))).collect());
            }
        } else {
            let parsed = values
                .enumerate()
                .map(|(i, v)| {
                    v.parse::<f64>().map_err(|_| {
                        Error::validation(format!(
                            "column {col_name:?} row {}: {v:?} is not numeric (declare it categorical?)",
                            i + 1
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            names.push(col_name.clone());
            columns.push(parsed);
        }
    }

    let keep: Vec<usize> = (0..columns.len())
        .filter(|&c| columns[c].iter().any(|&v| v != columns[c][0]))
        .collect();
    if keep.is_empty() {
        return Err(Error::validation(format!(
            "{}: every feature column is constant",
            manifest.name
        )));
    }
    if keep.len() > MAX_FEATURES {
        return Err(Error::validation(format!(
            "{}: {} features after preprocessing exceeds {MAX_FEATURES}",
            manifest.name,
            keep.len()
        )));
    }
    let features = (0..rows.len())
        .map(|r| keep.iter().map(|&c| columns[c][r]).collect())
        .collect();
    Ok(Dataset {
        name: manifest.name.clone(),
        features,
        labels,
        feature_names: keep.iter().map(|&c| names[c].clone()).collect(),
    })
}

/// Loads and preprocesses one manifest entry.
pub fn load_manifest_entry(manifest: &DatasetManifest) -> Result<Dataset> {
    let raw = load_dataset(&manifest.path, manifest)?;
    preprocess(&raw, manifest)
}

/// Per-column mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on the given rows only. Columns constant on those rows keep scale 1.
    pub fn fit(features: &[Vec<f64>], rows: &[usize]) -> Self {
        let d = features.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, v) in mean.iter_mut().zip(&features[r]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((s, v), m) in var.iter_mut().zip(&features[r]).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split: each class is shuffled with `seed` and dealt
/// round-robin into the folds, continuing the deal across classes so fold
/// sizes differ by at most one.
pub fn make_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::validation(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    if let Some((class, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::validation(format!(
            "class {class} has {} instances, fewer than {k} folds",
            members.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_sets = vec![Vec::new(); k];
    let mut dealt = 0usize;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            test_sets[dealt % k].push(i);
            dealt += 1;
        }
    }
    Ok(test_sets
        .into_iter()
        .enumerate()
        .map(|(fold_index, mut test)| {
            test.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            FoldSplit {
                fold_index,
                train,
                test,
            }
        })
        .collect())
}

/// Train and test sets of one fold, standardized with train-fold statistics.
pub fn fold_sets(dataset: &Dataset, split: &FoldSplit) -> (LabeledSet, LabeledSet, Standardizer) {
    let scaler = Standardizer::fit(&dataset.features, &split.train);
    let take = |rows: &[usize]| LabeledSet {
        x: rows.iter().map(|&r| scaler.transform(&dataset.features[r])).collect(),
        y: rows.iter().map(|&r| dataset.labels[r]).collect(),
    };
    let train = take(&split.train);
    let test = take(&split.test);
    (train, test, scaler)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn manifest(path: &Path, label: &str, positive: &str, cats: &[&str]) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            path: path.to_path_buf(),
            label_column: label.into(),
            positive_label: positive.into(),
            categorical_columns: cats.iter().map(|s| s.to_string()).collect(),
            openml_task_id: None,
        }
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn empty_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "");
        let m = manifest(&p, "y", "1", &[]);
        assert!(matches!(load_dataset(&p, &m), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_with_categoricals_and_constants() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.csv",
            "a,c,k,y\n1,a,5,pos\n2,b,5,neg\n3,a,5,pos\n?,b,5,neg\n",
        );
        let m = manifest(&p, "y", "pos", &["c"]);
        let raw = load_dataset(&p, &m).unwrap();
        let ds = preprocess(&raw, &m).unwrap();
        // missing row dropped, k constant, c one-hot
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_names, vec!["a", "c=a", "c=b"]);
        assert_eq!(ds.features[1], vec![2.0, 0.0, 1.0]);
        assert_eq!(ds.labels, vec![1, 0, 1]);
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,y\n1,x\n2,y\n3,z\n");
        assert!(load_dataset(&p, &manifest(&p, "nope", "x", &[])).is_err());
        assert!(load_dataset(&p, &manifest(&p, "y", "x", &["zz"])).is_err());
        assert!(matches!(
            load_dataset(&p, &manifest(&p, "y", "x", &[])),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn all_constant_features_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,b,y\n1,2,1\n1,2,0\n");
        let m = manifest(&p, "y", "1", &[]);
        let raw = load_dataset(&p, &m).unwrap();
        assert!(matches!(preprocess(&raw, &m), Err(Error::Validation(_))));
    }

    #[test]
    fn arff_nominals() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.arff",
            "% comment\n@relation test\n@attribute 'x 1' numeric\n@attribute col {red,blue}\n\
             @attribute class {'1','2'}\n@data\n0.5,red,'1'\n1.5,blue,'2'\n?,red,'2'\n2.5,red,2\n",
        );
        let m = manifest(&p, "class", "2", &[]);
        let raw = load_dataset(&p, &m).unwrap();
        assert_eq!(raw.columns, vec!["x 1", "col", "class"]);
        assert_eq!(raw.nominal, vec![false, true, true]);
        let ds = preprocess(&raw, &m).unwrap();
        assert_eq!(ds.feature_names, vec!["x 1", "col=blue", "col=red"]);
        assert_eq!(ds.labels, vec![0, 1, 1]);
    }

    #[test]
    fn standardization_of_one_two_three() {
        let features = vec![vec![1.0], vec![2.0], vec![3.0]];
        let s = Standardizer::fit(&features, &[0, 1, 2]);
        let z: Vec<f64> = features.iter().map(|r| s.transform(r)[0]).collect();
        let e = 1.5f64.sqrt();
        assert!((z[0] + e).abs() < 1e-12 && z[1].abs() < 1e-12 && (z[2] - e).abs() < 1e-12);
        assert!((z[0] + 1.2247).abs() < 1e-4);
    }

    #[test]
    fn folds_even_split() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let folds = make_folds(&labels, 10, 3).unwrap();
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.test.len(), 10);
            let pos = f.test.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(pos, 5);
            assert_eq!(f.train.len(), 90);
        }
        assert_eq!(folds, make_folds(&labels, 10, 3).unwrap());
    }

    #[test]
    fn folds_reject_small_class() {
        let mut labels = vec![0u8; 50];
        labels.extend([1u8; 5]);
        assert!(make_folds(&labels, 10, 0).is_err());
    }
}
