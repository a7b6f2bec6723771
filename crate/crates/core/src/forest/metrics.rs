use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_rows, Example, ForestError, ForestParams, RandomForest};
use crate::exec::Execution;
use crate::features::FeatureSchema;
use crate::labeler::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    /// Indexed by label: `[easy, hard]`. Zero when the class was never predicted.
    pub precision: [f64; 2],
    /// Zero when the class never occurs.
    pub recall: [f64; 2],
    /// `confusion[actual][predicted]`.
    pub confusion: [[usize; 2]; 2],
}

impl Metrics {
    pub fn from_confusion(confusion: [[usize; 2]; 2]) -> Metrics {
        let n: usize = confusion.iter().flatten().sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let diag = confusion[0][0] + confusion[1][1];
        let predicted = |c: usize| confusion[0][c] + confusion[1][c];
        let actual = |c: usize| confusion[c][0] + confusion[c][1];
        Metrics {
            n,
            accuracy: ratio(diag, n),
            precision: [0, 1].map(|c| ratio(confusion[c][c], predicted(c))),
            recall: [0, 1].map(|c| ratio(confusion[c][c], actual(c))),
            confusion,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Metrics {
        let mut c = [[0usize; 2]; 2];
        for (actual, predicted) in pairs {
            c[actual.index()][predicted.index()] += 1;
        }
        Metrics::from_confusion(c)
    }
}

pub fn evaluate(model: &RandomForest, rows: &[Example]) -> Result<Metrics, ForestError> {
    check_rows(rows, model.width())?;
    let mut pairs = Vec::with_capacity(rows.len());
    for r in rows {
        pairs.push((r.label, model.predict_values(&r.values)?.label));
    }
    Ok(Metrics::from_pairs(pairs))
}

/// Assigns each row a fold in `0..k`.
///
/// Rows sharing an id stay together. Ids are grouped by the label of their
/// first row, shuffled with `seed`, and dealt round-robin, continuing the
/// rotation from one class to the next.
pub fn stratified_folds(rows: &[Example], k: usize, seed: u64) -> Result<Vec<usize>, ForestError> {
    let mut groups: BTreeMap<&str, (Label, Vec<usize>)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(&r.id).or_insert((r.label, Vec::new())).1.push(i);
    }
    if k < 2 || k > groups.len() {
        return Err(ForestError::Params(format!(
            "need 2 <= k <= {} distinct functions, got k = {k}",
            groups.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; rows.len()];
    let mut next = 0;
    for label in [Label::Easy, Label::Hard] {
        let mut ids: Vec<&Vec<usize>> = groups
            .values()
            .filter(|(l, _)| *l == label)
            .map(|(_, members)| members)
            .collect();
        ids.shuffle(&mut rng);
        for members in ids {
            for &i in members {
                fold_of[i] = next;
            }
            next = (next + 1) % k;
        }
    }
    Ok(fold_of)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<Metrics>,
    pub mean_accuracy: f64,
    /// Metrics over the pooled held-out predictions.
    pub pooled: Metrics,
}

/// k-fold cross-validation; fold `f` trains on every other fold.
pub fn cross_validate(
    rows: &[Example],
    schema: FeatureSchema,
    params: &ForestParams,
    k: usize,
    exec: Execution,
) -> Result<CvReport, ForestError> {
    check_rows(rows, schema.width())?;
    let fold_of = stratified_folds(rows, k, params.rng_seed)?;
    let mut folds = Vec::with_capacity(k);
    let mut pooled = [[0usize; 2]; 2];
    for f in 0..k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (r, g) in rows.iter().zip(&fold_of) {
            if *g == f { &mut test } else { &mut train }.push(r.clone());
        }
        let model = RandomForest::train(&train, schema, params, "", exec)?;
        let m = evaluate(&model, &test)?;
        for (a, row) in m.confusion.iter().enumerate() {
            for (p, n) in row.iter().enumerate() {
                pooled[a][p] += n;
            }
        }
        folds.push(m);
    }
    let mean_accuracy = folds.iter().map(|m| m.accuracy).sum::<f64>() / k as f64;
    Ok(CvReport {
        k,
        folds,
        mean_accuracy,
        pooled: Metrics::from_confusion(pooled),
    })
}
