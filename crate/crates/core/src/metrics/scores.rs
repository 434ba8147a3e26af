use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{f1_score, ratio};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassPrediction {
    Positive,
    Negative,
    Unevaluated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub evaluated: usize,
    pub total: usize,
}

impl ClassificationMetrics {
    pub fn percent(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1].map(|v| v * 100.0)
    }
}

/// Binary lesion-present scoring over every labelled item.
///
/// Items without a prediction, or predicted `Unevaluated`, count as incorrect
/// and never as predicted positive. Precision/recall/F1 are for the positive
/// class. Predictions for unlabelled items are an error.
pub fn classification_metrics(
    predictions: &BTreeMap<String, ClassPrediction>,
    labels: &BTreeMap<String, bool>,
) -> Result<ClassificationMetrics> {
    if let Some(unknown) = predictions.keys().find(|k| !labels.contains_key(*k)) {
        return Err(Error::UnknownItem(unknown.clone()));
    }
    let (mut tp, mut fp, mut fn_, mut correct, mut evaluated) = (0u64, 0u64, 0u64, 0u64, 0usize);
    for (id, &label) in labels {
        let pred = predictions.get(id).copied().unwrap_or(ClassPrediction::Unevaluated);
        if pred != ClassPrediction::Unevaluated {
            evaluated += 1;
        }
        match (pred, label) {
            (ClassPrediction::Positive, true) => {
                tp += 1;
                correct += 1;
            }
            (ClassPrediction::Positive, false) => fp += 1,
            (ClassPrediction::Negative, false) => correct += 1,
            (_, true) => fn_ += 1,
            (_, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(ClassificationMetrics {
        accuracy: ratio(correct, labels.len() as u64),
        precision,
        recall,
        f1: f1_score(precision, recall),
        evaluated,
        total: labels.len(),
    })
}

/// Fraction of keyed questions answered correctly; absent, unanswered and
/// out-of-range answers are wrong.
pub fn vqa_score(answers: &BTreeMap<String, Option<usize>>, key: &BTreeMap<String, usize>) -> f64 {
    let correct = key
        .iter()
        .filter(|(q, k)| answers.get(*q).copied().flatten() == Some(**k))
        .count();
    ratio(correct as u64, key.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn split(pos: usize, neg: usize) -> BTreeMap<String, bool> {
        (0..pos + neg).map(|i| (format!("c{i:04}"), i < pos)).collect()
    }

    #[test]
    fn all_positive_predictor() {
        let labels = split(272, 518);
        let preds = labels.keys().map(|k| (k.clone(), ClassPrediction::Positive)).collect();
        let m = classification_metrics(&preds, &labels).unwrap();
        let [acc, p, r, f1] = m.percent();
        assert!((acc - 34.4).abs() <= 0.05, "{acc}");
        assert!((p - 34.4).abs() <= 0.05, "{p}");
        assert!((r - 100.0).abs() <= 0.05, "{r}");
        assert!((f1 - 51.2).abs() <= 0.05, "{f1}");
    }

    #[test]
    fn perfect_and_unevaluated() {
        let labels = split(3, 4);
        let perfect = labels
            .iter()
            .map(|(k, &l)| (k.clone(), if l { ClassPrediction::Positive } else { ClassPrediction::Negative }))
            .collect();
        assert_eq!(classification_metrics(&perfect, &labels).unwrap().percent(), [100.0; 4]);

        let none = labels.keys().map(|k| (k.clone(), ClassPrediction::Unevaluated)).collect();
        let m = classification_metrics(&none, &labels).unwrap();
        assert_eq!(m.percent(), [0.0; 4]);
        assert_eq!(m.evaluated, 0);
        // a missing prediction is the same as unevaluated
        assert_eq!(classification_metrics(&BTreeMap::new(), &labels).unwrap().accuracy, 0.0);
    }

    #[test]
    fn unknown_item_is_an_error() {
        let preds = [("ghost".to_string(), ClassPrediction::Positive)].into();
        assert!(matches!(classification_metrics(&preds, &split(1, 1)), Err(Error::UnknownItem(_))));
    }

    #[test]
    fn vqa_examples() {
        let key: BTreeMap<String, usize> = (0..10).map(|i| (format!("q{i}"), i % 5)).collect();
        let all: BTreeMap<_, _> = key.iter().map(|(q, &k)| (q.clone(), Some(k))).collect();
        assert_eq!(vqa_score(&all, &key), 1.0);
        let unanswered: BTreeMap<_, _> = key.keys().map(|q| (q.clone(), None)).collect();
        assert_eq!(vqa_score(&unanswered, &key), 0.0);
        let oob: BTreeMap<_, _> = key.keys().map(|q| (q.clone(), Some(7))).collect();
        assert_eq!(vqa_score(&oob, &key), 0.0);
    }

    #[test]
    fn uniform_random_answers_sit_at_chance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let key: BTreeMap<String, usize> = (0..10_000).map(|i| (format!("q{i}"), rng.random_range(0..5))).collect();
        let answers = key.keys().map(|q| (q.clone(), Some(rng.random_range(0..5)))).collect();
        let acc = vqa_score(&answers, &key);
        assert!((acc - 0.20).abs() <= 0.02, "{acc}");
    }
}
