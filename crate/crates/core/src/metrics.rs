//! Accuracy and group-fairness disparities at a 0.5 threshold.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroupKey, PerGroup};
use crate::model::LinearModel;
use crate::{Error, Result};

/// Confusion counts of one `(y, z)` cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// Samples predicted positive.
    pub predicted_positive: usize,
    pub total: usize,
}

impl Confusion {
    pub fn positive_rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.predicted_positive as f64 / self.total as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub eo_disparity: f64,
    pub dp_disparity: f64,
    pub confusion: PerGroup<Confusion>,
}

/// Per-group predicted-positive counts for hard predictions `yhat`.
pub fn confusion_counts(d: &Dataset, yhat: &[u8]) -> PerGroup<Confusion> {
    let mut out = PerGroup([Confusion::default(); 4]);
    for (i, &p) in yhat.iter().enumerate() {
        let c = &mut out[d.group(i)];
        c.total += 1;
        c.predicted_positive += usize::from(p == 1);
    }
    out
}

fn merged(cells: impl IntoIterator<Item = Confusion>) -> Confusion {
    cells.into_iter().fold(Confusion::default(), |a, c| Confusion {
        predicted_positive: a.predicted_positive + c.predicted_positive,
        total: a.total + c.total,
    })
}

/// `max_(y,z) |Pr(ŷ=1 | y, z) − Pr(ŷ=1 | y)|` from confusion counts.
pub fn eo_from_counts(c: &PerGroup<Confusion>) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in GroupKey::ALL {
        let cell = c[k].positive_rate().ok_or_else(|| Error::EmptyStratum(k.to_string()))?;
        let class = merged([c[k], c[k.sibling()]]).positive_rate().expect("cell is nonempty");
        worst = worst.max((cell - class).abs());
    }
    Ok(worst)
}

/// `max_z |Pr(ŷ=1 | z) − Pr(ŷ=1)|` from confusion counts.
pub fn dp_from_counts(c: &PerGroup<Confusion>) -> Result<f64> {
    let overall = merged(c.0).positive_rate().ok_or(Error::EmptyDataset)?;
    let mut worst = 0.0f64;
    for z in 0..2u8 {
        let rate = merged([c[GroupKey::new(0, z)], c[GroupKey::new(1, z)]])
            .positive_rate()
            .ok_or_else(|| Error::EmptyStratum(format!("z={z}")))?;
        worst = worst.max((rate - overall).abs());
    }
    Ok(worst)
}

pub fn accuracy(model: &LinearModel, d: &Dataset) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let yhat = model.predict(d)?;
    let hits = yhat.iter().zip(d.labels()).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / d.len() as f64)
}

pub fn eo_disparity(model: &LinearModel, d: &Dataset) -> Result<f64> {
    eo_from_counts(&confusion_counts(d, &model.predict(d)?))
}

pub fn dp_disparity(model: &LinearModel, d: &Dataset) -> Result<f64> {
    dp_from_counts(&confusion_counts(d, &model.predict(d)?))
}

/// Accuracy and both disparities from hard predictions.
pub fn report_from_predictions(d: &Dataset, yhat: &[u8]) -> Result<EvalReport> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if yhat.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: yhat.len(),
        });
    }
    let confusion = confusion_counts(d, yhat);
    let hits = yhat.iter().zip(d.labels()).filter(|(a, b)| a == b).count();
    Ok(EvalReport {
        accuracy: hits as f64 / d.len() as f64,
        eo_disparity: eo_from_counts(&confusion)?,
        dp_disparity: dp_from_counts(&confusion)?,
        confusion,
    })
}

pub fn evaluate(model: &LinearModel, d: &Dataset) -> Result<EvalReport> {
    report_from_predictions(d, &model.predict(d)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn data(labels: Vec<u8>, sens: Vec<u8>) -> Dataset {
        let n = labels.len();
        Dataset::new((0..n).map(|i| i as f64).collect(), 1, labels, sens).unwrap()
    }

    /// Direct per-row recount, independent of the confusion tallies.
    fn brute_eo(labels: &[u8], sens: &[u8], yhat: &[u8]) -> f64 {
        let rate = |f: &dyn Fn(usize) -> bool| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| f(i)).collect();
            idx.iter().filter(|&&i| yhat[i] == 1).count() as f64 / idx.len() as f64
        };
        let mut best = 0.0f64;
        for y in 0..2u8 {
            let class = rate(&|i| labels[i] == y);
            for z in 0..2u8 {
                best = best.max((rate(&|i| labels[i] == y && sens[i] == z) - class).abs());
            }
        }
        best
    }

    #[test]
    fn perfect_predictions_have_no_eo_gap() {
        let d = data(vec![0, 0, 1, 1, 0, 1], vec![0, 1, 0, 1, 1, 1]);
        let r = report_from_predictions(&d, d.labels()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.eo_disparity, 0.0);
    }

    #[test]
    fn eight_sample_eo_example() {
        // y=1: z=1 rows predicted 1, z=0 rows predicted 0. y=0 rows all 0.
        let labels = vec![1, 1, 1, 1, 0, 0, 0, 0];
        let sens = vec![1, 1, 0, 0, 1, 1, 0, 0];
        let yhat = vec![1, 1, 0, 0, 0, 0, 0, 0];
        let d = data(labels, sens);
        let r = report_from_predictions(&d, &yhat).unwrap();
        assert!((r.eo_disparity - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dp_examples() {
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let sens: Vec<u8> = (0..20).map(|i| u8::from(i < 10)).collect();
        let d = data(labels, sens);
        let ones = vec![1u8; 20];
        assert_eq!(report_from_predictions(&d, &ones).unwrap().dp_disparity, 0.0);
        // z=1 rows at 0.8, z=0 rows at 0.2.
        let yhat: Vec<u8> = (0..20).map(|i| if i < 10 { u8::from(i < 8) } else { u8::from(i < 12) }).collect();
        assert!((report_from_predictions(&d, &yhat).unwrap().dp_disparity - 0.3).abs() < 1e-12);
    }

    #[test]
    fn empty_cell_is_an_error() {
        let d = data(vec![0, 0, 1], vec![0, 1, 1]);
        assert!(matches!(
            report_from_predictions(&d, &[0, 1, 1]),
            Err(Error::EmptyStratum(_))
        ));
    }

    #[test]
    fn model_level_accuracy() {
        let d = Dataset::new(vec![-2.0, -1.0, 1.0, 2.0], 1, vec![0, 0, 1, 1], vec![0, 1, 0, 1]).unwrap();
        let sep = LinearModel::new(vec![3.0], 0.0, 0.1).unwrap();
        assert_eq!(accuracy(&sep, &d).unwrap(), 1.0);
        // A zero model predicts 1 everywhere (p = 0.5).
        let flat = LinearModel::zeros(1, 0.1).unwrap();
        assert_eq!(accuracy(&flat, &d).unwrap(), 0.5);
        assert_eq!(dp_disparity(&flat, &d).unwrap(), 0.0);
        assert_eq!(eo_disparity(&sep, &d).unwrap(), 0.0);
    }

    fn arb_case() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, Vec<u8>)> {
        (8usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(0u8..2, n),
                prop::collection::vec(0u8..2, n),
                prop::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_is_z_symmetric((labels, sens, yhat) in arb_case()) {
            let d = data(labels.clone(), sens.clone());
            let Ok(r) = report_from_predictions(&d, &yhat) else {
                // Only when a cell is empty.
                let counts = confusion_counts(&d, &yhat);
                prop_assert!(counts.0.iter().any(|c| c.total == 0));
                return Ok(());
            };
            prop_assert!((r.eo_disparity - brute_eo(&labels, &sens, &yhat)).abs() < 1e-12);
            prop_assert_eq!(r.confusion.0.iter().map(|c| c.total).sum::<usize>(), labels.len());
            for v in [r.accuracy, r.eo_disparity, r.dp_disparity] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let swapped: Vec<u8> = sens.iter().map(|z| 1 - z).collect();
            let s = report_from_predictions(&data(labels, swapped), &yhat).unwrap();
            prop_assert!((s.eo_disparity - r.eo_disparity).abs() < 1e-12);
            prop_assert!((s.dp_disparity - r.dp_disparity).abs() < 1e-12);
        }
    }
}
