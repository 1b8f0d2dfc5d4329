//! Gesture recognizers. All three consume the same [`Dataset`] and predict
//! gesture labels; none of them cares whether samples were DGE-converted.

mod cnn;
mod knn;
mod svm;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cnn::{cnn_fit, GestureCnn};
pub use knn::KnnModel;
pub use svm::{SvmConfig, SvmModel};

use crate::container;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::signal::AmplitudeSample;
use crate::train::TrainConfig;

/// Fraction of predictions equal to the truth, `N_cor / N_all`.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("accuracy of zero predictions".into()));
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecognizerKind {
    Knn,
    Svm,
    Cnn,
}

impl RecognizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            RecognizerKind::Knn => "knn",
            RecognizerKind::Svm => "svm",
            RecognizerKind::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognizerParams {
    pub k: usize,
    pub svm: SvmConfig,
    pub cnn: TrainConfig,
}

impl Default for RecognizerParams {
    fn default() -> Self {
        Self {
            k: 5,
            svm: SvmConfig::default(),
            cnn: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Recognizer {
    Knn(KnnModel),
    Svm(SvmModel),
    Cnn(GestureCnn),
}

impl Recognizer {
    pub fn fit(kind: RecognizerKind, train: &Dataset, params: &RecognizerParams) -> Result<Self> {
        Ok(match kind {
            RecognizerKind::Knn => Recognizer::Knn(KnnModel::fit(train, params.k)?),
            RecognizerKind::Svm => Recognizer::Svm(SvmModel::fit(train, &params.svm)?),
            RecognizerKind::Cnn => Recognizer::Cnn(cnn_fit(train, &params.cnn)?.0),
        })
    }

    pub fn kind(&self) -> RecognizerKind {
        match self {
            Recognizer::Knn(_) => RecognizerKind::Knn,
            Recognizer::Svm(_) => RecognizerKind::Svm,
            Recognizer::Cnn(_) => RecognizerKind::Cnn,
        }
    }

    pub fn predict(&self, samples: &[&AmplitudeSample]) -> Result<Vec<usize>> {
        match self {
            Recognizer::Knn(m) => samples.iter().map(|x| m.predict(x)).collect(),
            Recognizer::Svm(m) => samples.iter().map(|x| m.predict(x)).collect(),
            Recognizer::Cnn(m) => m.predict(samples),
        }
    }

    /// Accuracy on the gesture labels of `test`.
    pub fn evaluate(&self, test: &Dataset) -> Result<f64> {
        let xs: Vec<&AmplitudeSample> = test.samples().iter().map(|s| &s.sample).collect();
        accuracy(&self.predict(&xs)?, &test.gesture_labels())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            Recognizer::Knn(m) => m.save(path),
            Recognizer::Svm(m) => m.save(path),
            Recognizer::Cnn(m) => m.save(path),
        }
    }

    pub fn write(&self, w: &mut impl std::io::Write) -> Result<()> {
        match self {
            Recognizer::Knn(m) => {
                let (p, meta) = m.to_container()?;
                container::write_model(w, &p, &meta)
            }
            Recognizer::Svm(m) => {
                let (p, meta) = m.to_container()?;
                container::write_model(w, &p, &meta)
            }
            Recognizer::Cnn(m) => m.write(w),
        }
    }

    /// Loads any recognizer container, dispatching on its `kind` metadata.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta) = container::load_model(path)?;
        match meta.get("kind").and_then(|k| k.as_str()) {
            Some("knn") => Ok(Recognizer::Knn(KnnModel::from_container(params, meta)?)),
            Some("svm") => Ok(Recognizer::Svm(SvmModel::from_container(params, meta)?)),
            Some("gesture_cnn") => {
                let mut buf = Vec::new();
                container::write_model(&mut buf, &params, &meta)?;
                Ok(Recognizer::Cnn(GestureCnn::read(&mut buf.as_slice())?))
            }
            other => Err(Error::Format(format!("unknown recognizer kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        let truth: Vec<usize> = (0..50).map(|i| i % 7).collect();
        let mut pred = truth.clone();
        for p in pred.iter_mut().take(5) {
            *p += 1;
        }
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.9);
        assert_eq!(accuracy(&truth, &truth).unwrap(), 1.0);
        let wrong: Vec<usize> = truth.iter().map(|t| t + 1).collect();
        assert_eq!(accuracy(&wrong, &truth).unwrap(), 0.0);
        assert!(matches!(accuracy(&[], &[]), Err(Error::Empty(_))));
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_bounded_and_permutation_invariant(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
            rot in 0usize..60,
        ) {
            let (p, t): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let a = accuracy(&p, &t).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let (p2, t2): (Vec<_>, Vec<_>) = rotated.into_iter().unzip();
            prop_assert_eq!(accuracy(&p2, &t2).unwrap(), a);
        }
    }
}
