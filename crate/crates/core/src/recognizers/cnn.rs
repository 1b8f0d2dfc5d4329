use crate::ahnet::Classifier;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::signal::AmplitudeSample;
use crate::train::{EpochStats, TrainConfig};

/// Gesture classifier with the domain DCNN's architecture and `M` outputs.
pub type GestureCnn = Classifier;

/// Trains a gesture CNN on gesture labels (cross-entropy over `M` classes).
pub fn cnn_fit(train: &Dataset, cfg: &TrainConfig) -> Result<(GestureCnn, Vec<EpochStats>)> {
    if train.is_empty() {
        return Err(Error::Empty("gesture CNN training set is empty".into()));
    }
    let mut model = Classifier::new("gesture_cnn", train.shape(), train.num_gestures(), false, cfg.seed)?;
    let xs: Vec<&AmplitudeSample> = train.samples().iter().map(|s| &s.sample).collect();
    let trace = model.fit(&xs, &train.gesture_labels(), cfg)?;
    Ok((model, trace))
}
