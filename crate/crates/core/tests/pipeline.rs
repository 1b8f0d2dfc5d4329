use dge_core::ahnet::{fgsm_adversarial, train_domain_dcnn, Classifier, DomainDcnn};
use dge_core::dataset::{split, Dataset, SplitProtocol};
use dge_core::experiment::eval_domain;
use dge_core::recognizers::cnn_fit;
use dge_core::signal::AmplitudeSample;
use dge_core::synth::{generate_dataset, GeneratorConfig};
use dge_core::train::TrainConfig;

fn small(gestures: usize, domains: usize, reps: usize, noise: f64) -> Dataset {
    generate_dataset(&GeneratorConfig {
        gestures,
        domains,
        reps,
        rows: 24,
        cols: 32,
        noise,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn refs(ds: &Dataset) -> Vec<&AmplitudeSample> {
    ds.samples().iter().map(|s| &s.sample).collect()
}

#[test]
fn untrained_domain_model_is_at_chance() {
    let bench = generate_dataset(&GeneratorConfig::default()).unwrap();
    let model = DomainDcnn::new("domain_dcnn", bench.shape(), 10, false, 0).unwrap();
    let acc = eval_domain(&model, &bench).unwrap();
    assert!((acc - 0.1).abs() <= 0.05, "untrained accuracy {acc}");
}

#[test]
fn single_sample_accuracy_is_zero_or_one() {
    let ds = small(2, 2, 1, 0.05).subset(&[0]);
    let model = DomainDcnn::new("domain_dcnn", ds.shape(), 2, false, 0).unwrap();
    let acc = eval_domain(&model, &ds).unwrap();
    assert!(acc == 0.0 || acc == 1.0);
}

#[test]
fn eval_domain_rejects_shape_mismatch() {
    let ds = small(2, 2, 1, 0.05);
    let model = DomainDcnn::new("domain_dcnn", [16, 16], 2, false, 0).unwrap();
    assert!(eval_domain(&model, &ds).is_err());
}

#[test]
fn domain_model_fits_its_training_set() {
    let ds = small(3, 4, 6, 0.05);
    let cfg = TrainConfig {
        epochs: 15,
        batch: 8,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, trace) = train_domain_dcnn(&ds, &cfg, false).unwrap();
    assert!(trace.last().unwrap().loss < trace[0].loss);
    let acc = eval_domain(&model, &ds).unwrap();
    assert!(acc >= 0.95, "training-set domain accuracy {acc}");
}

#[test]
fn noise_free_single_domain_gesture_cnn_fits() {
    let ds = small(10, 1, 4, 0.0);
    let cfg = TrainConfig {
        epochs: 20,
        batch: 8,
        seed: 2,
        ..TrainConfig::default()
    };
    let (cnn, _) = cnn_fit(&ds, &cfg).unwrap();
    let preds = cnn.predict(&refs(&ds)).unwrap();
    let hits = preds.iter().zip(ds.gesture_labels()).filter(|(p, t)| **p == *t).count();
    assert!(hits as f64 / ds.len() as f64 >= 0.99, "train accuracy {hits}/{}", ds.len());
}

#[test]
fn fgsm_flips_an_underfit_toy_model() {
    let ds = small(2, 1, 8, 0.05);
    let (train, test) = split(&ds, SplitProtocol::Mixed { train_frac: 0.5, seed: 4 }).unwrap();
    let mut model = Classifier::new("toy", ds.shape(), 2, false, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch: 4,
        seed: 5,
        ..TrainConfig::default()
    };
    model.fit(&refs(&train), &train.gesture_labels(), &cfg).unwrap();
    let flipped = [0.05, 0.1, 0.2].iter().any(|&eps| {
        test.samples()
            .iter()
            .any(|s| fgsm_adversarial(&model, &s.sample, s.gesture, eps).unwrap().flipped)
    });
    assert!(flipped);
}

#[test]
fn training_is_deterministic() {
    let ds = small(2, 2, 3, 0.05);
    let cfg = TrainConfig {
        epochs: 2,
        batch: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, ta) = train_domain_dcnn(&ds, &cfg, false).unwrap();
    let (b, tb) = train_domain_dcnn(&ds, &cfg, false).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
}
