use nalgebra::{DMatrix, SymmetricEigen};
use pathguide_core::data::{blobs_dataset, circle_dataset, shapes_dataset, Dataset};
use pathguide_core::manifold::EmbeddedCircle;
use pathguide_core::models::{
    accuracy, load_classifier, reconstruction_mse, save_classifier, train_autoencoder,
    train_classifier, Activation, Head, MlpSpec, TrainConfig,
};
use pathguide_core::autodiff::evaluate;
use pathguide_core::Tensor;

fn cfg(epochs: usize, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: lr,
        seed,
        accuracy_floor: None,
        mse_ceiling: None,
        ..TrainConfig::default()
    }
}

/// Reconstruction MSE of the best rank-`k` affine fit on the training rows,
/// measured on the held-out rows.
fn pca_mse(data: &Dataset, train: &[usize], test: &[usize], k: usize) -> f64 {
    let n = data.dim();
    let mean: Vec<f64> = (0..n)
        .map(|j| train.iter().map(|&i| data.row(i)[j]).sum::<f64>() / train.len() as f64)
        .collect();
    let centred = |i: usize| -> Vec<f64> { data.row(i).iter().zip(&mean).map(|(a, m)| a - m).collect() };
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for &i in train {
        let c = nalgebra::DVector::from_vec(centred(i));
        cov += &c * c.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let basis: Vec<_> = order[..k].iter().map(|&c| eig.eigenvectors.column(c).into_owned()).collect();
    let mut total = 0.0;
    for &i in test {
        let c = nalgebra::DVector::from_vec(centred(i));
        let mut r = c.clone();
        for b in &basis {
            r -= b * b.dot(&c);
        }
        total += r.norm_squared();
    }
    total / (test.len() * n) as f64
}

fn nearest_centroid_accuracy(data: &Dataset, train: &[usize], test: &[usize]) -> f64 {
    let labels = data.labels().unwrap();
    let n = data.dim();
    let mut centroids = vec![vec![0.0; n]; data.num_classes()];
    let mut counts = vec![0usize; data.num_classes()];
    for &i in train {
        counts[labels[i]] += 1;
        for (c, v) in centroids[labels[i]].iter_mut().zip(data.row(i)) {
            *c += v;
        }
    }
    for (c, k) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= *k as f64);
    }
    let hits = test
        .iter()
        .filter(|&&i| {
            let d2 = |c: &Vec<f64>| c.iter().zip(data.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..centroids.len())
                .min_by(|&a, &b| d2(&centroids[a]).total_cmp(&d2(&centroids[b])))
                .unwrap();
            best == labels[i]
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn one_hidden_layer_separates_blobs() {
    let data = blobs_dataset(10, 600, 5.0, 5).unwrap();
    // independent check that the data is linearly separable: logistic regression
    let logistic = MlpSpec::new(vec![10, 1], Activation::Tanh, Head::SigmoidScalar).unwrap();
    let lr = train_classifier(&data, &logistic, &cfg(40, 1e-2, 5)).unwrap().report;
    let spec = MlpSpec::new(vec![10, 16, 2], Activation::Tanh, Head::Softmax).unwrap();
    let mlp = train_classifier(&data, &spec, &cfg(40, 1e-2, 5)).unwrap().report;
    println!("blobs: logistic {}, mlp {}", lr.held_out_accuracy, mlp.held_out_accuracy);
    assert!(lr.held_out_accuracy >= 0.95, "{lr:?}");
    assert!(mlp.held_out_accuracy >= 0.95, "{mlp:?}");
}

#[test]
fn shapes_classifier_beats_nearest_centroid() {
    let data = shapes_dataset(1200, 0.05, 0).unwrap();
    let c = cfg(30, 3e-3, 0);
    let (train, test) = data.split_indices(c.held_out_fraction, c.seed);
    let centroid = nearest_centroid_accuracy(&data, &train, &test);
    let spec = MlpSpec::new(vec![64, 32, 2], Activation::Tanh, Head::Softmax).unwrap();
    let mlp = train_classifier(&data, &spec, &c).unwrap();
    let acc = mlp.report.held_out_accuracy;
    println!("shapes: nearest centroid {centroid}, mlp {acc}");
    // the task is not linear-trivial, but the oracle is well above chance
    assert!(centroid > 0.8, "{centroid}");
    assert!(acc >= 0.9, "{acc}");
}

#[test]
fn zero_epochs_leaves_chance_accuracy() {
    let data = shapes_dataset(1000, 0.05, 4).unwrap();
    let spec = MlpSpec::new(vec![64, 32, 2], Activation::Tanh, Head::Softmax).unwrap();
    let mut accs = Vec::new();
    for seed in 0..5 {
        let r = train_classifier(&data, &spec, &cfg(0, 1e-2, seed)).unwrap().report;
        assert!(r.final_loss.is_nan());
        accs.push(r.held_out_accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    println!("zero-epoch accuracies {accs:?}");
    assert!((mean - 0.5).abs() < 0.15, "{accs:?}");
}

#[test]
fn accuracy_floor_is_enforced() {
    let data = shapes_dataset(200, 0.05, 4).unwrap();
    let spec = MlpSpec::new(vec![64, 2], Activation::Tanh, Head::Softmax).unwrap();
    let mut c = cfg(0, 1e-2, 0);
    c.accuracy_floor = Some(0.99);
    assert!(train_classifier(&data, &spec, &c).is_err());
}

#[test]
fn checkpoint_predictions_are_bit_identical() {
    let data = shapes_dataset(300, 0.05, 8).unwrap();
    let spec = MlpSpec::new(vec![64, 16, 2], Activation::Relu, Head::Softmax).unwrap();
    let net = train_classifier(&data, &spec, &cfg(5, 1e-2, 8)).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.ckpt");
    save_classifier(&net, 8, &path).unwrap();
    let (back, seed) = load_classifier(&path).unwrap();
    assert_eq!(seed, 8);
    for i in 0..100 {
        let x = data.sample(i);
        let (a, b) = (evaluate(&net, &x).unwrap(), evaluate(&back, &x).unwrap());
        assert_eq!(a.data(), b.data(), "sample {i}");
    }
    assert_eq!(
        accuracy(&net, &data, &(0..300).collect::<Vec<_>>()).unwrap(),
        accuracy(&back, &data, &(0..300).collect::<Vec<_>>()).unwrap()
    );
}

#[test]
fn identity_sized_linear_autoencoder_reconstructs() {
    let data = blobs_dataset(6, 400, 2.0, 1).unwrap();
    let ae = train_autoencoder(&data, 6, &[], Activation::Tanh, &cfg(400, 1e-2, 1)).unwrap();
    let all: Vec<usize> = (0..data.len()).collect();
    let mse = reconstruction_mse(&ae, &data, &all).unwrap();
    println!("identity-size linear AE mse {mse:e}");
    assert!(mse < 1e-6, "{mse}");
}

#[test]
fn linear_autoencoder_reaches_the_pca_error_on_a_circle() {
    let circle = EmbeddedCircle::embedded(16, 3);
    let data = circle_dataset(&circle, 800, 2, 0.02, 3).unwrap();
    let c = cfg(300, 1e-2, 3);
    let (train, test) = data.split_indices(c.held_out_fraction, c.seed);
    let pca = pca_mse(&data, &train, &test, 2);
    let ae = train_autoencoder(&data, 2, &[], Activation::Tanh, &c).unwrap();
    let mse = reconstruction_mse(&ae, &data, &test).unwrap();
    println!("circle d=2: linear AE {mse:e}, PCA {pca:e}");
    assert!(mse < 1e-2);
    assert!(mse <= pca * 1.2 + 1e-6, "{mse} vs {pca}");
}

#[test]
fn nonlinear_autoencoder_beats_pca_on_shapes() {
    let data = shapes_dataset(1200, 0.05, 0).unwrap();
    let c = TrainConfig {
        learning_rate: 3e-3,
        ..cfg(300, 3e-3, 0)
    };
    let (train, test) = data.split_indices(c.held_out_fraction, c.seed);
    let pca = pca_mse(&data, &train, &test, 8);
    let ae = train_autoencoder(&data, 8, &[64], Activation::Tanh, &c).unwrap();
    let mse = reconstruction_mse(&ae, &data, &test).unwrap();
    println!("shapes d=8: AE {mse:e}, PCA-8 {pca:e}");
    assert!(mse < pca, "{mse} vs {pca}");
}

#[test]
fn training_is_seed_deterministic() {
    let data = shapes_dataset(200, 0.05, 2).unwrap();
    let spec = MlpSpec::new(vec![64, 8, 2], Activation::Tanh, Head::Softmax).unwrap();
    let a = train_classifier(&data, &spec, &cfg(3, 1e-2, 2)).unwrap();
    let b = train_classifier(&data, &spec, &cfg(3, 1e-2, 2)).unwrap();
    assert_eq!(a.report, b.report);
    let x: Tensor = data.sample(0);
    assert_eq!(evaluate(&a.model, &x).unwrap(), evaluate(&b.model, &x).unwrap());
}
