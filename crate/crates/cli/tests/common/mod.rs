//! Synthetic trained bundle: cheap to build, shaped like a real one.

#![allow(dead_code)]

use nalgebra::{DMatrix, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stentrom::dataset::{Label, MuB, ParamSpace, PredictorKind, Predictors};
use stentrom::fem::CenterlinePath;
use stentrom::stent::StentSpec;
use stentrom::vessel::VesselFrame;
use stentrom_classify::{labels_to_classes, train_bank, ClassifierConfig, ClassifierKind};
use stentrom_cli::pipeline::{ModelBundle, ModelIndex, SCHEMA_VERSION};
use stentrom_rom::{GprConfig, ReducedModel, RomConfig};

pub fn predictors() -> Predictors {
    Predictors {
        kind: PredictorKind::MuB,
        crimped_centerline: CenterlinePath::new(vec![Point3::origin(), Point3::new(0.0, 0.0, 10.0)]).unwrap(),
        frame: VesselFrame::default(),
    }
}

/// Success exactly when the unit coordinate of the vessel diameter is below
/// one half.
pub fn synthetic_label(unit: &[f64; 6]) -> Label {
    if unit[2] < 0.5 {
        Label::Success
    } else {
        Label::Failure
    }
}

pub fn sample_params(n: usize, seed: u64) -> Vec<([f64; 6], MuB)> {
    let space = ParamSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.02..0.98));
            (u, space.map_unit(&u))
        })
        .collect()
}

/// Smooth displacement field of `n_nodes` nodes driven by the parameters.
pub fn synthetic_field(mu: &MuB, n_nodes: usize) -> Vec<f64> {
    let [y_p1, z_p1, d_v, d_a, y_ca, eta] = mu.0;
    (0..3 * n_nodes)
        .map(|k| {
            let s = k as f64 / (3 * n_nodes) as f64;
            0.1 * y_p1 * (3.0 * s).sin() + 0.05 * z_p1 * (5.0 * s).cos() + d_v * s * s + 0.2 * d_a * (7.0 * s).sin()
                - 0.1 * y_ca * s
                + eta * (2.0 * s).cos()
        })
        .collect()
}

pub fn cheap_gpr() -> GprConfig {
    GprConfig { restarts: 0, max_evals: 200, ..Default::default() }
}

pub fn synthetic_bundle(n_nodes: usize, rank: usize, n_train: usize) -> ModelBundle {
    let params = sample_params(n_train, 11);
    let x = DMatrix::from_fn(n_train, 6, |r, c| params[r].1 .0[c]);
    let labels: Vec<Label> = params.iter().map(|(u, _)| synthetic_label(u)).collect();
    let classifiers: Vec<_> = train_bank(&x, &labels_to_classes(&labels), &ClassifierConfig::default())
        .unwrap()
        .into_iter()
        .map(|c| c.with_predictors(predictors()))
        .collect();
    let mut snapshots = DMatrix::zeros(3 * n_nodes, n_train);
    for (j, (_, mu)) in params.iter().enumerate() {
        snapshots.set_column(j, &nalgebra::DVector::from_vec(synthetic_field(mu, n_nodes)));
    }
    let cfg = RomConfig { rank: Some(rank), gpr: cheap_gpr(), ..Default::default() };
    let rom = ReducedModel::train(&snapshots, &x, predictors(), &cfg).unwrap();
    ModelBundle {
        index: ModelIndex {
            schema_version: SCHEMA_VERSION,
            dataset_hash: "synthetic".into(),
            gate: ClassifierKind::Logistic.short_name().into(),
            classifiers: classifiers.iter().map(|c| c.kind.short_name().to_string()).collect(),
            rank: rom.rank(),
            n_nodes,
            predictors: PredictorKind::MuB,
            space: ParamSpace::default(),
            stent: StentSpec::coarse(),
            frame: VesselFrame::default(),
        },
        rom,
        classifiers,
    }
}

/// A point well inside the success region and one well inside the failure
/// region of the synthetic labels.
pub fn success_and_failure() -> (MuB, MuB) {
    let space = ParamSpace::default();
    (space.map_unit(&[0.5, 0.5, 0.1, 0.5, 0.5, 0.5]), space.map_unit(&[0.5, 0.5, 0.9, 0.5, 0.5, 0.5]))
}
