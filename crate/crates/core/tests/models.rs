mod common;

use common::{random_features, trained_toy_mlp};
use mprune_core::importance::{compute_importance, Criterion, ImportanceConfig};
use mprune_core::objective::ModelObjective;
use mprune_core::prune::prune_model;
use mprune_core::zoo::{build_mlp, build_tiny_transformer, Batch, Checkpoint, StructureClass, TransformerConfig};
use mprune_core::{ParamSet, Tensor};

/// Cross-entropy of a ReLU MLP written with plain loops.
fn scalar_mlp_loss(params: &ParamSet, widths: &[usize], inputs: &Tensor, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let mut h: Vec<f64> = inputs.data()[r * widths[0]..(r + 1) * widths[0]].to_vec();
        for l in 0..widths.len() - 1 {
            let w = params.get(&format!("fc{l}.weight")).unwrap().data();
            let b = params.get(&format!("fc{l}.bias")).unwrap().data();
            let mut next = b.to_vec();
            for (i, hi) in h.iter().enumerate() {
                for (j, n) in next.iter_mut().enumerate() {
                    *n += hi * w[i * widths[l + 1] + j];
                }
            }
            if l + 2 < widths.len() {
                next.iter_mut().for_each(|x| *x = x.max(0.0));
            }
            h = next;
        }
        let max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + h.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - h[label];
    }
    total / labels.len() as f64
}

#[test]
fn mlp_loss_matches_scalar_forward() {
    let widths = [5, 7, 6, 3];
    let (model, params, _) = build_mlp(&widths, 7).unwrap();
    let batch = random_features(9, 5, 3, 4);
    let Batch::Features { inputs, labels } = &batch else { unreachable!() };
    let loss = model.batch_loss(&params, &batch).unwrap();
    let oracle = scalar_mlp_loss(&params, &widths, inputs, labels);
    assert!((loss - oracle).abs() <= 1e-12, "{loss} vs {oracle}");
}

#[test]
fn builds_are_seed_deterministic() {
    let (_, a, _) = build_mlp(&[4, 8, 3], 7).unwrap();
    let (_, b, _) = build_mlp(&[4, 8, 3], 7).unwrap();
    let (_, c, _) = build_mlp(&[4, 8, 3], 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn transformer_initial_loss_near_uniform() {
    let cfg = TransformerConfig { max_len: 12, ..TransformerConfig::new(32, 16, 4, 2) };
    let (model, params, groups) = build_tiny_transformer(&cfg, 7).unwrap();
    let seqs = Batch::Sequences(vec![(0..12).collect(), (5..17).collect()]);
    let loss = model.batch_loss(&params, &seqs).unwrap();
    // small initial weights keep the predictive distribution close to uniform
    assert!((loss - 32f64.ln()).abs() < 0.5, "{loss}");
    let heads = groups.groups.iter().filter(|g| g.class == StructureClass::Head).count();
    assert_eq!((heads, groups.num_groups() - heads), (8, 128));
}

#[test]
fn deep_mlp_structures_are_disjoint() {
    let (_, params, groups) = build_mlp(&[5, 6, 7, 3], 1).unwrap();
    groups.validate(&params).unwrap();
    let layout = groups.layout(&params).unwrap();
    assert_eq!(layout.len(), 13);
    // interior units own fan-in and bias only; last hidden layer also owns fan-out
    assert_eq!(layout.subsets()[0].len(), 5 + 1);
    assert_eq!(layout.subsets()[6].len(), 6 + 1 + 3);
}

#[test]
fn pruning_equals_silencing_the_unit() {
    let (model, params, groups) = build_mlp(&[5, 6, 7, 3], 2).unwrap();
    // unit 2 of hidden1 is group 2, unit 4 of hidden2 is group 10
    let pruned = prune_model(&model, &params, &groups, &[2, 10]).unwrap();
    assert_eq!(pruned.params.get("fc1.weight").unwrap().shape(), &[5, 6]);
    let silenced = params.map(|name, t| {
        let mut t = t.clone();
        let cols = t.shape()[t.shape().len() - 1];
        match name {
            "fc1.weight" => t.data_mut()[2 * cols..3 * cols].fill(0.0),
            "fc2.weight" => t.data_mut()[4 * cols..5 * cols].fill(0.0),
            _ => {}
        }
        t
    });
    let inputs = random_features(50, 5, 3, 9);
    let a = model.outputs(&silenced, &inputs).unwrap();
    let b = pruned.model.outputs(&pruned.params, &inputs).unwrap();
    let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff}");
}

#[test]
fn twenty_percent_prune_matches_slice_arithmetic() {
    let (model, params, groups, calibration) = trained_toy_mlp(3);
    let objective = ModelObjective::new(&model, &calibration);
    let report =
        compute_importance(Criterion::Plain, &objective, &params, &groups, &ImportanceConfig::new(0.2, 1)).unwrap();
    assert_eq!(report.prune_set.len(), 6);
    let k1 = report.prune_set.iter().filter(|&&g| g < 16).count();
    let (h1, h2) = (16 - k1, 16 - (6 - k1));
    let expected = 8 * h1 + h1 + h1 * h2 + h2 + h2 * 4 + 4;
    let pruned = prune_model(&model, &params, &groups, &report.prune_set).unwrap();
    assert_eq!(pruned.params.numel(), expected);
    let removed: usize = pruned.index_maps.values().map(|m| m.removed_elements()).sum();
    assert_eq!(params.numel() - removed, expected);
    assert_eq!(pruned.groups.num_groups(), 26);
}

#[test]
fn checkpoint_round_trip() {
    let (model, params, groups) = build_mlp(&[4, 8, 3], 5).unwrap();
    let ckpt = Checkpoint { model, params, groups };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    assert_eq!(std::fs::read(&path).unwrap(), ckpt.to_bytes().unwrap());

    let mut bytes = ckpt.to_bytes().unwrap();
    bytes[0] = b'X';
    assert!(Checkpoint::from_bytes(&bytes).is_err());
    let truncated = &ckpt.to_bytes().unwrap()[..40];
    assert!(Checkpoint::from_bytes(truncated).is_err());
}
