mod common;

use common::{l2, trained_toy_mlp};
use mprune_core::exec::Parallelism;
use mprune_core::importance::{compute_importance, Criterion, ImportanceConfig};
use mprune_core::moreau::{group_sparse_moreau_grad, moreau_grad, MoreauConfig, TestFunction};
use mprune_core::objective::{ModelObjective, Objective};
use mprune_core::perturb::{consistency_experiment, perturb, PerturbSpec};
use mprune_core::smoothing::{smoothed_grad, NoiseSpec};

// P(|Z| < 1) and P(|Z| < 2) for a standard normal
const ONE_SIGMA: f64 = 0.682_689_492_137_085_9;
const TWO_SIGMA: f64 = 0.954_499_736_103_641_6;

#[test]
fn smoothed_abs_gradient_matches_gaussian_mass() {
    // E[sign(w + σz)] = P(|z| < w/σ) for w ≥ 0
    let sigma = 0.5;
    let m = 20_000;
    for (w, expected) in [(0.0, 0.0), (0.5, ONE_SIGMA), (-1.0, -TWO_SIGMA)] {
        let g = smoothed_grad(
            &TestFunction::ScaledAbs(1.0),
            &TestFunction::params(&[w]),
            &NoiseSpec::absolute(sigma, m, 17),
        )
        .unwrap();
        let est = g.as_params().flatten()[0];
        let se = ((1.0 - expected * expected) / m as f64).sqrt();
        assert!((est - expected).abs() <= 4.0 * se + 1e-12, "w {w}: {est} vs {expected}");
    }
}

#[test]
fn smoothed_gradient_is_unbiased_for_quadratics() {
    // ∇½‖w‖² is linear, so averaging over symmetric noise only adds the noise mean
    let w = [0.3, -1.2, 2.0];
    let spec = NoiseSpec::absolute(0.1, 4000, 3);
    let g = smoothed_grad(&TestFunction::Quadratic, &TestFunction::params(&w), &spec).unwrap().as_params().flatten();
    for (gi, wi) in g.iter().zip(&w) {
        assert!((gi - wi).abs() < 4.0 * 0.1 / (4000f64).sqrt(), "{gi} vs {wi}");
    }
}

#[test]
fn parallel_and_sequential_estimates_are_bit_identical() {
    let (model, params, groups, calibration) = trained_toy_mlp(9);
    let objective = ModelObjective::new(&model, &calibration);
    let seq = NoiseSpec { parallelism: Parallelism::Sequential, ..NoiseSpec::relative(0.05, 6, 2) };
    let par = NoiseSpec { parallelism: Parallelism::Auto, ..seq.clone() };
    let a = smoothed_grad(&objective, &params, &seq).unwrap().as_params().flatten();
    let b = smoothed_grad(&objective, &params, &par).unwrap().as_params().flatten();
    assert_eq!(common::bits(&a), common::bits(&b));

    let layout = groups.layout(&params).unwrap();
    let gs = |noise: NoiseSpec| MoreauConfig { noise, ..MoreauConfig::group_sparse(2) };
    let a = group_sparse_moreau_grad(&objective, &params, &gs(seq), &layout).unwrap().mg_flat();
    let b = group_sparse_moreau_grad(&objective, &params, &gs(par), &layout).unwrap().mg_flat();
    assert_eq!(common::bits(&a), common::bits(&b));
}

#[test]
fn model_gradient_is_linear_in_the_loss_weighting() {
    // a duplicated batch has the same mean loss, so the gradient must not move
    let (model, params, _, calibration) = trained_toy_mlp(10);
    let doubled = match &calibration {
        mprune_core::zoo::Batch::Features { inputs, labels } => {
            let mut data = inputs.data().to_vec();
            data.extend_from_slice(inputs.data());
            let mut l = labels.clone();
            l.extend_from_slice(labels);
            mprune_core::zoo::Batch::Features {
                inputs: mprune_core::Tensor::new(vec![l.len(), inputs.shape()[1]], data).unwrap(),
                labels: l,
            }
        }
        _ => unreachable!(),
    };
    let (_, g1) = ModelObjective::new(&model, &calibration).loss_and_grad(&params).unwrap();
    let (_, g2) = ModelObjective::new(&model, &doubled).loss_and_grad(&params).unwrap();
    let diff: f64 = g1.iter().zip(&g2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff}");
}

#[test]
fn large_eta_zeroes_more_groups() {
    let (model, params, groups, calibration) = trained_toy_mlp(12);
    let objective = ModelObjective::new(&model, &calibration);
    let layout = groups.layout(&params).unwrap();
    let counts: Vec<usize> = [0.0, 1.0, 10.0, 100.0]
        .iter()
        .map(|&eta| {
            let cfg = MoreauConfig { eta, ..MoreauConfig::group_sparse(1) };
            group_sparse_moreau_grad(&objective, &params, &cfg, &layout).unwrap().zeroed_groups.unwrap()
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert!(counts[3] > counts[0], "{counts:?}");
}

#[test]
fn moreau_displacement_of_quadratic() {
    // for ½‖w‖² the displacement is -ρw / (1 + ρ); mg stores displacement / ρ
    let w = [1.0, -2.0];
    let r = moreau_grad(
        &TestFunction::Quadratic,
        &TestFunction::params(&w),
        &MoreauConfig::convergence(0.5, mprune_core::moreau::MoreauMode::Plain),
    )
    .unwrap();
    let mg = r.mg_flat();
    assert!((mg[0] + 1.0 / 1.5).abs() < 1e-9 && (mg[1] - 2.0 / 1.5).abs() < 1e-9, "{mg:?}");
}

#[test]
fn gaussian_ball_radius_and_stability_sweep() {
    let (model, params, groups, calibration) = trained_toy_mlp(14);
    let objective = ModelObjective::new(&model, &calibration);
    let mut previous = 0.0;
    for eps in [1e-6, 1e-4, 1e-2, 1.0] {
        let spec = PerturbSpec::GaussianBall { eps, seed: 5 };
        let moved = perturb(&params, &groups, &spec).unwrap();
        let d: Vec<f64> = moved.flatten().iter().zip(params.flatten()).map(|(a, b)| a - b).collect();
        assert!((l2(&d) - eps).abs() <= 1e-9 * eps.max(1.0), "{} vs {eps}", l2(&d));

        let reports = consistency_experiment(
            &objective,
            &params,
            &groups,
            &[Criterion::Plain],
            &PerturbSpec::Identity,
            &spec,
            &ImportanceConfig::new(0.2, 0),
        )
        .unwrap();
        let r = &reports[0];
        assert!(r.importance_distance >= previous * 0.5, "eps {eps}: {} after {previous}", r.importance_distance);
        if eps <= 1e-6 {
            assert_eq!(r.jaccard, 1.0);
        }
        previous = r.importance_distance;
    }
}

#[test]
fn smooth_criterion_scores_are_reproducible() {
    let (model, params, groups, calibration) = trained_toy_mlp(15);
    let objective = ModelObjective::new(&model, &calibration);
    let cfg = ImportanceConfig::new(0.25, 4);
    let a = compute_importance(Criterion::Smooth, &objective, &params, &groups, &cfg).unwrap();
    let b = compute_importance(Criterion::Smooth, &objective, &params, &groups, &cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.prune_set.len(), 8);
}
