//! Central finite-difference check of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::tape::{forward, Tape, Var};
use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::params::ParamSet;

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub enum Coordinates {
    All,
    /// `count` flat coordinates drawn without replacement.
    Random {
        count: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
    /// Flat coordinates skipped because a ReLU pre-activation changed sign
    /// across the finite-difference stencil.
    pub excluded: Vec<usize>,
    pub max_relative_error: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

pub fn grad_check<F>(
    params: &ParamSet,
    program: F,
    step: f64,
    tolerance: f64,
    coordinates: Coordinates,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var> + Sync + Send,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, mut tape) = forward(params, &program)?;
    let base_signature = tape.relu_signature();
    let analytic = tape.backward()?.flatten_like(params)?;
    let flat = params.flatten();

    let coords: Vec<usize> = match coordinates {
        Coordinates::All => (0..flat.len()).collect(),
        Coordinates::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = sample(&mut rng, flat.len(), count.min(flat.len())).into_vec();
            picked.sort_unstable();
            picked
        }
    };

    let evaluate = |k: usize, delta: f64| -> Result<(f64, Vec<i8>)> {
        let mut shifted = flat.clone();
        shifted[k] += delta;
        let (loss, tape) = forward(&params.with_flat(&shifted)?, &program)?;
        Ok((loss, tape.relu_signature()))
    };

    // (coordinate, Some(relative error)) or None when excluded at a kink
    let results = exec::try_map_indexed(Parallelism::Auto, coords.len(), |i| {
        let k = coords[i];
        let (plus, sig_plus) = evaluate(k, step)?;
        let (minus, sig_minus) = evaluate(k, -step)?;
        if sig_plus != sig_minus || sig_plus != base_signature {
            return Ok::<_, Error>((k, None));
        }
        let numeric = (plus - minus) / (2.0 * step);
        Ok((k, Some(relative_error(analytic[k], numeric))))
    })?;

    let offsets: Vec<(String, usize, usize)> = {
        let mut off = 0;
        params
            .iter()
            .map(|(n, t)| {
                let entry = (n.to_string(), off, off + t.len());
                off += t.len();
                entry
            })
            .collect()
    };
    let mut per_param: Vec<ParamCheck> =
        offsets.iter().map(|(n, _, _)| ParamCheck { name: n.clone(), checked: 0, max_relative_error: 0.0 }).collect();
    let mut excluded = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, err) in results {
        match err {
            None => excluded.push(k),
            Some(e) => {
                let idx = offsets.iter().position(|(_, lo, hi)| (*lo..*hi).contains(&k)).unwrap();
                per_param[idx].checked += 1;
                per_param[idx].max_relative_error = per_param[idx].max_relative_error.max(e);
                worst = worst.max(e);
            }
        }
    }
    Ok(GradCheckReport {
        step,
        tolerance,
        params: per_param,
        excluded,
        max_relative_error: worst,
        passed: worst < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_program_is_exact_to_rounding() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(vec![0.3, -0.7, 0.2])).unwrap();
        let u = Tensor::from_vec(vec![1.5, -2.0, 0.25]);
        let report = grad_check(
            &p,
            |t| {
                let w = t.param_var("w")?;
                let c = t.constant(u.clone())?;
                let prod = t.mul(w, c)?;
                t.sum(prod)
            },
            1e-5,
            1e-9,
            Coordinates::All,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.max_relative_error < 1e-9);
    }

    #[test]
    fn relu_kink_is_excluded_and_rest_checked() {
        // x = [1, 1]; hidden pre-activation of unit 0 is exactly zero.
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(vec![2, 2], vec![0.5, 0.3, -0.5, 0.4]).unwrap()).unwrap();
        p.insert("v", Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap()).unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let report = grad_check(
            &p,
            |t| {
                let (w, v) = (t.param_var("w")?, t.param_var("v")?);
                let xi = t.constant(x.clone())?;
                let h = t.matmul(xi, w)?;
                let a = t.relu(h)?;
                let o = t.matmul(a, v)?;
                t.sum(o)
            },
            1e-5,
            1e-6,
            Coordinates::All,
        )
        .unwrap();
        // w[0][0] and w[1][0] feed the kinked unit
        assert_eq!(report.excluded, vec![0, 2]);
        assert!(report.passed, "{report:?}");
        let checked: usize = report.params.iter().map(|c| c.checked).sum();
        assert_eq!(checked, 4);
    }
}
