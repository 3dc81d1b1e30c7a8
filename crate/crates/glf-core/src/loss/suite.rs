//! Gradient verification suite: every loss family against the central
//! finite-difference oracle on seeded random batches.

use rand::Rng;

use super::{
    align_only, baseline_loss, barlow_twins, build_anchor_contexts, info_nce, prepare_baseline,
    simsiam_align, AdcParams, BaselineKind, BaselineParams, LpmVariant,
};
use crate::autodiff::gradcheck::finite_difference_check;
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::rng::rng_from;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_STEP: f64 = 1e-5;

/// One named loss configuration; `check(seed)` returns the max relative
/// error across that configuration's inputs.
pub struct GradCheckEntry {
    pub name: &'static str,
    #[allow(clippy::type_complexity)]
    pub check: Box<dyn Fn(u64) -> Result<f64> + Send + Sync>,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

fn random_batch(m: usize, d: usize, seed: u64, lane: u64) -> Tensor {
    let mut rng = rng_from(&[seed, lane]);
    Tensor::matrix((0..m * d).map(|_| rng.gen_range(-1.2..1.2)).collect(), m, d).unwrap()
}

/// The standard 14-entry registry covering every aligning part, the DCM/LPM
/// variants, the five constraint baselines, and the composed objective.
pub fn standard_entries() -> Vec<GradCheckEntry> {
    let mut entries: Vec<GradCheckEntry> = Vec::new();

    entries.push(GradCheckEntry {
        name: "info_nce",
        check: Box::new(|seed| {
            let z1 = random_batch(5, 4, seed, 1);
            let z2 = random_batch(5, 4, seed, 2);
            let e1 = finite_difference_check(
                |t| info_nce(t, &z2, 0.5),
                &z1,
                DEFAULT_STEP,
            )?;
            let e2 = finite_difference_check(
                |t| info_nce(&z1, t, 0.5),
                &z2,
                DEFAULT_STEP,
            )?;
            Ok(e1.max(e2))
        }),
    });

    entries.push(GradCheckEntry {
        name: "align_only",
        check: Box::new(|seed| {
            let z1 = random_batch(5, 4, seed, 3);
            let z2 = random_batch(5, 4, seed, 4);
            finite_difference_check(|t| align_only(t, &z2, 0.5), &z1, DEFAULT_STEP)
        }),
    });

    entries.push(GradCheckEntry {
        name: "simsiam_align",
        check: Box::new(|seed| {
            // One-layer predictor p = z·W + b; targets frozen at the base.
            let z1 = random_batch(4, 3, seed, 5);
            let z2 = random_batch(4, 3, seed, 6);
            let w = random_batch(3, 3, seed, 7);
            let b = {
                let mut rng = rng_from(&[seed, 8]);
                Tensor::new((0..3).map(|_| rng.gen_range(-0.3..0.3)).collect(), vec![3]).unwrap()
            };
            let t1 = z1.detach();
            let t2 = z2.detach();
            // Check the gradient through the embedding route...
            let e1 = finite_difference_check(
                |z| {
                    let p1 = z.matmul(&w)?.add_rowvec(&b)?;
                    let p2 = z2.matmul(&w)?.add_rowvec(&b)?;
                    simsiam_align(&p1, &p2, &t1, &t2)
                },
                &z1,
                DEFAULT_STEP,
            )?;
            // ...and through the predictor parameters.
            let e2 = finite_difference_check(
                |wv| {
                    let p1 = z1.matmul(wv)?.add_rowvec(&b)?;
                    let p2 = z2.matmul(wv)?.add_rowvec(&b)?;
                    simsiam_align(&p1, &p2, &t1, &t2)
                },
                &w,
                DEFAULT_STEP,
            )?;
            Ok(e1.max(e2))
        }),
    });

    entries.push(GradCheckEntry {
        name: "barlow_twins",
        check: Box::new(|seed| {
            let z1 = random_batch(6, 4, seed, 9);
            let z2 = random_batch(6, 4, seed, 10);
            finite_difference_check(|t| barlow_twins(t, &z2, 5e-3), &z1, DEFAULT_STEP)
        }),
    });

    entries.push(GradCheckEntry {
        name: "dcm",
        check: Box::new(|seed| {
            let z = random_batch(6, 4, seed, 11);
            let ctx = build_anchor_contexts(&z, &z, &AdcParams::default())?;
            finite_difference_check(|t| super::dcm_loss(&ctx, t), &z, DEFAULT_STEP)
        }),
    });

    for (name, variant) in [
        ("lpm_shifted", LpmVariant::Shifted),
        ("lpm_literal", LpmVariant::Literal),
        ("lpm_concentrated", LpmVariant::Concentrated(12.0)),
    ] {
        entries.push(GradCheckEntry {
            name,
            check: Box::new(move |seed| {
                let z = random_batch(6, 4, seed, 12);
                let ctx = build_anchor_contexts(&z, &z, &AdcParams::default())?;
                finite_difference_check(|t| super::lpm_loss(&ctx, t, variant), &z, DEFAULT_STEP)
            }),
        });
    }

    for (name, kind) in [
        ("baseline_a_uniform_sphere", BaselineKind::UniformSphere),
        ("baseline_b_uniform_cube", BaselineKind::UniformCube),
        ("baseline_c_gauss_full", BaselineKind::GaussFull),
        ("baseline_d_gauss_identity", BaselineKind::GaussIdentity),
        ("baseline_e_gauss_mixture", BaselineKind::GaussMixture),
    ] {
        entries.push(GradCheckEntry {
            name,
            check: Box::new(move |seed| {
                let z = random_batch(8, 3, seed, 13);
                let params = BaselineParams {
                    dbscan_eps: 1.5,
                    dbscan_min_pts: 2,
                    ..BaselineParams::default()
                };
                let aux = prepare_baseline(kind, &z, &params)?;
                finite_difference_check(
                    |t| baseline_loss(kind, t, &aux, &params),
                    &z,
                    DEFAULT_STEP,
                )
            }),
        });
    }

    entries.push(GradCheckEntry {
        name: "total_objective_adc",
        check: Box::new(|seed| {
            let z1 = random_batch(4, 4, seed, 14);
            let z2 = random_batch(4, 4, seed, 15);
            let base = Tensor::concat_rows(&[&z1, &z2])?;
            let ctx = build_anchor_contexts(&base, &base, &AdcParams::default())?;
            finite_difference_check(
                |t| {
                    let zcat = Tensor::concat_rows(&[t, &z2])?;
                    let l_ctr = info_nce(t, &z2, 0.5)?;
                    Ok(super::total_objective(
                        &l_ctr,
                        Some(&ctx),
                        Some(&zcat),
                        1.0,
                        1.0,
                        LpmVariant::Shifted,
                    )?
                    .0)
                },
                &z1,
                DEFAULT_STEP,
            )
        }),
    });

    entries
}

/// Runs each entry over the seeds, reporting the worst relative error.
pub fn run_entries(
    entries: &[GradCheckEntry],
    seeds: &[u64],
    tolerance: f64,
) -> Result<Vec<GradCheckReport>> {
    let mut reports = Vec::with_capacity(entries.len());
    for entry in entries {
        let mut worst = 0.0f64;
        for &seed in seeds {
            worst = worst.max((entry.check)(seed)?);
        }
        reports.push(GradCheckReport {
            name: entry.name.to_string(),
            max_rel_err: worst,
            pass: worst < tolerance,
        });
    }
    Ok(reports)
}

/// The full standard suite on the given seeds.
pub fn gradcheck_suite(seeds: &[u64], tolerance: f64) -> Result<Vec<GradCheckReport>> {
    run_entries(&standard_entries(), seeds, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_suite_passes_on_two_seeds() {
        let reports = gradcheck_suite(&[0, 1], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(reports.len(), 14);
        for r in &reports {
            assert!(r.pass, "{}: max rel err {}", r.name, r.max_rel_err);
        }
    }

    #[test]
    fn corrupted_gradient_is_detected_and_named() {
        // f(x) = sum(x + 2·Sg(x)): the analytic gradient is 1 but the value
        // route sees slope 3, exactly how a wrong adjoint manifests.
        let entries = vec![GradCheckEntry {
            name: "corrupted_fixture",
            check: Box::new(|seed| {
                let x = random_batch(3, 2, seed, 99);
                finite_difference_check(
                    |t| t.add(&t.detach().mul_scalar(2.0)?)?.sum(),
                    &x,
                    DEFAULT_STEP,
                )
            }),
        }];
        let reports = run_entries(&entries, &[0], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(reports[0].name, "corrupted_fixture");
        assert!(!reports[0].pass);
    }
}
