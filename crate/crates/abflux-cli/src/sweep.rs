//! Flux-strength sweeps: re-run a base scenario across a list of alphas and
//! tabulate the measured plateau jump against the closed-form prediction.

use num_complex::Complex64;
use rayon::prelude::*;

use abflux::error::{Error, Result};

use crate::config::{Kind, Scenario};
use crate::runner::{run, RunOutcome};

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: Scenario,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub alpha: f64,
    pub measured: Complex64,
    pub predicted: Complex64,
    pub abs_error: f64,
    pub fringe: Option<f64>,
}

/// Plateau jump of the displacement observable for flux strength alpha.
/// Depends on nothing but alpha.
pub fn predicted_jump(alpha: f64) -> Complex64 {
    0.5 * (Complex64::new(0.0, -alpha).exp() - Complex64::new(1.0, 0.0))
}

pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.alphas.is_empty() {
        return Err(Error::BadSchedule("sweep needs at least one alpha".into()));
    }
    match spec.base.kind {
        Kind::Flyby | Kind::Circle => {}
        other => {
            return Err(Error::BadSchedule(format!(
                "sweep supports flyby and circle runs, not {}",
                other.name()
            )))
        }
    }
    spec.alphas
        .par_iter()
        .map(|&alpha| {
            let mut sc = spec.base.clone();
            sc.alpha = alpha;
            let (measured, fringe) = match run(&sc)? {
                RunOutcome::Flyby(o) => (o.chi_after - o.chi_before, o.fringe),
                RunOutcome::Circle(o) => (o.plateau_mid - o.plateau_initial, None),
                _ => unreachable!("kind checked above"),
            };
            let predicted = predicted_jump(alpha);
            Ok(SweepRow {
                alpha,
                measured,
                predicted,
                abs_error: (measured - predicted).norm(),
                fringe,
            })
        })
        .collect()
}

pub fn csv_table(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("alpha,measured_re,measured_im,predicted_re,predicted_im,abs_error,fringe_shift\n");
    for r in rows {
        let fringe = match r.fringe {
            Some(f) => format!("{:.17e}", f),
            None => "nan".into(),
        };
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
            r.alpha, r.measured.re, r.measured.im, r.predicted.re, r.predicted.im, r.abs_error, fringe
        ));
    }
    out
}
