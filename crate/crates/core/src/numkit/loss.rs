use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{bce_logits_value, mse_value, softmax_ce_value};
use super::Matrix;
use crate::error::{Error, Result};

/// Loss functions evaluated outside a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `pred` holds `n x K` logits, `target` an `n x 1` column of class indices.
    SoftmaxCe,
    /// `pred` holds probabilities in `[0, 1]`, `target` 0/1 labels.
    BinaryCe,
    /// Row-wise squared error averaged over rows.
    Mse,
}

pub fn loss(kind: LossKind, pred: &Matrix, target: &Matrix) -> Result<f64> {
    match kind {
        LossKind::SoftmaxCe => {
            if target.cols() != 1 {
                return Err(Error::shape("class targets must be a column"));
            }
            let labels = target
                .as_slice()
                .iter()
                .map(|&t| {
                    if t >= 0.0 && t.fract() == 0.0 {
                        Ok(t as usize)
                    } else {
                        Err(Error::domain(format!("class target {t} is not an index")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            softmax_ce_value(pred, &labels)
        }
        LossKind::BinaryCe => {
            if pred.as_slice().iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::domain("binary probabilities must lie in [0, 1]"));
            }
            // logit(p) reproduces the probability exactly through the stable
            // logits formulation; clamp so p in {0, 1} stays finite.
            let logits = pred.map(|p| {
                let p = p.clamp(1e-15, 1.0 - 1e-15);
                (p / (1.0 - p)).ln()
            });
            bce_logits_value(&logits, target)
        }
        LossKind::Mse => mse_value(pred, target),
    }
}

/// Inverted dropout on a plain matrix; identity outside training.
pub fn dropout(x: &Matrix, p: f64, seed: u64, train: bool) -> Result<Matrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!("dropout probability {p} outside [0, 1)")));
    }
    if !train || p == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - p);
    Ok(x.map(|v| if rng.gen::<f64>() < p { 0.0 } else { v * keep }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn analytic_values() {
        let bce = loss(
            LossKind::BinaryCe,
            &Matrix::filled(1, 1, 0.5),
            &Matrix::filled(1, 1, 1.0),
        )
        .unwrap();
        assert!((bce - LN_2).abs() < 1e-12);
        let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        assert_eq!(loss(LossKind::Mse, &x, &x).unwrap(), 0.0);
        let ce = loss(LossKind::SoftmaxCe, &Matrix::zeros(1, 2), &Matrix::zeros(1, 1)).unwrap();
        assert!((ce - LN_2).abs() < 1e-15);
    }

    #[test]
    fn invalid_targets() {
        let bad = loss(LossKind::SoftmaxCe, &Matrix::zeros(1, 2), &Matrix::filled(1, 1, 2.0));
        assert!(matches!(bad, Err(Error::Domain(_))));
        let bad = loss(
            LossKind::BinaryCe,
            &Matrix::filled(1, 1, 0.5),
            &Matrix::filled(1, 1, 0.3),
        );
        assert!(matches!(bad, Err(Error::Domain(_))));
    }

    #[test]
    fn dropout_plain() {
        let x = Matrix::filled(10, 10, 1.0);
        assert_eq!(dropout(&x, 0.0, 1, true).unwrap(), x);
        assert_eq!(dropout(&x, 0.9, 1, false).unwrap(), x);
        assert_eq!(dropout(&x, 0.25, 9, true).unwrap(), dropout(&x, 0.25, 9, true).unwrap());
        assert!(dropout(&x, 1.0, 1, true).is_err());
    }
}
