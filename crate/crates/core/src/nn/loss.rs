//! Losses restricted to food pixels. Masks are per pixel (`N·H·W`, row-major
//! per sample) and broadcast over channels.

use super::{NnError, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Tensor4,
}

fn check_mask(t: &Tensor4, mask: &[bool]) -> Result<usize, NnError> {
    let expected = t.batch() * t.plane();
    if mask.len() != expected {
        return Err(NnError::ShapeMismatch(format!(
            "mask has {} entries, tensor {:?} needs {expected}",
            mask.len(),
            t.shape()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(NnError::EmptyMask);
    }
    Ok(count)
}

/// Mean of squared differences over masked pixels and all channels.
pub fn masked_mse(prediction: &Tensor4, target: &Tensor4, mask: &[bool]) -> Result<LossGrad, NnError> {
    if prediction.shape() != target.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "mse: prediction {:?}, target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let count = check_mask(prediction, mask)?;
    let [n, c, _, _] = prediction.shape();
    let plane = prediction.plane();
    let denom = (count * c) as f64;
    let mut grad = Tensor4::zeros(prediction.shape());
    let mut loss = 0.0;
    let p = prediction.data();
    let t = target.data();
    let g = grad.data_mut();
    for b in 0..n {
        let m = &mask[b * plane..(b + 1) * plane];
        for ch in 0..c {
            let base = (b * c + ch) * plane;
            for (i, &on) in m.iter().enumerate() {
                if on {
                    let d = p[base + i] - t[base + i];
                    loss += d * d;
                    g[base + i] = 2.0 * d / denom;
                }
            }
        }
    }
    let loss = loss / denom;
    if !loss.is_finite() {
        return Err(NnError::NonFinite("masked_mse"));
    }
    Ok(LossGrad { loss, grad })
}

/// Softmax cross-entropy averaged over masked pixels. `labels` is per pixel
/// like the mask; background pixels contribute neither loss nor gradient.
pub fn masked_cross_entropy(
    logits: &Tensor4,
    labels: &[Option<u8>],
    mask: &[bool],
) -> Result<LossGrad, NnError> {
    let count = check_mask(logits, mask)?;
    if labels.len() != mask.len() {
        return Err(NnError::ShapeMismatch(format!(
            "labels has {} entries, mask {}",
            labels.len(),
            mask.len()
        )));
    }
    let [n, c, _, _] = logits.shape();
    let plane = logits.plane();
    let mut grad = Tensor4::zeros(logits.shape());
    let mut loss = 0.0;
    let z = logits.data();
    let g = grad.data_mut();
    let mut probs = vec![0.0; c];
    for b in 0..n {
        for i in 0..plane {
            let px = b * plane + i;
            if !mask[px] {
                continue;
            }
            let label = match labels[px] {
                Some(l) if (l as usize) < c => l as usize,
                other => {
                    return Err(NnError::LabelOutOfRange {
                        label: other.map_or(-1, i64::from),
                        classes: c,
                    })
                }
            };
            let idx = |ch: usize| (b * c + ch) * plane + i;
            let max = (0..c).map(|ch| z[idx(ch)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (ch, p) in probs.iter_mut().enumerate() {
                *p = (z[idx(ch)] - max).exp();
                sum += *p;
            }
            loss += sum.ln() + max - z[idx(label)];
            for (ch, p) in probs.iter().enumerate() {
                let onehot = if ch == label { 1.0 } else { 0.0 };
                g[idx(ch)] = (p / sum - onehot) / count as f64;
            }
        }
    }
    let loss = loss / count as f64;
    if !loss.is_finite() {
        return Err(NnError::NonFinite("masked_cross_entropy"));
    }
    Ok(LossGrad { loss, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(shape: [usize; 4], rng: &mut impl Rng) -> Tensor4 {
        let n = shape.iter().product();
        Tensor4::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let t = random([2, 3, 4, 4], &mut rng);
        let mask = vec![true; 32];
        assert_eq!(masked_mse(&t, &t, &mask).unwrap().loss, 0.0);
    }

    #[test]
    fn mse_single_pixel() {
        let p = Tensor4::from_vec([1, 1, 2, 2], vec![3.0, 9.0, 9.0, 9.0]).unwrap();
        let t = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let lg = masked_mse(&p, &t, &[true, false, false, false]).unwrap();
        assert_eq!(lg.loss, 4.0);
        assert_eq!(lg.grad.data()[1..], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn mse_matches_explicit_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let p = random([3, 2, 5, 4], &mut rng);
        let t = random([3, 2, 5, 4], &mut rng);
        let mask: Vec<bool> = (0..60).map(|_| rng.gen_bool(0.4)).collect();
        let mut sum = 0.0;
        let mut n = 0usize;
        for b in 0..3 {
            for y in 0..5 {
                for x in 0..4 {
                    if mask[b * 20 + y * 4 + x] {
                        for c in 0..2 {
                            sum += (p.at(b, c, y, x) - t.at(b, c, y, x)).powi(2);
                            n += 1;
                        }
                    }
                }
            }
        }
        let got = masked_mse(&p, &t, &mask).unwrap().loss;
        assert!((got - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        let t = Tensor4::zeros([1, 1, 2, 2]);
        assert_eq!(masked_mse(&t, &t, &[false; 4]), Err(NnError::EmptyMask));
        assert_eq!(
            masked_cross_entropy(&t, &[None; 4], &[false; 4]),
            Err(NnError::EmptyMask)
        );
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        for c in 2..6 {
            let z = Tensor4::zeros([1, c, 3, 3]);
            let labels = vec![Some(1u8); 9];
            let lg = masked_cross_entropy(&z, &labels, &[true; 9]).unwrap();
            assert!((lg.loss - (c as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let mut prev = f64::INFINITY;
        for k in [1.0, 5.0, 20.0, 80.0] {
            let z = Tensor4::from_vec([1, 3, 1, 1], vec![0.0, k, 0.0]).unwrap();
            let loss = masked_cross_entropy(&z, &[Some(1)], &[true]).unwrap().loss;
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn background_is_ignored_and_labels_checked() {
        let z = Tensor4::from_vec([1, 2, 1, 2], vec![0.3, 7.0, -1.0, 2.0]).unwrap();
        let lg = masked_cross_entropy(&z, &[Some(0), None], &[true, false]).unwrap();
        assert_eq!(lg.grad.data()[1], 0.0);
        assert_eq!(lg.grad.data()[3], 0.0);
        assert!(matches!(
            masked_cross_entropy(&z, &[Some(2), None], &[true, false]),
            Err(NnError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }
}
