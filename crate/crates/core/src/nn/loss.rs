use crate::error::{Error, Result};
use crate::tensor::{log_softmax_into, softmax_into, Tensor};

pub fn softmax_rows(logits: &Tensor, temperature: f64) -> Tensor {
    let mut out = Tensor::zeros(logits.shape());
    for r in 0..logits.rows() {
        softmax_into(logits.row(r), temperature, out.row_mut(r));
    }
    out
}

/// Mean cross-entropy over the batch, with its gradient
/// `(softmax - onehot) / batch_size`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (batch, width) = (logits.rows(), logits.cols());
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= width) {
        return Err(Error::Label(format!("label {bad} outside logit width {width}")));
    }
    if batch == 0 {
        return Ok((0.0, Tensor::zeros(logits.shape())));
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut logp = vec![0.0; width];
    let mut loss = 0.0;
    let scale = 1.0 / batch as f64;
    for (r, &label) in labels.iter().enumerate() {
        log_softmax_into(logits.row(r), 1.0, &mut logp);
        loss -= logp[label];
        let g = grad.row_mut(r);
        for (gi, lp) in g.iter_mut().zip(&logp) {
            *gi = lp.exp() * scale;
        }
        g[label] -= scale;
    }
    Ok((loss * scale, grad))
}

fn check_pair(student: &Tensor, teacher: &Tensor) -> Result<()> {
    if student.shape() != teacher.shape() {
        return Err(Error::Shape(format!(
            "student {:?} and teacher {:?} differ",
            student.shape(),
            teacher.shape()
        )));
    }
    Ok(())
}

/// Mean over rows of `KL(softmax(s/T) || softmax(t/T))`, with the gradient
/// with respect to the student only. The teacher is a constant.
pub fn feature_kl(student: &Tensor, teacher: &Tensor, temperature: f64) -> Result<(f64, Tensor)> {
    check_pair(student, teacher)?;
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Config(format!(
            "distillation temperature must be positive, got {temperature}"
        )));
    }
    let (batch, width) = (student.rows(), student.cols());
    let mut grad = Tensor::zeros(student.shape());
    if batch == 0 {
        return Ok((0.0, grad));
    }
    let mut logp = vec![0.0; width];
    let mut logq = vec![0.0; width];
    let mut loss = 0.0;
    let scale = 1.0 / batch as f64;
    for r in 0..batch {
        log_softmax_into(student.row(r), temperature, &mut logp);
        log_softmax_into(teacher.row(r), temperature, &mut logq);
        let kl: f64 = logp
            .iter()
            .zip(&logq)
            .map(|(lp, lq)| lp.exp() * (lp - lq))
            .sum();
        // d KL / d z_j = p_j * (log p_j - log q_j - KL), z = s / T
        loss += kl.max(0.0);
        for ((g, lp), lq) in grad.row_mut(r).iter_mut().zip(&logp).zip(&logq) {
            *g = lp.exp() * (lp - lq - kl) * scale / temperature;
        }
    }
    Ok((loss * scale, grad))
}

/// Mean over rows of the mean squared difference between feature vectors.
pub fn feature_l2(student: &Tensor, teacher: &Tensor) -> Result<(f64, Tensor)> {
    check_pair(student, teacher)?;
    let (batch, width) = (student.rows(), student.cols());
    let mut grad = Tensor::zeros(student.shape());
    if batch == 0 || width == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / (batch * width) as f64;
    let mut loss = 0.0;
    for ((g, s), t) in grad.values_mut().iter_mut().zip(student.values()).zip(teacher.values()) {
        let d = s - t;
        loss += d * d;
        *g = 2.0 * d * scale;
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn uniform_two_logits() {
        let (loss, grad) = cross_entropy(&t(&[&[0.0, 0.0]]), &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(grad.values(), &[-0.5, 0.5]);
    }

    #[test]
    fn confident_logits() {
        // ln(1 + e^-20), evaluated by hand: 2.0611536e-9
        let (loss, _) = cross_entropy(&t(&[&[10.0, -10.0]]), &[0]).unwrap();
        assert!(loss <= 1e-8);
        assert!((loss - 2.061_153_620_314_381e-9).abs() < 1e-15);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            cross_entropy(&t(&[&[0.0, 0.0]]), &[2]),
            Err(Error::Label(_))
        ));
        assert!(matches!(
            cross_entropy(&t(&[&[0.0, 0.0]]), &[0, 1]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn ce_gradient_is_averaged_over_batch() {
        let (_, grad) = cross_entropy(&t(&[&[0.0, 0.0], &[0.0, 0.0]]), &[0, 1]).unwrap();
        assert_eq!(grad.values(), &[-0.25, 0.25, 0.25, -0.25]);
    }

    #[test]
    fn kl_identity() {
        let s = t(&[&[0.3, -1.2, 4.0], &[2.0, 2.0, -7.0]]);
        let (loss, grad) = feature_kl(&s, &s, 1.7).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.values().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn kl_of_swapped_pair() {
        // p = (e/(1+e), 1/(1+e)), q = reversed; sum p ln(p/q) = p1 - p2 = tanh(1/2)
        let (loss, _) = feature_kl(&t(&[&[1.0, 0.0]]), &t(&[&[0.0, 1.0]]), 1.0).unwrap();
        assert!((loss - 0.5f64.tanh()).abs() < 1e-12);
        assert!((loss - 0.462_117_157_260_009_8).abs() < 1e-12);
    }

    #[test]
    fn kl_vanishes_with_temperature() {
        let s = t(&[&[1.0, 0.0, -2.0]]);
        let q = t(&[&[0.0, 1.0, 3.0]]);
        let mut last = f64::INFINITY;
        for temp in [0.5, 1.0, 2.0, 4.0, 16.0, 256.0, 1e6] {
            let (loss, _) = feature_kl(&s, &q, temp).unwrap();
            assert!(loss <= last, "not monotone at T={temp}");
            last = loss;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn kl_rejects_bad_temperature() {
        let s = t(&[&[1.0]]);
        assert!(matches!(feature_kl(&s, &s, 0.0), Err(Error::Config(_))));
        assert!(matches!(feature_kl(&s, &s, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn l2_basic() {
        let (loss, grad) = feature_l2(&t(&[&[1.0, 0.0]]), &t(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(loss, 0.5);
        assert_eq!(grad.values(), &[1.0, 0.0]);
    }
}
