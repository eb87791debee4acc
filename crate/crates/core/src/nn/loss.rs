use super::Float;

pub fn softmax_rows<T: Float>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Float>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
) -> (f64, Vec<T>) {
    assert_eq!(logits.len(), labels.len() * classes);
    let batch = labels.len();
    let mut grad = softmax_rows(logits, classes);
    let scale = T::one() / T::from_usize(batch.max(1)).unwrap();
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max)
            .to_f64_lossy();
        let lse = max
            + row
                .iter()
                .map(|v| (v.to_f64_lossy() - max).exp())
                .sum::<f64>()
                .ln();
        loss += lse - row[label].to_f64_lossy();
        grad[b * classes + label] -= T::one();
    }
    grad.iter_mut().for_each(|g| *g = *g * scale);
    (loss / batch.max(1) as f64, grad)
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn argmax_rows<T: Float>(values: &[T], classes: usize) -> Vec<usize> {
    values
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
