use crate::tensor::Tensor;

/// Source row of every pooled element.
pub type PoolIndex = Vec<usize>;

/// Max over non-overlapping pairs of time steps; an odd final step passes
/// through. Ties pick the earlier step.
pub fn maxpool_time(x: &Tensor) -> (Tensor, PoolIndex) {
    let (t_len, c) = (x.rows(), x.cols());
    let out_len = t_len.div_ceil(2);
    let mut out = Tensor::zeros(&[out_len, c]);
    let mut idx = vec![0; out_len * c];
    for t in 0..out_len {
        let a = 2 * t;
        for ch in 0..c {
            let va = x.at(a, ch);
            let (src, v) = if a + 1 < t_len && x.at(a + 1, ch) > va { (a + 1, x.at(a + 1, ch)) } else { (a, va) };
            out.data[t * c + ch] = v;
            idx[t * c + ch] = src;
        }
    }
    (out, idx)
}

pub fn maxpool_time_backward(input_rows: usize, idx: &PoolIndex, grad_out: &Tensor) -> Tensor {
    let c = grad_out.cols();
    let mut dx = Tensor::zeros(&[input_rows, c]);
    for (i, &src) in idx.iter().enumerate() {
        dx.data[src * c + i % c] += grad_out.data[i];
    }
    dx
}
