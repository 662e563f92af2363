use crate::tensor::Tensor;

/// Non-overlapping max pooling; trailing elements that do not fill a whole
/// window are dropped. Returns the output and, per output element, the flat
/// index of the winning input element.
pub(crate) fn forward(x: &Tensor, pool: usize) -> (Tensor, Vec<usize>) {
    let (batch, len, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let out_len = len / pool;
    let mut y = Tensor::zeros(&[batch, out_len, ch]);
    let mut arg = vec![0usize; batch * out_len * ch];
    let xd = x.data();
    for n in 0..batch {
        for i in 0..out_len {
            for c in 0..ch {
                let mut best = (n * len + i * pool) * ch + c;
                for j in 1..pool {
                    let idx = (n * len + i * pool + j) * ch + c;
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                let o = (n * out_len + i) * ch + c;
                y.data_mut()[o] = xd[best];
                arg[o] = best;
            }
        }
    }
    (y, arg)
}

pub(crate) fn backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    for (&src, &g) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[src] += g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_pairs() {
        let x = Tensor::new(vec![1, 4, 1], vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let (y, arg) = forward(&x, 2);
        assert_eq!(y.data(), &[3.0, 5.0]);
        assert_eq!(arg, vec![1, 3]);
    }

    #[test]
    fn drops_incomplete_tail() {
        let x = Tensor::new(vec![1, 5, 1], vec![1.0, 3.0, 2.0, 5.0, 9.0]).unwrap();
        let (y, _) = forward(&x, 2);
        assert_eq!(y.data(), &[3.0, 5.0]);
    }
}
