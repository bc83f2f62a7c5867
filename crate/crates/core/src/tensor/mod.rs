//! Minimal reverse-mode differentiation over dense `f64` arrays.
//!
//! A [`Graph`] records every operation applied to its [`Tensor`] handles;
//! [`Graph::backward`] then propagates adjoints from a scalar loss back to all
//! leaves created with [`Graph::param`]. Shapes are always explicit: apart
//! from [`Graph::scale`] there is no implicit broadcasting, and bias terms are
//! expanded with [`Graph::gather`].

mod array;
mod graph;

pub use array::Array;
pub use graph::{Graph, Tensor};

use crate::error::{Error, Result};

impl Graph {
    /// Expands a rank-1 `bias` of length `shape[last]` to `shape`.
    pub fn broadcast_last(&mut self, bias: Tensor, shape: &[usize]) -> Result<Tensor> {
        let m = *shape.last().unwrap_or(&0);
        if self.shape(bias) != [m] {
            return Err(Error::shape(
                "broadcast_last",
                format!("{:?} vs {:?}", self.shape(bias), shape),
            ));
        }
        let rows = shape.iter().product::<usize>() / m.max(1);
        let indices = (0..rows).flat_map(|_| 0..m).collect();
        self.gather(bias, indices, shape)
    }

    /// Expands a per-channel `bias` of length `shape[1]` to `[batch, ch, h, w]`.
    pub fn broadcast_channels(&mut self, bias: Tensor, shape: &[usize]) -> Result<Tensor> {
        if shape.len() != 4 || self.shape(bias) != [shape[1]] {
            return Err(Error::shape(
                "broadcast_channels",
                format!("{:?} vs {:?}", self.shape(bias), shape),
            ));
        }
        let plane = shape[2] * shape[3];
        let indices = (0..shape[0])
            .flat_map(|_| (0..shape[1]).flat_map(move |c| std::iter::repeat_n(c, plane)))
            .collect();
        self.gather(bias, indices, shape)
    }

    /// Affine map along the last axis: `x · w + b`.
    pub fn linear(&mut self, x: Tensor, w: Tensor, b: Tensor) -> Result<Tensor> {
        let y = self.matmul(x, w)?;
        let shape = self.shape(y).to_vec();
        let bb = self.broadcast_last(b, &shape)?;
        self.add(y, bb)
    }

    pub fn sum(&mut self, a: Tensor) -> Result<Tensor> {
        let n = self.value(a).len() as f64;
        let m = self.mean(a)?;
        Ok(self.scale(m, n))
    }

    /// Mean squared difference over every element.
    pub fn mse(&mut self, pred: Tensor, target: Tensor) -> Result<Tensor> {
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }
}

/// Central-difference gradient check of a scalar program with several inputs.
///
/// Returns the maximum over all coordinates of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check_many<F>(f: F, inputs: &[Array], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Tensor]) -> Result<Tensor>,
{
    let eval = |xs: &[Array]| -> Result<f64> {
        let mut g = Graph::new();
        let ts: Vec<Tensor> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let out = f(&mut g, &ts)?;
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let ts: Vec<Tensor> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let loss = f(&mut g, &ts)?;
    g.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (which, t) in ts.iter().enumerate() {
        let analytic = g
            .grad(*t)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[which].len()]);
        for (i, &a) in analytic.iter().enumerate() {
            let orig = inputs[which].data()[i];
            probe[which].data_mut()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe[which].data_mut()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe[which].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Array, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Tensor) -> Result<Tensor>,
{
    grad_check_many(|g, ts| f(g, ts[0]), std::slice::from_ref(x), eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matmul_by_identity() {
        let mut g = Graph::new();
        let a = g.constant(Array::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let i = g.constant(Array::eye(2));
        let y = g.matmul(a, i).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let a = g.constant(Array::zeros(&[3]));
        let y = g.softmax(a).unwrap();
        for &v in g.value(y).data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn delta_kernel_conv_is_identity() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..2 * 3 * 5 * 4)
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let x = g.constant(Array::new(vec![2, 3, 5, 4], data.clone()).unwrap());
        let mut k = Array::zeros(&[3, 3, 3, 3]);
        for c in 0..3 {
            k.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let k = g.constant(k);
        let y = g.conv2d(x, k).unwrap();
        assert_eq!(g.value(y).data(), data.as_slice());
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let mut g = Graph::new();
        let x = g.param(Array::new(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let m = g.mean(x).unwrap();
        g.backward(m).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.25; 4]);
    }

    #[test]
    fn square_sum_gradient_is_twice_input() {
        let mut g = Graph::new();
        let vals = vec![1.5, -2.0, 0.25];
        let x = g.param(Array::new(vec![3], vals.clone()).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        for (gr, v) in g.grad(x).unwrap().iter().zip(&vals) {
            assert_abs_diff_eq!(*gr, 2.0 * v, epsilon = 1e-12);
        }
    }

    #[test]
    fn second_backward_requires_zero_grad() {
        let mut g = Graph::new();
        let x = g.param(Array::ones(&[2]));
        let m = g.mean(x).unwrap();
        g.backward(m).unwrap();
        assert!(matches!(g.backward(m), Err(Error::Accumulation)));
        g.zero_grad();
        g.backward(m).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Array::ones(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn shape_error_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Array::zeros(&[2, 3]));
        let b = g.constant(Array::zeros(&[3, 2]));
        let err = g.add(a, b).unwrap_err().to_string();
        assert!(
            err.contains("add") && err.contains("[2, 3]") && err.contains("[3, 2]"),
            "{err}"
        );
        let err = g.matmul(a, a).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
    }

    #[test]
    fn roll_is_circular() {
        let mut g = Graph::new();
        let a = g.constant(Array::new(vec![1, 4, 1], vec![0.0, 1.0, 2.0, 3.0]).unwrap());
        let r = g.roll(a, 1, 1).unwrap();
        assert_eq!(g.value(r).data(), &[3.0, 0.0, 1.0, 2.0]);
        let r = g.roll(a, -5, 1).unwrap();
        assert_eq!(g.value(r).data(), &[1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn concat_on_inner_axis() {
        let mut g = Graph::new();
        let a = g.constant(Array::new(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.constant(Array::new(vec![2, 1, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let c = g.concat_axis(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 2, 2]);
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
        let d = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(d).data(), &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
        assert_eq!(g.shape(d), &[2, 1, 4]);
    }

    #[test]
    fn grad_check_of_mean_is_exact() {
        let x = Array::new(vec![5], vec![0.3, -1.0, 2.0, 0.0, 4.5]).unwrap();
        let err = grad_check(|g, t| g.mean(t), &x, 1e-5).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn unused_param_has_no_grad() {
        let mut g = Graph::new();
        let x = g.param(Array::ones(&[2]));
        let unused = g.param(Array::ones(&[2]));
        let m = g.mean(x).unwrap();
        g.backward(m).unwrap();
        assert!(g.grad(unused).is_none());
    }
}
