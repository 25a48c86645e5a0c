//! Tape-based reverse-mode automatic differentiation over tensors.
//!
//! Operations append nodes to a [`Tape`]; [`Tape::backward`] walks the
//! recorded nodes once in reverse order, accumulating adjoints. A tape is
//! single-use and owned by one evaluation thread.

use crate::act;
use crate::conv;
use crate::counters;
use crate::error::{Error, Result};
use crate::tensor::{add_bias, matmul, Tensor};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

struct Node {
    value: Tensor,
    op: Op,
}

enum Op {
    Leaf,
    Matmul {
        a: VarId,
        b: VarId,
    },
    Transpose {
        x: VarId,
    },
    AddBias {
        x: VarId,
        bias: VarId,
    },
    Relu {
        x: VarId,
    },
    Silu {
        x: VarId,
    },
    Gelu {
        x: VarId,
    },
    Forge {
        x: VarId,
        threshold: f64,
    },
    Reshape {
        x: VarId,
        from: Vec<usize>,
    },
    Conv2d {
        x: VarId,
        kernel: VarId,
        bias: VarId,
        stride: usize,
        padding: usize,
        cols: Tensor,
    },
    Sum {
        x: VarId,
    },
    SoftmaxCrossEntropy {
        logits: VarId,
        labels: Vec<usize>,
        probs: Tensor,
    },
    /// Mean over the batch of min(max_{j != y} z_j - z_y, 0).
    MarginAttackLoss {
        logits: VarId,
        labels: Vec<usize>,
    },
}

/// Records one forward evaluation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> VarId {
        let id = VarId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Registers an input tensor; gradients can be queried for leaves.
    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Matmul { a, b }))
    }

    pub fn transpose(&mut self, x: VarId) -> Result<VarId> {
        let v = self.value(x).transposed()?;
        Ok(self.push(v, Op::Transpose { x }))
    }

    pub fn add_bias(&mut self, x: VarId, bias: VarId) -> Result<VarId> {
        let v = add_bias(self.value(x), self.value(bias))?;
        Ok(self.push(v, Op::AddBias { x, bias }))
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let v = self.value(x).map(act::relu);
        self.push(v, Op::Relu { x })
    }

    pub fn silu(&mut self, x: VarId) -> VarId {
        let v = self.value(x).map(act::silu);
        self.push(v, Op::Silu { x })
    }

    pub fn gelu(&mut self, x: VarId) -> VarId {
        let v = self.value(x).map(act::gelu);
        self.push(v, Op::Gelu { x })
    }

    /// Thresholding layer with a frozen threshold; the gradient is the
    /// almost-everywhere derivative (identity on the pass band).
    pub fn forge(&mut self, x: VarId, threshold: f64) -> Result<VarId> {
        if threshold < 0.0 {
            return Err(Error::Contract(format!(
                "forge threshold must be non-negative, got {threshold}"
            )));
        }
        let v = self.value(x).map(|e| act::forge_value(e, threshold));
        Ok(self.push(v, Op::Forge { x, threshold }))
    }

    pub fn reshape(&mut self, x: VarId, shape: Vec<usize>) -> Result<VarId> {
        let from = self.value(x).shape().to_vec();
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(v, Op::Reshape { x, from }))
    }

    pub fn conv2d(
        &mut self,
        x: VarId,
        kernel: VarId,
        bias: VarId,
        stride: usize,
        padding: usize,
    ) -> Result<VarId> {
        let (out, cols) =
            conv::conv2d_forward(self.value(x), self.value(kernel), self.value(bias), stride, padding)?;
        Ok(self.push(
            out,
            Op::Conv2d {
                x,
                kernel,
                bias,
                stride,
                padding,
                cols,
            },
        ))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, x: VarId) -> VarId {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(v, Op::Sum { x })
    }

    /// Mean softmax cross-entropy of `[B, C]` logits against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: VarId, labels: &[usize]) -> Result<VarId> {
        let lt = self.value(logits);
        let (b, c) = lt.dims2()?;
        if labels.len() != b {
            return Err(Error::dimension(
                "cross-entropy labels",
                format!("{b}"),
                format!("{}", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for i in 0..b {
            let row = &lt.data()[i * c..(i + 1) * c];
            let lse = act::logsumexp(row);
            loss += lse - row[labels[i]];
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
        }
        loss /= b as f64;
        let probs = Tensor::matrix(b, c, probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Mean margin objective min(max_{j != y} z_j - z_y, 0) over the batch.
    /// Maximizing it drives samples toward (and not past) misclassification.
    pub fn margin_attack_loss(&mut self, logits: VarId, labels: &[usize]) -> Result<VarId> {
        let lt = self.value(logits);
        let (b, c) = lt.dims2()?;
        if labels.len() != b || c < 2 {
            return Err(Error::Contract(format!(
                "margin loss needs one label per row and >= 2 classes (rows {b}, labels {}, classes {c})",
                labels.len()
            )));
        }
        let mut loss = 0.0;
        for i in 0..b {
            let row = &lt.data()[i * c..(i + 1) * c];
            loss += act::margin_attack_from_logits(row, labels[i]);
        }
        loss /= b as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MarginAttackLoss {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar loss node. Visits each recorded node once
    /// in reverse order and returns the accumulated adjoints.
    pub fn backward(&self, loss: VarId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        counters::record_backward();
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut Vec<Option<Tensor>>) -> Result<()> {
        let accumulate = |grads: &mut Vec<Option<Tensor>>, id: VarId, delta: Tensor| {
            match &mut grads[id.0] {
                Some(existing) => {
                    let sum = existing.add(&delta).expect("adjoint shapes match");
                    *existing = sum;
                }
                slot @ None => *slot = Some(delta),
            }
        };

        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let bt = self.value(*b).transposed()?;
                let at = self.value(*a).transposed()?;
                accumulate(grads, *a, matmul(g, &bt)?);
                accumulate(grads, *b, matmul(&at, g)?);
            }
            Op::Transpose { x } => {
                accumulate(grads, *x, g.transposed()?);
            }
            Op::AddBias { x, bias } => {
                accumulate(grads, *x, g.clone());
                let (m, n) = g.dims2()?;
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        db[j] += g.data()[i * n + j];
                    }
                }
                accumulate(grads, *bias, Tensor::vector(db));
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                let dx = Tensor::new(
                    xv.shape().to_vec(),
                    xv.data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &go)| go * act::relu_prime(v))
                        .collect(),
                );
                accumulate(grads, *x, dx);
            }
            Op::Silu { x } => {
                let xv = self.value(*x);
                let dx = Tensor::new(
                    xv.shape().to_vec(),
                    xv.data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &go)| go * act::silu_prime(v))
                        .collect(),
                );
                accumulate(grads, *x, dx);
            }
            Op::Gelu { x } => {
                let xv = self.value(*x);
                let dx = Tensor::new(
                    xv.shape().to_vec(),
                    xv.data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &go)| go * act::gelu_prime(v))
                        .collect(),
                );
                accumulate(grads, *x, dx);
            }
            Op::Forge { x, threshold } => {
                let xv = self.value(*x);
                let dx = Tensor::new(
                    xv.shape().to_vec(),
                    xv.data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &go)| go * act::forge_prime(v, *threshold))
                        .collect(),
                );
                accumulate(grads, *x, dx);
            }
            Op::Reshape { x, from } => {
                accumulate(grads, *x, g.reshape(from.clone())?);
            }
            Op::Conv2d {
                x,
                kernel,
                bias,
                stride,
                padding,
                cols,
            } => {
                let [b, c, h, w] = conv::nchw_dims(self.value(*x))?;
                let [oc, _, kh, kw] = conv::nchw_dims(self.value(*kernel))?;
                let dflat = conv::nchw_to_flat(g)?; // [B*OH*OW, OC]
                let (rows, _) = dflat.dims2()?;
                let mut db = vec![0.0; oc];
                for r in 0..rows {
                    for co in 0..oc {
                        db[co] += dflat.data()[r * oc + co];
                    }
                }
                accumulate(grads, *bias, Tensor::vector(db));
                let dkmat = matmul(&dflat.transposed()?, cols)?; // [OC, C*KH*KW]
                accumulate(grads, *kernel, dkmat.reshape(vec![oc, c, kh, kw])?);
                let kmat = conv::kernel_matrix(self.value(*kernel))?;
                let dcols = matmul(&dflat, &kmat)?;
                accumulate(
                    grads,
                    *x,
                    conv::col2im(&dcols, b, c, h, w, kh, kw, *stride, *padding),
                );
            }
            Op::Sum { x } => {
                let go = g.scalar_value()?;
                let xv = self.value(*x);
                accumulate(
                    grads,
                    *x,
                    Tensor::new(xv.shape().to_vec(), vec![go; xv.len()]),
                );
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let go = g.scalar_value()?;
                let (b, c) = probs.dims2()?;
                let scale = go / b as f64;
                let mut dl = probs.data().to_vec();
                for (i, &y) in labels.iter().enumerate() {
                    dl[i * c + y] -= 1.0;
                }
                for v in &mut dl {
                    *v *= scale;
                }
                accumulate(grads, *logits, Tensor::matrix(b, c, dl));
            }
            Op::MarginAttackLoss { logits, labels } => {
                let go = g.scalar_value()?;
                let lt = self.value(*logits);
                let (b, c) = lt.dims2()?;
                let scale = go / b as f64;
                let mut dl = vec![0.0; b * c];
                for (i, &y) in labels.iter().enumerate() {
                    let row = &lt.data()[i * c..(i + 1) * c];
                    let mut j_star = usize::MAX;
                    let mut best = f64::NEG_INFINITY;
                    for (j, &z) in row.iter().enumerate() {
                        if j != y && z > best {
                            best = z;
                            j_star = j;
                        }
                    }
                    // Active only while the margin objective is below its cap.
                    if best - row[y] < 0.0 {
                        dl[i * c + j_star] += scale;
                        dl[i * c + y] -= scale;
                    }
                }
                accumulate(grads, *logits, Tensor::matrix(b, c, dl));
            }
        }
        Ok(())
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`, or `None` when the node
    /// does not influence the loss.
    pub fn wrt(&self, id: VarId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn quadratic_gradient() {
        // loss = x^T x at x = [1, 2] has gradient [2, 4]
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]));
        let xt = tape.transpose(x).unwrap();
        let prod = tape.matmul(x, xt).unwrap();
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn cross_entropy_gradient_is_probs_minus_onehot() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::matrix(1, 3, vec![0.3, -0.2, 0.9]));
        let loss = tape.softmax_cross_entropy(logits, &[2]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let z = [0.3f64, -0.2, 0.9];
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        let g = grads.wrt(logits).unwrap();
        for j in 0..3 {
            let expect = z[j].exp() / denom - if j == 2 { 1.0 } else { 0.0 };
            assert!((g.data()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_loss_gradient_goes_inactive_after_misclassification() {
        let mut tape = Tape::new();
        // Row 0 correctly classified (active), row 1 already misclassified.
        let logits = tape.leaf(Tensor::matrix(2, 2, vec![2.0, 1.0, 1.0, 3.0]));
        let loss = tape.margin_attack_loss(logits, &[0, 0]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.wrt(logits).unwrap();
        assert_eq!(g.data()[..2], [-0.5, 0.5]);
        assert_eq!(g.data()[2..], [0.0, 0.0]);
    }

    #[test]
    fn matmul_gradients_flow_to_both_operands() {
        // loss = sum(x W): dL/dW = x^T 1, dL/dx = 1 W^T.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, 2, vec![2.0, 3.0]));
        let w = tape.leaf(Tensor::matrix(2, 2, vec![1.0, -1.0, 0.5, 0.25]));
        let p = tape.matmul(x, w).unwrap();
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(w).unwrap().data(), &[2.0, 2.0, 3.0, 3.0]);
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 0.75]);
    }
}
