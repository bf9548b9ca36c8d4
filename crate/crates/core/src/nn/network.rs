use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Probabilities are clamped here before taking the log in cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Only valid on the output layer.
    Softmax,
}

/// Position of one dense layer inside the flat parameter vector.
///
/// Weights are stored row-major `(outputs x inputs)` followed by `outputs`
/// biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    offset: usize,
}

impl LayerShape {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        self.offset..self.bias_range().end
    }
}

/// Borrowed view of one layer's weights and biases.
#[derive(Debug, Clone, Copy)]
pub struct DenseLayer<'a> {
    pub shape: LayerShape,
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

impl DenseLayer<'_> {
    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weights[out * self.shape.inputs + input]
    }
}

/// A mini-batch of feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Output of a forward pass over a batch.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Matrix,
    pub softmax: Matrix,
}

/// Per-example cross-entropy losses and flattened gradients.
#[derive(Debug, Clone)]
pub struct PerExampleGradients {
    pub losses: Vec<f64>,
    /// One flat gradient per example, laid out like [`Network::params`].
    pub grads: Vec<Vec<f64>>,
    /// Argmax prediction made during the forward pass.
    pub predicted: Vec<usize>,
}

impl PerExampleGradients {
    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

pub(crate) struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
    /// Gradient of the mean loss.
    pub grad: Vec<f64>,
}

/// Feed-forward network: dense layers with ReLU hidden activations and a
/// softmax output trained with cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Reusable activation buffers for single-example passes.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    /// `acts[0]` is the input; `acts[k + 1]` is the output of layer `k`.
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Network {
    /// Builds a network for `sizes = [inputs, hidden..., classes]` with
    /// uniform Glorot initialization and zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in net.layers.clone() {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut net.params[layer.weight_range()] {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape(
                "a network needs at least an input and an output size".into(),
            ));
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Shape(format!("layer size {pos} is zero")));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut offset = 0;
        for (k, pair) in sizes.windows(2).enumerate() {
            let activation = if k + 2 == sizes.len() {
                Activation::Softmax
            } else {
                Activation::Relu
            };
            layers.push(LayerShape {
                inputs: pair[0],
                outputs: pair[1],
                activation,
                offset,
            });
            offset += pair[0] * pair[1] + pair[1];
        }
        Ok(Self {
            layers,
            params: vec![0.0; offset],
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_shapes(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> DenseLayer<'_> {
        let shape = self.layers[k];
        DenseLayer {
            shape,
            weights: &self.params[shape.weight_range()],
            biases: &self.params[shape.bias_range()],
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.inputs.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features, network expects {}",
                batch.inputs.cols(),
                self.input_dim()
            )));
        }
        let classes = self.num_classes();
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Shape(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(())
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let mut acts = vec![vec![0.0; self.input_dim()]];
        acts.extend(self.layers.iter().map(|l| vec![0.0; l.outputs]));
        let deltas = self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        Scratch { acts, deltas }
    }

    /// Runs one example through the network; the last activation buffer
    /// holds the logits and the returned vector the softmax.
    fn forward_into(&self, x: &[f64], scratch: &mut Scratch) -> Vec<f64> {
        scratch.acts[0].copy_from_slice(x);
        for (k, layer) in self.layers.iter().enumerate() {
            let (before, after) = scratch.acts.split_at_mut(k + 1);
            let input = &before[k];
            let out = &mut after[0];
            let w = &self.params[layer.weight_range()];
            let b = &self.params[layer.bias_range()];
            for (j, o) in out.iter_mut().enumerate() {
                let row = &w[j * layer.inputs..(j + 1) * layer.inputs];
                let z = b[j] + super::matrix::dot(row, input);
                *o = match layer.activation {
                    Activation::Relu => z.max(0.0),
                    Activation::Softmax => z,
                };
            }
        }
        softmax(&scratch.acts[self.layers.len()])
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = self.scratch();
        self.forward_into(x, &mut scratch)
    }

    pub fn forward(&self, batch: &Batch) -> Result<Forward> {
        self.check_batch(batch)?;
        let classes = self.num_classes();
        let mut logits = Matrix::zeros(batch.len(), classes);
        let mut probs = Matrix::zeros(batch.len(), classes);
        let mut scratch = self.scratch();
        for (i, x) in batch.inputs.iter_rows().enumerate() {
            let p = self.forward_into(x, &mut scratch);
            logits
                .row_mut(i)
                .copy_from_slice(&scratch.acts[self.layers.len()]);
            probs.row_mut(i).copy_from_slice(&p);
        }
        Ok(Forward {
            logits,
            softmax: probs,
        })
    }

    /// Forward + backward for one example. Adds `scale * dLoss/dParams` into
    /// `grad` and returns the cross-entropy loss and the predicted class.
    pub(crate) fn accumulate_example(
        &self,
        x: &[f64],
        y: usize,
        scale: f64,
        grad: &mut [f64],
        scratch: &mut Scratch,
    ) -> (f64, usize) {
        let probs = self.forward_into(x, scratch);
        let loss = -probs[y].max(PROB_FLOOR).ln();
        let predicted = argmax(&probs);

        let last = self.layers.len() - 1;
        for (j, d) in scratch.deltas[last].iter_mut().enumerate() {
            *d = probs[j] - if j == y { 1.0 } else { 0.0 };
        }
        for k in (0..self.layers.len()).rev() {
            let layer = self.layers[k];
            let input = &scratch.acts[k];
            let delta = &scratch.deltas[k];
            let gw = &mut grad[layer.weight_range()];
            for (j, &dj) in delta.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                let coeff = scale * dj;
                let row = &mut gw[j * layer.inputs..(j + 1) * layer.inputs];
                for (g, &a) in row.iter_mut().zip(input) {
                    *g += coeff * a;
                }
            }
            for (g, &dj) in grad[layer.bias_range()].iter_mut().zip(delta) {
                *g += scale * dj;
            }
            if k > 0 {
                let w = &self.params[layer.weight_range()];
                let (lower, upper) = scratch.deltas.split_at_mut(k);
                let prev = &mut lower[k - 1];
                let delta = &upper[0];
                prev.iter_mut().for_each(|p| *p = 0.0);
                for (j, &dj) in delta.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    let row = &w[j * layer.inputs..(j + 1) * layer.inputs];
                    for (p, &wji) in prev.iter_mut().zip(row) {
                        *p += wji * dj;
                    }
                }
                // ReLU derivative: the stored activation is max(z, 0).
                for (p, &a) in prev.iter_mut().zip(&scratch.acts[k]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
        (loss, predicted)
    }

    pub fn per_example_grads(&self, batch: &Batch) -> Result<PerExampleGradients> {
        self.check_batch(batch)?;
        let mut scratch = self.scratch();
        let mut losses = Vec::with_capacity(batch.len());
        let mut grads = Vec::with_capacity(batch.len());
        let mut predicted = Vec::with_capacity(batch.len());
        for (x, &y) in batch.inputs.iter_rows().zip(&batch.labels) {
            let mut g = vec![0.0; self.params.len()];
            let (loss, pred) = self.accumulate_example(x, y, 1.0, &mut g, &mut scratch);
            losses.push(loss);
            predicted.push(pred);
            grads.push(g);
        }
        Ok(PerExampleGradients {
            losses,
            grads,
            predicted,
        })
    }

    /// Mean loss and gradient of the mean loss over the batch.
    ///
    /// Per-example contributions are summed in batch order and the sum is
    /// scaled once by `1/len`, the same arithmetic the private path performs
    /// when noise and clipping are disabled.
    pub fn batch_gradient(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let stats = self.batch_gradient_stats(batch)?;
        Ok((stats.loss_sum / batch.len() as f64, stats.grad))
    }

    pub(crate) fn batch_gradient_stats(&self, batch: &Batch) -> Result<BatchStats> {
        self.check_batch(batch)?;
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let mut scratch = self.scratch();
        let mut sum = vec![0.0; self.params.len()];
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (x, &y) in batch.inputs.iter_rows().zip(&batch.labels) {
            let (loss, pred) = self.accumulate_example(x, y, 1.0, &mut sum, &mut scratch);
            loss_sum += loss;
            correct += usize::from(pred == y);
        }
        let inv = 1.0 / batch.len() as f64;
        sum.iter_mut().for_each(|g| *g *= inv);
        Ok(BatchStats {
            loss_sum,
            correct,
            grad: sum,
        })
    }

    /// Per-example cross-entropy losses without gradients.
    pub fn losses(&self, batch: &Batch) -> Result<Vec<f64>> {
        let fwd = self.forward(batch)?;
        Ok(batch
            .labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -fwd.softmax.row(i)[y].max(PROB_FLOOR).ln())
            .collect())
    }
}

/// Numerically stable softmax (shifted by the row maximum).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[allow(clippy::needless_range_loop)]
    fn straight_line_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        // Independent re-implementation: explicit matmul, relu, softmax.
        let mut a = x.to_vec();
        for k in 0..net.num_layers() {
            let l = net.layer(k);
            let mut z = vec![0.0; l.shape.outputs];
            for j in 0..l.shape.outputs {
                let mut s = l.biases[j];
                for i in 0..l.shape.inputs {
                    s += l.weight(j, i) * a[i];
                }
                z[j] = s;
            }
            if k + 1 < net.num_layers() {
                for v in &mut z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            } else {
                let m = z.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                z = e.into_iter().map(|v| v / s).collect();
            }
            a = z;
        }
        a
    }

    fn batch(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Batch {
        Batch::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Network::zeros(&[3, 5, 4]).unwrap();
        let b = batch(vec![vec![1.0, -2.0, 0.5], vec![9.0, 9.0, 9.0]], vec![0, 3]);
        let fwd = net.forward(&b).unwrap();
        for row in fwd.softmax.iter_rows() {
            for &p in row {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_layer_picks_hot_input() {
        let k = 4;
        let mut params = vec![0.0; k * k + k];
        for i in 0..k {
            params[i * k + i] = 1.0;
        }
        let net = Network::from_params(&[k, k], params).unwrap();
        for hot in 0..k {
            let mut x = vec![0.0; k];
            x[hot] = 1.0;
            assert_eq!(argmax(&net.predict_proba(&x)), hot);
        }
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let mut rng = seeded(11);
        let net = Network::new(&[4, 6, 3], &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let b = batch(rows.clone(), vec![0, 1, 2, 0]);
        let fwd = net.forward(&b).unwrap();
        for (i, x) in rows.iter().enumerate() {
            let expect = straight_line_forward(&net, x);
            for (a, e) in fwd.softmax.row(i).iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }
            let s: f64 = fwd.softmax.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::zeros(&[3, 2]).unwrap();
        let b = batch(vec![vec![1.0, 2.0]], vec![0]);
        assert!(matches!(net.forward(&b), Err(Error::Shape(_))));
        let b = batch(vec![vec![1.0, 2.0, 3.0]], vec![2]);
        assert!(matches!(net.forward(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn confident_correct_prediction_has_no_loss() {
        let mut params = vec![0.0; 2 * 2 + 2];
        params[4] = 50.0; // bias toward class 0
        let net = Network::from_params(&[2, 2], params).unwrap();
        let g = net
            .per_example_grads(&batch(vec![vec![0.3, 0.1]], vec![0]))
            .unwrap();
        assert!(g.losses[0] < 1e-12);
        let norm: f64 = g.grads[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-12);
    }

    #[test]
    fn duplicated_record_gives_identical_gradients() {
        let mut rng = seeded(3);
        let net = Network::new(&[3, 4, 2], &mut rng).unwrap();
        let g = net
            .per_example_grads(&batch(vec![vec![0.2, -1.0, 0.7]; 2], vec![1, 1]))
            .unwrap();
        assert_eq!(g.grads[0], g.grads[1]);
        assert_eq!(g.losses[0], g.losses[1]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seeded(5);
        // [4, 2] has exactly 10 parameters; [2, 2, 2] exercises the relu path.
        for sizes in [vec![4usize, 2], vec![2, 2, 2]] {
            let net = Network::new(&sizes, &mut rng).unwrap();
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = batch(vec![x], vec![1]);
            let g = net.per_example_grads(&b).unwrap();
            let h = 1e-4;
            for p in 0..net.num_params() {
                let mut plus = net.clone();
                plus.params_mut()[p] += h;
                let mut minus = net.clone();
                minus.params_mut()[p] -= h;
                let fd = (plus.losses(&b).unwrap()[0] - minus.losses(&b).unwrap()[0]) / (2.0 * h);
                let an = g.grads[0][p];
                let denom = an.abs().max(fd.abs()).max(1e-6);
                assert!((an - fd).abs() / denom < 1e-3, "param {p}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn mean_of_per_example_grads_is_batch_grad() {
        let mut rng = seeded(9);
        let net = Network::new(&[3, 5, 3], &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let b = batch(rows, vec![0, 1, 2, 2, 1, 0]);
        let per = net.per_example_grads(&b).unwrap();
        let (loss, mean) = net.batch_gradient(&b).unwrap();
        let mean_loss: f64 = per.losses.iter().sum::<f64>() / 6.0;
        assert!((loss - mean_loss).abs() < 1e-12);
        for p in 0..net.num_params() {
            let m: f64 = per.grads.iter().map(|g| g[p]).sum::<f64>() / 6.0;
            assert!((m - mean[p]).abs() < 1e-6);
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.1; 10]), 0);
    }
}
