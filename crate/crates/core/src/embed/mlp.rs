//! A plain multilayer perceptron (rectifier between layers, linear output).

use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[in, out]`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Inputs of every layer plus the final output.
pub struct Trace {
    pub inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// He-normal weights, zero biases; `sizes` includes input and output widths.
    pub fn new(sizes: &[usize], r: &mut Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|io| {
                let normal = Normal::new(0.0, (2.0 / io[0] as f64).sqrt()).unwrap();
                Dense {
                    w: Array2::from_shape_fn((io[0], io[1]), |_| normal.sample(r)),
                    b: Array1::zeros(io[1]),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w) + &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        Trace { inputs, output: h }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).output
    }

    /// Parameter gradients and the gradient w.r.t. the input, given dL/d(output).
    pub fn backward(&self, trace: &Trace, grad_out: Array2<f64>) -> (Mlp, Array2<f64>) {
        let mut grads = self.zeros_like();
        let mut g = grad_out;
        for i in (0..self.layers.len()).rev() {
            let input = &trace.inputs[i];
            grads.layers[i].w = input.t().dot(&g);
            grads.layers[i].b = g.sum_axis(Axis(0));
            let mut gin = g.dot(&self.layers[i].w.t());
            if i > 0 {
                // the input of layer i is the rectified output of layer i-1
                ndarray::Zip::from(&mut gin).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            g = gin;
        }
        (grads, g)
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice().unwrap(), l.b.as_slice().unwrap()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_slice_mut().unwrap(), l.b.as_slice_mut().unwrap()])
            .collect()
    }
}

/// Adam state over a fixed list of parameter tensors.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}
