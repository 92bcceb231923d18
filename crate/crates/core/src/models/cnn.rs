//! A small convolutional classifier with hand-written backpropagation.
//!
//! Three 3x3 same-padded convolutions (rectifier, 2x2 max-pool after each),
//! global average pooling, and a linear logistic head. Activations are kept
//! channel-major (`[channel][batch][row][col]`) so every convolution is a
//! single matrix product over an im2col buffer.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, LinalgScalar};
use num_traits::{Float, FromPrimitive};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng;

pub trait Real:
    LinalgScalar + Float + FromPrimitive + Send + Sync + std::fmt::Debug + 'static
{
}
impl Real for f32 {}
impl Real for f64 {}

fn cst<A: Real>(v: f64) -> A {
    A::from_f64(v).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub resolution: usize,
    pub channels: Vec<usize>,
    /// Append normalized row and column coordinate planes to the input.
    #[serde(default)]
    pub coord_channels: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            resolution: 64,
            channels: vec![3, 8, 16, 32],
            coord_channels: false,
        }
    }
}

impl Architecture {
    pub fn n_conv(&self) -> usize {
        self.channels.len() - 1
    }

    /// Channels entering conv layer `l`.
    pub fn in_channels(&self, l: usize) -> usize {
        if l == 0 && self.coord_channels {
            self.channels[0] + 2
        } else {
            self.channels[l]
        }
    }

    /// Spatial side at the input of conv layer `l`.
    pub fn side(&self, l: usize) -> usize {
        self.resolution >> l
    }

    pub fn feature_dim(&self) -> usize {
        *self.channels.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<A> {
    /// `[out, in * 9]`, column index `in * 9 + ky * 3 + kx`.
    pub weight: Array2<A>,
    pub bias: Array1<A>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet<A> {
    pub arch: Architecture,
    pub convs: Vec<ConvLayer<A>>,
    pub head_weight: Array1<A>,
    pub head_bias: Array1<A>,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache<A> {
    batch: usize,
    cols: Vec<Array2<A>>,
    activations: Vec<Array2<A>>,
    argmax: Vec<Vec<u8>>,
    pub features: Array2<A>,
    pub logits: Vec<A>,
}

fn im2col<A: Real>(input: &[A], c: usize, b: usize, side: usize) -> Array2<A> {
    let plane = side * side;
    let n = b * plane;
    let mut cols = Array2::<A>::zeros((c * 9, n));
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let mut row = cols.row_mut(ci * 9 + ky * 3 + kx);
                let dst = row.as_slice_mut().unwrap();
                let (lo, hi) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { side - 1 } else { side });
                for bi in 0..b {
                    let src_plane = &input[(ci * b + bi) * plane..(ci * b + bi + 1) * plane];
                    for y in 0..side {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= side as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let d0 = bi * plane + y * side;
                        let s0 = sy * side + lo + kx - 1;
                        dst[d0 + lo..d0 + hi].copy_from_slice(&src_plane[s0..s0 + (hi - lo)]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im<A: Real>(cols: &Array2<A>, c: usize, b: usize, side: usize) -> Vec<A> {
    let plane = side * side;
    let mut out = vec![A::zero(); c * b * plane];
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = cols.row(ci * 9 + ky * 3 + kx);
                let src = row.as_slice().unwrap();
                let (lo, hi) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { side - 1 } else { side });
                for bi in 0..b {
                    let dst_plane = &mut out[(ci * b + bi) * plane..(ci * b + bi + 1) * plane];
                    for y in 0..side {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= side as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let s0 = bi * plane + y * side;
                        let d0 = sy * side + lo + kx - 1;
                        for (d, &s) in dst_plane[d0..d0 + (hi - lo)]
                            .iter_mut()
                            .zip(&src[s0 + lo..s0 + hi])
                        {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2x2 max-pool of `[c][b][side][side]`, returning the pooled map and the
/// winning offset (0..4) of every output cell.
fn max_pool<A: Real>(input: &[A], planes: usize, side: usize) -> (Vec<A>, Vec<u8>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(planes * half * half);
    let mut arg = Vec::with_capacity(planes * half * half);
    for p in 0..planes {
        let plane = &input[p * side * side..(p + 1) * side * side];
        for y in 0..half {
            for x in 0..half {
                let base = 2 * y * side + 2 * x;
                let cand = [base, base + 1, base + side, base + side + 1];
                let mut best = 0;
                for k in 1..4 {
                    if plane[cand[k]] > plane[cand[best]] {
                        best = k;
                    }
                }
                out.push(plane[cand[best]]);
                arg.push(best as u8);
            }
        }
    }
    (out, arg)
}

fn max_unpool<A: Real>(grad: &[A], arg: &[u8], planes: usize, side: usize) -> Vec<A> {
    let half = side / 2;
    let mut out = vec![A::zero(); planes * side * side];
    for p in 0..planes {
        for y in 0..half {
            for x in 0..half {
                let o = p * half * half + y * half + x;
                let k = arg[o] as usize;
                let idx = p * side * side + (2 * y + k / 2) * side + 2 * x + k % 2;
                out[idx] = grad[o];
            }
        }
    }
    out
}

/// Appends row and column planes, each running from -1 to 1.
fn with_coordinates<A: Real>(input: &[A], batch: usize, side: usize) -> Vec<A> {
    let plane = side * side;
    let mut out = Vec::with_capacity(input.len() + 2 * batch * plane);
    out.extend_from_slice(input);
    let denom = (side.max(2) - 1) as f64;
    for axis in 0..2 {
        for _ in 0..batch {
            for p in 0..plane {
                let t = if axis == 0 { p / side } else { p % side };
                out.push(cst(2.0 * t as f64 / denom - 1.0));
            }
        }
    }
    out
}

pub fn sigmoid<A: Real>(z: A) -> A {
    if z >= A::zero() {
        A::one() / (A::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (A::one() + e)
    }
}

/// Binary cross-entropy of a logit, computed stably.
pub fn bce_with_logit<A: Real>(z: A, target: bool) -> A {
    let y = if target { A::one() } else { A::zero() };
    z.max(A::zero()) - z * y + (A::one() + (-z.abs()).exp()).ln()
}

/// Converts RGB bytes of a batch into the channel-major input layout in [-1, 1].
pub fn pack_images<A: Real>(images: &[&[u8]], side: usize) -> Vec<A> {
    let b = images.len();
    let plane = side * side;
    let mut out = vec![A::zero(); 3 * b * plane];
    let scale = cst::<A>(1.0 / 127.5);
    for (bi, img) in images.iter().enumerate() {
        assert_eq!(img.len(), 3 * plane, "image size does not match the architecture");
        for (p, px) in img.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[(c * b + bi) * plane + p] = cst::<A>(f64::from(px[c])) * scale - A::one();
            }
        }
    }
    out
}

impl<A: Real> ConvNet<A> {
    /// He-normal convolution weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let mut convs = Vec::new();
        for l in 0..arch.n_conv() {
            let (cin, cout) = (arch.in_channels(l), arch.channels[l + 1]);
            let std = (2.0 / (cin * 9) as f64).sqrt();
            let normal = Normal::new(0.0, std).unwrap();
            let weight = Array2::from_shape_fn((cout, cin * 9), |_| cst(normal.sample(&mut r)));
            convs.push(ConvLayer {
                weight,
                bias: Array1::zeros(cout),
            });
        }
        let d = arch.feature_dim();
        let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).unwrap();
        let head_weight = Array1::from_shape_fn(d, |_| cst(normal.sample(&mut r)));
        ConvNet {
            arch,
            convs,
            head_weight,
            head_bias: Array1::zeros(1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ConvNet {
            arch: self.arch.clone(),
            convs: self
                .convs
                .iter()
                .map(|c| ConvLayer {
                    weight: Array2::zeros(c.weight.raw_dim()),
                    bias: Array1::zeros(c.bias.raw_dim()),
                })
                .collect(),
            head_weight: Array1::zeros(self.head_weight.raw_dim()),
            head_bias: Array1::zeros(1),
        }
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn params(&self) -> Vec<&[A]> {
        let mut v: Vec<&[A]> = Vec::new();
        for c in &self.convs {
            v.push(c.weight.as_slice().unwrap());
            v.push(c.bias.as_slice().unwrap());
        }
        v.push(self.head_weight.as_slice().unwrap());
        v.push(self.head_bias.as_slice().unwrap());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut [A]> {
        let mut v: Vec<&mut [A]> = Vec::new();
        for c in &mut self.convs {
            v.push(c.weight.as_slice_mut().unwrap());
            v.push(c.bias.as_slice_mut().unwrap());
        }
        v.push(self.head_weight.as_slice_mut().unwrap());
        v.push(self.head_bias.as_slice_mut().unwrap());
        v
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<A> {
        self.params().concat()
    }

    pub fn load_flat(&mut self, flat: &[A]) -> bool {
        if flat.len() != self.n_params() {
            return false;
        }
        let mut off = 0;
        for p in self.params_mut() {
            p.copy_from_slice(&flat[off..off + p.len()]);
            off += p.len();
        }
        true
    }

    pub fn cast<B: Real>(&self) -> ConvNet<B> {
        let conv = |a: &A| cst::<B>(a.to_f64().unwrap());
        ConvNet {
            arch: self.arch.clone(),
            convs: self
                .convs
                .iter()
                .map(|c| ConvLayer {
                    weight: c.weight.map(conv),
                    bias: c.bias.map(conv),
                })
                .collect(),
            head_weight: self.head_weight.map(conv),
            head_bias: self.head_bias.map(conv),
        }
    }

    /// Forward pass over a packed batch (see [`pack_images`]).
    pub fn forward(&self, input: &[A], batch: usize) -> ForwardCache<A> {
        let arch = &self.arch;
        let mut cols = Vec::new();
        let mut activations = Vec::new();
        let mut argmax = Vec::new();
        let mut current: Vec<A> = if arch.coord_channels {
            with_coordinates(input, batch, arch.resolution)
        } else {
            input.to_vec()
        };
        for (l, conv) in self.convs.iter().enumerate() {
            let side = arch.side(l);
            let cin = arch.in_channels(l);
            let cout = arch.channels[l + 1];
            let col = im2col(&current, cin, batch, side);
            let mut z = Array2::<A>::zeros((cout, batch * side * side));
            general_mat_mul(A::one(), &conv.weight, &col, A::zero(), &mut z);
            for (mut row, &b) in z.rows_mut().into_iter().zip(conv.bias.iter()) {
                row.mapv_inplace(|v| (v + b).max(A::zero()));
            }
            let (pooled, arg) = max_pool(z.as_slice().unwrap(), cout * batch, side);
            cols.push(col);
            activations.push(z);
            argmax.push(arg);
            current = pooled;
        }
        let d = arch.feature_dim();
        let last_side = arch.side(arch.n_conv());
        let plane = last_side * last_side;
        let inv = A::one() / cst::<A>(plane as f64);
        let mut features = Array2::<A>::zeros((d, batch));
        for c in 0..d {
            for b in 0..batch {
                let s = current[(c * batch + b) * plane..(c * batch + b + 1) * plane]
                    .iter()
                    .fold(A::zero(), |acc, &v| acc + v);
                features[[c, b]] = s * inv;
            }
        }
        let logits = (0..batch)
            .map(|b| {
                features
                    .column(b)
                    .iter()
                    .zip(self.head_weight.iter())
                    .fold(self.head_bias[0], |acc, (&f, &w)| acc + f * w)
            })
            .collect();
        ForwardCache {
            batch,
            cols,
            activations,
            argmax,
            features,
            logits,
        }
    }

    /// Mean cross-entropy of the batch and its gradient for every parameter.
    pub fn backward(&self, cache: &ForwardCache<A>, targets: &[bool]) -> (A, ConvNet<A>) {
        self.backward_weighted(cache, targets, &vec![A::one(); cache.batch])
    }

    /// As [`ConvNet::backward`], with every example's loss scaled by its weight
    /// (the sum is still divided by the batch size).
    pub fn backward_weighted(&self, cache: &ForwardCache<A>, targets: &[bool], weights: &[A]) -> (A, ConvNet<A>) {
        let arch = &self.arch;
        let batch = cache.batch;
        let inv_b = A::one() / cst::<A>(batch as f64);
        let mut grad = self.zeros_like();

        let mut loss = A::zero();
        let mut dlogit = vec![A::zero(); batch];
        for b in 0..batch {
            let z = cache.logits[b];
            loss = loss + weights[b] * bce_with_logit(z, targets[b]);
            let y = if targets[b] { A::one() } else { A::zero() };
            dlogit[b] = weights[b] * (sigmoid(z) - y) * inv_b;
        }
        loss = loss * inv_b;

        let d = arch.feature_dim();
        for b in 0..batch {
            grad.head_bias[0] = grad.head_bias[0] + dlogit[b];
            for c in 0..d {
                grad.head_weight[c] = grad.head_weight[c] + dlogit[b] * cache.features[[c, b]];
            }
        }

        // Gradient w.r.t. the last pooled map: the average pool spreads evenly.
        let last_side = arch.side(arch.n_conv());
        let plane = last_side * last_side;
        let inv_plane = A::one() / cst::<A>(plane as f64);
        let mut dpooled = vec![A::zero(); d * batch * plane];
        for c in 0..d {
            for b in 0..batch {
                let g = self.head_weight[c] * dlogit[b] * inv_plane;
                dpooled[(c * batch + b) * plane..(c * batch + b + 1) * plane].fill(g);
            }
        }

        for l in (0..arch.n_conv()).rev() {
            let side = arch.side(l);
            let cin = arch.in_channels(l);
            let cout = arch.channels[l + 1];
            let z = &cache.activations[l];
            let dz_flat = max_unpool(&dpooled, &cache.argmax[l], cout * batch, side);
            let mut dz = Array2::from_shape_vec((cout, batch * side * side), dz_flat).unwrap();
            ndarray::Zip::from(&mut dz).and(z).for_each(|g, &a| {
                if a <= A::zero() {
                    *g = A::zero();
                }
            });
            general_mat_mul(A::one(), &dz, &cache.cols[l].t(), A::zero(), &mut grad.convs[l].weight);
            for (gb, row) in grad.convs[l].bias.iter_mut().zip(dz.rows()) {
                *gb = row.iter().fold(A::zero(), |acc, &v| acc + v);
            }
            if l > 0 {
                let mut dcols = Array2::<A>::zeros((cin * 9, batch * side * side));
                general_mat_mul(A::one(), &self.convs[l].weight.t(), &dz, A::zero(), &mut dcols);
                dpooled = col2im(&dcols, cin, batch, side);
            }
        }
        (loss, grad)
    }

    /// Weighted mean cross-entropy without gradients.
    pub fn loss(&self, input: &[A], batch: usize, targets: &[bool], weights: &[A]) -> A {
        let cache = self.forward(input, batch);
        let s = cache
            .logits
            .iter()
            .zip(targets)
            .zip(weights)
            .fold(A::zero(), |acc, ((&z, &t), &w)| acc + w * bce_with_logit(z, t));
        s / cst::<A>(batch as f64)
    }
}
