//! Fully connected ReLU network with manual backpropagation and Adam.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LearnError;

const MAGIC: &[u8; 4] = b"BKQN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `inputs x outputs`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// ReLU on every hidden layer, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass: the input and the output of
/// every layer (post-activation for hidden layers).
pub struct Cache {
    acts: Vec<Array2<f64>>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("cache holds the input at least")
    }
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Layer>,
}

impl Grads {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().map(|x| x * x).sum::<f64>() + l.b.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w *= k;
            l.b *= k;
        }
    }
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|io| {
                let bound = (6.0 / io[0] as f64).sqrt();
                Layer {
                    w: Array2::from_shape_fn((io[0], io[1]), |_| rng.random_range(-bound..bound)),
                    b: Array1::zeros(io[1]),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Mlp {
        Mlp {
            layers: sizes
                .windows(2)
                .map(|io| Layer {
                    w: Array2::zeros((io[0], io[1])),
                    b: Array1::zeros(io[1]),
                })
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Cache {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&l.w);
            z += &l.b;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Cache { acts }
    }

    /// Outputs for a batch of row inputs.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w);
            z += &l.b;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Gradients of `sum(d_out * output)` with respect to all parameters.
    pub fn backward(&self, cache: &Cache, d_out: &Array2<f64>) -> Grads {
        let n = self.layers.len();
        let mut grads: Vec<Option<Layer>> = vec![None; n];
        let mut delta = d_out.clone();
        for k in (0..n).rev() {
            let input = &cache.acts[k];
            let w_grad = input.t().dot(&delta);
            let b_grad = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut prev = delta.dot(&self.layers[k].w.t());
                Zip::from(&mut prev).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = prev;
            }
            grads[k] = Some(Layer { w: w_grad, b: b_grad });
        }
        Grads {
            layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
        }
    }

    /// Visits every parameter in a fixed order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.w.len() {
                let c = l.w.ncols();
                return &mut l.w[[index / c, index % c]];
            }
            index -= l.w.len();
            if index < l.b.len() {
                return &mut l.b[index];
            }
            index -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            out.write_all(&(l.w.nrows() as u32).to_le_bytes())?;
            out.write_all(&(l.w.ncols() as u32).to_le_bytes())?;
        }
        for l in &self.layers {
            for x in l.w.iter().chain(l.b.iter()) {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 8 * self.n_params());
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Mlp, LearnError> {
        let bad = |m: &str| LearnError::BadPolicyFile(m.to_string());
        let mut word = [0u8; 4];
        input.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        if &word != MAGIC {
            return Err(bad("not a policy file"));
        }
        let read_u32 = |input: &mut R| -> Result<u32, LearnError> {
            let mut w = [0u8; 4];
            input.read_exact(&mut w).map_err(|_| bad("truncated header"))?;
            Ok(u32::from_le_bytes(w))
        };
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = read_u32(&mut input)? as usize;
        if n == 0 || n > 64 {
            return Err(bad("implausible layer count"));
        }
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let i = read_u32(&mut input)? as usize;
            let o = read_u32(&mut input)? as usize;
            if i == 0 || o == 0 || i > 1 << 16 || o > 1 << 16 {
                return Err(bad("implausible layer shape"));
            }
            shapes.push((i, o));
        }
        if shapes.windows(2).any(|s| s[0].1 != s[1].0) {
            return Err(bad("layer shapes do not chain"));
        }
        let mut layers = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for (i, o) in shapes {
            let mut vals = Vec::with_capacity(i * o + o);
            for _ in 0..(i * o + o) {
                input.read_exact(&mut buf).map_err(|_| bad("truncated weights"))?;
                vals.push(f64::from_le_bytes(buf));
            }
            let b = Array1::from(vals.split_off(i * o));
            let w = Array2::from_shape_vec((i, o), vals).expect("sized above");
            layers.push(Layer { w, b });
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest).map_err(|_| bad("read error"))?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Mlp { layers })
    }
}

/// Adam optimiser state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Adam {
        let zeros = Grads {
            layers: Mlp::zeros(&net.sizes()).layers,
        };
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, g: &Grads) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        for (((p, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&g.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            Zip::from(&mut p.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
            Zip::from(&mut p.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Compares analytic gradients of `sum(c * Q(x))` against central
/// differences on a spread of parameters. `grad` computes the analytic
/// gradient so that a faulty implementation can be checked too.
pub fn gradient_check_with(
    net: &Mlp,
    x: &[f64],
    tolerance: f64,
    seed: u64,
    grad: &dyn Fn(&Mlp, &Cache, &Array2<f64>) -> Grads,
) -> bool {
    let n_in = net.sizes()[0];
    let input = Array2::from_shape_vec((1, n_in), x.to_vec()).expect("input width matches");
    let n_out = *net.sizes().last().expect("non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Array2::from_shape_fn((1, n_out), |_| rng.random_range(0.5..1.5));
    let objective = |m: &Mlp| (m.forward(input.view()) * &c).sum();
    let cache = net.forward_cached(input.view());
    let g = grad(net, &cache, &c);
    let flat: Vec<f64> = g.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied()).collect();

    let total = net.n_params();
    let mut idx: Vec<usize> = (0..200).map(|_| rng.random_range(0..total)).collect();
    idx.extend(total - n_out..total);
    let h = 1e-5;
    let mut probe = net.clone();
    for i in idx {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let up = objective(&probe);
        *probe.param_mut(i) = orig - h;
        let down = objective(&probe);
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = flat[i];
        let scale = numeric.abs().max(analytic.abs());
        let err = if scale < 1e-7 {
            (numeric - analytic).abs()
        } else {
            (numeric - analytic).abs() / scale
        };
        if !(err < tolerance) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_output_bias_gradient_is_one() {
        let net = Mlp::zeros(&[3, 4, 2]);
        let x = Array2::from_shape_vec((1, 3), vec![0.3, -0.2, 1.0]).unwrap();
        let cache = net.forward_cached(x.view());
        let g = net.backward(&cache, &Array2::from_elem((1, 2), 1.0));
        assert_eq!(g.layers[1].b.to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn serialization_round_trip() {
        let net = Mlp::new(&[11, 8, 8, 2], 7);
        let bytes = net.to_bytes();
        assert_eq!(Mlp::read_from(bytes.as_slice()).unwrap(), net);
        assert!(Mlp::read_from(&bytes[..bytes.len() - 1]).is_err());
        assert!(Mlp::read_from(&b"nope"[..]).is_err());
    }

    #[test]
    fn adam_reduces_a_quadratic() {
        let mut net = Mlp::new(&[2, 8, 1], 1);
        let mut opt = Adam::new(&net, 1e-2);
        let x = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let y = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        let loss = |n: &Mlp| (n.forward(x.view()) - &y).mapv(|e| e * e).mean().unwrap();
        let before = loss(&net);
        for _ in 0..300 {
            let cache = net.forward_cached(x.view());
            let d = (cache.output() - &y) * (2.0 / 4.0);
            let g = net.backward(&cache, &d);
            opt.step(&mut net, &g);
        }
        assert!(loss(&net) < before * 0.05);
    }
}
