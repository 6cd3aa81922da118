//! Recurrent categorical policy over the scenario parameters and its
//! REINFORCE trainer.
//!
//! The state is the previous action. Slot `k` of the recurrence reads the
//! embedding of the previous bin index of parameter `k`; the hidden state
//! carries across slots and head `k` maps it to logits over parameter
//! `k`'s bins. Gradients of the log-probability are derived by hand: the
//! logit gradient of each head is `onehot(index) - softmax`, pushed back
//! through the heads, the tanh recurrence and the embeddings.

use rand::distributions::Distribution as _;
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Weight initialization half-width; biases start at zero.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    /// Bin count of every parameter, in slot order.
    pub head_sizes: Vec<usize>,
    pub hidden: usize,
    pub layers: usize,
}

/// Offsets of every parameter block inside the flat θ vector.
#[derive(Clone, Debug, PartialEq)]
struct Layout {
    embed: Vec<usize>,
    wx: Vec<usize>,
    wh: Vec<usize>,
    b: Vec<usize>,
    head_w: Vec<usize>,
    head_b: Vec<usize>,
    len: usize,
}

impl Layout {
    fn new(shape: &PolicyShape) -> Self {
        let h = shape.hidden;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let embed = shape.head_sizes.iter().map(|&k| take(k * h)).collect();
        let mut wx = vec![];
        let mut wh = vec![];
        let mut b = vec![];
        for _ in 0..shape.layers {
            wx.push(take(h * h));
            wh.push(take(h * h));
            b.push(take(h));
        }
        let mut head_w = vec![];
        let mut head_b = vec![];
        for &k in &shape.head_sizes {
            head_w.push(take(k * h));
            head_b.push(take(k));
        }
        Layout {
            embed,
            wx,
            wh,
            b,
            head_w,
            head_b,
            len: at,
        }
    }

    /// Flat ranges holding biases (initialized to zero).
    fn bias_ranges(&self, shape: &PolicyShape) -> Vec<std::ops::Range<usize>> {
        let h = shape.hidden;
        let mut r: Vec<_> = self.b.iter().map(|&o| o..o + h).collect();
        r.extend(self.head_b.iter().zip(&shape.head_sizes).map(|(&o, &k)| o..o + k));
        r
    }
}

/// Recurrent policy with one categorical head per scenario parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<T> {
    shape: PolicyShape,
    layout: Layout,
    theta: Vec<T>,
}

/// Activations kept for the backward pass.
struct ForwardCache<T> {
    /// `hs[l][k]`: hidden state of layer `l` after slot `k`.
    hs: Vec<Vec<Vec<T>>>,
    probs: Vec<Vec<T>>,
}

// y += W x, W row-major (rows × cols)
fn gemv_acc<T: Scalar>(w: &[T], x: &[T], y: &mut [T]) {
    let cols = x.len();
    for (yi, row) in y.iter_mut().zip(w.chunks_exact(cols)) {
        *yi = *yi + row.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
    }
}

// y += Wᵀ g
fn gemv_t_acc<T: Scalar>(w: &[T], g: &[T], y: &mut [T]) {
    let cols = y.len();
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        for (yj, &wij) in y.iter_mut().zip(row) {
            *yj = *yj + gi * wij;
        }
    }
}

// W += g xᵀ
fn outer_acc<T: Scalar>(w: &mut [T], g: &[T], x: &[T]) {
    let cols = x.len();
    for (&gi, row) in g.iter().zip(w.chunks_exact_mut(cols)) {
        for (wij, &xj) in row.iter_mut().zip(x) {
            *wij = *wij + gi * xj;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

impl<T: Scalar> Policy<T> {
    pub fn new<R: Rng + ?Sized>(shape: PolicyShape, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(shape)?;
        let u = Uniform::new_inclusive(-INIT_SCALE, INIT_SCALE);
        for v in p.theta.iter_mut() {
            *v = T::lit(u.sample(rng));
        }
        for r in p.layout.bias_ranges(&p.shape) {
            p.theta[r].iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(p)
    }

    /// All-zero parameters; every head is exactly uniform.
    pub fn zeros(shape: PolicyShape) -> Result<Self> {
        if shape.head_sizes.is_empty() || shape.head_sizes.contains(&0) {
            return Err(Error::config("policy.head_sizes", "every head needs at least one bin"));
        }
        if shape.hidden == 0 {
            return Err(Error::config("train.hidden_size", "must be at least 1"));
        }
        if shape.layers == 0 {
            return Err(Error::config("train.layers", "must be at least 1"));
        }
        let layout = Layout::new(&shape);
        let theta = vec![T::zero(); layout.len];
        Ok(Self { shape, layout, theta })
    }

    pub fn from_theta(shape: PolicyShape, theta: Vec<T>) -> Result<Self> {
        let mut p = Self::zeros(shape)?;
        if theta.len() != p.theta.len() {
            return Err(Error::Validation(format!(
                "parameter vector has {} entries, shape needs {}",
                theta.len(),
                p.theta.len()
            )));
        }
        p.theta = theta;
        Ok(p)
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [T] {
        &mut self.theta
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// Bias of head `k`, one entry per bin.
    pub fn head_bias_mut(&mut self, k: usize) -> &mut [T] {
        let o = self.layout.head_b[k];
        &mut self.theta[o..o + self.shape.head_sizes[k]]
    }

    fn check_state(&self, prev: &[usize]) -> Result<()> {
        if prev.len() != self.shape.head_sizes.len() {
            return Err(Error::config(
                "policy",
                format!(
                    "state has {} slots but the policy has {} heads",
                    prev.len(),
                    self.shape.head_sizes.len()
                ),
            ));
        }
        for (k, (&i, &n)) in prev.iter().zip(&self.shape.head_sizes).enumerate() {
            if i >= n {
                return Err(Error::config(
                    "policy",
                    format!("state index {i} at slot {k} exceeds head size {n}"),
                ));
            }
        }
        Ok(())
    }

    fn run(&self, prev: &[usize]) -> Result<(Vec<Vec<T>>, ForwardCache<T>)> {
        self.check_state(prev)?;
        let h = self.shape.hidden;
        let layers = self.shape.layers;
        let th = &self.theta;
        let mut hs: Vec<Vec<Vec<T>>> = vec![Vec::with_capacity(prev.len()); layers];
        let mut logits_all = Vec::with_capacity(prev.len());
        let mut probs = Vec::with_capacity(prev.len());
        let zero_h = vec![T::zero(); h];

        for (k, &idx) in prev.iter().enumerate() {
            let e = self.layout.embed[k] + idx * h;
            let mut input: Vec<T> = th[e..e + h].to_vec();
            for l in 0..layers {
                let (wx, wh, b) = (self.layout.wx[l], self.layout.wh[l], self.layout.b[l]);
                let mut a = th[b..b + h].to_vec();
                gemv_acc(&th[wx..wx + h * h], &input, &mut a);
                let prev_h = if k == 0 { &zero_h } else { &hs[l][k - 1] };
                gemv_acc(&th[wh..wh + h * h], prev_h, &mut a);
                let out: Vec<T> = a.into_iter().map(T::tanh).collect();
                hs[l].push(out.clone());
                input = out;
            }
            let kk = self.shape.head_sizes[k];
            let (uw, ub) = (self.layout.head_w[k], self.layout.head_b[k]);
            let mut logits = th[ub..ub + kk].to_vec();
            gemv_acc(&th[uw..uw + kk * h], &input, &mut logits);
            probs.push(softmax(&logits));
            logits_all.push(logits);
        }
        Ok((logits_all, ForwardCache { hs, probs }))
    }

    /// Per-head logits for the given previous action.
    pub fn logits(&self, prev: &[usize]) -> Result<Vec<Vec<T>>> {
        Ok(self.run(prev)?.0)
    }

    /// Per-head categorical distributions for the given previous action.
    pub fn forward(&self, prev: &[usize]) -> Result<Vec<Vec<T>>> {
        Ok(self.run(prev)?.1.probs)
    }

    pub fn log_prob(&self, prev: &[usize], indices: &[usize]) -> Result<T> {
        let probs = self.forward(prev)?;
        check_indices(&probs, indices)?;
        Ok(probs.iter().zip(indices).map(|(p, &i)| p[i].ln()).sum())
    }

    /// Most probable bin of every head.
    pub fn modal_action(&self, prev: &[usize]) -> Result<Vec<usize>> {
        Ok(self.forward(prev)?.iter().map(|p| argmax(p)).collect())
    }

    /// Gradient of `log π(indices | prev)` with respect to θ.
    pub fn grad_log_prob(&self, prev: &[usize], indices: &[usize]) -> Result<Vec<T>> {
        let mut grad = vec![T::zero(); self.theta.len()];
        self.accumulate_grad_log_prob(prev, indices, T::one(), &mut grad)?;
        Ok(grad)
    }

    /// `grad += scale · ∇θ log π(indices | prev)`.
    pub fn accumulate_grad_log_prob(&self, prev: &[usize], indices: &[usize], scale: T, grad: &mut [T]) -> Result<()> {
        let (_, cache) = self.run(prev)?;
        check_indices(&cache.probs, indices)?;
        let h = self.shape.hidden;
        let layers = self.shape.layers;
        let slots = prev.len();
        let th = &self.theta;
        let top = layers - 1;

        // gradient flowing into the top hidden state of each slot from its head
        let mut dh_head: Vec<Vec<T>> = Vec::with_capacity(slots);
        for k in 0..slots {
            let kk = self.shape.head_sizes[k];
            let g: Vec<T> = cache.probs[k]
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let onehot = if j == indices[k] { T::one() } else { T::zero() };
                    scale * (onehot - p)
                })
                .collect();
            let (uw, ub) = (self.layout.head_w[k], self.layout.head_b[k]);
            outer_acc(&mut grad[uw..uw + kk * h], &g, &cache.hs[top][k]);
            for (gb, &gi) in grad[ub..ub + kk].iter_mut().zip(&g) {
                *gb = *gb + gi;
            }
            let mut dh = vec![T::zero(); h];
            gemv_t_acc(&th[uw..uw + kk * h], &g, &mut dh);
            dh_head.push(dh);
        }

        // backprop through time, top layer first within each slot
        let mut dh_next: Vec<Vec<T>> = vec![vec![T::zero(); h]; layers];
        for k in (0..slots).rev() {
            let mut from_above = dh_head[k].clone();
            for l in (0..layers).rev() {
                let hk = &cache.hs[l][k];
                let da: Vec<T> = from_above
                    .iter()
                    .zip(&dh_next[l])
                    .zip(hk)
                    .map(|((&a, &b), &y)| (a + b) * (T::one() - y * y))
                    .collect();
                let (wx, wh, b) = (self.layout.wx[l], self.layout.wh[l], self.layout.b[l]);
                let input: &[T] = if l == 0 {
                    let e = self.layout.embed[k] + prev[k] * h;
                    &th[e..e + h]
                } else {
                    &cache.hs[l - 1][k]
                };
                outer_acc(&mut grad[wx..wx + h * h], &da, input);
                if k > 0 {
                    outer_acc(&mut grad[wh..wh + h * h], &da, &cache.hs[l][k - 1]);
                }
                for (gb, &d) in grad[b..b + h].iter_mut().zip(&da) {
                    *gb = *gb + d;
                }
                let mut carry = vec![T::zero(); h];
                gemv_t_acc(&th[wh..wh + h * h], &da, &mut carry);
                dh_next[l] = carry;
                let mut below = vec![T::zero(); h];
                gemv_t_acc(&th[wx..wx + h * h], &da, &mut below);
                from_above = below;
            }
            let e = self.layout.embed[k] + prev[k] * h;
            for (ge, &d) in grad[e..e + h].iter_mut().zip(&from_above) {
                *ge = *ge + d;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, fingerprint: u64) -> Checkpoint {
        Checkpoint {
            fingerprint,
            shape: self.shape.clone(),
            theta: self.theta.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, fingerprint: u64) -> Result<Self> {
        if ck.fingerprint != fingerprint {
            return Err(Error::Validation(format!(
                "checkpoint was trained on parameter space {:016x}, current space is {:016x}",
                ck.fingerprint, fingerprint
            )));
        }
        Self::from_theta(ck.shape.clone(), ck.theta.iter().map(|&v| T::lit(v)).collect())
    }
}

fn check_indices<T>(probs: &[Vec<T>], indices: &[usize]) -> Result<()> {
    if indices.len() != probs.len() || indices.iter().zip(probs).any(|(&i, p)| i >= p.len()) {
        return Err(Error::Validation(format!("action {indices:?} does not fit the policy heads")));
    }
    Ok(())
}

pub(crate) fn argmax<T: Scalar>(p: &[T]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Saved policy: parameter-space fingerprint, shape, and flat θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub fingerprint: u64,
    pub shape: PolicyShape,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionSample<T> {
    pub indices: Vec<usize>,
    pub log_probs: Vec<T>,
    pub total_log_prob: T,
}

/// Independent categorical draw from every head.
pub fn sample_action<T: Scalar, R: Rng + ?Sized>(dists: &[Vec<T>], rng: &mut R) -> ActionSample<T> {
    let mut indices = Vec::with_capacity(dists.len());
    let mut log_probs = Vec::with_capacity(dists.len());
    for p in dists {
        let u = T::lit(rng.gen::<f64>());
        let mut acc = T::zero();
        // fall back to the last positive-probability bin on rounding
        let mut pick = p.iter().rposition(|&x| x > T::zero()).unwrap_or(0);
        for (i, &pi) in p.iter().enumerate() {
            acc = acc + pi;
            if u < acc && pi > T::zero() {
                pick = i;
                break;
            }
        }
        indices.push(pick);
        log_probs.push(p[pick].ln());
    }
    let total_log_prob = log_probs.iter().copied().sum();
    ActionSample {
        indices,
        log_probs,
        total_log_prob,
    }
}

/// REINFORCE hyperparameters and policy size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub batch_size: usize,
    pub baseline: bool,
    pub baseline_decay: f64,
    pub total_episodes: usize,
    pub hidden_size: usize,
    pub layers: usize,
    /// Write a checkpoint every this many updates; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            batch_size: 25,
            baseline: true,
            baseline_decay: 0.9,
            total_episodes: 4000,
            hidden_size: 64,
            layers: 1,
            checkpoint_every: 20,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("train.alpha", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::config("train.baseline_decay", "must lie in [0, 1)"));
        }
        if self.total_episodes == 0 {
            return Err(Error::config("train.total_episodes", "must be at least 1"));
        }
        if self.hidden_size == 0 {
            return Err(Error::config("train.hidden_size", "must be at least 1"));
        }
        if self.layers == 0 {
            return Err(Error::config("train.layers", "must be at least 1"));
        }
        Ok(())
    }
}

/// Exponential moving average of batch-mean returns.
#[derive(Clone, Debug, PartialEq)]
pub struct MovingBaseline<T> {
    pub decay: T,
    /// `None` until the first batch; that batch's mean seeds the average.
    pub value: Option<T>,
}

/// One episode's contribution to an update.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode<T> {
    pub state: Vec<usize>,
    pub sample: ActionSample<T>,
    pub ret: T,
}

/// Vanilla REINFORCE: `θ ← θ + α/N Σ ∇θ log π(a|s) (R − b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reinforce<T> {
    pub alpha: T,
    pub baseline: Option<MovingBaseline<T>>,
}

impl<T: Scalar> Reinforce<T> {
    pub fn new(alpha: T) -> Self {
        Self { alpha, baseline: None }
    }

    pub fn with_baseline(alpha: T, decay: T) -> Self {
        Self {
            alpha,
            baseline: Some(MovingBaseline { decay, value: None }),
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        if cfg.baseline {
            Self::with_baseline(T::lit(cfg.alpha), T::lit(cfg.baseline_decay))
        } else {
            Self::new(T::lit(cfg.alpha))
        }
    }

    /// Current baseline value subtracted from returns.
    pub fn baseline_value(&self) -> T {
        self.baseline.as_ref().and_then(|b| b.value).unwrap_or_else(T::zero)
    }

    pub fn update(&mut self, policy: &mut Policy<T>, batch: &[Episode<T>]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Usage("REINFORCE update needs at least one episode".into()));
        }
        let n = T::from_count(batch.len());
        let mean_ret = batch.iter().map(|e| e.ret).sum::<T>() / n;
        if let Some(b) = self.baseline.as_mut() {
            b.value.get_or_insert(mean_ret);
        }
        let base = self.baseline_value();

        let mut grad = vec![T::zero(); policy.num_params()];
        for ep in batch {
            let adv = ep.ret - base;
            if adv != T::zero() {
                policy.accumulate_grad_log_prob(&ep.state, &ep.sample.indices, adv, &mut grad)?;
            }
        }
        let step = self.alpha / n;
        for (t, g) in policy.theta_mut().iter_mut().zip(&grad) {
            *t = *t + step * *g;
        }

        if let Some(b) = self.baseline.as_mut() {
            let prev = b.value.unwrap_or(mean_ret);
            b.value = Some(b.decay * prev + (T::one() - b.decay) * mean_ret);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(heads: &[usize], hidden: usize, layers: usize) -> PolicyShape {
        PolicyShape {
            head_sizes: heads.to_vec(),
            hidden,
            layers,
        }
    }

    #[test]
    fn fresh_policy_is_near_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Policy::<f64>::new(shape(&[10, 10, 25, 4, 10], 64, 1), &mut rng).unwrap();
        for probs in p.forward(&[3, 1, 7, 2, 9]).unwrap() {
            let k = probs.len() as f64;
            assert!(probs.iter().all(|&x| x <= 2.0 / k));
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_logits_are_uniform() {
        let s = softmax(&[0.7f64, 0.7, 0.7]);
        for v in s {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_set_two_bin_head() {
        let mut p = Policy::<f64>::zeros(shape(&[2], 4, 1)).unwrap();
        p.head_bias_mut(0).copy_from_slice(&[1.0, 0.0]);
        let probs = &p.forward(&[0]).unwrap()[0];
        let e = std::f64::consts::E;
        assert!((probs[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((probs[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((probs[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn softmax_shift_invariance() {
        let l = [0.3f64, -1.2, 2.5, 0.0];
        let a = softmax(&l);
        let b = softmax(&l.map(|x| x + 123.456));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = Policy::<f64>::zeros(shape(&[2, 3], 4, 1)).unwrap();
        assert!(matches!(p.forward(&[0]), Err(Error::Config { .. })));
        assert!(matches!(p.forward(&[0, 3]), Err(Error::Config { .. })));
    }

    #[test]
    fn one_hot_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = vec![vec![0.0, 1.0, 0.0], vec![1.0]];
        for _ in 0..100 {
            let s = sample_action(&d, &mut rng);
            assert_eq!(s.indices, vec![1, 0]);
            assert_eq!(s.total_log_prob, 0.0);
        }
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = vec![vec![0.25f64; 4]];
        let mut c = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            let s = sample_action(&d, &mut rng);
            c[s.indices[0]] += 1;
            assert_eq!(s.total_log_prob, s.log_probs.iter().sum::<f64>());
        }
        for x in c {
            assert!((x as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn one_hot_head_has_zero_logit_gradient() {
        let mut p = Policy::<f64>::zeros(shape(&[3], 2, 1)).unwrap();
        p.head_bias_mut(0).copy_from_slice(&[0.0, 800.0, 0.0]);
        let g = p.grad_log_prob(&[0], &[1]).unwrap();
        let o = p.layout.head_b[0];
        assert!(g[o..o + 3].iter().all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn uniform_two_bin_logit_gradient() {
        let p = Policy::<f64>::zeros(shape(&[2], 3, 1)).unwrap();
        let g = p.grad_log_prob(&[1], &[0]).unwrap();
        let o = p.layout.head_b[0];
        assert_eq!(&g[o..o + 2], &[0.5, -0.5]);
    }

    fn fd_check(heads: &[usize], hidden: usize, layers: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Policy::<f64>::new(shape(heads, hidden, layers), &mut rng).unwrap();
        // larger weights exercise the nonlinearity
        for v in p.theta_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let prev: Vec<usize> = heads.iter().map(|&k| rng.gen_range(0..k)).collect();
        let act: Vec<usize> = heads.iter().map(|&k| rng.gen_range(0..k)).collect();
        let g = p.grad_log_prob(&prev, &act).unwrap();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..p.num_params() {
            let orig = p.theta[i];
            p.theta[i] = orig + step;
            let up = p.log_prob(&prev, &act).unwrap();
            p.theta[i] = orig - step;
            let down = p.log_prob(&prev, &act).unwrap();
            p.theta[i] = orig;
            let fd = (up - down) / (2.0 * step);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let e = fd_check(&[3, 2, 4], 4, 1, seed);
            assert!(e < 1e-4, "seed {seed}: {e}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_two_layers() {
        for seed in 0..3 {
            let e = fd_check(&[2, 3, 2, 2, 3], 4, 2, seed);
            assert!(e < 1e-4, "seed {seed}: {e}");
        }
    }

    fn dummy_episode(state: Vec<usize>, idx: Vec<usize>, ret: f64) -> Episode<f64> {
        Episode {
            state,
            sample: ActionSample {
                indices: idx,
                log_probs: vec![],
                total_log_prob: 0.0,
            },
            ret,
        }
    }

    #[test]
    fn zero_advantage_leaves_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = Policy::<f64>::new(shape(&[2, 3], 4, 1), &mut rng).unwrap();
        let before = p.clone();
        let mut alg = Reinforce::new(0.1);
        alg.update(&mut p, &[dummy_episode(vec![0, 0], vec![1, 2], 0.0)]).unwrap();
        assert_eq!(p, before);

        // baseline seeded with the batch mean cancels equal returns
        let mut alg = Reinforce::with_baseline(0.1, 0.9);
        let batch = vec![dummy_episode(vec![0, 0], vec![1, 2], 0.3); 4];
        alg.update(&mut p, &batch).unwrap();
        assert_eq!(p, before);
        assert!((alg.baseline_value() - 0.3).abs() < 1e-15);
        assert!(alg.update(&mut p, &[]).is_err());
    }

    #[test]
    fn baseline_tracks_moving_average() {
        let mut p = Policy::<f64>::zeros(shape(&[2], 2, 1)).unwrap();
        let mut alg = Reinforce::with_baseline(0.01, 0.5);
        alg.update(&mut p, &[dummy_episode(vec![0], vec![0], 1.0)]).unwrap();
        assert_eq!(alg.baseline_value(), 1.0);
        alg.update(&mut p, &[dummy_episode(vec![0], vec![0], 3.0)]).unwrap();
        assert_eq!(alg.baseline_value(), 2.0);
    }

    #[test]
    fn probabilities_stay_normalized_after_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = Policy::<f64>::new(shape(&[4, 3, 5], 8, 1), &mut rng).unwrap();
        let mut alg = Reinforce::new(2.0);
        let mut state = vec![0, 0, 0];
        for _ in 0..50 {
            let mut batch = vec![];
            for _ in 0..5 {
                let s = sample_action(&p.forward(&state).unwrap(), &mut rng);
                let ret = if s.indices[0] == 3 { 5.0 } else { -1.0 };
                batch.push(Episode {
                    state: state.clone(),
                    sample: s.clone(),
                    ret,
                });
                state = s.indices;
            }
            alg.update(&mut p, &batch).unwrap();
            for probs in p.forward(&state).unwrap() {
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_and_fingerprint_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Policy::<f64>::new(shape(&[3, 2], 5, 2), &mut rng).unwrap();
        let ck = p.to_checkpoint(77);
        let json = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(Policy::<f64>::from_checkpoint(&back, 77).unwrap(), p);
        assert!(Policy::<f64>::from_checkpoint(&back, 78).is_err());
    }

    #[test]
    fn f32_policy_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Policy::<f32>::new(shape(&[3, 2], 5, 1), &mut rng).unwrap();
        let probs = p.forward(&[2, 1]).unwrap();
        assert!((probs[0].iter().sum::<f32>() - 1.0).abs() < 1e-5);
        let g = p.grad_log_prob(&[2, 1], &[0, 0]).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
