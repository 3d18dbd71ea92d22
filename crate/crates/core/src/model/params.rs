//! Parameter layout and initialisation.
//!
//! Names are dotted paths: `input.w`, `se0.in.w3`, `l1.fwd.ssm.b`,
//! `l1.rev.fuse.conv3.w`, `l0.ffn.w1`, `head.w2`, ...

use crate::error::Result;
use crate::model::{FusionMode, ModelConfig};
use crate::nn::{ParameterSet, Real, RngStream, Tensor};
use crate::ssm::init_s4d_with;

/// Kernel width of the channel-axis convolution: the largest odd value not
/// above `min(3, channels)`.
pub fn channel_kernel(channels: usize) -> usize {
    let k = channels.min(3);
    if k % 2 == 0 {
        k - 1
    } else {
        k
    }
}

pub const FEATURE_KERNEL: usize = 7;

struct Init<'a> {
    ps: ParameterSet,
    rng: &'a mut RngStream,
}

impl Init<'_> {
    fn normal(&mut self, name: String, shape: &[usize], std: f64) -> Result<()> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.normal(0.0, std) as Real).collect();
        self.ps.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    /// Weight with standard deviation `1/√fan_in`.
    fn dense(&mut self, name: String, fan_in: usize, shape: &[usize]) -> Result<()> {
        self.normal(name, shape, 1.0 / (fan_in as f64).sqrt())
    }

    fn fill(&mut self, name: String, shape: &[usize], v: Real) -> Result<()> {
        self.ps.insert(name, Tensor::full(shape.to_vec(), v))
    }

    fn layer_norm(&mut self, prefix: &str, d: usize) -> Result<()> {
        self.fill(format!("{prefix}.gamma"), &[d], 1.0)?;
        self.fill(format!("{prefix}.beta"), &[d], 0.0)
    }

    fn direction(&mut self, prefix: &str, cfg: &ModelConfig) -> Result<()> {
        let d = cfg.hidden;
        for w in ["wq", "wk", "wv", "wo"] {
            self.dense(format!("{prefix}.{w}"), d, &[d, d])?;
        }
        let mut sub = self.rng.split();
        let ssm = init_s4d_with(cfg.ssm_state, d, cfg.dt_min, cfg.dt_max, &mut sub)?;
        let dd = cfg.ssm_state;
        let t = |v: &[f64], shape: &[usize]| Tensor::from_f64(shape.to_vec(), v);
        self.ps.insert(format!("{prefix}.ssm.a_raw"), t(&ssm.a_raw, &[dd])?)?;
        self.ps.insert(format!("{prefix}.ssm.log_dt"), t(&ssm.log_dt, &[dd])?)?;
        self.ps.insert(format!("{prefix}.ssm.b"), t(&ssm.b, &[dd, d])?)?;
        self.ps.insert(format!("{prefix}.ssm.c"), t(&ssm.c, &[d, dd])?)?;
        if cfg.fusion != FusionMode::Off {
            let k2 = channel_kernel(cfg.heads);
            self.dense(format!("{prefix}.fuse.conv1.w"), 2 * FEATURE_KERNEL, &[1, 2, FEATURE_KERNEL])?;
            self.fill(format!("{prefix}.fuse.conv1.b"), &[1], 0.0)?;
            self.dense(format!("{prefix}.fuse.conv2.w"), 2 * k2, &[1, 2, k2])?;
            self.fill(format!("{prefix}.fuse.conv2.b"), &[1], 0.0)?;
        }
        if cfg.fusion == FusionMode::Full {
            self.dense(format!("{prefix}.fuse.conv3.w"), 18, &[1, 2, 3, 3])?;
            self.fill(format!("{prefix}.fuse.conv3.b"), &[1], 0.0)?;
            self.fill(format!("{prefix}.fuse.pr.w"), &[1, 1], 1.0)?;
            self.fill(format!("{prefix}.fuse.pr.b"), &[1, 1], 0.0)?;
        }
        Ok(())
    }
}

/// Fresh parameters for `cfg`, deterministic in `seed`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut rng = RngStream::named(seed, "init");
    let mut it = Init {
        ps: ParameterSet::new(),
        rng: &mut rng,
    };
    let d = cfg.hidden;
    it.dense("input.w".into(), cfg.in_features, &[cfg.in_features, d])?;
    it.fill("input.b".into(), &[1, d], 0.0)?;
    for l in 0..cfg.se_layers {
        for dir in ["in", "out"] {
            for w in ["w1", "w2", "w3", "w4"] {
                it.dense(format!("se{l}.{dir}.{w}"), d, &[d, d])?;
            }
        }
        it.layer_norm(&format!("se{l}.ln"), d)?;
    }
    let e = cfg.ffn_expansion * d;
    for l in 0..cfg.num_layers {
        it.direction(&format!("l{l}.fwd"), cfg)?;
        if cfg.bidirectional {
            it.direction(&format!("l{l}.rev"), cfg)?;
            it.dense(format!("l{l}.merge.w"), 2 * d, &[2 * d, d])?;
            it.fill(format!("l{l}.merge.b"), &[1, d], 0.0)?;
        }
        it.layer_norm(&format!("l{l}.ln1"), d)?;
        it.dense(format!("l{l}.ffn.w1"), d, &[d, e])?;
        it.fill(format!("l{l}.ffn.b1"), &[1, e], 0.0)?;
        it.dense(format!("l{l}.ffn.w2"), e, &[e, d])?;
        it.fill(format!("l{l}.ffn.b2"), &[1, d], 0.0)?;
        it.layer_norm(&format!("l{l}.ln2"), d)?;
    }
    let out = cfg.output_dim();
    if cfg.task.is_node_level() {
        it.dense("head.w".into(), d, &[d, out])?;
        it.fill("head.b".into(), &[1, out], 0.0)?;
    } else {
        it.dense("head.w1".into(), d, &[d, d])?;
        it.fill("head.b1".into(), &[1, d], 0.0)?;
        it.dense("head.w2".into(), d, &[d, out])?;
        it.fill("head.b2".into(), &[1, out], 0.0)?;
    }
    Ok(it.ps)
}
