use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grad::{Graph, ParamSet, Scalar, Tensor, Var};
use crate::rng::rng_for;
use crate::views::MaskSpec;
use crate::voxel::{Curve, GridHierarchy, STENCIL};

use super::layers::{downsample, linear, sparse_conv, upsample, windowed_attention, AttnWeights};
use super::plan::Plan;
use super::HUNetConfig;

/// The hierarchical hybrid UNet. Parameters live in a [`ParamSet`]; the model itself only
/// carries the configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct HUNet {
    pub config: HUNetConfig,
}

enum Init {
    He(usize),
    Zeros,
    Ones,
    Token,
}

type Spec = (String, Vec<usize>, Init);

/// Weight `[taps·cin, cout]` and bias `[cout]`.
fn push_conv(out: &mut Vec<Spec>, p: &str, cin: usize, cout: usize, taps: usize) {
    out.push((format!("{p}.w"), vec![taps * cin, cout], Init::He(taps * cin)));
    out.push((format!("{p}.b"), vec![cout], Init::Zeros));
}

struct Ctx<'a, T: Scalar> {
    g: &'a mut Graph<T>,
    ps: &'a ParamSet<T>,
    trainable: bool,
    eps: f64,
}

impl<T: Scalar> Ctx<'_, T> {
    fn p(&mut self, name: &str) -> Result<Var> {
        self.g.param(self.ps, name, self.trainable)
    }

    fn norm(&mut self, x: Var, name: &str) -> Result<Var> {
        let gain = self.p(name)?;
        self.g.rmsnorm(x, gain, self.eps)
    }
}

/// Scatters `kept` onto `kept_rows` and a broadcast copy of `token` onto `token_rows`.
fn token_fill<T: Scalar>(
    g: &mut Graph<T>,
    kept: Var,
    kept_rows: &[usize],
    token: Var,
    token_rows: &[usize],
    rows: usize,
) -> Result<Var> {
    let a = g.scatter_add_rows(kept, kept_rows.to_vec(), rows)?;
    if token_rows.is_empty() {
        return Ok(a);
    }
    let t = g.gather_rows(token, vec![0; token_rows.len()])?;
    let b = g.scatter_add_rows(t, token_rows.to_vec(), rows)?;
    g.add(a, b)
}

impl HUNet {
    pub fn new(config: HUNetConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn num_levels(&self) -> usize {
        self.config.num_levels()
    }

    fn enc_curve(&self, level: usize, block: usize) -> Curve {
        let c = &self.config;
        let before: usize = c.attn_blocks[..level].iter().sum();
        c.curves[(before + block) % c.curves.len()]
    }

    fn dec_curve(&self, level: usize, block: usize) -> Curve {
        let c = &self.config;
        let enc: usize = c.attn_blocks.iter().sum();
        let before: usize = c.attn_blocks[level + 1..].iter().sum();
        c.curves[(enc + before + block) % c.curves.len()]
    }

    /// Curves requested at each level by encoder and decoder attention blocks.
    pub fn level_curves(&self) -> Vec<Vec<Curve>> {
        (0..self.num_levels())
            .map(|l| {
                let mut v = Vec::new();
                for b in 0..self.config.attn_blocks[l] {
                    for c in [self.enc_curve(l, b), self.dec_curve(l, b)] {
                        if !v.contains(&c) {
                            v.push(c);
                        }
                    }
                }
                v
            })
            .collect()
    }

    fn push_blocks(&self, out: &mut Vec<Spec>, p: &str, w: usize, res: usize, attn: usize) {
        for i in 0..res {
            push_conv(out, &format!("{p}.res.{i}.conv1"), w, w, STENCIL);
            out.push((format!("{p}.res.{i}.norm1"), vec![w], Init::Ones));
            push_conv(out, &format!("{p}.res.{i}.conv2"), w, w, STENCIL);
            out.push((format!("{p}.res.{i}.norm2"), vec![w], Init::Ones));
        }
        for i in 0..attn {
            let a = format!("{p}.attn.{i}");
            let h = self.config.ff_ratio * w;
            out.push((format!("{a}.norm1"), vec![w], Init::Ones));
            push_conv(out, &format!("{a}.qkv"), w, 3 * w, 1);
            push_conv(out, &format!("{a}.proj"), w, w, 1);
            out.push((format!("{a}.norm2"), vec![w], Init::Ones));
            push_conv(out, &format!("{a}.ff1"), w, 2 * h, 1);
            push_conv(out, &format!("{a}.ff2"), h, w, 1);
        }
    }

    fn param_specs(&self) -> Vec<Spec> {
        let c = &self.config;
        let n = self.num_levels();
        let mut out = Vec::new();
        push_conv(&mut out, "enc.stem", c.in_channels, c.enc_channels[0], STENCIL);
        out.push(("enc.stem.norm".into(), vec![c.enc_channels[0]], Init::Ones));
        for l in 0..n {
            let w = c.enc_channels[l];
            if l > 0 {
                push_conv(&mut out, &format!("enc.{l}.down"), c.enc_channels[l - 1], w, 8);
                out.push((format!("enc.{l}.down.norm"), vec![w], Init::Ones));
            }
            self.push_blocks(&mut out, &format!("enc.{l}"), w, c.res_blocks[l], c.attn_blocks[l]);
        }
        for l in (0..n).rev() {
            let w = c.dec_channels[l];
            if l == n - 1 {
                push_conv(&mut out, &format!("dec.{l}.in"), c.enc_channels[l], w, 1);
            } else {
                push_conv(&mut out, &format!("dec.{l}.up"), c.dec_channels[l + 1], w, 8);
                out.push((format!("dec.{l}.up.norm"), vec![w], Init::Ones));
                push_conv(&mut out, &format!("dec.{l}.skip"), w + c.enc_channels[l], w, 1);
            }
            self.push_blocks(&mut out, &format!("dec.{l}"), w, c.res_blocks[l], c.attn_blocks[l]);
        }
        for l in 0..n {
            out.push((format!("token.{l}"), vec![1, c.enc_channels[l]], Init::Token));
        }
        out.push(("token.input".into(), vec![1, c.in_channels], Init::Token));
        out
    }

    /// Names and shapes of every model parameter.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.param_specs().into_iter().map(|(n, s, _)| (n, s)).collect()
    }

    /// He-uniform weights, zero biases, unit norm gains, `N(0, 0.02)` mask tokens.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParamSet<T> {
        let mut rng = rng_for(seed, "init", 0);
        let token = Normal::new(0.0, 0.02).expect("valid sigma");
        let mut ps = ParamSet::new();
        for (name, shape, init) in self.param_specs() {
            let t = match init {
                Init::He(fan_in) => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    Tensor::from_fn(&shape, |_| T::lit(rng.random_range(-bound..bound)))
                }
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::filled(&shape, T::one()),
                Init::Token => Tensor::from_fn(&shape, |_| T::lit(token.sample(&mut rng))),
            };
            ps.insert(name, t);
        }
        ps
    }

    /// True for parameters that take weight decay (projection and convolution matrices).
    pub fn is_weight_matrix(name: &str) -> bool {
        name.ends_with(".w")
    }

    fn blocks<T: Scalar>(&self, cx: &mut Ctx<'_, T>, plan: &Plan, side: &str, l: usize, mut x: Var) -> Result<Var> {
        let c = &self.config;
        let pairs = plan.levels[l].conv.clone();
        for i in 0..c.res_blocks[l] {
            let p = format!("{side}.{l}.res.{i}");
            let (w1, b1) = (cx.p(&format!("{p}.conv1.w"))?, cx.p(&format!("{p}.conv1.b"))?);
            let h = sparse_conv(cx.g, x, w1, Some(b1), &pairs)?;
            let h = cx.norm(h, &format!("{p}.norm1"))?;
            let h = cx.g.gelu(h)?;
            let (w2, b2) = (cx.p(&format!("{p}.conv2.w"))?, cx.p(&format!("{p}.conv2.b"))?);
            let h = sparse_conv(cx.g, h, w2, Some(b2), &pairs)?;
            let h = cx.norm(h, &format!("{p}.norm2"))?;
            let s = cx.g.add(h, x)?;
            x = cx.g.gelu(s)?;
        }
        for i in 0..c.attn_blocks[l] {
            let curve = if side == "enc" { self.enc_curve(l, i) } else { self.dec_curve(l, i) };
            let p = format!("{side}.{l}.attn.{i}");
            let h = cx.norm(x, &format!("{p}.norm1"))?;
            let weights = AttnWeights {
                qkv_w: cx.p(&format!("{p}.qkv.w"))?,
                qkv_b: cx.p(&format!("{p}.qkv.b"))?,
                proj_w: cx.p(&format!("{p}.proj.w"))?,
                proj_b: cx.p(&format!("{p}.proj.b"))?,
            };
            let order = plan.levels[l].order(curve)?;
            let a = windowed_attention(cx.g, h, &weights, order, c.window, c.heads)?;
            x = cx.g.add(x, a)?;
            let h = cx.norm(x, &format!("{p}.norm2"))?;
            let (w1, b1) = (cx.p(&format!("{p}.ff1.w"))?, cx.p(&format!("{p}.ff1.b"))?);
            let h = linear(cx.g, h, w1, Some(b1))?;
            let h = cx.g.geglu(h)?;
            let (w2, b2) = (cx.p(&format!("{p}.ff2.w"))?, cx.p(&format!("{p}.ff2.b"))?);
            let h = linear(cx.g, h, w2, Some(b2))?;
            x = cx.g.add(x, h)?;
        }
        Ok(x)
    }

    fn encode_planned<T: Scalar>(&self, cx: &mut Ctx<'_, T>, plan: &Plan, x0: Var) -> Result<Vec<Var>> {
        let (w, b) = (cx.p("enc.stem.w")?, cx.p("enc.stem.b")?);
        let h = sparse_conv(cx.g, x0, w, Some(b), &plan.levels[0].conv)?;
        let h = cx.norm(h, "enc.stem.norm")?;
        let mut x = cx.g.gelu(h)?;
        let mut out = Vec::with_capacity(self.num_levels());
        for l in 0..self.num_levels() {
            if l > 0 {
                let (w, b) = (cx.p(&format!("enc.{l}.down.w"))?, cx.p(&format!("enc.{l}.down.b"))?);
                let h = downsample(cx.g, x, w, Some(b), &plan.down[l - 1])?;
                let h = cx.norm(h, &format!("enc.{l}.down.norm"))?;
                x = cx.g.gelu(h)?;
            }
            x = self.blocks(cx, plan, "enc", l, x)?;
            out.push(x);
        }
        Ok(out)
    }

    fn decode_planned<T: Scalar>(&self, cx: &mut Ctx<'_, T>, plan: &Plan, combined: &[Var]) -> Result<Vec<Var>> {
        let n = self.num_levels();
        let mut out = vec![Var(0); n];
        let top = n - 1;
        let (w, b) = (cx.p(&format!("dec.{top}.in.w"))?, cx.p(&format!("dec.{top}.in.b"))?);
        let mut x = linear(cx.g, combined[top], w, Some(b))?;
        x = self.blocks(cx, plan, "dec", top, x)?;
        out[top] = x;
        for l in (0..top).rev() {
            let (w, b) = (cx.p(&format!("dec.{l}.up.w"))?, cx.p(&format!("dec.{l}.up.b"))?);
            let h = upsample(cx.g, x, w, Some(b), &plan.up[l])?;
            let h = cx.norm(h, &format!("dec.{l}.up.norm"))?;
            let h = cx.g.gelu(h)?;
            let cat = cx.g.concat_cols(&[h, combined[l]])?;
            let (w, b) = (cx.p(&format!("dec.{l}.skip.w"))?, cx.p(&format!("dec.{l}.skip.b"))?);
            x = linear(cx.g, cat, w, Some(b))?;
            x = self.blocks(cx, plan, "dec", l, x)?;
            out[l] = x;
        }
        Ok(out)
    }

    fn check_input<T: Scalar>(&self, g: &Graph<T>, hier: &GridHierarchy, input: Var) -> Result<()> {
        if hier.num_levels() != self.num_levels() {
            return Err(Error::Shape(format!(
                "hierarchy has {} levels, model expects {}",
                hier.num_levels(),
                self.num_levels()
            )));
        }
        let want = [hier.levels[0].len(), self.config.in_channels];
        if g.shape(input) != want {
            return Err(Error::Shape(format!(
                "input is {:?}, expected {want:?}",
                g.shape(input)
            )));
        }
        Ok(())
    }

    /// Encoder features over the unmasked rows `mask.unmasked[l]` of every level. Masked voxels
    /// are dropped before any encoder structure is built. `input` covers all level-0 rows.
    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamSet<T>,
        trainable: bool,
        hier: &GridHierarchy,
        input: Var,
        mask: &MaskSpec,
    ) -> Result<Vec<Var>> {
        self.check_input(g, hier, input)?;
        if mask.unmasked[0].is_empty() {
            return Err(Error::DegenerateInput("every voxel is masked".into()));
        }
        let plan = Plan::new(hier, &mask.unmasked, &self.level_curves())?;
        let x0 = g.gather_rows(input, mask.unmasked[0].clone())?;
        let mut cx = Ctx { g, ps, trainable, eps: self.config.norm_eps };
        self.encode_planned(&mut cx, &plan, x0)
    }

    /// Decoder features over all rows: encoder output on unmasked rows, the level's mask token
    /// on masked rows.
    pub fn decode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamSet<T>,
        trainable: bool,
        hier: &GridHierarchy,
        encoded: &[Var],
        mask: &MaskSpec,
    ) -> Result<Vec<Var>> {
        if encoded.len() != self.num_levels() {
            return Err(Error::Shape(format!(
                "{} encoder levels, expected {}",
                encoded.len(),
                self.num_levels()
            )));
        }
        let plan = Plan::full(hier, &self.level_curves())?;
        let mut cx = Ctx { g, ps, trainable, eps: self.config.norm_eps };
        let mut combined = Vec::with_capacity(encoded.len());
        for (l, &e) in encoded.iter().enumerate() {
            let token = cx.p(&format!("token.{l}"))?;
            combined.push(token_fill(
                cx.g,
                e,
                &mask.unmasked[l],
                token,
                &mask.masked[l],
                hier.levels[l].len(),
            )?);
        }
        self.decode_planned(&mut cx, &plan, &combined)
    }

    /// Unmasked encode and decode over the whole hierarchy.
    pub fn forward_full<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamSet<T>,
        trainable: bool,
        hier: &GridHierarchy,
        input: Var,
    ) -> Result<Vec<Var>> {
        self.check_input(g, hier, input)?;
        let plan = Plan::full(hier, &self.level_curves())?;
        let mut cx = Ctx { g, ps, trainable, eps: self.config.norm_eps };
        let enc = self.encode_planned(&mut cx, &plan, input)?;
        self.decode_planned(&mut cx, &plan, &enc)
    }

    /// Top-down masking: masked level-0 inputs are replaced by a learned input token and the
    /// whole hierarchy, masked voxels included, runs through encoder and decoder.
    pub fn forward_topdown<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamSet<T>,
        trainable: bool,
        hier: &GridHierarchy,
        input: Var,
        mask: &MaskSpec,
    ) -> Result<Vec<Var>> {
        self.check_input(g, hier, input)?;
        let plan = Plan::full(hier, &self.level_curves())?;
        let mut cx = Ctx { g, ps, trainable, eps: self.config.norm_eps };
        let kept = cx.g.gather_rows(input, mask.unmasked[0].clone())?;
        let token = cx.p("token.input")?;
        let x0 = token_fill(cx.g, kept, &mask.unmasked[0], token, &mask.masked[0], hier.levels[0].len())?;
        let enc = self.encode_planned(&mut cx, &plan, x0)?;
        self.decode_planned(&mut cx, &plan, &enc)
    }

    /// Convenience: level-0 input features of a hierarchy as a graph constant.
    pub fn input<T: Scalar>(&self, g: &mut Graph<T>, hier: &GridHierarchy) -> Result<Var> {
        let f = &hier.levels[0].features;
        if f.cols() != self.config.in_channels {
            return Err(Error::Shape(format!(
                "grid carries {} channels, model expects {}",
                f.cols(),
                self.config.in_channels
            )));
        }
        Ok(g.constant(f.cast::<T>()))
    }

    /// Detached teacher-style pass returning plain tensors per level.
    pub fn infer<T: Scalar>(&self, ps: &ParamSet<T>, hier: &GridHierarchy) -> Result<Vec<Tensor<T>>> {
        let mut g = Graph::new();
        let x = self.input(&mut g, hier)?;
        let out = self.forward_full(&mut g, ps, false, hier, x)?;
        Ok(out.iter().map(|&v| g.value(v).clone()).collect())
    }
}
