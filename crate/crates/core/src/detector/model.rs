//! CSP backbone → SPP → PAN neck → three 1×1 anchor heads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{ModelSpec, ANCHORS_PER_SCALE, NUM_SCALES};
use crate::error::{Error, Result};
use crate::nn::kernels::{fold_running, BatchStats};
use crate::nn::{BnConfig, Graph, ParamId, ParamStore, Var};
use crate::tensor::Tensor;

/// Raw head maps, one per stride: `[N, 3·(5+nc), S/stride, S/stride]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHeadOutput {
    pub maps: [Tensor; NUM_SCALES],
}

/// Conv (no bias) → batch norm → SiLU.
#[derive(Debug, Clone)]
struct ConvBn {
    weight: ParamId,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
    stride: usize,
    pad: usize,
    out_c: usize,
}

#[derive(Debug, Clone)]
struct Bottleneck {
    cv1: ConvBn,
    cv2: ConvBn,
    shortcut: bool,
}

/// Cross-stage-partial block: one path runs the bottlenecks, the other
/// bypasses them, and a 1×1 conv merges the two.
#[derive(Debug, Clone)]
struct Csp {
    cv1: ConvBn,
    cv2: ConvBn,
    cv3: ConvBn,
    blocks: Vec<Bottleneck>,
}

#[derive(Debug, Clone)]
struct Spp {
    cv1: ConvBn,
    cv2: ConvBn,
}

const SPP_KERNELS: [usize; 3] = [5, 9, 13];

#[derive(Debug, Clone)]
struct HeadConv {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct Layers {
    stem: ConvBn,
    stages: Vec<(ConvBn, Csp)>,
    spp: Spp,
    lateral5: ConvBn,
    topdown4: Csp,
    lateral4: ConvBn,
    topdown3: Csp,
    down3: ConvBn,
    bottomup4: Csp,
    down4: ConvBn,
    bottomup5: Csp,
    heads: [HeadConv; NUM_SCALES],
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    /// Uniform fan-in scaled init, bound `1/sqrt(fan_in)`.
    fn conv_weight(&mut self, name: &str, shape: [usize; 4]) -> Result<ParamId> {
        let fan_in = shape[1] * shape[2] * shape[3];
        let bound = 1.0 / (fan_in as f32).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        self.store
            .insert(name, Tensor::new(&shape, data)?.with_requires_grad(true))
    }

    fn conv_bn(
        &mut self,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
    ) -> Result<ConvBn> {
        let weight = self.conv_weight(&format!("{name}.conv.weight"), [out_c, in_c, k, k])?;
        let gamma = self.store.insert(
            &format!("{name}.bn.weight"),
            Tensor::full(&[out_c], 1.0).with_requires_grad(true),
        )?;
        let beta = self.store.insert(
            &format!("{name}.bn.bias"),
            Tensor::zeros(&[out_c]).with_requires_grad(true),
        )?;
        let running_mean = self
            .store
            .insert(&format!("{name}.bn.running_mean"), Tensor::zeros(&[out_c]))?;
        let running_var = self.store.insert(
            &format!("{name}.bn.running_var"),
            Tensor::full(&[out_c], 1.0),
        )?;
        Ok(ConvBn {
            weight,
            gamma,
            beta,
            running_mean,
            running_var,
            stride,
            pad: k / 2,
            out_c,
        })
    }

    fn csp(
        &mut self,
        name: &str,
        in_c: usize,
        out_c: usize,
        n: usize,
        shortcut: bool,
    ) -> Result<Csp> {
        let hidden = out_c / 2;
        let cv1 = self.conv_bn(&format!("{name}.cv1"), in_c, hidden, 1, 1)?;
        let cv2 = self.conv_bn(&format!("{name}.cv2"), in_c, hidden, 1, 1)?;
        let mut blocks = Vec::with_capacity(n);
        for j in 0..n {
            blocks.push(Bottleneck {
                cv1: self.conv_bn(&format!("{name}.m.{j}.cv1"), hidden, hidden, 1, 1)?,
                cv2: self.conv_bn(&format!("{name}.m.{j}.cv2"), hidden, hidden, 3, 1)?,
                shortcut,
            });
        }
        let cv3 = self.conv_bn(&format!("{name}.cv3"), 2 * hidden, out_c, 1, 1)?;
        Ok(Csp {
            cv1,
            cv2,
            cv3,
            blocks,
        })
    }

    fn spp(&mut self, name: &str, in_c: usize, out_c: usize) -> Result<Spp> {
        let hidden = in_c / 2;
        Ok(Spp {
            cv1: self.conv_bn(&format!("{name}.cv1"), in_c, hidden, 1, 1)?,
            cv2: self.conv_bn(
                &format!("{name}.cv2"),
                hidden * (SPP_KERNELS.len() + 1),
                out_c,
                1,
                1,
            )?,
        })
    }

    fn head(
        &mut self,
        name: &str,
        in_c: usize,
        spec: &ModelSpec,
        scale: usize,
    ) -> Result<HeadConv> {
        let out_c = spec.head_channels();
        let weight = self.conv_weight(&format!("{name}.weight"), [out_c, in_c, 1, 1])?;
        let bound = 1.0 / (in_c as f32).sqrt();
        let per_anchor = spec.outputs_per_anchor();
        // Start objectness near the expected object density (about 8 objects
        // per 416² image) and class scores near 0.6/(nc − 0.99).
        let cells = (spec.input_size / spec.strides[scale]).pow(2) as f32;
        let obj_prior = (8.0 / cells).ln();
        let cls_prior = (0.6 / (spec.num_classes as f32 - 0.99)).ln();
        let data = (0..out_c)
            .map(|c| {
                let noise = self.rng.random_range(-bound..bound);
                match c % per_anchor {
                    4 => noise + obj_prior,
                    k if k >= 5 => noise + cls_prior,
                    _ => noise,
                }
            })
            .collect();
        let bias = self.store.insert(
            &format!("{name}.bias"),
            Tensor::new(&[out_c], data)?.with_requires_grad(true),
        )?;
        Ok(HeadConv { weight, bias })
    }
}

/// Per-forward state: BN mode and the batch statistics gathered on the way.
struct Pass {
    training: bool,
    eps: f32,
    stats: Vec<(ParamId, ParamId, BatchStats, usize)>,
}

#[derive(Debug, Clone)]
pub struct Detector {
    spec: ModelSpec,
    store: ParamStore,
    layers: Layers,
    bn: BnConfig,
}

impl Detector {
    /// Builds the network with parameters drawn deterministically from `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let mut b = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let c = |r| spec.channels(r);
        let stem = b.conv_bn("backbone.stem", 3, c(64), 3, 2)?;
        let mut stages = Vec::new();
        let mut prev = c(64);
        for (i, (reference, repeats)) in [(128, 3), (256, 6), (512, 9), (1024, 3)]
            .into_iter()
            .enumerate()
        {
            let name = format!("backbone.stage{}", i + 1);
            let out = c(reference);
            let down = b.conv_bn(&format!("{name}.down"), prev, out, 3, 2)?;
            let csp = b.csp(&format!("{name}.csp"), out, out, spec.depth(repeats), true)?;
            stages.push((down, csp));
            prev = out;
        }
        let spp = b.spp("backbone.spp", c(1024), c(1024))?;
        let n3 = spec.depth(3);
        let lateral5 = b.conv_bn("neck.lateral5", c(1024), c(512), 1, 1)?;
        let topdown4 = b.csp("neck.topdown4", c(512) + c(512), c(512), n3, false)?;
        let lateral4 = b.conv_bn("neck.lateral4", c(512), c(256), 1, 1)?;
        let topdown3 = b.csp("neck.topdown3", c(256) + c(256), c(256), n3, false)?;
        let down3 = b.conv_bn("neck.down3", c(256), c(256), 3, 2)?;
        let bottomup4 = b.csp("neck.bottomup4", c(256) + c(256), c(512), n3, false)?;
        let down4 = b.conv_bn("neck.down4", c(512), c(512), 3, 2)?;
        let bottomup5 = b.csp("neck.bottomup5", c(512) + c(512), c(1024), n3, false)?;
        let heads = [
            b.head("head.p3", c(256), spec, 0)?,
            b.head("head.p4", c(512), spec, 1)?,
            b.head("head.p5", c(1024), spec, 2)?,
        ];
        Ok(Self {
            spec: spec.clone(),
            store,
            layers: Layers {
                stem,
                stages,
                spp,
                lateral5,
                topdown4,
                lateral4,
                topdown3,
                down3,
                bottomup4,
                down4,
                bottomup5,
                heads,
            },
            bn: BnConfig::default(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn bn_config(&self) -> BnConfig {
        self.bn
    }

    /// One line per parameter plus the trainable total.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for id in self.store.sorted_ids() {
            let p = self.store.get(id);
            out.push_str(&format!("{:<48} {:?}\n", p.name, p.tensor.shape()));
        }
        out.push_str(&format!(
            "trainable parameters: {}\n",
            self.store.trainable_count()
        ));
        out
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<()> {
        let (_, c, h, w) = g.value(x).dims4()?;
        let s = self.spec.input_size;
        if c != 3 || h != s || w != s {
            return Err(Error::Shape(format!(
                "detector expects [N, 3, {s}, {s}] input, got {:?}",
                g.value(x).shape()
            )));
        }
        Ok(())
    }

    /// Eval-mode forward: batch norm uses running statistics.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<[Var; NUM_SCALES]> {
        let mut pass = Pass {
            training: false,
            eps: self.bn.eps,
            stats: Vec::new(),
        };
        self.run(g, x, &mut pass)
    }

    /// Training-mode forward: batch statistics normalize the batch and are
    /// folded into the running estimates.
    pub fn forward_train(&mut self, g: &mut Graph, x: Var) -> Result<[Var; NUM_SCALES]> {
        let mut pass = Pass {
            training: true,
            eps: self.bn.eps,
            stats: Vec::new(),
        };
        let out = self.run(g, x, &mut pass)?;
        let momentum = self.bn.momentum;
        for (mean_id, var_id, stats, count) in pass.stats {
            let mut mean = self.store.get(mean_id).tensor.data().to_vec();
            let mut var = self.store.get(var_id).tensor.data().to_vec();
            fold_running(&mut mean, &mut var, &stats, count, momentum);
            self.store
                .get_mut(mean_id)
                .tensor
                .data_mut()
                .copy_from_slice(&mean);
            self.store
                .get_mut(var_id)
                .tensor
                .data_mut()
                .copy_from_slice(&var);
        }
        Ok(out)
    }

    /// Eval-mode forward on a standalone batch, returning the head maps.
    pub fn predict(&self, batch: Tensor) -> Result<RawHeadOutput> {
        let mut g = Graph::new();
        let x = g.input(batch)?;
        let outs = self.forward(&mut g, x)?;
        Ok(RawHeadOutput {
            maps: outs.map(|v| g.value(v).clone()),
        })
    }

    fn run(&self, g: &mut Graph, x: Var, pass: &mut Pass) -> Result<[Var; NUM_SCALES]> {
        self.check_input(g, x)?;
        let l = &self.layers;
        let mut h = self.conv_bn(g, x, &l.stem, pass)?;
        let mut taps = Vec::with_capacity(4);
        for (down, csp) in &l.stages {
            h = self.conv_bn(g, h, down, pass)?;
            h = self.csp(g, h, csp, pass)?;
            taps.push(h);
        }
        let c3 = taps[1]; // stride 8
        let c4 = taps[2]; // stride 16
        let c5 = self.spp(g, taps[3], &l.spp, pass)?;

        // top-down
        let p5_lat = self.conv_bn(g, c5, &l.lateral5, pass)?;
        let up = g.upsample_nearest2x(p5_lat)?;
        let cat = g.concat_channels(&[up, c4])?;
        let td4 = self.csp(g, cat, &l.topdown4, pass)?;
        let p4_lat = self.conv_bn(g, td4, &l.lateral4, pass)?;
        let up = g.upsample_nearest2x(p4_lat)?;
        let cat = g.concat_channels(&[up, c3])?;
        let out3 = self.csp(g, cat, &l.topdown3, pass)?;

        // bottom-up
        let d = self.conv_bn(g, out3, &l.down3, pass)?;
        let cat = g.concat_channels(&[d, p4_lat])?;
        let out4 = self.csp(g, cat, &l.bottomup4, pass)?;
        let d = self.conv_bn(g, out4, &l.down4, pass)?;
        let cat = g.concat_channels(&[d, p5_lat])?;
        let out5 = self.csp(g, cat, &l.bottomup5, pass)?;

        let mut maps = [out3, out4, out5];
        for (m, head) in maps.iter_mut().zip(&l.heads) {
            let w = g.param(&self.store, head.weight)?;
            let b = g.param(&self.store, head.bias)?;
            *m = g.conv2d(*m, w, Some(b), 1, 0)?;
        }
        Ok(maps)
    }

    fn conv_bn(&self, g: &mut Graph, x: Var, layer: &ConvBn, pass: &mut Pass) -> Result<Var> {
        let w = g.param(&self.store, layer.weight)?;
        let y = g.conv2d(x, w, None, layer.stride, layer.pad)?;
        let gamma = g.param(&self.store, layer.gamma)?;
        let beta = g.param(&self.store, layer.beta)?;
        let (y, stats) = g.batch_norm2d(
            y,
            gamma,
            beta,
            self.store.get(layer.running_mean).tensor.data(),
            self.store.get(layer.running_var).tensor.data(),
            pass.eps,
            pass.training,
        )?;
        if let Some(stats) = stats {
            let (n, _, h, w) = g.value(y).dims4()?;
            pass.stats
                .push((layer.running_mean, layer.running_var, stats, n * h * w));
        }
        debug_assert_eq!(g.value(y).shape()[1], layer.out_c);
        g.silu(y)
    }

    fn csp(&self, g: &mut Graph, x: Var, block: &Csp, pass: &mut Pass) -> Result<Var> {
        let mut a = self.conv_bn(g, x, &block.cv1, pass)?;
        for bn in &block.blocks {
            let h = self.conv_bn(g, a, &bn.cv1, pass)?;
            let h = self.conv_bn(g, h, &bn.cv2, pass)?;
            a = if bn.shortcut { g.add(a, h)? } else { h };
        }
        let b = self.conv_bn(g, x, &block.cv2, pass)?;
        let cat = g.concat_channels(&[a, b])?;
        self.conv_bn(g, cat, &block.cv3, pass)
    }

    fn spp(&self, g: &mut Graph, x: Var, block: &Spp, pass: &mut Pass) -> Result<Var> {
        let h = self.conv_bn(g, x, &block.cv1, pass)?;
        let mut branches = vec![h];
        for k in SPP_KERNELS {
            branches.push(g.maxpool2d(h, k, 1, k / 2)?);
        }
        let cat = g.concat_channels(&branches)?;
        self.conv_bn(g, cat, &block.cv2, pass)
    }
}

/// Channel offset of output `k` for anchor `a` in a head map.
pub fn head_channel(spec: &ModelSpec, anchor: usize, k: usize) -> usize {
    debug_assert!(anchor < ANCHORS_PER_SCALE);
    anchor * spec.outputs_per_anchor() + k
}
