//! Acceptance checks, one line per criterion. Runs under `cargo test` with a
//! custom harness; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use cfanet::cfa::{
    bilinear_demosaic_bayer, bilinear_fill, mosaic, CfaPattern, FillOperator, LsqColor,
    BUILTIN_NAMES,
};
use cfanet::data::{
    collate, extract_patches, noise_image, synthetic_scene, PatchSampler, Sampling,
};
use cfanet::evaluate::baseline_demosaic;
use cfanet::layers::init::seeded_rng;
use cfanet::layers::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, l2_loss, relu,
    relu_backward, selu, selu_backward, BatchNormLayer, ConvLayer, NormMode,
};
use cfanet::metrics::{cpsnr, psnr};
use cfanet::models::{
    build_dmcnn, build_dmcnn_vd, build_dmcnn_vd_pa, build_svec_model, decode_weights,
    encode_weights, forward_demosaic, pattern_backward, pattern_forward, Architecture, InputMode,
    Layer, Model, PatternLayer, ResidualBaseline, Source, SvecArch, VdConfig,
};
use cfanet::svec::{
    exposure_compensate, normalize_radiance, svec_mosaic, svec_pattern, RadianceImage, SvecConfig,
};
use cfanet::train::{train, TrainConfig, TrainData};
use cfanet::{Dims, Error, Tensor4D};
use clap::Parser;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn random(dims: Dims, rng: &mut impl Rng) -> Tensor4D {
    Tensor4D::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))
}

fn unit_image(n: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor4D {
    Tensor4D::from_fn(Dims::new(n, 3, h, w), |_, _, _, _| {
        rng.random_range(0.05..1.0)
    })
}

fn dot(a: &Tensor4D, b: &Tensor4D) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Gradient suite

const SEEDS: u64 = 20;
const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Absolute allowance for gradients that are analytically zero, where the
/// difference quotient only carries roundoff.
const ABS_FLOOR: f64 = 1e-7;

struct GradStats {
    checks: usize,
    kinks: usize,
    worst: f64,
}

impl GradStats {
    fn new() -> Self {
        GradStats {
            checks: 0,
            kinks: 0,
            worst: 0.0,
        }
    }

    fn check(
        &mut self,
        what: &str,
        x: &[f64],
        coords: &[usize],
        analytic: &[f64],
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<(), String> {
        let mut buf = x.to_vec();
        let centre = f(x);
        for &i in coords {
            buf[i] = x[i] + STEP;
            let plus = f(&buf);
            buf[i] = x[i] - STEP;
            let minus = f(&buf);
            buf[i] = x[i];
            // One-sided slopes that disagree mean the step straddles a kink
            // (ReLU or output clamp), where no derivative exists.
            let (right, left) = ((plus - centre) / STEP, (centre - minus) / STEP);
            if (right - left).abs() > 1e-2 * (right.abs() + left.abs()) + 1e-5 {
                self.kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            let err = (analytic[i] - numeric).abs()
                / (analytic[i].abs().max(numeric.abs()) + ABS_FLOOR / REL_TOL);
            self.checks += 1;
            self.worst = self.worst.max(err);
            ensure!(
                err < REL_TOL,
                "{what}[{i}]: analytic {:e} numeric {numeric:e} rel {err:e}",
                analytic[i]
            );
        }
        Ok(())
    }
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn grad_conv(st: &mut GradStats, seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed);
    let (cin, cout) = (rng.random_range(1..4), rng.random_range(1..4));
    let k = [1, 3, 5][rng.random_range(0..3)];
    let pad = rng.random_range(0..=k / 2 + 1);
    let mut layer = ConvLayer::new(cin, cout, k, k, pad).unwrap();
    layer.kernel = random(layer.kernel.dims(), &mut rng);
    layer.bias = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = random(Dims::new(2, cin, 6, 7), &mut rng);
    let w = random(conv2d_forward(&x, &layer).unwrap().dims(), &mut rng);
    let g = conv2d_backward(&x, &layer, &w).unwrap();
    let xd = x.dims();
    st.check(
        "conv input",
        x.data(),
        &all(xd.len()),
        g.input.data(),
        |v| {
            dot(
                &conv2d_forward(&Tensor4D::from_vec(xd, v.to_vec()).unwrap(), &layer).unwrap(),
                &w,
            )
        },
    )?;
    let kd = layer.kernel.dims();
    st.check(
        "conv kernel",
        layer.kernel.data(),
        &all(kd.len()),
        g.kernel.data(),
        |v| {
            let mut l = layer.clone();
            l.kernel = Tensor4D::from_vec(kd, v.to_vec()).unwrap();
            dot(&conv2d_forward(&x, &l).unwrap(), &w)
        },
    )?;
    st.check("conv bias", &layer.bias, &all(cout), &g.bias, |v| {
        let mut l = layer.clone();
        l.bias = v.to_vec();
        dot(&conv2d_forward(&x, &l).unwrap(), &w)
    })
}

fn grad_activations(st: &mut GradStats, seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed);
    let d = Dims::new(2, 2, 3, 4);
    let x = Tensor4D::from_fn(d, |_, _, _, _| {
        let m: f64 = rng.random_range(0.01..2.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    });
    let w = random(d, &mut rng);
    st.check(
        "relu",
        x.data(),
        &all(d.len()),
        relu_backward(&x, &w).unwrap().data(),
        |v| dot(&relu(&Tensor4D::from_vec(d, v.to_vec()).unwrap()), &w),
    )?;
    st.check(
        "selu",
        x.data(),
        &all(d.len()),
        selu_backward(&x, &w).unwrap().data(),
        |v| dot(&selu(&Tensor4D::from_vec(d, v.to_vec()).unwrap()), &w),
    )
}

fn grad_batchnorm(st: &mut GradStats, seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed);
    for mode in [NormMode::Train, NormMode::Eval] {
        let c = rng.random_range(1..4);
        let mut layer = BatchNormLayer::new(c);
        layer.mode = mode;
        layer.gamma = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
        layer.beta = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        layer.running_mean = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
        layer.running_var = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
        let d = Dims::new(3, c, 3, 3);
        let x = random(d, &mut rng);
        let w = random(d, &mut rng);
        let (_, cache) = batchnorm_forward(&x, &mut layer.clone()).unwrap();
        let g = batchnorm_backward(&layer, &cache, &w).unwrap();
        let eval = |l: &BatchNormLayer, xi: &Tensor4D| {
            dot(&batchnorm_forward(xi, &mut l.clone()).unwrap().0, &w)
        };
        st.check("bn input", x.data(), &all(d.len()), g.input.data(), |v| {
            eval(&layer, &Tensor4D::from_vec(d, v.to_vec()).unwrap())
        })?;
        st.check("bn gamma", &layer.gamma, &all(c), &g.gamma, |v| {
            let mut l = layer.clone();
            l.gamma = v.to_vec();
            eval(&l, &x)
        })?;
        st.check("bn beta", &layer.beta, &all(c), &g.beta, |v| {
            let mut l = layer.clone();
            l.beta = v.to_vec();
            eval(&l, &x)
        })?;
    }
    Ok(())
}

fn grad_pattern(st: &mut GradStats, seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed);
    let (th, tw) = (rng.random_range(1..4), rng.random_range(1..4));
    let layer = PatternLayer::random(th, tw, seed);
    let img = unit_image(2, 6, 6, &mut rng);
    let w = random(Dims::new(2, th * tw, 6, 6), &mut rng);
    let g = pattern_backward(&img, &layer, &w).unwrap();
    st.check(
        "pattern",
        &layer.weights,
        &all(layer.weights.len()),
        &g,
        |v| {
            dot(
                &pattern_forward(&img, &PatternLayer::from_weights(th, tw, v.to_vec()))
                    .unwrap()
                    .planes,
                &w,
            )
        },
    )
}

fn grad_losses(st: &mut GradStats, seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed);
    let d = Dims::new(rng.random_range(1..4), 3, 4, 4);
    let p = random(d, &mut rng);
    let t = random(d, &mut rng);
    let (_, g) = l2_loss(&p, &t).unwrap();
    st.check("l2 loss", p.data(), &all(d.len()), g.data(), |v| {
        l2_loss(&Tensor4D::from_vec(d, v.to_vec()).unwrap(), &t)
            .unwrap()
            .0
    })?;
    // Least-squares color baseline, used inside the learned-pattern loss.
    let k = rng.random_range(4..7);
    let filters: Vec<[f64; 3]> = (0..k)
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    let ones = vec![1.0; k];
    let lsq = LsqColor::new(&filters, &ones, "random").unwrap();
    let fd = Dims::new(1, k, 2, 2);
    // A consistent color keeps the solution off the clamp.
    let color = [
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
    ];
    let filled = Tensor4D::from_fn(fd, |_, c, _, _| {
        (0..3).map(|j| filters[c][j] * color[j]).sum::<f64>() + rng.random_range(-0.01..0.01)
    });
    let w = random(Dims::new(1, 3, 2, 2), &mut rng);
    let g = lsq.backward(&filled, &w).unwrap();
    st.check(
        "lsq filled",
        filled.data(),
        &all(fd.len()),
        g.filled.data(),
        |v| {
            dot(
                &lsq.apply(&Tensor4D::from_vec(fd, v.to_vec()).unwrap())
                    .unwrap(),
                &w,
            )
        },
    )?;
    let flat: Vec<f64> = filters.iter().flatten().copied().collect();
    let gf: Vec<f64> = g.filters.iter().flatten().copied().collect();
    st.check("lsq filters", &flat, &all(flat.len()), &gf, |v| {
        let fs: Vec<[f64; 3]> = v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        dot(
            &LsqColor::new(&fs, &ones, "random")
                .unwrap()
                .apply(&filled)
                .unwrap(),
            &w,
        )
    })
}

enum Input {
    Stack(cfanet::cfa::PlaneStack, CfaPattern),
    Rgb(Tensor4D),
}

impl Input {
    fn source(&self) -> Source<'_> {
        match self {
            Input::Stack(s, p) => Source::Stack(s, p),
            Input::Rgb(t) => Source::Rgb(t),
        }
    }
}

fn grad_model(
    st: &mut GradStats,
    name: &str,
    model: &Model,
    input: &Input,
    seed: u64,
) -> Result<(), String> {
    let mut rng = seeded_rng(seed);
    let out = model.clone().forward(input.source()).unwrap().output;
    let target = Tensor4D::from_fn(out.dims(), |_, _, _, _| rng.random::<f64>());
    let mut m = model.clone();
    m.zero_grad();
    let pass = m.forward(input.source()).unwrap();
    let (_, grad) = l2_loss(&pass.output, &target).unwrap();
    m.backward(&pass, &grad).unwrap();
    let params: Vec<(String, Vec<f64>, Vec<f64>)> = m
        .params()
        .into_iter()
        .map(|p| (p.name.clone(), p.value.to_vec(), p.grad.to_vec()))
        .collect();
    for (idx, (pname, value, g)) in params.iter().enumerate() {
        let coords: Vec<usize> = (0..value.len().min(8))
            .map(|_| rng.random_range(0..value.len()))
            .collect();
        st.check(&format!("{name} {pname}"), value, &coords, g, |v| {
            let mut probe = model.clone();
            probe.params()[idx].value.copy_from_slice(v);
            let out = probe.forward(input.source()).unwrap().output;
            l2_loss(&out, &target).unwrap().0
        })?;
    }
    Ok(())
}

fn mini_dmcnn(rng: &mut impl Rng) -> Model {
    let mut conv = |cin, cout, k| {
        let mut c = ConvLayer::new(cin, cout, k, k, 0).unwrap();
        c.kernel = random(c.kernel.dims(), rng).map(|v| 0.5 * v);
        c.bias = (0..cout).map(|_| rng.random_range(0.0..0.2)).collect();
        c
    };
    let layers = vec![
        Layer::Conv(conv(3, 5, 3)),
        Layer::Relu,
        Layer::Conv(conv(5, 4, 1)),
        Layer::Relu,
        Layer::Conv(conv(4, 3, 3)),
    ];
    Model {
        arch: Architecture::Dmcnn,
        input_channels: 3,
        output_channels: 3,
        input_mode: InputMode::Sparse,
        baseline: ResidualBaseline::None,
        pattern: None,
        layers,
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut st = GradStats::new();
    let bayer = CfaPattern::bayer().unwrap();
    let cygm = CfaPattern::builtin("cygm").unwrap();
    let body = VdConfig {
        depth: 3,
        width: 4,
        msra_factor: 1.0,
        ..VdConfig::default()
    };
    for seed in 0..SEEDS {
        grad_conv(&mut st, seed)?;
        grad_activations(&mut st, 1000 + seed)?;
        grad_batchnorm(&mut st, 2000 + seed)?;
        grad_pattern(&mut st, 3000 + seed)?;
        grad_losses(&mut st, 4000 + seed)?;

        let mut rng = seeded_rng(5000 + seed);
        let img = unit_image(2, 8, 8, &mut rng);
        let dmcnn = mini_dmcnn(&mut rng);
        let input = Input::Stack(mosaic(&img, &bayer).unwrap(), bayer.clone());
        grad_model(&mut st, "dmcnn", &dmcnn, &input, seed)?;
        let vd = build_dmcnn_vd(&body, seed).unwrap();
        grad_model(&mut st, "dmcnn-vd", &vd, &input, seed)?;
        let vd4 = build_dmcnn_vd(
            &VdConfig {
                input_channels: 4,
                baseline: ResidualBaseline::LsqPattern,
                ..body.clone()
            },
            seed,
        )
        .unwrap();
        let input4 = Input::Stack(mosaic(&img, &cygm).unwrap(), cygm.clone());
        grad_model(&mut st, "dmcnn-vd cygm", &vd4, &input4, seed)?;
        let pa = build_dmcnn_vd_pa((2, 2), &body, seed).unwrap();
        grad_model(&mut st, "dmcnn-vd-pa", &pa, &Input::Rgb(img), seed)?;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    ensure!(
        st.kinks * 100 < st.checks,
        "{} of {} coordinates hit kinks",
        st.kinks,
        st.checks
    );
    Ok(format!(
        "{} coordinates over {SEEDS} seeds per operation ({} skipped at kinks), worst rel err {:.2e}, {:.1?}",
        st.checks, st.kinks, st.worst, elapsed
    ))
}

// ---------------------------------------------------------------------------

fn direct_conv(x: &Tensor4D, k: &Tensor4D, bias: &[f64], pad: usize) -> Tensor4D {
    let (xd, kd) = (x.dims(), k.dims());
    let (oh, ow) = (xd.h + 2 * pad + 1 - kd.h, xd.w + 2 * pad + 1 - kd.w);
    let mut out = Tensor4D::zeros(Dims::new(xd.n, kd.n, oh, ow));
    for n in 0..xd.n {
        for o in 0..kd.n {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias[o];
                    for c in 0..kd.c {
                        for i in 0..kd.h {
                            for j in 0..kd.w {
                                let sy = (y + i) as isize - pad as isize;
                                let sx = (xo + j) as isize - pad as isize;
                                if sy >= 0
                                    && sx >= 0
                                    && (sy as usize) < xd.h
                                    && (sx as usize) < xd.w
                                {
                                    acc +=
                                        k.get(o, c, i, j) * x.get(n, c, sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                    out.set(n, o, y, xo, acc);
                }
            }
        }
    }
    out
}

fn conv_oracle() -> Outcome {
    let mut rng = seeded_rng(11);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in [1, 3, 5, 9] {
        for pad in [0, 1, 4] {
            for cin in 1..=8 {
                for cout in 1..=8 {
                    let mut layer = ConvLayer::new(cin, cout, k, k, pad).unwrap();
                    layer.kernel = random(layer.kernel.dims(), &mut rng);
                    layer.bias = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let x = random(Dims::new(1, cin, 10, 11), &mut rng);
                    let fast = conv2d_forward(&x, &layer).map_err(|e| e.to_string())?;
                    let slow = direct_conv(&x, &layer.kernel, &layer.bias, pad);
                    ensure!(
                        fast.dims() == slow.dims(),
                        "k{k} p{pad}: {} vs {}",
                        fast.dims(),
                        slow.dims()
                    );
                    let err = fast
                        .data()
                        .iter()
                        .zip(slow.data())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    ensure!(err <= 1e-10, "k{k} p{pad} {cin}->{cout}: {err:e}");
                    worst = worst.max(err);
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} shapes, max abs diff {worst:.2e}"))
}

fn mosaic_invariants() -> Outcome {
    let mut rng = seeded_rng(12);
    let mut constant_err: f64 = 0.0;
    for name in BUILTIN_NAMES {
        let p = CfaPattern::builtin(name).unwrap();
        for i in 0..50 {
            let (h, w) = (rng.random_range(8..20), rng.random_range(8..20));
            let img = unit_image(1, h, w, &mut rng);
            let s = mosaic(&img, &p).unwrap();
            let k = s.planes_count();
            for y in 0..h {
                for x in 0..w {
                    let nz = (0..k).filter(|&c| s.planes.get(0, c, y, x) != 0.0).count();
                    ensure!(nz == 1, "{name} image {i} ({y},{x}): {nz} nonzero planes");
                }
            }
            let filled = bilinear_fill(&s, &p).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let c = s.mask[y * w + x];
                    ensure!(
                        filled.get(0, c, y, x) == s.planes.get(0, c, y, x),
                        "{name}: fill moved a sample"
                    );
                }
            }
            let rgb = [
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            ];
            let flat = Tensor4D::from_fn(Dims::new(1, 3, h, w), |_, c, _, _| rgb[c]);
            let out = baseline_demosaic(&mosaic(&flat, &p).unwrap(), &p).unwrap();
            let err = out
                .data()
                .iter()
                .zip(flat.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure!(err <= 1e-12, "{name}: constant image off by {err:e}");
            constant_err = constant_err.max(err);
        }
    }
    Ok(format!(
        "5 patterns x 50 images; constant-image max error {constant_err:.1e}"
    ))
}

fn zero_last(m: &mut Model) {
    let last = m.last_conv_mut().unwrap();
    last.kernel = Tensor4D::zeros(last.kernel.dims());
    last.bias.fill(0.0);
}

fn residual_identity() -> Outcome {
    let mut rng = seeded_rng(13);
    let body = VdConfig {
        depth: 4,
        width: 8,
        msra_factor: 1.0,
        ..VdConfig::default()
    };
    let img = unit_image(2, 12, 12, &mut rng);
    let mut checked = Vec::new();
    for name in ["bayer", "diagonal_stripe", "cygm", "hirakawa"] {
        let p = CfaPattern::builtin(name).unwrap();
        let mut m = build_dmcnn_vd(
            &VdConfig {
                depth: 4,
                width: 8,
                msra_factor: 1.0,
                ..VdConfig::for_pattern(&p)
            },
            1,
        )
        .unwrap();
        zero_last(&mut m);
        let s = mosaic(&img, &p).unwrap();
        let out = forward_demosaic(&m, &s, &p).unwrap();
        let expect = if name == "bayer" {
            bilinear_demosaic_bayer(&s).unwrap()
        } else {
            baseline_demosaic(&s, &p).unwrap()
        };
        ensure!(
            out.data() == expect.data(),
            "dmcnn-vd on {name} differs from its baseline"
        );
        checked.push(name);
    }
    let mut pa = build_dmcnn_vd_pa((3, 3), &body, 2).unwrap();
    zero_last(&mut pa);
    let layer = pa.pattern.clone().unwrap();
    let stack = pattern_forward(&img, &layer).unwrap();
    let layout = pa.layout_for(&layer.to_pattern("learned").unwrap());
    let filled = FillOperator::for_stack(&stack, 3, 3)
        .unwrap()
        .apply(&stack.planes)
        .unwrap();
    let expect = LsqColor::for_layout(&layout, "learned")
        .unwrap()
        .apply(&filled)
        .unwrap();
    ensure!(
        pa.infer(Source::Rgb(&img)).unwrap().data() == expect.data(),
        "dmcnn-vd-pa differs from its baseline"
    );
    Ok(format!(
        "bit-exact for dmcnn-vd on {} and dmcnn-vd-pa (3x3)",
        checked.join("/")
    ))
}

fn projection() -> Outcome {
    let body = VdConfig {
        depth: 3,
        width: 8,
        msra_factor: 1.0,
        ..VdConfig::default()
    };
    let mut model = build_dmcnn_vd_pa((3, 3), &body, 4).unwrap();
    let imgs: Vec<Tensor4D> = (0..4).map(|i| noise_image(24, 24, 40 + i)).collect();
    let sampler = PatchSampler {
        patch_size: 12,
        per_image: 16,
        seed: 5,
        ..PatchSampler::default()
    };
    let pairs = extract_patches(
        &imgs,
        &sampler,
        &Sampling::Learned {
            tile_h: 3,
            tile_w: 3,
        },
    )
    .unwrap();
    let data = TrainData {
        train: pairs,
        val: Vec::new(),
        pattern: None,
    };
    let cfg = TrainConfig {
        iterations: 500,
        batch_size: 4,
        lr: 0.05,
        seed: 6,
        ..TrainConfig::default()
    };
    let mut violations = Vec::new();
    let mut at_bound = 0;
    let mut steps = 0;
    let res = train(&mut model, &data, &cfg, None, |it, m, _| {
        steps += 1;
        let w = &m.pattern.as_ref().unwrap().weights;
        if let Some(bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            violations.push((it, *bad));
        }
        at_bound += w.iter().filter(|&&v| v == 0.0 || v == 1.0).count();
    });
    res.map_err(|e| e.to_string())?;
    ensure!(steps == 500, "{steps} steps ran");
    ensure!(
        violations.is_empty(),
        "weights left [0,1]: {:?}",
        &violations[..violations.len().min(5)]
    );
    ensure!(at_bound > 0, "projection never became active");
    Ok(format!(
        "500 steps, all 27 weights in [0,1] every step ({at_bound} clamped weight-steps)"
    ))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let bayer = CfaPattern::bayer().unwrap();
    let imgs = [synthetic_scene(96, 96, 1), synthetic_scene(96, 96, 2)];
    let sampler = PatchSampler {
        patch_size: 16,
        per_image: 100,
        seed: 1,
        ..PatchSampler::default()
    };
    let pairs = extract_patches(&imgs, &sampler, &Sampling::Cfa(bayer.clone())).unwrap();
    ensure!(pairs.len() == 200, "{} patches", pairs.len());
    let mut model = build_dmcnn_vd(
        &VdConfig {
            depth: 6,
            width: 16,
            ..VdConfig::default()
        },
        1,
    )
    .unwrap();
    let data = TrainData {
        train: pairs.clone(),
        val: Vec::new(),
        pattern: Some(bayer.clone()),
    };
    let cfg = TrainConfig {
        iterations: 2000,
        batch_size: 8,
        lr: 1e-3,
        seed: 2,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &cfg, None, |_, _, _| {}).map_err(|e| e.to_string())?;
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let (truth, stack) = collate(&pairs, &idx).unwrap();
    let stack = stack.unwrap();
    let base = cpsnr(
        &bilinear_demosaic_bayer(&stack).unwrap().clamp(0.0, 1.0),
        &truth,
        1.0,
        0,
    )
    .unwrap();
    let net = cpsnr(
        &forward_demosaic(&model, &stack, &bayer)
            .unwrap()
            .clamp(0.0, 1.0),
        &truth,
        1.0,
        0,
    )
    .unwrap();
    let elapsed = start.elapsed();
    ensure!(
        net - base >= 1.0,
        "network {net:.3} dB vs bilinear {base:.3} dB"
    );
    ensure!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    Ok(format!(
        "CPSNR {net:.2} dB vs bilinear {base:.2} dB (+{:.2} dB), {:.1?}",
        net - base,
        elapsed
    ))
}

fn dmcnn_shapes() -> Outcome {
    let m = build_dmcnn(0).unwrap();
    let counts: Vec<usize> = m.conv_layers().map(|c| c.param_count()).collect();
    // conv1: 9*9*3*128 weights + 128 biases; conv2: 1*1*128*64 + 64; conv3: 5*5*64*3 + 3.
    let expect = vec![9 * 9 * 3 * 128 + 128, 128 * 64 + 64, 5 * 5 * 64 * 3 + 3];
    ensure!(counts == expect, "{counts:?} vs {expect:?}");
    ensure!(counts[0] == 31_232, "conv1 {}", counts[0]);
    let p = CfaPattern::bayer().unwrap();
    let img = unit_image(1, 33, 33, &mut seeded_rng(14));
    let out = forward_demosaic(&m, &mosaic(&img, &p).unwrap(), &p).unwrap();
    ensure!(
        out.dims() == Dims::new(1, 3, 21, 21),
        "output {}",
        out.dims()
    );
    Ok(format!("33x33 -> 21x21; params {counts:?}"))
}

fn svec() -> Outcome {
    let cfg = SvecConfig::default();
    let mut rng = seeded_rng(15);
    let values: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..50_000.0)).collect();
    let data: Vec<f64> = (0..3).flat_map(|_| values.iter().copied()).collect();
    let img =
        RadianceImage::new(Tensor4D::from_vec(Dims::new(1, 3, 1, 1000), data).unwrap()).unwrap();
    let norm = normalize_radiance(&img, &cfg).unwrap();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let (r_max, r_min) = (4096.0, 1.0 / 64.0);
    for (i, &v) in values.iter().enumerate() {
        let direct = ((r_max - r_min) / (hi - lo) * (v - lo)).min(r_max).floor();
        let got = norm.get(0, 0, 0, i);
        ensure!(got == direct, "value {v}: {got} vs {direct}");
        ensure!(
            got.fract() == 0.0 && (0.0..=4096.0).contains(&got),
            "value {v} -> {got}"
        );
    }
    let mut order: Vec<usize> = (0..1000).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    ensure!(
        order
            .windows(2)
            .all(|p| norm.get(0, 0, 0, p[0]) <= norm.get(0, 0, 0, p[1])),
        "not monotone"
    );

    let scene = Tensor4D::from_fn(Dims::new(1, 3, 16, 16), |_, _, _, _| {
        rng.random_range(0.0..4096.0_f64).floor()
    });
    let stack = svec_mosaic(&scene, &cfg).unwrap();
    let comp = exposure_compensate(&stack, &cfg).unwrap();
    let layout = svec_pattern(&cfg).plane_layout();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for y in 0..16 {
        for x in 0..16 {
            let cell = layout.cell(y, x);
            let f = layout.filters[layout.cell_plane[cell]];
            let e = layout.exposures[layout.cell_plane[cell]];
            let truth: f64 = (0..3).map(|c| f[c] * scene.get(0, c, y, x)).sum();
            if truth * e >= 4095.0 {
                continue;
            }
            let err = (comp.get(0, 0, y, x) - truth).abs();
            ensure!(err <= 1.0, "({y},{x}) off by {err}");
            worst = worst.max(err);
            checked += 1;
        }
    }
    ensure!(checked > 50, "only {checked} unsaturated samples");
    let model = build_svec_model(
        SvecArch::DmcnnVd,
        &VdConfig {
            depth: 3,
            width: 4,
            ..VdConfig::default()
        },
        1,
    )
    .unwrap();
    ensure!(
        model.input_channels == 6 && stack.planes_count() == 6,
        "input channels"
    );
    let out = forward_demosaic(&model, &stack, &svec_pattern(&cfg)).unwrap();
    ensure!(out.dims().c == 3, "output {}", out.dims());
    Ok(format!(
        "1000 values match; {checked} unsaturated samples within {worst} level; 6 -> 3 channels"
    ))
}

fn metrics() -> Outcome {
    let d = Dims::new(1, 3, 8, 8);
    let truth = Tensor4D::filled(d, 100.0);
    let uniform = truth.map(|v| v + 1.0);
    let p = psnr(&uniform, &truth, 255.0).unwrap();
    let red = Tensor4D::from_fn(d, |_, c, _, _| if c == 0 { 101.0 } else { 100.0 });
    let c = cpsnr(&red, &truth, 255.0, 0).unwrap();
    ensure!(
        (p - 48.1308).abs() < 1e-3 && (p - 20.0 * 255f64.log10()).abs() < 1e-9,
        "psnr {p}"
    );
    ensure!(
        (c - 52.9020).abs() < 1e-3 && (c - 10.0 * (3.0 * 255f64 * 255.0).log10()).abs() < 1e-9,
        "cpsnr {c}"
    );
    Ok(format!("PSNR {p:.4} dB, CPSNR {c:.4} dB"))
}

fn serialization() -> Outcome {
    let mut rng = seeded_rng(16);
    let p = CfaPattern::bayer().unwrap();
    let img = unit_image(1, 16, 16, &mut rng);
    let s = mosaic(&img, &p).unwrap();
    let body = VdConfig {
        depth: 4,
        width: 8,
        msra_factor: 1.0,
        ..VdConfig::default()
    };
    for m in [build_dmcnn(1).unwrap(), build_dmcnn_vd(&body, 2).unwrap()] {
        let back = decode_weights(&encode_weights(&m)).map_err(|e| e.to_string())?;
        ensure!(
            forward_demosaic(&m, &s, &p).unwrap().data()
                == forward_demosaic(&back, &s, &p).unwrap().data(),
            "{} forward differs",
            m.arch.name()
        );
    }
    let pa = build_dmcnn_vd_pa((3, 3), &body, 3).unwrap();
    let back = decode_weights(&encode_weights(&pa)).unwrap();
    ensure!(
        pa.infer(Source::Rgb(&img)).unwrap().data()
            == back.infer(Source::Rgb(&img)).unwrap().data(),
        "pa forward differs"
    );

    let bytes = encode_weights(&pa);
    let mut magic = bytes.clone();
    magic[3] ^= 1;
    ensure!(
        matches!(decode_weights(&magic), Err(Error::Format(_))),
        "bad magic not a format error"
    );
    let mut version = bytes.clone();
    version[8] = 7;
    ensure!(
        matches!(
            decode_weights(&version),
            Err(Error::Version { found: 7, .. })
        ),
        "bad version"
    );
    for cut in [0, 10, bytes.len() / 3, bytes.len() - 1] {
        ensure!(
            matches!(decode_weights(&bytes[..cut]), Err(Error::Truncated(_))),
            "cut at {cut} not truncated"
        );
    }
    let mut trailing = bytes;
    trailing.extend_from_slice(&[0, 0]);
    ensure!(
        matches!(decode_weights(&trailing), Err(Error::Format(_))),
        "trailing bytes accepted"
    );
    Ok(
        "forward bit-exact for 3 architectures; magic/version/truncation/trailing errors distinct"
            .into(),
    )
}

fn train_run(out: &Path) -> Result<(), String> {
    let args = [
        "cfanet",
        "--seed",
        "9",
        "--threads",
        "1",
        "train",
        "--out",
        out.to_str().unwrap(),
        "--synthetic",
        "6",
        "--synthetic-size",
        "48",
        "--depth",
        "3",
        "--width",
        "8",
        "--iterations",
        "40",
        "--batch-size",
        "4",
        "--patch-size",
        "16",
        "--patches-per-image",
        "10",
        "--augment",
        "--noise-sigma",
        "0.01",
        "--checkpoint-every",
        "20",
        "--validate-every",
        "10",
        "--lr",
        "1e-3",
    ];
    let cli = cfanet_cli::Cli::try_parse_from(args).map_err(|e| e.to_string())?;
    cfanet_cli::execute(&cli).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_run(&a)?;
    train_run(&b)?;
    let files = [
        "train_log.csv",
        "checkpoint.cfw",
        "checkpoint.opt",
        "weights.cfw",
    ];
    for f in files {
        let x = std::fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure!(x == y, "{f} differs between runs");
    }
    let rows = std::fs::read_to_string(a.join("train_log.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    Ok(format!(
        "{} identical across two runs ({rows} log rows)",
        files.join(", ")
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient suite", gradient_suite),
        ("conv oracle", conv_oracle),
        ("mosaic invariants", mosaic_invariants),
        ("residual identity", residual_identity),
        ("projection", projection),
        ("overfit sanity", overfit),
        ("dmcnn shape contract", dmcnn_shapes),
        ("svec", svec),
        ("metrics", metrics),
        ("serialization", serialization),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {:?}",
                p.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(p.downcast_ref::<&str>().copied())
            ))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
