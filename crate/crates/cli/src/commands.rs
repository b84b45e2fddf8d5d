use std::path::{Path, PathBuf};

use log::{info, warn};

use cfanet::cfa::{load_mosaic, mosaic, mosaic_preview, save_mosaic, CfaPattern, PlaneStack};
use cfanet::data::{
    add_sample_noise, extract_patches, list_images, load_image, save_image, split_names,
    synthetic_scene, PatchSampler, Sampling,
};
use cfanet::evaluate::{baseline_demosaic, evaluate_files, score, EvalSampling, Reconstructor};
use cfanet::layers::MsraScale;
use cfanet::metrics::report_fields;
use cfanet::models::{
    build_dmcnn_vd, build_dmcnn_vd_pa, build_dmcnn_with, build_svec_model, load_weights,
    load_weights_into, save_weights, Model, Source, SvecArch, VdConfig, DMCNN_INIT_STDDEV,
};
use cfanet::optim::OptimizerKind;
use cfanet::pfm::{read_pfm, write_pfm};
use cfanet::svec::{
    from_unit, normalize_radiance, svec_pattern, to_unit, RadianceImage, SvecConfig,
};
use cfanet::train::{loss_target, train, RunDir, TrainConfig, TrainData};
use cfanet::Tensor4D;

use crate::config::{
    effective_config, required, DemosaicArgs, EvaluateArgs, MosaicArgs, SvecReconstructArgs,
    SvecSimulateArgs, TrainArgs, CONFIG_ECHO,
};
use crate::CliError;

/// Global settings shared by all commands.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Context {
    pub seed: u64,
    pub threads: usize,
}

impl Context {
    /// Independent seed for one random stream of a run.
    fn stream(&self, id: u64) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(id)
    }
}

const MOSAIC_EXT: &str = "cfm";
pub const WEIGHTS_FILE: &str = "weights.cfw";
pub const PATTERN_FILE: &str = "pattern.txt";

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| runtime(path, e))
}

/// Writes the effective config as `<output>.config.toml` next to a file output.
fn echo_beside(output: &Path, text: &str) -> Result<(), CliError> {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(CONFIG_ECHO);
    write_text(&output.with_file_name(name), text)
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn is_svec(pattern: &CfaPattern) -> bool {
    pattern.exposures.iter().any(|&e| e != 1.0)
}

/// A radiance map: PFM, or an 8-bit image taken as linear values.
fn load_radiance(path: &Path) -> Result<RadianceImage, CliError> {
    let pixels = if has_ext(path, "pfm") {
        read_pfm(path)?
    } else {
        load_image(path)?
    };
    Ok(RadianceImage::new(pixels)?)
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    let model = load_weights(path)?;
    info!(
        "loaded {} ({} parameters) from {}",
        model.arch.name(),
        model.param_count(),
        path.display()
    );
    Ok(model)
}

fn check_channels(model: &Model, pattern: &CfaPattern) -> Result<(), CliError> {
    if model.pattern.is_some() {
        return Err(CliError::Usage(
            "these weights carry a learned pattern; pass an RGB image instead of a mosaic".into(),
        ));
    }
    let planes = pattern.plane_count();
    if model.input_channels != planes {
        return Err(CliError::Usage(format!(
            "weights expect {} input channels but pattern `{}` has {} planes",
            model.input_channels, pattern.name, planes
        )));
    }
    Ok(())
}

pub fn cmd_mosaic(ctx: &Context, a: &MosaicArgs) -> Result<(), CliError> {
    let input = required(&a.input, "input", "mosaic")?;
    let output = required(&a.output, "output", "mosaic")?;
    let pattern = CfaPattern::resolve(a.pattern.as_deref().unwrap_or("bayer"))?;
    let image = load_image(input)?;
    let mut stack = mosaic(&image, &pattern)?;
    add_sample_noise(&mut stack, a.noise_sigma.unwrap_or(0.0), ctx.stream(4))?;
    save_mosaic(&stack, &pattern, output)?;
    if let Some(preview) = &a.preview {
        save_image(preview, &mosaic_preview(&stack, &pattern))?;
    }
    echo_beside(output, &effective_config(ctx, "mosaic", a))?;
    info!(
        "{}: {} planes, {}x{}, pattern {}",
        output.display(),
        stack.planes_count(),
        stack.height(),
        stack.width(),
        pattern.name
    );
    Ok(())
}

enum Input {
    Mosaic(PlaneStack, CfaPattern),
    Rgb(Tensor4D),
}

fn read_input(path: &Path, pattern: Option<&str>) -> Result<Input, CliError> {
    if has_ext(path, MOSAIC_EXT) {
        let (stack, stored) = load_mosaic(path)?;
        if let Some(name) = pattern {
            let given = CfaPattern::resolve(name)?;
            if given.plane_layout() != stored.plane_layout() {
                return Err(CliError::Usage(format!(
                    "--pattern {name} does not match the mosaic's pattern `{}`",
                    stored.name
                )));
            }
        }
        return Ok(Input::Mosaic(stack, stored));
    }
    let image = load_image(path)?;
    match pattern {
        Some(name) => {
            let p = CfaPattern::resolve(name)?;
            if is_svec(&p) {
                return Err(CliError::Usage(
                    "SVEC patterns take radiance input; use `svec-simulate` first".into(),
                ));
            }
            Ok(Input::Mosaic(mosaic(&image, &p)?, p))
        }
        None => Ok(Input::Rgb(image)),
    }
}

/// Reconstruction in `[0, 1]` units (unclamped) and the output crop model
/// applies, if any.
fn run_reconstruction(model: Option<&Model>, input: &Input) -> Result<Tensor4D, CliError> {
    match (model, input) {
        (Some(m), Input::Mosaic(stack, p)) => {
            check_channels(m, p)?;
            Ok(m.infer(Source::Stack(stack, p))?)
        }
        (Some(m), Input::Rgb(img)) => {
            if m.pattern.is_none() {
                return Err(CliError::Usage(
                    "an RGB image input needs --pattern (or weights with a learned pattern)".into(),
                ));
            }
            Ok(m.infer(Source::Rgb(img))?)
        }
        (None, Input::Mosaic(stack, p)) => Ok(baseline_demosaic(stack, p)?),
        (None, Input::Rgb(_)) => Err(CliError::Usage(
            "--baseline-only needs a mosaic file or --pattern".into(),
        )),
    }
}

fn print_metrics(
    name: &str,
    out: &Tensor4D,
    truth: &Tensor4D,
    peak: f64,
    border: usize,
) -> Result<(), CliError> {
    let report = score(name, &out.clamp(0.0, 1.0), truth, peak, border)?;
    println!("{}", report_fields(&report).join(","));
    Ok(())
}

fn model_for(
    weights: Option<&PathBuf>,
    baseline_only: bool,
    section: &str,
) -> Result<Option<Model>, CliError> {
    if baseline_only {
        return Ok(None);
    }
    let path = weights.ok_or_else(|| {
        CliError::Usage(format!(
            "missing --weights (or `weights` in [{section}]); use --baseline-only for interpolation alone"
        ))
    })?;
    load_model(path).map(Some)
}

pub fn cmd_demosaic(ctx: &Context, a: &DemosaicArgs) -> Result<(), CliError> {
    let input_path = required(&a.input, "input", "demosaic")?;
    let output = required(&a.output, "output", "demosaic")?;
    let model = model_for(a.weights.as_ref(), a.baseline_only, "demosaic")?;
    let input = read_input(input_path, a.pattern.as_deref())?;
    if let Input::Mosaic(_, p) = &input {
        if is_svec(p) {
            return Err(CliError::Usage(
                "this is an SVEC mosaic; use `svec-reconstruct`".into(),
            ));
        }
    }
    let out = run_reconstruction(model.as_ref(), &input)?;
    if has_ext(output, "pfm") {
        write_pfm(output, &out)?;
    } else {
        save_image(output, &out.clamp(0.0, 1.0))?;
    }
    echo_beside(output, &effective_config(ctx, "demosaic", a))?;
    if let Some(truth_path) = &a.truth {
        let truth = load_image(truth_path)?;
        let truth = match &model {
            Some(m) => loss_target(m, &truth)?,
            None => truth,
        };
        let name = input_path.file_name().unwrap_or_default().to_string_lossy();
        print_metrics(&name, &out, &truth, 255.0, a.border.unwrap_or(0))?;
    }
    Ok(())
}

pub fn cmd_svec_simulate(ctx: &Context, a: &SvecSimulateArgs) -> Result<(), CliError> {
    let input = required(&a.input, "input", "svec-simulate")?;
    let output = required(&a.output, "output", "svec-simulate")?;
    let cfg = SvecConfig::default();
    let normalized = normalize_radiance(&load_radiance(input)?, &cfg)?;
    let stack = cfanet::svec::svec_mosaic(&normalized, &cfg)?;
    let pattern = svec_pattern(&cfg);
    save_mosaic(&stack, &pattern, output)?;
    if let Some(p) = &a.preview {
        save_image(p, &mosaic_preview(&stack, &pattern))?;
    }
    if let Some(t) = &a.truth_out {
        write_pfm(t, &normalized)?;
    }
    echo_beside(output, &effective_config(ctx, "svec-simulate", a))?;
    Ok(())
}

pub fn cmd_svec_reconstruct(ctx: &Context, a: &SvecReconstructArgs) -> Result<(), CliError> {
    let input_path = required(&a.input, "input", "svec-reconstruct")?;
    let output = required(&a.output, "output", "svec-reconstruct")?;
    let cfg = SvecConfig::default();
    let model = model_for(a.weights.as_ref(), a.baseline_only, "svec-reconstruct")?;
    let (stack, pattern) = load_mosaic(input_path)?;
    if !is_svec(&pattern) {
        return Err(CliError::Usage(format!(
            "`{}` is not an SVEC mosaic (pattern `{}`); use `demosaic`",
            input_path.display(),
            pattern.name
        )));
    }
    let out = run_reconstruction(model.as_ref(), &Input::Mosaic(stack, pattern))?;
    write_pfm(output, &from_unit(&out.clamp(0.0, 1.0), &cfg))?;
    echo_beside(output, &effective_config(ctx, "svec-reconstruct", a))?;
    if let Some(truth_path) = &a.truth {
        let truth = to_unit(&read_pfm(truth_path)?, &cfg);
        let truth = match &model {
            Some(m) => loss_target(m, &truth)?,
            None => truth,
        };
        let name = input_path.file_name().unwrap_or_default().to_string_lossy();
        print_metrics(&name, &out, &truth, cfg.r_max, a.border.unwrap_or(0))?;
    }
    Ok(())
}

pub fn cmd_evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<(), CliError> {
    let dir = required(&a.dir, "dir", "evaluate")?;
    let model = model_for(a.weights.as_ref(), a.baseline_only, "evaluate")?;
    let svec_cfg = SvecConfig::default();
    let sampling = match (&model, &a.pattern) {
        (Some(m), _) if m.pattern.is_some() => EvalSampling::Learned,
        (_, Some(name)) => {
            let p = CfaPattern::resolve(name)?;
            if let Some(m) = &model {
                check_channels(m, &p)?;
            }
            if is_svec(&p) {
                EvalSampling::Svec(svec_cfg)
            } else {
                EvalSampling::Cfa(p)
            }
        }
        (_, None) => return Err(CliError::Usage("missing --pattern".into())),
    };
    let paths = list_images(dir)?;
    let rec = match &model {
        Some(m) => Reconstructor::Model(m),
        None => Reconstructor::Baseline,
    };
    let border = a.border.unwrap_or(0);
    let report = match sampling {
        EvalSampling::Svec(cfg) => evaluate_files(rec, &paths, &sampling, border, cfg.r_max, |p| {
            let img = load_radiance(p).map_err(|e| cfanet::Error::Format(e.to_string()))?;
            Ok(to_unit(&normalize_radiance(&img, &cfg)?, &cfg))
        }),
        _ => evaluate_files(rec, &paths, &sampling, border, 255.0, load_image),
    };
    match &a.output {
        Some(path) => {
            report.save_csv(path)?;
            echo_beside(path, &effective_config(ctx, "evaluate", a))?;
        }
        None => report.write_csv(std::io::stdout().lock())?,
    }
    if let Some(mean) = report.aggregate() {
        info!(
            "{} images, mean CPSNR {:.4} dB",
            report.images.len(),
            mean.cpsnr
        );
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Arch {
    Dmcnn,
    DmcnnVd,
    SvecDmcnn,
    SvecVd,
    Learned(usize, usize),
}

fn parse_tile(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--tile must look like 3x3, got `{s}`"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        h.trim().parse().map_err(|_| bad())?,
        w.trim().parse().map_err(|_| bad())?,
    ))
}

/// Training truth images in `[0, 1]`, by file name.
fn training_images(
    ctx: &Context,
    a: &TrainArgs,
    svec: bool,
) -> Result<Vec<(String, Tensor4D)>, CliError> {
    let cfg = SvecConfig::default();
    let to_truth = |raw: Tensor4D| -> Result<Tensor4D, CliError> {
        if svec {
            let img = RadianceImage::new(raw)?;
            Ok(to_unit(&normalize_radiance(&img, &cfg)?, &cfg))
        } else {
            Ok(raw.clamp(0.0, 1.0))
        }
    };
    let mut out = Vec::new();
    match &a.data {
        Some(dir) => {
            for path in list_images(dir)? {
                let name = path
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                let raw = if has_ext(&path, "pfm") {
                    read_pfm(&path)
                } else {
                    load_image(&path)
                };
                match raw.map_err(CliError::from).and_then(to_truth) {
                    Ok(t) => out.push((name, t)),
                    Err(e) => warn!("skipping {}: {e}", path.display()),
                }
            }
        }
        None => {
            let (count, size) = (a.synthetic.unwrap_or(8), a.synthetic_size.unwrap_or(128));
            for i in 0..count {
                let scene = synthetic_scene(size, size, ctx.stream(100 + i as u64));
                // Synthetic radiance spans twelve stops.
                let raw = if svec {
                    scene.map(|v| (12.0 * v).exp2())
                } else {
                    scene
                };
                out.push((format!("synthetic_{i:04}.png"), to_truth(raw)?));
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no usable training images".into()));
    }
    Ok(out)
}

fn build_model(
    ctx: &Context,
    a: &TrainArgs,
    arch: Arch,
    pattern: Option<&CfaPattern>,
) -> Result<Model, CliError> {
    let seed = ctx.stream(0);
    let body = |base: VdConfig| VdConfig {
        depth: a.depth.unwrap_or(base.depth),
        width: a.width.unwrap_or(base.width),
        msra_factor: a.msra_factor.unwrap_or(base.msra_factor),
        msra_scale: if a.msra_absolute {
            MsraScale::Absolute
        } else {
            MsraScale::Multiplier
        },
        ..base
    };
    let planes = pattern.map_or(3, |p| p.plane_count());
    Ok(match arch {
        Arch::Dmcnn => build_dmcnn_with(planes, DMCNN_INIT_STDDEV, seed)?,
        Arch::DmcnnVd => build_dmcnn_vd(
            &body(VdConfig::for_pattern(pattern.expect("fixed pattern"))),
            seed,
        )?,
        Arch::SvecDmcnn => build_svec_model(SvecArch::Dmcnn, &body(VdConfig::default()), seed)?,
        Arch::SvecVd => build_svec_model(SvecArch::DmcnnVd, &body(VdConfig::default()), seed)?,
        Arch::Learned(h, w) => build_dmcnn_vd_pa((h, w), &body(VdConfig::default()), seed)?,
    })
}

fn run_training(ctx: &Context, a: &TrainArgs, section: &str, design: bool) -> Result<(), CliError> {
    let out = required(&a.out, "out", section)?;
    let arch = if design {
        let (h, w) = parse_tile(a.tile.as_deref().unwrap_or("3x3"))?;
        Arch::Learned(h, w)
    } else {
        match a.arch.as_deref().unwrap_or("dmcnn-vd") {
            "dmcnn" => Arch::Dmcnn,
            "dmcnn-vd" => Arch::DmcnnVd,
            "svec-dmcnn" => Arch::SvecDmcnn,
            "svec-vd" => Arch::SvecVd,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown --arch `{other}` (expected dmcnn, dmcnn-vd, svec-dmcnn, svec-vd)"
                )))
            }
        }
    };
    let svec = matches!(arch, Arch::SvecDmcnn | Arch::SvecVd);
    let svec_cfg = SvecConfig::default();
    let (sampling, pattern) = match arch {
        Arch::Learned(h, w) => (
            Sampling::Learned {
                tile_h: h,
                tile_w: w,
            },
            None,
        ),
        _ if svec => (Sampling::Svec(svec_cfg), Some(svec_pattern(&svec_cfg))),
        _ => {
            let p = CfaPattern::resolve(a.pattern.as_deref().unwrap_or("bayer"))?;
            if is_svec(&p) {
                return Err(CliError::Usage(
                    "use --arch svec-dmcnn or svec-vd for SVEC".into(),
                ));
            }
            (Sampling::Cfa(p.clone()), Some(p))
        }
    };
    let mut model = build_model(ctx, a, arch, pattern.as_ref())?;
    if let Some(init) = &a.init {
        load_weights_into(&mut model, init)?;
        info!("fine-tuning from {}", init.display());
    }

    let images = training_images(ctx, a, svec)?;
    let names: Vec<String> = images.iter().map(|(n, _)| n.clone()).collect();
    let manifest = match &a.manifest {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| runtime(p, e))?),
        None => None,
    };
    let (train_names, val_names) = split_names(&names, manifest.as_deref())?;
    let pick = |wanted: &[String]| -> Vec<Tensor4D> {
        images
            .iter()
            .filter(|(n, _)| wanted.contains(n))
            .map(|(_, t)| t.clone())
            .collect()
    };
    let default_patch = if arch == Arch::Dmcnn { 33 } else { 64 };
    let sampler = PatchSampler {
        patch_size: a.patch_size.unwrap_or(default_patch),
        stride: a.stride,
        per_image: a.patches_per_image.unwrap_or(100),
        seed: ctx.stream(1),
        rotations: a.augment,
        flips: a.augment,
        noise_sigma: a.noise_sigma.unwrap_or(0.0),
    };
    let train_pairs = extract_patches(&pick(&train_names), &sampler, &sampling)?;
    if train_pairs.is_empty() {
        return Err(CliError::Usage(format!(
            "no training patches: every image is smaller than the {}px patch",
            sampler.patch_size
        )));
    }
    let val_sampler = PatchSampler {
        seed: ctx.stream(2),
        ..sampler.clone()
    };
    let val_pairs = extract_patches(&pick(&val_names), &val_sampler, &sampling)?;
    info!(
        "{} training / {} validation patches from {} / {} images",
        train_pairs.len(),
        val_pairs.len(),
        train_names.len(),
        val_names.len()
    );

    let optimizer = match a.optimizer.as_deref().unwrap_or("adam") {
        "adam" => OptimizerKind::adam(),
        "sgd" => OptimizerKind::sgd_clip(a.clip.unwrap_or(OptimizerKind::DEFAULT_CLIP)),
        other => {
            return Err(CliError::Usage(format!(
                "unknown --optimizer `{other}` (adam or sgd)"
            )))
        }
    };
    let cfg = TrainConfig {
        iterations: a.iterations.unwrap_or(1000),
        batch_size: a.batch_size.unwrap_or(64),
        optimizer,
        lr: a.lr.unwrap_or(1e-4),
        seed: ctx.stream(3),
        checkpoint_every: a.checkpoint_every.unwrap_or(500),
        validate_every: a.validate_every.unwrap_or(100),
    };
    std::fs::create_dir_all(out).map_err(|e| runtime(out, e))?;
    write_text(&out.join(CONFIG_ECHO), &effective_config(ctx, section, a))?;
    let data = TrainData {
        train: train_pairs,
        val: val_pairs,
        pattern,
    };
    let run = RunDir {
        dir: out.clone(),
        resume: a.resume,
    };
    let log = train(&mut model, &data, &cfg, Some(&run), |_, _, _| {})?;
    save_weights(&model, &out.join(WEIGHTS_FILE))?;
    if let Some(layer) = &model.pattern {
        layer.to_pattern("learned")?.save(&out.join(PATTERN_FILE))?;
    }
    if let Some(last) = log.rows.last() {
        info!(
            "finished at iteration {} with loss {:.6e}",
            last.iteration, last.loss
        );
    }
    Ok(())
}

pub fn cmd_train(ctx: &Context, a: &TrainArgs) -> Result<(), CliError> {
    run_training(ctx, a, "train", false)
}

/// Trains DMCNN-VD-Pa and writes the learned pattern next to the weights.
pub fn cmd_design_pattern(ctx: &Context, a: &TrainArgs) -> Result<(), CliError> {
    run_training(ctx, a, "design-pattern", true)
}
