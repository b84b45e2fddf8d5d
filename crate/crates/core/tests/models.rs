use cfanet::cfa::{bilinear_demosaic_bayer, bilinear_fill, lsq_color_baseline, mosaic, CfaPattern};
use cfanet::layers::init::seeded_rng;
use cfanet::models::{
    build_dmcnn, build_dmcnn_vd, build_dmcnn_vd_pa, build_svec_model, decode_weights,
    encode_weights, forward_demosaic, load_weights, pattern_forward, save_weights, Model, Source,
    SvecArch, VdConfig,
};
use cfanet::{Dims, Error, Tensor4D};
use rand::Rng;

fn image(n: usize, h: usize, w: usize, seed: u64) -> Tensor4D {
    let mut rng = seeded_rng(seed);
    Tensor4D::from_fn(Dims::new(n, 3, h, w), |_, _, _, _| rng.random::<f64>())
}

fn small_body() -> VdConfig {
    VdConfig {
        depth: 4,
        width: 8,
        msra_factor: 1.0,
        ..VdConfig::default()
    }
}

fn zero_last(model: &mut Model) {
    let last = model.last_conv_mut().unwrap();
    last.kernel = Tensor4D::zeros(last.kernel.dims());
    last.bias.fill(0.0);
}

#[test]
fn dmcnn_shape_contract() {
    let model = build_dmcnn(0).unwrap();
    let counts: Vec<usize> = model.conv_layers().map(|c| c.param_count()).collect();
    // 3*9*9*128 + 128, 128*64 + 64, 64*5*5*3 + 3
    assert_eq!(counts, vec![31_232, 8_256, 4_803]);
    assert_eq!(model.param_count(), 44_291);
    let img = image(1, 33, 33, 1);
    let p = CfaPattern::bayer().unwrap();
    let out = forward_demosaic(&model, &mosaic(&img, &p).unwrap(), &p).unwrap();
    assert_eq!(out.dims(), Dims::new(1, 3, 21, 21));
}

#[test]
fn vd_zero_residual_is_bilinear_baseline() {
    let mut model = build_dmcnn_vd(&small_body(), 3).unwrap();
    zero_last(&mut model);
    let p = CfaPattern::bayer().unwrap();
    let s = mosaic(&image(2, 12, 10, 2), &p).unwrap();
    let out = forward_demosaic(&model, &s, &p).unwrap();
    assert_eq!(out, bilinear_demosaic_bayer(&s).unwrap());
}

#[test]
fn vd_zero_residual_is_lsq_baseline_for_other_patterns() {
    for name in ["cygm", "hirakawa", "diagonal_stripe"] {
        let p = CfaPattern::builtin(name).unwrap();
        let mut model = build_dmcnn_vd(
            &VdConfig {
                depth: 3,
                width: 4,
                ..VdConfig::for_pattern(&p)
            },
            1,
        )
        .unwrap();
        zero_last(&mut model);
        let s = mosaic(&image(1, 12, 12, 5), &p).unwrap();
        let baseline =
            lsq_color_baseline(&bilinear_fill(&s, &p).unwrap(), &p.plane_layout(), name).unwrap();
        assert_eq!(
            forward_demosaic(&model, &s, &p).unwrap(),
            baseline,
            "{name}"
        );
    }
}

#[test]
fn pa_zero_residual_is_its_lsq_baseline() {
    let mut model = build_dmcnn_vd_pa((3, 3), &small_body(), 7).unwrap();
    zero_last(&mut model);
    let img = image(1, 12, 12, 8);
    let layer = model.pattern.clone().unwrap();
    let pattern = layer.to_pattern("learned").unwrap();
    let stack = pattern_forward(&img, &layer).unwrap();
    let layout = model.layout_for(&pattern);
    let fill = cfanet::cfa::FillOperator::for_stack(&stack, 3, 3).unwrap();
    let baseline =
        lsq_color_baseline(&fill.apply(&stack.planes).unwrap(), &layout, "learned").unwrap();
    assert_eq!(model.infer(Source::Rgb(&img)).unwrap(), baseline);
}

#[test]
fn weights_round_trip_is_forward_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = CfaPattern::bayer().unwrap();
    let img = image(1, 16, 16, 4);
    let s = mosaic(&img, &p).unwrap();
    let models = [
        build_dmcnn(1).unwrap(),
        build_dmcnn_vd(&small_body(), 2).unwrap(),
    ];
    for (i, m) in models.iter().enumerate() {
        let path = dir.path().join(format!("m{i}.cfw"));
        save_weights(m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(
            forward_demosaic(m, &s, &p).unwrap().data(),
            forward_demosaic(&back, &s, &p).unwrap().data()
        );
    }
    let pa = build_dmcnn_vd_pa((2, 2), &small_body(), 3).unwrap();
    let back = decode_weights(&encode_weights(&pa)).unwrap();
    assert_eq!(
        pa.infer(Source::Rgb(&img)).unwrap(),
        back.infer(Source::Rgb(&img)).unwrap()
    );
}

#[test]
fn corrupted_weight_files() {
    let bytes = encode_weights(&build_dmcnn_vd(&small_body(), 1).unwrap());
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    assert!(matches!(decode_weights(&bad_magic), Err(Error::Format(_))));
    let mut bad_version = bytes.clone();
    bad_version[8] = 99;
    assert!(matches!(
        decode_weights(&bad_version),
        Err(Error::Version { found: 99, .. })
    ));
    for cut in [4, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(decode_weights(&bytes[..cut]), Err(Error::Truncated(_))),
            "cut {cut}"
        );
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_weights(&extra), Err(Error::Format(_))));
}

#[test]
fn svec_model_channels() {
    let cfg = cfanet::svec::SvecConfig::default();
    let p = cfanet::svec::svec_pattern(&cfg);
    let norm = image(1, 16, 16, 6).map(|v| v * 4096.0);
    let s = cfanet::svec::svec_mosaic(&norm, &cfg).unwrap();
    assert_eq!(s.planes_count(), 6);
    let vd = build_svec_model(SvecArch::DmcnnVd, &small_body(), 1).unwrap();
    assert_eq!(vd.input_channels, 6);
    assert_eq!(
        forward_demosaic(&vd, &s, &p).unwrap().dims(),
        Dims::new(1, 3, 16, 16)
    );
    let d = build_svec_model(SvecArch::Dmcnn, &small_body(), 1).unwrap();
    assert_eq!(d.input_channels, 6);
    assert_eq!(
        forward_demosaic(&d, &s, &p).unwrap().dims(),
        Dims::new(1, 3, 4, 4)
    );
}

#[test]
fn channel_mismatch_reports_both_counts() {
    let model = build_svec_model(SvecArch::DmcnnVd, &small_body(), 1).unwrap();
    let p = CfaPattern::bayer().unwrap();
    let s = mosaic(&image(1, 8, 8, 1), &p).unwrap();
    let msg = forward_demosaic(&model, &s, &p).unwrap_err().to_string();
    assert!(msg.contains('3') && msg.contains('6'), "{msg}");
}
