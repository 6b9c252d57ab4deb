mod common;

use afnet::discriminators::{PatchDiscConfig, PatchDiscriminator};
use afnet::generator::InputMode;
use afnet::isp::save_image;
use afnet::nn::{Bind, ParamStore};
use afnet::training::checkpoint::Checkpoint;
use afnet::training::dataset::{PairedData, PairedDataset};
use afnet::training::trainer::train;
use afnet::training::TrainConfig;
use afnet::{config, Error, Graph, Shape, Tensor};
use common::{rng, uniform_f32};
use proptest::prelude::*;

fn tiny(extra: &str) -> TrainConfig {
    config::parse(&format!(
        "base_channels = 4\nrdb_count = 1\ncrop = 32\nbatch_size = 2\nms_ssim_levels = 2\ndisc_widths = 8,16\n{extra}"
    ))
    .unwrap()
}

fn pairs(n: usize, size: usize) -> PairedData {
    let mut d = PairedData::default();
    for i in 0..n {
        let high = uniform_f32(Shape::new(1, 3, size, size), 0.1, 0.9, 40 + i as u64);
        d.push(&format!("p{i}"), high.map(|v| v * 0.25), high, InputMode::Srgb3)
            .unwrap();
    }
    d
}

#[test]
fn log_schedule_and_best_selection() {
    let cfg = tiny("epochs = 3\nval_every = 2\nlr0 = 0.001\ndecay_every = 2\nseed = 2\n");
    let d = pairs(3, 40);
    let out = train(&cfg, &d, &d).unwrap();
    let steps: Vec<_> = out.log.iter().filter(|r| r.kind == "step").collect();
    let vals: Vec<_> = out.log.iter().filter(|r| r.kind == "val").collect();
    assert_eq!(steps.len(), 3 * 2);
    assert_eq!(vals.iter().map(|r| r.epoch).collect::<Vec<_>>(), [1, 2]);
    for r in &out.log {
        assert_eq!(r.lr, cfg.lr_at(r.epoch));
    }
    assert_eq!(steps.iter().map(|r| r.step).collect::<Vec<_>>(), [1, 2, 3, 4, 5, 6]);
    let best = vals.iter().filter_map(|r| r.val_psnr).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best.best_val_psnr, best);
    assert_eq!((out.last.epoch, out.last.step), (3, 6));
    let csv = out.log_csv();
    assert_eq!(csv.lines().count(), 1 + out.log.len());
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').count() == csv.lines().next().unwrap().split(',').count()));
}

#[test]
fn empty_splits_rejected() {
    let cfg = tiny("epochs = 1\n");
    assert!(matches!(
        train(&cfg, &PairedData::default(), &pairs(1, 32)),
        Err(Error::Data(_))
    ));
}

#[test]
fn mismatched_pair_rejected() {
    let mut d = PairedData::default();
    let low = Tensor::zeros(Shape::new(1, 3, 32, 32));
    let high = Tensor::zeros(Shape::new(1, 3, 32, 30));
    assert!(matches!(
        d.push("x", low.clone(), high, InputMode::Srgb3),
        Err(Error::Data(_))
    ));
    let high2 = Tensor::zeros(Shape::new(1, 3, 64, 64));
    assert!(matches!(d.push("y", low, high2, InputMode::Raw4), Err(Error::Data(_))));
}

#[test]
fn dataset_folders() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for split in ["train", "val"] {
        for side in ["low", "high"] {
            std::fs::create_dir_all(root.join(split).join(side)).unwrap();
        }
    }
    let img = uniform_f32(Shape::new(1, 3, 8, 8), 0.0, 1.0, 1);
    for name in ["b", "a"] {
        save_image(&img, &root.join(format!("train/low/{name}.png"))).unwrap();
        save_image(&img, &root.join(format!("train/high/{name}.png"))).unwrap();
    }
    save_image(&img, &root.join("val/low/c.png")).unwrap();
    save_image(&img, &root.join("val/high/c.png")).unwrap();
    std::fs::write(root.join("train/low/notes.txt"), "ignored").unwrap();
    let (train, val) = PairedDataset::splits(root).unwrap();
    assert_eq!(
        train.pairs.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(),
        ["a", "b"]
    );
    assert_eq!(val.pairs.len(), 1);
    assert_eq!(train.load(InputMode::Srgb3, 1.0).unwrap().len(), 2);

    save_image(&img, &root.join("val/high/orphan.png")).unwrap();
    assert!(matches!(PairedDataset::splits(root), Err(Error::Data(_))));
    assert!(matches!(PairedDataset::open(&root.join("nope")), Err(Error::Data(_))));
}

#[test]
fn checkpoint_corruption_is_detected() {
    let (ckpt, _) = Checkpoint::init(&tiny("seed = 4\n")).unwrap();
    let bytes = ckpt.to_bytes();
    let ok = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ok.to_bytes(), bytes);

    let manifest_end = bytes.windows(4).position(|w| w == b"end\n").unwrap() + 4;
    let text = std::str::from_utf8(&bytes[..manifest_end]).unwrap().to_string();
    let with_manifest = |m: String| {
        let mut b = m.into_bytes();
        b.extend_from_slice(&bytes[manifest_end..]);
        b
    };
    let cases: Vec<(&str, Vec<u8>)> = vec![
        ("truncated payload", bytes[..bytes.len() - 4].to_vec()),
        ("extra payload", [bytes.as_slice(), &[0, 0, 0, 0]].concat()),
        ("no manifest end", bytes[..manifest_end - 4].to_vec()),
        (
            "bad magic",
            with_manifest(text.replacen(text.lines().next().unwrap(), "PNG", 1)),
        ),
        (
            "future version",
            with_manifest(text.replacen("version 1\n", "version 99\n", 1)),
        ),
        ("bad step", with_manifest(text.replacen("step 0\n", "step x\n", 1))),
        (
            "unknown line",
            with_manifest(text.replacen("end\n", "bogus 1\nend\n", 1)),
        ),
        ("empty", Vec::new()),
    ];
    for (what, b) in cases {
        match Checkpoint::from_bytes(&b) {
            Err(Error::Checkpoint(_)) => {}
            other => panic!("{what}: {:?}", other.map(|c| c.step)),
        }
    }

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        Checkpoint::load(&dir.path().join("missing.ckpt")),
        Err(Error::Io(_))
    ));
}

#[test]
fn checkpoint_bad_config_is_rejected() {
    let (ckpt, _) = Checkpoint::init(&tiny("")).unwrap();
    let bytes = ckpt.to_bytes();
    let text = String::from_utf8_lossy(&bytes);
    let needle = "config rdb_count = 1\n";
    assert!(text.contains(needle));
    let pos = bytes
        .windows(needle.len())
        .position(|w| w == needle.as_bytes())
        .unwrap();
    let mut b = bytes.clone();
    b[pos + needle.len() - 2] = b'2';
    assert!(
        Checkpoint::from_bytes(&b).is_err(),
        "weights for one block cannot load into two"
    );
}

#[test]
fn patch_scores_are_translation_covariant() {
    // Two stride-2 layers: moving the input by 4 px moves the score map by 1.
    let cfg = PatchDiscConfig { widths: vec![8, 16] };
    let mut store = ParamStore::<f64>::new();
    let disc = PatchDiscriminator::new(&cfg, &mut store, &mut rng(6)).unwrap();
    let wide = common::uniform(Shape::new(1, 3, 64, 72), 0.0, 1.0, 12);
    let crop = |x0: usize| Tensor::from_fn(Shape::new(1, 3, 64, 64), |n, c, y, x| wide.at(n, c, y, x + x0));
    let scores = |img: Tensor<f64>| {
        let mut g = Graph::new();
        let x = g.constant(img);
        let out = disc.forward(&mut g, Bind::frozen(&store), x).unwrap();
        g.value(out.scores).clone()
    };
    let (a, b) = (scores(crop(0)), scores(crop(4)));
    assert_eq!(a.shape(), Shape::new(1, 1, 16, 16));
    for y in 3..13 {
        for x in 3..12 {
            assert!((b.at(0, 0, y, x) - a.at(0, 0, y, x + 1)).abs() < 1e-12, "({y},{x})");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_render_parse_round_trip(
        epochs in 0usize..5000,
        lr0 in 1e-6f64..1e-2,
        rdb_count in 1usize..9,
        kernels in prop::sample::subsequence(vec![1usize, 3, 5, 7, 9], 1..=5),
        patch in any::<bool>(),
        fourier in any::<bool>(),
        gray in any::<bool>(),
        seed in any::<u64>(),
        w_scal in 0.0f64..2.0,
    ) {
        let mut cfg = TrainConfig::default();
        let ks: Vec<String> = kernels.iter().map(ToString::to_string).collect();
        for (k, v) in [
            ("epochs", epochs.to_string()),
            ("lr0", lr0.to_string()),
            ("rdb_count", rdb_count.to_string()),
            ("cmsfe_kernels", ks.join(",")),
            ("use_patch_gan", patch.to_string()),
            ("use_fourier_gan", fourier.to_string()),
            ("spectrum_source", if gray { "gray" } else { "rgb" }.to_string()),
            ("seed", seed.to_string()),
            ("w_scal", w_scal.to_string()),
        ] {
            config::apply(&mut cfg, k, &v).unwrap();
        }
        let text = config::render(&cfg);
        prop_assert_eq!(config::parse(&text).unwrap(), cfg.clone());
        prop_assert_eq!(config::render(&config::parse(&text).unwrap()), text);
    }
}
