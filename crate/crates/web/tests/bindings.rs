use afnet::analysis::spectral::psd_curve;
use afnet::{config, Error, Shape, Tensor};
use afnet_web::{gmacs, psd, rgba_to_tensor, spectrum_diff, spectrum_view};

fn rgba(w: usize, h: usize, seed: usize) -> Vec<u8> {
    (0..w * h)
        .flat_map(|i| {
            let (y, x) = (i / w, i % w);
            let v = ((x * (7 + seed) + y * 13) % 251) as u8;
            [v, v / 2, 255 - v, 255]
        })
        .collect()
}

#[test]
fn rgba_drops_alpha_and_scales() {
    let t = rgba_to_tensor(&[255, 0, 51, 7, 0, 255, 0, 0], 2, 1).unwrap();
    assert_eq!(t.shape(), Shape::new(1, 3, 1, 2));
    assert_eq!((t.at(0, 0, 0, 0), t.at(0, 1, 0, 0), t.at(0, 2, 0, 0)), (1.0, 0.0, 0.2));
    assert_eq!(t.at(0, 1, 0, 1), 1.0);
    assert!(matches!(rgba_to_tensor(&[0; 7], 2, 1), Err(Error::Dimension(_))));
}

#[test]
fn views_match_image_size() {
    let (w, h) = (20, 12);
    let img = rgba(w, h, 0);
    for which in ["magnitude", "phase"] {
        let v = spectrum_view(&img, w, h, which).unwrap();
        assert_eq!(v.len(), w * h * 4);
        assert!(v.chunks(4).all(|p| p[3] == 255 && p[0] == p[1] && p[1] == p[2]));
        let d = spectrum_diff(&img, &img, w, h, which).unwrap();
        assert!(
            d.chunks(4).all(|p| p == [0, 0, 255, 255]),
            "identical images map to the cold end"
        );
    }
    assert!(spectrum_view(&img, w, h, "power").is_err());
}

#[test]
fn magnitude_view_peaks_at_centre_for_flat_image() {
    let (w, h) = (8, 8);
    let flat: Vec<u8> = (0..w * h).flat_map(|_| [128, 128, 128, 255]).collect();
    let v = spectrum_view(&flat, w, h, "magnitude").unwrap();
    let centre = (h / 2 * w + w / 2) * 4;
    assert_eq!(v[centre], 255);
    assert_eq!(v.iter().step_by(4).filter(|&&g| g == 255).count(), 1);
}

#[test]
fn psd_matches_library_curve() {
    let (w, h) = (24, 18);
    let img = rgba(w, h, 3);
    let got = psd(&img, w, h).unwrap();
    assert_eq!(got.len(), 9);
    let t = Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        img[(y * w + x) * 4 + c] as f32 / 255.0
    });
    assert_eq!(got, psd_curve(&t, 0).unwrap().log_power);
}

#[test]
fn gmacs_matches_count() {
    let text = "rdb_count = 2\nbase_channels = 8\n";
    let cfg = config::parse(text).unwrap();
    let want = afnet::generator::count_macs(&cfg.generator, Shape::new(1, 3, 64, 64))
        .unwrap()
        .gmacs();
    assert_eq!(gmacs(text, 64).unwrap(), want);
    assert!(gmacs("rdb_count = two", 64).is_err());
}
