use limescope_wasm::{PlantedRun, Session};

fn sign_rgba(w: usize, h: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - w as f64 / 2.0, y as f64 - h as f64 / 2.0);
            let r = (dx * dx + dy * dy).sqrt();
            let px = if r < w as f64 * 0.25 {
                [240, 240, 240]
            } else if r < w as f64 * 0.4 {
                [200, 30, 30]
            } else {
                [(x * 5 % 200) as u8, 120, (y * 7 % 255) as u8]
            };
            out.extend(px);
            out.push(255);
        }
    }
    out
}

fn run(planted: usize, negative: bool) -> PlantedRun {
    PlantedRun {
        planted,
        negative,
        samples: 400,
        max_features: 3,
        seed: 1,
        gray_fill: true,
    }
}

#[test]
fn outlines_only_touch_borders() {
    let rgba = sign_rgba(40, 32);
    let s = Session::new(&rgba, 40, 32, 20, 10.0).unwrap();
    assert!(s.num_segments() >= 10 && s.num_segments() <= 40);
    let out = s.outlined();
    assert_eq!(out.len(), rgba.len());
    let changed = out
        .chunks(4)
        .zip(rgba.chunks(4))
        .filter(|(a, b)| a != b)
        .count();
    assert!(changed > 0 && changed < 40 * 32 / 2);
    assert!(out
        .chunks(4)
        .filter(|p| p != &rgba.chunks(4).next().unwrap())
        .all(|p| p[3] == 255));
}

#[test]
fn explanation_finds_planted_segment_with_sign() {
    let rgba = sign_rgba(32, 32);
    let s = Session::new(&rgba, 32, 32, 16, 10.0).unwrap();
    let planted = s.segment_at(16, 16).unwrap();
    for negative in [false, true] {
        let (exp, overlay) = s.explain(&run(planted, negative)).unwrap();
        assert_eq!(exp.selected_features(), vec![planted]);
        assert_eq!(exp.weights()[0] < 0.0, negative);
        assert_eq!(overlay.len(), 32 * 32 * 4);
    }
}

#[test]
fn flat_segment_under_mean_fill_is_degenerate() {
    let rgba = sign_rgba(32, 32);
    let s = Session::new(&rgba, 32, 32, 16, 10.0).unwrap();
    let planted = s.segment_at(16, 16).unwrap();
    let (exp, _) = s
        .explain(&PlantedRun {
            gray_fill: false,
            ..run(planted, false)
        })
        .unwrap();
    assert!(exp.degenerate && exp.features.is_empty());
}

#[test]
fn stability_on_planted_oracle_is_one() {
    let rgba = sign_rgba(24, 24);
    let s = Session::new(&rgba, 24, 24, 9, 10.0).unwrap();
    let report = s.stability(&run(2, false), 3, 1).unwrap();
    assert_eq!(report.mean_jaccard, 1.0);
    assert_eq!(report.seeds, vec![1, 2, 3]);
}

#[test]
fn rejects_bad_input() {
    assert!(Session::new(&[0; 10], 2, 2, 1, 10.0).is_err());
    let s = Session::new(&sign_rgba(8, 8), 8, 8, 4, 10.0).unwrap();
    assert_eq!(s.segment_at(8, 0), None);
    assert!(s.explain(&run(99, false)).is_err());
    assert!(s.stability(&run(0, false), 1, 1).is_err());
}
