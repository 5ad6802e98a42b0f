mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use common::{central_fd, rel_err, rng};
use proptest::prelude::*;
use rand::Rng;
use sketch3d_core::loss::{
    cosine_distance, cosine_distance_grad, distance_transform_loss, euclidean_distance_transform, pixel_l2,
    robust_loss, robust_loss_derivative, total_loss, GeometricBackend, LossConfig, LossTarget, PerceptualBackend,
    Structural,
};
use sketch3d_core::{Error, ImageBuffer, Result};

fn random_image(r: &mut rand_chacha::ChaCha8Rng, w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_vec(w, h, (0..w * h).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

/// Binary sketch with about 20% ink, the precondition of the edge loss.
fn random_sketch(r: &mut rand_chacha::ChaCha8Rng, w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_vec(
        w,
        h,
        (0..w * h).map(|_| if r.random_bool(0.2) { 0.0 } else { 1.0 }).collect(),
    )
    .unwrap()
}

#[test]
fn robust_closed_forms() {
    assert_eq!(robust_loss(0.0, 1.0, 0.1), 0.0);
    assert!((robust_loss(0.1, 1.0, 0.1) - (2f64.sqrt() - 1.0)).abs() < 1e-12);
    assert!((robust_loss(0.3, 2.0, 0.1) - 4.5).abs() < 1e-12);
    // α = 0 is the Cauchy form
    assert!((robust_loss(0.2, 0.0, 0.1) - (0.5f64 * 4.0 + 1.0).ln()).abs() < 1e-12);
    // α = 1 is the pseudo-Huber form √((x/c)² + 1) − 1
    for x in [0.01, 0.3, 2.0] {
        let c: f64 = 0.1;
        assert!((robust_loss(x, 1.0, c) - (((x / c).powi(2) + 1.0).sqrt() - 1.0)).abs() < 1e-12);
    }
}

#[test]
fn robust_derivative_matches_differences() {
    for alpha in [-2.0, 0.0, 0.5, 1.0, 2.0, 3.0] {
        for x in [0.0, 0.05, 0.1, 0.7, 3.0] {
            let fd = central_fd(&[x], 1e-7, |p| robust_loss(p[0], alpha, 0.1))[0];
            let a = robust_loss_derivative(x, alpha, 0.1);
            assert!(
                (a - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "α={alpha} x={x}: {a} vs {fd}"
            );
        }
    }
}

proptest! {
    #[test]
    fn robust_is_monotone_from_zero(alpha in -4.0f64..4.0, c in 0.01f64..2.0, a in 0.0f64..5.0, b in 0.0f64..5.0) {
        prop_assert_eq!(robust_loss(0.0, alpha, c), 0.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(robust_loss(lo, alpha, c) <= robust_loss(hi, alpha, c) + 1e-12);
        prop_assert!(robust_loss_derivative(lo, alpha, c) >= 0.0);
    }

    #[test]
    fn robust_alpha_one_saturates(x in 0.0f64..100.0, c in 0.01f64..2.0) {
        prop_assert!(robust_loss(x, 1.0, c) <= x / c + 1e-12);
    }

    #[test]
    fn cosine_is_symmetric(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 8)) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
        let ab = cosine_distance(&a, &b).unwrap();
        let ba = cosine_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=2.0).contains(&ab));
    }

    #[test]
    fn edt_matches_brute_force(bits in prop::collection::vec(prop::bool::weighted(0.08), 13 * 9)) {
        prop_assume!(bits.iter().any(|b| *b));
        let (w, h) = (13usize, 9usize);
        let dt = euclidean_distance_transform(&bits, w, h);
        for y in 0..h {
            for x in 0..w {
                let mut best = f64::INFINITY;
                for (i, &b) in bits.iter().enumerate() {
                    if b {
                        let (ex, ey) = ((i % w) as f64, (i / w) as f64);
                        best = best.min(((ex - x as f64).powi(2) + (ey - y as f64).powi(2)).sqrt());
                    }
                }
                prop_assert!((dt[y * w + x] - best).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn cosine_examples_and_gradient() {
    assert!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-12);
    assert!((cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((cosine_distance(&[1.0, 2.0], &[-2.0, -4.0]).unwrap() - 2.0).abs() < 1e-12);
    assert!(matches!(
        cosine_distance(&[0.0, 0.0], &[1.0, 0.0]),
        Err(Error::Domain(_))
    ));
    let mut r = rng(50);
    for _ in 0..10 {
        let a: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, g) = cosine_distance_grad(&a, &b).unwrap();
        let fd = central_fd(&b, 1e-6, |p| cosine_distance(&a, p).unwrap());
        assert!(rel_err(&g, &fd, 1e-9) < 1e-6);
    }
}

#[test]
fn pixel_l2_examples_and_gradient() {
    let w = ImageBuffer::white(4, 3);
    let (l, g) = pixel_l2(&w, &w).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.data.iter().all(|v| *v == 0.0));
    assert_eq!(pixel_l2(&w, &ImageBuffer::zeros(4, 3)).unwrap().0, 1.0);
    assert!(pixel_l2(&w, &ImageBuffer::zeros(3, 4)).is_err());
    let mut r = rng(51);
    for _ in 0..10 {
        let t = random_image(&mut r, 6, 5);
        let x = random_image(&mut r, 6, 5);
        let (_, g) = pixel_l2(&t, &x).unwrap();
        let fd = central_fd(&x.data, 1e-6, |p| {
            pixel_l2(&t, &ImageBuffer::from_vec(6, 5, p.to_vec()).unwrap())
                .unwrap()
                .0
        });
        assert!(rel_err(&g.data, &fd, 1e-9) < 1e-6);
    }
}

#[test]
fn distance_transform_loss_examples_and_gradient() {
    let mut edges = ImageBuffer::white(20, 20);
    for y in 0..20 {
        edges.set(3, y, 0.0);
    }
    assert_eq!(distance_transform_loss(&edges, &edges).unwrap().0, 0.0);
    let mut dot = ImageBuffer::white(20, 20);
    dot.set(8, 11, 0.0);
    assert!((distance_transform_loss(&edges, &dot).unwrap().0 - 5.0).abs() < 1e-12);
    assert!(matches!(
        distance_transform_loss(&ImageBuffer::white(5, 5), &dot.clone()),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(matches!(
        distance_transform_loss(&ImageBuffer::white(20, 20), &dot),
        Err(Error::Domain(_))
    ));
    let mut r = rng(52);
    for _ in 0..10 {
        let x = random_image(&mut r, 20, 20);
        let (_, g) = distance_transform_loss(&edges, &x).unwrap();
        let fd = central_fd(&x.data, 1e-6, |p| {
            distance_transform_loss(&edges, &ImageBuffer::from_vec(20, 20, p.to_vec()).unwrap())
                .unwrap()
                .0
        });
        assert!(rel_err(&g.data, &fd, 1e-9) < 1e-4);
    }
}

#[test]
fn geometric_backends_vanish_on_self_match() {
    let mut r = rng(53);
    let img = random_sketch(&mut r, 16, 12);
    let target = LossTarget::new(img.clone());
    for s in [
        Structural::PixelL2,
        Structural::DistanceTransform,
        Structural::Combined { dt_weight: 0.05 },
    ] {
        let b = GeometricBackend::new(s);
        let (st, gs) = b.structural(&target, &img).unwrap();
        let (se, gm) = b.semantic(&target, &img).unwrap();
        assert!(st.abs() < 1e-5 && se.abs() < 1e-5, "{}: {st} {se}", b.name());
        assert!(gs.same_dims(&img) && gm.same_dims(&img));
    }
}

/// Backend returning fixed term values, for checking the composition.
struct Fixed {
    structural: f64,
    semantic: f64,
    in_flight: AtomicUsize,
    serial: bool,
    calls: AtomicUsize,
}

impl Fixed {
    fn new(structural: f64, semantic: f64) -> Self {
        Self {
            structural,
            semantic,
            in_flight: AtomicUsize::new(0),
            serial: false,
            calls: AtomicUsize::new(0),
        }
    }
}

impl PerceptualBackend for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }

    fn max_concurrency(&self) -> usize {
        if self.serial {
            1
        } else {
            usize::MAX
        }
    }

    fn structural(&self, t: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst);
        if self.serial {
            assert_eq!(now, 0, "serial backend saw concurrent calls");
        }
        std::thread::sleep(std::time::Duration::from_millis(2));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        if t.gray.data[0] < 0.0 {
            return Err(Error::Protocol("boom".into()));
        }
        Ok((self.structural, ImageBuffer::filled(render.width, render.height, 1.0)))
    }

    fn semantic(&self, _: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
        Ok((self.semantic, ImageBuffer::filled(render.width, render.height, 0.5)))
    }
}

#[test]
fn total_loss_composes_robust_and_semantic() {
    let img = ImageBuffer::white(4, 4);
    let t = LossTarget::new(img.clone());
    let (l, g) = total_loss(&[(&t, &img)], &LossConfig::default(), &Fixed::new(0.1, 0.2)).unwrap();
    assert!((l - 0.61421).abs() < 1e-5, "{l}");
    // ρ'(c) at α = 1 is 1/(c·√2); the semantic gradient adds on top
    let slope = 1.0 / (0.1 * 2f64.sqrt());
    assert!(g[0].data.iter().all(|v| (v - (slope + 0.5)).abs() < 1e-12));

    let no_robust = LossConfig {
        apply_robust: false,
        lambda: 2.0,
        ..LossConfig::default()
    };
    let (l, _) = total_loss(&[(&t, &img), (&t, &img)], &no_robust, &Fixed::new(0.1, 0.2)).unwrap();
    assert!((l - 2.0 * (0.2 + 0.2)).abs() < 1e-12);

    let zero = LossConfig {
        lambda: 0.0,
        ..LossConfig::default()
    };
    let (l, g) = total_loss(&[(&t, &img)], &zero, &Fixed::new(0.7, 0.2)).unwrap();
    assert!((l - 0.2).abs() < 1e-12);
    assert!(g[0].data.iter().all(|v| *v == 0.5));
}

#[test]
fn total_loss_is_zero_on_self_match() {
    let mut r = rng(54);
    let imgs: Vec<ImageBuffer> = (0..3).map(|_| random_sketch(&mut r, 10, 10)).collect();
    let targets: Vec<LossTarget> = imgs.iter().cloned().map(LossTarget::new).collect();
    let views: Vec<_> = targets.iter().zip(&imgs).collect();
    for s in [
        Structural::PixelL2,
        Structural::DistanceTransform,
        Structural::Combined { dt_weight: 0.05 },
    ] {
        let (l, g) = total_loss(&views, &LossConfig::default(), &GeometricBackend::new(s)).unwrap();
        assert!(l.abs() < 1e-9, "{l}");
        assert_eq!(g.len(), 3);
    }
}

#[test]
fn backend_errors_carry_the_view_index() {
    let img = ImageBuffer::white(3, 3);
    let good = LossTarget::new(img.clone());
    let bad = LossTarget::new(ImageBuffer::filled(3, 3, -1.0));
    let views = [(&good, &img), (&bad, &img), (&good, &img)];
    match total_loss(&views, &LossConfig::default(), &Fixed::new(0.1, 0.1)) {
        Err(Error::Backend { view, msg }) => {
            assert_eq!(view, 1);
            assert!(msg.contains("boom"));
        }
        other => panic!("expected backend error, got {other:?}"),
    }
    let bad_cfg = LossConfig {
        robust_c: 0.0,
        ..LossConfig::default()
    };
    assert!(matches!(
        total_loss(&[], &bad_cfg, &Fixed::new(0.0, 0.0)),
        Err(Error::Config(_))
    ));
}

#[test]
fn serial_backends_are_called_one_at_a_time() {
    let img = ImageBuffer::white(3, 3);
    let t = LossTarget::new(img.clone());
    let views: Vec<_> = (0..8).map(|_| (&t, &img)).collect();
    let backend = Fixed {
        serial: true,
        ..Fixed::new(0.1, 0.0)
    };
    let (l, _) = total_loss(&views, &LossConfig::default(), &backend).unwrap();
    assert!((l - 8.0 * (2f64.sqrt() - 1.0)).abs() < 1e-12);
    assert_eq!(backend.calls.load(Ordering::SeqCst), 8);
}
