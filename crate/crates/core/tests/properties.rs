use effectcast_core::backend::mock_generate;
use effectcast_core::imaging::{
    coverage, dilate, downsample_mask, rasterize_box, rasterize_polygon, resize_frame, union,
};
use effectcast_core::prompts::{build_fewshot_prompt, parse_effect, passthrough_prompt};
use effectcast_core::strategy::{
    build_mask, fixed_mask, hand_object_mask, segmentation_mask, MaskInputs,
};
use effectcast_core::{
    ActionEffectPair, ActionInstance, BBox, Detection, DetectionKind, Frame, InpaintBackend,
    InpaintRequest, Mask, MaskStrategyConfig, MockBackend, Polygon, SegmentationRegion,
    StrategyKind,
};
use proptest::prelude::*;

fn mask_of(w: u32, h: u32) -> impl Strategy<Value = Mask> {
    proptest::collection::vec(any::<bool>(), (w * h) as usize)
        .prop_map(move |bits| Mask::from_bits(w, h, bits).unwrap())
}

fn any_mask() -> impl Strategy<Value = Mask> {
    (1u32..=32, 1u32..=32).prop_flat_map(|(w, h)| mask_of(w, h))
}

fn sized_masks(n: usize) -> impl Strategy<Value = Vec<Mask>> {
    (1u32..=24, 1u32..=24).prop_flat_map(move |(w, h)| proptest::collection::vec(mask_of(w, h), n))
}

/// Non-degenerate boxes inside a `w` x `h` canvas.
fn bbox_in(w: u32, h: u32) -> impl Strategy<Value = BBox> {
    (0..w, 0..h)
        .prop_flat_map(move |(x0, y0)| (Just(x0), Just(y0), x0 + 1..=w, y0 + 1..=h))
        .prop_map(|(x0, y0, x1, y1)| BBox::new(x0, y0, x1, y1))
}

fn detections(w: u32, h: u32) -> impl Strategy<Value = Vec<Detection>> {
    proptest::collection::vec(
        (bbox_in(w, h), 0.0f64..=1.0, any::<bool>()).prop_map(|(bbox, score, hand)| Detection {
            frame_index: 0,
            kind: if hand {
                DetectionKind::Hand
            } else {
                DetectionKind::Object
            },
            bbox,
            score,
        }),
        0..8,
    )
}

fn polygon_in(w: u32, h: u32) -> impl Strategy<Value = Polygon> {
    proptest::collection::vec((0.0..=f64::from(w), 0.0..=f64::from(h)), 3..7)
        .prop_map(|v| Polygon::new(v).unwrap())
}

fn regions(w: u32, h: u32) -> impl Strategy<Value = Vec<SegmentationRegion>> {
    proptest::collection::vec(
        (
            proptest::collection::vec(polygon_in(w, h), 1..3),
            0.0f64..=1.0,
        )
            .prop_map(|(polygons, score)| SegmentationRegion {
                frame_index: 0,
                category: "thing".into(),
                polygons,
                score,
            }),
        0..5,
    )
}

fn frame_of(w: u32, h: u32) -> impl Strategy<Value = Frame> {
    proptest::collection::vec(any::<u8>(), (w * h * 3) as usize)
        .prop_map(move |px| Frame::from_rgb(w, h, px).unwrap())
}

fn pairs(n: usize) -> Vec<ActionEffectPair> {
    (0..n)
        .map(|i| {
            ActionEffectPair::new(format!("verb{i} noun{i}"), format!("effect number {i}")).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn union_is_commutative_associative_idempotent(ms in sized_masks(3)) {
        let (a, b, c) = (&ms[0], &ms[1], &ms[2]);
        prop_assert_eq!(union([a, b]).unwrap(), union([b, a]).unwrap());
        let left = union([&union([a, b]).unwrap(), c]).unwrap();
        let right = union([a, &union([b, c]).unwrap()]).unwrap();
        prop_assert_eq!(left, right);
        prop_assert_eq!(&union([a, a]).unwrap(), a);
        let zero = Mask::empty(a.width(), a.height());
        prop_assert_eq!(&union([a, &zero]).unwrap(), a);
    }

    #[test]
    fn box_bit_count_is_its_area((w, h, bbox) in (1u32..=40, 1u32..=40).prop_flat_map(|(w, h)| (Just(w), Just(h), bbox_in(w, h)))) {
        let m = rasterize_box(bbox, w, h).unwrap();
        prop_assert_eq!(m.count_true() as u64, u64::from(bbox.x_max - bbox.x_min) * u64::from(bbox.y_max - bbox.y_min));
    }

    #[test]
    fn rectangle_polygons_match_boxes((w, h, bbox) in (1u32..=40, 1u32..=40).prop_flat_map(|(w, h)| (Just(w), Just(h), bbox_in(w, h)))) {
        let poly = Polygon::from_bbox(bbox);
        prop_assert_eq!(rasterize_polygon(&poly, w, h).unwrap(), rasterize_box(bbox, w, h).unwrap());
    }

    #[test]
    fn dilation_is_monotone_and_additive(m in any_mask(), a in 0u32..5, b in 0u32..5) {
        let once = dilate(&m, a);
        prop_assert!(m.is_subset_of(&once));
        prop_assert_eq!(dilate(&once, b), dilate(&m, a + b));
    }

    #[test]
    fn downsampling_is_conservative((m, ow, oh) in any_mask().prop_flat_map(|m| {
        let (w, h) = m.dims();
        (Just(m), 1..=w, 1..=h)
    })) {
        let small = downsample_mask(&m, ow, oh).unwrap();
        prop_assert_eq!(coverage(&small) == 0.0, coverage(&m) == 0.0);
        for y in 0..m.height() {
            for x in 0..m.width() {
                if m.get(x, y) {
                    let (sx, sy) = (
                        (u64::from(x) * u64::from(ow) / u64::from(m.width())) as u32,
                        (u64::from(y) * u64::from(oh) / u64::from(m.height())) as u32,
                    );
                    prop_assert!(small.get(sx, sy));
                }
            }
        }
    }

    #[test]
    fn constant_frames_resize_to_constants(w in 1u32..48, h in 1u32..48, ow in 1u32..48, oh in 1u32..48, rgb in any::<[u8; 3]>()) {
        let out = resize_frame(&Frame::filled(w, h, rgb).unwrap(), ow, oh).unwrap();
        prop_assert_eq!(out.dims(), (ow, oh));
        prop_assert!(out.as_bytes().chunks(3).all(|p| p == rgb));
    }

    #[test]
    fn lowering_the_threshold_never_shrinks_masks(
        (w, h, dets, regs) in (4u32..=32, 4u32..=32).prop_flat_map(|(w, h)| (Just(w), Just(h), detections(w, h), regions(w, h))),
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let as_mask = |r: Result<Mask, _>| r.unwrap_or_else(|_| Mask::empty(w, h));
        let ho_hi = as_mask(hand_object_mask(&dets, w, h, hi));
        let ho_lo = as_mask(hand_object_mask(&dets, w, h, lo));
        prop_assert!(ho_hi.is_subset_of(&ho_lo));
        let seg_hi = as_mask(segmentation_mask(&regs, w, h, hi));
        let seg_lo = as_mask(segmentation_mask(&regs, w, h, lo));
        prop_assert!(seg_hi.is_subset_of(&seg_lo));
        prop_assert_eq!(ho_lo.dims(), (w, h));
        prop_assert_eq!(seg_lo.dims(), (w, h));
    }

    #[test]
    fn single_detection_masks_are_its_box((w, h, bbox) in (1u32..=40, 1u32..=40).prop_flat_map(|(w, h)| (Just(w), Just(h), bbox_in(w, h)))) {
        let det = Detection { frame_index: 0, kind: DetectionKind::Hand, bbox, score: 0.9 };
        prop_assert_eq!(hand_object_mask(&[det], w, h, 0.1).unwrap(), rasterize_box(bbox, w, h).unwrap());
    }

    #[test]
    fn fixed_masks_cover_the_lower_fraction(w in 1u32..64, h in 1u32..500, f in 0.01f64..=1.0) {
        let m = fixed_mask(w, h, f).unwrap();
        let first = (f64::from(h) * (1.0 - f)).floor() as u32;
        prop_assert_eq!(m.dims(), (w, h));
        prop_assert_eq!(coverage(&m), f64::from(h - first) / f64::from(h));
    }

    #[test]
    fn zero_dilation_build_is_the_raw_output(
        (w, h, dets, regs) in (4u32..=32, 4u32..=32).prop_flat_map(|(w, h)| (Just(w), Just(h), detections(w, h), regions(w, h))),
    ) {
        let inputs = MaskInputs { detections: Some(&dets), regions: Some(&regs), noun: None };
        for kind in StrategyKind::ALL {
            let cfg = MaskStrategyConfig::new(kind);
            let raw = match kind {
                StrategyKind::Fixed => fixed_mask(w, h, cfg.fixed_fraction),
                StrategyKind::HandObject => hand_object_mask(&dets, w, h, cfg.score_threshold),
                StrategyKind::Segmentation => segmentation_mask(&regs, w, h, cfg.score_threshold),
            };
            let built = build_mask(&cfg, (w, h), inputs);
            match (raw, built) {
                (Ok(r), Ok(b)) => prop_assert_eq!(r, b),
                (Err(_), Err(_)) => {}
                (r, b) => prop_assert!(false, "raw {:?} vs built {:?}", r.is_ok(), b.is_ok()),
            }
        }
    }

    #[test]
    fn fewshot_prompts_have_the_documented_shape(n in 1usize..8, k in 1usize..8, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let p = build_fewshot_prompt(&pairs(n), k, "cut apple", seed).unwrap();
        let lines: Vec<&str> = p.lines().collect();
        prop_assert_eq!(lines.iter().filter(|l| l.starts_with("Action:")).count(), k + 1);
        prop_assert_eq!(lines.iter().filter(|l| l.starts_with("Effect: ") && l.len() > 8).count(), k);
        prop_assert_eq!(*lines.last().unwrap(), "Effect:");
        prop_assert_eq!(build_fewshot_prompt(&pairs(n), k, "cut apple", seed).unwrap(), p);
    }

    #[test]
    fn single_line_effects_parse_to_themselves(s in "[A-Za-z][A-Za-z ,.]{0,40}", pad in " {0,3}") {
        let expected = s.trim().to_string();
        prop_assert_eq!(parse_effect(&format!("{pad}{s}{pad}")).unwrap(), expected);
    }

    #[test]
    fn mock_preserves_unmasked_pixels((frame, mask) in (1u32..=64, 1u32..=64).prop_flat_map(|(w, h)| (frame_of(w, h), mask_of(w, h))), prompt in "[a-z][a-z ]{0,19}", seed in any::<u64>()) {
        let mock = MockBackend::new();
        let mut frame64 = Frame::filled(64, 64, [0, 0, 0]).unwrap();
        let mut mask64 = Mask::empty(64, 64);
        for y in 0..frame.height() {
            for x in 0..frame.width() {
                frame64.set_pixel(x, y, frame.pixel(x, y));
                mask64.set(x, y, mask.get(x, y));
            }
        }
        let req = InpaintRequest::new(frame64, mask64, prompt, seed).unwrap();
        let out = mock.inpaint(&req).unwrap();
        prop_assert_eq!(out.frame.dims(), req.frame().dims());
        for (i, &regen) in req.mask().bits().iter().enumerate() {
            if !regen {
                prop_assert_eq!(&out.frame.as_bytes()[i * 3..i * 3 + 3], &req.frame().as_bytes()[i * 3..i * 3 + 3]);
            }
        }
        prop_assert_eq!(mock.inpaint(&req).unwrap().frame, out.frame);
    }
}

#[test]
fn distinct_seeds_select_distinct_exemplars() {
    let pool = pairs(3);
    let prompts: std::collections::HashSet<String> = (0..100u64)
        .map(|seed| build_fewshot_prompt(&pool, 2, "cut apple", seed).unwrap())
        .collect();
    assert!(prompts.len() >= 2);
}

#[test]
fn passthrough_never_consults_a_client() {
    let client = effectcast_core::ScriptedClient::new([("cut apple", " x")]);
    let inst = ActionInstance::new("n", "P01", "P01_01", "cut", "apple", 1, 2).unwrap();
    assert_eq!(passthrough_prompt(&inst), "cut apple");
    assert_eq!(client.calls(), 0);
}

#[test]
fn mock_outputs_change_with_every_input() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mock = MockBackend::new();
    for _ in 0..100 {
        let frame =
            Frame::from_rgb(64, 64, (0..64 * 64 * 3).map(|_| rng.random()).collect()).unwrap();
        let mask = Mask::from_fn(64, 64, |_, _| rng.random_bool(0.3));
        let prompt: String = (0..12)
            .map(|_| rng.random_range(b'a'..=b'z') as char)
            .collect();
        let seed: u64 = rng.random();
        let base = InpaintRequest::new(frame.clone(), mask.clone(), prompt.clone(), seed).unwrap();
        let out = mock.inpaint(&base).unwrap().frame;

        let other_prompt =
            InpaintRequest::new(frame.clone(), mask.clone(), format!("{prompt}x"), seed).unwrap();
        let other_seed =
            InpaintRequest::new(frame.clone(), mask.clone(), prompt.clone(), seed ^ 1).unwrap();
        let mut flipped = mask.clone();
        let (fx, fy) = (rng.random_range(0..64), rng.random_range(0..64));
        flipped.set(fx, fy, !mask.get(fx, fy));
        let other_mask = InpaintRequest::new(frame.clone(), flipped, prompt.clone(), seed).unwrap();
        for req in [other_prompt, other_seed, other_mask] {
            assert_ne!(mock.inpaint(&req).unwrap().frame, out);
        }
    }
    assert_eq!(mock_generate("a", 1, 4), mock_generate("a", 1, 4));
}
