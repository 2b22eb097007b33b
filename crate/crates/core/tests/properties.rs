use lesionseg::imagecore::{ellipse_mask, to_gray, LabelMap};
use lesionseg::metrics::{confusion, metrics_from_counts};
use lesionseg::postprocess::{
    adaptive_equalize, dilate_disk, fill_holes, jaccard, otsu_threshold, prune_small_regions, select_lesion_label,
    PostprocessConfig,
};
use lesionseg::rag::build_rag;
use lesionseg::{BinaryMask, GrayImage, ImageRgb};
use proptest::prelude::*;

fn mask(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), w * h).prop_map(move |d| BinaryMask::new(w, h, d).unwrap())
    })
}

fn mask_pair(max: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        (
            proptest::collection::vec(any::<bool>(), w * h),
            proptest::collection::vec(any::<bool>(), w * h),
        )
            .prop_map(move |(a, b)| (BinaryMask::new(w, h, a).unwrap(), BinaryMask::new(w, h, b).unwrap()))
    })
}

/// Image plus a label map with at most `labels` distinct values.
fn labeled_image(max: usize, labels: u32) -> impl Strategy<Value = (ImageRgb, LabelMap)> {
    (2..=max, 2..=max).prop_flat_map(move |(w, h)| {
        (
            proptest::collection::vec(any::<u8>(), w * h * 3),
            proptest::collection::vec(0..labels, w * h),
        )
            .prop_map(move |(px, l)| (ImageRgb::new(w, h, px).unwrap(), LabelMap::new(w, h, l).unwrap()))
    })
}

fn flip(m: &BinaryMask) -> BinaryMask {
    let w = m.width();
    BinaryMask::from_fn(w, m.height(), |x, y| m.get(w - 1 - x, y))
}

proptest! {
    #[test]
    fn fill_holes_is_idempotent_and_extensive(m in mask(24)) {
        let filled = fill_holes(&m);
        prop_assert!(m.is_subset_of(&filled));
        prop_assert_eq!(fill_holes(&filled), filled);
    }

    #[test]
    fn fill_holes_commutes_with_flip(m in mask(24)) {
        prop_assert_eq!(fill_holes(&flip(&m)), flip(&fill_holes(&m)));
    }

    #[test]
    fn dilation_is_monotone((a, b) in mask_pair(20), r in 0usize..6) {
        let d = dilate_disk(&a, r);
        prop_assert!(a.is_subset_of(&d));
        prop_assert!(d.is_subset_of(&dilate_disk(&a, r + 1)));
        let union = a.or(&b).unwrap();
        prop_assert!(d.is_subset_of(&dilate_disk(&union, r)));
        prop_assert_eq!(dilate_disk(&flip(&a), r), flip(&d));
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded((a, b) in mask_pair(16)) {
        let j = jaccard(&a, &b).unwrap();
        prop_assert_eq!(j, jaccard(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn confusion_swaps_errors((p, t) in mask_pair(16)) {
        let c = confusion(&p, &t).unwrap();
        let r = confusion(&t, &p).unwrap();
        prop_assert_eq!((c.tp, c.tn, c.fp, c.fn_), (r.tp, r.tn, r.fn_, r.fp));
        prop_assert_eq!(c.total(), p.len() as u64);
        let m = metrics_from_counts(&c);
        prop_assert!((m.accuracy - (c.tp + c.tn) as f64 / c.total() as f64).abs() < 1e-12);
        prop_assert!((m.jaccard - jaccard(&p, &t).unwrap()).abs() < 1e-12);
        for v in m.as_array() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn otsu_splits_inside_value_range(px in proptest::collection::vec(any::<u8>(), 2..200)) {
        prop_assume!(px.iter().any(|&v| v != px[0]));
        let n = px.len();
        let lo = *px.iter().min().unwrap();
        let hi = *px.iter().max().unwrap();
        let img = GrayImage::new(n, 1, px).unwrap();
        let t = otsu_threshold(&img, &BinaryMask::full(n, 1)).unwrap();
        prop_assert!(t >= lo && t < hi, "t={t} range {lo}..{hi}");
    }

    #[test]
    fn rag_conserves_pixels_and_color((img, labels) in labeled_image(16, 12), t in 0.0f64..450.0) {
        let roi = BinaryMask::full(img.width(), img.height());
        let g = build_rag(&img, &labels, &roi).unwrap();
        let sum: [u64; 3] = [0, 1, 2].map(|c| img.pixels().map(|p| p[c] as u64).sum());
        prop_assert_eq!(g.total_pixels(), img.len() as u64);
        prop_assert_eq!(g.total_color(), sum);
        let m = g.merge_at_threshold(t);
        prop_assert_eq!(m.total_pixels(), g.total_pixels());
        prop_assert_eq!(m.total_color(), sum);
        prop_assert!(m.node_count() <= g.node_count());
        prop_assert!(m.merge_at_threshold(t).node_count() == m.node_count());
        // every merged region is a union of original regions
        let assign = m.pixel_assignment();
        for (a, b) in labels.as_slice().iter().zip(assign.as_slice()) {
            let same = labels.as_slice().iter().zip(assign.as_slice()).filter(|(x, _)| *x == a);
            for (_, y) in same {
                prop_assert_eq!(y, b);
            }
        }
    }

    #[test]
    fn pruning_preserves_coverage((_, labels) in labeled_image(20, 6), frac in 0.0f64..0.3) {
        let pruned = prune_small_regions(&labels, frac);
        prop_assert!(!pruned.as_slice().contains(&LabelMap::VOID));
        prop_assert!(pruned.region_count() <= labels.region_count());
        let min_area = frac * labels.len() as f64;
        let sizes = pruned.region_sizes();
        if sizes.len() > 1 {
            prop_assert!(sizes.iter().all(|&s| s as f64 >= min_area), "{sizes:?} vs {min_area}");
        }
        // regions only ever grow by absorbing whole regions
        for (a, b) in labels.as_slice().iter().zip(pruned.as_slice()) {
            for (c, d) in labels.as_slice().iter().zip(pruned.as_slice()) {
                if a == c {
                    prop_assert_eq!(b, d);
                }
            }
        }
    }

    #[test]
    fn selection_returns_one_region(
        (labels, r) in labeled_image(12, 5).prop_flat_map(|(_, l)| {
            let (w, h) = l.dims();
            (Just(l), proptest::collection::vec(any::<bool>(), w * h).prop_map(move |d| BinaryMask::new(w, h, d).unwrap()))
        })
    ) {
        let sel = select_lesion_label(&labels, &r).unwrap();
        let picked: Vec<u32> = labels
            .as_slice()
            .iter()
            .zip(sel.as_slice())
            .filter(|(_, &s)| s)
            .map(|(&l, _)| l)
            .collect();
        prop_assert!(!picked.is_empty());
        prop_assert!(picked.iter().all(|&l| l == picked[0]));
        prop_assert_eq!(&sel, &labels.region_mask(picked[0]));
        let best = jaccard(&sel, &r).unwrap();
        for l in 0..labels.label_bound() as u32 {
            prop_assert!(jaccard(&labels.region_mask(l), &r).unwrap() <= best);
        }
    }

    #[test]
    fn equalization_keeps_flat_images_flat(w in 8usize..40, h in 8usize..40, v in any::<u8>()) {
        let img = GrayImage::from_fn(w, h, |_, _| v);
        let out = adaptive_equalize(&img, &PostprocessConfig::default()).unwrap();
        prop_assert_eq!(out.dims(), (w, h));
        prop_assert!(out.as_raw().iter().all(|&p| p == out.as_raw()[0]));
    }

    #[test]
    fn gray_commutes_with_flip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let img = ImageRgb::from_fn(w, h, |x, y| {
            let k = seed.wrapping_mul(31).wrapping_add((x * 7 + y * 13) as u64);
            [k as u8, (k >> 8) as u8, (k >> 16) as u8]
        });
        let flipped = ImageRgb::from_fn(w, h, |x, y| img.pixel(w - 1 - x, y));
        let (g, gf) = (to_gray(&img), to_gray(&flipped));
        for y in 0..h {
            for x in 0..w {
                prop_assert_eq!(g.get(x, y), gf.get(w - 1 - x, y));
            }
        }
    }

    #[test]
    fn ellipse_is_symmetric(w in 1usize..60, h in 1usize..60) {
        let e = ellipse_mask(w, h);
        prop_assert_eq!(flip(&e), e.clone());
        let vflip = BinaryMask::from_fn(w, h, |x, y| e.get(x, h - 1 - y));
        prop_assert_eq!(vflip, e);
    }
}

/// Reference CLAHE computed pixel by pixel: the four surrounding tile
/// mappings are rebuilt from their raw histograms for every pixel.
fn reference_clahe(img: &GrayImage, tiles: usize, clip_limit: f64) -> Vec<f64> {
    let (w, h) = img.dims();
    let (tw, th) = (w / tiles, h / tiles);
    let area = (tw * th) as f64;
    let mapping = |tx: usize, ty: usize, level: usize| -> f64 {
        let mut hist = vec![0.0f64; 256];
        for y in ty * th..(ty + 1) * th {
            for x in tx * tw..(tx + 1) * tw {
                hist[img.get(x, y) as usize] += 1.0;
            }
        }
        let limit = (clip_limit * area).floor().max(1.0);
        let mut excess = 0.0;
        for v in hist.iter_mut() {
            if *v > limit {
                excess += *v - limit;
                *v = limit;
            }
        }
        let even = (excess / 256.0).floor();
        let rest = (excess - even * 256.0) as usize;
        for v in hist.iter_mut() {
            *v += even;
        }
        if rest > 0 {
            let stride = (256 / rest).max(1);
            for k in 0..rest {
                if k * stride < 256 {
                    hist[k * stride] += 1.0;
                }
            }
        }
        hist[..=level].iter().sum::<f64>() * 255.0 / area
    };
    let axis = |p: usize, size: usize| {
        let g = ((p as f64 + 0.5) / size as f64 - 0.5).clamp(0.0, (tiles - 1) as f64);
        let i0 = (g.floor() as usize).min(tiles - 1);
        (i0, (i0 + 1).min(tiles - 1), g - i0 as f64)
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = img.get(x, y) as usize;
            let (x0, x1, fx) = axis(x, tw);
            let (y0, y1, fy) = axis(y, th);
            let top = (1.0 - fx) * mapping(x0, y0, v).round() + fx * mapping(x1, y0, v).round();
            let bottom = (1.0 - fx) * mapping(x0, y1, v).round() + fx * mapping(x1, y1, v).round();
            out.push((1.0 - fy) * top + fy * bottom);
        }
    }
    out
}

#[test]
fn clahe_two_tone_matches_reference() {
    let img = GrayImage::from_fn(64, 64, |x, y| {
        let (dx, dy) = (x as f64 - 27.0, y as f64 - 35.0);
        if dx * dx + dy * dy < 19.0 * 19.0 { 60 } else { 180 }
    });
    let cfg = PostprocessConfig::default();
    let out = adaptive_equalize(&img, &cfg).unwrap();
    let want = reference_clahe(&img, cfg.clahe_tiles, cfg.clahe_clip_limit);
    for (i, (&got, &want)) in out.as_raw().iter().zip(&want).enumerate() {
        assert!((got as f64 - want).abs() <= 2.0, "pixel {i}: got {got}, reference {want:.2}");
    }
}
