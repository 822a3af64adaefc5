//! Acceptance suite. Each test prints one `[acceptance] ... PASS` line;
//! run with `cargo test --test acceptance -- --nocapture` to see them.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pastiche_core::coco::{validate_dataset, Annotation, Dataset, Provenance};
use pastiche_core::compose::{
    compose_dataset, render, sample_rng, update_annotations, ComposeConfig, ComposeInputs,
    CompositionPlan, Instance, InstanceProvider, PasteAction, PastedInstance, PoolInstanceProvider,
};
use pastiche_core::mask::{Bitmap, RleMask};
use pastiche_core::pool::{
    background_simplicity, filter_pool, select_all, select_mask_by_clip, CandidateMask,
    FilterConfig, FsImageLoader, ImageLoader, InstanceRecord, PoolManifest, Source,
};
use pastiche_core::stats::{compute_scale_stats, CategoryScale, ScaleStats};
use pastiche_core::synth::{generate_annotated_dataset, generate_pool, SourcePolicy, SynthSpec};

fn random_bitmap(rng: &mut impl Rng, w: u32, h: u32) -> Bitmap {
    let density = rng.random_range(0.0..=1.0);
    let mut b = Bitmap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            b.set(x, y, rng.random_bool(density));
        }
    }
    b
}

fn rect_bitmap(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> Bitmap {
    let mut b = Bitmap::new(w, h);
    for y in y0..(y0 + rh).min(h) {
        for x in x0..(x0 + rw).min(w) {
            b.set(x, y, true);
        }
    }
    b
}

#[test]
fn c01_rle_codec_roundtrip_and_goldens() {
    let start = Instant::now();

    // 10,000 random masks up to 128x128: dense -> runs -> string -> back
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    for _ in 0..10_000 {
        let w = rng.random_range(1..=128);
        let h = rng.random_range(1..=128);
        let bitmap = random_bitmap(&mut rng, w, h);
        let rle = RleMask::encode(&bitmap);
        assert_eq!(rle.decode(), bitmap);
        let compressed = rle.to_compressed();
        let back = RleMask::from_compressed(&compressed, h, w).unwrap();
        assert_eq!(back, rle);
    }

    // committed golden strings from an independent transcription of the
    // reference C codec
    #[derive(serde::Deserialize)]
    struct Golden {
        cases: Vec<GoldenCase>,
    }
    #[derive(serde::Deserialize)]
    struct GoldenCase {
        size: [u32; 2],
        counts: Vec<u32>,
        compressed: String,
    }
    let bytes = std::fs::read(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/rle_goldens.json"
    ))
    .unwrap();
    let golden: Golden = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(golden.cases.len(), 50);
    for case in &golden.cases {
        let [h, w] = case.size;
        let mask = RleMask::from_counts(h, w, case.counts.clone()).unwrap();
        assert_eq!(mask.to_compressed(), case.compressed, "{h}x{w}");
        assert_eq!(
            RleMask::from_compressed(&case.compressed, h, w)
                .unwrap()
                .counts(),
            case.counts.as_slice()
        );
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "[acceptance] C1 rle-codec: PASS (10000 roundtrips + 50 goldens in {:.2}s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn c02_mask_selection_fidelity() {
    // score table with candidates in SRF / CLIPseg / UFO / U2Net order
    let rows: [([f64; 4], &str); 3] = [
        ([0.2448, 0.2328, 0.2375, 0.2451], "u2net"),
        ([0.2231, 0.2425, 0.2128, 0.2301], "clipseg"),
        ([0.2767, 0.2776, 0.1698, 0.2760], "clipseg"),
    ];
    let names = ["selfreformer", "clipseg", "ufo", "u2net"];
    for (scores, expected) in rows {
        let mut record = InstanceRecord {
            id: "probe".into(),
            category_id: 1,
            source: Source::Generated,
            image_path: "probe.png".into(),
            width: 8,
            height: 8,
            candidates: names
                .iter()
                .zip(scores)
                .map(|(name, clip_score)| CandidateMask {
                    segmenter: (*name).into(),
                    clip_score,
                    mask: RleMask::encode(&rect_bitmap(8, 8, 2, 2, 4, 4)),
                })
                .collect(),
            chosen: None,
            clip_score: None,
        };
        select_mask_by_clip(&mut record);
        assert_eq!(
            record.candidates[record.chosen.unwrap()].segmenter,
            expected
        );
    }
    println!("[acceptance] C2 mask-selection: PASS (3/3 score-table rows)");
}

#[test]
fn c03_threshold_formula_vs_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    for trial in 0..1000 {
        let cfg = FilterConfig {
            clip_threshold: rng.random_range(0.0..0.5),
            subtractive: [0.0, 0.005, 0.01][rng.random_range(0..3)],
            ..FilterConfig::default()
        };
        let n_cats = rng.random_range(1..=5u64);
        let mut pool = PoolManifest::default();
        for i in 0..rng.random_range(1..=40usize) {
            // mid-size mask so the area rule always passes; generated source
            // so the background rule never applies
            pool.records.push(InstanceRecord {
                id: format!("r{i}"),
                category_id: rng.random_range(1..=n_cats),
                source: Source::Generated,
                image_path: format!("r{i}.png"),
                width: 10,
                height: 10,
                candidates: vec![CandidateMask {
                    segmenter: "u2net".into(),
                    clip_score: rng.random_range(0.0..0.5),
                    mask: RleMask::encode(&rect_bitmap(10, 10, 2, 2, 5, 5)),
                }],
                chosen: None,
                clip_score: None,
            });
        }

        struct Unreachable;
        impl ImageLoader for Unreachable {
            fn load(&self, _: &str) -> pastiche_core::Result<image::RgbImage> {
                unreachable!("generated records skip the background check")
            }
        }
        let (kept, _) = filter_pool(&pool, &cfg, &Unreachable);

        // brute force: score >= min(t, max(C_i) - d), exact comparison
        let mut max_per_cat: BTreeMap<u64, f64> = BTreeMap::new();
        for record in &pool.records {
            let score = record.candidates[0].clip_score;
            let slot = max_per_cat
                .entry(record.category_id)
                .or_insert(f64::NEG_INFINITY);
            *slot = slot.max(score);
        }
        let expected: Vec<&str> = pool
            .records
            .iter()
            .filter(|r| {
                let score = r.candidates[0].clip_score;
                score
                    >= cfg
                        .clip_threshold
                        .min(max_per_cat[&r.category_id] - cfg.subtractive)
            })
            .map(|r| r.id.as_str())
            .collect();
        let got: Vec<&str> = kept.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(got, expected, "trial {trial}");

        // the max scorer of every category survives
        for (cat, max) in &max_per_cat {
            assert!(
                kept.records
                    .iter()
                    .any(|r| r.category_id == *cat && r.clip_score.unwrap() == *max),
                "trial {trial}: max scorer of category {cat} was dropped"
            );
        }
    }
    println!("[acceptance] C3 threshold-formula: PASS (1000 random pools, exact)");
}

#[test]
fn c04_area_filter_boundaries() {
    let cfg = FilterConfig::default();
    // 100x100 masks: popcounts 500/9500 sit exactly on the bounds,
    // 499/9501 exactly outside
    let mut pool = PoolManifest::default();
    for (name, area) in [
        ("f0500", 500u64),
        ("f0499", 499),
        ("f9500", 9500),
        ("f9501", 9501),
    ] {
        let mut bitmap = Bitmap::new(100, 100);
        let mut left = area;
        'fill: for y in 0..100 {
            for x in 0..100 {
                if left == 0 {
                    break 'fill;
                }
                bitmap.set(x, y, true);
                left -= 1;
            }
        }
        pool.records.push(InstanceRecord {
            id: name.into(),
            category_id: 1,
            source: Source::Generated,
            image_path: format!("{name}.png"),
            width: 100,
            height: 100,
            candidates: vec![CandidateMask {
                segmenter: "u2net".into(),
                clip_score: 0.3,
                mask: RleMask::encode(&bitmap),
            }],
            chosen: None,
            clip_score: None,
        });
    }
    struct Unreachable;
    impl ImageLoader for Unreachable {
        fn load(&self, _: &str) -> pastiche_core::Result<image::RgbImage> {
            unreachable!()
        }
    }
    let (kept, _) = filter_pool(&pool, &cfg, &Unreachable);
    let ids: Vec<&str> = kept.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, vec!["f0500", "f9500"]);
    println!("[acceptance] C4 area-boundaries: PASS (0.05/0.95 kept, 0.0499/0.9501 rejected)");
}

#[test]
fn c05_background_simplicity() {
    use rand::seq::SliceRandom;
    let cfg = FilterConfig::default();

    let uniform = image::RgbImage::from_pixel(64, 64, image::Rgb([37, 120, 200]));
    assert!(background_simplicity(&uniform, &cfg));

    // 39% dominant color, remainder spread over many distant bins
    let mut almost = image::RgbImage::new(100, 100);
    for (i, px) in almost.pixels_mut().enumerate() {
        *px = if i < 3900 {
            image::Rgb([0, 0, 0])
        } else {
            let k = ((i - 3900) / 61) as u8;
            image::Rgb([12 + k, 60 + k, 130 + k])
        };
    }
    assert!(!background_simplicity(&almost, &cfg));

    // histogram invariance: shuffling pixels never flips the verdict
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    for img in [&uniform, &almost] {
        let expected = background_simplicity(img, &cfg);
        for _ in 0..3 {
            let mut pixels: Vec<image::Rgb<u8>> = img.pixels().cloned().collect();
            pixels.shuffle(&mut rng);
            let shuffled = image::RgbImage::from_fn(img.width(), img.height(), |x, y| {
                pixels[(y * img.width() + x) as usize]
            });
            assert_eq!(background_simplicity(&shuffled, &cfg), expected);
        }
    }
    println!("[acceptance] C5 background-simplicity: PASS (uniform/39%/shuffle-invariance)");
}

/// Brute-force per-pixel z-buffer: the topmost paste owns each pixel;
/// background annotations own whatever no paste covers.
fn zbuffer_oracle(
    background: &[&Annotation],
    pasted: &[PastedInstance],
    w: u32,
    h: u32,
) -> Vec<Bitmap> {
    let mut top: Vec<Option<usize>> = vec![None; (w * h) as usize];
    for (i, paste) in pasted.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if paste.mask.get(x, y) {
                    top[(y * w + x) as usize] = Some(i);
                }
            }
        }
    }
    let mut visible = Vec::new();
    for ann in background {
        let full = ann.mask.decode();
        let mut v = Bitmap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if full.get(x, y) && top[(y * w + x) as usize].is_none() {
                    v.set(x, y, true);
                }
            }
        }
        visible.push(v);
    }
    for (i, paste) in pasted.iter().enumerate() {
        let mut v = Bitmap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if paste.mask.get(x, y) && top[(y * w + x) as usize] == Some(i) {
                    v.set(x, y, true);
                }
            }
        }
        visible.push(v);
    }
    visible
}

#[test]
fn c06_occlusion_zbuffer_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
    let (w, h) = (64u32, 64u32);
    for trial in 0..500 {
        // random background annotations (0..=3) and pastes (1..=10)
        let mut background = Vec::new();
        for i in 0..rng.random_range(0..=3usize) {
            let mask = rect_bitmap(
                w,
                h,
                rng.random_range(0..w - 8),
                rng.random_range(0..h - 8),
                rng.random_range(4..24),
                rng.random_range(4..24),
            );
            background.push(Annotation::from_mask(
                i as u64 + 1,
                1,
                1,
                RleMask::encode(&mask),
                Provenance::Original,
            ));
        }
        let mut pasted = Vec::new();
        for i in 0..rng.random_range(1..=10usize) {
            let mask = if rng.random_bool(0.8) {
                rect_bitmap(
                    w,
                    h,
                    rng.random_range(0..w - 4),
                    rng.random_range(0..h - 4),
                    rng.random_range(2..40),
                    rng.random_range(2..40),
                )
            } else {
                random_bitmap(&mut rng, w, h)
            };
            pasted.push(PastedInstance {
                instance_id: format!("p{i}"),
                category_id: i as u64 + 1,
                mask,
            });
        }
        let bg_refs: Vec<&Annotation> = background.iter().collect();
        let got = update_annotations(&bg_refs, &pasted, 0.0);

        let oracle: Vec<Bitmap> = zbuffer_oracle(&bg_refs, &pasted, w, h)
            .into_iter()
            .filter(|m| !m.is_empty())
            .collect();
        assert_eq!(got.len(), oracle.len(), "trial {trial}");
        for (v, expected) in got.iter().zip(&oracle) {
            assert_eq!(v.mask.decode(), *expected, "trial {trial}");
            assert!(v.area > 0, "trial {trial} emitted a zero-area annotation");
            assert_eq!(v.area, expected.count_ones());
            assert_eq!(v.bbox, RleMask::encode(expected).bbox());
        }
    }
    println!("[acceptance] C6 occlusion-oracle: PASS (500 plans bit-exact, no zero-area output)");
}

struct FullSquareProvider {
    side: u32,
}

impl InstanceProvider for FullSquareProvider {
    fn fetch(&self, _: &str) -> pastiche_core::Result<Instance> {
        let mut mask = Bitmap::new(self.side, self.side);
        for y in 0..self.side {
            for x in 0..self.side {
                mask.set(x, y, true);
            }
        }
        Ok(Instance {
            category_id: 1,
            image: image::RgbImage::from_pixel(self.side, self.side, image::Rgb([220, 10, 10])),
            mask,
        })
    }
}

#[test]
fn c07_scale_statistics_and_paste_area() {
    // compute_scale_stats vs an independent two-pass oracle, rel err < 1e-12
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    for _ in 0..50 {
        let mut dataset = Dataset::default();
        let n_cats = rng.random_range(1..=4u64);
        for cat in 1..=n_cats {
            dataset.categories.push(pastiche_core::coco::Category {
                id: cat,
                name: format!("c{cat}"),
                frequency_band: pastiche_core::coco::FrequencyBand::Unknown,
            });
        }
        let n_images = rng.random_range(1..=12u64);
        for img in 1..=n_images {
            let w = rng.random_range(16..=96u32);
            let h = rng.random_range(16..=96u32);
            dataset.images.push(pastiche_core::coco::ImageInfo {
                id: img,
                width: w,
                height: h,
                file_name: format!("{img}.png"),
            });
            for _ in 0..rng.random_range(1..=3) {
                let rw = rng.random_range(1..=w / 2);
                let rh = rng.random_range(1..=h / 2);
                let mask = rect_bitmap(
                    w,
                    h,
                    rng.random_range(0..w - rw),
                    rng.random_range(0..h - rh),
                    rw,
                    rh,
                );
                let id = dataset.annotations.len() as u64 + 1;
                dataset.annotations.push(Annotation::from_mask(
                    id,
                    img,
                    rng.random_range(1..=n_cats),
                    RleMask::encode(&mask),
                    Provenance::Original,
                ));
            }
        }
        let stats = compute_scale_stats(&dataset).unwrap();

        // two-pass oracle
        let dims: BTreeMap<u64, (u32, u32)> = dataset
            .images
            .iter()
            .map(|im| (im.id, (im.width, im.height)))
            .collect();
        let mut per_cat: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for ann in &dataset.annotations {
            let (w, h) = dims[&ann.image_id];
            per_cat
                .entry(ann.category_id)
                .or_default()
                .push((ann.area as f64 / (w as f64 * h as f64)).sqrt());
        }
        for (cat, scales) in per_cat {
            let n = scales.len() as f64;
            let mean = scales.iter().sum::<f64>() / n;
            let sigma = (scales.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
            let cs = stats.per_category[&cat];
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            assert!(rel(cs.mu, mean) < 1e-12 || (cs.mu - mean).abs() < 1e-15);
            assert!(rel(cs.sigma, sigma) < 1e-12 || (cs.sigma - sigma).abs() < 1e-12);
        }
    }

    // pasted area on a blank 640x640 background within 2% of scale^2*H*W
    let provider = FullSquareProvider { side: 100 };
    let background = image::RgbImage::from_pixel(640, 640, image::Rgb([0, 0, 0]));
    let cfg = ComposeConfig::default();
    let mut scale = 0.1f64;
    while scale <= 0.5 + 1e-9 {
        let plan = CompositionPlan {
            background_id: 1,
            seed: 0,
            actions: vec![PasteAction {
                instance_id: "sq".into(),
                scale,
                center: (320.0, 320.0),
                z: 0,
            }],
        };
        let sample = render(&plan, &provider, &background, &[], &cfg).unwrap();
        let target = scale * scale * 640.0 * 640.0;
        let got = sample.annotations[0].area as f64;
        assert!(
            (got - target).abs() / target <= 0.02,
            "scale {scale}: {got} vs {target}"
        );
        scale += 0.0617; // off-grid steps so rounding is actually exercised
    }
    println!("[acceptance] C7 scale-statistics: PASS (oracle < 1e-12, paste area within 2%)");
}

#[test]
fn c08_sampling_laws() {
    // 1e5 plans, N_max = 20, 3 categories
    let mut pool = PoolManifest::default();
    for (i, cat) in [1u64, 2, 3].iter().enumerate() {
        pool.records.push(InstanceRecord {
            id: format!("inst-{i}"),
            category_id: *cat,
            source: Source::Generated,
            image_path: format!("inst-{i}.png"),
            width: 16,
            height: 16,
            candidates: vec![CandidateMask {
                segmenter: "u2net".into(),
                clip_score: 0.3,
                mask: RleMask::encode(&rect_bitmap(16, 16, 4, 4, 8, 8)),
            }],
            chosen: Some(0),
            clip_score: Some(0.3),
        });
    }
    let stats = ScaleStats {
        per_category: BTreeMap::new(),
        global: CategoryScale {
            mu: 0.3,
            sigma: 0.05,
            n: 3,
        },
    };
    let background = pastiche_core::coco::ImageInfo {
        id: 9,
        width: 64,
        height: 64,
        file_name: "bg.png".into(),
    };
    let cfg = ComposeConfig {
        n_max: 20,
        ..ComposeConfig::default()
    };

    let trials = 100_000u64;
    let mut n_counts = [0u64; 20];
    let mut cat_counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut total_actions = 0u64;
    for t in 0..trials {
        let mut rng = sample_rng(0xC8, 9, t as u32);
        let plan =
            pastiche_core::compose::plan_sample(&mut rng, &pool, &stats, &background, &[], &cfg)
                .unwrap();
        assert!((1..=20).contains(&plan.actions.len()));
        n_counts[plan.actions.len() - 1] += 1;
        for action in &plan.actions {
            let cat = pool.record(&action.instance_id).unwrap().category_id;
            *cat_counts.entry(cat).or_insert(0) += 1;
            total_actions += 1;
        }
    }

    // chi-squared uniformity over {1..20}, dof 19, alpha 0.01 -> 36.191
    let expected = trials as f64 / 20.0;
    let chi2: f64 = n_counts
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    assert!(chi2 < 36.191, "chi2 = {chi2}");

    // category frequencies uniform within 1% absolute
    for (&cat, &count) in &cat_counts {
        let freq = count as f64 / total_actions as f64;
        assert!(
            (freq - 1.0 / 3.0).abs() < 0.01,
            "category {cat} frequency {freq}"
        );
    }
    println!(
        "[acceptance] C8 sampling-laws: PASS (chi2 = {chi2:.2} < 36.191, category freq within 1%)"
    );
}

fn digest_tree(dir: &Path) -> BTreeMap<String, u64> {
    fn fnv(bytes: &[u8]) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, u64>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fnv(&std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn c09_compose_determinism_and_throughput() {
    // 25 synthetic 640x640 backgrounds x repeat 8 = 200 composed samples
    let synth_dir = tempfile::tempdir().unwrap();
    let bg_spec = SynthSpec {
        canvas_width: 640,
        canvas_height: 640,
        categories: 5,
        per_category: 5,
        seed: 0x5be1,
        sources: SourcePolicy::Generated,
        ..SynthSpec::default()
    };
    let dataset = generate_annotated_dataset(&bg_spec, synth_dir.path()).unwrap();
    assert_eq!(dataset.images.len(), 25);

    let pool_spec = SynthSpec {
        categories: 3,
        per_category: 10,
        seed: 0x9001,
        sources: SourcePolicy::Generated,
        ..SynthSpec::default()
    };
    let mut pool = generate_pool(&pool_spec, synth_dir.path()).unwrap();
    select_all(&mut pool);
    let stats = compute_scale_stats(&dataset).unwrap();

    let loader = FsImageLoader::new(synth_dir.path());
    let provider = PoolInstanceProvider::new(&pool, &loader);
    let inputs = ComposeInputs {
        pool: &pool,
        stats: &stats,
        dataset: &dataset,
        backgrounds: &loader,
        instances: &provider,
    };
    let cfg = ComposeConfig {
        seed: 0xD17E,
        repeat: 8,
        ..ComposeConfig::default()
    };

    let mut digests = Vec::new();
    let mut timings: BTreeMap<usize, f64> = BTreeMap::new();
    for jobs in [1usize, 4, 8] {
        let out = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let composed = compose_dataset(&inputs, &cfg, out.path(), jobs).unwrap();
        timings.insert(jobs, start.elapsed().as_secs_f64());
        assert_eq!(composed.images.len(), 200);
        validate_dataset(&composed).unwrap();
        digests.push(digest_tree(out.path()));
    }
    assert_eq!(digests[0], digests[1], "jobs=1 vs jobs=4 outputs differ");
    assert_eq!(digests[0], digests[2], "jobs=1 vs jobs=8 outputs differ");

    let t8 = timings[&8];
    assert!(t8 < 60.0, "200 samples took {t8:.1}s at jobs=8");

    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let speedup_note = if cores >= 4 {
        let speedup = timings[&1] / timings[&4];
        assert!(
            speedup >= 3.0,
            "1->4 worker speedup {speedup:.2}x below 3x on {cores} cores"
        );
        format!("speedup 1->4 = {speedup:.2}x")
    } else {
        format!("speedup check skipped: {cores} core(s) < 4")
    };
    println!(
        "[acceptance] C9 determinism+throughput: PASS (byte-identical jobs 1/4/8; 200 samples in {t8:.1}s; {speedup_note})"
    );
}

#[test]
fn c10_end_to_end_cli() {
    let bin = env!("CARGO_BIN_EXE_pastiche");
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let spec = SynthSpec {
        categories: 3,
        per_category: 100,
        seed: 0xE2E,
        ..SynthSpec::default()
    };
    std::fs::write(
        root.join("spec.json"),
        serde_json::to_vec_pretty(&spec).unwrap(),
    )
    .unwrap();

    let run = |args: &[&str]| {
        let output = std::process::Command::new(bin)
            .args(args)
            .env("RUST_LOG", "error")
            .output()
            .expect("spawn pastiche");
        assert!(
            output.status.success(),
            "pastiche {args:?} failed:\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr)
        );
        output
    };

    let synth_dir = root.join("synth");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    run(&[
        "synth",
        "--spec",
        &s(&root.join("spec.json")),
        "--out",
        &s(&synth_dir),
    ]);

    let pool = synth_dir.join("pool.ndjson");
    let selected = root.join("pool-selected.ndjson");
    run(&["select", "--in", &s(&pool), "--out", &s(&selected)]);

    let filtered = root.join("pool-filtered.ndjson");
    let report = root.join("filter-report.json");
    run(&[
        "filter",
        "--in",
        &s(&selected),
        "--out",
        &s(&filtered),
        "--report",
        &s(&report),
        "--dataset",
        &s(&synth_dir.join("dataset.json")),
        "--image-root",
        &s(&synth_dir),
    ]);
    let report_json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(report_json["input"], 300);
    assert!(report_json["kept"].as_u64().unwrap() > 0);

    let stats_path = root.join("stats.json");
    run(&[
        "stats",
        "--in",
        &s(&synth_dir.join("dataset.json")),
        "--out",
        &s(&stats_path),
    ]);

    let out_dir = root.join("composed");
    let config = serde_json::json!({
        "pool_manifest": filtered,
        "source_dataset": synth_dir.join("dataset.json"),
        "pool_image_root": synth_dir,
        "background_image_root": synth_dir,
        "output_dir": out_dir,
        "stats_path": stats_path,
        "jobs": 2,
        "compose": {"seed": 11, "repeat": 1}
    });
    std::fs::write(
        root.join("config.json"),
        serde_json::to_vec_pretty(&config).unwrap(),
    )
    .unwrap();
    run(&["--config", &s(&root.join("config.json")), "compose"]);

    let validate_out = run(&["validate", "--in", &s(&out_dir.join("dataset.json"))]);
    let verdict: serde_json::Value =
        serde_json::from_slice(&validate_out.stdout).expect("validate prints JSON");
    assert_eq!(verdict["valid"], true);
    assert_eq!(verdict["images"], 300);
    assert!(verdict["annotations"].as_u64().unwrap() > 300);

    // and the library validator agrees
    let composed =
        pastiche_core::coco::parse_dataset(&std::fs::read(out_dir.join("dataset.json")).unwrap())
            .unwrap();
    validate_dataset(&composed).unwrap();
    let pasted = composed
        .annotations
        .iter()
        .filter(|a| a.provenance == Provenance::Pasted)
        .count();
    assert!(pasted > 0, "no pasted annotations in composed dataset");

    println!(
        "[acceptance] C10 end-to-end: PASS (synth->select->filter->stats->compose->validate, {} images, {} annotations, {pasted} pasted)",
        verdict["images"], verdict["annotations"]
    );
}
