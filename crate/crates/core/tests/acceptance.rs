//! Acceptance checks. Each criterion prints one PASS/FAIL line with its
//! measurement and runtime; the binary exits nonzero if any criterion fails.
//!
//! Set `EMSEG_LUCCHI_GT` to an EMVOL u8 mask of the Lucchi training labels to
//! run the optional ground-truth perturbation comparison.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use emseg::augment::{apply_rigid, enumerate_tta, invert_rigid};
use emseg::emvol::{decode, encode, load_volume, save_volume, HEADER_LEN};
use emseg::metrics::{confusion_counts, gt_perturbation_check};
use emseg::patch::{
    extract, plan_grid, reconstruct_blend, reconstruct_mosaic, reconstruct_overlap_mean, spline_window_1d, Overlap,
    PatchShape,
};
use emseg::postproc::{median_z_filter, tta_ensemble, PostprocError};
use emseg::sampling::{build_probability_map, sample_patch_origins};
use emseg::sweepdsl::{
    cardinality, contains, parse_expr, parse_space, render_config, render_space, Cardinality, ConfigAssignment,
    SpaceExpr,
};
use emseg::{AnyVolume, BinaryMask, Footprint, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> BinaryMask {
    let density: f64 = rng.random_range(0.0..1.0);
    BinaryMask::from_fn(dims, |_, _, _| rng.random_bool(density)).unwrap()
}

fn random_f32(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Volume<f32> {
    Volume::from_fn(dims, |_, _, _| rng.random::<f32>()).unwrap()
}

fn iou_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = [32, 32, 8];
    for pair in 0..100 {
        let pred = random_mask(&mut rng, dims);
        let gt = random_mask(&mut rng, dims);
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for z in 0..8 {
            for y in 0..32 {
                for x in 0..32 {
                    match (pred.is_set(x, y, z), gt.is_set(x, y, z)) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fn_ += 1,
                        (false, false) => tn += 1,
                    }
                }
            }
        }
        let c = confusion_counts(&pred, &gt).unwrap();
        if (c.tp, c.fp, c.fn_, c.tn) != (tp, fp, fn_, tn) {
            return outcome(false, format!("pair {pair}: counts {c:?}"));
        }
        let fg = (tp + fp + fn_ > 0).then(|| tp as f64 / (tp + fp + fn_) as f64);
        let bg = (tn + fp + fn_ > 0).then(|| tn as f64 / (tn + fp + fn_) as f64);
        let overall = fg.zip(bg).map(|(a, b)| (a + b) / 2.0);
        if c.iou_foreground() != fg || c.iou_background() != bg || c.iou_overall() != overall {
            return outcome(false, format!("pair {pair}: IoU differs from oracle"));
        }
    }
    outcome(true, "100 pairs, counts and IoUs identical")
}

fn partition_of_unity() -> Outcome {
    let mut worst_1d = 0f64;
    let mut worst_nd = 0f64;
    for l in [4usize, 8, 16, 64, 256] {
        let w = spline_window_1d(l).unwrap();
        let h = l / 2;
        // Positions in one stride period are covered by exactly two shifted copies.
        let s: Vec<f64> = (0..h).map(|p| w[p] + w[p + h]).collect();
        for &v in &s {
            worst_1d = worst_1d.max((v - 1.0).abs());
        }
        for a in 0..h {
            for b in 0..h {
                let sum2: f64 = [(a, b), (a + h, b), (a, b + h), (a + h, b + h)]
                    .iter()
                    .map(|&(i, j)| w[i] * w[j])
                    .sum();
                worst_nd = worst_nd.max((sum2 - 1.0).abs());
                if l <= 64 {
                    for c in 0..h {
                        let mut sum3 = 0.0;
                        for i in [a, a + h] {
                            for j in [b, b + h] {
                                for k in [c, c + h] {
                                    sum3 += w[i] * w[j] * w[k];
                                }
                            }
                        }
                        worst_nd = worst_nd.max((sum3 - 1.0).abs());
                    }
                }
            }
        }
    }
    outcome(
        worst_1d <= 1e-12 && worst_nd <= 1e-9,
        format!("max deviation 1D {worst_1d:.2e}, 2D/3D {worst_nd:.2e}"),
    )
}

fn even_patch(rng: &mut ChaCha8Rng, dim: usize) -> usize {
    if dim < 2 {
        1
    } else {
        2 * rng.random_range(1..=dim / 2)
    }
}

fn reconstruction_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_blend = 0f64;
    for case in 0..50 {
        let dims = [
            rng.random_range(1..=97),
            rng.random_range(1..=65),
            rng.random_range(1..=9),
        ];
        let v = random_f32(&mut rng, dims);
        let any = PatchShape::new(
            rng.random_range(1..=dims[0]),
            rng.random_range(1..=dims[1]),
            rng.random_range(1..=dims[2]),
        )
        .unwrap();
        let none = plan_grid(dims, any, Overlap::None).unwrap();
        let mosaic = reconstruct_mosaic(&extract(&v, &none).unwrap(), &none).unwrap();
        if mosaic.data() != v.data() {
            return outcome(false, format!("case {case} {dims:?}: mosaic not bit-exact"));
        }
        let half = plan_grid(dims, any, Overlap::Half).unwrap();
        let mean = reconstruct_overlap_mean(&extract(&v, &half).unwrap(), &half).unwrap();
        if mean.data() != v.data() {
            return outcome(false, format!("case {case} {dims:?}: overlap mean not exact"));
        }
        let even = PatchShape::new(
            even_patch(&mut rng, dims[0]),
            even_patch(&mut rng, dims[1]),
            even_patch(&mut rng, dims[2]),
        )
        .unwrap();
        let half = plan_grid(dims, even, Overlap::Half).unwrap();
        let blend = reconstruct_blend(&extract(&v, &half).unwrap(), &half).unwrap();
        for (a, b) in blend.data().iter().zip(v.data()) {
            worst_blend = worst_blend.max(f64::from((a - b).abs()));
        }
    }
    outcome(
        worst_blend < 1e-6,
        format!("50 volumes, mosaic and overlap mean exact, blend max error {worst_blend:.2e}"),
    )
}

fn tta_group() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probe = random_f32(&mut rng, [6, 6, 4]);
    for (d, expected) in [(2u8, 8usize), (3, 16)] {
        let group = enumerate_tta(d).unwrap();
        if group.len() != expected {
            return outcome(false, format!("{d}D group has {} transforms", group.len()));
        }
        let images: Vec<Volume<f32>> = group.iter().map(|t| apply_rigid(&probe, t)).collect();
        for i in 0..images.len() {
            for j in 0..i {
                if images[i] == images[j] {
                    return outcome(false, format!("{d}D transforms {j} and {i} coincide"));
                }
            }
            if apply_rigid(&images[i], &invert_rigid(&group[i])) != probe {
                return outcome(false, format!("{d}D transform {i} is not inverted exactly"));
            }
        }
        let stub = |x: &Volume<f32>| -> Result<Volume<f32>, PostprocError> { Ok(x.map(|p| p * p)) };
        let out = tta_ensemble(&stub, &probe, d).unwrap();
        let direct = stub(&probe).unwrap();
        let err = out
            .data()
            .iter()
            .zip(direct.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0f32, f32::max);
        if err >= 1e-6 {
            return outcome(false, format!("{d}D equivariant ensemble error {err:.2e}"));
        }
    }
    outcome(true, "8 and 16 distinct transforms, exact inverses, equivariant stub reproduced")
}

fn median_z() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = random_f32(&mut rng, [7, 5, 6]);
    if median_z_filter(&v, 1).unwrap() != v {
        return outcome(false, "window 1 is not the identity");
    }
    let mut impulse = Volume::<u8>::filled([4, 4, 5], 0).unwrap();
    impulse.set(1, 2, 2, 1);
    if median_z_filter(&impulse, 3).unwrap().data().iter().any(|&p| p != 0) {
        return outcome(false, "impulse survived window 3");
    }
    for pair in 0..100 {
        let a = random_f32(&mut rng, [5, 4, 7]);
        let b = a.map(|p| p + 0.5 * (p * 7.0).fract());
        let window = [1, 3, 5, 7][pair % 4];
        let (fa, fb) = (median_z_filter(&a, window).unwrap(), median_z_filter(&b, window).unwrap());
        if fa.data().iter().zip(fb.data()).any(|(x, y)| x > y) {
            return outcome(false, format!("monotonicity broken on pair {pair}"));
        }
    }
    outcome(true, "identity, impulse removal and 100 monotone pairs")
}

fn probability_sampling() -> Outcome {
    let gt = BinaryMask::from_fn([128, 128, 4], |x, y, _| {
        let (dx, dy) = (x as i64 - 40, y as i64 - 70);
        dx * dx + dy * dy <= 15 * 15
    })
    .unwrap();
    let map = build_probability_map(&gt, 0.94).unwrap();
    let patch = PatchShape::new(32, 32, 1).unwrap();
    let a = sample_patch_origins(&map, patch, 10_000, 6).unwrap();
    let b = sample_patch_origins(&map, patch, 10_000, 6).unwrap();
    let rate = a
        .iter()
        .filter(|s| gt.is_set(s.center[0], s.center[1], s.center[2]))
        .count() as f64
        / a.len() as f64;
    outcome(
        (rate - 0.94).abs() <= 0.02 && a == b,
        format!("foreground center rate {rate:.4}, same seed reproducible: {}", a == b),
    )
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn sweep_corpus() -> Outcome {
    let mut spaces = 0;
    let mut checked = 0;
    let mut problems = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".sss") && !p.to_string_lossy().ends_with(".best.sss"))
        .collect();
    paths.sort();
    for path in &paths {
        let table = path.file_stem().unwrap().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(path).unwrap();
        let space = match parse_space(&text) {
            Ok(s) => s,
            Err(e) => {
                problems.push(format!("{table}: {e}"));
                continue;
            }
        };
        spaces += 1;
        let rendered = render_space(&space);
        match parse_space(&rendered) {
            Ok(back) if back == space && render_space(&back) == rendered => {}
            _ => problems.push(format!("{table}: render/parse not stable")),
        }
        let best_text = std::fs::read_to_string(path.with_extension("best.sss")).unwrap();
        let best = match ConfigAssignment::parse(&best_text) {
            Ok(b) => b,
            Err(e) => {
                problems.push(format!("{table}.best: {e}"));
                continue;
            }
        };
        if ConfigAssignment::parse(&render_config(&best)).ok().as_ref() != Some(&best) {
            problems.push(format!("{table}.best: render/parse not stable"));
        }
        for (name, value) in &best.values {
            if *value == SpaceExpr::NotSelected {
                continue;
            }
            checked += 1;
            match space.get(name) {
                None => problems.push(format!("{table}: `{name}` missing from space")),
                Some(entry) if !contains(&entry.expr, value) => {
                    problems.push(format!("{table}: `{name}` best {value} not in {}", entry.expr))
                }
                Some(_) => {}
            }
        }
    }
    let stepped = cardinality(&parse_expr("[10,300,10]").unwrap());
    if stepped != Cardinality::Finite(30) {
        problems.push(format!("[10,300,10] cardinality {stepped:?}"));
    }
    let detail = format!(
        "{spaces}/{} spaces parsed, {checked} best values checked{}",
        paths.len(),
        if problems.is_empty() {
            String::new()
        } else {
            format!("; {}", problems.join("; "))
        }
    );
    outcome(problems.is_empty() && paths.len() == 12, detail)
}

fn disc(radius: i64, n: usize) -> BinaryMask {
    let c = n as i64 / 2;
    BinaryMask::from_fn([n, n, 1], |x, y, _| {
        let (dx, dy) = (x as i64 - c, y as i64 - c);
        dx * dx + dy * dy <= radius * radius
    })
    .unwrap()
}

fn perturbation() -> Outcome {
    let gt = disc(20, 64);
    let rep = gt_perturbation_check(&gt, 1, Footprint::Slice).unwrap();
    let set = |x: i64, y: i64| x >= 0 && y >= 0 && x < 64 && y < 64 && gt.is_set(x as usize, y as usize, 0);
    let (mut area, mut eroded, mut dilated) = (0u64, 0u64, 0u64);
    for y in 0..64 {
        for x in 0..64 {
            let hood = (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| set(x + dx, y + dy)));
            let hood: Vec<bool> = hood.collect();
            area += u64::from(set(x, y));
            eroded += u64::from(hood.iter().all(|&b| b));
            dilated += u64::from(hood.iter().any(|&b| b));
        }
    }
    let expect = (area as f64 / dilated as f64, eroded as f64 / area as f64);
    let pass = rep.iou_dilated == Some(expect.0) && rep.iou_eroded == Some(expect.1);
    outcome(
        pass,
        format!("disc r=20: dilated {:.6}, eroded {:.6}", expect.0, expect.1),
    )
}

fn lucchi_perturbation() -> Option<Outcome> {
    let path = std::env::var_os("EMSEG_LUCCHI_GT")?;
    let gt = match load_volume(&path) {
        Ok(AnyVolume::U8(v)) => BinaryMask::from_nonzero(&v),
        Ok(_) => return Some(outcome(false, "expected a u8 mask")),
        Err(e) => return Some(outcome(false, format!("cannot load: {e}"))),
    };
    let mut lines = Vec::new();
    let mut any = false;
    for fp in [Footprint::Slice, Footprint::Cube] {
        let r = gt_perturbation_check(&gt, 1, fp).unwrap();
        let (d, e) = (r.iou_dilated.unwrap_or(f64::NAN), r.iou_eroded.unwrap_or(f64::NAN));
        let ok = (d - 0.885).abs() <= 0.005 && (e - 0.904).abs() <= 0.005;
        any |= ok;
        lines.push(format!("{fp:?}: dilated {d:.4}, eroded {e:.4} ({})", if ok { "matches" } else { "off" }));
    }
    Some(outcome(any, lines.join("; ")))
}

fn emvol_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..200 {
        let dims = [
            rng.random_range(1..=24),
            rng.random_range(1..=24),
            rng.random_range(1..=6),
        ];
        let spacing = [rng.random_range(0.5..40.0f32), rng.random_range(0.5..40.0), rng.random_range(0.5..40.0)];
        let path = dir.path().join(format!("{i}.emvol"));
        let bytes = if i % 2 == 0 {
            let v = Volume::from_fn(dims, |_, _, _| rng.random::<u8>()).unwrap().with_spacing(spacing).unwrap();
            save_volume(&v, &path).unwrap();
            encode(&v).unwrap()
        } else {
            let v = random_f32(&mut rng, dims).with_spacing(spacing).unwrap();
            save_volume(&v, &path).unwrap();
            encode(&v).unwrap()
        };
        let on_disk = std::fs::read(&path).unwrap();
        let back = match load_volume(&path).unwrap() {
            AnyVolume::U8(v) => encode(&v).unwrap(),
            AnyVolume::F32(v) => encode(&v).unwrap(),
        };
        if on_disk != bytes || back != bytes {
            return outcome(false, format!("volume {i} {dims:?} changed on round trip"));
        }
    }
    let good = encode(&Volume::<u8>::filled([2, 2, 2], 1).unwrap()).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let truncated = good[..HEADER_LEN + 3].to_vec();
    let mut bad_dtype = good.clone();
    bad_dtype[6] = 9;
    let names: Vec<&str> = [bad_magic, truncated, bad_dtype]
        .iter()
        .map(|b| decode(b).err().map_or("accepted", |e| e.name()))
        .collect();
    outcome(
        names == ["BadMagic", "TruncatedFile", "UnknownDtype"],
        format!("200 volumes byte-identical; corrupted headers -> {}", names.join(", ")),
    )
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("1 IoU oracle equivalence", Duration::from_secs(5), iou_oracle),
        ("2 partition of unity", Duration::from_secs(1), partition_of_unity),
        ("3 reconstruction identities", Duration::from_secs(30), reconstruction_identities),
        ("4 TTA group", Duration::from_secs(10), tta_group),
        ("5 median z-filter", Duration::from_secs(5), median_z),
        ("6 probability-map sampling", Duration::from_secs(5), probability_sampling),
        ("7 sweep DSL corpus", Duration::from_secs(2), sweep_corpus),
        ("8 GT perturbation", Duration::from_secs(5), perturbation),
        ("9 EMVOL round trip", Duration::from_secs(5), emvol_fuzz),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        failed += usize::from(!pass);
        println!(
            "{} criterion {name}: {} [{:.3}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    match lucchi_perturbation() {
        None => println!("SKIP criterion 8 (optional) Lucchi GT perturbation: EMSEG_LUCCHI_GT not set"),
        Some(o) => {
            failed += usize::from(!o.pass);
            println!(
                "{} criterion 8 (optional) Lucchi GT perturbation: {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            );
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
