use std::path::{Path, PathBuf};
use std::time::Duration;

use emseg::augment::enumerate_tta;
use emseg::emvol::{load_volume, save_volume, write_atomic};
use emseg::metrics::{evaluate, gt_perturbation_check, EvalUnit, IoUReport, Prediction, ReconstructionMode};
use emseg::patch::{extract as cut, extract_one, reconstruct_blend, reconstruct_mosaic, reconstruct_overlap_mean};
use emseg::postproc::{median_z_filter, median_z_labels, tta_ensemble, MedianOrder, SubprocessPredictor};
use emseg::sampling::{build_probability_map, foreground_fraction, sample_patch_origins};
use emseg::sweepdsl::{enumerate_grid, parse_space, render_config, sample, validate_assignment, ConfigAssignment, SearchSpace};
use emseg::{plan_grid, AnyVolume, BinaryMask, Footprint, Overlap, PatchError, PatchLayout, PatchShape, Volume, Voxel};
use serde_json::json;

use crate::failure::Failure;
use crate::{EvalMode, FootprintArg, Format, OrderArg, OverlapArg, ReconMode, Unit};

fn load(path: &Path) -> Result<AnyVolume, Failure> {
    load_volume(path).map_err(|e| Failure::from(e).at(path))
}

/// Probabilities as stored, or 0/1 for label volumes.
fn load_prob(path: &Path) -> Result<Volume<f32>, Failure> {
    Ok(match load(path)? {
        AnyVolume::F32(v) => v,
        AnyVolume::U8(v) => v.map(|p| f32::from(u8::from(p != 0))),
    })
}

/// Label volume; any nonzero voxel is foreground.
fn load_mask(path: &Path) -> Result<BinaryMask, Failure> {
    match load(path)? {
        AnyVolume::U8(v) => Ok(BinaryMask::from_nonzero(&v)),
        AnyVolume::F32(_) => Err(Failure::usage("WrongDtype", "labels must be a u8 volume").at(path)),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes()).map_err(|e| Failure::io(path, e))
}

fn save<T: Voxel>(v: &Volume<T>, path: &Path) -> Result<(), Failure> {
    save_volume(v, path).map_err(|e| Failure::from(e).at(path))
}

pub fn patch_file_name(origin: [usize; 3]) -> String {
    format!("{}_{}_{}.emvol", origin[0], origin[1], origin[2])
}

fn load_layout(dir: &Path, layout: Option<&Path>) -> Result<PatchLayout, Failure> {
    let path = layout.map_or_else(|| dir.join("layout.json"), Path::to_path_buf);
    PatchLayout::from_json(&read_text(&path)?).map_err(|e| Failure::from(e).at(&path))
}

fn load_patches(dir: &Path, layout: &PatchLayout) -> Result<Vec<AnyVolume>, Failure> {
    layout.origins.iter().map(|&o| load(&dir.join(patch_file_name(o)))).collect()
}

fn as_f32(patches: Vec<AnyVolume>) -> Vec<Volume<f32>> {
    patches
        .into_iter()
        .map(|p| match p {
            AnyVolume::F32(v) => v,
            AnyVolume::U8(v) => v.map(f32::from),
        })
        .collect()
}

fn report_text(r: &IoUReport) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
    format!(
        "mode {:?}, threshold {}, unit {:?}, {} units\nTP {} FP {} FN {} TN {}\nforeground IoU {}\nbackground IoU {}\noverall IoU {}\n",
        r.mode,
        r.threshold,
        r.unit,
        r.units.len(),
        r.counts.tp,
        r.counts.fp,
        r.counts.fn_,
        r.counts.tn,
        f(r.iou_fg),
        f(r.iou_bg),
        f(r.iou_overall)
    )
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    pred: &Path,
    gt: &Path,
    threshold: f64,
    mode: EvalMode,
    layout: Option<&Path>,
    unit: Unit,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mode = match mode {
        EvalMode::PerPatch => ReconstructionMode::PerPatch,
        EvalMode::MosaicImage => ReconstructionMode::MosaicImage,
        EvalMode::Overlap50Image => ReconstructionMode::Overlap50Image,
        EvalMode::FullImage => ReconstructionMode::FullImage,
    };
    let unit = match unit {
        Unit::Slice => EvalUnit::Slice,
        Unit::Volume => EvalUnit::Volume,
    };
    let gt = load_mask(gt)?;
    let report = if pred.is_dir() {
        let layout = load_layout(pred, layout)?;
        let patches = as_f32(load_patches(pred, &layout)?);
        evaluate(
            Prediction::Patches {
                patches: &patches,
                layout: &layout,
            },
            &gt,
            threshold,
            mode,
            unit,
        )?
    } else {
        let p = load_prob(pred)?;
        evaluate(Prediction::Full(&p), &gt, threshold, mode, unit)?
    };
    let text = match format {
        Format::Json => report.to_json() + "\n",
        Format::Text => report_text(&report),
    };
    print!("{text}");
    if let Some(out) = out {
        write_text(out, &text)?;
    }
    Ok(())
}

pub fn reconstruct(
    dir: &Path,
    layout: Option<&Path>,
    mode: ReconMode,
    out: &Path,
    compare: Option<&Path>,
) -> Result<(), Failure> {
    let layout = load_layout(dir, layout)?;
    let patches = load_patches(dir, &layout)?;
    let all_u8 = patches.iter().all(|p| matches!(p, AnyVolume::U8(_)));
    let result: AnyVolume = match mode {
        ReconMode::Mosaic if all_u8 => {
            let p: Vec<Volume<u8>> = patches
                .into_iter()
                .filter_map(|p| match p {
                    AnyVolume::U8(v) => Some(v),
                    AnyVolume::F32(_) => None,
                })
                .collect();
            reconstruct_mosaic(&p, &layout)?.into()
        }
        ReconMode::Mosaic => reconstruct_mosaic(&as_f32(patches), &layout)?.into(),
        ReconMode::Overlap50 => reconstruct_overlap_mean(&as_f32(patches), &layout)?.into(),
        ReconMode::Blend => reconstruct_blend(&as_f32(patches), &layout)?.into(),
    };
    match &result {
        AnyVolume::U8(v) => save(v, out)?,
        AnyVolume::F32(v) => save(v, out)?,
    }
    if let Some(reference) = compare {
        let r = load_prob_raw(reference)?;
        let got = match result {
            AnyVolume::U8(v) => v.map(f32::from),
            AnyVolume::F32(v) => v,
        };
        got.ensure_same_dims(&r)?;
        let diff = got
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| f64::from((a - b).abs()))
            .fold(0.0, f64::max);
        println!("{}", json!({ "max_abs_diff": diff }));
    }
    Ok(())
}

/// Values as stored, widened to f32.
fn load_prob_raw(path: &Path) -> Result<Volume<f32>, Failure> {
    Ok(match load(path)? {
        AnyVolume::F32(v) => v,
        AnyVolume::U8(v) => v.map(f32::from),
    })
}

pub fn tta(input: &Path, cmd: &str, dim: u8, out: &Path, timeout: u64) -> Result<(), Failure> {
    let branches = enumerate_tta(dim).map_or(0, |g| g.len());
    eprintln!("tta: {branches} branches ({dim}D)");
    let predictor = SubprocessPredictor::new(cmd, Duration::from_secs(timeout));
    let result = match load(input)? {
        AnyVolume::U8(v) => tta_ensemble(&predictor, &v, dim)?,
        AnyVolume::F32(v) => tta_ensemble(&predictor, &v, dim)?,
    };
    save(&result, out)
}

pub fn medianz(input: &Path, window: usize, out: &Path, threshold: f64, order: OrderArg) -> Result<(), Failure> {
    let order = match order {
        OrderArg::BinarizeFirst => MedianOrder::BinarizeFirst,
        OrderArg::FilterFirst => MedianOrder::FilterFirst,
        OrderArg::Probabilities => {
            return match load(input)? {
                AnyVolume::U8(v) => save(&median_z_filter(&v, window)?, out),
                AnyVolume::F32(v) => save(&median_z_filter(&v, window)?, out),
            };
        }
    };
    let labels = median_z_labels(&load_prob(input)?, threshold, window, order)?;
    save(labels.volume(), out)
}

pub fn perturb_gt(gt: &Path, radius: usize, footprint: FootprintArg, format: Format) -> Result<(), Failure> {
    let footprint = match footprint {
        FootprintArg::Slice => Footprint::Slice,
        FootprintArg::Cube => Footprint::Cube,
    };
    let rep = gt_perturbation_check(&load_mask(gt)?, radius, footprint)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes")),
        Format::Text => {
            let f = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
            println!("iou_dilated {}\niou_eroded {}", f(rep.iou_dilated), f(rep.iou_eroded));
        }
    }
    Ok(())
}

pub struct ExtractArgs {
    pub input: PathBuf,
    pub gt: Option<PathBuf>,
    pub patch: String,
    pub overlap: OverlapArg,
    pub discard_fg: Option<f64>,
    pub prob_fg: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Patches of one volume and their names.
struct Cut<T> {
    names: Vec<String>,
    image: Vec<Volume<T>>,
    labels: Option<Vec<Volume<u8>>>,
}

fn write_cut<T: Voxel>(cut: Cut<T>, discard_fg: Option<f64>, dir: &Path) -> Result<(Vec<String>, usize), Failure> {
    if let Some(f) = discard_fg.filter(|f| !(0.0..1.0).contains(f)) {
        return Err(PatchError::InvalidFraction(f).into());
    }
    if cut.labels.is_some() {
        std::fs::create_dir_all(dir.join("gt")).map_err(|e| Failure::io(dir, e))?;
    }
    let mut kept = Vec::new();
    let mut dropped = 0;
    for (i, (name, img)) in cut.names.iter().zip(&cut.image).enumerate() {
        let label = cut.labels.as_ref().map(|l| &l[i]);
        if let (Some(min), Some(l)) = (discard_fg, label) {
            if foreground_fraction(&BinaryMask::from_nonzero(l)) < min {
                dropped += 1;
                continue;
            }
        }
        save(img, &dir.join(name))?;
        if let Some(l) = label {
            save(l, &dir.join("gt").join(name))?;
        }
        kept.push(name.clone());
    }
    Ok((kept, dropped))
}

fn cut_grid<T: Voxel>(v: &Volume<T>, gt: Option<&BinaryMask>, layout: &PatchLayout) -> Result<Cut<T>, Failure> {
    Ok(Cut {
        names: layout.origins.iter().map(|&o| patch_file_name(o)).collect(),
        image: cut(v, layout)?,
        labels: gt.map(|g| cut(g.volume(), layout)).transpose()?,
    })
}

fn cut_at<T: Voxel>(v: &Volume<T>, gt: &BinaryMask, origins: &[[usize; 3]], patch: PatchShape) -> Cut<T> {
    Cut {
        names: origins
            .iter()
            .enumerate()
            .map(|(i, &o)| format!("{i:05}_{}", patch_file_name(o)))
            .collect(),
        image: origins.iter().map(|&o| extract_one(v, o, patch)).collect(),
        labels: Some(origins.iter().map(|&o| extract_one(gt.volume(), o, patch)).collect()),
    }
}

pub fn extract(a: &ExtractArgs) -> Result<(), Failure> {
    let patch: PatchShape = a
        .patch
        .parse()
        .map_err(|_| Failure::usage("InvalidPatchShape", format!("cannot read patch shape `{}`", a.patch)))?;
    let image = load(&a.input)?;
    let gt = a.gt.as_deref().map(load_mask).transpose()?;
    if let Some(g) = &gt {
        if g.dims() != image.dims() {
            return Err(Failure::usage(
                "DimMismatch",
                format!("image dims {:?} vs label dims {:?}", image.dims(), g.dims()),
            ));
        }
    }
    if a.discard_fg.is_some() && gt.is_none() {
        return Err(Failure::usage("MissingLabels", "--discard-fg needs --gt"));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::io(&a.out_dir, e))?;
    let manifest = if let Some(mass) = a.prob_fg {
        let gt = gt
            .as_ref()
            .ok_or_else(|| Failure::usage("MissingLabels", "--prob-fg needs --gt"))?;
        let map = build_probability_map(gt, mass)?;
        let samples = sample_patch_origins(&map, patch, a.n, a.seed)?;
        let origins: Vec<[usize; 3]> = samples.iter().map(|s| s.origin).collect();
        let (kept, dropped) = match &image {
            AnyVolume::U8(v) => write_cut(cut_at(v, gt, &origins, patch), a.discard_fg, &a.out_dir)?,
            AnyVolume::F32(v) => write_cut(cut_at(v, gt, &origins, patch), a.discard_fg, &a.out_dir)?,
        };
        json!({
            "mode": "probability_map",
            "patch": patch,
            "foreground_mass": mass,
            "seed": a.seed,
            "samples": samples,
            "kept": kept,
            "discarded": dropped,
        })
    } else {
        let overlap = match a.overlap {
            OverlapArg::None => Overlap::None,
            OverlapArg::Half => Overlap::Half,
        };
        let layout = plan_grid(image.dims(), patch, overlap)?;
        let (kept, dropped) = match &image {
            AnyVolume::U8(v) => write_cut(cut_grid(v, gt.as_ref(), &layout)?, a.discard_fg, &a.out_dir)?,
            AnyVolume::F32(v) => write_cut(cut_grid(v, gt.as_ref(), &layout)?, a.discard_fg, &a.out_dir)?,
        };
        write_text(&a.out_dir.join("layout.json"), &(layout.to_json() + "\n"))?;
        json!({
            "mode": "grid",
            "patch": patch,
            "kept": kept,
            "discarded": dropped,
        })
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_text(&a.out_dir.join("manifest.json"), &text)?;
    eprintln!(
        "extract: wrote {} patches, discarded {}",
        manifest["kept"].as_array().map_or(0, Vec::len),
        manifest["discarded"]
    );
    Ok(())
}

fn load_space(path: &Path) -> Result<SearchSpace, Failure> {
    parse_space(&read_text(path)?).map_err(|e| Failure::from(e).at(path))
}

/// `grid` holds the largest grid that may be listed.
pub fn sample_config(space: &Path, seed: u64, grid: Option<u128>, format: Format) -> Result<(), Failure> {
    let space = load_space(space)?;
    if let Some(max) = grid {
        let grid = enumerate_grid(&space)?;
        if let Some(n) = space.grid_size().filter(|&n| n > max) {
            return Err(Failure::usage(
                "GridTooLarge",
                format!("grid has {n} points, more than --max-points {max}"),
            ));
        }
        for a in grid {
            println!("{}", a.to_json());
        }
        return Ok(());
    }
    let a = sample(&space, seed);
    match format {
        Format::Json => println!("{}", a.to_json()),
        Format::Text => print!("{}", render_config(&a)),
    }
    Ok(())
}

pub fn check_config(space: &Path, config: &Path) -> Result<(), Failure> {
    let space = load_space(space)?;
    let a = ConfigAssignment::parse(&read_text(config)?).map_err(|e| Failure::from(e).at(config))?;
    validate_assignment(&space, &a)?;
    println!("ok: {} values", a.values.len());
    Ok(())
}
