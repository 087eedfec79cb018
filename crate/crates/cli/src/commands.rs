//! Implementations of the non-synth subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{echo, parse_floats, parse_white_point, write_json_with_config};
use crate::CliError;
use shadecal::annotation::{Annotation, Rect};
use shadecal::chart::CalibrationProfile;
use shadecal::dataset::{self, Region, RegionMeta, Role, SampleRow};
use shadecal::model::{self, Hyperparams, Model, ModelKind};
use shadecal::{apply_profile, build_profile, DeviceRgb};

/// Sidecar written next to a mask PNG: the mean device RGB over the mask,
/// ready to be fed to `calibrate --skin-centroid-from`.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub pixel_count: usize,
    pub mean_rgb: [f64; 3],
}

pub fn mask(image: PathBuf, out: PathBuf) -> Result<(), CliError> {
    let config = echo(
        "mask",
        json!({ "image": image.display().to_string(), "out": out.display().to_string() }),
    );
    let img = shadecal::load_rgb8(&image)?;
    let mask = shadecal::skin_mask(&img)?;
    let mean = shadecal::mask_mean_rgb(&img, &mask)?;
    mask.write_png(&out)?;
    let sidecar = MaskSidecar {
        image: image.display().to_string(),
        width: mask.width(),
        height: mask.height(),
        pixel_count: mask.pixel_count(),
        mean_rgb: [mean.r, mean.g, mean.b],
    };
    let sidecar_path = sidecar_path(&out);
    write_json_with_config(&sidecar_path, &sidecar, &config)?;
    println!(
        "mask: {} of {} pixels are skin; mean RGB ({:.2}, {:.2}, {:.2})",
        mask.pixel_count(),
        (mask.width() * mask.height()),
        mean.r,
        mean.g,
        mean.b
    );
    Ok(())
}

fn sidecar_path(mask_png: &Path) -> PathBuf {
    let mut s = mask_png.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    image: PathBuf,
    annotation: PathBuf,
    references: PathBuf,
    out: PathBuf,
    skin_centroid_from: Option<PathBuf>,
    skin_centroid: Option<String>,
    white_point: &str,
) -> Result<(), CliError> {
    let white = parse_white_point(white_point)?;
    let centroid = match (&skin_centroid_from, &skin_centroid) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            let sidecar: MaskSidecar = serde_json::from_str(&text)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            Some(DeviceRgb::new(sidecar.mean_rgb[0], sidecar.mean_rgb[1], sidecar.mean_rgb[2]))
        }
        (None, Some(triple)) => {
            let v = parse_floats(triple, 3, "skin centroid")?;
            Some(DeviceRgb::new(v[0], v[1], v[2]))
        }
        (None, None) => None,
    };
    let config = echo(
        "calibrate",
        json!({
            "image": image.display().to_string(),
            "annotation": annotation.display().to_string(),
            "references": references.display().to_string(),
            "out": out.display().to_string(),
            "skin_centroid": centroid.map(|c| [c.r, c.g, c.b]),
            "white_point": [white.xn, white.yn, white.zn],
        }),
    );

    let img = shadecal::load_rgb8(&image)?;
    let ann = Annotation::load(&annotation)?;
    let refs = shadecal::annotation::load_references(&references)?;
    let ref_map: std::collections::BTreeMap<u32, shadecal::Xyz> = refs.into_iter().collect();

    let mut observations = Vec::new();
    for patch in &ann.patches {
        let id = patch.patch_id.ok_or_else(|| {
            CliError::input("chart annotation entry without a patch_id".to_string())
        })?;
        let reference_xyz = *ref_map
            .get(&id)
            .ok_or_else(|| CliError::input(format!("patch {id} has no reference table row")))?;
        let mean_rgb = shadecal::annotation::rect_mean_rgb(&img, patch.rect)?;
        observations.push(shadecal::PatchObservation { patch_id: id, mean_rgb, reference_xyz });
    }

    let profile = build_profile(
        &observations,
        &ann.gray_ids(),
        centroid,
        white,
        Some(image.display().to_string()),
    )?;
    write_json_with_config(&out, &profile, &config)?;

    let eval = profile.diagnostics.as_ref().expect("build_profile fills diagnostics");
    let report_path = out.with_extension("report.json");
    write_json_with_config(&report_path, eval, &config)?;

    println!("patch ΔE76:");
    for (id, de) in &eval.per_patch {
        println!("  {id:>3}  {de:.4}");
    }
    println!("mean ΔE76 = {:.4} over {} patches", eval.mean_delta_e, eval.per_patch.len());
    if eval.outlier {
        return Err(CliError::quality_gate(format!(
            "calibration outlier: mean ΔE76 {:.3} exceeds 3",
            eval.mean_delta_e
        )));
    }
    Ok(())
}

pub struct ExtractArgs {
    pub image: PathBuf,
    pub profile: PathBuf,
    pub out: PathBuf,
    pub role: String,
    pub subject: Option<String>,
    pub shade: Option<String>,
    pub source_id: Option<String>,
    pub rect: Option<String>,
    pub annotation: Option<PathBuf>,
    pub mask: bool,
    pub white_point: String,
}

pub fn extract(args: ExtractArgs) -> Result<(), CliError> {
    let white = parse_white_point(&args.white_point)?;
    let role: Role = args.role.parse().map_err(CliError::input)?;
    let stem = args
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let source_id = args.source_id.clone().unwrap_or_else(|| stem.clone());
    // File-name convention fallback: subject_<id>_<role...>.png
    let subject = args.subject.clone().or_else(|| {
        let parts: Vec<&str> = stem.split('_').collect();
        (parts.len() >= 2 && parts[0] == "subject").then(|| parts[1].to_string())
    });

    let config = echo(
        "extract",
        json!({
            "image": args.image.display().to_string(),
            "profile": args.profile.display().to_string(),
            "out": args.out.display().to_string(),
            "role": role.to_string(),
            "subject": subject,
            "shade": args.shade,
            "source_id": source_id,
            "rect": args.rect,
            "annotation": args.annotation.as_ref().map(|p| p.display().to_string()),
            "mask": args.mask,
            "white_point": [white.xn, white.yn, white.zn],
        }),
    );

    let profile = CalibrationProfile::load(&args.profile)?;
    let img = shadecal::load_rgb8(&args.image)?;
    let xyz = apply_profile(&img, &profile)?;
    let chart_mean_de = profile.diagnostics.as_ref().map(|d| d.mean_delta_e);

    let mut regions = Vec::new();
    if args.mask {
        let mask = shadecal::skin_mask(&img)?;
        if mask.pixel_count() == 0 {
            return Err(CliError::domain(format!("no skin detected in {}", args.image.display())));
        }
        regions.push(dataset::extract_region_color(
            &xyz,
            Region::Mask(&mask),
            white,
            role,
            RegionMeta {
                source_id: source_id.clone(),
                subject_id: subject.clone(),
                shade: args.shade.clone(),
                chart_mean_de,
            },
        )?);
    } else if let Some(rect_arg) = &args.rect {
        let v = parse_floats(rect_arg, 4, "rect")?;
        if v.iter().any(|&x| x < 0.0 || x.fract() != 0.0) {
            return Err(CliError::input(format!("rect '{rect_arg}' must be nonnegative integers")));
        }
        let rect = Rect { x: v[0] as u32, y: v[1] as u32, w: v[2] as u32, h: v[3] as u32 };
        regions.push(dataset::extract_region_color(
            &xyz,
            Region::Rect(rect),
            white,
            role,
            RegionMeta {
                source_id: source_id.clone(),
                subject_id: subject.clone(),
                shade: args.shade.clone(),
                chart_mean_de,
            },
        )?);
    } else if let Some(ann_path) = &args.annotation {
        let ann = Annotation::load(ann_path)?;
        for entry in &ann.patches {
            let shade = entry.shade.clone().or_else(|| args.shade.clone());
            regions.push(dataset::extract_region_color(
                &xyz,
                Region::Rect(entry.rect),
                white,
                role,
                RegionMeta {
                    source_id: source_id.clone(),
                    subject_id: subject.clone(),
                    shade,
                    chart_mean_de,
                },
            )?);
        }
    } else {
        return Err(CliError::input("one of --rect, --annotation, or --mask is required"));
    }

    let added = dataset::append_regions(&args.out, &regions)?;
    let config_path = args.out.with_extension("config.json");
    write_json_with_config(&config_path, &json!({}), &config)?;
    println!("extracted {} region(s), appended {added} new", regions.len());
    Ok(())
}

fn load_rows(dataset_path: Option<PathBuf>, regions_path: Option<PathBuf>) -> Result<Vec<SampleRow>, CliError> {
    match (dataset_path, regions_path) {
        (Some(p), None) => Ok(dataset::load_dataset(&p)?),
        (None, Some(p)) => {
            let regions = dataset::load_regions(&p)?;
            Ok(dataset::assemble_dataset(&regions)?)
        }
        _ => Err(CliError::input("exactly one of --dataset or --regions is required")),
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, CliError> {
    match s {
        "linear" => Ok(ModelKind::Linear),
        "svr" => Ok(ModelKind::Svr),
        "mean" => Ok(ModelKind::MeanBaseline),
        other => Err(CliError::input(format!("unknown model kind '{other}'"))),
    }
}

pub fn train(
    dataset_path: Option<PathBuf>,
    regions_path: Option<PathBuf>,
    kind: &str,
    svr_c: f64,
    svr_eps: f64,
    out: PathBuf,
) -> Result<(), CliError> {
    let kind = parse_kind(kind)?;
    if kind == ModelKind::MeanBaseline {
        return Err(CliError::input("the mean baseline exists only for loocv"));
    }
    let config = echo(
        "train",
        json!({
            "model": kind,
            "svr_c": svr_c,
            "svr_eps": svr_eps,
            "out": out.display().to_string(),
        }),
    );
    let rows = load_rows(dataset_path, regions_path)?;
    let model = match kind {
        ModelKind::Linear => Model::Linear(model::fit_linear(&rows)?),
        ModelKind::Svr => {
            let m = model::fit_svr(&rows, svr_c, svr_eps)?;
            if m.degenerate {
                eprintln!("warning: all inputs identical; trained a constant median predictor");
            }
            Model::Svr(m)
        }
        ModelKind::MeanBaseline => unreachable!(),
    };
    write_json_with_config(&out, &model, &config)?;
    println!("trained {kind:?} model on {} rows -> {}", rows.len(), out.display());
    Ok(())
}

pub fn loocv(
    dataset_path: Option<PathBuf>,
    regions_path: Option<PathBuf>,
    kind: &str,
    svr_c: f64,
    svr_eps: f64,
    out: PathBuf,
) -> Result<(), CliError> {
    let kind = parse_kind(kind)?;
    let config = echo(
        "loocv",
        json!({
            "model": kind,
            "svr_c": svr_c,
            "svr_eps": svr_eps,
            "out": out.display().to_string(),
        }),
    );
    let rows = load_rows(dataset_path, regions_path)?;
    if rows.len() < 3 {
        return Err(CliError::domain(format!(
            "LOOCV needs at least 3 rows, dataset has {}",
            rows.len()
        )));
    }
    let report = model::loocv(&rows, kind, Hyperparams { svr_c, svr_eps })?;
    write_json_with_config(&out, &report, &config)?;

    // Histogram-ready residual table.
    let residuals_path = out.with_extension("residuals.csv");
    let mut csv = String::from(
        "subject_id,shade,pred_L,pred_a,pred_b,out_L,out_a,out_b,res_L,res_a,res_b,delta_e\n",
    );
    for f in &report.per_fold {
        let res: Vec<f64> = (0..3).map(|d| f.predicted[d] - f.target[d]).collect();
        let de = (res[0] * res[0] + res[1] * res[1] + res[2] * res[2]).sqrt();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            f.subject_id,
            f.shade,
            f.predicted[0],
            f.predicted[1],
            f.predicted[2],
            f.target[0],
            f.target[1],
            f.target[2],
            res[0],
            res[1],
            res[2],
            de
        ));
    }
    shadecal::write_atomic(&residuals_path, csv.as_bytes())?;

    println!("LOOCV {:?} on {} rows", report.model, report.n);
    println!("  R^2  = {:.6}  (per dim: {:.6} {:.6} {:.6})",
        report.r2, report.r2_per_dim[0], report.r2_per_dim[1], report.r2_per_dim[2]);
    println!("  MSE  = {:.6}", report.mse);
    println!("  MAE  = {:.6}", report.mae);
    Ok(())
}

pub fn predict(model_path: PathBuf, input: &str) -> Result<(), CliError> {
    echo(
        "predict",
        json!({ "model": model_path.display().to_string(), "input": input }),
    );
    let values = parse_floats(input, 6, "input")?;
    let model = Model::load(&model_path)?;
    let x: [f64; 6] = values.as_slice().try_into().expect("length checked");
    let lab = model.predict(&x);
    println!("{} {} {}", lab.l, lab.a, lab.b);
    Ok(())
}
