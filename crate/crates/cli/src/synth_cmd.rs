//! Synthetic bundle generation: `synth chart`, `synth dataset`, `synth pipeline`.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{echo, parse_floats, write_json_with_config};
use crate::CliError;
use shadecal::annotation::{Annotation, PatchRect, Rect};
use shadecal::color::{lab_to_xyz, ChannelCurve, Lab, D50};
use shadecal::synth::{
    self, default_chart_references, default_shade_codes, synth_chart, synth_prediction_dataset,
    ForwardCameraModel, MixingModel, SynthChart, RNG_ALGORITHM,
};

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

fn emit_chart_bundle(chart: &SynthChart, outdir: &Path) -> Result<(), CliError> {
    shadecal::save_rgb8(&outdir.join("chart.png"), &chart.image)?;
    chart.annotation.save(&outdir.join("chart_annotation.json"))?;
    shadecal::annotation::save_references(&outdir.join("chart_references.csv"), &chart.references)?;
    Ok(())
}

pub fn chart(
    seed: u64,
    outdir: PathBuf,
    noise_sigma: f64,
    gamma: Option<&str>,
) -> Result<(), CliError> {
    if noise_sigma < 0.0 {
        return Err(CliError::input("noise sigma must be nonnegative"));
    }
    let mut cam = ForwardCameraModel::seeded(seed, noise_sigma);
    if let Some(spec) = gamma {
        let values = if spec.contains(',') {
            parse_floats(spec, 3, "gamma")?
        } else {
            let v = parse_floats(spec, 1, "gamma")?;
            vec![v[0]; 3]
        };
        // ChannelCurve::new enforces the valid gamma range.
        cam.encode.r = ChannelCurve::new(cam.encode.r.gain, values[0], cam.encode.r.offset)?;
        cam.encode.g = ChannelCurve::new(cam.encode.g.gain, values[1], cam.encode.g.offset)?;
        cam.encode.b = ChannelCurve::new(cam.encode.b.gain, values[2], cam.encode.b.offset)?;
    }
    cam.validate()?;
    let config = echo(
        "synth-chart",
        json!({
            "seed": seed,
            "outdir": outdir.display().to_string(),
            "noise_sigma": noise_sigma,
            "gamma": gamma,
            "rng": RNG_ALGORITHM,
        }),
    );

    let chart = synth_chart(&default_chart_references(), &cam)?;
    ensure_dir(&outdir)?;
    emit_chart_bundle(&chart, &outdir)?;
    write_json_with_config(&outdir.join("camera.json"), &cam, &config)?;
    write_json_with_config(&outdir.join("config.json"), &json!({}), &config)?;
    println!(
        "chart bundle in {} ({} patches, {} out of gamut)",
        outdir.display(),
        chart.observations.len(),
        chart.out_of_gamut.len()
    );
    Ok(())
}

/// Ground truth emitted next to a synthetic dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetTruth {
    pub mixing: MixingModel,
    pub subject_skin: Vec<(String, Lab)>,
    pub shade_labs: Vec<(String, Lab)>,
    pub rng: String,
}

pub fn dataset(
    seed: u64,
    outdir: PathBuf,
    subjects: usize,
    rows: usize,
    noise_sigma: f64,
) -> Result<(), CliError> {
    if noise_sigma < 0.0 {
        return Err(CliError::input("noise sigma must be nonnegative"));
    }
    let config = echo(
        "synth-dataset",
        json!({
            "seed": seed,
            "outdir": outdir.display().to_string(),
            "subjects": subjects,
            "rows": rows,
            "noise_sigma": noise_sigma,
            "rng": RNG_ALGORITHM,
        }),
    );
    let mixing = MixingModel::seeded(seed, noise_sigma);
    let ds = synth_prediction_dataset(subjects, &default_shade_codes(), rows, &mixing, seed)?;
    ensure_dir(&outdir)?;
    shadecal::dataset::save_dataset(&outdir.join("dataset.csv"), &ds.rows)?;
    let truth = DatasetTruth {
        mixing: ds.mixing.clone(),
        subject_skin: ds.subject_skin.clone(),
        shade_labs: ds.shade_labs.clone(),
        rng: RNG_ALGORITHM.into(),
    };
    write_json_with_config(&outdir.join("truth.json"), &truth, &config)?;
    write_json_with_config(&outdir.join("config.json"), &json!({}), &config)?;
    println!("dataset bundle in {} ({} rows)", outdir.display(), ds.rows.len());
    Ok(())
}

/// One extraction job of a pipeline bundle.
#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestSample {
    pub image: String,
    pub role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shade: Option<String>,
    /// x, y, w, h of the region whose mean carries the sample color.
    pub rect: [u32; 4],
}

/// Index of a full synthetic pipeline bundle.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub chart_image: String,
    pub chart_annotation: String,
    pub chart_references: String,
    pub swatches_image: String,
    pub swatches_annotation: String,
    pub samples: Vec<ManifestSample>,
}

const FLAT_SIZE: u32 = 32;
const SWATCH_SIZE: u32 = 24;
const SWATCH_GAP: u32 = 4;
const SWATCH_COLS: u32 = 6;

pub fn pipeline(
    seed: u64,
    outdir: PathBuf,
    subjects: usize,
    rows: usize,
    noise_sigma: f64,
) -> Result<(), CliError> {
    if noise_sigma < 0.0 {
        return Err(CliError::input("noise sigma must be nonnegative"));
    }
    let config = echo(
        "synth-pipeline",
        json!({
            "seed": seed,
            "outdir": outdir.display().to_string(),
            "subjects": subjects,
            "rows": rows,
            "noise_sigma": noise_sigma,
            "rng": RNG_ALGORITHM,
        }),
    );

    // The camera renders noiselessly; the mixing noise on the targets is the
    // only stochastic part of the prediction data.
    let cam = ForwardCameraModel::seeded(seed, 0.0);
    let mixing = MixingModel::seeded(seed, noise_sigma);
    let ds = synth_prediction_dataset(subjects, &default_shade_codes(), rows, &mixing, seed)?;

    ensure_dir(&outdir)?;
    let images_dir = outdir.join("images");
    ensure_dir(&images_dir)?;

    let chart = synth_chart(&default_chart_references(), &cam)?;
    emit_chart_bundle(&chart, &outdir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF1A7_1335);
    let mut samples = Vec::new();
    for (subject, skin) in &ds.subject_skin {
        let (img, rect, _) =
            synth::render_flat_image(lab_to_xyz(*skin, D50), &cam, &mut rng, FLAT_SIZE);
        let name = format!("images/subject_{subject}_bare.png");
        shadecal::save_rgb8(&outdir.join(&name), &img)?;
        samples.push(ManifestSample {
            image: name,
            role: "bare_skin".into(),
            subject: Some(subject.clone()),
            shade: None,
            rect: [rect.x, rect.y, rect.w, rect.h],
        });
    }
    for row in &ds.rows {
        let lab = Lab::new(row.target[0], row.target[1], row.target[2]);
        let (img, rect, _) = synth::render_flat_image(lab_to_xyz(lab, D50), &cam, &mut rng, FLAT_SIZE);
        let name = format!("images/subject_{}_fnd_{}.png", row.subject_id, row.shade);
        shadecal::save_rgb8(&outdir.join(&name), &img)?;
        samples.push(ManifestSample {
            image: name,
            role: "skin_with_foundation".into(),
            subject: Some(row.subject_id.clone()),
            shade: Some(row.shade.clone()),
            rect: [rect.x, rect.y, rect.w, rect.h],
        });
    }

    // One shared swatches image, one patch per shade used by the dataset.
    let n_swatches = ds.shade_labs.len() as u32;
    let sw_rows = n_swatches.div_ceil(SWATCH_COLS);
    let width = SWATCH_GAP + SWATCH_COLS * (SWATCH_SIZE + SWATCH_GAP);
    let height = SWATCH_GAP + sw_rows * (SWATCH_SIZE + SWATCH_GAP);
    let mut swatches = image::RgbImage::from_pixel(width, height, image::Rgb([255, 255, 255]));
    let mut entries = Vec::new();
    for (pos, (code, lab)) in ds.shade_labs.iter().enumerate() {
        let rect = Rect {
            x: SWATCH_GAP + (pos as u32 % SWATCH_COLS) * (SWATCH_SIZE + SWATCH_GAP),
            y: SWATCH_GAP + (pos as u32 / SWATCH_COLS) * (SWATCH_SIZE + SWATCH_GAP),
            w: SWATCH_SIZE,
            h: SWATCH_SIZE,
        };
        let (dev, _) = synth::render_patch(lab_to_xyz(*lab, D50), &cam, &mut rng);
        let inner = rect.center_half();
        synth::fill_patch(&mut swatches, rect, inner, dev);
        // The annotation rectangle is the inner region, which region
        // extraction averages as-is.
        entries.push(PatchRect {
            patch_id: None,
            shade: Some(code.clone()),
            role: Some("foundation_swatch".into()),
            rect: inner,
        });
    }
    shadecal::save_rgb8(&outdir.join("swatches.png"), &swatches)?;
    let swatch_ann = Annotation {
        image: "swatches.png".into(),
        patches: entries,
        gray_patch_ids: None,
    };
    swatch_ann.save(&outdir.join("swatches_annotation.json"))?;

    let manifest = Manifest {
        chart_image: "chart.png".into(),
        chart_annotation: "chart_annotation.json".into(),
        chart_references: "chart_references.csv".into(),
        swatches_image: "swatches.png".into(),
        swatches_annotation: "swatches_annotation.json".into(),
        samples,
    };
    write_json_with_config(&outdir.join("manifest.json"), &manifest, &config)?;

    #[derive(Serialize)]
    struct PipelineTruth<'a> {
        camera: &'a ForwardCameraModel,
        mixing: &'a MixingModel,
        subject_skin: &'a [(String, Lab)],
        shade_labs: &'a [(String, Lab)],
        rng: &'static str,
    }
    write_json_with_config(
        &outdir.join("truth.json"),
        &PipelineTruth {
            camera: &cam,
            mixing: &ds.mixing,
            subject_skin: &ds.subject_skin,
            shade_labs: &ds.shade_labs,
            rng: RNG_ALGORITHM,
        },
        &config,
    )?;
    write_json_with_config(&outdir.join("config.json"), &json!({}), &config)?;
    println!(
        "pipeline bundle in {}: {} subjects, {} samples, {} swatches",
        outdir.display(),
        ds.subject_skin.len(),
        ds.rows.len(),
        ds.shade_labs.len()
    );
    Ok(())
}
