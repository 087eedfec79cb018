//! Acceptance suite: one test per release criterion, each ending in a
//! single PASS line (a failed assertion is the corresponding FAIL line).
//!
//! Library-level criteria run against `shadecal` directly; pipeline and
//! determinism criteria drive the `shadecal` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shadecal::chart::{build_profile, evaluate_chart};
use shadecal::color::{delta_e76, lab_to_xyz, xyz_to_lab, ChannelCurve, Lab, Xyz, D50};
use shadecal::dataset::SampleRow;
use shadecal::gray::fit_channel_curve;
use shadecal::model::{fit_linear, fit_svr, loocv, EvalReport, Hyperparams, ModelKind};
use shadecal::synth::{default_chart_references, synth_chart, ForwardCameraModel};
use shadecal::{is_skin_pixel, DeviceRgb};

// ────────────────────────────────────────────────────────────────────
// Criterion 1: calibration round trip
// ────────────────────────────────────────────────────────────────────

#[test]
fn criterion_1_calibration_round_trip() {
    for seed in 0..10u64 {
        let start = Instant::now();
        let cam = ForwardCameraModel::seeded(seed, 0.0);
        let chart = synth_chart(&default_chart_references(), &cam).unwrap();
        let profile =
            build_profile(&chart.observations, &chart.annotation.gray_ids(), None, D50, None)
                .unwrap();
        let eval = evaluate_chart(&profile, &chart.observations, D50).unwrap();
        assert!(
            eval.mean_delta_e <= 0.1,
            "seed {seed}: mean ΔE76 {} exceeds 0.1",
            eval.mean_delta_e
        );
        let under_one = eval.per_patch.iter().filter(|&&(_, de)| de < 1.0).count();
        assert!(under_one >= 34, "seed {seed}: only {under_one}/35 patches under ΔE 1");
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() <= 5.0, "seed {seed}: chart took {elapsed:?}");
    }
    println!("PASS criterion 1: calibration round trip, 10 cameras, mean ΔE76 ≤ 0.1, ≥34/35 patches < 1, ≤5 s each");
}

// ────────────────────────────────────────────────────────────────────
// Criterion 2: gray-balance recovery
// ────────────────────────────────────────────────────────────────────

#[test]
fn criterion_2_gray_balance_recovery() {
    // Noiseless 12-level neutral ramps: parameters back within 1% relative.
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = ChannelCurve {
            gain: rng.random_range(96.0..120.0),
            gamma: rng.random_range(1.8..2.4),
            offset: rng.random_range(0.5..2.0),
        };
        let pairs: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let y = 3.0 + k as f64 * (95.0 - 3.0) / 11.0;
                (truth.encode(y).unwrap(), y)
            })
            .collect();
        let fit = fit_channel_curve(&pairs).unwrap();
        assert!((fit.gain - truth.gain).abs() / truth.gain < 0.01, "seed {seed} gain");
        assert!((fit.gamma - truth.gamma).abs() / truth.gamma < 0.01, "seed {seed} gamma");
        assert!((fit.offset - truth.offset).abs() / truth.offset < 0.01, "seed {seed} offset");
    }

    // Noise of one device count: mean chart ΔE76 over 20 seeds stays ≤ 1.5.
    let mut total = 0.0;
    for seed in 0..20u64 {
        let cam = ForwardCameraModel::seeded(seed, 1.0);
        let chart = synth_chart(&default_chart_references(), &cam).unwrap();
        let profile =
            build_profile(&chart.observations, &chart.annotation.gray_ids(), None, D50, None)
                .unwrap();
        total += evaluate_chart(&profile, &chart.observations, D50).unwrap().mean_delta_e;
    }
    let mean = total / 20.0;
    assert!(mean <= 1.5, "noisy charts: mean ΔE76 over seeds = {mean}");
    println!("PASS criterion 2: gray-balance recovery within 1%, noisy-chart mean ΔE76 {mean:.3} ≤ 1.5");
}

// ────────────────────────────────────────────────────────────────────
// Criterion 3: colorimetry goldens
// ────────────────────────────────────────────────────────────────────

#[test]
fn criterion_3_colorimetry_goldens() {
    let white = xyz_to_lab(Xyz::new(D50.xn, D50.yn, D50.zn), D50);
    assert!((white.l - 100.0).abs() <= 1e-9 && white.a.abs() <= 1e-9 && white.b.abs() <= 1e-9);

    // Equal-ratio gray at t = 0.1842; expectation frozen from the direct
    // evaluation 116·t^(1/3) − 16 = 50.0016…
    let t: f64 = 0.1842;
    let gray = xyz_to_lab(Xyz::new(t * D50.xn, t * D50.yn, t * D50.zn), D50);
    assert!((gray.l - (116.0 * t.cbrt() - 16.0)).abs() <= 1e-12);
    assert!((gray.l - 50.0017).abs() <= 0.01, "L* = {}", gray.l);
    assert!(gray.a.abs() <= 1e-9 && gray.b.abs() <= 1e-9);

    // Companding branches agree at the threshold.
    let t0 = (24.0f64 / 116.0).powi(3);
    let above = t0.cbrt();
    let below = (t0 / 3.0) * (116.0 / 24.0) * (116.0 / 24.0) + 16.0 / 116.0;
    assert!((above - below).abs() <= 1e-9);

    // 3-4-5 triangle, exact.
    let de = delta_e76(Lab::new(50.0, 0.0, 0.0), Lab::new(50.0, 3.0, 4.0));
    assert_eq!(de, 5.0);
    println!("PASS criterion 3: colorimetry goldens (white point, equal-ratio gray, branch continuity, ΔE 3-4-5)");
}

// ────────────────────────────────────────────────────────────────────
// Criterion 4: skin detector oracle equivalence
// ────────────────────────────────────────────────────────────────────

// Independent restatement of the skin rules, evaluated clause by clause.
fn skin_oracle(r: f64, g: f64, b: f64) -> bool {
    let mx = r.max(g).max(b);
    let mn = r.min(g).min(b);
    let bounds = r > 95.0 && g > 40.0 && b > 20.0;
    let spread = mx - mn > 15.0 && (r - g).abs() > 15.0;
    let order = r > g && r > b;

    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    let polygon = cr <= 1.5862 * cb + 20.0
        && cr >= 0.3448 * cb + 76.2069
        && cr >= -4.5652 * cb + 234.5652
        && cr <= -1.15 * cb + 301.75
        && cr <= -2.2857 * cb + 432.85;

    let hue = if mx == mn {
        0.0
    } else {
        let h6 = if mx == r {
            ((g - b) / (mx - mn)).rem_euclid(6.0)
        } else if mx == g {
            (b - r) / (mx - mn) + 2.0
        } else {
            (r - g) / (mx - mn) + 4.0
        };
        h6 * 60.0
    };

    bounds && spread && order && polygon && (hue < 25.0 || hue > 230.0)
}

#[test]
fn criterion_4_skin_detector_oracle_equivalence() {
    assert!(is_skin_pixel(DeviceRgb::new(180.0, 120.0, 90.0)));
    assert!(!is_skin_pixel(DeviceRgb::new(0.0, 255.0, 0.0)));
    assert!(!is_skin_pixel(DeviceRgb::new(120.0, 120.0, 120.0)));

    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0004);
    for _ in 0..100_000 {
        let (r, g, b): (u8, u8, u8) = (rng.random(), rng.random(), rng.random());
        let got = is_skin_pixel(DeviceRgb::from_u8(r, g, b));
        let want = skin_oracle(r as f64, g as f64, b as f64);
        assert_eq!(got, want, "disagreement at ({r},{g},{b})");
    }
    println!("PASS criterion 4: skin detector matches independent rule evaluation on 10^5 pixels");
}

// ────────────────────────────────────────────────────────────────────
// Criterion 5: linear model oracle equivalence
// ────────────────────────────────────────────────────────────────────

// Brute-force normal equations: explicit Gauss-Jordan inversion of AᵀA.
fn linear_oracle_theta(rows: &[SampleRow]) -> [[f64; 3]; 7] {
    let feat = |r: &SampleRow, k: usize| if k < 6 { r.input[k] } else { 1.0 };
    let mut aug = [[0.0f64; 10]; 7];
    for r in rows {
        for a in 0..7 {
            for b in 0..7 {
                aug[a][b] += feat(r, a) * feat(r, b);
            }
            for d in 0..3 {
                aug[a][7 + d] += feat(r, a) * r.target[d];
            }
        }
    }
    for col in 0..7 {
        let piv = (col..7)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..7 {
            if r != col {
                let f = aug[r][col];
                for c in 0..10 {
                    aug[r][c] -= f * aug[col][c];
                }
            }
        }
    }
    std::array::from_fn(|k| std::array::from_fn(|d| aug[k][7 + d]))
}

fn oracle_predict(theta: &[[f64; 3]; 7], x: &[f64; 6]) -> [f64; 3] {
    std::array::from_fn(|d| theta[6][d] + (0..6).map(|k| theta[k][d] * x[k]).sum::<f64>())
}

fn seeded_rows(seed: u64, n: usize, noise: f64) -> Vec<SampleRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: [[f64; 6]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
    let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
    (0..n)
        .map(|i| {
            let input: [f64; 6] = std::array::from_fn(|_| rng.random_range(-20.0..80.0));
            let target: [f64; 3] = std::array::from_fn(|d| {
                c[d] + (0..6).map(|k| w[d][k] * input[k]).sum::<f64>()
                    + if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 }
            });
            SampleRow { subject_id: format!("s{i:02}"), shade: format!("{}", 100 + i), input, target }
        })
        .collect()
}

#[test]
fn criterion_5_linear_model_oracle_equivalence() {
    for (seed, n) in [(41u64, 12usize), (42, 40), (43, 63)] {
        let rows = seeded_rows(seed, n, 4.0);
        let model = fit_linear(&rows).unwrap();
        let theta = linear_oracle_theta(&rows);
        for r in &rows {
            let got = model.predict(&r.input);
            let want = oracle_predict(&theta, &r.input);
            for d in 0..3 {
                assert!((got[d] - want[d]).abs() <= 1e-6, "fit_linear vs oracle at n={n}");
            }
        }

        // Every held-out LOOCV prediction against a per-fold oracle.
        let report = loocv(&rows, ModelKind::Linear, Hyperparams::default()).unwrap();
        for (i, fold) in report.per_fold.iter().enumerate() {
            let train: Vec<SampleRow> = rows
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, r)| r.clone())
                .collect();
            let theta = linear_oracle_theta(&train);
            let want = oracle_predict(&theta, &rows[i].input);
            for d in 0..3 {
                assert!(
                    (fold.predicted[d] - want[d]).abs() <= 1e-6,
                    "loocv fold {i} vs oracle at n={n}"
                );
            }
        }
    }

    let rows = seeded_rows(44, 30, 0.0);
    let report = loocv(&rows, ModelKind::Linear, Hyperparams::default()).unwrap();
    assert!(report.r2 >= 1.0 - 1e-9, "noiseless affine R² = {}", report.r2);
    assert!(report.mse <= 1e-9, "noiseless affine MSE = {}", report.mse);
    println!("PASS criterion 5: linear fits and LOOCV predictions match brute-force normal equations within 1e-6");
}

// ────────────────────────────────────────────────────────────────────
// Criterion 6: SVR correctness
// ────────────────────────────────────────────────────────────────────

fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| p * q).sum()
}

// Maximization-form dual objective of one output dimension, evaluated from
// the model's stored coefficients.
fn dual_objective(inputs: &[[f64; 6]], beta: &[f64], y: &[f64], eps: f64) -> f64 {
    let n = inputs.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * dot6(&inputs[i], &inputs[j]);
        }
    }
    -0.5 * quad - eps * beta.iter().map(|b| b.abs()).sum::<f64>()
        + y.iter().zip(beta.iter()).map(|(yi, bi)| yi * bi).sum::<f64>()
}

// Generic QP oracle: FISTA projected gradient on the 2N-variable dual with
// box constraints and one equality, projected by bisection.
fn qp_oracle_dual(inputs: &[[f64; 6]], y: &[f64], c: f64, eps: f64) -> f64 {
    let n = inputs.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dot6(&inputs[i], &inputs[j])).collect())
        .collect();
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..2 * n)
        .map(|t| if t < n { eps - y[t] } else { eps + y[t - n] })
        .collect();
    let h_mul = |a: &[f64]| -> Vec<f64> {
        let beta: Vec<f64> = (0..n).map(|i| a[i] - a[i + n]).collect();
        let kb: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i][j] * beta[j]).sum()).collect();
        (0..2 * n).map(|t| sign(t) * kb[t % n]).collect()
    };
    let project = |v: &[f64]| -> Vec<f64> {
        let clip = |nu: f64| -> Vec<f64> {
            (0..2 * n).map(|t| (v[t] - nu * sign(t)).clamp(0.0, c)).collect()
        };
        let constraint = |nu: f64| -> f64 {
            clip(nu).iter().enumerate().map(|(t, a)| sign(t) * a).sum()
        };
        let bound = v.iter().fold(0.0f64, |m, q| m.max(q.abs())) + c + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if constraint(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        clip(0.5 * (lo + hi))
    };
    let lipschitz = 2.0 * (0..n).map(|i| k[i][i]).sum::<f64>() + 1e-9;
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; 2 * n];
    let mut z = a.clone();
    let mut t_acc = 1.0f64;
    for _ in 0..80_000 {
        let mut grad = h_mul(&z);
        for (gt, pt) in grad.iter_mut().zip(p.iter()) {
            *gt += pt;
        }
        let moved: Vec<f64> = z.iter().zip(grad.iter()).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&moved);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
        z = next.iter().zip(a.iter()).map(|(nx, ax)| nx + (t_acc - 1.0) / t_next * (nx - ax)).collect();
        a = next;
        t_acc = t_next;
    }
    let ha = h_mul(&a);
    let obj: f64 = 0.5 * ha.iter().zip(a.iter()).map(|(h, ai)| h * ai).sum::<f64>()
        + p.iter().zip(a.iter()).map(|(pi, ai)| pi * ai).sum::<f64>();
    -obj
}

// Rows pre-sorted into the canonical order fit_svr uses, so the model's
// stored inputs align with these rows.
fn canonical(mut rows: Vec<SampleRow>) -> Vec<SampleRow> {
    rows.sort_by(|a, b| {
        a.input
            .iter()
            .chain(a.target.iter())
            .zip(b.input.iter().chain(b.target.iter()))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

#[test]
fn criterion_6_svr_correctness() {
    let c = 1.0;
    let eps = 0.1;

    // Dual feasibility and complementary slackness.
    let rows = canonical(seeded_rows(61, 25, 3.0));
    let model = fit_svr(&rows, c, eps).unwrap();
    for d in 0..3 {
        let beta = &model.dims[d].coefficients;
        assert!(beta.iter().all(|b| b.abs() <= c + 1e-8), "box constraint violated");
        let sum: f64 = beta.iter().sum();
        assert!(sum.abs() <= 1e-8, "zero-sum constraint off by {sum}");
        for (i, r) in rows.iter().enumerate() {
            let residual = (model.predict(&r.input)[d] - r.target[d]).abs();
            if residual < eps - 1e-6 {
                assert!(beta[i].abs() <= 1e-6, "in-tube sample carries coefficient {}", beta[i]);
            }
        }
    }

    // Dual objective against the generic QP oracle at N = 10.
    let rows = canonical(seeded_rows(62, 10, 3.0));
    let model = fit_svr(&rows, c, eps).unwrap();
    for d in 0..3 {
        let y: Vec<f64> = rows.iter().map(|r| r.target[d]).collect();
        let mine = dual_objective(&model.training_inputs, &model.dims[d].coefficients, &y, eps);
        let oracle = qp_oracle_dual(&model.training_inputs, &y, c, eps);
        assert!((mine - oracle).abs() <= 1e-4, "dim {d}: dual {mine} vs oracle {oracle}");
    }

    // Tube-feasible data trains inside the tube.
    let rows = canonical(seeded_rows(63, 20, 0.0));
    let model = fit_svr(&rows, 10.0, 0.5).unwrap();
    for r in &rows {
        let p = model.predict(&r.input);
        for d in 0..3 {
            assert!((p[d] - r.target[d]).abs() <= 0.5 + 1e-6, "tube violated");
        }
    }

    // Row permutation moves no metric by more than 1e-9.
    let rows = seeded_rows(64, 18, 3.0);
    let base = loocv(&rows, ModelKind::Svr, Hyperparams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(65);
    let mut shuffled = rows.clone();
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, rng.random_range(0..=i));
    }
    let permuted = loocv(&shuffled, ModelKind::Svr, Hyperparams::default()).unwrap();
    assert!((base.r2 - permuted.r2).abs() <= 1e-9);
    assert!((base.mse - permuted.mse).abs() <= 1e-9);
    assert!((base.mae - permuted.mae).abs() <= 1e-9);

    println!("PASS criterion 6: SVR feasibility/slackness, QP-oracle agreement ≤1e-4, tube feasibility, permutation stability ≤1e-9");
}

// ────────────────────────────────────────────────────────────────────
// Criterion 7: pipeline end to end
// ────────────────────────────────────────────────────────────────────

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shadecal"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let out = bin().args(args).current_dir(dir).output().expect("spawn shadecal");
    assert!(
        out.status.success(),
        "`shadecal {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const PIPELINE_SEED: u64 = 20260809;

// Band frozen from the brute-force oracle run at PIPELINE_SEED (LOOCV by
// explicit normal-equation inversion on the extracted dataset).
const EXPECTED_R2: f64 = 0.984086;
const EXPECTED_MSE: f64 = 0.265929;
const EXPECTED_MAE: f64 = 0.417869;
const METRIC_BAND: f64 = 1e-3;

fn loocv_oracle(rows: &[SampleRow]) -> (f64, f64, f64) {
    let n = rows.len();
    let mut predictions = Vec::with_capacity(n);
    for i in 0..n {
        let train: Vec<SampleRow> = rows
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, r)| r.clone())
            .collect();
        let theta = linear_oracle_theta(&train);
        predictions.push(oracle_predict(&theta, &rows[i].input));
    }
    let mut r2_sum = 0.0;
    for d in 0..3 {
        let mean = rows.iter().map(|r| r.target[d]).sum::<f64>() / n as f64;
        let ss_res: f64 = rows
            .iter()
            .zip(predictions.iter())
            .map(|(r, p)| (r.target[d] - p[d]) * (r.target[d] - p[d]))
            .sum();
        let ss_tot: f64 = rows.iter().map(|r| (r.target[d] - mean) * (r.target[d] - mean)).sum();
        r2_sum += 1.0 - ss_res / ss_tot;
    }
    let scalars = (3 * n) as f64;
    let mse = rows
        .iter()
        .zip(predictions.iter())
        .flat_map(|(r, p)| (0..3).map(move |d| r.target[d] - p[d]))
        .map(|e| e * e)
        .sum::<f64>()
        / scalars;
    let mae = rows
        .iter()
        .zip(predictions.iter())
        .flat_map(|(r, p)| (0..3).map(move |d| r.target[d] - p[d]))
        .map(f64::abs)
        .sum::<f64>()
        / scalars;
    (r2_sum / 3.0, mse, mae)
}

#[test]
fn criterion_7_pipeline_end_to_end() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let seed = PIPELINE_SEED.to_string();

    run_in(
        dir,
        &[
            "synth", "pipeline", "--seed", &seed, "--outdir", "bundle", "--subjects", "19",
            "--rows", "63", "--noise-sigma", "0.5",
        ],
    );
    run_in(
        dir,
        &[
            "calibrate",
            "--image",
            "bundle/chart.png",
            "--annotation",
            "bundle/chart_annotation.json",
            "--references",
            "bundle/chart_references.csv",
            "--out",
            "profile.json",
        ],
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("bundle/manifest.json")).unwrap())
            .unwrap();
    run_in(
        dir,
        &[
            "extract",
            "--image",
            "bundle/swatches.png",
            "--profile",
            "profile.json",
            "--out",
            "regions.csv",
            "--role",
            "foundation_swatch",
            "--annotation",
            "bundle/swatches_annotation.json",
        ],
    );
    for sample in manifest["samples"].as_array().unwrap() {
        let image = format!("bundle/{}", sample["image"].as_str().unwrap());
        let rect: Vec<String> = sample["rect"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.to_string())
            .collect();
        let rect = rect.join(",");
        let mut args = vec![
            "extract".to_string(),
            "--image".into(),
            image,
            "--profile".into(),
            "profile.json".into(),
            "--out".into(),
            "regions.csv".into(),
            "--role".into(),
            sample["role"].as_str().unwrap().to_string(),
            "--rect".into(),
            rect,
        ];
        if let Some(s) = sample["subject"].as_str() {
            args.extend(["--subject".into(), s.to_string()]);
        }
        if let Some(s) = sample["shade"].as_str() {
            args.extend(["--shade".into(), s.to_string()]);
        }
        let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run_in(dir, &arg_refs);
    }

    run_in(dir, &["loocv", "--regions", "regions.csv", "--model", "linear", "--out", "report.json"]);
    let report: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.n, 63, "dataset must assemble to 63 rows");

    // Independent oracle on the very dataset the pipeline produced.
    let regions = shadecal::dataset::load_regions(&dir.join("regions.csv")).unwrap();
    let rows = shadecal::dataset::assemble_dataset(&regions).unwrap();
    let (o_r2, o_mse, o_mae) = loocv_oracle(&rows);
    assert!((report.r2 - o_r2).abs() <= 1e-6, "R² {} vs oracle {o_r2}", report.r2);
    assert!((report.mse - o_mse).abs() <= 1e-6, "MSE {} vs oracle {o_mse}", report.mse);
    assert!((report.mae - o_mae).abs() <= 1e-6, "MAE {} vs oracle {o_mae}", report.mae);

    // Pre-registered band from the oracle run at this seed.
    assert!((report.r2 - EXPECTED_R2).abs() <= METRIC_BAND, "R² {} outside band", report.r2);
    assert!((report.mse - EXPECTED_MSE).abs() <= METRIC_BAND, "MSE {} outside band", report.mse);
    assert!((report.mae - EXPECTED_MAE).abs() <= METRIC_BAND, "MAE {} outside band", report.mae);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() <= 60.0, "pipeline took {elapsed:?}");
    println!(
        "PASS criterion 7: synth→calibrate→extract→loocv in {:.1}s, R² {:.6} / MSE {:.6} / MAE {:.6} within oracle band",
        elapsed.as_secs_f64(),
        report.r2,
        report.mse,
        report.mae
    );
}

// ────────────────────────────────────────────────────────────────────
// Criterion 8: CLI determinism
// ────────────────────────────────────────────────────────────────────

fn snapshot(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut files = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.clone(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn criterion_8_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // Fixture inputs shared by both passes.
    let skin_img = dir.join("skin.png");
    image::RgbImage::from_pixel(20, 12, image::Rgb([180, 120, 90]))
        .save(&skin_img)
        .unwrap();

    let command_sets: Vec<Vec<&str>> = vec![
        vec!["synth", "chart", "--seed", "9", "--outdir", "chart"],
        vec![
            "synth", "dataset", "--seed", "9", "--outdir", "ds", "--subjects", "6", "--rows",
            "14", "--noise-sigma", "0.5",
        ],
        vec![
            "synth", "pipeline", "--seed", "9", "--outdir", "pipe", "--subjects", "4", "--rows",
            "8", "--noise-sigma", "0.5",
        ],
        vec!["mask", "--image", "skin.png", "--out", "mask.png"],
        vec![
            "calibrate",
            "--image",
            "chart/chart.png",
            "--annotation",
            "chart/chart_annotation.json",
            "--references",
            "chart/chart_references.csv",
            "--out",
            "profile.json",
        ],
        vec![
            "extract",
            "--image",
            "skin.png",
            "--profile",
            "profile.json",
            "--out",
            "regions.csv",
            "--role",
            "bare_skin",
            "--subject",
            "s01",
            "--rect",
            "2,2,16,8",
        ],
        vec!["train", "--dataset", "ds/dataset.csv", "--model", "svr", "--out", "model.json"],
        vec!["loocv", "--dataset", "ds/dataset.csv", "--model", "linear", "--out", "report.json"],
    ];

    for args in &command_sets {
        run_in(dir, args);
    }
    let predict_once = run_in(dir, &["predict", "--model", "model.json", "--input", "55,12,18,60,10,20"]);
    let first = snapshot(dir);

    // Second pass with identical resolved configs; file outputs must not move.
    // (Informational stdout like extract's appended-row count may reflect the
    // pre-existing file state; predict's stdout IS its output and is checked.)
    for args in &command_sets {
        run_in(dir, args);
    }
    let predict_again = run_in(dir, &["predict", "--model", "model.json", "--input", "55,12,18,60,10,20"]);
    assert_eq!(predict_once.stdout, predict_again.stdout);

    let second = snapshot(dir);
    assert_eq!(first.len(), second.len(), "file sets differ between runs");
    for (path, bytes) in &first {
        let other = second.get(path).unwrap_or_else(|| panic!("{path:?} missing on second run"));
        assert_eq!(bytes, other, "{path:?} is not byte-identical across runs");
    }
    println!("PASS criterion 8: {} output files byte-identical across repeated runs of every subcommand", first.len());
}

// ────────────────────────────────────────────────────────────────────
// Criterion 9: outlier gate
// ────────────────────────────────────────────────────────────────────

#[test]
fn criterion_9_outlier_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    run_in(
        dir,
        &[
            "synth", "pipeline", "--seed", "31", "--outdir", "bundle", "--subjects", "2",
            "--rows", "4", "--noise-sigma", "0",
        ],
    );
    run_in(
        dir,
        &[
            "calibrate",
            "--image",
            "bundle/chart.png",
            "--annotation",
            "bundle/chart_annotation.json",
            "--references",
            "bundle/chart_references.csv",
            "--out",
            "good_profile.json",
        ],
    );

    // References shifted by 10 Lab units in seeded random directions.
    let refs = shadecal::annotation::load_references(&dir.join("bundle/chart_references.csv")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xBAD_9);
    let corrupted: Vec<(u32, Xyz)> = refs
        .iter()
        .map(|&(id, xyz)| {
            let mut lab = xyz_to_lab(xyz, D50);
            let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            lab.l += 10.0 * v[0] / n;
            lab.a += 10.0 * v[1] / n;
            lab.b += 10.0 * v[2] / n;
            (id, lab_to_xyz(lab, D50))
        })
        .collect();
    shadecal::annotation::save_references(&dir.join("bad_refs.csv"), &corrupted).unwrap();

    let out = bin()
        .args([
            "calibrate",
            "--image",
            "bundle/chart.png",
            "--annotation",
            "bundle/chart_annotation.json",
            "--references",
            "bad_refs.csv",
            "--out",
            "bad_profile.json",
        ])
        .current_dir(dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "corrupted chart must exit 3");
    let bad_report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("bad_profile.report.json")).unwrap())
            .unwrap();
    assert!(bad_report["mean_delta_e"].as_f64().unwrap() > 3.0);
    assert_eq!(bad_report["outlier"], true);

    // Subject s01 extracted through the outlier profile, s02 through the good
    // one; swatches through the good one. Only s02 rows may survive.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("bundle/manifest.json")).unwrap())
            .unwrap();
    run_in(
        dir,
        &[
            "extract",
            "--image",
            "bundle/swatches.png",
            "--profile",
            "good_profile.json",
            "--out",
            "regions.csv",
            "--role",
            "foundation_swatch",
            "--annotation",
            "bundle/swatches_annotation.json",
        ],
    );
    for sample in manifest["samples"].as_array().unwrap() {
        let subject = sample["subject"].as_str().unwrap();
        let profile = if subject == "s01" { "bad_profile.json" } else { "good_profile.json" };
        let image = format!("bundle/{}", sample["image"].as_str().unwrap());
        let rect: Vec<String> =
            sample["rect"].as_array().unwrap().iter().map(|v| v.to_string()).collect();
        let rect = rect.join(",");
        let mut args = vec![
            "extract".to_string(),
            "--image".into(),
            image,
            "--profile".into(),
            profile.into(),
            "--out".into(),
            "regions.csv".into(),
            "--role".into(),
            sample["role"].as_str().unwrap().to_string(),
            "--subject".into(),
            subject.to_string(),
            "--rect".into(),
            rect,
        ];
        if let Some(s) = sample["shade"].as_str() {
            args.extend(["--shade".into(), s.to_string()]);
        }
        let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run_in(dir, &arg_refs);
    }

    let regions = shadecal::dataset::load_regions(&dir.join("regions.csv")).unwrap();
    let rows = shadecal::dataset::assemble_dataset(&regions).unwrap();
    assert!(!rows.is_empty(), "the good subject's rows must survive");
    assert!(
        rows.iter().all(|r| r.subject_id == "s02"),
        "outlier-calibrated subject must be excluded, got {:?}",
        rows.iter().map(|r| &r.subject_id).collect::<Vec<_>>()
    );
    println!("PASS criterion 9: outlier chart flagged (exit 3) and its samples excluded from assembly");
}
