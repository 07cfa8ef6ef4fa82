//! Seeded desk-scale studies. Each returns CSV-ready tables; the acceptance
//! tests and the `experiment` subcommand share these drivers.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::{
    default_margin_1d, make_fine_boundary_alphabet, make_midrise_alphabet,
    make_optimal_2d_alphabet, make_uniform_alphabet,
};
use crate::analysis::{
    error_spectrum, format_float, low_band_energy_fraction, lowpass_error,
    noise_shaping_ratio, noise_shaping_ratio_interior, psnr_db, snr_db,
};
use crate::decoder::{
    decode_class1_column, decode_class2, decode_class3_column, DecodeClass, DecodeProblem,
    DecodeResult, SolverConfig,
};
use crate::encoder::{encode_msq, encode_sd1d, encode_sd2d, EncodeMode, EncoderConfig};
use crate::error::{Result, SdqError};
use crate::pipeline::image_io::Image;
use crate::pipeline::layout::PatchLayout;
use crate::pipeline::workflow::{
    brighten, quantize_image, reconstruct, QuantizeOptions, ReconClass, ReconstructOptions,
};
use crate::signals::{gen_cartoon_image, gen_piecewise_detailed, gen_piecewise_image, ImageSpec, SignalSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_nums(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| format_float(*v)).collect());
    }

    pub fn push_labeled(&mut self, label: &str, values: &[f64]) {
        let mut row = vec![label.to_string()];
        row.extend(values.iter().map(|v| format_float(*v)));
        self.rows.push(row);
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_csv())?;
        Ok(path)
    }
}

/// Decoder objective at the true signal: the reference value for the
/// optimality sandwich `objective(x_hat) <= objective(x_true)`.
fn true_objective(problem: &DecodeProblem, truth: &Array2<f64>) -> Result<f64> {
    problem.objective(truth)
}

fn col(x: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((x.len(), 1), x.to_vec()).expect("column")
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sub_seed(seed: u64, tag: u64, k: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ k.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

#[derive(Debug, Clone)]
pub struct SpectrumParams {
    pub n: usize,
    pub bits: u32,
    pub orders: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            n: 1024,
            bits: 4,
            orders: vec![1, 2, 3],
            trials: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumOutcome {
    /// Mean error magnitude per frequency bin.
    pub spectrum: Table,
    /// Low-band energy fraction per trial.
    pub lowband: Table,
    pub mean_msq_fraction: f64,
    /// Mean sigma-delta fraction per order, in the order of `orders`.
    pub mean_sd_fraction: Vec<f64>,
}

/// Error spectra of MSQ and sigma-delta on i.i.d. uniform inputs in `[0, 1]`.
/// The low band is `|k| <= N/20`.
pub fn fig1_spectrum(p: &SpectrumParams) -> Result<SpectrumOutcome> {
    let kmax = p.n / 20;
    let msq_alpha = make_midrise_alphabet(0.0, 1.0, p.bits)?;
    let sd_alphas = p
        .orders
        .iter()
        .map(|&r| make_uniform_alphabet(0.0, 1.0, p.bits, default_margin_1d(r)))
        .collect::<Result<Vec<_>>>()?;
    let mut header = vec!["k".to_string(), "msq".to_string()];
    header.extend(p.orders.iter().map(|r| format!("sd_r{r}")));
    let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut spectrum = Table::new("fig1_spectrum", &hdr);
    let mut lb_header = vec!["trial".to_string(), "msq_lowband".to_string()];
    lb_header.extend(p.orders.iter().map(|r| format!("sd_r{r}_lowband")));
    let lb_hdr: Vec<&str> = lb_header.iter().map(|s| s.as_str()).collect();
    let mut lowband = Table::new("fig1_lowband", &lb_hdr);

    let mut mean_mag = vec![vec![0.0; p.n]; 1 + p.orders.len()];
    let mut sums = vec![0.0; 1 + p.orders.len()];
    for t in 0..p.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(p.seed, 1, t as u64));
        let y: Vec<f64> = (0..p.n).map(|_| rng.gen::<f64>()).collect();
        let q_msq = encode_msq(&col(&y), &msq_alpha).dequantize();
        let mut qs = vec![q_msq.column(0).to_vec()];
        for (k, &r) in p.orders.iter().enumerate() {
            let (code, _) = encode_sd1d(&y, &sd_alphas[k], r, None, &EncoderConfig::default())?;
            qs.push(code.dequantize().column(0).to_vec());
        }
        let mut row = vec![t as f64];
        for (m, q) in qs.iter().enumerate() {
            let spec = error_spectrum(&y, q)?;
            for (acc, v) in mean_mag[m].iter_mut().zip(&spec) {
                *acc += v / p.trials as f64;
            }
            let f = low_band_energy_fraction(&spec, kmax);
            sums[m] += f;
            row.push(f);
        }
        lowband.push_nums(&row);
    }
    for k in 0..p.n {
        let mut row = vec![k as f64];
        row.extend(mean_mag.iter().map(|m| m[k]));
        spectrum.push_nums(&row);
    }
    let trials = p.trials.max(1) as f64;
    Ok(SpectrumOutcome {
        spectrum,
        lowband,
        mean_msq_fraction: sums[0] / trials,
        mean_sd_fraction: sums[1..].iter().map(|s| s / trials).collect(),
    })
}

/// Noise-shaping ratios for `w = 1..=wmax`, full and interior variants.
pub fn fig2_rho(n: usize, wmax: usize) -> Table {
    let mut t = Table::new(
        "fig2_rho",
        &["w", "rho_1", "rho_2", "rho_3", "rho_1_interior", "rho_2_interior", "rho_3_interior"],
    );
    for w in 1..=wmax {
        let w = w as f64;
        let mut row = vec![w];
        row.extend((1..=3).map(|r| noise_shaping_ratio(r, w, n)));
        row.extend((1..=3).map(|r| noise_shaping_ratio_interior(r, w, n)));
        t.push_nums(&row);
    }
    t
}

#[derive(Debug, Clone)]
pub struct Thm1Params {
    /// `(N, bits)` cells.
    pub cells: Vec<(usize, u32)>,
    pub s: usize,
    pub seeds: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for Thm1Params {
    fn default() -> Self {
        Self {
            cells: vec![(256, 3), (512, 3), (1024, 3), (512, 4), (512, 5)],
            s: 5,
            seeds: 20,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

pub const THM1_HEADER: [&str; 14] = [
    "N", "s", "delta", "r", "beta", "l2_error", "bound", "msq_l2_error", "naive_l2_error",
    "objective", "objective_true", "converged", "feasible", "trial",
];

/// First-order column sigma-delta with the class-1 decoder on piecewise
/// constant signals. `bound = sqrt(8 s) delta`.
pub fn thm1_scaling(p: &Thm1Params) -> Result<Table> {
    let mut t = Table::new("thm1_scaling", &THM1_HEADER);
    for &(n, bits) in &p.cells {
        let alpha = make_uniform_alphabet(0.0, 1.0, bits, 0)?;
        let msq_alpha = make_midrise_alphabet(0.0, 1.0, bits)?;
        let delta = alpha.step();
        for k in 0..p.seeds {
            let spec = SignalSpec::new(n, 1, p.s, sub_seed(p.seed, 3, (n * 1000 + k) as u64));
            let x = gen_piecewise_detailed(&spec)?.clean;
            let (code, _) = encode_sd1d(&x, &alpha, 1, None, &EncoderConfig::default())?;
            let q = code.dequantize().column(0).to_vec();
            let res = decode_class1_column(&q, 1, 1, delta, &p.solver)?;
            let problem = DecodeProblem::column(&q, 1, 1, delta, DecodeClass::Class1Column);
            let obj_true = true_objective(&problem, &col(&x))?;
            let q_msq = encode_msq(&col(&x), &msq_alpha).dequantize().column(0).to_vec();
            let xh = res.x_hat.column(0).to_vec();
            t.push_nums(&[
                n as f64,
                p.s as f64,
                delta,
                1.0,
                1.0,
                l2(&xh, &x),
                (8.0 * p.s as f64).sqrt() * delta,
                l2(&q_msq, &x),
                l2(&q, &x),
                res.objective,
                obj_true,
                res.converged as u8 as f64,
                res.feasible as u8 as f64,
                k as f64,
            ]);
        }
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct Thm3Params {
    pub size: usize,
    pub budgets: Vec<usize>,
    pub bits: Vec<u32>,
    pub seeds: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for Thm3Params {
    fn default() -> Self {
        Self {
            size: 32,
            budgets: vec![4, 8, 16],
            bits: vec![3, 4, 5],
            seeds: 3,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

pub const THM3_HEADER: [&str; 11] = [
    "s", "delta", "fro_error", "ratio", "naive_fro_error", "objective", "objective_true",
    "converged", "feasible", "iterations", "trial",
];

/// 2D sigma-delta with the class-2 decoder on block images. The optimal
/// alphabet is built over `[0, (2^d - 3)/(2^d - 1)]`, which puts its levels
/// on the grid `k / (2^d - 1)` and makes `delta = 1 / (2^d - 1)`.
pub fn thm3_scaling(p: &Thm3Params) -> Result<Table> {
    let mut t = Table::new("thm3_scaling", &THM3_HEADER);
    for &bits in &p.bits {
        let levels = (1u64 << bits) as f64;
        let top = (levels - 3.0) / (levels - 1.0);
        let alpha = make_optimal_2d_alphabet(0.0, top, bits)?;
        let delta = alpha.step();
        for &s in &p.budgets {
            for k in 0..p.seeds {
                let mut spec = ImageSpec::new(s, sub_seed(p.seed, 4, (s * 1000 + k) as u64));
                spec.range = (0.1, top.min(0.7));
                let x = gen_piecewise_image(p.size, p.size, &spec)?;
                let (code, _) = encode_sd2d(&x, &alpha, 1, &EncoderConfig::default())?;
                let q = code.dequantize();
                let res = decode_class2(&q, delta, &p.solver)?;
                let problem = DecodeProblem {
                    q: q.clone(),
                    beta: 1,
                    r: 1,
                    delta,
                    class: DecodeClass::Class2Image,
                    boundary_bound: None,
                    experimental: false,
                };
                let fro = (&res.x_hat - &x).mapv(|v| v * v).sum().sqrt();
                let naive = (&q - &x).mapv(|v| v * v).sum().sqrt();
                t.push_nums(&[
                    s as f64,
                    delta,
                    fro,
                    fro / ((s as f64).sqrt() * delta),
                    naive,
                    res.objective,
                    problem.objective(&x)?,
                    res.converged as u8 as f64,
                    res.feasible as u8 as f64,
                    res.iterations as f64,
                    k as f64,
                ]);
            }
        }
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct Thm5Params {
    pub ns: Vec<usize>,
    pub s: usize,
    pub separation: usize,
    pub cutoff: usize,
    pub bits: u32,
    pub seeds: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for Thm5Params {
    fn default() -> Self {
        Self {
            ns: vec![256, 512, 1024],
            s: 4,
            separation: 16,
            cutoff: 16,
            bits: 5,
            seeds: 3,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

pub const THM5_HEADER: [&str; 13] = [
    "N", "r", "class", "delta", "lowpass_error", "snr_db", "l2_error", "objective",
    "objective_true", "converged", "feasible", "iterations", "trial",
];

/// Third-order sigma-delta with the fine boundary tail and the class-3
/// decoder on separated periodic signals, next to first-order class-1 at the
/// same bit depth on the same signals.
pub fn thm5_separation(p: &Thm5Params) -> Result<Table> {
    let mut t = Table::new("thm5_separation", &THM5_HEADER);
    let a3 = make_uniform_alphabet(0.0, 1.0, p.bits, default_margin_1d(3))?;
    let a1 = make_uniform_alphabet(0.0, 1.0, p.bits, default_margin_1d(1))?;
    for &n in &p.ns {
        for k in 0..p.seeds {
            let mut spec = SignalSpec::new(n, 1, p.s, sub_seed(p.seed, 5, (n * 1000 + k) as u64));
            spec.separation = Some(p.separation);
            let x = gen_piecewise_detailed(&spec)?.clean;

            let fine = make_fine_boundary_alphabet(&a3, n, 3)?;
            let (code, _) = encode_sd1d(&x, &a3, 3, Some(&fine), &EncoderConfig::default())?;
            let q3 = code.dequantize().column(0).to_vec();
            let res3 = decode_class3_column(&q3, &fine, 1, 3, a3.step(), &p.solver)?;
            let mut prob3 = DecodeProblem::column(&q3, 1, 3, a3.step(), DecodeClass::Class3Column);
            prob3.boundary_bound = Some(fine.boundary_bound());
            push_thm5_row(&mut t, n, 3, 3.0, a3.step(), &x, &res3, true_objective(&prob3, &col(&x))?, p.cutoff, k)?;

            let (code, _) = encode_sd1d(&x, &a1, 1, None, &EncoderConfig::default())?;
            let q1 = code.dequantize().column(0).to_vec();
            let res1 = decode_class1_column(&q1, 1, 1, a1.step(), &p.solver)?;
            let prob1 = DecodeProblem::column(&q1, 1, 1, a1.step(), DecodeClass::Class1Column);
            push_thm5_row(&mut t, n, 1, 1.0, a1.step(), &x, &res1, true_objective(&prob1, &col(&x))?, p.cutoff, k)?;
        }
    }
    Ok(t)
}

#[allow(clippy::too_many_arguments)]
fn push_thm5_row(
    t: &mut Table,
    n: usize,
    r: usize,
    class: f64,
    delta: f64,
    x: &[f64],
    res: &DecodeResult,
    obj_true: f64,
    cutoff: usize,
    trial: usize,
) -> Result<()> {
    let xh = res.x_hat.column(0).to_vec();
    t.push_nums(&[
        n as f64,
        r as f64,
        class,
        delta,
        lowpass_error(x, &xh, cutoff)?,
        snr_db(x, &xh)?,
        l2(&xh, x),
        res.objective,
        obj_true,
        res.converged as u8 as f64,
        res.feasible as u8 as f64,
        res.iterations as f64,
        trial as f64,
    ]);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LowLightParams {
    pub size: usize,
    pub patch: usize,
    /// `(pixel scale, bits)` settings.
    pub settings: Vec<(f64, u32)>,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for LowLightParams {
    fn default() -> Self {
        Self {
            size: 128,
            patch: 32,
            settings: vec![(1.0, 3), (0.1, 4)],
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

pub const LOWLIGHT_HEADER: [&str; 5] = ["method", "scale", "bits", "psnr_db", "psnr_brightened_db"];

/// End-to-end image comparison on a cartoon scaled into `[0, scale]`. All
/// alphabets cover the full sensor range `[0, 1]`. Methods: MSQ with naive
/// decoding, column sigma-delta with class 1, and 2D sigma-delta on patches
/// with class 2. The brightened PSNR compares `X^{1/3}` of both images.
pub fn lowlight(p: &LowLightParams) -> Result<Table> {
    let mut t = Table::new("lowlight", &LOWLIGHT_HEADER);
    let base = gen_cartoon_image(p.size, p.size, p.seed);
    for &(scale, bits) in &p.settings {
        let truth = base.mapv(|v| v * scale);
        let img = Image::gray(truth.clone());
        let runs: [(&str, EncodeMode, ReconClass, Option<PatchLayout>); 3] = [
            ("msq", EncodeMode::Msq, ReconClass::Naive, None),
            ("sd1d_c1", EncodeMode::Sd1dCol, ReconClass::C1, None),
            ("sd2d_c2", EncodeMode::Sd2d, ReconClass::C2, Some(PatchLayout::new(p.patch, p.patch))),
        ];
        for (label, mode, class, layout) in runs {
            let mut q = QuantizeOptions::new(mode, bits, 1);
            q.layout = layout;
            q.seed = p.seed;
            let container = quantize_image(&img, &q)?;
            let mut ro = ReconstructOptions::new(class, 1);
            ro.solver = p.solver.clone();
            let rec = reconstruct(&container, &ro)?;
            let x = &rec.image.channels[0];
            t.push_labeled(
                label,
                &[
                    scale,
                    bits as f64,
                    psnr_db(&truth, x, 1.0)?,
                    psnr_db(&brighten(&truth), &brighten(x), 1.0)?,
                ],
            );
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fig1Spectrum,
    Fig2Rho,
    Thm1Scaling,
    Thm3Scaling,
    Thm5Separation,
    LowLight,
}

impl FromStr for Experiment {
    type Err = SdqError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fig1_spectrum" => Self::Fig1Spectrum,
            "fig2_rho" => Self::Fig2Rho,
            "thm1_scaling" => Self::Thm1Scaling,
            "thm3_scaling" => Self::Thm3Scaling,
            "thm5_separation" => Self::Thm5Separation,
            "lowlight" => Self::LowLight,
            _ => {
                return Err(SdqError::InvalidArgument(format!(
                    "unknown experiment {s:?}; expected one of fig1_spectrum, fig2_rho, \
                     thm1_scaling, thm3_scaling, thm5_separation, lowlight"
                )))
            }
        })
    }
}

/// Runs an experiment with its default parameters and the given seed, and
/// returns its tables.
pub fn run_experiment(which: Experiment, seed: u64, solver: &SolverConfig) -> Result<Vec<Table>> {
    Ok(match which {
        Experiment::Fig1Spectrum => {
            let out = fig1_spectrum(&SpectrumParams {
                seed,
                ..Default::default()
            })?;
            vec![out.spectrum, out.lowband]
        }
        Experiment::Fig2Rho => vec![fig2_rho(200, 99)],
        Experiment::Thm1Scaling => vec![thm1_scaling(&Thm1Params {
            seed,
            solver: solver.clone(),
            ..Default::default()
        })?],
        Experiment::Thm3Scaling => vec![thm3_scaling(&Thm3Params {
            seed,
            solver: solver.clone(),
            ..Default::default()
        })?],
        Experiment::Thm5Separation => vec![thm5_separation(&Thm5Params {
            seed,
            solver: solver.clone(),
            ..Default::default()
        })?],
        Experiment::LowLight => vec![lowlight(&LowLightParams {
            seed,
            solver: solver.clone(),
            ..Default::default()
        })?],
    })
}
