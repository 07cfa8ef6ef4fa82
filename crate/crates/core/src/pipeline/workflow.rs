//! Quantize and reconstruct whole images patch by patch.

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{
    default_margin_1d, make_fine_boundary_alphabet, make_midrise_alphabet, make_sd2d_alphabet,
    make_uniform_alphabet, Alphabet,
};
use crate::analysis::QualityReport;
use crate::decoder::{
    decode_class1_column, decode_class2_orders, decode_class3_column, DecodeResult, SolverConfig,
};
use crate::encoder::{
    encode_msq, encode_msq_dithered, encode_sd1d_columns, encode_sd2d, EncodeMode, EncoderConfig,
    SigmaDeltaCode,
};
use crate::error::{Result, SdqError};
use crate::pipeline::container::SdqContainer;
use crate::pipeline::image_io::Image;
use crate::pipeline::layout::{segment, stack, Patch, PatchLayout};

/// The alphabet each mode uses unless one is supplied: midrise cells for
/// MSQ, a margin of `2^{r-1} - 1` levels for column sigma-delta, and the
/// optimal 2D alphabet (wider margin for `r > 1`) for the 2D scheme.
pub fn default_alphabet(mode: EncodeMode, range: (f64, f64), bits: u32, order: usize) -> Result<Alphabet> {
    let (a, b) = range;
    match mode {
        EncodeMode::Msq | EncodeMode::MsqDither => make_midrise_alphabet(a, b, bits),
        EncodeMode::Sd1dCol => make_uniform_alphabet(a, b, bits, default_margin_1d(order)),
        EncodeMode::Sd2d => make_sd2d_alphabet(a, b, bits, order),
    }
}

#[derive(Debug, Clone)]
pub struct QuantizeOptions {
    pub mode: EncodeMode,
    pub bits: u32,
    pub order: usize,
    pub layout: Option<PatchLayout>,
    pub seed: u64,
    /// Signal range the alphabet is built for.
    pub range: (f64, f64),
    /// Quantize the last `r` entries of each column with the fine boundary
    /// alphabet (column sigma-delta only).
    pub fine_tail: bool,
    pub beta_hint: usize,
    pub alphabet: Option<Alphabet>,
    pub encoder: EncoderConfig,
}

impl QuantizeOptions {
    pub fn new(mode: EncodeMode, bits: u32, order: usize) -> Self {
        Self {
            mode,
            bits,
            order,
            layout: None,
            seed: 0,
            range: (0.0, 1.0),
            fine_tail: false,
            beta_hint: 1,
            alphabet: None,
            encoder: EncoderConfig::default(),
        }
    }
}

fn encode_patch(
    data: &Array2<f64>,
    alphabet: &Alphabet,
    opts: &QuantizeOptions,
    seed: u64,
) -> Result<SigmaDeltaCode> {
    match opts.mode {
        EncodeMode::Msq => Ok(encode_msq(data, alphabet)),
        EncodeMode::MsqDither => Ok(encode_msq_dithered(data, alphabet, seed)),
        EncodeMode::Sd1dCol => {
            let fine = if opts.fine_tail {
                Some(make_fine_boundary_alphabet(alphabet, data.nrows(), opts.order)?)
            } else {
                None
            };
            Ok(encode_sd1d_columns(data, alphabet, opts.order, fine.as_ref(), &opts.encoder)?.0)
        }
        EncodeMode::Sd2d => Ok(encode_sd2d(data, alphabet, opts.order, &opts.encoder)?.0),
    }
}

pub fn quantize_image(img: &Image, opts: &QuantizeOptions) -> Result<SdqContainer> {
    let (rows, cols) = img.dim();
    if img.channels.is_empty() || rows == 0 || cols == 0 {
        return Err(SdqError::InvalidArgument("empty image".into()));
    }
    if opts.fine_tail && opts.mode != EncodeMode::Sd1dCol {
        return Err(SdqError::InvalidArgument(
            "the fine boundary tail needs column sigma-delta".into(),
        ));
    }
    let order = match opts.mode {
        EncodeMode::Msq | EncodeMode::MsqDither => 0,
        _ => opts.order,
    };
    let alphabet = match &opts.alphabet {
        Some(a) => a.clone(),
        None => default_alphabet(opts.mode, opts.range, opts.bits, order)?,
    };
    let layout = opts.layout.unwrap_or(PatchLayout::full(rows, cols));
    let per_channel: Vec<Vec<Patch>> = img
        .channels
        .iter()
        .map(|c| segment(c, &layout))
        .collect::<Result<_>>()?;
    let per = per_channel[0].len();
    let jobs: Vec<(usize, usize)> = (0..per_channel.len())
        .flat_map(|c| (0..per).map(move |p| (c, p)))
        .collect();
    let coded: Vec<Result<SigmaDeltaCode>> = jobs
        .par_iter()
        .map(|&(c, p)| {
            let patch = &per_channel[c][p];
            let seed = opts.seed.wrapping_add((c * per + p) as u64);
            encode_patch(&patch.data, &alphabet, opts, seed).map_err(|e| {
                e.at(&format!("channel {c} patch at ({}, {})", patch.row0, patch.col0))
            })
        })
        .collect();
    let mut codes: Vec<Vec<SigmaDeltaCode>> = vec![Vec::with_capacity(per); per_channel.len()];
    for ((c, _), code) in jobs.into_iter().zip(coded) {
        codes[c].push(code?);
    }
    Ok(SdqContainer {
        mode: opts.mode,
        order,
        beta_hint: opts.beta_hint,
        rows,
        cols,
        layout,
        alphabet,
        fine_tail: opts.fine_tail,
        codes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReconClass {
    Naive,
    C1,
    C2,
    C3,
}

impl std::str::FromStr for ReconClass {
    type Err = SdqError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "c1" => Ok(Self::C1),
            "c2" => Ok(Self::C2),
            "c3" => Ok(Self::C3),
            _ => Err(SdqError::InvalidArgument(format!(
                "unknown class {s:?}; expected naive, c1, c2 or c3"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructOptions {
    pub class: ReconClass,
    pub beta: usize,
    pub solver: SolverConfig,
    pub brighten: bool,
    /// Allow class 2 with orders other than one.
    pub experimental: bool,
}

impl ReconstructOptions {
    pub fn new(class: ReconClass, beta: usize) -> Self {
        Self {
            class,
            beta,
            solver: SolverConfig::default(),
            brighten: false,
            experimental: false,
        }
    }
}

/// Outcome of one solver call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStatus {
    pub channel: usize,
    pub patch: usize,
    pub column: Option<usize>,
    pub converged: bool,
    pub feasible: bool,
    pub iterations: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: Image,
    pub status: Vec<SolveStatus>,
}

impl Reconstruction {
    pub fn all_converged(&self) -> bool {
        self.status.iter().all(|s| s.converged)
    }
}

/// Brightness adjustment `X^{1/3}` after clamping to `[0, 1]`.
pub fn brighten(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.clamp(0.0, 1.0).cbrt())
}

fn check_compat(c: &SdqContainer, class: ReconClass) -> Result<()> {
    let ok = match class {
        ReconClass::Naive => true,
        ReconClass::C1 => c.mode == EncodeMode::Sd1dCol,
        ReconClass::C2 => c.mode == EncodeMode::Sd2d,
        ReconClass::C3 => c.mode == EncodeMode::Sd1dCol && c.fine_tail,
    };
    if ok {
        Ok(())
    } else {
        Err(SdqError::InvalidArgument(format!(
            "class {class:?} cannot decode a {:?} container{}",
            c.mode,
            if class == ReconClass::C3 { " without a fine tail" } else { "" }
        )))
    }
}

struct Job {
    channel: usize,
    patch: usize,
    column: Option<usize>,
}

fn status_of(job: &Job, r: &DecodeResult) -> SolveStatus {
    SolveStatus {
        channel: job.channel,
        patch: job.patch,
        column: job.column,
        converged: r.converged,
        feasible: r.feasible,
        iterations: r.iterations,
        objective: r.objective,
        residual: r.primal_residual + r.dual_residual,
    }
}

pub fn reconstruct(container: &SdqContainer, opts: &ReconstructOptions) -> Result<Reconstruction> {
    check_compat(container, opts.class)?;
    let delta = container.alphabet.step();
    let r = container.order;
    let q: Vec<Vec<Array2<f64>>> = container
        .codes
        .iter()
        .map(|ch| ch.iter().map(|c| c.dequantize()).collect())
        .collect();
    let mut jobs = Vec::new();
    for (c, ch) in q.iter().enumerate() {
        for (p, patch) in ch.iter().enumerate() {
            match opts.class {
                ReconClass::Naive => {}
                ReconClass::C2 => jobs.push(Job {
                    channel: c,
                    patch: p,
                    column: None,
                }),
                ReconClass::C1 | ReconClass::C3 => jobs.extend((0..patch.ncols()).map(|j| Job {
                    channel: c,
                    patch: p,
                    column: Some(j),
                })),
            }
        }
    }
    let solved: Vec<Result<DecodeResult>> = jobs
        .par_iter()
        .map(|job| {
            let qp = &q[job.channel][job.patch];
            match (opts.class, job.column) {
                (ReconClass::C2, _) => {
                    decode_class2_orders(qp, opts.beta, r, delta, &opts.solver, opts.experimental)
                }
                (ReconClass::C1, Some(j)) => {
                    decode_class1_column(&qp.column(j).to_vec(), opts.beta, r, delta, &opts.solver)
                }
                (ReconClass::C3, Some(j)) => {
                    let code = &container.codes[job.channel][job.patch];
                    let fine = &code.fine_tail.as_ref().expect("checked above").alphabet;
                    decode_class3_column(&qp.column(j).to_vec(), fine, opts.beta, r, delta, &opts.solver)
                }
                _ => unreachable!(),
            }
        })
        .collect();

    let mut recon = q.clone();
    let mut status = Vec::with_capacity(jobs.len());
    for (job, res) in jobs.iter().zip(solved) {
        let res = res?;
        status.push(status_of(job, &res));
        let target = &mut recon[job.channel][job.patch];
        match job.column {
            None => *target = res.x_hat,
            Some(j) => target.column_mut(j).assign(&res.x_hat.column(0)),
        }
    }

    let tiles = container.layout.tiles(container.rows, container.cols);
    let mut channels = Vec::with_capacity(recon.len());
    for ch in recon {
        let patches: Vec<Patch> = ch
            .into_iter()
            .zip(&tiles)
            .map(|(data, &(row0, col0, _, _))| Patch { row0, col0, data })
            .collect();
        let mut x = stack(&patches, container.rows, container.cols, &container.layout)?;
        if opts.brighten {
            x = brighten(&x);
        }
        channels.push(x);
    }
    Ok(Reconstruction {
        image: Image { channels },
        status,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructReport {
    pub class: ReconClass,
    pub beta: usize,
    pub mode: EncodeMode,
    pub bits: u32,
    pub order: usize,
    pub brightened: bool,
    pub solves: usize,
    pub nonconverged: usize,
    pub infeasible: usize,
    pub max_iterations: usize,
    pub quality: Option<QualityReport>,
    pub status: Vec<SolveStatus>,
}

/// Channels side by side, so column-wise statistics stay within a channel.
pub fn side_by_side(img: &Image) -> Result<Array2<f64>> {
    let views: Vec<_> = img.channels.iter().map(|c| c.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| SdqError::InvalidArgument(e.to_string()))
}

/// Builds the JSON report. When the reconstruction was brightened the truth
/// is brightened too before comparison.
pub fn build_report(
    container: &SdqContainer,
    opts: &ReconstructOptions,
    recon: &Reconstruction,
    truth: Option<&Image>,
) -> Result<ReconstructReport> {
    let quality = match truth {
        Some(t) => {
            if t.channels.len() != recon.image.channels.len() || t.dim() != recon.image.dim() {
                return Err(SdqError::InvalidArgument(
                    "ground truth shape does not match the reconstruction".into(),
                ));
            }
            let t = if opts.brighten {
                Image {
                    channels: t.channels.iter().map(brighten).collect(),
                }
            } else {
                t.clone()
            };
            Some(QualityReport::compute(
                &side_by_side(&t)?,
                &side_by_side(&recon.image)?,
                1.0,
                &[1, 4, 16],
            )?)
        }
        None => None,
    };
    Ok(ReconstructReport {
        class: opts.class,
        beta: opts.beta,
        mode: container.mode,
        bits: container.alphabet.bit_depth(),
        order: container.order,
        brightened: opts.brighten,
        solves: recon.status.len(),
        nonconverged: recon.status.iter().filter(|s| !s.converged).count(),
        infeasible: recon.status.iter().filter(|s| !s.feasible).count(),
        max_iterations: recon.status.iter().map(|s| s.iterations).max().unwrap_or(0),
        quality,
        status: recon.status.clone(),
    })
}

impl ReconstructReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| SdqError::Format(e.to_string()))
    }
}
