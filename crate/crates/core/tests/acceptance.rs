//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line with
//! the measured numbers and then asserts. The tests take a shared lock so
//! the reported runtimes are not inflated by each other on small machines.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use common::lp::{class1_lp, class2_lp, class3_lp};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdq_core::alphabet::{
    default_margin_1d, make_fine_boundary_alphabet, make_optimal_2d_alphabet, make_uniform_alphabet,
};
use sdq_core::decoder::{decode_class1_column, decode_class2, decode_class3_column, SolverConfig};
use sdq_core::encoder::{encode_sd1d, encode_sd2d, EncoderConfig};
use sdq_core::grid_ops::DiffOperator;
use sdq_core::pipeline::experiments::{
    fig1_spectrum, fig2_rho, lowlight, thm1_scaling, thm3_scaling, thm5_separation, LowLightParams,
    SpectrumParams, Table, Thm1Params, Thm3Params, Thm5Params,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, elapsed: Duration, budget: Option<Duration>, detail: &str) {
    let within = budget.is_none_or(|b| elapsed <= b);
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    let limit = budget.map_or(String::new(), |b| format!(", budget {}s", b.as_secs()));
    // Written to the real stdout so the line shows even when output is captured.
    let line = format!(
        "criterion {n}: {verdict} ({detail}; runtime {:.1}s{limit})\n",
        elapsed.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(within, "criterion {n} exceeded its runtime budget");
}

struct Timed {
    table: Table,
    elapsed: Duration,
}

fn timed(f: impl FnOnce() -> Table) -> Timed {
    let t0 = Instant::now();
    let table = f();
    Timed {
        table,
        elapsed: t0.elapsed(),
    }
}

fn thm1() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| {
        timed(|| {
            thm1_scaling(&Thm1Params {
                cells: vec![(256, 3), (512, 3), (1024, 3), (512, 4), (512, 5)],
                s: 5,
                seeds: 20,
                seed: 2024,
                solver: SolverConfig::default(),
            })
            .expect("thm1 run")
        })
    })
}

fn thm3() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| {
        timed(|| {
            thm3_scaling(&Thm3Params {
                seeds: 4,
                seed: 2024,
                ..Default::default()
            })
            .expect("thm3 run")
        })
    })
}

fn thm5() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| {
        timed(|| {
            thm5_separation(&Thm5Params {
                seeds: 3,
                seed: 2024,
                ..Default::default()
            })
            .expect("thm5 run")
        })
    })
}

/// Mean of `value` grouped by the tuple of `keys`.
fn group_mean(t: &Table, keys: &[&str], value: &str) -> BTreeMap<Vec<u64>, f64> {
    let cols: Vec<Vec<f64>> = keys.iter().map(|k| t.column(k).unwrap()).collect();
    let vals = t.column(value).unwrap();
    let mut acc: BTreeMap<Vec<u64>, (f64, usize)> = BTreeMap::new();
    for i in 0..vals.len() {
        let key = cols.iter().map(|c| c[i].to_bits()).collect();
        let e = acc.entry(key).or_insert((0.0, 0));
        e.0 += vals[i];
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn criterion_01_two_dimensional_stability() {
    let _g = serial();
    let t0 = Instant::now();
    let alpha = make_optimal_2d_alphabet(0.0, 1.0, 3).unwrap();
    let c = alpha.stability_constant_2d().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for _ in 0..1000 {
        let y = Array2::from_shape_fn((64, 64), |_| rng.gen_range(0.0..=1.0));
        match encode_sd2d(&y, &alpha, 1, &EncoderConfig::default()) {
            Ok((_, state)) => worst = worst.max(state.max_abs),
            Err(_) => errors += 1,
        }
    }
    let pass = (c - 0.1).abs() < 1e-15 && errors == 0 && worst <= 0.1 + 1e-12;
    report(
        1,
        pass,
        t0.elapsed(),
        Some(Duration::from_secs(10)),
        &format!("C = {c}, max |u| = {worst:.15} over 1000 images, {errors} encoder errors"),
    );
}

#[test]
fn criterion_02_defining_relations() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_1d = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(8..=512);
        let r = rng.gen_range(1..=3);
        let bits = rng.gen_range(3..=6);
        let alpha = make_uniform_alphabet(0.0, 1.0, bits, default_margin_1d(r)).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let (code, state) = encode_sd1d(&y, &alpha, r, None, &EncoderConfig::default()).unwrap();
        let q = code.dequantize();
        let u: Vec<f64> = state.u.column(0).to_vec();
        let du = DiffOperator::forward(n, r).apply(&u).unwrap();
        for i in 0..n {
            worst_1d = worst_1d.max((du[i] - (y[i] - q[[i, 0]])).abs());
        }
    }
    let mut worst_2d = 0.0f64;
    for _ in 0..200 {
        let rows = rng.gen_range(4..=64);
        let cols = rng.gen_range(4..=64);
        let bits = rng.gen_range(2..=6);
        let alpha = make_optimal_2d_alphabet(0.0, 1.0, bits).unwrap();
        let y = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(0.0..=1.0));
        let (code, state) = encode_sd2d(&y, &alpha, 1, &EncoderConfig::default()).unwrap();
        let q = code.dequantize();
        let mut dud = state.u.clone();
        DiffOperator::forward(rows, 1).apply_left(&mut dud).unwrap();
        DiffOperator::forward(cols, 1).apply_right_transposed(&mut dud).unwrap();
        let diff = &dud - &(&y - &q);
        worst_2d = worst_2d.max(diff.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let pass = worst_1d <= 1e-12 && worst_2d <= 1e-12;
    report(
        2,
        pass,
        t0.elapsed(),
        Some(Duration::from_secs(5)),
        &format!("1D max residual {worst_1d:.2e}, 2D max residual {worst_2d:.2e}"),
    );
}

#[test]
fn criterion_03_class1_error_scaling() {
    let _g = serial();
    let run = thm1();
    let t = &run.table;
    let delta = 1.0 / 7.0;
    let bound = (8.0f64).sqrt() * (5.0f64).sqrt() * delta;
    let ns = [256.0, 512.0, 1024.0];
    let err = group_mean(t, &["N", "delta"], "l2_error");
    let msq = group_mean(t, &["N", "delta"], "msq_l2_error");
    let d = t.column("delta").unwrap();
    let l2 = t.column("l2_error").unwrap();
    let max_err = d
        .iter()
        .zip(&l2)
        .filter(|(x, _)| (**x - delta).abs() < 1e-12)
        .map(|(_, e)| *e)
        .fold(0.0, f64::max);
    let means: Vec<f64> = ns.iter().map(|n| err[&key(&[*n, delta])]).collect();
    let msq_means: Vec<f64> = ns.iter().map(|n| msq[&key(&[*n, delta])]).collect();
    let spread = means.iter().cloned().fold(0.0, f64::max) / means.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let growth: Vec<f64> = msq_means.windows(2).map(|w| w[1] / w[0]).collect();
    let sqrt2 = 2f64.sqrt();
    let growth_ok = growth.iter().all(|g| (g / sqrt2 - 1.0).abs() <= 0.15);
    let pass = max_err <= bound && spread < 0.2 && growth_ok;
    report(
        3,
        pass,
        run.elapsed,
        Some(Duration::from_secs(300)),
        &format!(
            "max l2 error {max_err:.4} <= bound {bound:.4}; mean error by N {means:.4?} (spread {:.1}%); MSQ growth per doubling {growth:.3?} vs sqrt(2)",
            spread * 100.0
        ),
    );
}

#[test]
fn criterion_04_delta_linearity() {
    let _g = serial();
    let run = thm1();
    let err = group_mean(&run.table, &["N", "delta"], "l2_error");
    let deltas = [1.0 / 7.0, 1.0 / 15.0, 1.0 / 31.0];
    let means: Vec<f64> = deltas.iter().map(|d| err[&key(&[512.0, *d])]).collect();
    let ratios: Vec<f64> = means.windows(2).map(|w| w[1] / w[0]).collect();
    let pass = ratios.iter().all(|r| (0.35..=0.65).contains(r));
    report(
        4,
        pass,
        run.elapsed,
        Some(Duration::from_secs(300)),
        &format!("N = 512, mean error for d = 3, 4, 5: {means:.4?}; step ratios {ratios:.3?} in [0.35, 0.65]"),
    );
}

#[test]
fn criterion_05_class2_error_scaling() {
    let _g = serial();
    let run = thm3();
    let cells = group_mean(&run.table, &["s", "delta"], "ratio");
    let grand = cells.values().sum::<f64>() / cells.len() as f64;
    let worst = cells
        .values()
        .map(|v| (v / grand - 1.0).abs())
        .fold(0.0, f64::max);
    let listing: Vec<String> = cells
        .iter()
        .map(|(k, v)| format!("s={} d=1/{:.0}: {v:.3}", f64::from_bits(k[0]), 1.0 / f64::from_bits(k[1])))
        .collect();
    let pass = cells.len() == 9 && worst <= 0.3;
    report(
        5,
        pass,
        run.elapsed,
        Some(Duration::from_secs(600)),
        &format!(
            "error/(sqrt(s) delta) by cell [{}]; grand mean {grand:.3}, worst deviation {:.0}% (limit 30%)",
            listing.join(", "),
            worst * 100.0
        ),
    );
}

#[test]
fn criterion_06_lowpass_decay_and_snr_gain() {
    let _g = serial();
    let run = thm5();
    let t = &run.table;
    let lp = group_mean(t, &["N", "r"], "lowpass_error");
    let snr = group_mean(t, &["r"], "snr_db");
    let decay: Vec<f64> = [256.0, 512.0, 1024.0]
        .windows(2)
        .map(|w| lp[&key(&[w[0], 3.0])] / lp[&key(&[w[1], 3.0])])
        .collect();
    let snr3 = snr[&key(&[3.0])];
    let snr1 = snr[&key(&[1.0])];
    let pass = decay.iter().all(|d| *d >= 4.0) && snr3 - snr1 >= 5.0;
    report(
        6,
        pass,
        run.elapsed,
        Some(Duration::from_secs(600)),
        &format!(
            "||P_16 error||_inf shrink per doubling {decay:.2?} (need >= 4); mean SNR r=3 class 3 {snr3:.2} dB vs r=1 class 1 {snr1:.2} dB"
        ),
    );
}

fn integrate(u: &mut [f64], r: usize) {
    for _ in 0..r {
        for i in 1..u.len() {
            u[i] += u[i - 1];
        }
    }
}

#[test]
fn criterion_07_solver_matches_lp_oracle() {
    let _g = serial();
    let t0 = Instant::now();
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_gap = 0.0f64;
    let mut worst_slack = 0.0f64;
    let mut count = 0;
    let random_column = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut level = rng.gen_range(0.0..1.0);
        (0..n)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    level = rng.gen_range(0.0..1.0);
                }
                level
            })
            .collect()
    };
    for trial in 0..20 {
        let n = rng.gen_range(4..=8);
        let r = 1 + trial % 3;
        let beta = 1 + (trial / 3) % r.min(2);
        let alpha = make_uniform_alphabet(0.0, 1.0, 4, default_margin_1d(r)).unwrap();
        let x = random_column(n, &mut rng);
        let (code, _) = encode_sd1d(&x, &alpha, r, None, &EncoderConfig::default()).unwrap();
        let q: Vec<f64> = code.dequantize().iter().copied().collect();
        let res = decode_class1_column(&q, beta, r, alpha.step(), &cfg).unwrap();
        worst_gap = worst_gap.max((res.objective - class1_lp(&q, beta, r, alpha.step())).abs());
        let mut u: Vec<f64> = res.x_hat.iter().zip(&q).map(|(a, b)| a - b).collect();
        integrate(&mut u, r);
        worst_slack = worst_slack.max(u.iter().map(|v| v.abs() - alpha.step() / 2.0).fold(0.0, f64::max));
        count += 1;
    }
    for trial in 0..20 {
        let n = rng.gen_range(4..=8);
        let r = 1 + trial % 2;
        let beta = 1 + (trial / 2) % r;
        let alpha = make_uniform_alphabet(0.0, 1.0, 4, default_margin_1d(r)).unwrap();
        let fine = make_fine_boundary_alphabet(&alpha, n, r).unwrap();
        let x = random_column(n, &mut rng);
        let (code, _) = encode_sd1d(&x, &alpha, r, Some(&fine), &EncoderConfig::default()).unwrap();
        let q: Vec<f64> = code.dequantize().iter().copied().collect();
        let res = decode_class3_column(&q, &fine, beta, r, alpha.step(), &cfg).unwrap();
        let bb = fine.boundary_bound();
        worst_gap = worst_gap.max((res.objective - class3_lp(&q, beta, r, alpha.step(), bb)).abs());
        let mut u: Vec<f64> = res.x_hat.iter().zip(&q).map(|(a, b)| a - b).collect();
        integrate(&mut u, r);
        for (i, v) in u.iter().enumerate() {
            let b = if i + r >= n { bb } else { alpha.step() / 2.0 };
            worst_slack = worst_slack.max(v.abs() - b);
        }
        count += 1;
    }
    let alpha = make_optimal_2d_alphabet(0.0, 1.0, 3).unwrap();
    for _ in 0..12 {
        let rows = rng.gen_range(3..=4);
        let cols = rng.gen_range(3..=5);
        let img = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(0.0..1.0));
        let (code, _) = encode_sd2d(&img, &alpha, 1, &EncoderConfig::default()).unwrap();
        let q = code.dequantize();
        let res = decode_class2(&q, alpha.step(), &cfg).unwrap();
        let flat: Vec<f64> = q.iter().copied().collect();
        worst_gap = worst_gap.max((res.objective - class2_lp(&flat, rows, cols, alpha.step())).abs());
        let mut u = &res.x_hat - &q;
        for i in 1..rows {
            for j in 0..cols {
                u[[i, j]] += u[[i - 1, j]];
            }
        }
        for i in 0..rows {
            for j in 1..cols {
                u[[i, j]] += u[[i, j - 1]];
            }
        }
        worst_slack = worst_slack.max(u.iter().map(|v| v.abs() - alpha.step() / 2.0).fold(0.0, f64::max));
        count += 1;
    }
    let pass = count >= 50 && worst_gap <= 1e-6 && worst_slack <= 1e-6;
    report(
        7,
        pass,
        t0.elapsed(),
        Some(Duration::from_secs(120)),
        &format!("{count} instances, max |objective - LP| = {worst_gap:.2e}, max constraint violation {worst_slack:.2e}"),
    );
}

#[test]
fn criterion_08_noise_shaping() {
    let _g = serial();
    let t0 = Instant::now();
    let rho = fig2_rho(200, 99);
    let monotone = (1..=3).all(|r| {
        let c = rho.column(&format!("rho_{r}")).unwrap();
        c.windows(2).all(|w| w[1] > w[0])
    });
    let spec = fig1_spectrum(&SpectrumParams {
        n: 1024,
        bits: 4,
        orders: vec![1, 2, 3],
        trials: 100,
        seed: 8,
    })
    .unwrap();
    let below = spec.mean_sd_fraction.iter().all(|f| *f < spec.mean_msq_fraction);
    report(
        8,
        monotone && below,
        t0.elapsed(),
        Some(Duration::from_secs(30)),
        &format!(
            "rho_1..3 strictly increasing on w = 1..99: {monotone}; low-band energy fraction MSQ {:.4} vs sigma-delta r=1,2,3 {:.3?}",
            spec.mean_msq_fraction, spec.mean_sd_fraction
        ),
    );
}

fn sandwich_violations(t: &Table) -> (usize, usize, f64) {
    let obj = t.column("objective").unwrap();
    let truth = t.column("objective_true").unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut bad = 0;
    for (o, tr) in obj.iter().zip(&truth) {
        let excess = o - (tr * (1.0 + 1e-5) + 1e-5);
        worst = worst.max(excess);
        if excess > 0.0 {
            bad += 1;
        }
    }
    (bad, obj.len(), worst)
}

#[test]
fn criterion_09_optimality_sandwich() {
    let _g = serial();
    let t0 = Instant::now();
    let mut total = 0;
    let mut bad = 0;
    let mut worst = f64::NEG_INFINITY;
    for run in [thm1(), thm3(), thm5()] {
        let (b, n, w) = sandwich_violations(&run.table);
        bad += b;
        total += n;
        worst = worst.max(w);
    }
    report(
        9,
        bad == 0,
        t0.elapsed(),
        None,
        &format!(
            "{bad} of {total} decoded instances exceed objective(x_true)(1 + 1e-5) + 1e-5; largest excess {worst:.2e}"
        ),
    );
}

#[test]
fn criterion_10_end_to_end_images() {
    let _g = serial();
    let t0 = Instant::now();
    let t = lowlight(&LowLightParams {
        seed: 10,
        ..Default::default()
    })
    .unwrap();
    let get = |method: &str, scale: f64, col: &str| -> f64 {
        let k = t.header.iter().position(|h| h == col).unwrap();
        let row = t
            .rows
            .iter()
            .find(|r| r[0] == method && (r[1].parse::<f64>().unwrap() - scale).abs() < 1e-12)
            .unwrap();
        row[k].parse().unwrap()
    };
    let msq = get("msq", 1.0, "psnr_db");
    let c1 = get("sd1d_c1", 1.0, "psnr_db");
    let c2 = get("sd2d_c2", 1.0, "psnr_db");
    let low_msq = get("msq", 0.1, "psnr_brightened_db");
    let low_sd = get("sd2d_c2", 0.1, "psnr_brightened_db");
    let pass = c1 >= msq + 3.0 && c2 >= msq + 3.0 && low_sd > low_msq;
    report(
        10,
        pass,
        t0.elapsed(),
        Some(Duration::from_secs(300)),
        &format!(
            "128x128 cartoon d=3 PSNR: MSQ {msq:.2}, class 1 {c1:.2}, class 2 {c2:.2} dB; low light d=4 brightened PSNR: sigma-delta {low_sd:.2} vs MSQ {low_msq:.2} dB"
        ),
    );
}
