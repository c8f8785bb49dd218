//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The default run uses the reduced GRF schedule (10k iterations). Set
//! `VANO_ACCEPTANCE_FULL=1` for the full 40k-iteration run plus the latent
//! size sweep.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use vano_core::data::{box_grid, sample_bumps, sample_grf, BumpsParams, Dataset, GRFParams};
use vano_core::diffcore::{Activation, Dense, LayerInit, Matrix, ParamStore, Purpose, RngStream, Tape};
use vano_core::metrics::{
    circular_stats, covariance_analytic, covariance_model_linear, gmmd, hs_error, CovarianceMatrix, KernelFamily,
};
use vano_core::model::{DecoderKind, LatentGaussian, Vano};
use vano_core::objective::{
    elbo_eval, elbo_loss, kl_gaussian, white_noise_loglik, ELBOConfig, Quadrature, QuadratureMode,
};
use vano_core::train::{TrainConfig, Trainer};

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} [{id}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn info(&self, id: &str, detail: String) {
        println!("INFO [{id}] {detail}");
    }
}

fn full_mode() -> bool {
    std::env::var("VANO_ACCEPTANCE_FULL").map(|v| v == "1").unwrap_or(false)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

struct GrfRun {
    data: Dataset,
    trainer: Trainer,
    hs: f64,
}

fn train_grf(latent_dim: usize, iterations: u64, seed: u64) -> GrfRun {
    let p = GRFParams::default();
    let data = sample_grf(&p, seed).unwrap();
    let cfg = TrainConfig {
        latent_dim,
        iterations,
        data_seed: seed,
        init_seed: seed,
        noise_seed: seed,
        ..TrainConfig::grf()
    };
    let mut trainer = Trainer::new(cfg, data.clone()).unwrap();
    trainer.run(|_, _| Ok(())).unwrap();
    let c = covariance_analytic(&p, &data.grid).unwrap();
    let c_hat = covariance_model_linear(&trainer.model.decoder, &trainer.store, &data.grid).unwrap();
    let hs = hs_error(&c, &c_hat).unwrap();
    GrfRun { data, trainer, hs }
}

fn criterion_1(r: &mut Report) -> GrfRun {
    let full = full_mode();
    let (iters, threshold) = if full { (40_000, 0.10) } else { (10_000, 0.25) };
    let t = Instant::now();
    let run = train_grf(64, iters, 0);
    r.check(
        "1",
        "GRF covariance recovery",
        run.hs <= threshold,
        format!(
            "n=64, {iters} iterations: HS error {:.5} (threshold {threshold}), {:.0}s",
            run.hs,
            t.elapsed().as_secs_f64()
        ),
    );
    let mean_sigma = {
        let test = sample_grf(&GRFParams { n_samples: 256, ..Default::default() }, 1000).unwrap();
        let posts = run.trainer.model.encoder.encode_batch(&run.trainer.store, &test.values).unwrap();
        let total: f64 = posts.iter().flat_map(|p| p.sigma()).sum();
        total / (posts.len() * run.trainer.model.latent_dim()) as f64
    };
    r.info("1", format!("mean posterior sigma on held-out GRF samples: {mean_sigma:.4}"));

    if full {
        let mut medians = Vec::new();
        for n in [4usize, 16, 64] {
            let errs: Vec<f64> = (0..3u64)
                .map(|s| if n == 64 && s == 0 { run.hs } else { train_grf(n, iters, s).hs })
                .collect();
            r.info("1", format!("n={n}: HS errors {errs:.5?}"));
            medians.push(median(errs));
        }
        let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
        r.check(
            "1",
            "GRF error non-increasing in latent size",
            monotone,
            format!("median HS error for n = 4, 16, 64: {medians:.5?}"),
        );
    } else {
        r.info("1", "latent size sweep skipped (set VANO_ACCEPTANCE_FULL=1)".into());
    }
    run
}

fn bumps_config(kind: DecoderKind, seed: u64) -> TrainConfig {
    // The preset's decay profile, compressed from 20k to 3000 steps.
    let mut cfg = TrainConfig {
        iterations: 3000,
        decay_every: 150,
        points_per_step: 64,
        data_seed: seed,
        init_seed: seed,
        noise_seed: seed,
        ..TrainConfig::bumps()
    };
    if kind == DecoderKind::Linear {
        cfg.decoder = DecoderKind::Linear;
        cfg.output_activation = Activation::Identity;
        cfg.points_per_step = 0;
    }
    cfg
}

/// Prior samples of a trained bumps model on the training grid.
fn bumps_samples(kind: DecoderKind, seed: u64, train: &Dataset) -> Matrix {
    let mut t = Trainer::new(bumps_config(kind, seed), train.clone()).unwrap();
    t.run(|_, _| Ok(())).unwrap();
    let mut rng = RngStream::new(seed, Purpose::Sampling, 0);
    let z = t.model.prior().sample_matrix(512, &mut rng);
    t.model.decoder.decode_many(&t.store, &z, &train.grid).unwrap()
}

fn criterion_2(r: &mut Report) {
    let fam = KernelFamily::default();
    for seed in 0..3u64 {
        let t = Instant::now();
        let train = sample_bumps(&BumpsParams::default(), seed).unwrap();
        let test = sample_bumps(&BumpsParams { n_samples: 512, ..Default::default() }, seed + 1000).unwrap();
        let q = test.quadrature(QuadratureMode::Weighted).unwrap();
        let nonlinear = bumps_samples(DecoderKind::Concat, seed, &train);
        let linear = bumps_samples(DecoderKind::Linear, seed, &train);
        let g_nl = gmmd(&nonlinear, &test.values, &fam, &q).unwrap();
        let g_lin = gmmd(&linear, &test.values, &fam, &q).unwrap();
        r.check(
            "2",
            &format!("nonlinear vs linear decoder gap, seed {seed}"),
            g_nl.value < 0.5 * g_lin.value,
            format!(
                "GMMD nonlinear {:.4} vs linear {:.4} (ratio {:.3}, need < 0.5), {:.0}s",
                g_nl.value,
                g_lin.value,
                g_nl.value / g_lin.value,
                t.elapsed().as_secs_f64()
            ),
        );
        if seed == 0 {
            let fine = KernelFamily { grid_size: 128, ..fam };
            let g_fine = gmmd(&nonlinear, &test.values, &fine, &q).unwrap();
            let rel = (g_fine.value - g_nl.value).abs() / g_nl.value;
            r.check(
                "2",
                "GMMD stable under a finer bandwidth grid",
                rel <= 0.01,
                format!("64 vs 128 bandwidths: {:.6} vs {:.6} ({:.3}%)", g_nl.value, g_fine.value, 100.0 * rel),
            );
        }
    }
}

fn criterion_3(r: &mut Report) {
    let mut rng = RngStream::new(3, Purpose::Data, 0);
    let mut worst: f64 = 0.0;
    let mut worst_literal: f64 = 0.0;
    for _ in 0..1000 {
        let m = 2 + rng.below(200);
        let mut pts: Vec<f64> = (0..m).map(|_| rng.uniform()).collect();
        pts.sort_by(f64::total_cmp);
        let w: Vec<f64> = (0..m).map(|_| 0.1 + rng.uniform()).collect();
        let q = Quadrature::new(pts, 1, w).unwrap();
        let d = rng.normals(m);
        let u = rng.normals(m);
        let diff: Vec<f64> = d.iter().zip(&u).map(|(a, b)| a - b).collect();
        let ll = white_noise_loglik(&d, &u, &q).unwrap();
        let half_u = 0.5 * q.norm_sq(&u).unwrap();
        let half_diff = 0.5 * q.norm_sq(&diff).unwrap();
        worst = worst.max((ll - half_u + half_diff).abs());
        worst_literal = worst_literal.max((ll + half_u + half_diff).abs());
    }
    r.check(
        "3",
        "Cameron-Martin identity",
        worst <= 1e-10,
        format!("max |loglik(d,u) - ½‖u‖² + ½‖d-u‖²| = {worst:.2e} over 1000 pairs"),
    );
    r.info(
        "3",
        format!("with +½‖u‖² instead the residual is ‖u‖², max {worst_literal:.3}; that sign cannot hold"),
    );
}

fn criterion_4(r: &mut Report) {
    let mut rng = RngStream::new(4, Purpose::Data, 0);
    let draws = 100_000;
    let mut outside = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = 1 + rng.below(16);
        let mu: Vec<f64> = rng.normals(n).iter().map(|v| 0.8 * v).collect();
        let ls: Vec<f64> = rng.normals(n).iter().map(|v| 0.4 * v).collect();
        let closed = kl_gaussian(&LatentGaussian { mu: mu.clone(), log_sigma: ls.clone() });
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let mut lr = 0.0;
            for j in 0..n {
                let e = rng.normal();
                let z = mu[j] + ls[j].exp() * e;
                lr += -ls[j] - 0.5 * e * e + 0.5 * z * z;
            }
            sum += lr;
            sum_sq += lr * lr;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq - draws as f64 * mean * mean) / (draws - 1) as f64;
        let z = (closed - mean).abs() / (var / draws as f64).sqrt();
        worst = worst.max(z);
        if z > 3.0 {
            outside.push(k);
        }
    }
    r.check(
        "4",
        "KL closed form vs Monte Carlo",
        outside.is_empty(),
        format!("100 posteriors, 1e5 draws each: largest deviation {worst:.2} standard errors; beyond 3: {outside:?}"),
    );
    let zero = kl_gaussian(&LatentGaussian { mu: vec![0.0; 16], log_sigma: vec![0.0; 16] });
    r.check("4", "KL of the prior itself", zero == 0.0, format!("{zero}"));
}

fn rel_err(fd: f64, an: f64, floor: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(floor)
}

fn elbo_fd_error(kind: DecoderKind, norm_rescale: bool) -> f64 {
    let m = 6;
    let cfg = TrainConfig {
        latent_dim: 2,
        decoder: kind,
        decoder_hidden: vec![2, 2],
        encoder_hidden: vec![2, 2],
        periodic_harmonics: 2,
        ..TrainConfig::grf()
    };
    let mut store = ParamStore::new();
    let model = Vano::new(&mut store, cfg.model_config(m, 1).unwrap(), &cfg.model_init()).unwrap();
    // The preset zero-initializes output layers; perturb so every path carries gradient.
    let mut prng = RngStream::new(5, Purpose::Init, 0);
    let noise = prng.normals(store.len());
    store.values_mut().iter_mut().zip(noise).for_each(|(v, e)| *v += 0.3 * e);
    let grid: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
    let q = Quadrature::uniform(grid.clone(), 1, 1.0, QuadratureMode::Weighted).unwrap();
    let u = Matrix::from_vec(2, m, grid.iter().flat_map(|x| [x.sin() + 0.3, (3.0 * x).cos()]).collect()).unwrap();
    let elbo = ELBOConfig { beta: 0.7, mc_samples: 2, norm_rescale, ..ELBOConfig::default() };
    let rng = RngStream::new(11, Purpose::LatentNoise, 0);
    let loss_at = |store: &mut ParamStore| elbo_loss(&model, store, &u, &u, &q, &elbo, &mut rng.clone()).unwrap().total;
    loss_at(&mut store);
    let analytic = store.grads().to_vec();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..store.len() {
        let orig = store.values()[k];
        store.values_mut()[k] = orig + h;
        let lp = loss_at(&mut store);
        store.values_mut()[k] = orig - h;
        let lm = loss_at(&mut store);
        store.values_mut()[k] = orig;
        worst = worst.max(rel_err((lp - lm) / (2.0 * h), analytic[k], 1e-3));
    }
    worst
}

fn layer_fd_error(act: Activation) -> f64 {
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "layer", 3, 2, act, &LayerInit::new(9)).unwrap();
    let mut prng = RngStream::new(9, Purpose::Init, 1);
    let noise = prng.normals(store.len());
    store.values_mut().iter_mut().zip(noise).for_each(|(v, e)| *v += 0.5 * e);
    let x = Matrix::from_vec(4, 3, prng.normals(12)).unwrap();
    let c = Matrix::from_vec(4, 2, prng.normals(8)).unwrap();
    let build = |tape: &mut Tape, store: &ParamStore| {
        let xv = tape.constant(x.clone());
        let y = layer.forward(tape, store, xv).unwrap();
        let cv = tape.constant(c.clone());
        let p = tape.mul(y, cv).unwrap();
        tape.sum(p)
    };
    let mut tape = Tape::new();
    let loss = build(&mut tape, &store);
    tape.backward(loss, &mut store).unwrap();
    let analytic = store.grads().to_vec();
    let value = |store: &ParamStore| {
        let mut t = Tape::new();
        let l = build(&mut t, store);
        t.scalar(l).unwrap()
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..store.len() {
        let orig = store.values()[k];
        store.values_mut()[k] = orig + h;
        let lp = value(&store);
        store.values_mut()[k] = orig - h;
        let lm = value(&store);
        store.values_mut()[k] = orig;
        worst = worst.max(rel_err((lp - lm) / (2.0 * h), analytic[k], 1e-4));
    }
    worst
}

fn criterion_5(r: &mut Report) {
    for kind in [DecoderKind::Linear, DecoderKind::Concat, DecoderKind::SplitConcat] {
        for rescale in [false, true] {
            let e = elbo_fd_error(kind, rescale);
            r.check(
                "5",
                &format!("ELBO gradients, {kind:?} decoder, rescale {rescale}"),
                e <= 1e-4,
                format!("max relative error {e:.2e}"),
            );
        }
    }
    for act in [Activation::Identity, Activation::Gelu, Activation::Tanh, Activation::Softplus, Activation::Sigmoid] {
        let e = layer_fd_error(act);
        r.check("5", &format!("dense layer gradients, {act}"), e <= 1e-5, format!("max relative error {e:.2e}"));
    }
}

fn criterion_6(r: &mut Report, run: &GrfRun) {
    let take = 256;
    let coarse = sample_grf(&GRFParams { m: 64, n_samples: take, ..Default::default() }, 0).unwrap();
    let idx: Vec<usize> = (0..take).collect();
    let fine = run.data.select(&idx).unwrap();
    let recon = |targets: &Dataset, mode: QuadratureMode| {
        let q = targets.quadrature(mode).unwrap();
        let cfg = ELBOConfig { mc_samples: 4, quadrature_mode: mode, ..ELBOConfig::default() };
        let mut rng = RngStream::new(6, Purpose::LatentNoise, 0);
        elbo_eval(&run.trainer.model, &run.trainer.store, &fine.values, &targets.values, &q, &cfg, &mut rng, 64)
            .unwrap()
            .recon
    };
    let (w64, w128) = (recon(&coarse, QuadratureMode::Weighted), recon(&fine, QuadratureMode::Weighted));
    let (r64, r128) = (recon(&coarse, QuadratureMode::RawSum), recon(&fine, QuadratureMode::RawSum));
    let wdiff = (w64 - w128).abs() / w128.abs();
    r.check(
        "6",
        "weighted reconstruction term is resolution independent",
        wdiff <= 0.02,
        format!("64 vs 128 points: {w64:.6e} vs {w128:.6e} ({:.2}%)", 100.0 * wdiff),
    );
    let ratio = r128 / r64;
    r.check(
        "6",
        "raw-sum reconstruction term scales with point count",
        (1.8..=2.2).contains(&ratio),
        format!("128/64 ratio {ratio:.4}"),
    );
}

fn sample_cli(ck: &Path, resolution: usize, out: &Path) -> Dataset {
    let o = Command::new(env!("CARGO_BIN_EXE_vano"))
        .args(["sample", ck.to_str().unwrap(), "--count", "16", "--seed", "7", "--out", out.to_str().unwrap()])
        .args(["--resolution", &resolution.to_string()])
        .output()
        .unwrap();
    assert!(o.status.success(), "sample failed: {}", String::from_utf8_lossy(&o.stderr));
    Dataset::load(out).unwrap()
}

fn criterion_7(r: &mut Report, run: &GrfRun) {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("grf.ckpt");
    run.trainer.checkpoint().save(&ck).unwrap();
    let m = run.data.grid_size();
    // 4(m − 1) + 1 points, so every training node is also a node of the fine grid.
    let res = 4 * (m - 1) + 1;
    let fine = sample_cli(&ck, res, &dir.path().join("fine.fds"));
    let mut rng = RngStream::new(7, Purpose::Sampling, 0);
    let z = run.trainer.model.prior().sample_matrix(16, &mut rng);
    let direct = run.trainer.model.decoder.decode_many(&run.trainer.store, &z, &run.data.grid).unwrap();
    let grid_nested = (0..m).all(|i| fine.grid[4 * i] == run.data.grid[i]);
    let mut worst: f64 = 0.0;
    for s in 0..16 {
        for i in 0..m {
            worst = worst.max((fine.values.get(s, 4 * i) - direct.get(s, i)).abs());
        }
    }
    r.check(
        "7",
        "super-resolution restricts to training-grid decoding",
        grid_nested && worst <= 1e-12,
        format!("{res}-point samples vs direct {m}-point decoding: max difference {worst:.2e}"),
    );
    let x512 = sample_cli(&ck, 4 * m, &dir.path().join("x4.fds"));
    let boundary_zero = (0..x512.len()).all(|s| {
        let u = x512.sample(s);
        u[0] == 0.0 && u[u.len() - 1] == 0.0
    });
    r.check("7", "boundary values exactly zero at 4x resolution", boundary_zero, format!("{} points", 4 * m));
}

fn cov(c: Matrix) -> CovarianceMatrix {
    CovarianceMatrix { c }
}

fn criterion_8(r: &mut Report) {
    let mut rng = RngStream::new(8, Purpose::Data, 0);
    let a = Matrix::from_vec(6, 6, rng.normals(36)).unwrap();
    let c = cov(vano_core::diffcore::matrix::matmul_nt(&a, &a).unwrap());
    let same = hs_error(&c, &c).unwrap();
    let zero = hs_error(&c, &cov(Matrix::zeros(6, 6))).unwrap();
    r.check("8", "HS error analytic cases", same == 0.0 && zero == 1.0, format!("hs(C,C) = {same}, hs(C,0) = {zero}"));

    let x = Matrix::from_vec(20, 10, rng.normals(200)).unwrap();
    let q = Quadrature::uniform(box_grid(&[(0.0, 1.0)], 10).unwrap(), 1, 1.0, QuadratureMode::Weighted).unwrap();
    let g = gmmd(&x, &x, &KernelFamily::default(), &q).unwrap().value;
    r.check("8", "GMMD of a set with itself", g.abs() <= 1e-10, format!("{g:.2e}"));

    let opposite = circular_stats(&[0.0, std::f64::consts::PI]).unwrap().variance;
    let constant = circular_stats(&[1.3; 5]).unwrap().variance;
    r.check(
        "8",
        "circular variance analytic cases",
        opposite == 1.0 && constant == 0.0,
        format!("{{0, pi}} -> {opposite}, constant -> {constant}"),
    );
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_8(&mut r);
    let grf = criterion_1(&mut r);
    criterion_6(&mut r, &grf);
    criterion_7(&mut r, &grf);
    criterion_2(&mut r);
    if r.failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} check(s) failed", r.failed);
        ExitCode::FAILURE
    }
}
