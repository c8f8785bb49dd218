use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use vano_core::data::{
    box_grid, sample_bumps, sample_grf, split_indices, train_test_split, unit_grid, BumpsParams, Dataset,
    GRFParams, DATASET_MAGIC,
};
use vano_core::diffcore::checkpoint::CHECKPOINT_MAGIC;
use vano_core::diffcore::{Checkpoint, Matrix, ParamStore, Purpose, RngStream};
use vano_core::metrics::{
    circular_stats, covariance_analytic, covariance_model_linear, empirical_covariance, gmmd, hs_error, mmd,
    CovarianceMatrix, KernelFamily,
};
use vano_core::model::Vano;
use vano_core::objective::QuadratureMode;
use vano_core::train::{checkpoint_extents, checkpoint_step, StepRecord, TrainConfig, Trainer};

use crate::{
    CliError, CliResult, EvalArgs, GenData, Metric, Preset, QuadratureArg, ReconstructArgs, SampleArgs, SplitArgs,
    TrainArgs,
};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

const CONFIG_FILE: &str = "config.txt";
const VERSION_FILE: &str = "VERSION";
const LOG_FILE: &str = "train_log.csv";
const FINAL_CKPT: &str = "final.ckpt";
const LAST_GOOD_CKPT: &str = "last_good.ckpt";
const METRICS_HEADER: &str = "metric,value,aux,dataset_a,dataset_b,seed";

pub fn metrics_header() -> &'static str {
    METRICS_HEADER
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Core errors from file access are re-labelled with the path.
fn with_path<T>(r: vano_core::Result<T>, path: &Path) -> CliResult<T> {
    r.map_err(|e| match e {
        vano_core::Error::Io(source) => CliError::Io {
            context: path.display().to_string(),
            source,
        },
        vano_core::Error::Format { offset, message } => CliError::Core(vano_core::Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        }),
        other => CliError::Core(other),
    })
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    with_path(Dataset::load(path), path)
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    with_path(Checkpoint::load(path), path)
}

fn save_data(ds: &Dataset, path: &Path) -> CliResult<()> {
    with_path(ds.save(path), path)
}

/// Writes through a temporary file so a crash never leaves a torn checkpoint.
fn save_checkpoint(ck: &Checkpoint, path: &Path) -> CliResult<()> {
    let tmp = path.with_extension("ckpt.tmp");
    with_path(ck.save(&tmp), &tmp)?;
    fs::rename(&tmp, path).map_err(io_err(path.display().to_string()))
}

enum FileKind {
    Dataset,
    Checkpoint,
}

fn sniff(path: &Path) -> CliResult<FileKind> {
    let mut magic = [0u8; 8];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map_err(io_err(path.display().to_string()))?;
    if &magic == DATASET_MAGIC {
        Ok(FileKind::Dataset)
    } else if &magic == CHECKPOINT_MAGIC {
        Ok(FileKind::Checkpoint)
    } else {
        Err(CliError::Core(vano_core::Error::Format {
            offset: 0,
            message: format!("{}: neither a dataset nor a checkpoint", path.display()),
        }))
    }
}

pub(crate) fn gen_data(g: GenData) -> CliResult<()> {
    let (ds, out) = match g {
        GenData::Grf {
            alpha,
            tau,
            n,
            m,
            n_eig,
            seed,
            out,
        } => {
            let p = GRFParams {
                alpha,
                tau,
                n_eig,
                m,
                n_samples: n,
            };
            let out = out.unwrap_or_else(|| PathBuf::from(format!("grf_seed{seed}.fds")));
            (sample_grf(&p, seed)?, out)
        }
        GenData::Bumps {
            n,
            side,
            seed,
            standard_normalization,
            out,
        } => {
            let p = BumpsParams {
                n_samples: n,
                side,
                standard_normalization,
            };
            let out = out.unwrap_or_else(|| PathBuf::from(format!("bumps_seed{seed}.fds")));
            (sample_bumps(&p, seed)?, out)
        }
    };
    save_data(&ds, &out)?;
    println!(
        "wrote {}: {} samples, {}; provenance {}",
        out.display(),
        ds.len(),
        ds.grid_summary(),
        ds.provenance
    );
    Ok(())
}

pub(crate) fn split(a: SplitArgs) -> CliResult<()> {
    let ds = load_data(&a.data)?;
    let (train, test) = train_test_split(&ds, a.n_train, a.seed)?;
    save_data(&train, &a.train_out)?;
    save_data(&test, &a.test_out)?;
    println!(
        "wrote {} ({} samples) and {} ({} samples)",
        a.train_out.display(),
        train.len(),
        a.test_out.display(),
        test.len()
    );
    Ok(())
}

pub(crate) fn preset_config(p: Preset) -> TrainConfig {
    match p {
        Preset::Grf => TrainConfig::grf(),
        Preset::Bumps => TrainConfig::bumps(),
    }
}

fn resolve_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let path = Path::new(&a.config);
    let mut cfg = if !path.exists() && matches!(a.config.as_str(), "grf" | "bumps") {
        if a.config == "grf" {
            TrainConfig::grf()
        } else {
            TrainConfig::bumps()
        }
    } else {
        let text = fs::read_to_string(path).map_err(io_err(a.config.clone()))?;
        TrainConfig::from_text(&text)?
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Log rows up to and including `step`, header first.
fn truncated_log(path: &Path, step: u64) -> CliResult<String> {
    let mut out = format!("{}\n", StepRecord::CSV_HEADER);
    if let Ok(text) = fs::read_to_string(path) {
        for line in text.lines().skip(1) {
            let s: Option<u64> = line.split(',').next().and_then(|s| s.parse().ok());
            if s.is_some_and(|s| s <= step) {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Trains to completion and returns the final step count.
pub fn train(a: TrainArgs) -> CliResult<u64> {
    let cfg = resolve_config(&a)?;
    let data = load_data(&a.data)?;
    fs::create_dir_all(&a.out_dir).map_err(io_err(a.out_dir.display().to_string()))?;
    let dir = a.out_dir.clone();
    let write = |name: &str, text: &str| fs::write(dir.join(name), text).map_err(io_err(dir.join(name).display().to_string()));
    write(CONFIG_FILE, &cfg.to_text())?;
    write(VERSION_FILE, &format!("{VERSION}\n"))?;

    let log_path = dir.join(LOG_FILE);
    let mut trainer = match &a.resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            let t = Trainer::resume(cfg.clone(), data, &ck)?;
            // A fresh output directory inherits the log of the run being resumed.
            let source = if log_path.exists() {
                log_path.clone()
            } else {
                p.parent().unwrap_or(Path::new(".")).join(LOG_FILE)
            };
            write(LOG_FILE, &truncated_log(&source, t.step_count())?)?;
            t
        }
        None => {
            write(LOG_FILE, &format!("{}\n", StepRecord::CSV_HEADER))?;
            Trainer::new(cfg.clone(), data)?
        }
    };
    let log_file = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(io_err(log_path.display().to_string()))?;
    let mut log = BufWriter::new(log_file);
    let mut ck_error = None;
    let every = cfg.checkpoint_every;
    let result = trainer.run(|rec, t| {
        writeln!(log, "{}", rec.csv_row())?;
        if every > 0 && rec.step % every == 0 && rec.step < cfg.iterations {
            log.flush()?;
            let path = dir.join(format!("checkpoint_{:08}.ckpt", rec.step));
            if let Err(e) = save_checkpoint(&t.checkpoint(), &path) {
                ck_error = Some(e);
                return Err(vano_core::Error::Contract("checkpoint write failed".into()));
            }
        }
        if !a.quiet && (rec.step % 1000 == 0 || rec.step == cfg.iterations) {
            eprintln!(
                "step {:>7}  total {:.6e}  recon {:.6e}  kl {:.4e}  lr {:.3e}",
                rec.step, rec.total, rec.recon, rec.kl, rec.effective_lr
            );
        }
        Ok(())
    });
    log.flush().map_err(io_err(log_path.display().to_string()))?;
    if let Some(e) = ck_error {
        return Err(e);
    }
    match result {
        Ok(()) => {
            save_checkpoint(&trainer.checkpoint(), &dir.join(FINAL_CKPT))?;
            Ok(trainer.step_count())
        }
        Err(e @ vano_core::Error::Numerical(_)) => {
            let path = dir.join(LAST_GOOD_CKPT);
            save_checkpoint(&trainer.checkpoint(), &path)?;
            eprintln!(
                "aborting at step {}: parameters from step {} saved to {}",
                trainer.step_count() + 1,
                trainer.step_count(),
                path.display()
            );
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn domain_of(ck: &Checkpoint, model: &Vano) -> CliResult<Vec<(f64, f64)>> {
    Ok(checkpoint_extents(ck)?.unwrap_or_else(|| vec![(0.0, 1.0); model.decoder.coord_dim()]))
}

pub(crate) fn sample(a: SampleArgs) -> CliResult<()> {
    if a.resolution < 2 {
        return Err(CliError::Usage(format!("--resolution must be >= 2, got {}", a.resolution)));
    }
    if a.count == 0 {
        return Err(CliError::Usage("--count must be >= 1".into()));
    }
    let ck = load_checkpoint(&a.checkpoint)?;
    let (model, store) = Vano::from_checkpoint(&ck)?;
    let extents = domain_of(&ck, &model)?;
    let grid = box_grid(&extents, a.resolution)?;
    let mut rng = RngStream::new(a.seed, Purpose::Sampling, 0);
    let z = model.prior().sample_matrix(a.count, &mut rng);
    let values = model.decoder.decode_many(&store, &z, &grid)?;
    let provenance = json!({
        "kind": "prior_samples",
        "count": a.count,
        "resolution": a.resolution,
        "seed": a.seed,
        "latent_dim": model.latent_dim(),
        "version": VERSION,
    })
    .to_string();
    let ds = Dataset::new(extents.len(), extents, grid, values, provenance)?;
    save_data(&ds, &a.out)?;
    println!("wrote {}: {} samples, {}", a.out.display(), ds.len(), ds.grid_summary());
    Ok(())
}

fn posterior_means(model: &Vano, store: &ParamStore, data: &Dataset) -> CliResult<Matrix> {
    let posts = model.encoder.encode_batch(store, &data.values)?;
    let n = model.latent_dim();
    let mut mu = Matrix::zeros(posts.len(), n);
    for (i, p) in posts.iter().enumerate() {
        mu.row_mut(i).copy_from_slice(&p.mu);
    }
    Ok(mu)
}

pub(crate) fn reconstruct(a: ReconstructArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let (model, store) = Vano::from_checkpoint(&ck)?;
    let data = load_data(&a.data)?;
    let mu = posterior_means(&model, &store, &data)?;
    let at_data = model.decoder.decode_many(&store, &mu, &data.grid)?;
    let (grid, recon) = match a.resolution {
        None => (data.grid.clone(), at_data.clone()),
        Some(r) => {
            let grid = box_grid(&data.extents, r)?;
            let recon = model.decoder.decode_many(&store, &mu, &grid)?;
            (grid, recon)
        }
    };
    let mut err = at_data;
    for (e, u) in err.data_mut().iter_mut().zip(data.values.data()) {
        *e = (*e - u).abs();
    }
    let prov = |kind: &str| {
        json!({ "kind": kind, "source": data.provenance, "resolution": a.resolution, "version": VERSION }).to_string()
    };
    let recon_ds = Dataset::new(data.domain_dim, data.extents.clone(), grid, recon, prov("reconstruction"))?;
    let err_ds = Dataset::new(
        data.domain_dim,
        data.extents.clone(),
        data.grid.clone(),
        err,
        prov("abs_error"),
    )?;
    let path = |suffix: &str| {
        let mut s = a.out_prefix.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    save_data(&data, &path(".input.fds"))?;
    save_data(&recon_ds, &path(".recon.fds"))?;
    save_data(&err_ds, &path(".abs_error.fds"))?;
    let mean_err = err_ds.values.data().iter().sum::<f64>() / err_ds.values.data().len() as f64;
    println!(
        "reconstructed {} samples; mean absolute error {mean_err:.6e}; wrote {}.{{input,recon,abs_error}}.fds",
        data.len(),
        a.out_prefix.display()
    );
    Ok(())
}

/// One metrics CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub metric: String,
    pub value: Option<f64>,
    pub aux: Option<f64>,
    pub dataset_a: String,
    pub dataset_b: String,
    pub seed: u64,
}

impl EvalRow {
    fn csv(&self) -> String {
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        format!(
            "{},{},{},{},{},{}",
            self.metric,
            num(self.value),
            num(self.aux),
            quote(&self.dataset_a),
            quote(&self.dataset_b),
            self.seed
        )
    }
}

fn load_eval_data(path: &Path, a: &EvalArgs) -> CliResult<Dataset> {
    let ds = load_data(path)?;
    match a.max_samples {
        Some(k) if k == 0 => Err(CliError::Usage("--max-samples must be >= 1".into())),
        Some(k) if k < ds.len() => {
            let (idx, _) = split_indices(ds.len(), k, a.seed);
            Ok(ds.select(&idx)?)
        }
        _ => Ok(ds),
    }
}

fn grid_mismatch(pa: &Path, a: &Dataset, pb: &Path, b: &Dataset) -> CliError {
    CliError::Usage(format!(
        "grid mismatch: {} has {}, {} has {}",
        pa.display(),
        a.grid_summary(),
        pb.display(),
        b.grid_summary()
    ))
}

fn two_inputs(a: &EvalArgs) -> CliResult<(&Path, &Path)> {
    match a.inputs.as_slice() {
        [x, y] => Ok((x, y)),
        other => Err(CliError::Usage(format!(
            "{:?} needs two dataset files, got {}",
            a.metric,
            other.len()
        ))),
    }
}

fn parse_analytic(spec: &str) -> CliResult<GRFParams> {
    let bad = || CliError::Usage(format!("--analytic expects grf:alpha=..,tau=..[,n_eig=..], got {spec:?}"));
    let rest = spec.strip_prefix("grf:").ok_or_else(bad)?;
    let mut p = GRFParams::default();
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
        match k.trim() {
            "alpha" => p.alpha = v.trim().parse().map_err(|_| bad())?,
            "tau" => p.tau = v.trim().parse().map_err(|_| bad())?,
            "n_eig" => p.n_eig = v.trim().parse().map_err(|_| bad())?,
            _ => return Err(bad()),
        }
    }
    Ok(p)
}

enum CovSource {
    Analytic(GRFParams, String),
    Data(Dataset, PathBuf),
    Model(Vano, ParamStore, PathBuf),
}

impl CovSource {
    fn label(&self) -> String {
        match self {
            CovSource::Analytic(_, s) => s.clone(),
            CovSource::Data(_, p) | CovSource::Model(_, _, p) => p.display().to_string(),
        }
    }
}

fn eval_hs(a: &EvalArgs) -> CliResult<EvalRow> {
    let mut sources = Vec::new();
    if let Some(s) = &a.analytic {
        sources.push(CovSource::Analytic(parse_analytic(s)?, s.clone()));
    }
    for p in &a.inputs {
        sources.push(match sniff(p)? {
            FileKind::Dataset => CovSource::Data(load_eval_data(p, a)?, p.clone()),
            FileKind::Checkpoint => {
                let (m, s) = Vano::from_checkpoint(&load_checkpoint(p)?)?;
                CovSource::Model(m, s, p.clone())
            }
        });
    }
    if sources.len() != 2 {
        return Err(CliError::Usage(format!(
            "hs compares exactly two covariances (analytic, datasets or checkpoints), got {}",
            sources.len()
        )));
    }
    let reference = sources.iter().find_map(|s| match s {
        CovSource::Data(d, p) => Some((d, p)),
        _ => None,
    });
    let grid = match reference {
        Some((d, _)) => d.grid.clone(),
        None => {
            if a.resolution < 2 {
                return Err(CliError::Usage(format!("--resolution must be >= 2, got {}", a.resolution)));
            }
            unit_grid(a.resolution)
        }
    };
    let cov = |s: &CovSource| -> CliResult<CovarianceMatrix> {
        match s {
            CovSource::Analytic(p, _) => {
                if let Some((d, path)) = reference {
                    if d.domain_dim != 1 {
                        return Err(CliError::Usage(format!(
                            "analytic covariance is 1D but {} is {}D",
                            path.display(),
                            d.domain_dim
                        )));
                    }
                }
                Ok(covariance_analytic(p, &grid)?)
            }
            CovSource::Data(d, p) => {
                let (rd, rp) = reference.expect("a dataset source sets the reference");
                if !d.same_grid(rd) {
                    return Err(grid_mismatch(rp, rd, p, d));
                }
                Ok(empirical_covariance(&d.values)?)
            }
            CovSource::Model(m, st, _) => Ok(covariance_model_linear(&m.decoder, st, &grid)?),
        }
    };
    let c0 = cov(&sources[0])?;
    let c1 = cov(&sources[1])?;
    Ok(EvalRow {
        metric: "hs".into(),
        value: Some(hs_error(&c0, &c1)?),
        aux: None,
        dataset_a: sources[0].label(),
        dataset_b: sources[1].label(),
        seed: a.seed,
    })
}

fn eval_pair(a: &EvalArgs) -> CliResult<EvalRow> {
    let (pa, pb) = two_inputs(a)?;
    let da = load_eval_data(pa, a)?;
    let db = load_eval_data(pb, a)?;
    if !da.same_grid(&db) {
        return Err(grid_mismatch(pa, &da, pb, &db));
    }
    let mode = match a.quadrature {
        QuadratureArg::Weighted => QuadratureMode::Weighted,
        QuadratureArg::RawSum => QuadratureMode::RawSum,
    };
    let q = da.quadrature(mode)?;
    let (metric, value, aux) = match a.metric {
        Metric::Mmd => {
            let sigma = a
                .sigma
                .ok_or_else(|| CliError::Usage("mmd needs --sigma".into()))?;
            ("mmd", mmd(&da.values, &db.values, sigma, &q)?, sigma)
        }
        _ => {
            let fam = KernelFamily {
                sigma_min: a.sigma_min,
                sigma_max: a.sigma_max,
                grid_size: a.sigma_count,
            };
            let g = gmmd(&da.values, &db.values, &fam, &q)?;
            ("gmmd", g.value, g.argmax_sigma)
        }
    };
    Ok(EvalRow {
        metric: metric.into(),
        value: Some(value),
        aux: Some(aux),
        dataset_a: pa.display().to_string(),
        dataset_b: pb.display().to_string(),
        seed: a.seed,
    })
}

fn eval_circular(a: &EvalArgs) -> CliResult<Vec<EvalRow>> {
    let p = match a.inputs.as_slice() {
        [p] => p,
        other => {
            return Err(CliError::Usage(format!(
                "circular needs one angle file, got {}",
                other.len()
            )))
        }
    };
    let ds = load_eval_data(p, a)?;
    let s = circular_stats(ds.values.data())?;
    let row = |metric: &str, value, aux| EvalRow {
        metric: metric.into(),
        value,
        aux,
        dataset_a: p.display().to_string(),
        dataset_b: String::new(),
        seed: a.seed,
    };
    Ok(vec![
        row("circular_variance", Some(s.variance), Some(s.r1)),
        row("circular_skewness", s.skewness, None),
    ])
}

/// Computes the metric, appends its rows to the metrics CSV and returns them.
pub fn eval(a: EvalArgs) -> CliResult<Vec<EvalRow>> {
    let rows = match a.metric {
        Metric::Hs => vec![eval_hs(&a)?],
        Metric::Mmd | Metric::Gmmd => vec![eval_pair(&a)?],
        Metric::Circular => eval_circular(&a)?,
    };
    let fresh = !a.metrics.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&a.metrics)
        .map_err(io_err(a.metrics.display().to_string()))?;
    let mut text = String::new();
    if fresh {
        text.push_str(METRICS_HEADER);
        text.push('\n');
    }
    for r in &rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    f.write_all(text.as_bytes())
        .map_err(io_err(a.metrics.display().to_string()))?;
    for r in &rows {
        match (r.value, r.aux) {
            (Some(v), Some(x)) => println!("{} = {v:.6e} (aux {x})", r.metric),
            (Some(v), None) => println!("{} = {v:.6e}", r.metric),
            (None, _) => println!("{} undefined", r.metric),
        }
    }
    Ok(rows)
}

/// Verifies that a training run directory is complete and self-consistent.
pub fn audit(dir: &Path) -> CliResult<()> {
    let mut problems = Vec::new();
    let read = |name: &str| fs::read_to_string(dir.join(name));
    match read(CONFIG_FILE) {
        Err(_) => problems.push(format!("{CONFIG_FILE} missing")),
        Ok(t) => {
            if let Err(e) = TrainConfig::from_text(&t) {
                problems.push(format!("{CONFIG_FILE}: {e}"));
            }
        }
    }
    match read(VERSION_FILE) {
        Ok(v) if !v.trim().is_empty() => {}
        Ok(_) => problems.push(format!("{VERSION_FILE} is empty")),
        Err(_) => problems.push(format!("{VERSION_FILE} missing")),
    }
    let mut last_step = None;
    match read(LOG_FILE) {
        Err(_) => problems.push(format!("{LOG_FILE} missing")),
        Ok(t) => {
            let mut lines = t.lines();
            if lines.next() != Some(StepRecord::CSV_HEADER) {
                problems.push(format!("{LOG_FILE}: header is not {:?}", StepRecord::CSV_HEADER));
            }
            let mut expect: Option<u64> = None;
            let mut last = 0;
            for (i, line) in lines.enumerate() {
                let fields: Vec<&str> = line.split(',').collect();
                let step = fields[0].parse::<u64>().ok();
                let ok = fields.len() == 6
                    && step.is_some_and(|s| s >= 1 && expect.is_none_or(|e| e == s))
                    && fields[1..].iter().all(|f| f.parse::<f64>().is_ok());
                if !ok {
                    problems.push(format!("{LOG_FILE}: malformed row {} ({line:?})", i + 2));
                    break;
                }
                last = step.unwrap_or(0);
                expect = Some(last + 1);
            }
            last_step = Some(last);
        }
    }
    if dir.join("metrics.csv").exists() {
        let header = read("metrics.csv").ok().and_then(|t| t.lines().next().map(str::to_string));
        if header.as_deref() != Some(METRICS_HEADER) {
            problems.push("metrics.csv: unexpected header".into());
        }
    }
    let ck_name = [FINAL_CKPT, LAST_GOOD_CKPT].into_iter().find(|n| dir.join(n).exists());
    match ck_name {
        None => problems.push(format!("neither {FINAL_CKPT} nor {LAST_GOOD_CKPT} present")),
        Some(name) => match Checkpoint::load(dir.join(name)) {
            Err(e) => problems.push(format!("{name}: {e}")),
            Ok(ck) => {
                if let Err(e) = Vano::from_checkpoint(&ck) {
                    problems.push(format!("{name}: {e}"));
                }
                match (checkpoint_step(&ck), last_step) {
                    (Ok(s), Some(l)) if s != l => {
                        problems.push(format!("{name} is at step {s} but {LOG_FILE} ends at step {l}"))
                    }
                    (Err(e), _) => problems.push(format!("{name}: {e}")),
                    _ => {}
                }
            }
        },
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Audit(problems))
    }
}
