//! Command-line surface for the spiking state-space model library: surrogate
//! network data generation/training/evaluation, task training on sequential
//! MNIST, latency benchmarks, energy accounting, and membrane histograms.
//!
//! Exit codes: 0 success, 1 usage/argument error, 2 data or file-format
//! error, 3 numerical failure. Every command ends with a single
//! machine-readable `summary ...` line on stdout echoing its configuration
//! and seed.

use clap::{Args, Parser, Subcommand};
use spiking_ssm::bench::{run_bench, BenchSpec};
use spiking_ssm::config::TaskConfig;
use spiking_ssm::error::{Error, Result};
use spiking_ssm::grad::TrainMode;
use spiking_ssm::io;
use spiking_ssm::lif::NeuronParams;
use spiking_ssm::metrics::{energy, energy_csv, histogram_csv, EnergyModel, OpCounts};
use spiking_ssm::network::{evaluate, train_task, SpikeMode, SpikingSsmNetwork, TaskDataset};
use spiking_ssm::rng::Rng;
use spiking_ssm::sdn::SdnModel;
use spiking_ssm::sdn_train::{eval_sdn, generate_dataset, generalization_sweep, sweep_csv, train_sdn, SweepAxis};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "spiking-ssm",
    version,
    about = "Spiking state-space models with a surrogate dynamic network for parallel training"
)]
struct Cli {
    /// Worker threads recorded in reports (compute runs on one thread).
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a surrogate-network training dataset from the iterative
    /// neuron oracle.
    GenSdnData(GenSdnData),
    /// Train the surrogate dynamic network on a generated dataset.
    TrainSdn(TrainSdn),
    /// Evaluate a surrogate-network checkpoint on a dataset file.
    EvalSdn(EvalSdn),
    /// Sweep a frozen surrogate network across lengths, input means, or tau.
    SweepSdn(SweepSdn),
    /// Fold norm and encoder layers into inference-ready convolutions.
    FuseSdn(FuseSdn),
    /// Train the spiking classifier on (permuted) sequential MNIST.
    Train(Train),
    /// Evaluate a classifier checkpoint.
    Eval(Eval),
    /// Time full training steps per gradient mode across sequence lengths.
    Bench(Bench),
    /// Energy estimate from MAC/AC counts.
    EnergyReport(EnergyReport),
    /// Membrane-potential histograms around the firing threshold.
    Hist(Hist),
}

#[derive(Args)]
struct GenSdnData {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 1024)]
    length: usize,
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    v_th: f64,
    /// Input distribution mean (inputs are normal).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mean: f64,
    /// Input distribution standard deviation.
    #[arg(long, default_value_t = 1.0)]
    std: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainSdn {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalSdn {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct SweepSdn {
    #[arg(long)]
    model: PathBuf,
    /// Dataset file providing the base generation metadata.
    #[arg(long)]
    data: PathBuf,
    /// Sweep axis: length, distribution (mean), or tau.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, allow_hyphen_values = true)]
    values: String,
    /// Where to write the CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FuseSdn {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    /// Config file of key=value lines (defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline config overrides, e.g. --set lr=0.004 (applied after the file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// MNIST directory (falls back to SPIKING_SSM_DATA, then data/mnist).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Train on only the first N training images.
    #[arg(long)]
    subset: Option<usize>,
    /// Evaluate on only the first N test images.
    #[arg(long)]
    test_subset: Option<usize>,
    /// Apply the fixed pixel permutation (permuted-sequential task).
    #[arg(long)]
    permuted: bool,
    /// Seed for the fixed pixel permutation.
    #[arg(long, default_value_t = 42)]
    perm_seed: u64,
    /// Surrogate-network checkpoint (required for mode=sdn).
    #[arg(long)]
    sdn: Option<PathBuf>,
    /// Where to write the trained classifier checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Spike path: parallel or iterative (defaults to the training mode).
    #[arg(long)]
    spike_mode: Option<String>,
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    permuted: bool,
    #[arg(long, default_value_t = 42)]
    perm_seed: u64,
    #[arg(long)]
    sdn: Option<PathBuf>,
}

#[derive(Args)]
struct Bench {
    /// Comma-separated sequence lengths.
    #[arg(long, default_value = "1024,2048,4096,8192")]
    lengths: String,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    /// Comma-separated gradient modes to time.
    #[arg(long, default_value = "bptt,sltt,sdn")]
    modes: String,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Network shape overrides, e.g. --set h=64 --set depth=2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Surrogate checkpoint for the sdn mode (a fresh fused network of
    /// identical shape is used when omitted; timing does not depend on
    /// trained weights).
    #[arg(long)]
    sdn: Option<PathBuf>,
    #[arg(long)]
    out_latency: Option<PathBuf>,
    #[arg(long)]
    out_breakdown: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyReport {
    /// Multiply-accumulate count (scientific notation accepted).
    #[arg(long)]
    mac: f64,
    /// Accumulate count.
    #[arg(long)]
    ac: f64,
    /// Energy per MAC in picojoules.
    #[arg(long, default_value_t = 4.6)]
    e_mac: f64,
    /// Energy per AC in picojoules.
    #[arg(long, default_value_t = 0.9)]
    e_ac: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Hist {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Number of test images fed through the network.
    #[arg(long, default_value_t = 256)]
    subset: usize,
    #[arg(long)]
    spike_mode: Option<String>,
    #[arg(long, default_value_t = 61)]
    bins: usize,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    hi: f64,
    #[arg(long)]
    permuted: bool,
    #[arg(long, default_value_t = 42)]
    perm_seed: u64,
    #[arg(long)]
    sdn: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    // Die quietly when downstream closes the pipe (e.g. `... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version are successful outputs, everything else is usage.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.workers == 0 {
        return Err(Error::invalid("--workers must be at least 1"));
    }
    let workers = cli.workers;
    match cli.cmd {
        Cmd::GenSdnData(a) => gen_sdn_data(a, workers),
        Cmd::TrainSdn(a) => train_sdn_cmd(a, workers),
        Cmd::EvalSdn(a) => eval_sdn_cmd(a, workers),
        Cmd::SweepSdn(a) => sweep_sdn_cmd(a, workers),
        Cmd::FuseSdn(a) => fuse_sdn_cmd(a, workers),
        Cmd::Train(a) => train_cmd(a, workers),
        Cmd::Eval(a) => eval_cmd(a, workers),
        Cmd::Bench(a) => bench_cmd(a, workers),
        Cmd::EnergyReport(a) => energy_cmd(a, workers),
        Cmd::Hist(a) => hist_cmd(a, workers),
    }
}

// ---- helpers ---------------------------------------------------------------

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Error::data(format!("write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("cannot parse '{v}' as a number")))
        })
        .collect()
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("cannot parse '{v}' as a count")))
        })
        .collect()
}

fn data_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(io::mnist_dir)
}

fn load_split(dir: &Path, train: bool, permuted: bool, perm_seed: u64, subset: Option<usize>) -> Result<TaskDataset> {
    let mut ds = io::load_mnist(dir, train)?;
    if let Some(n) = subset {
        ds = io::subset(&ds, n)?;
    }
    if permuted {
        io::permute_pixels(&mut ds, perm_seed);
    }
    Ok(ds)
}

fn spike_mode_for(cfg_mode: TrainMode, flag: &Option<String>) -> Result<SpikeMode> {
    match flag.as_deref() {
        None => Ok(SpikeMode::for_training(cfg_mode)),
        Some("parallel") => Ok(SpikeMode::Parallel),
        Some("iterative") => Ok(SpikeMode::Iterative),
        Some(other) => Err(Error::invalid(format!(
            "unknown spike mode '{other}' (expected parallel or iterative)"
        ))),
    }
}

/// Attach a surrogate network when the spike path needs one.
fn attach_if_parallel(net: &mut SpikingSsmNetwork, mode: SpikeMode, sdn: &Option<PathBuf>) -> Result<()> {
    if mode == SpikeMode::Parallel {
        let path = sdn
            .as_ref()
            .ok_or_else(|| Error::invalid("parallel spiking needs --sdn <checkpoint>"))?;
        let (model, _) = io::load_sdn(path)?;
        net.attach_sdn(&model)?;
    }
    Ok(())
}

// ---- subcommands -----------------------------------------------------------

fn gen_sdn_data(a: GenSdnData, workers: usize) -> Result<()> {
    let params = NeuronParams { tau: a.tau, v_th: a.v_th, ..NeuronParams::default() };
    let ds = generate_dataset(a.count, a.length, &params, (a.mean, a.std), a.seed)?;
    io::save_sdn_dataset(&ds, &a.out)?;
    println!(
        "summary cmd=gen-sdn-data count={} length={} tau={} v_th={} mean={} std={} seed={} out={} workers={workers}",
        a.count,
        a.length,
        a.tau,
        a.v_th,
        a.mean,
        a.std,
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn train_sdn_cmd(a: TrainSdn, workers: usize) -> Result<()> {
    let ds = io::load_sdn_dataset(&a.data)?;
    let (model, report) = train_sdn(&ds, a.epochs, a.lr, a.batch, a.seed)?;
    for (i, e) in report.epochs.iter().enumerate() {
        println!(
            "epoch={} train_mse={:.3e} test_mse={:.3e} spike_accuracy={:.6}",
            i + 1,
            e.train_mse,
            e.test_mse,
            e.test_spike_accuracy
        );
    }
    let m = &ds.meta;
    let config = format!(
        "count={}\nlength={}\ntau={}\nv_th={}\nmean={}\nstd={}\ndata_seed={}\nepochs={}\nlr={}\nbatch={}\ntrain_seed={}\n",
        m.count, m.length, m.tau, m.v_th, m.mean, m.std, m.seed, a.epochs, a.lr, a.batch, a.seed
    );
    io::save_sdn(&model, &config, &a.out)?;
    let last = report.epochs.last().ok_or_else(|| Error::invalid("no epochs trained"))?;
    println!(
        "summary cmd=train-sdn data={} epochs={} lr={} batch={} seed={} out={} final_test_mse={:.3e} final_spike_accuracy={:.6} workers={workers}",
        a.data.display(),
        a.epochs,
        a.lr,
        a.batch,
        a.seed,
        a.out.display(),
        last.test_mse,
        last.test_spike_accuracy
    );
    Ok(())
}

fn eval_sdn_cmd(a: EvalSdn, workers: usize) -> Result<()> {
    let (model, _) = io::load_sdn(&a.model)?;
    let ds = io::load_sdn_dataset(&a.data)?;
    let stats = eval_sdn(&model, &ds)?;
    println!("spike_accuracy={:.6} mse={:.6e}", stats.spike_accuracy, stats.mse);
    println!(
        "summary cmd=eval-sdn model={} data={} spike_accuracy={:.6} mse={:.6e} count={} length={} seed={} workers={workers}",
        a.model.display(),
        a.data.display(),
        stats.spike_accuracy,
        stats.mse,
        ds.meta.count,
        ds.meta.length,
        ds.meta.seed
    );
    Ok(())
}

fn sweep_sdn_cmd(a: SweepSdn, workers: usize) -> Result<()> {
    let (model, _) = io::load_sdn(&a.model)?;
    let base = io::load_sdn_dataset(&a.data)?.meta;
    let axis = SweepAxis::parse(&a.axis)?;
    let values = parse_f64_list(&a.values)?;
    let rows = generalization_sweep(&model, axis, &values, &base)?;
    write_or_print(&a.out, &sweep_csv(&rows))?;
    println!(
        "summary cmd=sweep-sdn model={} axis={} values={} base_seed={} points={} workers={workers}",
        a.model.display(),
        a.axis,
        a.values,
        base.seed,
        rows.len()
    );
    Ok(())
}

fn fuse_sdn_cmd(a: FuseSdn, workers: usize) -> Result<()> {
    let (mut model, config) = io::load_sdn(&a.model)?;
    let train_params = model.param_count();
    model.fuse()?;
    let fused = model.fused.as_ref().unwrap();
    let fused_params = fused.param_count();
    // Persist the train-mode tensors plus the folded inference tensors.
    io::save_sdn(&model, &config, &a.out)?;
    let mut ck = io::Checkpoint::load(&a.out)?;
    let flat8x8 = |m: &[[f32; 8]; 8]| -> Vec<f32> { m.iter().flatten().copied().collect() };
    ck.push(io::Tensor::from_f32("sdn.fused.conv_w", vec![8, 8], &flat8x8(&fused.conv_w)));
    ck.push(io::Tensor::from_f32("sdn.fused.bias_steady", vec![8], &fused.bias_steady));
    ck.push(io::Tensor::from_f32("sdn.fused.bias_head", vec![8, 8], &flat8x8(&fused.bias_head)));
    ck.push(io::Tensor::from_f32("sdn.fused.pw_w", vec![8, 8], &flat8x8(&fused.pw_w)));
    ck.push(io::Tensor::from_f32("sdn.fused.pw_b", vec![8], &fused.pw_b));
    ck.push(io::Tensor::from_f32("sdn.fused.dec_w", vec![8], &fused.dec_w));
    ck.push(io::Tensor::from_f32("sdn.fused.dec_b", vec![1], &[fused.dec_b]));
    ck.save(&a.out)?;
    println!(
        "summary cmd=fuse-sdn model={} out={} train_params={} fused_params={} workers={workers}",
        a.model.display(),
        a.out.display(),
        train_params,
        fused_params
    );
    Ok(())
}

fn train_cmd(a: Train, workers: usize) -> Result<()> {
    let mut cfg = TaskConfig::default();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    cfg.apply_overrides(&a.sets)?;
    cfg.validate()?;
    let dir = data_dir(&a.data_dir);
    let train_ds = load_split(&dir, true, a.permuted, a.perm_seed, a.subset)?;
    let test_ds = load_split(&dir, false, a.permuted, a.perm_seed, a.test_subset)?;
    let sdn_model = match (&a.sdn, cfg.mode.iterative_forward()) {
        (Some(path), _) => Some(io::load_sdn(path)?.0),
        (None, false) => {
            return Err(Error::invalid("mode=sdn training needs --sdn <checkpoint>"));
        }
        (None, true) => None,
    };
    let (net, logs) = train_task(&cfg.train_config(), &train_ds, &test_ds, sdn_model.as_ref())?;
    for log in &logs {
        println!(
            "epoch={} train_loss={:.4} test_accuracy={:.4} mean_rate={:.4}",
            log.epoch, log.train_loss, log.test_accuracy, log.test_mean_rate
        );
    }
    if let Some(out) = &a.out {
        io::save_network(&net, &cfg, out)?;
    }
    let last = logs.last().ok_or_else(|| Error::invalid("no epochs trained"))?;
    println!(
        "summary cmd=train {} permuted={} perm_seed={} train_count={} test_count={} test_accuracy={:.4} mean_rate={:.4} out={} workers={workers}",
        cfg.summary_line(),
        a.permuted,
        a.perm_seed,
        train_ds.count,
        test_ds.count,
        last.test_accuracy,
        last.test_mean_rate,
        a.out.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into())
    );
    Ok(())
}

fn eval_cmd(a: Eval, workers: usize) -> Result<()> {
    let (mut net, cfg) = io::load_network(&a.model)?;
    let mode = spike_mode_for(cfg.mode, &a.spike_mode)?;
    attach_if_parallel(&mut net, mode, &a.sdn)?;
    let dir = data_dir(&a.data_dir);
    let ds = load_split(&dir, false, a.permuted, a.perm_seed, a.subset)?;
    let eval = evaluate(&mut net, &ds, mode, cfg.batch)?;
    println!("test_accuracy={:.4} mean_rate={:.4}", eval.accuracy, eval.mean_spiking_rate);
    println!(
        "summary cmd=eval model={} {} spike_mode={} permuted={} perm_seed={} count={} test_accuracy={:.4} mean_rate={:.4} workers={workers}",
        a.model.display(),
        cfg.summary_line(),
        match mode {
            SpikeMode::Parallel => "parallel",
            SpikeMode::Iterative => "iterative",
        },
        a.permuted,
        a.perm_seed,
        ds.count,
        eval.accuracy,
        eval.mean_spiking_rate
    );
    Ok(())
}

fn bench_cmd(a: Bench, workers: usize) -> Result<()> {
    let mut cfg = TaskConfig::default();
    cfg.apply_overrides(&a.sets)?;
    cfg.validate()?;
    let modes = a
        .modes
        .split(',')
        .map(|m| TrainMode::parse(m.trim()))
        .collect::<Result<Vec<_>>>()?;
    let spec = BenchSpec {
        lengths: parse_usize_list(&a.lengths)?,
        batch: a.batch,
        repetitions: a.repetitions,
        warmup: a.warmup,
        modes,
        workers,
        seed: a.seed,
    };
    let needs_sdn = spec.modes.iter().any(|m| !m.iterative_forward());
    let sdn_model = match (&a.sdn, needs_sdn) {
        (Some(path), _) => Some(io::load_sdn(path)?.0),
        (None, true) => {
            // Timing does not depend on trained weights; use a fresh network.
            let mut m = SdnModel::init(&mut Rng::new(a.seed));
            m.fuse()?;
            Some(m)
        }
        (None, false) => None,
    };
    let report = run_bench(&spec, &cfg.net_config(), sdn_model.as_ref())?;
    print!("{}", report.summary());
    write_or_print(&a.out_latency, &report.latency_csv())?;
    write_or_print(&a.out_breakdown, &report.breakdown_csv())?;
    let max_len = *spec.lengths.iter().max().unwrap();
    println!(
        "summary cmd=bench lengths={} batch={} repetitions={} warmup={} modes={} seed={} depth={} h={} n={} speedup_max_len={} monotone={} workers={workers}",
        a.lengths,
        a.batch,
        a.repetitions,
        a.warmup,
        a.modes,
        a.seed,
        cfg.depth,
        cfg.h,
        cfg.n,
        report
            .speedup_at(max_len)
            .map(|s| format!("{s:.2}"))
            .unwrap_or_else(|| "-".into()),
        report.speedup_monotone()
    );
    Ok(())
}

fn energy_cmd(a: EnergyReport, workers: usize) -> Result<()> {
    if a.mac < 0.0 || a.ac < 0.0 || !a.mac.is_finite() || !a.ac.is_finite() {
        return Err(Error::invalid("MAC/AC counts must be non-negative finite numbers"));
    }
    let counts = OpCounts { mac: a.mac.round() as u64, ac: a.ac.round() as u64 };
    let model = EnergyModel { e_mac_pj: a.e_mac, e_ac_pj: a.e_ac };
    let joules = energy(&counts, &model);
    write_or_print(&a.out, &energy_csv(&counts, &model))?;
    println!("energy_j={joules:.6e} ({joules:.3} J)");
    println!(
        "summary cmd=energy-report mac={} ac={} e_mac_pj={} e_ac_pj={} energy_j={joules:.6e} workers={workers}",
        counts.mac, counts.ac, a.e_mac, a.e_ac
    );
    Ok(())
}

fn hist_cmd(a: Hist, workers: usize) -> Result<()> {
    if !(a.lo < a.hi) || a.bins == 0 {
        return Err(Error::invalid("need lo < hi and at least one bin"));
    }
    let (mut net, cfg) = io::load_network(&a.model)?;
    let mode = spike_mode_for(cfg.mode, &a.spike_mode)?;
    attach_if_parallel(&mut net, mode, &a.sdn)?;
    let dir = data_dir(&a.data_dir);
    let ds = load_split(&dir, false, a.permuted, a.perm_seed, Some(a.subset))?;
    let hists = net.membrane_histogram(&ds.inputs, ds.count, ds.length, mode, a.bins, a.lo, a.hi)?;
    write_or_print(&a.out, &histogram_csv(&hists))?;
    let bands: Vec<String> = hists
        .iter()
        .map(|h| format!("{}:{:.4}", h.layer, h.band_occupancy))
        .collect();
    println!(
        "summary cmd=hist model={} subset={} bins={} lo={} hi={} alpha={} band_occupancy={} workers={workers}",
        a.model.display(),
        a.subset,
        a.bins,
        a.lo,
        a.hi,
        cfg.alpha,
        bands.join(",")
    );
    Ok(())
}
