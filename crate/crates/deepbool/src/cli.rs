//! `deepbool train | eval | compile | bench | inspect`.
//!
//! Exit codes: 0 success, 1 usage or config, 2 data or file, 3 numeric
//! failure, 4 bit-slice verification mismatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use deepbool_core::compiler::{bits_to_bools, eval_bitsliced, harden, netlist_stats, optimize, BitSliceBatch, GateNetlist, NetlistStats, Pass, LANES};
use deepbool_core::{evaluate, BinarizedImage, LabeledDataset, NetworkModel, TrainState};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsWriter;
use crate::model_io::{self, MODEL_MAGIC};
use crate::netlist_io::{export_netlist, import_netlist, NetlistFormat, NETLIST_MAGIC};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "deepbool", version, about = "Train, compile and run deep Boolean networks")]
pub struct Cli {
    /// Worker threads for training and inference (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train from a config file (or `builtin:parity8`, `builtin:mnist-small`).
    Train {
        config: PathBuf,
        /// Override a config key, e.g. `--set epochs=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print `accuracy=<value>` of a model or checkpoint on a dataset split.
    Eval {
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Run the hardened gate netlist (default).
        #[arg(long, conflicts_with = "soft")]
        hard: bool,
        /// Take the argmax of the relaxed class scores.
        #[arg(long)]
        soft: bool,
    },
    /// Harden a model, optimize the netlist and write it out.
    Compile {
        model: PathBuf,
        /// Comma-separated passes, `default`, or `none`.
        #[arg(long, default_value = "default")]
        passes: String,
        #[arg(long)]
        out: PathBuf,
        /// `compact` or `text`.
        #[arg(long, default_value = "compact")]
        format: String,
    },
    /// Bit-sliced inference throughput, checked against scalar evaluation.
    Bench {
        netlist: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Examples packed per word, 1 to 64.
        #[arg(long, default_value_t = LANES)]
        batch_lanes: usize,
    },
    /// Print metadata of a model, checkpoint or netlist file.
    Inspect { file: PathBuf },
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Take dataset settings from a run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<String>,
    #[arg(long)]
    pub parity_bits: Option<usize>,
    /// `train` or `test`; datasets without a test split use train.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Use only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl DataArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let mut set = self.set.clone();
        if let Some(d) = &self.dataset {
            set.push(format!("dataset=\"{d}\""));
        }
        if let Some(d) = &self.data_dir {
            set.push(format!("data_dir=\"{}\"", d.replace('\\', "\\\\").replace('"', "\\\"")));
        }
        if let Some(b) = self.parity_bits {
            set.push(format!("parity_bits={b}"));
        }
        match &self.config {
            Some(p) => RunConfig::load(p, &set),
            None => RunConfig::parse("", "command line", &set),
        }
    }

    fn load(&self) -> Result<(RunConfig, LabeledDataset)> {
        let cfg = self.run_config()?;
        if cfg.dataset != "parity" && !Path::new(&cfg.data_dir).is_dir() {
            return Err(Error::config("data_dir", format!("`{}` is not a directory", cfg.data_dir)));
        }
        let data = cfg.load_split(&self.split)?;
        Ok((cfg, match self.limit {
            Some(n) => data.take(n),
            None => data,
        }))
    }
}

pub fn exit_code(err: &Error) -> i32 {
    use deepbool_core::Error as Core;
    match err {
        Error::Config { .. } | Error::Core(Core::Config(_)) => EXIT_CONFIG,
        Error::Core(Core::NonFinite { .. }) => EXIT_NUMERIC,
        Error::Mismatch(m) if m.starts_with("BITSLICE_MISMATCH") => EXIT_MISMATCH,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to standard error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    set_threads(cli.threads)?;
    match cli.command {
        Command::Train { config, set } => train(&config, &set),
        Command::Eval { model, data, soft, .. } => eval(&model, &data, !soft),
        Command::Compile { model, passes, out, format } => compile(&model, &passes, &out, &format),
        Command::Bench { netlist, data, batch_lanes } => bench(&netlist, &data, batch_lanes),
        Command::Inspect { file } => inspect(&file),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<()> {
    // A second call in one process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(n: usize) -> Result<()> {
    if n > 1 {
        return Err(Error::config("threads", "built without the `parallel` feature"));
    }
    Ok(())
}

fn out_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn train(config: &Path, set: &[String]) -> Result<()> {
    let cfg = RunConfig::load(config, set)?;
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let echo = out_file(&dir, "config.toml");
    fs::write(&echo, cfg.to_text()).map_err(|e| Error::io(&echo, e))?;

    let (train, test) = cfg.load_data()?;
    let model = cfg.build_model()?;
    let mut state = TrainState::new(model, cfg.train_config()?)?;
    let metrics_path = out_file(&dir, "metrics.csv");
    let mut metrics = MetricsWriter::create(&metrics_path)?;
    let checkpoint = out_file(&dir, "checkpoint.dbnm");
    eprintln!(
        "{}: {} gates, {} train / {} eval examples",
        state.model.name,
        state.model.gate_count() + state.model.skip_gate_count(),
        train.len(),
        test.as_ref().unwrap_or(&train).len()
    );

    while state.epoch < state.config.epochs {
        match state.train_epoch(&train, test.as_ref()) {
            Ok(m) => {
                let m = *m;
                metrics.push(&m).map_err(|e| Error::io(&metrics_path, e))?;
                if let Some(acc) = m.hard_acc {
                    eprintln!("epoch {} loss {:.5} hard_acc {acc:.4} ({:.1}s)", m.epoch, m.loss, m.wall_seconds);
                }
            }
            Err(e) => {
                model_io::save_checkpoint(&checkpoint, &state)?;
                eprintln!("aborted in epoch {}; checkpoint holds the last completed batch", state.epoch + 1);
                return Err(e.into());
            }
        }
    }
    model_io::save_checkpoint(&checkpoint, &state)?;
    model_io::save_model(&out_file(&dir, "model.dbnm"), &state.model)?;
    Ok(())
}

fn eval(model: &Path, data: &DataArgs, hard: bool) -> Result<()> {
    let model = model_io::load_model(model)?;
    let (_, data) = data.load()?;
    let acc = evaluate(&model, &data, hard)?;
    println!("accuracy={acc}");
    Ok(())
}

fn print_stats(label: &str, s: &NetlistStats) {
    let hist: Vec<String> = s.opcode_histogram.iter().map(|c| c.to_string()).collect();
    println!(
        "{label} inputs={} nodes={} classes={} vote_inputs={} depth={} bit_ops={} density_ratio={:e} opcode_histogram={}",
        s.input_count,
        s.node_count,
        s.class_count,
        s.vote_inputs,
        s.depth,
        s.bit_ops,
        s.density_ratio,
        hist.join(",")
    );
}

fn compile(model: &Path, passes: &str, out: &Path, format: &str) -> Result<()> {
    let passes = Pass::parse_list(passes).map_err(|e| Error::config("passes", e.to_string()))?;
    let format: NetlistFormat = format.parse()?;
    let model = model_io::load_model(model)?;
    let raw = harden(&model);
    let net = optimize(&raw, &passes);
    fs::write(out, export_netlist(&net, format)).map_err(|e| Error::io(out, e))?;
    print_stats("raw", &netlist_stats(&raw));
    print_stats("optimized", &netlist_stats(&net));
    Ok(())
}

fn binarize_all(cfg: &RunConfig, data: &LabeledDataset) -> Result<Vec<BinarizedImage>> {
    let b = cfg.binarization()?;
    Ok(data.examples.iter().map(|(e, _)| e.to_bits(&b)).collect())
}

/// Scalar evaluation of every `stride`-th example; the first disagreement
/// with `labels` is reported as a `BITSLICE_MISMATCH`.
pub fn verify_sample(net: &GateNetlist, inputs: &[&[u8]], labels: &[u32], stride: usize) -> Result<usize> {
    let mut checked = 0;
    for i in (0..inputs.len()).step_by(stride.max(1)) {
        let scalar = net.predict(&bits_to_bools(inputs[i]))?;
        if scalar != labels[i] {
            return Err(Error::Mismatch(format!(
                "BITSLICE_MISMATCH at example {i}: bit-sliced {}, scalar {scalar}",
                labels[i]
            )));
        }
        checked += 1;
    }
    Ok(checked)
}

fn bitsliced_labels(net: &GateNetlist, inputs: &[&[u8]], lanes: usize) -> Result<Vec<u32>> {
    let run = |chunk: &[&[u8]]| -> Result<Vec<u32>> { Ok(eval_bitsliced(net, &BitSliceBatch::pack(chunk)?)?) };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Vec<u32>>> = {
        use rayon::prelude::*;
        inputs.par_chunks(lanes).map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Vec<u32>>> = inputs.chunks(lanes).map(run).collect();
    let mut out = Vec::with_capacity(inputs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn bench(path: &Path, data: &DataArgs, lanes: usize) -> Result<()> {
    if !(1..=LANES).contains(&lanes) {
        return Err(Error::config("batch_lanes", format!("must be in 1..={LANES}")));
    }
    let net = import_netlist(&fs::read(path).map_err(|e| Error::io(path, e))?)?;
    let (cfg, data) = data.load()?;
    let bits = binarize_all(&cfg, &data)?;
    let inputs: Vec<&[u8]> = bits.iter().map(|b| b.bits.as_slice()).collect();
    if let Some(x) = inputs.first() {
        if x.len() != net.input_count {
            return Err(Error::Mismatch(format!(
                "dataset yields {} input bits, netlist expects {}",
                x.len(),
                net.input_count
            )));
        }
    }

    let start = Instant::now();
    let labels = bitsliced_labels(&net, &inputs, lanes)?;
    let sliced_secs = start.elapsed().as_secs_f64().max(1e-9);

    let stride = 100;
    let start = Instant::now();
    let checked = verify_sample(&net, &inputs, &labels, stride)?;
    let scalar_secs = start.elapsed().as_secs_f64().max(1e-9);

    let correct = labels.iter().zip(data.labels()).filter(|(p, l)| **p == *l).count();
    println!("examples={} batch_lanes={lanes}", inputs.len());
    println!("throughput={:.1} examples/s", inputs.len() as f64 / sliced_secs);
    println!("scalar_throughput={:.1} examples/s", checked as f64 / scalar_secs);
    println!("verified={checked} mismatches=0");
    println!("accuracy={}", correct as f64 / inputs.len().max(1) as f64);
    Ok(())
}

fn describe_model(m: &NetworkModel, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "kind=model")?;
    writeln!(out, "name={}", m.name)?;
    writeln!(out, "input_shape={:?}", m.input_shape)?;
    writeln!(
        out,
        "binarization=thresholds:{} range:{}..{}",
        m.binarization.threshold_count, m.binarization.intensity_low, m.binarization.intensity_high
    )?;
    writeln!(out, "sampling={}", m.sampling)?;
    writeln!(out, "layer_widths={:?}", m.layer_widths())?;
    writeln!(out, "gates={} skip_gates={}", m.gate_count(), m.skip_gate_count())?;
    writeln!(out, "params={}", m.param_count())?;
    writeln!(out, "classes={} temperature={}", m.class_count(), m.head.temperature)?;
    writeln!(out, "seed={}", m.seed)
}

fn inspect(path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e| Error::io(path, e);
    if bytes.starts_with(&MODEL_MAGIC) {
        match model_io::deserialize_checkpoint(&bytes) {
            Ok(st) => {
                describe_model(&st.model, &mut out).map_err(io)?;
                writeln!(out, "checkpoint epoch={} step={} optimizer={}", st.epoch, st.step, st.config.optimizer.name())
                    .map_err(io)?;
            }
            Err(_) => describe_model(&model_io::deserialize_model(&bytes)?, &mut out).map_err(io)?,
        }
    } else {
        let net = import_netlist(&bytes)?;
        let format = if bytes.starts_with(&NETLIST_MAGIC) { "compact" } else { "text" };
        writeln!(out, "kind=netlist format={format} temperature={}", net.temperature).map_err(io)?;
        drop(out);
        print_stats("netlist", &netlist_stats(&net));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use deepbool_core::compiler::random_netlist;
    use rand::SeedableRng;

    #[test]
    fn verify_sample_flags_disagreement() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let net = random_netlist(6, 40, 3, &mut rng);
        let bits: Vec<Vec<u8>> = (0..64u32).map(|v| (0..6).map(|i| ((v >> i) & 1) as u8).collect()).collect();
        let inputs: Vec<&[u8]> = bits.iter().map(|b| b.as_slice()).collect();
        let mut labels = bitsliced_labels(&net, &inputs, 64).unwrap();
        assert_eq!(verify_sample(&net, &inputs, &labels, 1).unwrap(), 64);
        labels[10] = (labels[10] + 1) % 3;
        let err = verify_sample(&net, &inputs, &labels, 1).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_MISMATCH);
        assert!(err.to_string().starts_with("BITSLICE_MISMATCH"));
    }

    #[test]
    fn lane_count_does_not_change_labels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let net = random_netlist(7, 60, 2, &mut rng);
        let bits: Vec<Vec<u8>> = (0..128u32).map(|v| (0..7).map(|i| ((v >> i) & 1) as u8).collect()).collect();
        let inputs: Vec<&[u8]> = bits.iter().map(|b| b.as_slice()).collect();
        let full = bitsliced_labels(&net, &inputs, 64).unwrap();
        for lanes in [1, 7, 33] {
            assert_eq!(bitsliced_labels(&net, &inputs, lanes).unwrap(), full);
        }
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::config("x", "y")), EXIT_CONFIG);
        assert_eq!(exit_code(&deepbool_core::Error::NonFinite { layer: 2 }.into()), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::format("model", "bad")), EXIT_DATA);
    }
}
