use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use flycl::analysis;
use flycl::harness::{
    self, build_cil_stream, recipes, run_scratch_baselines, write_run, ExperimentConfig,
    MetricsLedger, ProtocolKind, RawConfig,
};
use flycl::report::build_report;
use flycl::fly::{FlyModel, SparseCodes};
use flycl::tasks::{gen_odor_dataset, load_idx, write_feature_file, OdorConfig, TaskSource};
use flycl::{write_atomic, Error};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "flycl", version, about = "Fly-model continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (`key = value` lines). A bare recipe name (odor, stream,
    /// imbalance) selects a built-in config.
    #[arg(long)]
    config: Option<String>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for seeds and sweep points (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Class-incremental run over every configured seed.
    RunCil(Common),
    /// Permuted streaming run over every configured seed.
    RunStream(Common),
    /// One run per value of a config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Key to sweep (`coding_level`, `degree`, `expansion_ratio`, or any config key).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Single-task baselines used for forward transfer.
    Scratch(Common),
    /// Angle pdf, variance and Monte Carlo histogram. Keys: n, pairs, bins, seed.
    AnalyzeAngles(Common),
    /// Distinct-KC probability over r = 1..n. Keys: n, m.
    AnalyzeBirthday(Common),
    /// FLOPs counts. Keys: n_in, n_kc, r, k, n_classes.
    AnalyzeFlops(Common),
    /// KC overlap between the first two tasks, top-k against k = 1.
    AnalyzeOverlap(Common),
    /// Writes the synthetic odor dataset as feature files.
    GenOdor(Common),
    /// Converts IDX images and labels into a feature file.
    IngestIdx(Common),
    /// Aggregates run directories into figure tables and verdicts.
    Report {
        /// Root holding the run directories.
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            _ => 1,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

type Out<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(c: &Common) -> Out<ExperimentConfig> {
    let mut raw = match &c.config {
        None => RawConfig::default(),
        Some(p) if Path::new(p).is_file() => RawConfig::parse(&std::fs::read_to_string(p)?)?,
        Some(name) => match recipes::text(name) {
            Some(t) => RawConfig::parse(t)?,
            None => return Err(usage(format!("config {name:?} is neither a file nor a recipe"))),
        },
    };
    for pair in &c.set {
        raw.apply_override(pair)?;
    }
    Ok(ExperimentConfig::from_raw(&raw)?)
}

/// `--set` pairs for the analysis commands, restricted to `allowed` keys.
fn analysis_keys(c: &Common, allowed: &[&str]) -> Out<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for pair in &c.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("override `{pair}` is not key=value")))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(usage(format!("unknown key `{k}`; expected one of {}", allowed.join(", "))));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str, default: T) -> Out<T> {
    match m.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| usage(format!("bad value for `{key}`: {v:?}"))),
    }
}

fn out_dir(c: &Common) -> Out<PathBuf> {
    c.out.clone().ok_or_else(|| usage("--out is required"))
}

fn pool(c: &Common) -> Out<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure { code: 1, msg: e.to_string() })
}

fn say(c: &Common, msg: impl AsRef<str>) {
    if !c.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn run_seeds(c: &Common, cfg: &ExperimentConfig) -> Out<Vec<MetricsLedger>> {
    let ledgers: flycl::Result<Vec<MetricsLedger>> = pool(c)?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| {
                let t = Instant::now();
                let l = harness::run_experiment(cfg, s);
                say(c, format!("{} seed {s}: {:.1}s", cfg.variant_name(), t.elapsed().as_secs_f64()));
                l
            })
            .collect()
    });
    Ok(ledgers?)
}

fn run(c: &Common, protocol: ProtocolKind) -> Out<()> {
    let name = match protocol {
        ProtocolKind::Cil => "cil",
        ProtocolKind::Stream => "stream",
    };
    let mut cfg = load_config(c)?;
    if cfg.protocol != protocol {
        cfg = cfg.with("protocol", name)?;
    }
    let dir = out_dir(c)?;
    let ledgers = run_seeds(c, &cfg)?;
    let summary = write_run(&dir, &cfg, &ledgers)?;
    for (k, v) in &summary.aggregate.mean {
        say(c, format!("{k} = {v:.4}"));
    }
    Ok(())
}

fn sweep(c: &Common, param: &str, values: &[String]) -> Out<()> {
    let cfg = load_config(c)?;
    let dir = out_dir(c)?;
    let points = harness::sweep_configs(&cfg, param, values)?;
    pool(c)?.install(|| {
        points.par_iter().try_for_each(|(value, point)| -> Out<()> {
            let ledgers: flycl::Result<Vec<MetricsLedger>> =
                point.seeds.iter().map(|&s| harness::run_experiment(point, s)).collect();
            let sub = dir.join(format!("{param}={value}"));
            write_run(&sub, point, &ledgers?)?;
            say(c, format!("{param}={value} done"));
            Ok(())
        })
    })
}

fn scratch(c: &Common) -> Out<()> {
    let cfg = load_config(c)?;
    let dir = out_dir(c)?;
    let rows: flycl::Result<Vec<(u64, Vec<Option<f64>>)>> = pool(c)?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| Ok((s, run_scratch_baselines(&cfg, &build_cil_stream(&cfg, s)?, s)?)))
            .collect()
    });
    let mut csv = String::from("seed,task,scratch_acc\n");
    for (s, accs) in rows? {
        for (i, a) in accs.iter().enumerate() {
            if let Some(a) = a {
                let _ = writeln!(csv, "{s},{},{a:?}", i + 1);
            }
        }
    }
    std::fs::create_dir_all(&dir)?;
    write_atomic(&dir.join("scratch.csv"), csv.as_bytes())?;
    Ok(())
}

fn write_csv(c: &Common, name: &str, csv: &str) -> Out<()> {
    match &c.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_atomic(&dir.join(name), csv.as_bytes())?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn analyze_angles(c: &Common) -> Out<()> {
    let m = analysis_keys(c, &["n", "pairs", "bins", "seed"])?;
    let n: usize = get(&m, "n", 50)?;
    let pairs: usize = get(&m, "pairs", 100_000)?;
    let bins: usize = get(&m, "bins", 20)?;
    let seed: u64 = get(&m, "seed", 0)?;
    let h = analysis::sample_angle_histogram(n, pairs, bins, seed)?;
    let density = h.density();
    let mut csv = String::from("quantity,parameter,value\n");
    let _ = writeln!(csv, "pdf_mass,n={n},{:?}", analysis::angle_pdf_mass(n, 0.0, std::f64::consts::PI)?);
    let _ = writeln!(csv, "variance,n={n},{:?}", analysis::angle_variance(n)?);
    let _ = writeln!(csv, "sample_mean,n={n},{:?}", h.mean);
    let _ = writeln!(csv, "l1_to_pdf,n={n},{:?}", analysis::histogram_l1_to_pdf(&h)?);
    for (i, d) in density.iter().enumerate() {
        let mid = 0.5 * (h.edges[i] + h.edges[i + 1]);
        let _ = writeln!(csv, "empirical_density,theta={mid:?},{d:?}");
        let _ = writeln!(csv, "analytic_density,theta={mid:?},{:?}", analysis::angle_pdf(n, mid)?);
    }
    write_csv(c, "angles.csv", &csv)
}

fn analyze_birthday(c: &Common) -> Out<()> {
    let m = analysis_keys(c, &["n", "m"])?;
    let n: u64 = get(&m, "n", 50)?;
    let kcs: u64 = get(&m, "m", 2000)?;
    let best = analysis::birthday_argmax(n, kcs)?;
    let mut csv = String::from("quantity,parameter,value\n");
    for r in 1..=n {
        let b = analysis::birthday_probability(n, r, kcs)?;
        let _ = writeln!(csv, "p_distinct,r={r},{:?}", b.p);
        let _ = writeln!(csv, "ln_p_distinct,r={r},{:?}", b.ln_p);
    }
    let _ = writeln!(csv, "argmax_r,n={n} m={kcs},{best}");
    write_csv(c, "birthday.csv", &csv)
}

fn analyze_flops(c: &Common) -> Out<()> {
    let m = analysis_keys(c, &["n_in", "n_kc", "r", "k", "n_classes"])?;
    let f = analysis::flops_report(
        get(&m, "n_in", 50)?,
        get(&m, "n_kc", 2000)?,
        get(&m, "r", 6)?,
        get(&m, "k", 0.01)?,
        get(&m, "n_classes", 10)?,
    )?;
    let csv = format!(
        "quantity,parameter,value\ndense_forward,,{}\nfly_forward,,{}\nhead_update,,{}\n",
        f.dense_forward, f.fly_forward, f.head_update
    );
    if !c.quiet {
        eprintln!("{}", f.notes);
    }
    write_csv(c, "flops.csv", &csv)
}

fn analyze_overlap(c: &Common) -> Out<()> {
    let cfg = load_config(c)?;
    let seed = cfg.seeds[0];
    let stream = build_cil_stream(&cfg, seed)?;
    if stream.tasks.len() < 2 {
        return Err(usage("overlap needs at least two tasks"));
    }
    let mut csv = String::from("quantity,parameter,value\n");
    for level in [cfg.coding_level, 1.0] {
        let point = cfg.with("k", &level.to_string())?;
        let model = FlyModel::new(point.model_spec(stream.n_classes(), seed))?;
        let codes = |i: usize| -> flycl::Result<SparseCodes> {
            model
                .forward_batch(stream.tasks[i].train.features())?
                .codes
                .ok_or_else(|| Error::NotApplicable("ablated model has no KC codes".into()))
        };
        let ov = analysis::kc_overlap(&codes(0)?, &codes(1)?, point.kc, analysis::PROFILE_THRESHOLD)?;
        let _ = writeln!(csv, "kc_overlap,k={level},{ov:?}");
    }
    write_csv(c, "overlap.csv", &csv)
}

fn gen_odor(c: &Common) -> Out<()> {
    let cfg = load_config(c)?;
    let dir = out_dir(c)?;
    let d = gen_odor_dataset(&OdorConfig {
        n_dims: cfg.pn,
        n_classes: cfg.n_classes,
        noise_sigma: cfg.noise,
        train_per_class: cfg.train_per_class,
        test_per_class: cfg.test_per_class,
        seed: cfg.seeds[0],
    })?;
    std::fs::create_dir_all(&dir)?;
    write_feature_file(&dir.join("odor_train.flyf"), &d.train)?;
    write_feature_file(&dir.join("odor_test.flyf"), &d.test)?;
    Ok(())
}

fn ingest_idx(c: &Common) -> Out<()> {
    let m = analysis_keys(c, &["images", "labels", "name"])?;
    let (Some(images), Some(labels)) = (m.get("images"), m.get("labels")) else {
        return Err(usage("ingest-idx needs --set images=PATH --set labels=PATH"));
    };
    let dir = out_dir(c)?;
    let data = load_idx(Path::new(images), Path::new(labels))?;
    let name = m.get("name").map(String::as_str).unwrap_or("idx");
    std::fs::create_dir_all(&dir)?;
    write_feature_file(&dir.join(format!("{name}.flyf")), &data)?;
    say(c, format!("{} samples of width {}", data.len(), data.dim()));
    Ok(())
}

fn report(dir: &Path, c: &Common) -> Out<()> {
    let r = build_report(dir)?;
    let out = c.out.clone().unwrap_or_else(|| dir.join("report"));
    std::fs::create_dir_all(&out)?;
    for (stem, csv) in &r.figures {
        write_atomic(&out.join(format!("{stem}.csv")), csv.as_bytes())?;
    }
    let json = serde_json::to_string_pretty(&r.verdicts).map_err(Error::from)?;
    write_atomic(&out.join("verdicts.json"), json.as_bytes())?;
    for v in &r.verdicts {
        println!("{}", v.line());
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Out<()> {
    match cmd {
        Command::RunCil(c) => run(&c, ProtocolKind::Cil),
        Command::RunStream(c) => run(&c, ProtocolKind::Stream),
        Command::Sweep { common, param, values } => sweep(&common, &param, &values),
        Command::Scratch(c) => scratch(&c),
        Command::AnalyzeAngles(c) => analyze_angles(&c),
        Command::AnalyzeBirthday(c) => analyze_birthday(&c),
        Command::AnalyzeFlops(c) => analyze_flops(&c),
        Command::AnalyzeOverlap(c) => analyze_overlap(&c),
        Command::GenOdor(c) => gen_odor(&c),
        Command::IngestIdx(c) => ingest_idx(&c),
        Command::Report { dir, common } => report(&dir, &common),
    }
}
