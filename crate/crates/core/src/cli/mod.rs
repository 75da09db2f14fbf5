//! Command-line harness: argument and config handling, CSV/SVG output.
//!
//! Every subcommand is deterministic given its flags (including `--seed`).
//! Values come from built-in defaults, then an optional JSON file given by
//! `--config`, then explicit flags. Exit codes: 0 success, 2 usage or
//! configuration error, 3 numerical divergence, 1 anything else (I/O).

pub mod experiments;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Deserialize;

use crate::error::Error;
use crate::fmt17;
use crate::levy_path::{sample_path, LevyPathSpec};
use crate::svg::{line_chart, Series};
use experiments::{
    converge, hamiltonian_rows, orbit, summarize_defects, symplectic_check, ConvergeConfig,
    ConvergeScheme, KuboExperiment, SampleKind, SymplecticCheckConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "marcus-sde",
    version,
    about = "Symplectic integration of the stochastic Kubo oscillator under compound Poisson noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a compound Poisson path and write its events to path.csv.
    SamplePath(Flags),
    /// Exact, symplectic and explicit orbits on one noise path.
    Orbit(Flags),
    /// Monitored Hamiltonian along the three orbits.
    Hamiltonian(Flags),
    /// Mean-square convergence order at the end time.
    Converge(Flags),
    /// Finite-difference symplecticity check of both one-step maps.
    SymplecticCheck(Flags),
}

/// Flags shared by all subcommands; each subcommand reads the ones it needs.
/// JSON config files use the same names as keys.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// Drift rotation rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Noise coupling.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Step size.
    #[arg(long)]
    pub dt: Option<f64>,
    /// End time.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    /// Jump rate of the compound Poisson noise.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Standard deviation of the normal jump marks.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated step sizes for `converge`.
    #[arg(long, value_delimiter = ',')]
    pub dts: Option<Vec<f64>>,
    /// Integrator for `converge`: pathwise, symplectic or explicit.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Path horizon for `sample-path` (defaults to T).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Noise channels for `sample-path`.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Initial momentum.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Initial position.
    #[arg(long)]
    pub q0: Option<f64>,
    #[arg(long = "out-dir")]
    #[serde(rename = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Also write SVG line charts next to the CSV files.
    #[arg(long)]
    #[serde(default)]
    pub svg: bool,
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Flags {
    /// Fills every unset field from `base`.
    fn or(self, base: Flags) -> Flags {
        Flags {
            alpha: self.alpha.or(base.alpha),
            beta: self.beta.or(base.beta),
            dt: self.dt.or(base.dt),
            t_end: self.t_end.or(base.t_end),
            lambda: self.lambda.or(base.lambda),
            sigma: self.sigma.or(base.sigma),
            seed: self.seed.or(base.seed),
            samples: self.samples.or(base.samples),
            dts: self.dts.or(base.dts),
            scheme: self.scheme.or(base.scheme),
            horizon: self.horizon.or(base.horizon),
            channels: self.channels.or(base.channels),
            p0: self.p0.or(base.p0),
            q0: self.q0.or(base.q0),
            out_dir: self.out_dir.or(base.out_dir),
            svg: self.svg || base.svg,
            config: self.config,
        }
    }

    fn resolve(self) -> Result<Flags, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: Flags = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        Ok(self.or(file))
    }

    fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn experiment(&self, default_t: f64) -> KuboExperiment {
        let d = KuboExperiment::default();
        KuboExperiment {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            dt: self.dt.unwrap_or(d.dt),
            t_end: self.t_end.unwrap_or(default_t),
            lambda: self.lambda.unwrap_or(d.lambda),
            sigma: self.sigma.unwrap_or(d.sigma),
            seed: self.seed.unwrap_or(d.seed),
            p0: self.p0.unwrap_or(d.p0),
            q0: self.q0.unwrap_or(d.q0),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Divergence(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Divergence(m) => write!(f, "numerical divergence: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            e if e.is_divergence() => CliError::Divergence(e.to_string()),
            Error::InvalidSpec(_) | Error::Domain(_) => CliError::Usage(e.to_string()),
            e => CliError::Failure(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let rendered = e.render().to_string();
            if e.use_stderr() && !rendered.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::SamplePath(f) => cmd_sample_path(f.resolve()?),
        Command::Orbit(f) => cmd_orbit(f.resolve()?),
        Command::Hamiltonian(f) => cmd_hamiltonian(f.resolve()?),
        Command::Converge(f) => cmd_converge(f.resolve()?),
        Command::SymplecticCheck(f) => cmd_symplectic_check(f.resolve()?),
    }
}

/// Writes to `<path>.tmp` and renames over `path` once complete.
fn write_atomic<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> crate::Result<()>,
{
    let io_err = |e: std::io::Error| CliError::Failure(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut w = BufWriter::new(File::create(&tmp).map_err(io_err)?);
    body(&mut w)?;
    w.flush().map_err(io_err)?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

fn write_svg(path: &Path, svg: String) -> Result<(), CliError> {
    write_atomic(path, |w| Ok(w.write_all(svg.as_bytes())?))
}

pub fn cmd_sample_path(flags: Flags) -> Result<(), CliError> {
    let d = KuboExperiment::default();
    let spec = LevyPathSpec::new(
        flags.lambda.unwrap_or(d.lambda),
        flags.sigma.unwrap_or(d.sigma),
        flags.channels.unwrap_or(1),
        flags.seed.unwrap_or(d.seed),
    );
    let horizon = flags.horizon.or(flags.t_end).unwrap_or(d.t_end);
    let path = sample_path(spec, horizon)?;
    let out = flags.out_dir().join("path.csv");
    write_atomic(&out, |w| path.write_csv(w))?;
    println!("events: {}", path.events().len());
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_orbit(flags: Flags) -> Result<(), CliError> {
    let exp = flags.experiment(200.0);
    let run = orbit(&exp)?;
    let dir = flags.out_dir();
    for (name, traj) in [
        ("orbit_exact.csv", &run.exact),
        ("orbit_symplectic.csv", &run.symplectic),
        ("orbit_explicit.csv", &run.explicit),
    ] {
        write_atomic(&dir.join(name), |w| traj.write_csv(w))?;
    }
    if flags.svg {
        let series = |label, traj: &crate::Trajectory| Series {
            label,
            points: traj.states.iter().map(|x| (x.p[0], x.q[0])).collect(),
        };
        let svg = line_chart(
            "Kubo orbit",
            "P",
            "Q",
            &[
                series("exact", &run.exact),
                series("symplectic", &run.symplectic),
                series("explicit", &run.explicit),
            ],
        );
        write_svg(&dir.join("orbit.svg"), svg)?;
    }
    for (label, traj) in [
        ("exact", &run.exact),
        ("symplectic", &run.symplectic),
        ("explicit", &run.explicit),
    ] {
        if let Some((t, x)) = traj.last() {
            println!("{label}: t = {t}, radius = {:.6}", x.norm());
        }
    }
    match run.explicit_failure {
        Some(e) => Err(CliError::Divergence(format!("explicit scheme: {e}"))),
        None => Ok(()),
    }
}

pub fn cmd_hamiltonian(flags: Flags) -> Result<(), CliError> {
    let exp = flags.experiment(200.0);
    let run = orbit(&exp)?;
    let rows = hamiltonian_rows(&exp, &run)?;
    let dir = flags.out_dir();
    write_atomic(&dir.join("hamiltonian.csv"), |w| {
        writeln!(w, "t,H_exact,H_symplectic,H_explicit")?;
        for (t, e, s, x) in &rows {
            writeln!(w, "{},{},{},{}", fmt17(*t), fmt17(*e), fmt17(*s), fmt17(*x))?;
        }
        Ok(())
    })?;
    if flags.svg {
        let col = |label, k: usize| Series {
            label,
            points: rows
                .iter()
                .map(|r| (r.0, [r.1, r.2, r.3][k]))
                .collect(),
        };
        let svg = line_chart(
            "Monitored Hamiltonian",
            "t",
            "H",
            &[col("exact", 0), col("symplectic", 1), col("explicit", 2)],
        );
        write_svg(&dir.join("hamiltonian.svg"), svg)?;
    }
    if let Some(&(t, e, s, x)) = rows.last() {
        println!("t = {t}: H_exact = {e:.6}, H_symplectic = {s:.6}, H_explicit = {x:.6}");
    }
    match run.explicit_failure {
        Some(e) => Err(CliError::Divergence(format!("explicit scheme: {e}"))),
        None => Ok(()),
    }
}

pub fn cmd_converge(flags: Flags) -> Result<(), CliError> {
    let d = ConvergeConfig::default();
    let scheme = match &flags.scheme {
        Some(s) => s.parse::<ConvergeScheme>().map_err(CliError::Usage)?,
        None => d.scheme,
    };
    let cfg = ConvergeConfig {
        model: flags.experiment(d.model.t_end),
        dts: flags.dts.clone().unwrap_or(d.dts),
        samples: flags.samples.unwrap_or(d.samples),
        scheme,
    };
    if cfg.samples < 2 {
        return Err(CliError::Usage(format!("--samples must be >= 2, got {}", cfg.samples)));
    }
    if cfg.dts.len() < 3 {
        return Err(CliError::Usage(format!(
            "--dts needs at least 3 values, got {}",
            cfg.dts.len()
        )));
    }
    let fit = converge(&cfg)?;
    let dir = flags.out_dir();
    write_atomic(&dir.join("converge.csv"), |w| fit.write_csv(w))?;
    write_atomic(&dir.join("converge_summary.csv"), |w| fit.write_summary(w))?;
    if flags.svg {
        let points = |f: &dyn Fn(f64, f64) -> f64| {
            fit.dts
                .iter()
                .zip(&fit.errors)
                .map(|(d, e)| (d.ln(), f(*d, *e)))
                .collect()
        };
        let svg = line_chart(
            "Mean-square end-time error",
            "log dt",
            "log error",
            &[
                Series { label: "measured", points: points(&|_, e| e.ln()) },
                Series {
                    label: "fit",
                    points: points(&|d, _| fit.slope * d.ln() + fit.intercept),
                },
            ],
        );
        write_svg(&dir.join("converge.svg"), svg)?;
    }
    for (d, e) in fit.dts.iter().zip(&fit.errors) {
        println!("dt = {d}: ms error = {e:.6e}");
    }
    println!(
        "slope = {:.4}, intercept = {:.4}, residual = {:.4}, residual vs order 0.5 = {:.4}",
        fit.slope,
        fit.intercept,
        fit.residual,
        fit.reference_residual(0.5)
    );
    Ok(())
}

pub fn cmd_symplectic_check(flags: Flags) -> Result<(), CliError> {
    let d = SymplecticCheckConfig::default();
    let cfg = SymplecticCheckConfig {
        alpha: flags.alpha.unwrap_or(d.alpha),
        beta: flags.beta.unwrap_or(d.beta),
        samples: flags.samples.unwrap_or(d.samples),
        seed: flags.seed.unwrap_or(d.seed),
    };
    if cfg.samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    let rows = symplectic_check(&cfg)?;
    let summary = summarize_defects(&rows);
    let dir = flags.out_dir();
    write_atomic(&dir.join("symplectic_check.csv"), |w| {
        writeln!(w, "kind,p,q,dt,dl,a,defect_symplectic,defect_explicit")?;
        for r in &rows {
            let kind = match r.kind {
                SampleKind::Random => "random",
                SampleKind::Control => "control",
            };
            writeln!(
                w,
                "{kind},{},{},{},{},{},{},{}",
                fmt17(r.p),
                fmt17(r.q),
                fmt17(r.dt),
                fmt17(r.dl),
                fmt17(r.a),
                fmt17(r.symplectic),
                fmt17(r.explicit)
            )?;
        }
        Ok(())
    })?;
    let min_large = summary.min_explicit_large_a.unwrap_or(f64::NAN);
    write_atomic(&dir.join("symplectic_check_summary.csv"), |w| {
        writeln!(
            w,
            "max_defect_symplectic,max_defect_explicit,min_defect_explicit_large_a,max_defect_control"
        )?;
        writeln!(
            w,
            "{},{},{},{}",
            fmt17(summary.max_symplectic),
            fmt17(summary.max_explicit),
            fmt17(min_large),
            fmt17(summary.max_control)
        )?;
        Ok(())
    })?;
    println!("max symplectic defect: {:e}", summary.max_symplectic);
    println!("max explicit defect: {:e}", summary.max_explicit);
    println!("min explicit defect with |a| >= 0.05: {min_large:e}");
    println!("max control-row defect: {:e}", summary.max_control);
    Ok(())
}
