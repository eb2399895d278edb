use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phdae::analysis::{error_report, log_grid_checked, sigma_response, GridSpec, H2Value, NormSelection, TransferEvaluator};
use phdae::h2::{irka_ph, irka_with, trksm_ph, IrkaOptions, RegionSpec, TrksmOptions};
use phdae::hinf::{iha_ph, IhaBase, IhaOptions};
use phdae::interpolation::{factor_dinf, InterpolationData, InterpolationOptions, ReducedModel, Reducer};
use phdae::io::{load_model, save_model, save_model_with};
use phdae::kyp::{kyp_minus_reducer, KypOptions};
use phdae::models::{cells_for, generate_rcl_ladder, generate_staircase, Category, GeneratorSpec, LadderParams, LadderVariant};
use phdae::rosenbrock::extract_proper;
use phdae::staircase::{validate_staircase, BlockDims, StaircaseSystem, Tolerances};
use phdae::{c64, Error, Mat, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "phdae", version, about = "Structure-preserving reduction of port-Hamiltonian DAEs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a random staircase model or an RCL ladder bundle.
    Generate(GenerateArgs),
    /// Check the staircase invariants; exit 0 iff valid.
    Validate {
        dir: PathBuf,
        /// replaces the skew, PSD, invertibility and pattern tolerances
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Print dimensions, index, rank of Dinf and sparsity stats as JSON.
    Info { dir: PathBuf },
    /// Reduce a model and write the ROM bundle with provenance.json.
    Reduce(ReduceArgs),
    /// Frequency response as CSV.
    Response {
        dir: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        fmin: f64,
        #[arg(long, default_value_t = 1e6)]
        fmax: f64,
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// H2 and/or sampled H-infinity error between two bundles.
    Error {
        fom: PathBuf,
        rom: PathBuf,
        #[arg(long, value_enum, default_value_t = NormArg::Both)]
        norm: NormArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct GenerateArgs {
    /// index-0, index-1, proper-index-2, improper-index-2, proper-index-1-2,
    /// improper-index-1-2, ladder-index1 or ladder-index12
    #[arg(long)]
    category: String,
    /// block sizes n1,n2,n3,n4 (random models)
    #[arg(long, value_delimiter = ',', num_args = 4)]
    dims: Option<Vec<usize>>,
    /// total size; block sizes or ladder cells are derived from it
    #[arg(long)]
    n: Option<usize>,
    /// ladder cells (overrides --n)
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Fixed,
    Irka,
    Trksm,
    Iha,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    H2,
    Hinf,
    Both,
}

#[derive(clap::Args)]
struct ReduceArgs {
    dir: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// number of interpolation points (maximum for trksm)
    #[arg(long)]
    order: usize,
    /// JSON file {"shifts": [[re, im], ...], "directions": [[[re, im], ...], ...]}
    #[arg(long, conflicts_with = "auto")]
    shifts: Option<PathBuf>,
    /// log-spaced imaginary shifts on [fmin, fmax] (default)
    #[arg(long)]
    auto: bool,
    #[arg(long, default_value_t = 1e-2)]
    fmin: f64,
    #[arg(long, default_value_t = 1e2)]
    fmax: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// use the minimal KYP solution in the left projection
    #[arg(long)]
    kyp_minus: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ShiftFile {
    shifts: Vec<[f64; 2]>,
    #[serde(default)]
    directions: Option<Vec<Vec<[f64; 2]>>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return report_error(&e);
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PHDAE_NUM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("PHDAE_NUM_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn report_error(e: &Error) -> ExitCode {
    let body = json!({
        "error": {
            "kind": e.kind(),
            "stage": e.stage_name(),
            "message": e.to_string(),
        }
    });
    eprintln!("{body}");
    ExitCode::from(1)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Validate { dir, tol } => validate(&dir, tol),
        Cmd::Info { dir } => info(&dir),
        Cmd::Reduce(a) => reduce(a),
        Cmd::Response { dir, fmin, fmax, points, out } => response(&dir, fmin, fmax, points, &out),
        Cmd::Error { fom, rom, norm, out } => error(&fom, &rom, norm, out.as_deref()),
    }
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    let sys = match a.category.as_str() {
        "ladder-index1" | "ladder-index12" => {
            let variant = if a.category == "ladder-index1" { LadderVariant::Index1 } else { LadderVariant::Index12 };
            let cells = match (a.cells, a.n) {
                (Some(c), _) => c,
                (None, Some(n)) => cells_for(variant, n),
                (None, None) => return Err(Error::InvalidInput("ladder needs --cells or --n".into())),
            };
            generate_rcl_ladder(cells, &LadderParams::default(), variant)?
        }
        name => {
            let category: Category = name.parse()?;
            let spec = match (a.dims, a.n) {
                (Some(d), _) => GeneratorSpec::new(category, BlockDims::new(d[0], d[1], d[2], d[3], a.m), a.seed),
                (None, Some(n)) => GeneratorSpec::with_size(category, n, a.m, a.seed),
                (None, None) => return Err(Error::InvalidInput("need --dims or --n".into())),
            };
            generate_staircase(&spec)?
        }
    };
    save_model(&sys, &a.out)?;
    let d = sys.dims();
    println!("{}", json!({ "out": a.out, "n1": d.n1, "n2": d.n2, "n3": d.n3, "n4": d.n4, "m": d.m, "index": sys.index() }));
    Ok(ExitCode::SUCCESS)
}

fn tolerances(tol: Option<f64>) -> Result<Tolerances> {
    let mut t = Tolerances::default();
    if let Some(v) = tol {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("--tol must be positive, got {v}")));
        }
        t.skew = v;
        t.psd = v;
        t.invertibility = v;
        t.pattern = v;
    }
    Ok(t)
}

fn validate(dir: &Path, tol: Option<f64>) -> Result<ExitCode> {
    let sys = load_model(dir)?;
    let rep = validate_staircase(&sys, &tolerances(tol)?)?;
    println!("{rep}");
    Ok(if rep.is_valid() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn info(dir: &Path) -> Result<ExitCode> {
    let sys = load_model(dir)?;
    let d = sys.dims();
    let proper = extract_proper(&sys)?;
    let (_, rank_dinf) = factor_dinf(proper.dinf.as_ref(), InterpolationOptions::default().dinf_tol)?;
    let (e, a, b) = (sys.e_full(), sys.a_full(), sys.b_full());
    let n = d.n().max(1) as f64;
    let out = json!({
        "n": d.n(),
        "n1": d.n1, "n2": d.n2, "n3": d.n3, "n4": d.n4, "m": d.m,
        "index": sys.index(),
        "rank_dinf": rank_dinf,
        "nnz": { "E": e.nnz(), "A": a.nnz(), "B": b.nnz() },
        "density": { "E": e.nnz() as f64 / (n * n), "A": a.nnz() as f64 / (n * n) },
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn read_shifts(path: &Path, m: usize) -> Result<InterpolationData> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let f: ShiftFile = serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    let shifts: Vec<c64> = f.shifts.iter().map(|p| c64::new(p[0], p[1])).collect();
    let dirs: Vec<Vec<c64>> = match f.directions {
        Some(d) => d.iter().map(|v| v.iter().map(|p| c64::new(p[0], p[1])).collect()).collect(),
        None => {
            let w = 1.0 / (m as f64).sqrt();
            vec![vec![c64::new(w, 0.0); m]; shifts.len()]
        }
    };
    InterpolationData::closed(&shifts, &dirs)
}

fn interpolation_data(a: &ReduceArgs, r: usize, m: usize) -> Result<InterpolationData> {
    match &a.shifts {
        Some(p) => {
            let d = read_shifts(p, m)?;
            if d.r() != r {
                return Err(Error::InvalidInput(format!("--order {r} but the shift file gives {} points after conjugate closure", d.r())));
            }
            Ok(d)
        }
        None => InterpolationData::imaginary_axis(r, m, a.fmin, a.fmax),
    }
}

fn irka_opts(a: &ReduceArgs) -> IrkaOptions {
    let mut o = IrkaOptions::default();
    if let Some(n) = a.max_iter {
        o.max_iter = n;
    }
    if let Some(t) = a.tol {
        o.shift_tol = t;
    }
    o
}

fn reduce(a: ReduceArgs) -> Result<ExitCode> {
    if a.order == 0 {
        return Err(Error::InvalidInput("--order must be positive".into()));
    }
    let sys = load_model(&a.dir)?;
    let m = sys.m();
    let interp = InterpolationOptions::default();
    let rom: ReducedModel = match a.method {
        Method::Fixed => {
            let data = interpolation_data(&a, a.order, m)?;
            if a.kyp_minus {
                let (red, kyp) = kyp_minus_reducer(&sys, interp, &KypOptions::default())?;
                let (mut rom, _, _) = red.interpolate(&data, "fixed-kyp-minus")?;
                rom.provenance.kyp_minus = true;
                rom.provenance.warnings.extend(kyp.warnings);
                rom
            } else {
                Reducer::new(&sys, interp)?.interpolate(&data, "fixed")?.0
            }
        }
        Method::Irka => {
            let data = interpolation_data(&a, a.order, m)?;
            let opts = irka_opts(&a);
            if a.kyp_minus {
                let (red, kyp) = kyp_minus_reducer(&sys, interp, &KypOptions::default())?;
                let (mut rom, _) = irka_with(&red, &data, &opts)?;
                rom.provenance.warnings.extend(kyp.warnings);
                rom
            } else {
                irka_ph(&sys, &data, &opts)?.0
            }
        }
        Method::Trksm => {
            if a.kyp_minus {
                return Err(Error::Unsupported("--kyp-minus is available for fixed and irka".into()));
            }
            if a.order < 2 {
                return Err(Error::InvalidInput("trksm needs --order of at least 2".into()));
            }
            let init = match &a.shifts {
                Some(p) => read_shifts(p, m)?,
                None => InterpolationData::imaginary_axis(1, m, a.fmin, a.fmax)?,
            };
            let region = RegionSpec::imaginary_axis(a.fmin, a.fmax, 200)?;
            let mut opts = TrksmOptions::new(a.order);
            if let Some(t) = a.tol {
                opts.tol = t;
            }
            trksm_ph(&sys, &init, &region, &opts)?.0
        }
        Method::Iha => {
            if a.kyp_minus {
                return Err(Error::Unsupported("--kyp-minus is available for fixed and irka".into()));
            }
            let data = interpolation_data(&a, a.order, m)?;
            let mut opts = IhaOptions::default();
            if a.shifts.is_some() {
                opts.base = IhaBase::Fixed;
            } else {
                opts.base = IhaBase::Irka(irka_opts(&a));
            }
            iha_ph(&sys, &data, None, &opts)?.0
        }
    };
    let report = validate_staircase(&rom.system, &Tolerances::default())?;
    if !report.is_valid() {
        return Err(Error::Consistency(format!("reduced model failed validation:\n{report}")));
    }
    save_model_with(&rom.system, &a.out, Some(&rom.provenance))?;
    let d = rom.system.dims();
    println!(
        "{}",
        json!({
            "out": a.out,
            "method": rom.provenance.method,
            "order": rom.order(),
            "r_prime": rom.r_prime,
            "q": rom.q,
            "dims": [d.n1, d.n2, d.n3, d.n4],
            "converged": rom.provenance.converged,
            "iterations": rom.provenance.history.len(),
            "warnings": rom.provenance.warnings,
        })
    );
    Ok(ExitCode::SUCCESS)
}

fn response(dir: &Path, fmin: f64, fmax: f64, points: usize, out: &Path) -> Result<ExitCode> {
    let sys = load_model(dir)?;
    let grid = log_grid_checked(fmin, fmax, points)?;
    let fr = sigma_response(&TransferEvaluator::new(&sys)?, &grid)?;
    write_response_csv(&sys, &fr.frequencies, &fr.values, &fr.sigma, out)?;
    if !fr.skipped.is_empty() {
        eprintln!("{}", json!({ "warning": "pencil singular at some grid points", "skipped": fr.skipped }));
    }
    Ok(ExitCode::SUCCESS)
}

fn write_response_csv(sys: &StaircaseSystem, w: &[f64], h: &[Mat<c64>], sigma: &[f64], out: &Path) -> Result<()> {
    let m = sys.m();
    let io = |e: csv::Error| Error::Parse { path: out.display().to_string(), msg: e.to_string() };
    let mut wr = csv::Writer::from_path(out).map_err(io)?;
    let mut header = vec!["omega".to_string()];
    for i in 1..=m {
        for j in 1..=m {
            header.push(format!("Re_H{i}{j}"));
            header.push(format!("Im_H{i}{j}"));
        }
    }
    header.push("sigma_max".into());
    wr.write_record(&header).map_err(io)?;
    for ((w, h), s) in w.iter().zip(h).zip(sigma) {
        let mut row = vec![format!("{w:.16e}")];
        for i in 0..m {
            for j in 0..m {
                row.push(format!("{:.16e}", h[(i, j)].re));
                row.push(format!("{:.16e}", h[(i, j)].im));
            }
        }
        row.push(format!("{s:.16e}"));
        wr.write_record(&row).map_err(io)?;
    }
    wr.flush().map_err(|e| Error::Io { path: out.display().to_string(), source: e })
}

fn error(fom: &Path, rom: &Path, norm: NormArg, out: Option<&Path>) -> Result<ExitCode> {
    let f = load_model(fom)?;
    let r = load_model(rom)?;
    let norms = match norm {
        NormArg::H2 => NormSelection::H2,
        NormArg::Hinf => NormSelection::Hinf,
        NormArg::Both => NormSelection::Both,
    };
    let rep = error_report(&f, &r, norms, &GridSpec::default())?;
    let text = serde_json::to_string_pretty(&rep)?;
    if let Some(p) = out {
        fs::write(p, text + "\n").map_err(|e| Error::Io { path: p.display().to_string(), source: e })?;
    } else {
        println!("{text}");
    }
    match &rep.h2 {
        Some(H2Value::Unbounded { reason }) => {
            let kind = reason.split(':').next().unwrap_or(reason);
            println!("h2: unbounded ({kind})");
        }
        Some(H2Value::Finite { value, method }) => println!("h2: {value:.6e} ({method})"),
        None => {}
    }
    if let Some(h) = &rep.hinf {
        if rep.hinf_unbounded {
            println!("hinf: unbounded (improper mismatch)");
        } else {
            println!("hinf: {:.6e} at omega = {:.6e}", h.value, h.omega);
        }
    }
    Ok(ExitCode::SUCCESS)
}
