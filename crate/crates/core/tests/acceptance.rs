//! Acceptance run: one line per criterion, nonzero exit if any fails.
//! `ACCEPTANCE_ONLY=3,5` restricts the run to a subset.

use std::time::{Duration, Instant};

use phdae::analysis::{
    h2_error, hinf_error, polynomial_mismatch, verify_interpolation, GridSpec, H2Value, TransferEvaluator,
};
use phdae::h2::{irka_ph, irka_with, trksm_ph, IrkaOptions, RegionSpec, TrksmOptions};
use phdae::hinf::{build_certificate, iha_ph, perturb_rom, IhaBase, IhaOptions, NelderMeadOptions, PerturbationParams};
use phdae::interpolation::{InterpolationData, InterpolationOptions, Provenance, ReducedModel, Reducer};
use phdae::kyp::{kyp_minus_reducer, kyp_residual, minimal_kyp_solution, KypOptions};
use phdae::linalg::dense;
use phdae::linalg::SparseMatrix;
use phdae::models::{cells_for, generate_rcl_ladder, generate_staircase, Category, GeneratorSpec, LadderParams, LadderVariant};
use phdae::rosenbrock::{extract_proper, ProperSubsystem};
use phdae::staircase::{mat_from_rows, validate_staircase, BlockDims, StaircaseSystem, Tolerances};
use phdae::{c64, Mat};
use faer::linalg::solvers::Solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- suite

struct Fom {
    label: String,
    category: Category,
    sys: StaircaseSystem,
}

fn suite() -> Vec<Fom> {
    let mut out = Vec::new();
    for (ci, c) in Category::ALL.into_iter().enumerate() {
        for k in 0..10u64 {
            let n = 24 + 17 * k as usize; // 24..177
            let m = 1 + (k as usize % 2);
            let seed = 1000 * ci as u64 + k;
            let sys = generate_staircase(&GeneratorSpec::with_size(c, n, m, seed)).expect("generator");
            out.push(Fom { label: format!("{c} n={} m={m} seed={seed}", sys.n_states()), category: c, sys });
        }
    }
    out
}

const METHODS: [&str; 5] = ["fixed", "irka", "trksm", "iha", "irka-kyp-minus"];

fn run_method(sys: &StaircaseSystem, method: &str) -> phdae::Result<ReducedModel> {
    let m = sys.m();
    let base = InterpolationData::imaginary_axis(4, m, 0.1, 10.0)?;
    let irka = IrkaOptions { max_iter: 50, ..Default::default() };
    match method {
        "fixed" => {
            let data = InterpolationData::imaginary_axis(5, m, 0.1, 10.0)?;
            Ok(Reducer::new(sys, InterpolationOptions::default())?.interpolate(&data, "fixed")?.0)
        }
        "irka" => Ok(irka_ph(sys, &base, &irka)?.0),
        "trksm" => {
            let init = InterpolationData::imaginary_axis(1, m, 0.1, 10.0)?;
            let region = RegionSpec::imaginary_axis(1e-2, 1e2, 200)?;
            Ok(trksm_ph(sys, &init, &region, &TrksmOptions::new(6))?.0)
        }
        "iha" => {
            let opts = IhaOptions {
                base: IhaBase::Irka(IrkaOptions { max_iter: 30, ..Default::default() }),
                optimizer: NelderMeadOptions { max_evals: 150, ..Default::default() },
                ..Default::default()
            };
            Ok(iha_ph(sys, &base, None, &opts)?.0)
        }
        "irka-kyp-minus" => {
            let (red, _) = kyp_minus_reducer(sys, InterpolationOptions::default(), &KypOptions::default())?;
            Ok(irka_with(&red, &base, &irka)?.0)
        }
        _ => unreachable!(),
    }
}

fn provenance_data(p: &Provenance) -> phdae::Result<InterpolationData> {
    let s = p.shifts.iter().map(|z| c64::new(z[0], z[1])).collect();
    let d = p.directions.iter().map(|v| v.iter().map(|z| c64::new(z[0], z[1])).collect()).collect();
    InterpolationData::new(s, d)
}

struct SuiteRun {
    fom: usize,
    method: &'static str,
    rom: phdae::Result<ReducedModel>,
}

fn run_suite(foms: &[Fom]) -> (Vec<SuiteRun>, Duration) {
    let t = Instant::now();
    let mut runs = Vec::new();
    for (i, f) in foms.iter().enumerate() {
        for method in METHODS {
            runs.push(SuiteRun { fom: i, method, rom: run_method(&f.sys, method) });
        }
    }
    (runs, t.elapsed())
}

// ---------------------------------------------------------------- criteria

fn criterion1(foms: &[Fom], runs: &[SuiteRun], elapsed: Duration) -> Outcome {
    let tol = Tolerances::default();
    let mut bad = Vec::new();
    for r in runs {
        match &r.rom {
            Ok(rom) => match validate_staircase(&rom.system, &tol) {
                Ok(rep) if rep.is_valid() => {}
                Ok(rep) => bad.push(format!("{} / {}: {:?}", foms[r.fom].label, r.method, rep.failures().iter().map(|c| &c.name).collect::<Vec<_>>())),
                Err(e) => bad.push(format!("{} / {}: {e}", foms[r.fom].label, r.method)),
            },
            Err(e) => bad.push(format!("{} / {}: reduction failed: {e}", foms[r.fom].label, r.method)),
        }
    }
    let in_time = elapsed < Duration::from_secs(300);
    let pass = bad.is_empty() && in_time;
    let mut d = format!("{} of {} ROMs valid, suite time {:.1}s (limit 300s)", runs.len() - bad.len(), runs.len(), elapsed.as_secs_f64());
    if let Some(b) = bad.first() {
        d += &format!("; first failure: {b}");
    }
    outcome(pass, d)
}

fn criterion2(foms: &[Fom], runs: &[SuiteRun]) -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut errors = Vec::new();
    for r in runs {
        let Ok(rom) = &r.rom else {
            errors.push(format!("{} / {}: no ROM", foms[r.fom].label, r.method));
            continue;
        };
        let res = (|| {
            let data = provenance_data(&rom.provenance)?;
            let fe = TransferEvaluator::new(&foms[r.fom].sys)?;
            let re = TransferEvaluator::new(&rom.system)?;
            verify_interpolation(&fe, &re, &data, 1e-8)
        })();
        match res {
            Ok(rep) => {
                if rep.max_residual > worst {
                    worst = rep.max_residual;
                    worst_at = format!("{} / {}", foms[r.fom].label, r.method);
                }
            }
            Err(e) => errors.push(format!("{} / {}: {e}", foms[r.fom].label, r.method)),
        }
    }
    let pass = errors.is_empty() && worst <= 1e-8;
    let mut d = format!("max tangential residual {worst:.2e} (tol 1e-8) at {worst_at}");
    if let Some(e) = errors.first() {
        d += &format!("; {} errors, first: {e}", errors.len());
    }
    outcome(pass, d)
}

fn dinf_oracle(sys: &StaircaseSystem) -> Mat<f64> {
    // −C4 A14⁻¹ E11 A41⁻¹ B4 with C4 = G4ᵀ, A14 = J14, A41 = J41, B4 = G4
    let m = sys.m();
    if sys.dims().n4 == 0 {
        return Mat::zeros(m, m);
    }
    let g4 = sys.g_block(4).to_dense();
    let a14 = (sys.j_block(1, 4).to_dense() - sys.r_block(1, 4).to_dense()).to_owned();
    let a41 = (sys.j_block(4, 1).to_dense() - sys.r_block(4, 1).to_dense()).to_owned();
    let e11 = sys.e11.to_dense();
    let y = a41.partial_piv_lu().solve(&g4);
    let z = a14.partial_piv_lu().solve(&e11 * &y);
    let d = g4.transpose() * z;
    Mat::from_fn(m, m, |i, j| -d[(i, j)])
}

fn criterion3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_h = 0.0f64;
    let mut worst_d = 0.0f64;
    let mut errors = Vec::new();
    for k in 0..20u64 {
        let c = Category::ALL[k as usize % 6];
        let n = rng.random_range(8..=30);
        let m = rng.random_range(1..=3);
        let sys = match generate_staircase(&GeneratorSpec::with_size(c, n, m, 300 + k)) {
            Ok(s) => s,
            Err(e) => {
                errors.push(format!("{c}: {e}"));
                continue;
            }
        };
        let res = (|| -> phdae::Result<()> {
            let p = extract_proper(&sys)?;
            let full = TransferEvaluator::new(&sys)?;
            let pencil = p.ap.bordered_pencil(&p.ep)?;
            let cp = dense::to_c(p.cp.as_ref());
            for _ in 0..10 {
                let s = c64::new(rng.random_range(-1.0..3.0), rng.random_range(-20.0..20.0));
                let h = full.eval(s)?;
                // Cp(sEp − Ap)⁻¹Bp + Dp + s·Dinf
                let hp = &cp * p.resolvent_bp(&pencil, s)?;
                let dec = Mat::from_fn(m, m, |i, j| hp[(i, j)] + p.dp[(i, j)] + s * p.dinf[(i, j)]);
                worst_h = worst_h.max(phdae::analysis::rel_err(dec.as_ref(), h.as_ref()));
            }
            let oracle = dinf_oracle(&sys);
            let scale = dense::max_abs(oracle.as_ref()).max(1.0);
            worst_d = worst_d.max(dense::max_abs((&oracle - &p.dinf).as_ref()) / scale);
            Ok(())
        })();
        if let Err(e) = res {
            errors.push(format!("{c} n={n}: {e}"));
        }
    }
    let pass = errors.is_empty() && worst_h <= 1e-9 && worst_d <= 1e-12;
    let mut d = format!("transfer decomposition rel err {worst_h:.2e} (tol 1e-9), Dinf vs closed form {worst_d:.2e} (tol 1e-12)");
    if let Some(e) = errors.first() {
        d += &format!("; error: {e}");
    }
    outcome(pass, d)
}

fn rank_psd(a: &Mat<f64>) -> usize {
    let ev = dense::sym_eigenvalues(a.as_ref()).unwrap_or_default();
    let big = ev.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    ev.iter().filter(|v| **v > 1e-12 * big.max(f64::MIN_POSITIVE)).count()
}

fn criterion4(foms: &[Fom], runs: &[SuiteRun]) -> Outcome {
    let mut bad = Vec::new();
    let mut checked = 0;
    for r in runs {
        let Ok(rom) = &r.rom else { continue };
        let f = &foms[r.fom];
        let q = rank_psd(&dinf_oracle(&f.sys));
        let d = rom.system.dims();
        checked += 1;
        if d.n1 != q || d.n4 != q || d.n3 != 0 {
            bad.push(format!("{} / {}: ROM dims {:?}, rank Dinf {q}", f.label, r.method, (d.n1, d.n2, d.n3, d.n4)));
        }
        if f.category == Category::Index1 && (rom.system.index() != 0 || rom.order() != d.n2 || d.n2 != rom.r_prime) {
            bad.push(format!("{} / {}: index {} order {} r' {}", f.label, r.method, rom.system.index(), rom.order(), rom.r_prime));
        }
    }
    let mut d = format!("{checked} ROMs checked, {} violations", bad.len());
    if let Some(b) = bad.first() {
        d += &format!("; first: {b}");
    }
    outcome(bad.is_empty() && checked == foms.len() * METHODS.len(), d)
}

/// Left eigen-triples of the reduced proper block computed directly from the ROM.
fn rom_poles(rom: &StaircaseSystem) -> Vec<(c64, Vec<c64>)> {
    let e = rom.e22.to_dense();
    let a = rom.j_block(2, 2).to_dense() - rom.r_block(2, 2).to_dense();
    let b = rom.g_block(2).to_dense() - rom.p_block(2).to_dense();
    let k = e.nrows();
    let mt = e.partial_piv_lu().solve(a.transpose());
    let evd = mt.eigen().expect("eigen");
    let s = evd.S().column_vector();
    let u = evd.U();
    (0..k)
        .map(|i| {
            let lam = s[i];
            let r: Vec<c64> = (0..b.ncols()).map(|p| (0..k).map(|j| u[(j, i)] * b[(j, p)]).sum()).collect();
            (lam, r)
        })
        .collect()
}

fn criterion5() -> Outcome {
    let mut converged = 0;
    let mut worst_shift = 0.0f64;
    let mut worst_oc = 0.0f64;
    let mut errors = Vec::new();
    let cats = [Category::Index0, Category::Index1, Category::ProperIndex2, Category::ImproperIndex2, Category::ProperIndex12, Category::ImproperIndex12];
    for k in 0..10u64 {
        let c = cats[k as usize % 6];
        let n = 20 + 4 * k as usize;
        let m = 1 + (k as usize % 2);
        let r = 2 + (k as usize % 4) * 2; // 2..8
        let res = (|| -> phdae::Result<bool> {
            let sys = generate_staircase(&GeneratorSpec::with_size(c, n, m, 500 + k))?;
            let init = InterpolationData::imaginary_axis(r, m, 0.1, 10.0)?;
            let opts = IrkaOptions { max_iter: 300, shift_tol: 1e-10, ..Default::default() };
            let (rom, hist) = irka_ph(&sys, &init, &opts)?;
            if !hist.converged {
                return Ok(false);
            }
            let poles = rom_poles(&rom.system);
            let shifts: Vec<c64> = rom.provenance.shifts.iter().map(|z| c64::new(z[0], z[1])).collect();
            let scale = shifts.iter().map(|s| s.norm()).fold(0.0f64, f64::max);
            // multiset match, greedy on the closest remaining mirrored pole
            let mut free: Vec<c64> = poles.iter().map(|p| -p.0).collect();
            if free.len() != shifts.len() {
                worst_shift = f64::INFINITY;
            }
            for s in &shifts {
                let (j, d) = free
                    .iter()
                    .enumerate()
                    .map(|(j, p)| (j, (*p - *s).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap_or((0, f64::INFINITY));
                worst_shift = worst_shift.max(d / scale);
                if j < free.len() {
                    free.swap_remove(j);
                }
            }
            let fe = TransferEvaluator::new(&sys)?;
            let re = TransferEvaluator::new(&rom.system)?;
            for (lam, rdir) in &poles {
                let sig = -*lam;
                let rv = Mat::from_fn(m, 1, |i, _| rdir[i]);
                let hf = fe.eval(sig)? * &rv;
                let hr = re.eval(sig)? * &rv;
                worst_oc = worst_oc.max((&hf - &hr).norm_l2() / hf.norm_l2().max(f64::MIN_POSITIVE));
            }
            Ok(true)
        })();
        match res {
            Ok(true) => converged += 1,
            Ok(false) => {}
            Err(e) => errors.push(format!("{c} n={n} r={r}: {e}")),
        }
    }
    let pass = errors.is_empty() && converged > 0 && worst_shift <= 1e-5 && worst_oc <= 1e-6;
    let mut d = format!(
        "{converged}/10 converged; shifts vs mirrored poles {worst_shift:.2e} (tol 1e-5), right tangential conditions {worst_oc:.2e} (tol 1e-6)"
    );
    if let Some(e) = errors.first() {
        d += &format!("; error: {e}");
    }
    outcome(pass, d)
}

fn criterion6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut invalid = 0;
    let mut zero_exact = true;
    let mut errors = Vec::new();
    let mut count = 0;
    for k in 0..10u64 {
        let c = Category::ALL[k as usize % 6];
        let m = 1 + (k as usize % 3);
        let res = (|| -> phdae::Result<()> {
            let sys = generate_staircase(&GeneratorSpec::with_size(c, 40, m, 600 + k))?;
            let red = Reducer::new(&sys, InterpolationOptions::default())?;
            let data = InterpolationData::imaginary_axis(5, m, 0.1, 10.0)?;
            let (rom0, basis, parts) = red.interpolate(&data, "fixed")?;
            let cert = build_certificate(basis.v_block(2), basis.v2bar.as_ref(), basis.tv.as_ref(), &data)?;
            let same = perturb_rom(&parts, &cert, &PerturbationParams::zeros(m))?;
            let rom_same = red.assemble(&same, rom0.provenance.clone())?;
            zero_exact &= same == parts && rom_same.system == rom0.system;
            let fe = TransferEvaluator::new(&sys)?;
            for _ in 0..10 {
                let theta: Vec<f64> = (0..m * m).map(|_| rng.random_range(-2.0..2.0)).collect();
                let tp = PerturbationParams::from_flat(&theta, m)?;
                let pp = perturb_rom(&parts, &cert, &tp)?;
                let rom = red.assemble(&pp, rom0.provenance.clone())?;
                if !validate_staircase(&rom.system, &Tolerances::default())?.is_valid() {
                    invalid += 1;
                }
                let rep = verify_interpolation(&fe, &TransferEvaluator::new(&rom.system)?, &data, 1e-8)?;
                worst = worst.max(rep.max_residual);
                count += 1;
            }
            Ok(())
        })();
        if let Err(e) = res {
            errors.push(format!("{c}: {e}"));
        }
    }
    let pass = errors.is_empty() && count == 100 && invalid == 0 && worst <= 1e-8 && zero_exact;
    let mut d = format!("{count} perturbations, {invalid} invalid, max residual {worst:.2e} (tol 1e-8), theta=0 identical: {zero_exact}");
    if let Some(e) = errors.first() {
        d += &format!("; error: {e}");
    }
    outcome(pass, d)
}

fn scalar_system(e: f64, r: f64, g: f64, p: f64, s: f64) -> StaircaseSystem {
    let one = |v: f64| SparseMatrix::from_dense(mat_from_rows(&[&[v]]).as_ref());
    StaircaseSystem::new(
        BlockDims::new(0, 1, 0, 0, 1),
        SparseMatrix::zeros(0, 0),
        one(e),
        SparseMatrix::zeros(1, 1),
        one(r),
        one(g),
        one(p),
        mat_from_rows(&[&[s]]),
        mat_from_rows(&[&[0.0]]),
    )
    .expect("scalar system")
}

/// Smallest x > 0 with [[2rx, c − bx], [c − bx, 2d]] ⪰ 0 (Ap = −r), by a grid then bisection.
fn scalar_kyp_oracle(r: f64, b: f64, c: f64, d: f64) -> f64 {
    let feasible = |x: f64| {
        let k11 = 2.0 * r * x;
        let k12 = c - b * x;
        k11 >= 0.0 && k11 * 2.0 * d - k12 * k12 >= 0.0
    };
    let hi = 1e3 * (1.0 + c.abs() / b.abs().max(1e-12));
    let n = 200_000;
    let grid: Vec<f64> = (1..=n).map(|i| hi * i as f64 / n as f64).collect();
    let k = grid.iter().position(|&x| feasible(x)).expect("feasible point");
    let (mut lo, mut up) = (if k == 0 { 0.0 } else { grid[k - 1] }, grid[k]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if feasible(mid) {
            up = mid;
        } else {
            lo = mid;
        }
    }
    up
}

fn schur_residual(p: &ProperSubsystem, x: &Mat<f64>) -> phdae::Result<f64> {
    // −ApᵀX − XᵀAp − (Cpᵀ − XᵀBp)(Dp + Dpᵀ)⁻¹(Cp − BpᵀX) = 0 at X₋
    let ap = p.ap.to_dense()?;
    let xa = x.transpose() * &ap;
    let lin = (&xa + xa.transpose()) * -1.0;
    let t = p.cp.transpose() - x.transpose() * &p.bp;
    let sig = &p.dp + p.dp.transpose();
    let quad = &t * sig.partial_piv_lu().solve(t.transpose());
    let r = &lin - &quad;
    Ok(r.norm_l2() / (lin.norm_l2() + quad.norm_l2()).max(f64::MIN_POSITIVE))
}

fn criterion7(foms: &[Fom]) -> Outcome {
    let mut worst_id = 0.0f64;
    let mut worst_ric = 0.0f64;
    let mut worst_ord = 0.0f64;
    let mut solved = 0;
    let mut errors = Vec::new();
    for f in foms {
        let res = (|| -> phdae::Result<()> {
            let p = extract_proper(&f.sys)?;
            let id = Mat::<f64>::identity(p.n2(), p.n2());
            let kr = kyp_residual(&p, id.as_ref())?;
            worst_id = worst_id.max((-kr.min_eig_rel).max(0.0));
            let sol = minimal_kyp_solution(&p, &KypOptions::default())?;
            worst_ric = worst_ric.max(sol.riccati_residual).max(schur_residual(&p, &sol.x)?);
            worst_ord = worst_ord.max((-sol.ordering).max(0.0));
            solved += 1;
            Ok(())
        })();
        if let Err(e) = res {
            errors.push(format!("{}: {e}", f.label));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_scalar = 0.0f64;
    for _ in 0..20 {
        let e: f64 = rng.random_range(0.2..3.0);
        let r: f64 = rng.random_range(0.1..2.0);
        let s: f64 = rng.random_range(0.1..2.0);
        let g = rng.random_range(-2.0..2.0);
        let p = rng.random_range(-0.95..0.95) * (r * s).sqrt();
        let sys = scalar_system(e, r, g, p, s);
        match extract_proper(&sys).and_then(|pp| minimal_kyp_solution(&pp, &KypOptions::default())) {
            Ok(sol) => {
                let oracle = scalar_kyp_oracle(r, g - p, g + p, s);
                let lib = sol.x[(0, 0)];
                worst_scalar = worst_scalar.max((lib - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
            }
            Err(err) => errors.push(format!("scalar: {err}")),
        }
    }
    let pass = errors.is_empty() && worst_id <= 1e-10 && worst_ric <= 1e-8 && worst_scalar <= 1e-6 && worst_ord <= 1e-8;
    let mut d = format!(
        "identity infeasibility {worst_id:.2e} (tol 1e-10), Riccati residual {worst_ric:.2e} (tol 1e-8) on {solved} models, scalar vs oracle {worst_scalar:.2e} (tol 1e-6), I - X ordering violation {worst_ord:.2e} (tol 1e-8)"
    );
    if let Some(e) = errors.first() {
        d += &format!("; {} errors, first: {e}", errors.len());
    }
    outcome(pass, d)
}

fn h2_value(fom: &StaircaseSystem, rom: &StaircaseSystem) -> phdae::Result<f64> {
    match h2_error(fom, rom)? {
        H2Value::Finite { value, .. } => Ok(value),
        H2Value::Unbounded { reason } => Err(phdae::Error::Consistency(format!("H2 unbounded: {reason}"))),
    }
}

fn criterion8() -> Outcome {
    let res = (|| -> phdae::Result<String> {
        let cells = cells_for(LadderVariant::Index12, 1502);
        let sys = generate_rcl_ladder(cells, &LadderParams::default(), LadderVariant::Index12)?;
        let n = sys.n_states();
        let opts = IrkaOptions { max_iter: 100, ..Default::default() };
        let red = Reducer::new(&sys, InterpolationOptions::default())?;
        let run = |red: &Reducer<'_>, r: usize| -> phdae::Result<(f64, bool)> {
            let init = InterpolationData::imaginary_axis(r, 1, 1e-2, 1e2)?;
            let (rom, hist) = irka_with(red, &init, &opts)?;
            Ok((h2_value(&sys, &rom.system)?, hist.converged))
        };
        let (e2, c2) = run(&red, 2)?;
        let (e20, c20) = run(&red, 20)?;
        let (e10, c10) = run(&red, 10)?;
        let (redm, _) = kyp_minus_reducer(&sys, InterpolationOptions::default(), &KypOptions::default())?;
        let (e10m, c10m) = run(&redm, 10)?;
        let trend = e20 <= 0.1 * e2;
        let kyp = e10m <= e10;
        let d = format!(
            "n={n}; H2(r=2)={e2:.3e} H2(r=20)={e20:.3e} ratio {:.3e} (need <= 0.1); r=10 standard {e10:.3e} vs X- {e10m:.3e} ratio {:.3} (need <= 1); converged r2/r20/r10/r10-: {c2}/{c20}/{c10}/{c10m}",
            e20 / e2,
            e10m / e10
        );
        if trend && kyp {
            Ok(d)
        } else {
            Err(phdae::Error::Consistency(d))
        }
    })();
    match res {
        Ok(d) => outcome(true, d),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn criterion9() -> Outcome {
    let t0 = Instant::now();
    let res = (|| -> phdae::Result<String> {
        let dims = BlockDims::new(0, 5000, 5000, 0, 1);
        let sys = generate_staircase(&GeneratorSpec::new(Category::Index1, dims, 9))?;
        let p = extract_proper(&sys)?;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shifts: Vec<c64> = (0..100).map(|_| c64::new(rng.random_range(0.0..1.0), rng.random_range(-100.0..100.0))).collect();

        let pencil = p.ap.bordered_pencil(&p.ep)?;
        let ts = Instant::now();
        let mut sparse_vals = Vec::with_capacity(shifts.len());
        for s in &shifts {
            sparse_vals.push(p.transfer_with(&pencil, *s)?);
        }
        let sparse_per = ts.elapsed().as_secs_f64() / shifts.len() as f64;

        let ap = p.ap.to_dense()?;
        let dense_count = 3;
        let td = Instant::now();
        let mut agree = 0.0f64;
        for (k, s) in shifts.iter().take(dense_count).enumerate() {
            let h = p.proper_transfer_dense(ap.as_ref(), *s)?;
            agree = agree.max(phdae::analysis::rel_err(h.as_ref(), sparse_vals[k].as_ref()));
        }
        let dense_per = td.elapsed().as_secs_f64() / dense_count as f64;
        let speedup = dense_per / sparse_per;
        let d = format!(
            "n=10000: sparse {:.2e}s/solve over 100 shifts, dense {:.2e}s/solve over {dense_count} shifts, speedup {speedup:.1}x (need >= 10), agreement {agree:.1e}",
            sparse_per, dense_per
        );
        if speedup >= 10.0 && agree <= 1e-8 {
            Ok(d)
        } else {
            Err(phdae::Error::Consistency(d))
        }
    })();
    let elapsed = t0.elapsed();
    let in_time = elapsed < Duration::from_secs(600);
    match res {
        Ok(d) => outcome(in_time, format!("{d}, total {:.0}s (limit 600s)", elapsed.as_secs_f64())),
        Err(e) => outcome(false, format!("{e}, total {:.0}s", elapsed.as_secs_f64())),
    }
}

fn criterion10(foms: &[Fom], runs: &[SuiteRun]) -> Outcome {
    let mut bad = Vec::new();
    let mut unbounded_iha = 0;
    let mut iha_total = 0;
    for r in runs {
        let Ok(rom) = &r.rom else { continue };
        let f = &foms[r.fom];
        let res = (|| -> phdae::Result<()> {
            let pf = extract_proper(&f.sys)?;
            let pr = extract_proper(&rom.system)?;
            let mm = polynomial_mismatch(&pf, &pr);
            let h2 = h2_error(&f.sys, &rom.system)?;
            if h2.is_unbounded() != (mm.dp_mismatch || mm.dinf_mismatch) {
                bad.push(format!("{} / {}: h2 {h2:?} but mismatch {mm:?}", f.label, r.method));
            }
            if r.method == "iha" {
                iha_total += 1;
                if h2.is_unbounded() {
                    unbounded_iha += 1;
                }
                if h2.is_unbounded() != rom.provenance.h2_unbounded {
                    bad.push(format!("{} / iha: provenance flag disagrees", f.label));
                }
            } else if h2.is_unbounded() {
                bad.push(format!("{} / {}: interpolatory ROM has unbounded H2", f.label, r.method));
            }
            if r.method == "fixed" {
                let hi = hinf_error(&f.sys, &rom.system, &GridSpec { points: 100, refine: 1, ..Default::default() })?;
                if !hi.value.is_finite() {
                    bad.push(format!("{}: fixed-shift ROM has infinite H-inf error", f.label));
                }
            }
            Ok(())
        })();
        if let Err(e) = res {
            bad.push(format!("{} / {}: {e}", f.label, r.method));
        }
    }
    // negative control: dropping the improper part must give unbounded H2 and infinite H-inf
    let mut controls = 0;
    for f in foms.iter().filter(|f| f.category.improper()).take(3) {
        let res = (|| -> phdae::Result<()> {
            let red = Reducer::new(&f.sys, InterpolationOptions::default())?;
            let data = InterpolationData::imaginary_axis(4, f.sys.m(), 0.1, 10.0)?;
            let (_, _, parts) = red.interpolate(&data, "fixed")?;
            let proper_only = phdae::interpolation::assemble_rom(&parts, Mat::<f64>::zeros(f.sys.m(), 0).as_ref(), 0)?;
            let h2 = h2_error(&f.sys, &proper_only)?;
            let hi = hinf_error(&f.sys, &proper_only, &GridSpec::default())?;
            if !(h2.is_unbounded() && hi.value.is_infinite()) {
                bad.push(format!("{}: improper mismatch not flagged", f.label));
            }
            controls += 1;
            Ok(())
        })();
        if let Err(e) = res {
            bad.push(format!("{}: control: {e}", f.label));
        }
    }
    let mut d = format!(
        "{} ROM pairs checked, {unbounded_iha}/{iha_total} IHA ROMs unbounded in H2, {controls} improper-mismatch controls, {} violations",
        runs.iter().filter(|r| r.rom.is_ok()).count(),
        bad.len()
    );
    if let Some(b) = bad.first() {
        d += &format!("; first: {b}");
    }
    outcome(bad.is_empty() && controls == 3, d)
}

// ---------------------------------------------------------------- driver

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |k: u32| only.as_ref().is_none_or(|o| o.contains(&k));
    let names = [
        "structure preservation",
        "interpolation",
        "decomposition equivalence",
        "minimality",
        "IRKA fixed point",
        "perturbation invariance",
        "KYP",
        "ladder error trends",
        "sparse vs dense solves",
        "boundedness bookkeeping",
    ];

    let needs_suite = [1, 2, 4, 7, 10].into_iter().any(want);
    let foms = if needs_suite { suite() } else { Vec::new() };
    let needs_runs = [1, 2, 4, 10].into_iter().any(want);
    let (runs, elapsed) = if needs_runs { run_suite(&foms) } else { (Vec::new(), Duration::ZERO) };

    let mut failed = 0;
    for k in 1..=10u32 {
        if !want(k) {
            continue;
        }
        let t = Instant::now();
        let o = match k {
            1 => criterion1(&foms, &runs, elapsed),
            2 => criterion2(&foms, &runs),
            3 => criterion3(),
            4 => criterion4(&foms, &runs),
            5 => criterion5(),
            6 => criterion6(),
            7 => criterion7(&foms),
            8 => criterion8(),
            9 => criterion9(),
            _ => criterion10(&foms, &runs),
        };
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {k:>2} {:<26} {}  {} [{:.1}s]",
            names[k as usize - 1],
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
