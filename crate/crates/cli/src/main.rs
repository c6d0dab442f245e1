use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use floquet_core::bloch::{band_structure, Classification};
use floquet_core::config::{ExperimentConfig, Scenario};
use floquet_core::effective::{matched_drive, validate_effective};
use floquet_core::lattice::full_zone_grid;
use floquet_core::linalg::CVec;
use floquet_core::selftest::{self, SelfTestInput};
use floquet_core::wavepacket::{alignment_experiment, near_invariance_experiment, Envelope, EpsilonContext};
use floquet_core::{Cplx, Error, ErrorKind};

#[derive(Parser)]
#[command(name = "floquet", version, about = "Driven Floquet-Bloch experiments from a TOML config")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Band energies on the full-zone grid.
    Bands(Common),
    /// Separation check and classification at the target point.
    Degeneracy(Common),
    /// Monodromy exponents on the anchored grid around the target, per ε.
    Monodromy(Common),
    /// Spectral enclosure of the matched effective monodromy.
    Enclosure(Common),
    /// Near-invariance residuals against ε.
    Invariance(Common),
    /// Correspondence between band-limited packets and the spectral window.
    Alignment(Common),
    /// Full versus effective evolution of a Gaussian packet.
    EffectiveValidate(Common),
    /// Invariant checks on the configured scenario.
    Selftest(Common),
}

struct Run {
    cfg: ExperimentConfig,
    hash: String,
    seed: u64,
    out: PathBuf,
}

impl Run {
    fn open(c: &Common) -> Result<Self, Error> {
        let text = fs::read_to_string(&c.config).map_err(|e| Error::Config(format!("{}: {e}", c.config.display())))?;
        let cfg = ExperimentConfig::from_toml(&text)?;
        let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
        let seed = c.seed.unwrap_or(cfg.seed);
        if let Some(n) = c.threads {
            // A second initialisation only fails if a pool already exists; that is fine.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        fs::create_dir_all(&c.out).map_err(|e| Error::Config(format!("{}: {e}", c.out.display())))?;
        Ok(Run { cfg, hash, seed, out: c.out.clone() })
    }

    fn json(&self, name: &str, command: &str, body: impl Serialize) -> Result<(), Error> {
        let doc = json!({
            "command": command,
            "config_sha256": self.hash,
            "seed": self.seed,
            "result": body,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numeric(e.to_string()))?;
        write(&self.out.join(name), &text)
    }

    /// CSV preceded by `#` provenance lines.
    fn csv(&self, name: &str, header: &str, rows: &[String]) -> Result<(), Error> {
        let mut s = format!("# config_sha256={}\n# seed={}\n{header}\n", self.hash, self.seed);
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        write(&self.out.join(name), &s)
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn eps_list(run: &Run) -> Vec<f64> {
    run.cfg.experiment.as_ref().map(|x| x.eps.clone()).unwrap_or_else(|| vec![0.1])
}

fn bands(run: &Run) -> Result<(), Error> {
    let crystal = run.cfg.crystal::<f64>()?;
    let grid = full_zone_grid(&crystal.lattice, run.cfg.grid.n)?;
    let nb = run.cfg.grid.bands.min(crystal.basis.len());
    let bs = band_structure(&crystal, &grid, nb)?;
    let header = std::iter::once("k1,k2".to_string()).chain((0..nb).map(|b| format!("e{b}"))).collect::<Vec<_>>().join(",");
    let rows: Vec<String> = bs
        .grid
        .points
        .iter()
        .zip(&bs.energies)
        .map(|(k, e)| {
            let mut r = format!("{:.12e},{:.12e}", k[0], k[1]);
            for x in e {
                r.push_str(&format!(",{x:.12e}"));
            }
            r
        })
        .collect();
    run.csv("bands.csv", &header, &rows)?;
    run.json("bands.json", "bands", json!({ "points": rows.len(), "bands": nb, "basis": crystal.basis.len() }))?;
    println!("wrote {} k-points x {nb} bands", rows.len());
    Ok(())
}

fn classification_json(c: &Classification<f64>) -> Value {
    match c {
        Classification::Noncritical { c, fd } => json!({ "c": [c[0], c[1]], "grad_fd": [fd[0], fd[1]] }),
        Classification::QuadraticSimple { hessian } => json!({
            "hessian": [[hessian[(0, 0)], hessian[(0, 1)]], [hessian[(1, 0)], hessian[(1, 1)]]]
        }),
        Classification::Dirac { fit } => json!({
            "v_d": fit.v_d,
            "anisotropy": fit.fine.anisotropy,
            "stability": fit.stability,
            "radius": fit.radius,
        }),
        Classification::QuadraticDouble { alpha, gamma, beta } => json!({ "alpha": alpha, "gamma": gamma, "beta": beta }),
    }
}

fn degeneracy(run: &Run) -> Result<(), Error> {
    let sc = Scenario::<f64>::build(&run.cfg)?;
    let s = &sc.info.separation;
    let body = json!({
        "k_star": [s.k_star[0], s.k_star[1]],
        "e_star": s.e_star,
        "band": s.band,
        "multiplicity": s.multiplicity,
        "cluster_width": s.cluster_width,
        "margin": s.margin,
        "points_checked": s.points_checked,
        "class": sc.info.class.tag(),
        "coefficients": classification_json(&sc.info.class),
        "model": sc.model.tag(),
    });
    run.json("degeneracy.json", "degeneracy", &body)?;
    println!("{} at E* = {:.10}", sc.info.class.tag(), s.e_star);
    Ok(())
}

fn monodromy(run: &Run) -> Result<(), Error> {
    let sc = Scenario::<f64>::build(&run.cfg)?;
    let (setup, _) = sc.invariance_setup(&run.cfg, run.seed)?;
    let mut rows = Vec::new();
    for &eps in &setup.eps {
        let ctx = EpsilonContext::build(&sc.crystal, &setup, eps)?;
        for m in &ctx.monos {
            for (j, th) in m.exponents.iter().enumerate() {
                rows.push(format!("{eps},{:.12e},{:.12e},{j},{th:.12e}", m.k[0], m.k[1]));
            }
        }
    }
    run.csv("monodromy.csv", "eps,k1,k2,index,exponent", &rows)?;
    run.json("monodromy.json", "monodromy", json!({ "eps": setup.eps, "rows": rows.len() }))?;
    println!("wrote {} exponents", rows.len());
    Ok(())
}

fn enclosure(run: &Run) -> Result<(), Error> {
    let sc = Scenario::<f64>::build(&run.cfg)?;
    let e = &run.cfg.effective;
    let enc = sc.enclosure(e.d0, &eps_list(run), e.resolution, e.steps)?;
    run.json("enclosure.json", "enclosure", json!({ "model": sc.model.tag(), "enclosure": enc }))?;
    println!("g0 = {:.10}", enc.g0);
    Ok(())
}

fn invariance(run: &Run) -> Result<(), Error> {
    let sc = Scenario::<f64>::build(&run.cfg)?;
    let (setup, enc) = sc.invariance_setup(&run.cfg, run.seed)?;
    let table = near_invariance_experiment(&sc.crystal, &setup)?;
    let rows: Vec<String> = table.rows.iter().map(|r| format!("{},{:.12e},{}", r.eps, r.r, r.fibers)).collect();
    run.csv("residuals.csv", "eps,r,fibers", &rows)?;
    run.json("invariance.json", "invariance", json!({ "enclosure": enc, "table": table }))?;
    for r in &table.rows {
        println!("eps = {:<8} r = {:.4e}", r.eps, r.r);
    }
    if let Some(p) = table.exponent {
        println!("fitted exponent {p:.3}");
    }
    Ok(())
}

fn alignment(run: &Run) -> Result<(), Error> {
    let sc = Scenario::<f64>::build(&run.cfg)?;
    let (setup, _) = sc.invariance_setup(&run.cfg, run.seed)?;
    let table = alignment_experiment(&sc.crystal, &setup)?;
    let rows: Vec<String> = table.rows.iter().map(|r| format!("{},{:.12e},{:.12e}", r.eps, r.rho, r.forward)).collect();
    run.csv("alignment.csv", "eps,rho,forward", &rows)?;
    run.json("alignment.json", "alignment", &table)?;
    for r in &table.rows {
        println!("eps = {:<8} rho = {:.4e} forward = {:.4e}", r.eps, r.rho, r.forward);
    }
    Ok(())
}

fn effective_validate(run: &Run) -> Result<(), Error> {
    let sc = Scenario::<f64>::build(&run.cfg)?;
    let e = &run.cfg.effective;
    let steps = run.cfg.experiment.as_ref().map(|x| x.steps_per_period).unwrap_or(400);
    let n = sc.frame.n();
    let mut dir = CVec::<f64>::zeros(n);
    dir[0] = Cplx::new(1.0, 0.0);
    let env = Envelope::gaussian(sc.crystal.dim(), e.d0, e.h, e.d0 * 0.5, &dir)?;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for eps in eps_list(run) {
        let r = validate_effective(&sc.crystal, &sc.frame, &sc.model, &sc.drive, eps, &env, e.checkpoints, steps)?;
        for (t, err) in r.times.iter().zip(&r.errors) {
            rows.push(format!("{eps},{t:.12e},{err:.12e}"));
        }
        println!("eps = {:<8} max error = {:.4e}", eps, r.max_error);
        reports.push(r);
    }
    run.csv("validation.csv", "eps,t,error", &rows)?;
    let drives: Vec<f64> = eps_list(run).iter().map(|&eps| matched_drive(&sc.drive, eps).max_norm()).collect();
    run.json("validation.json", "effective-validate", json!({ "model": sc.model.tag(), "matched_drive_max": drives, "reports": reports }))?;
    Ok(())
}

fn run_selftest(run: &Run) -> Result<(), Error> {
    let sc = Scenario::<f64>::build(&run.cfg)?;
    let steps = run.cfg.experiment.as_ref().map(|x| x.steps_per_period).unwrap_or(400);
    let report = selftest::run(&SelfTestInput {
        crystal: &sc.crystal,
        frame: &sc.frame,
        drive: &sc.drive,
        model: &sc.model,
        eps: eps_list(run)[0],
        steps_per_period: steps,
        seed: run.seed,
    })?;
    for c in &report.checks {
        println!("{} {:<28} {:.3e} (tol {:.0e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tol);
    }
    run.json("selftest.json", "selftest", &report)?;
    if !report.all_pass {
        return Err(Error::Numeric("self-test failed".into()));
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Hypothesis => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, f): (&Common, fn(&Run) -> Result<(), Error>) = match &cli.cmd {
        Command::Bands(c) => (c, bands),
        Command::Degeneracy(c) => (c, degeneracy),
        Command::Monodromy(c) => (c, monodromy),
        Command::Enclosure(c) => (c, enclosure),
        Command::Invariance(c) => (c, invariance),
        Command::Alignment(c) => (c, alignment),
        Command::EffectiveValidate(c) => (c, effective_validate),
        Command::Selftest(c) => (c, run_selftest),
    };
    match Run::open(common).and_then(|r| f(&r)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let doc = json!({ "error": { "kind": format!("{kind:?}").to_lowercase(), "message": e.to_string() } });
            eprintln!("{doc}");
            ExitCode::from(exit_code(kind))
        }
    }
}
