use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use abflux::dynamics::{
    dense_oracle_evolve, evolve, FieldProvider, HamiltonianSpec, Method, ProbeFn, StepperConfig,
    DENSE_MAX_SITES,
};
use abflux::gauge::{plaquette_flux, wrap_phase};
use abflux::io;

use abflux_cli::config::{load_config, Scenario};
use abflux_cli::runner::{run, run_to, RunOutcome};
use abflux_cli::sweep::{csv_table, predicted_jump, sweep, SweepSpec};

#[derive(Parser)]
#[command(name = "abflux", about = "lattice scenarios for a charge passing a magnetic flux line")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Worker threads for observable sums and sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files; nothing is written without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the time stepper named in the config.
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Implicit,
    Split,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Implicit => Method::ImplicitMidpoint,
            MethodArg::Split => Method::SplitCheckerboard,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and print its headline numbers.
    Run { config: PathBuf },
    /// Re-run a scenario for each flux strength and print a CSV table.
    Sweep {
        config: PathBuf,
        /// Comma-separated flux strengths in radians.
        #[arg(long, value_delimiter = ',', required = true)]
        alpha: Vec<f64>,
    },
    /// Check the gauge field construction: per-plaquette circulation audit.
    Audit { config: PathBuf },
    /// Compare the stepper against a dense eigendecomposition (small grids).
    Oracle { config: PathBuf },
}

fn load(path: &Path) -> anyhow::Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(load_config(&text)?)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("setting thread count")?;
    }
    match &cli.cmd {
        Cmd::Run { config } => {
            let mut sc = load(config)?;
            if let Some(m) = cli.method {
                sc.method = m.into();
            }
            let outcome = match &cli.out {
                Some(dir) => run_to(&sc, dir)?,
                None => run(&sc)?,
            };
            print_summary(&sc, &outcome);
        }
        Cmd::Sweep { config, alpha } => {
            let mut sc = load(config)?;
            if let Some(m) = cli.method {
                sc.method = m.into();
            }
            let rows = sweep(&SweepSpec { base: sc, alphas: alpha.clone() })?;
            let table = csv_table(&rows);
            print!("{}", table);
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                io::write_text_atomic(&dir.join("sweep.csv"), &table)?;
            }
        }
        Cmd::Audit { config } => {
            let sc = load(config)?;
            audit(&sc, cli.out.as_deref())?;
        }
        Cmd::Oracle { config } => {
            let mut sc = load(config)?;
            if let Some(m) = cli.method {
                sc.method = m.into();
            }
            oracle(&sc)?;
        }
    }
    Ok(())
}

fn print_summary(sc: &Scenario, outcome: &RunOutcome) {
    match outcome {
        RunOutcome::Flyby(o) => {
            let jump = o.chi_after - o.chi_before;
            let pred = predicted_jump(sc.alpha);
            println!("flyby: chi plateau {:.6e}{:+.6e}i -> {:.6e}{:+.6e}i",
                o.chi_before.re, o.chi_before.im, o.chi_after.re, o.chi_after.im);
            println!(
                "flyby: jump {:.6e}{:+.6e}i, predicted {:.6e}{:+.6e}i, |err| {:.3e}",
                jump.re, jump.im, pred.re, pred.im, (jump - pred).norm()
            );
            println!(
                "flyby: segment meets column at t {:.4} (centers at {:.4})",
                o.t_meet, o.t_geometric
            );
            if let Some(r) = &o.chi_report {
                println!(
                    "flyby: step at t {:.4}, width {:.4}, drifting {}",
                    r.t_cross, r.width, r.drifting
                );
            }
            if let Some(f) = o.fringe {
                println!("flyby: fringe shift {:.6e}", f);
            }
            println!(
                "flyby: <v> {:.6e} -> {:.6e}, <v^2> {:.6e} -> {:.6e}",
                o.vdist_before.mean_velocity(sc.mass),
                o.vdist_after.mean_velocity(sc.mass),
                o.vdist_before.velocity_second_moment(sc.mass),
                o.vdist_after.velocity_second_moment(sc.mass)
            );
            println!("flyby: max norm drift {:.3e}", o.stats.max_norm_drift);
        }
        RunOutcome::ThreePacket(o) => {
            let pred = predicted_jump(sc.alpha);
            for p in &o.pairs {
                println!(
                    "three-packet: {} delta {:.6e}{:+.6e}i (crossing pairs predict {:.6e}{:+.6e}i), max excursion {:.3e}",
                    p.label, p.delta.re, p.delta.im, pred.re, pred.im, p.max_excursion
                );
            }
            println!("three-packet: max norm drift {:.3e}", o.stats.max_norm_drift);
        }
        RunOutcome::Circle(o) => {
            println!(
                "circle: plateaus {:.6e}{:+.6e}i / {:.6e}{:+.6e}i / {:.6e}{:+.6e}i",
                o.plateau_initial.re, o.plateau_initial.im,
                o.plateau_mid.re, o.plateau_mid.im,
                o.plateau_final.re, o.plateau_final.im
            );
            println!("circle: crossings expected at t {:.4} and {:.4}", o.t_enter, o.t_exit);
            if let Some(r) = &o.report_in {
                println!("circle: entry step at t {:.4}, width {:.4}", r.t_cross, r.width);
            }
            if let Some(r) = &o.report_out {
                println!("circle: exit step at t {:.4}, width {:.4}", r.t_cross, r.width);
            }
            println!("circle: max norm drift {:.3e}", o.stats.max_norm_drift);
        }
        RunOutcome::Capacitor(o) => {
            let last = o.series.values().last().copied().unwrap_or_default();
            println!(
                "capacitor-1d: observable settles to {:.6e} (expected {:.6e})",
                last.re, o.expected
            );
            println!(
                "capacitor-1d: at t {:.4} quadrature route {:.6e}, closed form {:.6e}, |diff| {:.3e}",
                o.t_local,
                o.cos_route,
                o.weyl_route,
                (o.cos_route - o.weyl_route).abs()
            );
        }
    }
}

fn audit(sc: &Scenario, out: Option<&Path>) -> anyhow::Result<()> {
    let grid = sc.grid()?;
    let field = match sc.gauge {
        abflux_cli::config::GaugeChoice::String => {
            abflux::gauge::string_gauge(grid, sc.flux_spec().at_time(0.0))?
        }
        abflux_cli::config::GaugeChoice::Coulomb => {
            abflux::gauge::coulomb_gauge(grid, sc.flux_spec().at_time(0.0))?
        }
    };
    let target = field.flux_plaquette()?;
    let expected = wrap_phase(sc.alpha);
    let mut at_flux = 0.0;
    let mut worst_elsewhere = 0.0f64;
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            let c = plaquette_flux(&field, i, j)?;
            if (i, j) == target {
                at_flux = c;
            } else {
                worst_elsewhere = worst_elsewhere.max(c.abs());
            }
        }
    }
    println!(
        "audit: {} gauge, flux plaquette ({}, {}), circulation {:.12e} (expected {:.12e})",
        sc.gauge.name(),
        target.0,
        target.1,
        at_flux,
        expected
    );
    println!("audit: max |circulation| elsewhere {:.3e}", worst_elsewhere);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        io::write_gauge_dump(&dir.join("gauge_field.txt"), &field)?;
        println!("audit: wrote {}", dir.join("gauge_field.txt").display());
    }
    if (at_flux - expected).abs() > 1e-9 {
        bail!("flux plaquette circulation is off by {:.3e}", (at_flux - expected).abs());
    }
    Ok(())
}

fn oracle(sc: &Scenario) -> anyhow::Result<()> {
    let grid = sc.grid()?;
    if grid.n_sites() > DENSE_MAX_SITES {
        bail!(
            "oracle comparisons need at most {} sites, grid has {}; shrink grid.nx/grid.ny",
            DENSE_MAX_SITES,
            grid.n_sites()
        );
    }
    if sc.flux_vx != 0.0 || sc.flux_vy != 0.0 {
        bail!("oracle comparisons need a static flux line");
    }
    let field = match sc.gauge {
        abflux_cli::config::GaugeChoice::String => {
            abflux::gauge::string_gauge(grid, sc.flux_spec())?
        }
        abflux_cli::config::GaugeChoice::Coulomb => {
            abflux::gauge::coulomb_gauge(grid, sc.flux_spec())?
        }
    };
    let packets = sc.packets();
    let mut built = Vec::new();
    for (_, spec) in &packets {
        built.push(abflux::wavefunction::gaussian_packet(grid, spec)?);
    }
    let w = num_complex::Complex64::new(1.0 / (built.len() as f64).sqrt(), 0.0);
    let parts: Vec<_> = built.iter().map(|p| (p, w)).collect();
    let mut psi0 = abflux::wavefunction::superpose(&parts)?;
    psi0.normalize();

    let t_end = (sc.total_time / sc.dt).round() * sc.dt;
    let spec = HamiltonianSpec::new(grid, sc.mass, FieldProvider::Static(field.clone()))?;
    let mut cfg = StepperConfig::new(sc.dt, sc.method);
    cfg.tolerance = sc.tolerance;
    let mut noop = |_t: f64, _p: &abflux::WaveFunction, _f: &abflux::gauge::GaugeField| Ok(());
    let schedule: Vec<(f64, ProbeFn<'_>)> = vec![(t_end, &mut noop)];
    let stepped = evolve(&psi0, &spec, &cfg, schedule)?;
    let exact = dense_oracle_evolve(&psi0, &field, t_end, sc.mass)?;

    let mut worst = 0.0f64;
    for (a, b) in stepped.amps().iter().zip(exact.amps()) {
        worst = worst.max((a - b).norm());
    }
    println!(
        "oracle: {} steps of dt {:.4e}, max pointwise |stepped - dense| {:.6e}",
        (t_end / sc.dt).round() as usize,
        sc.dt,
        worst
    );
    println!(
        "oracle: norms stepped {:.12}, dense {:.12}",
        stepped.norm_sq(),
        exact.norm_sq()
    );
    Ok(())
}
