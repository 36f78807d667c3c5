//! Scenario execution: builds the initial state and field from a Scenario,
//! drives the stepper with a probe schedule, and postprocesses the recorded
//! series into plateau means and step reports.

use std::cell::RefCell;
use std::path::Path;

use num_complex::Complex64;

use abflux::dynamics::{
    evolve, FieldProvider, GaugeKind, HamiltonianSpec, ProbeFn, StepperConfig,
};
use abflux::error::{Error, Result};
use abflux::gauge::{coulomb_gauge, string_gauge, GaugeField};
use abflux::grid::Grid2D;
use abflux::io;
use abflux::modular::{
    cos_expectation_quadrature, evolve_free_1d, interference_observable, make_interference_state,
    weyl_expectation_1d,
};
use abflux::observables::{
    angular_displacement_expectation, detect_step, displacement_expectation, fringe_shift,
    velocity_distribution, Axis, StepReport, TimeSeries, VelocityDistribution,
};
use abflux::wavefunction::{gaussian_packet, superpose, WaveFunction};

use crate::config::{GaugeChoice, Kind, Scenario};

/// Group velocity of a lattice packet launched at wavenumber k.
pub fn lattice_velocity(k: f64, mass: f64, dx: f64) -> f64 {
    (k * dx).sin() / (mass * dx)
}

#[derive(Debug, Clone, Copy)]
pub struct RunStats {
    pub initial_norm: f64,
    pub final_norm: f64,
    /// Largest |norm(t) - norm(0)| seen at any probe time.
    pub max_norm_drift: f64,
}

#[derive(Debug)]
pub struct FlybyOutcome {
    pub chi: TimeSeries,
    /// Mean over the leading settle window.
    pub chi_before: Complex64,
    /// Mean over the trailing settle window.
    pub chi_after: Complex64,
    pub chi_report: Option<StepReport>,
    pub vdist_before: VelocityDistribution,
    pub vdist_after: VelocityDistribution,
    pub fringe: Option<f64>,
    /// Packet-center column meets the flux plaquette column.
    pub t_geometric: f64,
    /// Leading packet edge (4 sigma ahead of center) meets that column.
    pub t_meet: f64,
    pub v_lattice: f64,
    pub stats: RunStats,
    pub final_state: WaveFunction,
    pub manifest: String,
}

#[derive(Debug)]
pub struct PairOutcome {
    pub label: &'static str,
    pub series: TimeSeries,
    pub lead: Complex64,
    pub trail: Complex64,
    /// Normalized jump: (trail/lead - 1) / 2, comparable across pairs.
    pub delta: Complex64,
    /// Largest |(v/lead - 1) / 2| over the whole series.
    pub max_excursion: f64,
    pub report: Option<StepReport>,
}

#[derive(Debug)]
pub struct ThreePacketOutcome {
    pub pairs: Vec<PairOutcome>,
    pub stats: RunStats,
    pub final_state: WaveFunction,
    pub manifest: String,
}

#[derive(Debug)]
pub struct CircleOutcome {
    pub angular: TimeSeries,
    pub report_in: Option<StepReport>,
    pub report_out: Option<StepReport>,
    pub plateau_initial: Complex64,
    pub plateau_mid: Complex64,
    pub plateau_final: Complex64,
    /// Solenoid crosses the packet circle (|x_s| = r) at these times.
    pub t_enter: f64,
    pub t_exit: f64,
    pub stats: RunStats,
    pub final_state: WaveFunction,
    pub manifest: String,
}

#[derive(Debug)]
pub struct CapacitorOutcome {
    pub series: TimeSeries,
    pub expected: f64,
    pub t_local: f64,
    pub cos_route: f64,
    pub weyl_route: f64,
    pub manifest: String,
}

#[derive(Debug)]
pub enum RunOutcome {
    Flyby(FlybyOutcome),
    ThreePacket(ThreePacketOutcome),
    Circle(CircleOutcome),
    Capacitor(CapacitorOutcome),
}

pub fn run(sc: &Scenario) -> Result<RunOutcome> {
    match sc.kind {
        Kind::Flyby => Ok(RunOutcome::Flyby(run_flyby(sc)?)),
        Kind::ThreePacket => Ok(RunOutcome::ThreePacket(run_three_packet(sc)?)),
        Kind::Circle => Ok(RunOutcome::Circle(run_circle(sc)?)),
        Kind::Capacitor1D => Ok(RunOutcome::Capacitor(run_capacitor(sc)?)),
    }
}

/// Run and write the output files (series, reports, dumps, manifest).
pub fn run_to(sc: &Scenario, out: &Path) -> Result<RunOutcome> {
    let outcome = run(sc)?;
    write_outputs(sc, &outcome, out)?;
    Ok(outcome)
}

type BoxedProbe<'a> = Box<dyn FnMut(f64, &WaveFunction, &GaugeField) -> Result<()> + 'a>;

/// Accumulates (time, probe) entries, then drives the stepper with them in
/// time order. Entries at equal times fire in insertion order.
struct Schedule<'a> {
    entries: Vec<(f64, BoxedProbe<'a>)>,
}

impl<'a> Schedule<'a> {
    fn new() -> Self {
        Schedule { entries: Vec::new() }
    }

    fn at(&mut self, t: f64, probe: BoxedProbe<'a>) {
        self.entries.push((t, probe));
    }

    fn run(
        mut self,
        psi0: &WaveFunction,
        spec: &HamiltonianSpec,
        cfg: &StepperConfig,
    ) -> Result<WaveFunction> {
        self.entries.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("probe times are finite"));
        let schedule: Vec<(f64, ProbeFn<'_>)> = self
            .entries
            .iter_mut()
            .map(|(t, b)| (*t, &mut **b as ProbeFn<'_>))
            .collect();
        evolve(psi0, spec, cfg, schedule)
    }
}

fn stepper_config(sc: &Scenario) -> StepperConfig {
    let mut cfg = StepperConfig::new(sc.dt, sc.method);
    cfg.tolerance = sc.tolerance;
    cfg
}

fn static_field(sc: &Scenario, grid: Grid2D, t: f64) -> Result<GaugeField> {
    match sc.gauge {
        GaugeChoice::String => string_gauge(grid, sc.flux_spec().at_time(t)),
        GaugeChoice::Coulomb => coulomb_gauge(grid, sc.flux_spec().at_time(t)),
    }
}

fn provider_for(sc: &Scenario, grid: Grid2D) -> Result<FieldProvider> {
    if sc.flux_vx == 0.0 && sc.flux_vy == 0.0 {
        Ok(FieldProvider::Static(static_field(sc, grid, 0.0)?))
    } else {
        let kind = match sc.gauge {
            GaugeChoice::String => GaugeKind::String,
            GaugeChoice::Coulomb => GaugeKind::Coulomb,
        };
        Ok(FieldProvider::Moving { kind, flux: sc.flux_spec() })
    }
}

/// Equal-weight superposition of the scenario's packets, normalized (the
/// packets may overlap, as B and C do in the three-packet setup).
fn initial_state(sc: &Scenario, grid: Grid2D) -> Result<WaveFunction> {
    let packets = sc.packets();
    let mut built = Vec::with_capacity(packets.len());
    for (name, spec) in &packets {
        let p = gaussian_packet(grid, spec)
            .map_err(|e| Error::InvalidPacket(format!("{}: {}", name, e)))?;
        built.push(p);
    }
    let w = Complex64::new(1.0 / (built.len() as f64).sqrt(), 0.0);
    let parts: Vec<(&WaveFunction, Complex64)> = built.iter().map(|p| (p, w)).collect();
    let mut psi = superpose(&parts)?;
    psi.normalize();
    Ok(psi)
}

/// Physical length that must be a whole number of cells.
fn sites_along(length: f64, dx: f64, key: &str) -> Result<usize> {
    let n = length / dx;
    if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
        return Err(Error::Config {
            line: 0,
            message: format!("{} = {} is not a positive whole number of cells (dx = {})", key, length, dx),
        });
    }
    Ok(n.round() as usize)
}

/// The x coordinate of the left gridline of the plaquette holding `x`.
fn column_left_of(grid: Grid2D, x: f64) -> f64 {
    let x_lo = -(grid.nx() as f64) / 2.0 * grid.dx();
    ((x - x_lo) / grid.dx()).floor() * grid.dx() + x_lo
}

fn probe_steps(total_steps: usize, stride: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=total_steps).step_by(stride.max(1)).collect();
    if *steps.last().unwrap() != total_steps {
        steps.push(total_steps);
    }
    steps
}

/// Mean of the samples with t <= t_first + settle and of those with
/// t >= t_last - settle.
fn settle_means(series: &TimeSeries, settle: f64) -> (Complex64, Complex64) {
    let times = series.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mean = |lo: f64, hi: f64| {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut n = 0usize;
        for (&t, &v) in times.iter().zip(series.values()) {
            if t >= lo && t <= hi {
                acc += v;
                n += 1;
            }
        }
        acc / n.max(1) as f64
    };
    (mean(t0, t0 + settle), mean(t1 - settle, t1))
}

struct NormTracker {
    initial: f64,
    worst: f64,
    last: f64,
}

impl NormTracker {
    fn new() -> RefCell<Self> {
        RefCell::new(NormTracker { initial: f64::NAN, worst: 0.0, last: f64::NAN })
    }

    fn record(&mut self, norm: f64) {
        if self.initial.is_nan() {
            self.initial = norm;
        }
        self.worst = self.worst.max((norm - self.initial).abs());
        self.last = norm;
    }

    fn stats(&self) -> RunStats {
        RunStats { initial_norm: self.initial, final_norm: self.last, max_norm_drift: self.worst }
    }
}

fn manifest_header(sc: &Scenario) -> String {
    let mut m = String::from("# run manifest\n");
    m.push_str(&sc.serialize());
    m.push_str(&format!(
        "field.provenance = {} alpha={} pos=({}, {}) velocity=({}, {})\n",
        sc.gauge.name(),
        sc.alpha,
        sc.flux_x,
        sc.flux_y,
        sc.flux_vx,
        sc.flux_vy
    ));
    m
}

fn push_stats(m: &mut String, stats: &RunStats) {
    m.push_str(&format!("derived.initial_norm = {:.17e}\n", stats.initial_norm));
    m.push_str(&format!("derived.final_norm = {:.17e}\n", stats.final_norm));
    m.push_str(&format!("derived.max_norm_drift = {:.17e}\n", stats.max_norm_drift));
}

fn run_flyby(sc: &Scenario) -> Result<FlybyOutcome> {
    let grid = sc.grid()?;
    let psi0 = initial_state(sc, grid)?;
    let provider = provider_for(sc, grid)?;
    let spec = HamiltonianSpec::new(grid, sc.mass, provider)?;
    let cfg = stepper_config(sc);

    let n_disp = sites_along(sc.separation, sc.dx, "packet.separation")?;
    let v = lattice_velocity(sc.k0, sc.mass, sc.dx);
    let x_col = column_left_of(grid, sc.flux_x);
    let t_geo = (x_col - sc.x0) / v;
    let t_meet = (x_col - (sc.x0 + 4.0 * sc.sigma)) / v;

    let total_steps = (sc.total_time / sc.dt).round() as usize;
    let kick_step = sc.recombine_time.map(|t| (t / sc.dt).round() as usize);
    if let Some(k) = kick_step {
        if k == 0 || k >= total_steps {
            return Err(Error::BadSchedule("recombine.time outside the run".into()));
        }
    }

    // velocity distributions: one safely before the crossing, one just after
    // the jump completes (3.8 sigma of trailing tail past the column; waiting
    // longer lets the spreading packets wash over the flux line and pick up
    // real transverse current). Any recombination kick caps both.
    let pre_step = ((0.5 * t_meet / sc.dt).round() as usize).clamp(1, total_steps);
    let t_cleared = t_geo + 3.8 * sc.sigma / v;
    let post_step = ((t_cleared / sc.dt).round() as usize)
        .min(kick_step.unwrap_or(total_steps).saturating_sub(2))
        .min(total_steps.saturating_sub(2))
        .max(pre_step);

    let chi_cell = RefCell::new(TimeSeries::new(format!(
        "probe=chi_y params=n={};alpha={}",
        n_disp, sc.alpha
    )));
    let norms = NormTracker::new();
    let vdist_pre = RefCell::new(None);
    let vdist_post = RefCell::new(None);

    let record_chi = |t: f64, psi: &WaveFunction, field: &GaugeField| -> Result<()> {
        let chi = displacement_expectation(psi, field, (0, 1), n_disp)?;
        chi_cell.borrow_mut().push(t, chi)?;
        norms.borrow_mut().record(psi.norm_sq());
        Ok(())
    };
    let record_vdist = |slot: &RefCell<Option<VelocityDistribution>>,
                        psi: &WaveFunction,
                        field: &GaugeField|
     -> Result<()> {
        *slot.borrow_mut() = Some(velocity_distribution(psi, field, Axis::Y)?);
        Ok(())
    };

    let segments: Vec<(usize, usize)> = match kick_step {
        Some(k) => vec![(0, k), (k, total_steps)],
        None => vec![(0, total_steps)],
    };
    let mut state = psi0;
    for &(seg_start, seg_end) in &segments {
        let mut sched = Schedule::new();
        for step in probe_steps(seg_end - seg_start, sc.probe_stride) {
            let global = seg_start + step;
            // segment 2 of a recombined run starts at the kick: skip the
            // duplicate sample at the boundary
            if seg_start > 0 && step == 0 {
                continue;
            }
            let t_local = step as f64 * sc.dt;
            let t_global = global as f64 * sc.dt;
            sched.at(t_local, Box::new(move |_t, psi, field| record_chi(t_global, psi, field)));
            if global == pre_step {
                sched.at(t_local, Box::new(|_t, psi, field| record_vdist(&vdist_pre, psi, field)));
            }
            if global == post_step {
                sched.at(t_local, Box::new(|_t, psi, field| record_vdist(&vdist_post, psi, field)));
            }
        }
        // distribution slots may fall between stride points
        for (target, slot) in [(pre_step, &vdist_pre), (post_step, &vdist_post)] {
            if target > seg_start && target <= seg_end && slot.borrow().is_none() {
                let t_local = (target - seg_start) as f64 * sc.dt;
                sched.at(t_local, Box::new(move |_t, psi, field| record_vdist(slot, psi, field)));
            }
        }
        // the stepper counts time from the segment start; report aborts in
        // run time
        state = sched.run(&state, &spec, &cfg).map_err(|e| match e {
            Error::BoxViolation { t, probability } => Error::BoxViolation {
                t: t + seg_start as f64 * sc.dt,
                probability,
            },
            other => other,
        })?;
        if Some(seg_end) == kick_step {
            let k0 = sc.k0;
            state.apply_phase(|_, y| if y > 0.0 { -k0 * y } else { k0 * y });
        }
    }

    let chi = chi_cell.into_inner();
    let (chi_before, chi_after) = settle_means(&chi, sc.settle);
    let chi_report = detect_step(&chi, sc.settle).ok();
    let fringe = if kick_step.is_some() { fringe_shift(&state, sc.k0, Axis::Y).ok() } else { None };
    let stats = norms.into_inner().stats();

    let vdist_before = vdist_pre
        .into_inner()
        .ok_or_else(|| Error::BadSchedule("velocity distribution probe never fired".into()))?;
    let vdist_after = vdist_post
        .into_inner()
        .ok_or_else(|| Error::BadSchedule("velocity distribution probe never fired".into()))?;

    let mut manifest = manifest_header(sc);
    manifest.push_str(&format!("derived.v_lattice = {:.17e}\n", v));
    manifest.push_str(&format!("derived.displacement_sites = {}\n", n_disp));
    manifest.push_str(&format!("derived.t_geometric = {:.17e}\n", t_geo));
    manifest.push_str(&format!("derived.t_meet = {:.17e}\n", t_meet));
    manifest.push_str(&format!("derived.vdist_times = {:.17e} {:.17e}\n",
        pre_step as f64 * sc.dt, post_step as f64 * sc.dt));
    manifest.push_str(&format!("derived.probe_count = {}\n", chi.len()));
    push_stats(&mut manifest, &stats);

    Ok(FlybyOutcome {
        chi,
        chi_before,
        chi_after,
        chi_report,
        vdist_before,
        vdist_after,
        fringe,
        t_geometric: t_geo,
        t_meet,
        v_lattice: v,
        stats,
        final_state: state,
        manifest,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn run_three_packet(sc: &Scenario) -> Result<ThreePacketOutcome> {
    let grid = sc.grid()?;
    let psi0 = initial_state(sc, grid)?;
    let provider = provider_for(sc, grid)?;
    let spec = HamiltonianSpec::new(grid, sc.mass, provider)?;
    let cfg = stepper_config(sc);

    let n_sep = sites_along(sc.separation, sc.dx, "packet.separation")?;
    let n_off = sites_along(sc.c_offset, sc.dx, "packet.c_offset")?;
    let g = gcd(n_off, n_sep);
    // displacements that carry one packet onto another: B->A, C->A, C->B
    let pairs: [(&'static str, (i64, i64), usize); 3] = [
        ("chi_ab", (0, 1), n_sep),
        ("chi_ac", ((n_off / g) as i64, (n_sep / g) as i64), g),
        ("chi_bc", (1, 0), n_off),
    ];

    let cells: Vec<RefCell<TimeSeries>> = pairs
        .iter()
        .map(|(label, dir, n)| {
            RefCell::new(TimeSeries::new(format!(
                "probe={} params=dir=({},{});n={};alpha={}",
                label, dir.0, dir.1, n, sc.alpha
            )))
        })
        .collect();
    let norms = NormTracker::new();

    let total_steps = (sc.total_time / sc.dt).round() as usize;
    let mut sched = Schedule::new();
    for step in probe_steps(total_steps, sc.probe_stride) {
        let t = step as f64 * sc.dt;
        for (pair, cell) in pairs.iter().zip(&cells) {
            let (_, dir, n) = *pair;
            sched.at(
                t,
                Box::new(move |t, psi, field| {
                    let chi = displacement_expectation(psi, field, dir, n)?;
                    cell.borrow_mut().push(t, chi)
                }),
            );
        }
        sched.at(t, Box::new(|_t, psi, _f| {
            norms.borrow_mut().record(psi.norm_sq());
            Ok(())
        }));
    }
    let state = sched.run(&psi0, &spec, &cfg)?;
    let stats = norms.into_inner().stats();

    let mut outcomes = Vec::new();
    for (pair, cell) in pairs.iter().zip(cells) {
        let series = cell.into_inner();
        let (lead, trail) = settle_means(&series, sc.settle);
        let delta = 0.5 * (trail / lead - Complex64::new(1.0, 0.0));
        let max_excursion = series
            .values()
            .iter()
            .map(|v| (0.5 * (v / lead - Complex64::new(1.0, 0.0))).norm())
            .fold(0.0f64, f64::max);
        let report = detect_step(&series, sc.settle).ok();
        outcomes.push(PairOutcome {
            label: pair.0,
            series,
            lead,
            trail,
            delta,
            max_excursion,
            report,
        });
    }

    let mut manifest = manifest_header(sc);
    manifest.push_str(&format!(
        "derived.pair_sites = ab=(0,{}) ac=({},{}) bc=({},0)\n",
        n_sep, n_off, n_sep, n_off
    ));
    push_stats(&mut manifest, &stats);
    for p in &outcomes {
        manifest.push_str(&format!(
            "derived.{}_delta = {:.17e} {:.17e}\n",
            p.label, p.delta.re, p.delta.im
        ));
    }

    Ok(ThreePacketOutcome { pairs: outcomes, stats, final_state: state, manifest })
}

fn run_circle(sc: &Scenario) -> Result<CircleOutcome> {
    let grid = sc.grid()?;
    let psi0 = initial_state(sc, grid)?;
    let provider = provider_for(sc, grid)?;
    let spec = HamiltonianSpec::new(grid, sc.mass, provider)?;
    let cfg = stepper_config(sc);

    // the solenoid's ride across the circle |x_s| = r (its own y offset is
    // inside the circle, so both crossings exist when it traverses)
    let rr = (sc.radius * sc.radius - sc.flux_y * sc.flux_y).max(0.0).sqrt();
    let mut crossings: Vec<f64> = [-rr, rr]
        .iter()
        .filter(|_| sc.flux_vx != 0.0)
        .map(|&x| (x - sc.flux_x) / sc.flux_vx)
        .filter(|t| *t > 0.0 && *t < sc.total_time)
        .collect();
    crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (t_enter, t_exit) = match crossings.as_slice() {
        [a, b] => (*a, *b),
        _ => {
            return Err(Error::BadSchedule(format!(
                "flux trajectory must cross the packet circle twice within the run, found {} crossings",
                crossings.len()
            )))
        }
    };

    let cell = RefCell::new(TimeSeries::new(format!(
        "probe=angular params=radius={};alpha={}",
        sc.radius, sc.alpha
    )));
    let norms = NormTracker::new();
    let total_steps = (sc.total_time / sc.dt).round() as usize;
    let mut sched = Schedule::new();
    for step in probe_steps(total_steps, sc.probe_stride) {
        let t = step as f64 * sc.dt;
        sched.at(
            t,
            Box::new(|t, psi, field| {
                let a = angular_displacement_expectation(psi, field)?;
                cell.borrow_mut().push(t, a)?;
                norms.borrow_mut().record(psi.norm_sq());
                Ok(())
            }),
        );
    }
    let state = sched.run(&psi0, &spec, &cfg)?;
    let stats = norms.into_inner().stats();
    let angular = cell.into_inner();

    let piece1 = angular.slice_time(0.0, sc.t_mid);
    let piece2 = angular.slice_time(sc.t_mid, sc.total_time);
    let report_in = detect_step(&piece1, sc.settle).ok();
    let report_out = detect_step(&piece2, sc.settle).ok();
    let (plateau_initial, _) = settle_means(&piece1, sc.settle);
    let (_, plateau_final) = settle_means(&piece2, sc.settle);
    let mid_window = angular.slice_time(sc.t_mid - sc.settle, sc.t_mid + sc.settle);
    let plateau_mid = mid_window.values().iter().sum::<Complex64>()
        / mid_window.len().max(1) as f64;

    let mut manifest = manifest_header(sc);
    manifest.push_str(&format!("derived.t_enter = {:.17e}\n", t_enter));
    manifest.push_str(&format!("derived.t_exit = {:.17e}\n", t_exit));
    push_stats(&mut manifest, &stats);

    Ok(CircleOutcome {
        angular,
        report_in,
        report_out,
        plateau_initial,
        plateau_mid,
        plateau_final,
        t_enter,
        t_exit,
        stats,
        final_state: state,
        manifest,
    })
}

fn run_capacitor(sc: &Scenario) -> Result<CapacitorOutcome> {
    let state = make_interference_state(sc.separation, sc.sigma, sc.k0, sc.alpha, sc.mass)?;
    let mut series = TimeSeries::new(format!(
        "probe=interference params=l={};k0={};alpha={}",
        sc.separation, sc.k0, sc.alpha
    ));
    for i in 0..sc.samples {
        let t = sc.total_time * i as f64 / (sc.samples - 1) as f64;
        let o = interference_observable(&state, t, sc.separation, sc.k0)?;
        series.push(t, Complex64::new(o, 0.0))?;
    }
    // at the packet-meeting time the displacement shrinks to zero and the
    // observable reduces to a local fringe average: evaluate it through the
    // independent quadrature route and through the closed form
    let t_local = sc.mass * sc.separation / (2.0 * sc.k0);
    let at_meet = evolve_free_1d(&state, t_local)?;
    let cos_route = cos_expectation_quadrature(&at_meet, 2.0 * sc.k0);
    let weyl_route = weyl_expectation_1d(&at_meet, 0.0, 2.0 * sc.k0).re;
    let expected = 0.5 * sc.alpha.cos();

    let mut manifest = manifest_header(sc);
    manifest.push_str(&format!("derived.t_local = {:.17e}\n", t_local));
    manifest.push_str(&format!("derived.expected = {:.17e}\n", expected));
    manifest.push_str(&format!("derived.cos_route = {:.17e}\n", cos_route));
    manifest.push_str(&format!("derived.weyl_route = {:.17e}\n", weyl_route));

    Ok(CapacitorOutcome { series, expected, t_local, cos_route, weyl_route, manifest })
}

fn vdist_text(d: &VelocityDistribution, meta: &str) -> String {
    let mut text = format!("# {}\n", meta);
    for (p, w) in d.momenta().iter().zip(d.probs()) {
        text.push_str(&format!("{:.17e} {:.17e}\n", p, w));
    }
    text
}

fn write_outputs(sc: &Scenario, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_text_atomic(&dir.join("config.txt"), &sc.serialize())?;
    match outcome {
        RunOutcome::Flyby(o) => {
            io::write_text_atomic(&dir.join("manifest.txt"), &o.manifest)?;
            io::write_time_series(&dir.join("chi_y.txt"), &o.chi)?;
            if let Some(r) = &o.chi_report {
                io::write_step_report(&dir.join("step_chi_y.txt"), r)?;
            }
            io::write_text_atomic(
                &dir.join("vdist_before.txt"),
                &vdist_text(&o.vdist_before, "probe=velocity_distribution axis=y slot=before"),
            )?;
            io::write_text_atomic(
                &dir.join("vdist_after.txt"),
                &vdist_text(&o.vdist_after, "probe=velocity_distribution axis=y slot=after"),
            )?;
            if let Some(f) = o.fringe {
                io::write_text_atomic(&dir.join("fringe.txt"), &format!("fringe_shift = {:.17e}\n", f))?;
            }
            io::write_state_dump(&dir.join("final_state.bin"), &o.final_state)?;
        }
        RunOutcome::ThreePacket(o) => {
            io::write_text_atomic(&dir.join("manifest.txt"), &o.manifest)?;
            for p in &o.pairs {
                io::write_time_series(&dir.join(format!("{}.txt", p.label)), &p.series)?;
                if let Some(r) = &p.report {
                    io::write_step_report(&dir.join(format!("step_{}.txt", p.label)), r)?;
                }
            }
            io::write_state_dump(&dir.join("final_state.bin"), &o.final_state)?;
        }
        RunOutcome::Circle(o) => {
            io::write_text_atomic(&dir.join("manifest.txt"), &o.manifest)?;
            io::write_time_series(&dir.join("angular.txt"), &o.angular)?;
            if let Some(r) = &o.report_in {
                io::write_step_report(&dir.join("step_enter.txt"), r)?;
            }
            if let Some(r) = &o.report_out {
                io::write_step_report(&dir.join("step_exit.txt"), r)?;
            }
            io::write_state_dump(&dir.join("final_state.bin"), &o.final_state)?;
        }
        RunOutcome::Capacitor(o) => {
            io::write_text_atomic(&dir.join("manifest.txt"), &o.manifest)?;
            io::write_time_series(&dir.join("interference.txt"), &o.series)?;
        }
    }
    Ok(())
}
