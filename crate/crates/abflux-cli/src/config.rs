//! Scenario definitions and the line-oriented "key = value" config format.
//!
//! Dotted keys group related knobs (grid.nx, flux.alpha); "#" starts a
//! comment anywhere on a line. Every kind has a complete set of defaults,
//! so `kind = flyby` alone is a valid config. Keys that do not apply to the
//! chosen kind are rejected, as are duplicates and unknown names, always
//! with the offending line number.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

use abflux::dynamics::Method;
use abflux::error::{Error, Result};
use abflux::gauge::{flux_plaquette_on, FluxLineSpec};
use abflux::grid::Grid2D;
use abflux::modular::make_interference_state;
use abflux::wavefunction::{gaussian_packet, PacketSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Flyby,
    ThreePacket,
    Circle,
    Capacitor1D,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Flyby => "flyby",
            Kind::ThreePacket => "three-packet",
            Kind::Circle => "circle",
            Kind::Capacitor1D => "capacitor-1d",
        }
    }

    fn parse(s: &str, line: usize) -> Result<Kind> {
        match s {
            "flyby" => Ok(Kind::Flyby),
            "three-packet" => Ok(Kind::ThreePacket),
            "circle" => Ok(Kind::Circle),
            "capacitor-1d" => Ok(Kind::Capacitor1D),
            other => Err(Error::Config {
                line,
                message: format!(
                    "unknown kind '{}'; expected flyby, three-packet, circle, or capacitor-1d",
                    other
                ),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeChoice {
    String,
    Coulomb,
}

impl GaugeChoice {
    pub fn name(self) -> &'static str {
        match self {
            GaugeChoice::String => "string",
            GaugeChoice::Coulomb => "coulomb",
        }
    }
}

/// One fully specified experiment. Fields that a kind does not use keep
/// their defaults and are neither parsed nor serialized for that kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: Kind,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub mass: f64,
    pub dt: f64,
    pub total_time: f64,
    pub method: Method,
    pub tolerance: f64,
    pub probe_stride: usize,
    pub settle: f64,
    pub sigma: f64,
    pub k0: f64,
    pub x0: f64,
    pub separation: f64,
    pub c_offset: f64,
    pub radius: f64,
    pub alpha: f64,
    pub flux_x: f64,
    pub flux_y: f64,
    pub flux_vx: f64,
    pub flux_vy: f64,
    pub gauge: GaugeChoice,
    pub t_mid: f64,
    pub recombine_time: Option<f64>,
    pub samples: usize,
    pub out: Option<String>,
}

const GRID_KEYS: &[&str] = &["grid.nx", "grid.ny", "grid.dx"];
const STEPPER_KEYS: &[&str] = &["dt", "method", "tolerance", "probe.stride", "probe.settle"];

fn allowed_keys(kind: Kind) -> Vec<&'static str> {
    let mut keys = vec!["kind", "mass", "total_time", "out"];
    match kind {
        Kind::Flyby => {
            keys.extend_from_slice(GRID_KEYS);
            keys.extend_from_slice(STEPPER_KEYS);
            keys.extend_from_slice(&[
                "packet.sigma",
                "packet.k",
                "packet.x0",
                "packet.separation",
                "flux.alpha",
                "flux.x",
                "flux.y",
                "flux.gauge",
                "recombine.time",
            ]);
        }
        Kind::ThreePacket => {
            keys.extend_from_slice(GRID_KEYS);
            keys.extend_from_slice(STEPPER_KEYS);
            keys.extend_from_slice(&[
                "packet.sigma",
                "packet.k",
                "packet.x0",
                "packet.separation",
                "packet.c_offset",
                "flux.alpha",
                "flux.x",
                "flux.y",
                "flux.gauge",
            ]);
        }
        Kind::Circle => {
            keys.extend_from_slice(GRID_KEYS);
            keys.extend_from_slice(STEPPER_KEYS);
            keys.extend_from_slice(&[
                "packet.sigma",
                "packet.radius",
                "flux.alpha",
                "flux.x",
                "flux.y",
                "flux.vx",
                "flux.vy",
                "flux.gauge",
                "report.t_mid",
            ]);
        }
        Kind::Capacitor1D => {
            keys.extend_from_slice(&[
                "packet.sigma",
                "packet.k",
                "packet.separation",
                "flux.alpha",
                "report.samples",
            ]);
        }
    }
    keys
}

impl Scenario {
    /// The documented baseline for each kind; every field deterministic.
    pub fn default_for(kind: Kind) -> Scenario {
        let mut sc = Scenario {
            kind,
            nx: 256,
            ny: 256,
            dx: 0.25,
            mass: 1.0,
            dt: 0.005,
            total_time: 14.2,
            method: Method::SplitCheckerboard,
            tolerance: 1e-12,
            probe_stride: 4,
            settle: 2.0,
            sigma: 2.0,
            k0: 2.0,
            x0: -16.0,
            separation: 16.0,
            c_offset: 6.0,
            radius: 12.0,
            alpha: FRAC_PI_2,
            // sites sit at half-odd multiples of dx, so the origin is the
            // center of the middle plaquette, not a lattice line
            flux_x: 0.0,
            flux_y: 0.0,
            flux_vx: 0.0,
            flux_vy: 0.0,
            gauge: GaugeChoice::String,
            t_mid: 2.0,
            recombine_time: None,
            samples: 11,
            out: None,
        };
        match kind {
            Kind::Flyby => {}
            Kind::ThreePacket => {
                // C starts at x0 - c_offset; keep its tail clear of the
                // boundary band. The diagonal pair's jump fires when the C-A
                // segment sweeps the flux, later than the vertical pair's, so
                // the flux column sits left of center to let both transitions
                // finish while the packets are still compact.
                sc.x0 = -14.0;
                sc.total_time = 13.5;
                sc.flux_x = -4.0;
            }
            Kind::Circle => {
                sc.nx = 208;
                sc.ny = 208;
                sc.total_time = 4.0;
                sc.settle = 0.5;
                sc.sigma = 1.1;
                sc.alpha = FRAC_PI_3;
                // rebuild positions x = 24.15 - 0.03 n step through multiples
                // of 0.01 mod dx and stay at least 0.005 from the lattice
                // lines at 0.125 mod 0.25
                sc.flux_x = 24.15;
                sc.flux_y = 0.09;
                sc.flux_vx = -12.0;
            }
            Kind::Capacitor1D => {
                sc.total_time = 2.5;
                sc.sigma = 0.6;
                sc.k0 = 2.0;
                sc.separation = 10.0;
            }
        }
        sc
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |what: &str| Error::Config {
            line,
            message: format!("key '{}': cannot parse '{}' as {}", key, value, what),
        };
        let f = |v: &str| v.parse::<f64>().map_err(|_| bad("a number"));
        let u = |v: &str| v.parse::<usize>().map_err(|_| bad("an integer"));
        match key {
            "mass" => self.mass = f(value)?,
            "total_time" => self.total_time = f(value)?,
            "out" => self.out = Some(value.to_string()),
            "grid.nx" => self.nx = u(value)?,
            "grid.ny" => self.ny = u(value)?,
            "grid.dx" => self.dx = f(value)?,
            "dt" => self.dt = f(value)?,
            "method" => {
                self.method = match value {
                    "implicit" => Method::ImplicitMidpoint,
                    "split" => Method::SplitCheckerboard,
                    _ => return Err(bad("'implicit' or 'split'")),
                }
            }
            "tolerance" => self.tolerance = f(value)?,
            "probe.stride" => self.probe_stride = u(value)?,
            "probe.settle" => self.settle = f(value)?,
            "packet.sigma" => self.sigma = f(value)?,
            "packet.k" => self.k0 = f(value)?,
            "packet.x0" => self.x0 = f(value)?,
            "packet.separation" => self.separation = f(value)?,
            "packet.c_offset" => self.c_offset = f(value)?,
            "packet.radius" => self.radius = f(value)?,
            "flux.alpha" => self.alpha = f(value)?,
            "flux.x" => self.flux_x = f(value)?,
            "flux.y" => self.flux_y = f(value)?,
            "flux.vx" => self.flux_vx = f(value)?,
            "flux.vy" => self.flux_vy = f(value)?,
            "flux.gauge" => {
                self.gauge = match value {
                    "string" => GaugeChoice::String,
                    "coulomb" => GaugeChoice::Coulomb,
                    _ => return Err(bad("'string' or 'coulomb'")),
                }
            }
            "report.t_mid" => self.t_mid = f(value)?,
            "report.samples" => self.samples = u(value)?,
            "recombine.time" => self.recombine_time = Some(f(value)?),
            _ => unreachable!("key '{}' passed the allowed-key filter", key),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "kind" => self.kind.name().to_string(),
            "mass" => format!("{}", self.mass),
            "total_time" => format!("{}", self.total_time),
            "out" => return self.out.clone(),
            "grid.nx" => format!("{}", self.nx),
            "grid.ny" => format!("{}", self.ny),
            "grid.dx" => format!("{}", self.dx),
            "dt" => format!("{}", self.dt),
            "method" => match self.method {
                Method::ImplicitMidpoint => "implicit".to_string(),
                Method::SplitCheckerboard => "split".to_string(),
            },
            "tolerance" => format!("{}", self.tolerance),
            "probe.stride" => format!("{}", self.probe_stride),
            "probe.settle" => format!("{}", self.settle),
            "packet.sigma" => format!("{}", self.sigma),
            "packet.k" => format!("{}", self.k0),
            "packet.x0" => format!("{}", self.x0),
            "packet.separation" => format!("{}", self.separation),
            "packet.c_offset" => format!("{}", self.c_offset),
            "packet.radius" => format!("{}", self.radius),
            "flux.alpha" => format!("{}", self.alpha),
            "flux.x" => format!("{}", self.flux_x),
            "flux.y" => format!("{}", self.flux_y),
            "flux.vx" => format!("{}", self.flux_vx),
            "flux.vy" => format!("{}", self.flux_vy),
            "flux.gauge" => self.gauge.name().to_string(),
            "report.t_mid" => format!("{}", self.t_mid),
            "report.samples" => format!("{}", self.samples),
            "recombine.time" => return self.recombine_time.map(|t| format!("{}", t)),
            _ => return None,
        })
    }

    /// Canonical text form; `load_config` parses it back to an equal value.
    pub fn serialize(&self) -> String {
        let mut text = String::new();
        for key in allowed_keys(self.kind) {
            if let Some(value) = self.get(key) {
                text.push_str(&format!("{} = {}\n", key, value));
            }
        }
        text
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.nx, self.ny, self.dx)
    }

    pub fn flux_spec(&self) -> FluxLineSpec {
        FluxLineSpec::with_velocity(
            (self.flux_x, self.flux_y),
            self.alpha,
            (self.flux_vx, self.flux_vy),
        )
    }

    /// Packet specs for the 2D kinds, with names for error reporting.
    pub fn packets(&self) -> Vec<(&'static str, PacketSpec)> {
        let half = self.separation / 2.0;
        match self.kind {
            Kind::Flyby => vec![
                ("packet upper", PacketSpec::new((self.x0, half), self.sigma, (self.k0, 0.0))),
                ("packet lower", PacketSpec::new((self.x0, -half), self.sigma, (self.k0, 0.0))),
            ],
            Kind::ThreePacket => vec![
                ("packet A", PacketSpec::new((self.x0, half), self.sigma, (self.k0, 0.0))),
                ("packet B", PacketSpec::new((self.x0, -half), self.sigma, (self.k0, 0.0))),
                (
                    "packet C",
                    PacketSpec::new((self.x0 - self.c_offset, -half), self.sigma, (self.k0, 0.0)),
                ),
            ],
            Kind::Circle => vec![
                ("packet upper", PacketSpec::new((0.0, self.radius), self.sigma, (0.0, 0.0))),
                ("packet lower", PacketSpec::new((0.0, -self.radius), self.sigma, (0.0, 0.0))),
            ],
            Kind::Capacitor1D => Vec::new(),
        }
    }

    fn validate(&self, lines: &HashMap<String, usize>) -> Result<()> {
        let at = |key: &str| lines.get(key).copied().unwrap_or(0);
        let fail = |key: &str, message: String| -> Error {
            Error::Config { line: at(key), message }
        };
        if !(self.mass > 0.0) {
            return Err(fail("mass", format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.total_time > 0.0) {
            return Err(fail("total_time", "total_time must be positive".into()));
        }
        if self.kind == Kind::Capacitor1D {
            if self.samples < 2 {
                return Err(fail("report.samples", "need at least 2 samples".into()));
            }
            make_interference_state(self.separation, self.sigma, self.k0, self.alpha, self.mass)
                .map_err(|e| fail("packet.sigma", e.to_string()))?;
            return Ok(());
        }

        let grid = self.grid().map_err(|e| fail("grid.nx", e.to_string()))?;
        if !(self.dt > 0.0) {
            return Err(fail("dt", "dt must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(fail("tolerance", "tolerance must be positive".into()));
        }
        if self.probe_stride == 0 {
            return Err(fail("probe.stride", "probe.stride must be at least 1".into()));
        }
        if !(self.settle > 0.0) {
            return Err(fail("probe.settle", "probe.settle must be positive".into()));
        }
        for (name, spec) in self.packets() {
            gaussian_packet(grid, &spec)
                .map_err(|e| fail("packet.sigma", format!("{}: {}", name, e)))?;
        }
        flux_plaquette_on(grid, (self.flux_x, self.flux_y))
            .map_err(|e| fail("flux.x", e.to_string()))?;

        match self.kind {
            Kind::Circle => {
                if !(self.t_mid > 0.0 && self.t_mid < self.total_time) {
                    return Err(fail(
                        "report.t_mid",
                        format!("report.t_mid must lie inside (0, {})", self.total_time),
                    ));
                }
                if self.gauge == GaugeChoice::String && self.flux_vy != 0.0 {
                    return Err(fail(
                        "flux.vy",
                        "string-gauge flux motion must be horizontal (flux.vy = 0)".into(),
                    ));
                }
                let end = self.flux_spec().pos_at(self.total_time);
                match flux_plaquette_on(grid, end) {
                    Ok(_) | Err(Error::FluxOnGridLine { .. }) => {}
                    Err(e) => return Err(fail("flux.vx", format!("at total_time: {}", e))),
                }
            }
            Kind::Flyby => {
                if let Some(t) = self.recombine_time {
                    if !(t > 0.0 && t < self.total_time) {
                        return Err(fail(
                            "recombine.time",
                            format!("recombine.time must lie inside (0, {})", self.total_time),
                        ));
                    }
                }
            }
            Kind::ThreePacket => {
                if !(self.c_offset > 0.0) {
                    return Err(fail("packet.c_offset", "packet.c_offset must be positive".into()));
                }
            }
            Kind::Capacitor1D => unreachable!(),
        }
        Ok(())
    }
}

/// Parse and fully validate a config. Errors carry 1-based line numbers;
/// line 0 marks whole-file problems (such as a missing `kind`).
pub fn load_config(text: &str) -> Result<Scenario> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((k, v)) = stripped.split_once('=') else {
            return Err(Error::Config { line, message: format!("expected 'key = value', got '{}'", stripped) });
        };
        let key = k.trim().to_string();
        let value = v.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config { line, message: "empty key or value".into() });
        }
        if let Some(prev) = seen.insert(key.clone(), line) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key '{}' (first set on line {})", key, prev),
            });
        }
        pairs.push((line, key, value));
    }

    let Some((kind_line, _, kind_value)) = pairs.iter().find(|(_, k, _)| k == "kind") else {
        return Err(Error::Config { line: 0, message: "missing required key 'kind'".into() });
    };
    let kind = Kind::parse(kind_value, *kind_line)?;
    let allowed = allowed_keys(kind);

    let mut sc = Scenario::default_for(kind);
    for (line, key, value) in &pairs {
        if key == "kind" {
            continue;
        }
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config {
                line: *line,
                message: format!("unknown key '{}' for kind {}", key, kind.name()),
            });
        }
        sc.set(key, value, *line)?;
    }
    sc.validate(&seen)?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let sc = load_config("kind = flyby\n").unwrap();
        assert_eq!(sc, Scenario::default_for(Kind::Flyby));
        assert_eq!(sc.nx, 256);
        assert_eq!(sc.dt, 0.005);
        assert_eq!(sc.separation, 16.0);
        for kind in [Kind::ThreePacket, Kind::Circle, Kind::Capacitor1D] {
            let sc = load_config(&format!("kind = {}\n", kind.name())).unwrap();
            assert_eq!(sc, Scenario::default_for(kind));
        }
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = "\n# a comment\nkind = flyby # trailing comment\n\npacket.sigma = 1.5\n";
        let sc = load_config(text).unwrap();
        assert_eq!(sc.sigma, 1.5);
    }

    #[test]
    fn thin_packet_is_rejected_by_name() {
        let err = load_config("kind = flyby\npacket.sigma = 0.3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{}", msg);
        assert!(msg.contains("packet"), "{}", msg);
    }

    #[test]
    fn unknown_and_duplicate_keys_carry_line_numbers() {
        let err = load_config("kind = flyby\nflux.vx = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{}", err);
        assert!(err.to_string().contains("flux.vx"), "{}", err);

        let err = load_config("kind = circle\nflux.vx = 1\nflux.vx = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{}", err);
        assert!(err.to_string().contains("duplicate"), "{}", err);

        let err = load_config("kind = capacitor-1d\ngrid.nx = 64\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{}", err);
    }

    #[test]
    fn flux_on_lattice_line_is_rejected() {
        // sites sit at x = 0.125 + 0.25 k, so this lands on a site column
        let err = load_config("kind = flyby\nflux.x = 0.125\nflux.y = 0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{}", msg);
        assert!(msg.contains("plaquette"), "{}", msg);
    }

    #[test]
    fn missing_kind_is_a_whole_file_error() {
        let err = load_config("mass = 1\n").unwrap_err();
        assert!(err.to_string().contains("kind"), "{}", err);
    }

    #[test]
    fn garbled_line_is_rejected() {
        let err = load_config("kind = flyby\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{}", err);
    }

    #[test]
    fn canonical_form_round_trips_for_all_kinds() {
        for kind in [Kind::Flyby, Kind::ThreePacket, Kind::Circle, Kind::Capacitor1D] {
            let sc = Scenario::default_for(kind);
            let back = load_config(&sc.serialize()).unwrap();
            assert_eq!(back, sc, "round trip failed for {}", kind.name());
        }
    }

    #[test]
    fn vertical_string_motion_is_rejected_at_load() {
        let err = load_config("kind = circle\nflux.vy = 3\n").unwrap_err();
        assert!(err.to_string().contains("horizontal"), "{}", err);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn perturbed_flyby_round_trips(
            sigma in 0.8f64..3.0,
            k in 0.3f64..3.0,
            alpha in 0.0f64..6.28,
            dt in 0.002f64..0.008,
            cell_i in -8i32..8,
            cell_j in -8i32..8,
        ) {
            let mut sc = Scenario::default_for(Kind::Flyby);
            sc.sigma = sigma;
            sc.k0 = k;
            sc.alpha = alpha;
            sc.dt = dt;
            sc.flux_x = 0.25 * cell_i as f64;
            sc.flux_y = 0.25 * cell_j as f64;
            let back = load_config(&sc.serialize()).unwrap();
            prop_assert_eq!(back, sc);
        }
    }
}
