//! Deterministic synthetic fixed-route traces.
//!
//! A [`RouteProfile`] describes one commute route: a piecewise-linear base
//! bandwidth curve over position, step plans for frequency band, serving
//! cell and access mode, a speed profile and Gaussian measurement noise.
//! Repeating the route for several trips yields the periodic structure that
//! fixed-route mobility produces in real traces, with known ground truth.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serial;
use crate::trace::{FeatureSchema, Trace};

pub const PROFILE_FORMAT: &str = "cellcast/profile";

/// Step plan: value holds from its start position to the next entry.
pub type StepPlan<T> = Vec<(usize, T)>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RouteProfile {
    /// Seconds per trip along the route.
    pub route_len: usize,
    pub trips: usize,
    /// Piecewise-linear (position s, Mbps) control points of the base
    /// bandwidth capacity along the route.
    pub base_curve: Vec<(f64, f64)>,
    /// Frequency band per position; each band code scales capacity through
    /// `band_multipliers`.
    pub band_plan: StepPlan<u32>,
    /// Serving cell per position; a change triggers the handoff indicator
    /// and a one-second bandwidth dip.
    pub cell_plan: StepPlan<u32>,
    /// Access mode m per position (1 = 5G), used by 5G-style schemas.
    pub mode_plan: StepPlan<u8>,
    /// Gaussian noise on measured bandwidth, Mbps.
    pub noise_std: f64,
    /// Piecewise-linear (position s, m/s) speed profile.
    pub speed_profile: Vec<(f64, f64)>,
    pub seed: u64,
    /// Downlink capacity multiplier while in 5G mode.
    pub mode_dl_multiplier: f64,
    /// Bandwidth multiplier applied at the exact cell-change second.
    pub handoff_dip: f64,
    /// Capacity multiplier per band code.
    pub band_multipliers: Vec<f64>,
}

impl RouteProfile {
    /// Default LTE commute route: 8 trips of 600 s, noise std 2.
    pub fn default_lte() -> Self {
        RouteProfile {
            route_len: 600,
            trips: 8,
            base_curve: vec![
                (0.0, 8.0),
                (100.0, 22.0),
                (200.0, 12.0),
                (300.0, 25.0),
                (420.0, 6.0),
                (520.0, 18.0),
                (600.0, 8.0),
            ],
            band_plan: vec![(0, 0), (150, 1), (330, 0), (450, 2)],
            cell_plan: (0..12).map(|i| (i * 50, i as u32)).collect(),
            mode_plan: vec![(0, 0)],
            noise_std: 2.0,
            speed_profile: vec![(0.0, 5.0), (300.0, 12.0), (600.0, 5.0)],
            seed: 0,
            mode_dl_multiplier: 4.0,
            handoff_dip: 0.3,
            band_multipliers: vec![1.0, 1.35, 0.65],
        }
    }

    /// Default mixed 4G/5G driving route: 10 trips of 600 s with four access-
    /// mode switches per trip, anchored at cell boundaries.
    pub fn default_5g() -> Self {
        RouteProfile {
            route_len: 600,
            trips: 10,
            base_curve: vec![
                (0.0, 10.0),
                (150.0, 20.0),
                (300.0, 14.0),
                (450.0, 22.0),
                (600.0, 10.0),
            ],
            band_plan: vec![(0, 0)],
            cell_plan: (0..12).map(|i| (i * 50, i as u32)).collect(),
            mode_plan: vec![(0, 0), (100, 1), (250, 0), (350, 1), (500, 0)],
            noise_std: 2.0,
            speed_profile: vec![(0.0, 12.0), (600.0, 12.0)],
            seed: 0,
            mode_dl_multiplier: 4.0,
            handoff_dip: 0.3,
            band_multipliers: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.route_len < 60 {
            return Err(Error::config(format!(
                "route length {} below minimum of 60 s",
                self.route_len
            )));
        }
        if self.trips < 1 {
            return Err(Error::config("trip count must be >= 1".to_string()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::config("noise std must be >= 0".to_string()));
        }
        if self.base_curve.is_empty() || self.speed_profile.is_empty() {
            return Err(Error::config("base curve and speed profile need points".to_string()));
        }
        for plan_start in [
            self.band_plan.first().map(|p| p.0),
            self.cell_plan.first().map(|p| p.0),
            self.mode_plan.first().map(|p| p.0),
        ] {
            match plan_start {
                Some(0) => {}
                _ => return Err(Error::config("step plans must start at position 0".to_string())),
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        serial::save(path, PROFILE_FORMAT, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let profile: RouteProfile = serial::load(path, PROFILE_FORMAT)?;
        profile.validate()?;
        Ok(profile)
    }
}

fn piecewise(points: &[(f64, f64)], pos: f64) -> f64 {
    if pos <= points[0].0 {
        return points[0].1;
    }
    for pair in points.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        if pos <= x1 {
            if x1 == x0 {
                return y1;
            }
            return y0 + (y1 - y0) * (pos - x0) / (x1 - x0);
        }
    }
    points[points.len() - 1].1
}

fn step_value<T: Copy>(plan: &[(usize, T)], pos: usize) -> T {
    let mut value = plan[0].1;
    for &(start, v) in plan {
        if start <= pos {
            value = v;
        } else {
            break;
        }
    }
    value
}

/// Position of the current step's start and the next step boundary, used to
/// shape signal strength within a cell.
fn step_segment(plan: &[(usize, u32)], pos: usize, route_len: usize) -> (usize, usize) {
    let mut start = plan[0].0;
    let mut end = route_len;
    for &(s, _) in plan {
        if s <= pos {
            start = s;
        } else {
            end = s;
            break;
        }
    }
    (start, end)
}

struct Noise {
    rng: ChaCha8Rng,
    unit: Normal<f64>,
}

impl Noise {
    fn new(seed: u64) -> Self {
        Noise {
            rng: ChaCha8Rng::seed_from_u64(seed),
            unit: Normal::new(0.0, 1.0).expect("unit normal"),
        }
    }

    fn gauss(&mut self, std: f64) -> f64 {
        // Always draw so the stream position is independent of std.
        let z = self.unit.sample(&mut self.rng);
        z * std
    }
}

/// Generates a synthetic trace for the given built-in schema. The same
/// profile and seed always produce the same trace, byte for byte.
pub fn generate(profile: &RouteProfile, schema: &FeatureSchema) -> Result<Trace> {
    profile.validate()?;
    match schema.name.as_str() {
        "LTE-8" => generate_lte(profile, schema),
        "5G-12" => generate_5g(profile, schema),
        other => Err(Error::config(format!(
            "synthetic generation supports LTE-8 and 5G-12 schemas, not `{other}`"
        ))),
    }
}

/// Clean (noise-free) downlink capacity at absolute second `t`, including
/// band/cell/mode modulation and the handoff dip.
fn clean_bandwidth(profile: &RouteProfile, t: usize, with_mode: bool) -> f64 {
    let pos = t % profile.route_len;
    let base = piecewise(&profile.base_curve, pos as f64);
    let band = step_value(&profile.band_plan, pos) as usize;
    let band_mult = profile
        .band_multipliers
        .get(band)
        .copied()
        .unwrap_or(1.0);
    let mode_mult = if with_mode && step_value(&profile.mode_plan, pos) == 1 {
        profile.mode_dl_multiplier
    } else {
        1.0
    };
    let dip = if cell_changed(profile, t) {
        profile.handoff_dip
    } else {
        1.0
    };
    base * band_mult * mode_mult * dip
}

/// Cell change as a pure function of route position (the route is a loop),
/// so every trip is exactly periodic. Position 0 counts as a change when the
/// route wraps from a different cell.
fn cell_changed(profile: &RouteProfile, t: usize) -> bool {
    let pos = t % profile.route_len;
    let prev_pos = (pos + profile.route_len - 1) % profile.route_len;
    step_value(&profile.cell_plan, pos) != step_value(&profile.cell_plan, prev_pos)
}

fn mode_at(profile: &RouteProfile, t: usize) -> u8 {
    step_value(&profile.mode_plan, t % profile.route_len)
}

/// Seconds until the next access-mode toggle, treating the route as a loop.
/// `None` when the plan never toggles.
fn seconds_to_next_toggle(profile: &RouteProfile, pos: usize) -> Option<usize> {
    let len = profile.route_len;
    let now = step_value(&profile.mode_plan, pos);
    (1..=len).find(|&d| step_value(&profile.mode_plan, (pos + d) % len) != now)
}

fn generate_lte(profile: &RouteProfile, schema: &FeatureSchema) -> Result<Trace> {
    let len = profile.route_len * profile.trips;
    let mut noise = Noise::new(profile.seed);
    let n = schema.columns.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(len); n];
    let mut band_labels: Vec<String> = Vec::new();

    for t in 0..len {
        let pos = t % profile.route_len;
        let base = piecewise(&profile.base_curve, pos as f64);
        let clean = clean_bandwidth(profile, t, false);
        let bw = (clean + noise.gauss(profile.noise_std)).max(0.0);
        let band = step_value(&profile.band_plan, pos);
        let (seg_start, seg_end) = step_segment(&profile.cell_plan, pos, profile.route_len);
        let seg_mid = (seg_start + seg_end) as f64 / 2.0;
        let dist_mid = (pos as f64 - seg_mid).abs();

        let neighbors = (2.0
            + 2.0 * (2.0 * std::f64::consts::PI * pos as f64 / profile.route_len as f64).sin()
            + noise.gauss(0.5))
        .round()
        .max(0.0);
        let rssi = -110.0 + 1.0 * base + noise.gauss(1.0);
        let rsrq = -19.5 + 0.3 * base + noise.gauss(0.5);
        let echng = f64::from(cell_changed(profile, t));
        let ta = ((dist_mid / 5.0) + noise.gauss(0.3)).round().max(0.0);
        let speed = (piecewise(&profile.speed_profile, pos as f64) + noise.gauss(0.3)).max(0.0);

        if band as usize >= band_labels.len() {
            for b in band_labels.len()..=band as usize {
                band_labels.push(format!("band-{b}"));
            }
        }
        for (c, v) in [bw, neighbors, rssi, rsrq, echng, ta, speed, band as f64]
            .into_iter()
            .enumerate()
        {
            columns[c].push(v);
        }
    }

    let mut code_maps = BTreeMap::new();
    code_maps.insert("Band".to_string(), band_labels);
    Trace::from_columns(schema.clone(), &route_name(profile, "lte"), columns, None, code_maps)
}

fn generate_5g(profile: &RouteProfile, schema: &FeatureSchema) -> Result<Trace> {
    let len = profile.route_len * profile.trips;
    let mut noise = Noise::new(profile.seed);
    let n = schema.columns.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(len); n];
    let mut cell_ids: Vec<f64> = Vec::with_capacity(len);
    let mut modes: Vec<u8> = Vec::with_capacity(len);
    let mut cell_labels: Vec<String> = Vec::new();

    for t in 0..len {
        let pos = t % profile.route_len;
        let base = piecewise(&profile.base_curve, pos as f64);
        let clean = clean_bandwidth(profile, t, true);
        let dl = (clean + noise.gauss(profile.noise_std)).max(0.0);
        let ul = (0.15 * clean + noise.gauss(0.3 * profile.noise_std.max(0.1))).max(0.0);

        let cell = step_value(&profile.cell_plan, pos);
        let (seg_start, seg_end) = step_segment(&profile.cell_plan, pos, profile.route_len);
        let seg_mid = (seg_start + seg_end) as f64 / 2.0;
        // Serving-cell signal peaks at the cell center and droops toward the
        // edges; the neighbor cell mirrors it. Handoffs happen at edges, so
        // these slopes are what makes upcoming switches observable.
        let dist_mid = (pos as f64 - seg_mid).abs();

        let mode = mode_at(profile, t);
        // Mode switches are coverage-driven: the serving 5G link degrades
        // ahead of a fallback to 4G, and the 5G neighbor strengthens ahead
        // of an upgrade. This gives each direction its own observable
        // countdown, independent of ordinary cell-to-cell handoffs.
        let countdown = seconds_to_next_toggle(profile, pos)
            .map_or(0.0, |d| (15.0 - d as f64).max(0.0));
        let (snr_drop, nrx_boost) = if mode == 1 {
            (1.2 * countdown, 0.0)
        } else {
            (0.0, 1.5 * countdown)
        };

        let rssi = -95.0 + 0.5 * base + noise.gauss(1.0);
        let rsrq = -16.0 + 0.2 * base + noise.gauss(0.5);
        let rsrp = -75.0 - 1.2 * dist_mid + noise.gauss(0.25);
        let nrxsrp = -110.0 + 1.0 * dist_mid + nrx_boost + noise.gauss(0.25);
        let nrxsrq = -18.0 + 0.2 * dist_mid + noise.gauss(0.25);
        let snr = 25.0 - 0.8 * dist_mid - snr_drop + noise.gauss(0.25);
        let cqi = (3.0 + snr / 2.0 + noise.gauss(0.3)).round().clamp(0.0, 15.0);
        let handoff = f64::from(cell_changed(profile, t));
        let speed = (piecewise(&profile.speed_profile, pos as f64) + noise.gauss(0.3)).max(0.0);

        if cell as usize >= cell_labels.len() {
            for c in cell_labels.len()..=cell as usize {
                cell_labels.push(format!("cell-{c}"));
            }
        }
        for (c, v) in [
            dl,
            ul,
            rssi,
            rsrq,
            rsrp,
            nrxsrp,
            nrxsrq,
            snr,
            cqi,
            mode as f64,
            handoff,
            speed,
        ]
        .into_iter()
        .enumerate()
        {
            columns[c].push(v);
        }
        cell_ids.push(cell as f64);
        modes.push(mode);
    }

    let mut code_maps = BTreeMap::new();
    code_maps.insert("CellID".to_string(), cell_labels);
    code_maps.insert("NetworkMode".to_string(), vec!["LTE".to_string(), "5G".to_string()]);
    let trace = Trace::from_columns(
        schema.clone(),
        &route_name(profile, "5g"),
        columns,
        Some(modes),
        code_maps,
    )?;
    trace.with_aux("CellID", cell_ids)
}

fn route_name(profile: &RouteProfile, family: &str) -> String {
    format!(
        "synth-{family}-{}x{}s-seed{}",
        profile.trips, profile.route_len, profile.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pearson;

    #[test]
    fn same_seed_same_trace() {
        let profile = RouteProfile::default_lte();
        let schema = FeatureSchema::lte8();
        let a = generate(&profile, &schema).unwrap();
        let b = generate(&profile, &schema).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn zero_noise_trips_repeat_exactly() {
        let mut profile = RouteProfile::default_lte();
        profile.noise_std = 0.0;
        profile.trips = 2;
        let trace = generate(&profile, &FeatureSchema::lte8()).unwrap();
        let bw = trace.bandwidth();
        let (first, second) = bw.split_at(profile.route_len);
        assert_eq!(first, second);
    }

    #[test]
    fn lag_route_autocorrelation_dominates() {
        let profile = RouteProfile::default_lte();
        let trace = generate(&profile, &FeatureSchema::lte8()).unwrap();
        let bw = trace.bandwidth();
        let lag = profile.route_len;
        let a = &bw[..bw.len() - lag];
        let b = &bw[lag..];
        let r = pearson(a, b).unwrap();
        assert!(r > 0.8, "lag-{lag} autocorrelation {r}");
    }

    #[test]
    fn bandwidth_nonnegative_and_indicators_at_changes_only() {
        for (profile, schema) in [
            (RouteProfile::default_lte(), FeatureSchema::lte8()),
            (RouteProfile::default_5g(), FeatureSchema::fiveg12()),
        ] {
            let trace = generate(&profile, &schema).unwrap();
            assert!(trace.bandwidth().iter().all(|&b| b >= 0.0));
            let indicator = if schema.name == "LTE-8" {
                trace.column("Echng").unwrap()
            } else {
                trace.column("Cell-handoff").unwrap()
            };
            for t in 0..trace.len() {
                let expect = f64::from(cell_changed(&profile, t));
                assert_eq!(indicator[t], expect, "t={t}");
            }
        }
    }

    #[test]
    fn empirical_mean_tracks_clean_mean() {
        let profile = RouteProfile::default_lte();
        let trace = generate(&profile, &FeatureSchema::lte8()).unwrap();
        let mut clean = profile.clone();
        clean.noise_std = 0.0;
        let clean_trace = generate(&clean, &FeatureSchema::lte8()).unwrap();
        let t = trace.len() as f64;
        let mean = trace.bandwidth().iter().sum::<f64>() / t;
        let clean_mean = clean_trace.bandwidth().iter().sum::<f64>() / t;
        let bound = 3.0 * profile.noise_std / t.sqrt();
        // Clamping at 0 adds a small positive bias; allow it on top of the
        // sampling bound.
        assert!(
            (mean - clean_mean).abs() < bound + 0.05,
            "mean {mean} vs clean {clean_mean} (bound {bound})"
        );
    }

    #[test]
    fn fiveg_has_forty_mode_switches() {
        let profile = RouteProfile::default_5g();
        let trace = generate(&profile, &FeatureSchema::fiveg12()).unwrap();
        let modes = trace.mode_flags().unwrap();
        let switches = modes.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(switches, 40);
    }

    #[test]
    fn fiveg_dl_reflects_mode_multiplier() {
        let mut profile = RouteProfile::default_5g();
        profile.noise_std = 0.0;
        profile.handoff_dip = 1.0;
        let trace = generate(&profile, &FeatureSchema::fiveg12()).unwrap();
        let modes = trace.mode_flags().unwrap();
        let dl = trace.bandwidth();
        let mean_on: f64 = {
            let v: Vec<f64> = (0..dl.len()).filter(|&t| modes[t] == 1).map(|t| dl[t]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let mean_off: f64 = {
            let v: Vec<f64> = (0..dl.len()).filter(|&t| modes[t] == 0).map(|t| dl[t]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_on > 2.5 * mean_off, "5G mean {mean_on} vs 4G mean {mean_off}");
    }

    #[test]
    fn unsupported_schema_rejected() {
        let schema = FeatureSchema::new(
            "custom",
            vec![crate::trace::ColumnSpec {
                name: "BW".to_string(),
                kind: crate::trace::ColumnKind::Continuous,
                unit: "Mbps".to_string(),
            }],
            "BW",
        )
        .unwrap();
        assert!(generate(&RouteProfile::default_lte(), &schema).is_err());
    }

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.cfg");
        let profile = RouteProfile::default_5g();
        profile.save(&path).unwrap();
        assert_eq!(RouteProfile::load(&path).unwrap(), profile);
    }

    #[test]
    fn profile_validation() {
        let mut profile = RouteProfile::default_lte();
        profile.route_len = 30;
        assert!(profile.validate().is_err());
        let mut profile = RouteProfile::default_lte();
        profile.trips = 0;
        assert!(profile.validate().is_err());
        let mut profile = RouteProfile::default_lte();
        profile.noise_std = -1.0;
        assert!(profile.validate().is_err());
        let mut profile = RouteProfile::default_lte();
        profile.cell_plan = vec![(10, 0)];
        assert!(profile.validate().is_err());
    }
}
