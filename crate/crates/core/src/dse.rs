//! Design-space performance modeling.
//!
//! Peak throughput follows from how many dot-product units fit the device:
//! core-logic configurations are ALM-bound (`floor(budget * alms /
//! alms_per_dot)` units of `words_per_dot` MACs each, plus an optional
//! DSP-packing contribution), the full-precision configuration is DSP-bound.
//! Achieved throughput applies a mapping efficiency, equivalent TOPS
//! normalizes by the widening factor squared, and images/sec divides by the
//! widened network's op count.
//!
//! Efficiencies are calibrated per configuration against the published
//! ResNet-34 projections; the published batch-1 images/sec comparison table
//! implies much lower per-network efficiencies and is carried as fixture
//! data with its derived efficiencies, not as a prediction target.

use crate::fixtures::{self, ConfigRow, FP32_BITS};
use crate::netgraph::{GraphError, Network};
use crate::numerics::WeightFormat;
use crate::pe::{catalog_lookup, catalog_widest, pe_catalog, PeConfig};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DseError {
    #[error("unknown device {0:?}")]
    UnknownDevice(String),
    #[error("configuration {0} has no ALM array and no DSP packing; nothing to build")]
    NoArray(String),
    #[error("explore needs at least one PE configuration and one widening factor")]
    EmptyConfigSet,
    #[error("parameter out of range: {0}")]
    BadParam(String),
    #[error("unknown PE label {0:?}")]
    UnknownPe(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// FPGA device resources. M20K/MLAB capacities are carried for reporting
/// only; no memory constraint is modeled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceSpec {
    pub name: String,
    pub dsp_blocks: u64,
    pub alms: u64,
    pub m20k_kilobits: u64,
    pub mlab_kilobits: u64,
    pub fmax_hz: f64,
}

/// Built-in devices. The big device carries the 600 MHz projection clock,
/// the mid-range one the ~275 MHz measured clock.
pub fn builtin_devices() -> Vec<DeviceSpec> {
    vec![
        DeviceSpec {
            name: "arria10-gx1150".to_string(),
            dsp_blocks: 1_518,
            alms: 427_200,
            m20k_kilobits: 54_260,
            mlab_kilobits: 12_984,
            fmax_hz: 275.0e6,
        },
        DeviceSpec {
            name: "stratix10-gx2800".to_string(),
            dsp_blocks: 5_760,
            alms: 933_120,
            m20k_kilobits: 234_496,
            mlab_kilobits: 15_360,
            fmax_hz: 600.0e6,
        },
    ]
}

pub fn device(name: &str) -> Result<DeviceSpec, DseError> {
    builtin_devices()
        .into_iter()
        .find(|d| d.name == name)
        .ok_or_else(|| DseError::UnknownDevice(name.to_string()))
}

/// Array configuration under evaluation: a catalog/custom core-logic PE or
/// the DSP-bound full-precision datapath.
#[derive(Debug, Clone, PartialEq)]
pub enum PeChoice {
    Fp32,
    Pe(PeConfig),
}

impl PeChoice {
    pub fn label(&self) -> String {
        match self {
            PeChoice::Fp32 => "fp32".to_string(),
            PeChoice::Pe(cfg) => cfg.label(),
        }
    }

    pub fn config_row(&self) -> ConfigRow {
        match self {
            PeChoice::Fp32 => ConfigRow {
                act_bits: FP32_BITS,
                weight: WeightFormat::Fp32,
            },
            PeChoice::Pe(cfg) => ConfigRow {
                act_bits: cfg.act.bits(),
                weight: cfg.weight,
            },
        }
    }

    /// Effective (activation, weight) bit widths for GOP-bits accounting.
    pub fn bit_widths(&self) -> (u32, u32) {
        match self {
            PeChoice::Fp32 => (32, 32),
            PeChoice::Pe(cfg) => (u32::from(cfg.act.bits()), cfg.weight.effective_bits()),
        }
    }

    /// Parse labels like `fp32`, `2xT/64`, `8x8/8`, `1x1/32`, or a pair
    /// without a dot size (`2xT`), which picks the widest catalog entry.
    pub fn parse(label: &str) -> Result<PeChoice, DseError> {
        if label == "fp32" {
            return Ok(PeChoice::Fp32);
        }
        let unknown = || DseError::UnknownPe(label.to_string());
        let (pair, words) = match label.split_once('/') {
            Some((pair, words)) => (
                pair,
                Some(words.parse::<u32>().map_err(|_| unknown())?),
            ),
            None => (label, None),
        };
        let (act_str, weight_str) = pair.split_once('x').ok_or_else(unknown)?;
        let act_bits: u8 = act_str.parse().map_err(|_| unknown())?;
        let weight = match weight_str {
            "T" | "t" => WeightFormat::Ternary,
            "B" | "b" => WeightFormat::Binary,
            "1" if act_bits == 1 => WeightFormat::Binary,
            digits => {
                let bits: u8 = digits.parse().map_err(|_| unknown())?;
                WeightFormat::signed(bits).map_err(|_| unknown())?
            }
        };
        let cfg = match words {
            Some(words) => catalog_lookup(act_bits, weight, words),
            None => catalog_widest(act_bits, weight),
        };
        cfg.map(PeChoice::Pe).ok_or_else(unknown)
    }

    /// The full configuration grid: every catalog row plus full precision.
    pub fn all() -> Vec<PeChoice> {
        let mut out = vec![PeChoice::Fp32];
        out.extend(pe_catalog().into_iter().map(PeChoice::Pe));
        out
    }

    /// One choice per (activation, weight) pair at its widest dot size,
    /// plus full precision; this is the grid behind the published tables.
    pub fn table_rows() -> Vec<PeChoice> {
        fixtures::config_rows()
            .into_iter()
            .map(|row| {
                if row.is_fp32() {
                    PeChoice::Fp32
                } else {
                    PeChoice::Pe(
                        catalog_widest(row.act_bits, row.weight)
                            .expect("fixture rows exist in the catalog"),
                    )
                }
            })
            .collect()
    }
}

/// Mapping efficiency: either calibrated per configuration from the
/// published projections, or pinned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Efficiency {
    Calibrated,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DseParams {
    /// Fraction of the device's ALMs available to the PE array.
    /// The 0.80 default is a calibration: together with efficiencies in
    /// the published 50-70% band it reproduces the published equivalent
    /// TOPS on the large device.
    pub alm_budget_fraction: f64,
    pub efficiency: Efficiency,
    pub use_dsp_packing: bool,
    /// Widening factor (1, 2, or 3).
    pub widen: u8,
}

impl Default for DseParams {
    fn default() -> Self {
        DseParams {
            alm_budget_fraction: 0.80,
            efficiency: Efficiency::Calibrated,
            use_dsp_packing: false,
            widen: 1,
        }
    }
}

impl DseParams {
    fn validate(&self) -> Result<(), DseError> {
        if !(self.alm_budget_fraction > 0.0 && self.alm_budget_fraction <= 1.0) {
            return Err(DseError::BadParam(format!(
                "alm_budget_fraction {} not in (0, 1]",
                self.alm_budget_fraction
            )));
        }
        if let Efficiency::Fixed(eta) = self.efficiency {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(DseError::BadParam(format!("eta {eta} not in (0, 1]")));
            }
        }
        if !(1..=3).contains(&self.widen) {
            return Err(DseError::BadParam(format!(
                "widen factor {} not in 1..=3",
                self.widen
            )));
        }
        Ok(())
    }
}

/// Modeled array geometry and throughput.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Projection {
    pub dot_units: u64,
    pub macs_per_cycle: u64,
    pub peak_ops_per_sec: f64,
    pub achieved_ops_per_sec: f64,
    /// Achieved TOPS normalized to the baseline topology: divided by the
    /// widening factor squared.
    pub eq_tops: f64,
    pub images_per_sec: f64,
    pub alms_used: u64,
    pub dsps_used: u64,
}

struct ArrayGeometry {
    dot_units: u64,
    macs_per_cycle: u64,
    alms_used: u64,
    dsps_used: u64,
}

fn size_array(
    dev: &DeviceSpec,
    choice: &PeChoice,
    budget_alms: u64,
    use_dsp_packing: bool,
) -> Result<ArrayGeometry, DseError> {
    match choice {
        PeChoice::Fp32 => Ok(ArrayGeometry {
            dot_units: dev.dsp_blocks,
            macs_per_cycle: dev.dsp_blocks,
            alms_used: 0,
            dsps_used: dev.dsp_blocks,
        }),
        PeChoice::Pe(cfg) => {
            let packed_macs = if use_dsp_packing {
                dev.dsp_blocks * u64::from(cfg.dsp_macs_per_block)
            } else {
                0
            };
            if cfg.alms_per_dot == 0 && packed_macs == 0 {
                return Err(DseError::NoArray(cfg.label()));
            }
            let dot_units = if cfg.alms_per_dot == 0 {
                0
            } else {
                budget_alms / u64::from(cfg.alms_per_dot)
            };
            Ok(ArrayGeometry {
                dot_units,
                macs_per_cycle: dot_units * u64::from(cfg.words_per_dot) + packed_macs,
                alms_used: dot_units * u64::from(cfg.alms_per_dot),
                dsps_used: if packed_macs > 0 { dev.dsp_blocks } else { 0 },
            })
        }
    }
}

fn projection_from_geometry(geo: ArrayGeometry, fmax_hz: f64) -> Projection {
    let peak = 2.0 * geo.macs_per_cycle as f64 * fmax_hz;
    Projection {
        dot_units: geo.dot_units,
        macs_per_cycle: geo.macs_per_cycle,
        peak_ops_per_sec: peak,
        achieved_ops_per_sec: peak,
        eq_tops: peak / 1e12,
        images_per_sec: 0.0,
        alms_used: geo.alms_used,
        dsps_used: geo.dsps_used,
    }
}

/// Peak throughput of a configuration on a device: array geometry, peak
/// ops/sec, and resources used. Achieved fields are left at peak; apply
/// [`project`] for efficiency, normalization, and images/sec.
pub fn peak_throughput(
    dev: &DeviceSpec,
    choice: &PeChoice,
    params: &DseParams,
) -> Result<Projection, DseError> {
    params.validate()?;
    let budget_alms = (params.alm_budget_fraction * dev.alms as f64).floor() as u64;
    let geo = size_array(dev, choice, budget_alms, params.use_dsp_packing)?;
    Ok(projection_from_geometry(geo, dev.fmax_hz))
}

/// Calibration of the published large-device ResNet-34 baseline: for each
/// low-precision configuration, the efficiency that maps the modeled peak
/// onto the published equivalent TOPS.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub config: ConfigRow,
    pub pe: PeConfig,
    pub table_eq_tops: f64,
    pub peak_tops: f64,
    /// `table_eq_tops / peak_tops`.
    pub eta: f64,
}

/// Derive per-configuration efficiencies from the published ResNet-34
/// baseline column under the default ALM budget, largest catalog dot size
/// per pair, no DSP packing.
pub fn stratix10_resnet34_calibration() -> Vec<CalibrationRow> {
    let dev = device("stratix10-gx2800").expect("built-in device");
    let params = DseParams::default();
    fixtures::resnet_grid()
        .into_iter()
        .filter(|row| !row.config.is_fp32())
        .map(|row| {
            let pe = catalog_widest(row.config.act_bits, row.config.weight)
                .expect("fixture configs exist in the catalog");
            let peak = peak_throughput(&dev, &PeChoice::Pe(pe), &params)
                .expect("catalog configs size an array")
                .peak_ops_per_sec
                / 1e12;
            let table = row.eq_tops[0].expect("baseline column is fully reported");
            CalibrationRow {
                config: row.config,
                pe,
                table_eq_tops: table,
                peak_tops: peak,
                eta: table / peak,
            }
        })
        .collect()
}

/// Calibrated efficiency for a configuration. Low-precision pairs take the
/// ResNet-34 calibration; full precision is DSP-bound at its published
/// value (the table quotes the peak); pairs outside the published grid fall
/// back to 0.6, the midpoint of the published 50-70% mapping band.
pub fn calibrated_eta(choice: &PeChoice) -> f64 {
    match choice {
        PeChoice::Fp32 => 1.0,
        PeChoice::Pe(cfg) => stratix10_resnet34_calibration()
            .into_iter()
            .find(|row| row.config.act_bits == cfg.act.bits() && row.config.weight == cfg.weight)
            .map(|row| row.eta)
            .unwrap_or(0.6),
    }
}

fn resolve_eta(choice: &PeChoice, params: &DseParams) -> f64 {
    match params.efficiency {
        Efficiency::Fixed(eta) => eta,
        Efficiency::Calibrated => calibrated_eta(choice),
    }
}

/// Full projection of a network onto a device: peak, achieved (peak times
/// efficiency), widening-normalized equivalent TOPS, and images/sec against
/// the widened network's op count.
pub fn project(
    dev: &DeviceSpec,
    net: &Network,
    choice: &PeChoice,
    params: &DseParams,
) -> Result<Projection, DseError> {
    let mut projection = peak_throughput(dev, choice, params)?;
    let eta = resolve_eta(choice, params);
    let k2 = f64::from(u32::from(params.widen) * u32::from(params.widen));
    let gops = net.widen(params.widen)?.ops_count();
    projection.achieved_ops_per_sec = projection.peak_ops_per_sec * eta;
    projection.eq_tops = projection.achieved_ops_per_sec / (k2 * 1e12);
    projection.images_per_sec = if gops > 0.0 {
        projection.achieved_ops_per_sec / (gops * 1e9)
    } else {
        0.0
    };
    Ok(projection)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SortKey {
    #[default]
    AchievedTops,
    ImagesPerSec,
    EqTops,
}

impl std::str::FromStr for SortKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tops" | "throughput" => Ok(SortKey::AchievedTops),
            "imgs" | "images" | "images-per-sec" => Ok(SortKey::ImagesPerSec),
            "eqtops" | "eq-tops" => Ok(SortKey::EqTops),
            other => Err(format!("unknown sort key {other:?}")),
        }
    }
}

/// One explored configuration with its accuracy (when published; NR cells
/// stay `None`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploreRow {
    pub pe: String,
    pub widen: u8,
    pub top1_accuracy: Option<f64>,
    #[serde(flatten)]
    pub projection: Projection,
}

/// Evaluate the Cartesian product of configurations and widening factors,
/// sorted descending by the requested key (deterministic tie-break on
/// label and widening factor).
pub fn explore(
    dev: &DeviceSpec,
    net: &Network,
    choices: &[PeChoice],
    widen_set: &[u8],
    params: &DseParams,
    sort: SortKey,
) -> Result<Vec<ExploreRow>, DseError> {
    if choices.is_empty() || widen_set.is_empty() {
        return Err(DseError::EmptyConfigSet);
    }
    let mut rows = Vec::with_capacity(choices.len() * widen_set.len());
    for choice in choices {
        for &widen in widen_set {
            let run = DseParams {
                widen,
                ..params.clone()
            };
            let projection = project(dev, net, choice, &run)?;
            rows.push(ExploreRow {
                pe: choice.label(),
                widen,
                top1_accuracy: fixtures::accuracy_for(net.name(), widen, &choice.config_row()),
                projection,
            });
        }
    }
    let key = |row: &ExploreRow| match sort {
        SortKey::AchievedTops => row.projection.achieved_ops_per_sec,
        SortKey::ImagesPerSec => row.projection.images_per_sec,
        SortKey::EqTops => row.projection.eq_tops,
    };
    rows.sort_by(|a, b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap()
            .then_with(|| a.pe.cmp(&b.pe))
            .then_with(|| a.widen.cmp(&b.widen))
    });
    Ok(rows)
}

/// Indices of the non-dominated (accuracy, throughput) points, sorted by
/// accuracy ascending (throughput strictly decreasing along the frontier).
/// Exact duplicates collapse to one representative.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .partial_cmp(&points[a].0)
            .unwrap()
            .then(points[b].1.partial_cmp(&points[a].1).unwrap())
            .then(a.cmp(&b))
    });
    let mut frontier = Vec::new();
    let mut best_throughput = f64::NEG_INFINITY;
    for idx in order {
        if points[idx].1 > best_throughput {
            frontier.push(idx);
            best_throughput = points[idx].1;
        }
    }
    frontier.reverse();
    frontier
}

/// Non-dominated subset of (accuracy, throughput) points; see
/// [`pareto_indices`].
pub fn pareto(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pareto_indices(points)
        .into_iter()
        .map(|i| points[i])
        .collect()
}

/// Outcome of replaying the measured mid-range-FPGA AlexNet design through
/// the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    pub projection: Projection,
    pub fixture: fixtures::ArriaAlexnetFixture,
    /// Measured images/sec times the AlexNet op count; sits ~9% above the
    /// design's reported TOPS capability.
    pub implied_achieved_tops: f64,
}

/// Replay the measured AlexNet 2-bit/ternary design: ALM budget pinned to
/// the design's 150k usage, DSP packing on, measured clock, fixture
/// efficiency. Reproduces the measured images/sec.
pub fn regression_arria10_alexnet() -> Result<RegressionReport, DseError> {
    regression_with(fixtures::arria10_alexnet_2xt())
}

/// The same replay against an explicit (possibly overridden) fixture.
pub fn regression_with(fixture: fixtures::ArriaAlexnetFixture) -> Result<RegressionReport, DseError> {
    let dev = device(&fixture.device)?;
    let pe = catalog_lookup(2, WeightFormat::Ternary, 64).expect("catalog has the 2xT/64 row");
    let geo = size_array(&dev, &PeChoice::Pe(pe), fixture.alms_used, true)?;
    let mut projection = projection_from_geometry(geo, fixture.fmax_hz);
    let net = crate::netgraph::builtin("alexnet")?;
    let gops = net.ops_count();
    projection.achieved_ops_per_sec = projection.peak_ops_per_sec * fixture.eta;
    projection.eq_tops = projection.achieved_ops_per_sec / 1e12;
    projection.images_per_sec = projection.achieved_ops_per_sec / (gops * 1e9);
    let implied_achieved_tops = fixture.images_per_sec * gops * 1e9 / 1e12;
    Ok(RegressionReport {
        projection,
        fixture,
        implied_achieved_tops,
    })
}

/// Efficiency implied by one cell of the published batch-1 images/sec
/// table: `images/sec x GOPs / modeled peak`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpliedEfficiency {
    pub config: ConfigRow,
    pub network: String,
    pub images_per_sec: f64,
    pub implied_tops: f64,
    pub peak_tops: f64,
    pub eta: f64,
}

/// Derive the per-(network, configuration) efficiencies implied by the
/// published batch-1 FPGA rates. These disagree with the projection-table
/// efficiencies by up to ~3.7x; the published material offers no
/// reconciliation, so they ship as data.
pub fn implied_efficiencies() -> Result<Vec<ImpliedEfficiency>, DseError> {
    let dev = device("stratix10-gx2800")?;
    let params = DseParams::default();
    let mut out = Vec::new();
    for row in fixtures::images_per_sec_table() {
        let choice = if row.config.is_fp32() {
            PeChoice::Fp32
        } else {
            PeChoice::Pe(
                catalog_widest(row.config.act_bits, row.config.weight)
                    .expect("fixture configs exist in the catalog"),
            )
        };
        let peak = peak_throughput(&dev, &choice, &params)?.peak_ops_per_sec / 1e12;
        for (network, rates) in [
            ("resnet34", row.resnet34),
            ("resnet50", row.resnet50),
            ("alexnet", row.alexnet),
        ] {
            let gops = crate::netgraph::builtin(network)?.ops_count();
            let implied = rates[0] * gops * 1e9 / 1e12;
            out.push(ImpliedEfficiency {
                config: row.config,
                network: network.to_string(),
                images_per_sec: rates[0],
                implied_tops: implied,
                peak_tops: peak,
                eta: implied / peak,
            });
        }
    }
    Ok(out)
}
