//! Fixture-table file schemas (TOML).
//!
//! The repository ships its data tables as files under `fixtures/`; these
//! parsers read them back so tests can hold file and compiled catalog in
//! sync and so the CLI can run against overridden fixture directories
//! (`LPNN_FIXTURES`).

use super::FormatError;
use crate::dse::DeviceSpec;
use crate::fixtures::{ConfigRow, FrontierPoint, ImagesPerSecRow, ResnetGridRow};
use crate::numerics::{ActFormat, WeightFormat};
use crate::pe::PeConfig;
use serde::Deserialize;

fn parse_config(label: &str) -> Result<ConfigRow, FormatError> {
    ConfigRow::parse(label)
        .ok_or_else(|| FormatError::Validation(format!("unknown config label {label:?}")))
}

#[derive(Debug, Deserialize)]
struct DevicesFile {
    devices: Vec<DeviceEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceEntry {
    name: String,
    dsp_blocks: u64,
    alms: u64,
    m20k_kilobits: u64,
    mlab_kilobits: u64,
    fmax_mhz: f64,
}

pub fn parse_devices_file(toml_text: &str) -> Result<Vec<DeviceSpec>, FormatError> {
    let file: DevicesFile = toml::from_str(toml_text)?;
    Ok(file
        .devices
        .into_iter()
        .map(|d| DeviceSpec {
            name: d.name,
            dsp_blocks: d.dsp_blocks,
            alms: d.alms,
            m20k_kilobits: d.m20k_kilobits,
            mlab_kilobits: d.mlab_kilobits,
            fmax_hz: d.fmax_mhz * 1e6,
        })
        .collect())
}

#[derive(Debug, Deserialize)]
struct PeCatalogFile {
    pe: Vec<PeEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeEntry {
    act_bits: u8,
    weight: String,
    words_per_dot: u32,
    alms_per_dot: u32,
    #[serde(default)]
    dsp_macs_per_block: u32,
}

pub fn parse_pe_catalog_file(toml_text: &str) -> Result<Vec<PeConfig>, FormatError> {
    let file: PeCatalogFile = toml::from_str(toml_text)?;
    file.pe
        .into_iter()
        .map(|e| {
            let weight: WeightFormat = e.weight.parse().map_err(FormatError::Validation)?;
            Ok(PeConfig {
                act: ActFormat::new(e.act_bits)?,
                weight,
                words_per_dot: e.words_per_dot,
                alms_per_dot: e.alms_per_dot,
                dsp_macs_per_block: e.dsp_macs_per_block,
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct ResnetGridFile {
    rows: Vec<ResnetGridEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResnetGridEntry {
    config: String,
    #[serde(default)]
    r34_1x_eq_tops: Option<f64>,
    #[serde(default)]
    r34_1x_top1: Option<f64>,
    #[serde(default)]
    r34_2x_eq_tops: Option<f64>,
    #[serde(default)]
    r34_2x_top1: Option<f64>,
    #[serde(default)]
    r34_3x_eq_tops: Option<f64>,
    #[serde(default)]
    r34_3x_top1: Option<f64>,
    #[serde(default)]
    r50_eq_tops: Option<f64>,
    #[serde(default)]
    r50_top1: Option<f64>,
}

pub fn parse_resnet_grid_file(toml_text: &str) -> Result<Vec<ResnetGridRow>, FormatError> {
    let file: ResnetGridFile = toml::from_str(toml_text)?;
    file.rows
        .into_iter()
        .map(|e| {
            Ok(ResnetGridRow {
                config: parse_config(&e.config)?,
                eq_tops: [e.r34_1x_eq_tops, e.r34_2x_eq_tops, e.r34_3x_eq_tops, e.r50_eq_tops],
                top1: [e.r34_1x_top1, e.r34_2x_top1, e.r34_3x_top1, e.r50_top1],
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct ImagesPerSecFile {
    rows: Vec<ImagesPerSecEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImagesPerSecEntry {
    config: String,
    resnet34: [f64; 3],
    resnet50: [f64; 3],
    alexnet: [f64; 3],
    eta_resnet34: f64,
    eta_resnet50: f64,
    eta_alexnet: f64,
}

/// A parsed images-per-second row plus the batch-1 FPGA efficiencies the
/// file stores alongside the rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagesPerSecFileRow {
    pub row: ImagesPerSecRow,
    /// Derived efficiencies (implied TOPS / modeled peak) per network
    /// column: resnet34, resnet50, alexnet.
    pub etas: [f64; 3],
}

pub fn parse_images_per_sec_file(
    toml_text: &str,
) -> Result<Vec<ImagesPerSecFileRow>, FormatError> {
    let file: ImagesPerSecFile = toml::from_str(toml_text)?;
    file.rows
        .into_iter()
        .map(|e| {
            Ok(ImagesPerSecFileRow {
                row: ImagesPerSecRow {
                    config: parse_config(&e.config)?,
                    resnet34: e.resnet34,
                    resnet50: e.resnet50,
                    alexnet: e.alexnet,
                },
                etas: [e.eta_resnet34, e.eta_resnet50, e.eta_alexnet],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArriaFixtureFile {
    pub device: String,
    pub fmax_mhz: f64,
    pub alms_used: u64,
    pub m20k_blocks: u64,
    pub images_per_sec: f64,
    pub reported_tops: f64,
    pub eta: f64,
}

pub fn parse_arria_fixture_file(toml_text: &str) -> Result<ArriaFixtureFile, FormatError> {
    Ok(toml::from_str(toml_text)?)
}

#[derive(Debug, Deserialize)]
struct FrontierFile {
    network: String,
    points: Vec<FrontierEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrontierEntry {
    scheme: u8,
    pe: String,
    #[serde(default)]
    top1: Option<f64>,
    images_per_sec: f64,
}

pub fn parse_frontier_file(
    toml_text: &str,
) -> Result<(String, Vec<FrontierPoint>), FormatError> {
    let file: FrontierFile = toml::from_str(toml_text)?;
    let points = file
        .points
        .into_iter()
        .map(|e| FrontierPoint {
            scheme: e.scheme,
            pe: e.pe,
            top1: e.top1,
            images_per_sec: e.images_per_sec,
        })
        .collect();
    Ok((file.network, points))
}

#[derive(Debug, Deserialize)]
struct CalibrationFile {
    device: String,
    network: String,
    alm_budget_fraction: f64,
    rows: Vec<CalibrationEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationEntry {
    config: String,
    pe: String,
    table_eq_tops: f64,
    peak_tops: f64,
    eta: f64,
}

/// Parsed efficiency-calibration fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFileRow {
    pub config: ConfigRow,
    pub pe_label: String,
    pub table_eq_tops: f64,
    pub peak_tops: f64,
    pub eta: f64,
}

pub struct CalibrationFixture {
    pub device: String,
    pub network: String,
    pub alm_budget_fraction: f64,
    pub rows: Vec<CalibrationFileRow>,
}

pub fn parse_calibration_file(toml_text: &str) -> Result<CalibrationFixture, FormatError> {
    let file: CalibrationFile = toml::from_str(toml_text)?;
    let rows = file
        .rows
        .into_iter()
        .map(|e| {
            Ok(CalibrationFileRow {
                config: parse_config(&e.config)?,
                pe_label: e.pe,
                table_eq_tops: e.table_eq_tops,
                peak_tops: e.peak_tops,
                eta: e.eta,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(CalibrationFixture {
        device: file.device,
        network: file.network,
        alm_budget_fraction: file.alm_budget_fraction,
        rows,
    })
}
