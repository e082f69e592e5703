//! Command implementations.

use crate::output::{fmt_accuracy, fmt_rate, fmt_tops, OutputFormat, Table};
use crate::CliError;
use lpnn_core::dse::{
    builtin_devices, device, explore as dse_explore, pareto_indices, regression_with,
    DeviceSpec, DseParams, Efficiency, PeChoice, SortKey,
};
use lpnn_core::engine::{
    run_network_traced, run_reference_fp32, DotEngine, RealTensor,
};
use lpnn_core::fixtures::{alexnet_frontier_points, arria10_alexnet_2xt, FrontierPoint};
use lpnn_core::formats::{
    parse_arria_fixture_file, parse_bundle, parse_devices_file, parse_frontier_file,
    parse_topology, read_qtensor, write_qtensor, TensorEncoding,
};
use lpnn_core::netgraph::{builtin, Network};
use lpnn_core::numerics::{encode_activation, ActFormat, QTensor, TensorShape};
use serde::Serialize;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(path) => fs::write(path, content)
            .map_err(|e| data(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn parse_format(format: &str) -> Result<OutputFormat, CliError> {
    format.parse().map_err(usage)
}

fn emit_table<T: Serialize>(
    format: OutputFormat,
    table: &Table,
    json_rows: &[T],
    output: Option<&Path>,
) -> Result<(), CliError> {
    let content = match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(json_rows)
                .map_err(|e| data(format!("JSON encoding failed: {e}")))?;
            s.push('\n');
            s
        }
        delimited => table.render_delimited(delimited),
    };
    write_output(output, &content)
}

pub fn quantize(bits: u8, input: &Path, output: Option<&Path>) -> Result<(), CliError> {
    if !(2..=8).contains(&bits) {
        return Err(usage(format!(
            "--bits must be 2..=8 (1-bit activations are sign-coded by the engine), got {bits}"
        )));
    }
    let fmt = ActFormat::new(bits).map_err(|e| usage(e.to_string()))?;
    let text = read_file(input)?;
    let mut out = String::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| {
            usage(format!(
                "{}:{}: not a real value: {line:?}",
                input.display(),
                idx + 1
            ))
        })?;
        // the datapath quantizes post-ReLU activations; clamp accordingly
        out.push_str(&format!("{}\n", encode_activation(value, fmt)));
    }
    write_output(output, &out)
}

pub struct SimulateArgs {
    pub bundle: PathBuf,
    pub input: Option<PathBuf>,
    pub input_values: Option<PathBuf>,
    pub input_shape: Option<String>,
    pub output: Option<PathBuf>,
    pub packed_output: bool,
    pub trace: Option<PathBuf>,
    pub oracle: bool,
    pub pe: String,
}

fn parse_shape(text: &str) -> Result<(usize, usize, usize), CliError> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--input-shape must be C,H,W, got {text:?}")))?;
    match parts.as_slice() {
        [c, h, w] => Ok((*c, *h, *w)),
        _ => Err(usage(format!("--input-shape must be C,H,W, got {text:?}"))),
    }
}

fn load_input_tensor(args: &SimulateArgs, input_format: ActFormat) -> Result<QTensor, CliError> {
    if let Some(path) = &args.input {
        let bytes =
            fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        return read_qtensor(&mut bytes.as_slice()).map_err(|e| data(e.to_string()));
    }
    let values_path = args
        .input_values
        .as_ref()
        .ok_or_else(|| usage("simulate needs --input or --input-values"))?;
    let shape_text = args
        .input_shape
        .as_ref()
        .ok_or_else(|| usage("--input-values needs --input-shape C,H,W"))?;
    let (c, h, w) = parse_shape(shape_text)?;
    let text = read_file(values_path)?;
    let mut codes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| {
            data(format!(
                "{}:{}: not a real value: {line:?}",
                values_path.display(),
                idx + 1
            ))
        })?;
        codes.push(encode_activation(value, input_format));
    }
    let shape = TensorShape::new(1, c, h, w);
    QTensor::new(shape, input_format, codes).map_err(|e| data(e.to_string()))
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let engine: DotEngine = args.pe.parse().map_err(usage)?;
    let bundle_text = read_file(&args.bundle)?;
    let definition = parse_bundle(&bundle_text).map_err(|e| data(e.to_string()))?;
    let model = definition.model().map_err(|e| data(e.to_string()))?;
    let input = load_input_tensor(&args, model.input_format())?;

    let (output, traces) =
        run_network_traced(&model, engine, &input).map_err(|e| data(e.to_string()))?;

    if let Some(trace_path) = &args.trace {
        let mut text = String::new();
        for (i, trace) in traces.iter().enumerate() {
            let node = model.network().layer(i);
            text.push_str(&format!(
                "layer {} kind {} out {} codes {:?}\n",
                node.name,
                node.spec.kind_name(),
                trace.output.format(),
                trace.output.codes()
            ));
            if let Some(accs) = &trace.accumulators {
                text.push_str(&format!("  accumulators {accs:?}\n"));
            }
            if let Some(post) = &trace.post_bns {
                text.push_str(&format!("  post-bns {post:?}\n"));
            }
        }
        fs::write(trace_path, text)
            .map_err(|e| data(format!("cannot write {}: {e}", trace_path.display())))?;
    }

    if args.oracle {
        let reference = definition.reference().map_err(|e| data(e.to_string()))?;
        let oracle = run_reference_fp32(&reference, &RealTensor::from_qtensor(&input))
            .map_err(|e| data(e.to_string()))?;
        let decoded: Vec<f64> = output
            .codes()
            .iter()
            .map(|&c| lpnn_core::numerics::decode_act(c, output.format()))
            .collect();
        let matches = decoded
            .iter()
            .zip(&oracle.data)
            .filter(|(a, b)| a == b)
            .count();
        println!(
            "oracle match: {matches}/{} ({} mismatches)",
            decoded.len(),
            decoded.len() - matches
        );
    }

    match &args.output {
        Some(path) => {
            let mut bytes = Vec::new();
            let encoding = if args.packed_output {
                TensorEncoding::PackedBits
            } else {
                TensorEncoding::Bytes
            };
            write_qtensor(&mut bytes, &output, encoding).map_err(|e| data(e.to_string()))?;
            fs::write(path, bytes)
                .map_err(|e| data(format!("cannot write {}: {e}", path.display())))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for code in output.codes() {
                let _ = writeln!(stdout, "{code}");
            }
        }
    }
    Ok(())
}

fn resolve_device(name_or_path: &str) -> Result<DeviceSpec, CliError> {
    if Path::new(name_or_path).is_file() {
        let devices = parse_devices_file(&read_file(Path::new(name_or_path))?)
            .map_err(|e| usage(e.to_string()))?;
        return match devices.len() {
            1 => Ok(devices.into_iter().next().unwrap()),
            n => Err(usage(format!(
                "device file {name_or_path} holds {n} devices; exactly one expected"
            ))),
        };
    }
    device(name_or_path).map_err(|_| {
        let known: Vec<String> = builtin_devices().into_iter().map(|d| d.name).collect();
        usage(format!(
            "unknown device {name_or_path:?}; built-ins: {}",
            known.join(", ")
        ))
    })
}

fn resolve_network(name_or_path: &str) -> Result<Network, CliError> {
    if Path::new(name_or_path).is_file() {
        return parse_topology(&read_file(Path::new(name_or_path))?)
            .map_err(|e| data(e.to_string()));
    }
    builtin(name_or_path).map_err(|e| usage(e.to_string()))
}

fn parse_pe_set(text: &str) -> Result<Vec<PeChoice>, CliError> {
    if text == "all" {
        return Ok(PeChoice::all());
    }
    text.split(',')
        .map(|label| PeChoice::parse(label.trim()).map_err(|e| usage(e.to_string())))
        .collect()
}

fn parse_widen_set(text: &str) -> Result<Vec<u8>, CliError> {
    let factors: Vec<u8> = text
        .split(',')
        .map(|p| p.trim().parse::<u8>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--wide must list factors from 1,2,3, got {text:?}")))?;
    if factors.is_empty() || factors.iter().any(|k| !(1..=3).contains(k)) {
        return Err(usage(format!(
            "--wide must list factors from 1,2,3, got {text:?}"
        )));
    }
    Ok(factors)
}

fn dse_params(eta: Option<f64>, budget: Option<f64>, packing: bool) -> DseParams {
    DseParams {
        alm_budget_fraction: budget.unwrap_or(0.80),
        efficiency: match eta {
            Some(e) => Efficiency::Fixed(e),
            None => Efficiency::Calibrated,
        },
        use_dsp_packing: packing,
        widen: 1,
    }
}

pub struct ExploreArgs {
    pub device: String,
    pub network: String,
    pub pe: String,
    pub wide: String,
    pub eta: Option<f64>,
    pub budget: Option<f64>,
    pub packing: bool,
    pub sort: String,
    pub format: String,
    pub output: Option<PathBuf>,
}

const EXPLORE_HEADERS: &[&str] = &[
    "pe",
    "widen",
    "dot_units",
    "peak_tops",
    "achieved_tops",
    "eq_tops",
    "images_per_sec",
    "top1_accuracy",
    "alms_used",
    "dsps_used",
];

pub fn explore(args: ExploreArgs) -> Result<(), CliError> {
    let format = parse_format(&args.format)?;
    let dev = resolve_device(&args.device)?;
    let net = resolve_network(&args.network)?;
    let choices = parse_pe_set(&args.pe)?;
    let widen_set = parse_widen_set(&args.wide)?;
    let sort: SortKey = args.sort.parse().map_err(usage)?;
    let params = dse_params(args.eta, args.budget, args.packing);
    let rows = dse_explore(&dev, &net, &choices, &widen_set, &params, sort)
        .map_err(|e| usage(e.to_string()))?;

    let table = Table {
        headers: EXPLORE_HEADERS,
        rows: rows
            .iter()
            .map(|row| {
                vec![
                    row.pe.clone(),
                    row.widen.to_string(),
                    row.projection.dot_units.to_string(),
                    fmt_tops(row.projection.peak_ops_per_sec),
                    fmt_tops(row.projection.achieved_ops_per_sec),
                    format!("{:.4}", row.projection.eq_tops),
                    fmt_rate(row.projection.images_per_sec),
                    fmt_accuracy(row.top1_accuracy),
                    row.projection.alms_used.to_string(),
                    row.projection.dsps_used.to_string(),
                ]
            })
            .collect(),
    };
    emit_table(format, &table, &rows, args.output.as_deref())
}

pub struct FrontierArgs {
    pub network: String,
    pub points_from: String,
    pub device: String,
    pub pe: String,
    pub wide: String,
    pub eta: Option<f64>,
    pub format: String,
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct FrontierRow {
    top1_accuracy: f64,
    images_per_sec: f64,
    pe: String,
    scheme: u8,
}

const FRONTIER_HEADERS: &[&str] = &["top1_accuracy", "images_per_sec", "pe", "scheme"];

/// Published trade-off points, from `LPNN_FIXTURES/alexnet_frontier.toml`
/// when the override directory is set, otherwise compiled in.
fn fixture_points(network: &str) -> Result<Vec<FrontierPoint>, CliError> {
    let from_env = std::env::var_os("LPNN_FIXTURES").map(PathBuf::from);
    let (fixture_network, points) = match from_env {
        Some(dir) => {
            let path = dir.join("alexnet_frontier.toml");
            parse_frontier_file(&read_file(&path)?).map_err(|e| data(e.to_string()))?
        }
        None => ("alexnet".to_string(), alexnet_frontier_points()),
    };
    if network != fixture_network {
        return Err(usage(format!(
            "no frontier fixture for {network:?} (fixture covers {fixture_network:?}); \
             use --points-from explore"
        )));
    }
    Ok(points)
}

pub fn frontier(args: FrontierArgs) -> Result<(), CliError> {
    let format = parse_format(&args.format)?;
    let points: Vec<FrontierPoint> = match args.points_from.as_str() {
        "fixtures" => fixture_points(&args.network)?,
        "explore" => {
            let dev = resolve_device(&args.device)?;
            let net = resolve_network(&args.network)?;
            let choices = parse_pe_set(&args.pe)?;
            let widen_set = parse_widen_set(&args.wide)?;
            let params = dse_params(args.eta, None, false);
            let rows = dse_explore(&dev, &net, &choices, &widen_set, &params, SortKey::EqTops)
                .map_err(|e| usage(e.to_string()))?;
            rows.into_iter()
                .map(|row| FrontierPoint {
                    scheme: row.widen,
                    pe: row.pe,
                    top1: row.top1_accuracy,
                    images_per_sec: row.projection.images_per_sec,
                })
                .collect()
        }
        other => {
            return Err(usage(format!(
                "--points-from must be fixtures or explore, got {other:?}"
            )))
        }
    };

    // points without a published accuracy cannot sit on an
    // accuracy/throughput frontier
    let known: Vec<&FrontierPoint> = points.iter().filter(|p| p.top1.is_some()).collect();
    let coords: Vec<(f64, f64)> = known
        .iter()
        .map(|p| (p.top1.unwrap(), p.images_per_sec))
        .collect();
    let frontier_rows: Vec<FrontierRow> = pareto_indices(&coords)
        .into_iter()
        .map(|i| FrontierRow {
            top1_accuracy: coords[i].0,
            images_per_sec: coords[i].1,
            pe: known[i].pe.clone(),
            scheme: known[i].scheme,
        })
        .collect();

    let table = Table {
        headers: FRONTIER_HEADERS,
        rows: frontier_rows
            .iter()
            .map(|row| {
                vec![
                    format!("{:.4}", row.top1_accuracy),
                    fmt_rate(row.images_per_sec),
                    row.pe.clone(),
                    row.scheme.to_string(),
                ]
            })
            .collect(),
    };
    emit_table(format, &table, &frontier_rows, args.output.as_deref())
}

#[derive(Serialize)]
struct RegressionRow {
    device: String,
    fmax_mhz: f64,
    alm_budget: u64,
    dot_units: u64,
    macs_per_cycle: u64,
    peak_tops: f64,
    eta: f64,
    achieved_tops: f64,
    modeled_images_per_sec: f64,
    measured_images_per_sec: f64,
    implied_achieved_tops: f64,
    reported_tops: f64,
}

const REGRESSION_HEADERS: &[&str] = &[
    "device",
    "fmax_mhz",
    "alm_budget",
    "dot_units",
    "macs_per_cycle",
    "peak_tops",
    "eta",
    "achieved_tops",
    "modeled_images_per_sec",
    "measured_images_per_sec",
    "implied_achieved_tops",
    "reported_tops",
];

pub fn regression(format: &str, output: Option<&Path>) -> Result<(), CliError> {
    let format = parse_format(format)?;
    let fixture = match std::env::var_os("LPNN_FIXTURES").map(PathBuf::from) {
        Some(dir) => {
            let parsed = parse_arria_fixture_file(&read_file(&dir.join("arria10_alexnet_2xt.toml"))?)
                .map_err(|e| data(e.to_string()))?;
            lpnn_core::fixtures::ArriaAlexnetFixture {
                device: parsed.device,
                fmax_hz: parsed.fmax_mhz * 1e6,
                alms_used: parsed.alms_used,
                m20k_blocks: parsed.m20k_blocks,
                images_per_sec: parsed.images_per_sec,
                reported_tops: parsed.reported_tops,
                eta: parsed.eta,
            }
        }
        None => arria10_alexnet_2xt(),
    };
    let report = regression_with(fixture).map_err(|e| data(e.to_string()))?;

    let row = RegressionRow {
        device: report.fixture.device.clone(),
        fmax_mhz: report.fixture.fmax_hz / 1e6,
        alm_budget: report.fixture.alms_used,
        dot_units: report.projection.dot_units,
        macs_per_cycle: report.projection.macs_per_cycle,
        peak_tops: report.projection.peak_ops_per_sec / 1e12,
        eta: report.fixture.eta,
        achieved_tops: report.projection.achieved_ops_per_sec / 1e12,
        modeled_images_per_sec: report.projection.images_per_sec,
        measured_images_per_sec: report.fixture.images_per_sec,
        implied_achieved_tops: report.implied_achieved_tops,
        reported_tops: report.fixture.reported_tops,
    };
    let table = Table {
        headers: REGRESSION_HEADERS,
        rows: vec![vec![
            row.device.clone(),
            format!("{:.1}", row.fmax_mhz),
            row.alm_budget.to_string(),
            row.dot_units.to_string(),
            row.macs_per_cycle.to_string(),
            format!("{:.4}", row.peak_tops),
            format!("{:.4}", row.eta),
            format!("{:.4}", row.achieved_tops),
            fmt_rate(row.modeled_images_per_sec),
            fmt_rate(row.measured_images_per_sec),
            format!("{:.2}", row.implied_achieved_tops),
            format!("{:.2}", row.reported_tops),
        ]],
    };
    eprintln!(
        "note: measured {} img/s implies {:.2} achieved TOPS, above the {} TOPS the \
         design was reported capable of; the published material does not reconcile the two",
        report.fixture.images_per_sec, report.implied_achieved_tops, report.fixture.reported_tops
    );
    emit_table(format, &table, &[row], output)
}
