//! Command-line surface. [`run`] does everything except touch the process,
//! so tests can drive it directly.
//!
//! Exit codes: 0 success, 1 parse or usage error, 2 physicality failure,
//! 3 forward/backward disagreement, 4 numeric error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::circuit::NodeContent;
use crate::dsl::{self, CircuitDef, CircuitFile, TensorDef, TensorExpr};
use crate::duotensor::{self, Color};
use crate::engine::{self, Direction, Frame, JointTable};
use crate::error::Error;
use crate::optensor::OperatorTensor;
use crate::physicality::{self, PhysicalityReport};

pub const EXIT_PARSE: i32 = 1;
pub const EXIT_PHYSICALITY: i32 = 2;
pub const EXIT_DIRECTION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "timesym", version, about = "Evaluate and transform time-symmetric operator-tensor circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// T-positivity and double causality of one tensor or of every tensor.
    Check {
        file: PathBuf,
        #[arg(long)]
        tensor: Option<String>,
        #[arg(long)]
        json: bool,
        /// Largest causality residual still counted as causal.
        #[arg(long, default_value_t = physicality::CAUSAL_TOL)]
        tol: f64,
    },
    /// Probability of a closed circuit.
    Prob {
        file: PathBuf,
        #[arg(long)]
        circuit: String,
        #[arg(long, value_enum, default_value_t = DirectionArg::Forward)]
        direction: DirectionArg,
        /// Largest forward/backward disagreement accepted with `both`.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Joint distribution over the circuit's `readout(x, ?)` placeholders.
    Joint {
        file: PathBuf,
        #[arg(long)]
        circuit: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Conditional table in a forward, backward or symmetric frame.
    Frame {
        file: PathBuf,
        #[arg(long)]
        circuit: String,
        #[arg(long, value_enum)]
        mode: FrameArg,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the time-reversed file for one circuit.
    Reverse {
        file: PathBuf,
        #[arg(long)]
        circuit: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a unitary dilation of one tensor.
    Dilate {
        file: PathBuf,
        #[arg(long)]
        tensor: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Duotensor components of one tensor, e.g. `--colors bw`.
    Duo {
        file: PathBuf,
        #[arg(long)]
        tensor: String,
        #[arg(long)]
        colors: String,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DirectionArg {
    Forward,
    Backward,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FrameArg {
    Forward,
    Backward,
    Symmetric,
}

/// Captured result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Failure {
    code: i32,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_PARSE, msg: msg.into() }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotPhysical(_) | Error::UnitarityResidue(_) => EXIT_PHYSICALITY,
        Error::NonFinite
        | Error::NotHermitian(_)
        | Error::NotUnitary(_)
        | Error::ContractionShape(_)
        | Error::ImaginaryResidue(_)
        | Error::NegativeProbability(_)
        | Error::DegenerateFiducials(_)
        | Error::ImaginaryComponent(_)
        | Error::NotDoublySumming(_) => EXIT_NUMERIC,
        _ => EXIT_PARSE,
    }
}

/// Twelve significant digits; fixed notation for `1e-4 <= |x| < 1e15`.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs();
    if !(1e-4..1e15).contains(&mag) {
        return format!("{x:.11e}");
    }
    let digits = (11 - mag.log10().floor() as i32).max(0) as usize;
    let s = format!("{x:.digits$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" { "0".into() } else { s }
}

fn json_number(x: f64) -> Value {
    format_number(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code: EXIT_PARSE, stdout: String::new(), stderr: text }
            } else {
                Outcome { code: 0, stdout: text, stderr: String::new() }
            };
        }
    };
    let mut out = String::new();
    match dispatch(cli.command, &mut out) {
        Ok(code) => Outcome { code, stdout: out, stderr: String::new() },
        Err(f) => Outcome { code: f.code, stdout: out, stderr: format!("error: {}\n", f.msg) },
    }
}

fn load(path: &Path) -> Result<CircuitFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    dsl::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn circuit<'a>(f: &'a CircuitFile, name: &str) -> Result<&'a CircuitDef, Failure> {
    f.circuit(name).ok_or_else(|| usage(format!("no circuit named `{name}`")))
}

fn tensor<'a>(f: &'a CircuitFile, name: &str) -> Result<&'a OperatorTensor, Failure> {
    match f.tensor(name).map(|d| &d.content) {
        Some(NodeContent::Tensor(t)) => Ok(t),
        Some(NodeContent::Placeholder(_)) => Err(usage(format!("`{name}` is a placeholder, not a tensor"))),
        None => Err(usage(format!("no tensor named `{name}`"))),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: Command, out: &mut String) -> Result<i32, Failure> {
    match cmd {
        Command::Check { file, tensor: name, json, tol } => check(&load(&file)?, name.as_deref(), json, tol, out),
        Command::Prob { file, circuit: name, direction, tol } => {
            let f = load(&file)?;
            let g = &circuit(&f, &name)?.graph;
            let dirs: &[Direction] = match direction {
                DirectionArg::Forward => &[Direction::Forward],
                DirectionArg::Backward => &[Direction::Backward],
                DirectionArg::Both => &[Direction::Forward, Direction::Backward],
            };
            let mut values = Vec::new();
            for &d in dirs {
                let p = engine::probability_foliated(g, d)?;
                let label = if d == Direction::Forward { "forward" } else { "backward" };
                let _ = writeln!(out, "{label} {}", format_number(p));
                values.push(p);
            }
            if let [a, b] = values[..] {
                if (a - b).abs() > tol {
                    return Err(Failure {
                        code: EXIT_DIRECTION,
                        msg: format!("forward and backward differ by {}", format_number((a - b).abs())),
                    });
                }
            }
            Ok(0)
        }
        Command::Joint { file, circuit: name, csv } => {
            let f = load(&file)?;
            let table = engine::joint_distribution(&circuit(&f, &name)?.graph)?;
            emit_table(&table, "p", csv.as_deref(), out)?;
            Ok(0)
        }
        Command::Frame { file, circuit: name, mode, csv } => {
            let f = load(&file)?;
            let table = engine::joint_distribution(&circuit(&f, &name)?.graph)?;
            let frame = match mode {
                FrameArg::Forward => Frame::Forward,
                FrameArg::Backward => Frame::Backward,
                FrameArg::Symmetric => Frame::Symmetric,
            };
            let ft = engine::conditional(&table, &frame.natural_condition(&table), frame)?;
            let given: Vec<String> = frame.natural_condition(&table).into_iter().collect();
            let head = if given.is_empty() { "p".to_string() } else { format!("p(.|{})", given.join(",")) };
            emit_table(&ft.table, &head, csv.as_deref(), out)?;
            Ok(0)
        }
        Command::Reverse { file, circuit: name, output } => {
            let f = load(&file)?;
            let keep = circuit(&f, &name)?.clone();
            let only = CircuitFile { circuits: vec![keep], ..f };
            write_file(&output, &dsl::serialize(&only.time_reversed()))?;
            let _ = writeln!(out, "wrote {}", output.display());
            Ok(0)
        }
        Command::Dilate { file, tensor: name, output } => {
            let f = load(&file)?;
            let t = tensor(&f, &name)?;
            let text = dilation_file(&f, t, &name)?;
            write_file(&output, &text)?;
            let _ = writeln!(out, "wrote {}", output.display());
            Ok(0)
        }
        Command::Duo { file, tensor: name, colors } => {
            let f = load(&file)?;
            let t = tensor(&f, &name)?;
            let colors = duotensor::parse_colors(&colors).map_err(|e| usage(e.to_string()))?;
            duo(t, &colors, out)?;
            Ok(0)
        }
    }
}

fn report_json(r: &PhysicalityReport) -> Value {
    json!({
        "t_positive": r.t_positive,
        "min_eig": json_number(r.min_eig),
        "fwd_residual": json_number(r.fwd_residual),
        "bwd_residual": json_number(r.bwd_residual),
        "physical": r.physical,
    })
}

fn check(f: &CircuitFile, name: Option<&str>, as_json: bool, tol: f64, out: &mut String) -> Result<i32, Failure> {
    let names: Vec<&str> = match name {
        Some(n) => {
            tensor(f, n)?;
            vec![n]
        }
        None => f
            .tensors
            .iter()
            .filter(|d| matches!(d.content, NodeContent::Tensor(_)))
            .map(|d| d.name.as_str())
            .collect(),
    };
    if names.is_empty() {
        return Err(usage("file defines no tensors"));
    }
    let mut reports = BTreeMap::new();
    let mut all = true;
    for n in &names {
        let r = physicality::is_physical(tensor(f, n)?, tol)?;
        all &= r.physical;
        reports.insert(n.to_string(), r);
    }
    if as_json {
        let v = match name {
            Some(n) => report_json(&reports[n]),
            None => Value::Object(reports.iter().map(|(k, r)| (k.clone(), report_json(r))).collect()),
        };
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"));
    } else {
        for n in &names {
            let r = &reports[*n];
            let _ = writeln!(out, "tensor {n}");
            let _ = writeln!(out, "  t_positive    {}", r.t_positive);
            let _ = writeln!(out, "  min_eig       {}", format_number(r.min_eig));
            let _ = writeln!(out, "  fwd_residual  {}", format_number(r.fwd_residual));
            let _ = writeln!(out, "  bwd_residual  {}", format_number(r.bwd_residual));
            let _ = writeln!(out, "  physical      {}", r.physical);
        }
    }
    Ok(if all { 0 } else { EXIT_PHYSICALITY })
}

/// One row per (outcomes, incomes) combination; one column per axis.
fn table_rows(t: &JointTable, value_head: &str) -> Vec<Vec<String>> {
    let mut head: Vec<String> = t.outcomes.iter().map(|a| format!("{}.outcome", a.node)).collect();
    head.extend(t.incomes.iter().map(|a| format!("{}.income", a.node)));
    head.push(value_head.to_string());
    let mut rows = vec![head];
    for (r, oc) in t.row_combos().iter().enumerate() {
        for (c, ic) in t.col_combos().iter().enumerate() {
            let mut row: Vec<String> = oc.iter().chain(ic).map(|v| v.to_string()).collect();
            row.push(format_number(t.get(r, c)));
            rows.push(row);
        }
    }
    rows
}

fn emit_table(t: &JointTable, value_head: &str, csv_path: Option<&Path>, out: &mut String) -> Result<(), Failure> {
    let rows = table_rows(t, value_head);
    if let Some(p) = csv_path {
        let mut w = csv::Writer::from_path(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        for r in &rows {
            w.write_record(r).map_err(|e| usage(e.to_string()))?;
        }
        w.flush().map_err(|e| usage(e.to_string()))?;
    }
    let widths: Vec<usize> = (0..rows[0].len()).map(|k| rows.iter().map(|r| r[k].len()).max().unwrap_or(0)).collect();
    for r in &rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    Ok(())
}

fn dilation_file(f: &CircuitFile, t: &OperatorTensor, name: &str) -> Result<String, Failure> {
    let d = physicality::dilate(t)?;
    let g = t.gauge();
    let mut registry = f.registry.clone();
    for s in d.inputs.iter().chain(&d.outputs) {
        match registry.system(s.name()) {
            Some(existing) if existing == s => {}
            Some(_) => return Err(usage(format!("system name `{}` already used with another dimension", s.name()))),
            None => {
                registry.register_system(s.name(), s.dim())?;
            }
        }
    }
    let core_expr = TensorExpr::Unitary { inputs: d.inputs.clone(), outputs: d.outputs.clone(), matrix: d.unitary.clone() };
    let core = TensorDef { name: "core".into(), content: core_expr.build(g)?, expr: core_expr };
    let graph = d.fragment(g)?;
    let nodes = graph
        .nodes()
        .iter()
        .map(|(id, c)| {
            let e = if id == "core" { TensorExpr::Ref("core".into()) } else { TensorExpr::from_content(c) };
            (id.clone(), e)
        })
        .collect();
    let file = CircuitFile {
        registry,
        gauge: f.gauge.clone(),
        tensors: vec![core],
        circuits: vec![CircuitDef { name: format!("{name}_dilation"), graph, nodes }],
    };
    let mut text = String::new();
    let _ = writeln!(text, "# dilation of {name}");
    let _ = writeln!(text, "# unitarity residual {}", format_number(d.unitarity_residual));
    let _ = writeln!(text, "# reconstruction residual {}", format_number(d.reconstruction_residual));
    text.push_str(&dsl::serialize(&file));
    Ok(text)
}

fn duo(t: &OperatorTensor, colors: &[Color], out: &mut String) -> Result<(), Failure> {
    let d = duotensor::to_duotensor(t, colors)?;
    let leg_desc: Vec<String> =
        t.legs().iter().zip(colors).map(|(l, c)| format!("{} {} [{c}]", l.kind().keyword(), l.ty().name())).collect();
    let _ = writeln!(out, "legs: {}", leg_desc.join(", "));
    let labels: Vec<Vec<String>> = t
        .legs()
        .iter()
        .map(|l| match l.system() {
            Some(a) => {
                let fid = duotensor::system_fiducials(a);
                (0..fid.len()).map(|k| fid.label(k).to_string()).collect()
            }
            None => {
                let x = l.pointer().expect("pointer leg");
                (0..x.card()).map(|v| v.to_string()).collect()
            }
        })
        .collect();
    let mut idx = vec![0usize; d.shape().len()];
    for _ in 0..d.components().len() {
        let label: Vec<&str> = idx.iter().zip(&labels).map(|(&i, l)| l[i].as_str()).collect();
        let _ = writeln!(out, "[{}]  {}", label.join(", "), format_number(d.get(&idx)));
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < d.shape()[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(format_number(0.875), "0.875");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(123456.0), "123456");
        assert_eq!(format_number(1e-20), "1.00000000000e-20");
        assert_eq!(format_number(-1e-17), "-1.00000000000e-17");
        assert_eq!(format_number(0.0), "0");
    }

    #[test]
    fn usage_errors_exit_one() {
        let o = run(["timesym", "prob"]);
        assert_eq!(o.code, EXIT_PARSE);
        let o = run(["timesym", "check", "/nonexistent/file.tsl"]);
        assert_eq!(o.code, EXIT_PARSE);
        assert!(o.stderr.contains("nonexistent"));
    }

    #[test]
    fn help_goes_to_stdout() {
        let o = run(["timesym", "--help"]);
        assert_eq!(o.code, 0);
        assert!(o.stdout.contains("dilate"));
    }
}
