//! Line-oriented text format describing a grid, its slack sources and resources.
//!
//! ```text
//! [grid]
//! phases = 3
//!
//! [nodes]
//! # id  role      v_nom_kV (line-to-line)
//! 1     slack     69
//! 2     resource  24.9
//!
//! [config 300]
//! unit = mile
//! z_ohm            # P rows of complex entries, ohm per unit length
//! 1.3368+1.3343j 0.2101+0.5779j 0.2130+0.5015j
//! ...
//! b_uS             # P rows, microsiemens per unit length
//! ...
//!
//! [config trans69]
//! unit = km
//! z1_ohm = 0.071+0.379j
//! z0_ohm = 0.202+0.884j
//! b1_uS = 3.038
//! b0_uS = 1.740
//!
//! [lines]
//! # from to length_km config rated_A
//! [transformers]
//! # from to S_MVA v1_kV v2_kV r_pu x_pu tap rated_A
//! [slack 1]
//! v_kV = 69            # line-to-line source voltage
//! s_sc_MVA = 100       # or: z_ohm = r+xj (diagonal)
//! r_over_x = 0.1
//! [resources]
//! # node kind v0_kV p0_kW... q0_kvar... zipP(3) zipQ(3)
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! [`GridDescription::to_text`] followed by [`parse_grid_text`] is lossless.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{validate_parameters, Branch, GridModel, Node, NodeId, NodeRole, Shunt, DEFAULT_TOLERANCE};
use crate::linalg::CMatrix;
use crate::node_models::{
    positive_sequence, ResourceKind, ResourceModel, ResourcePhase, SlackModel, ZipCoefficients, ZipTriple,
};

pub const MILE_KM: f64 = 1.609344;

/// Printed ZIP triples are rescaled to close exactly when they miss 1 by at most this much.
pub const ZIP_ROUNDING: f64 = 5e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LengthUnit {
    Km,
    Mile,
}

impl LengthUnit {
    fn km(self) -> f64 {
        match self {
            LengthUnit::Km => 1.0,
            LengthUnit::Mile => MILE_KM,
        }
    }

    fn name(self) -> &'static str {
        match self {
            LengthUnit::Km => "km",
            LengthUnit::Mile => "mile",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigData {
    /// Full phase matrices: series impedance (ohm) and shunt susceptance (uS) per unit length.
    Phase { z: Vec<Vec<Complex64>>, b: Vec<Vec<f64>> },
    /// Transposed line given by positive- and zero-sequence values per unit length.
    Sequence { z1: Complex64, z0: Complex64, b1: f64, b0: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineConfig {
    pub name: String,
    pub unit: LengthUnit,
    pub data: ConfigData,
}

/// Phase-frame matrix of a transposed line: `(x0 + 2 x1) / 3` on the diagonal, `(x0 - x1) / 3` off it.
pub fn sequence_to_phase(p: usize, x1: Complex64, x0: Complex64) -> CMatrix {
    let pf = p as f64;
    let (diag, off) = ((x0 + x1 * (pf - 1.0)) / pf, (x0 - x1) / pf);
    CMatrix::from_fn(p, p, |i, j| if i == j { diag } else { off })
}

/// Inverse of [`sequence_to_phase`]: `(x1, x0)` from a balanced phase matrix.
pub fn phase_to_sequence(m: &CMatrix) -> (Complex64, Complex64) {
    let p = m.nrows();
    let diag = m[(0, 0)];
    let off = if p > 1 { m[(0, 1)] } else { Complex64::new(0.0, 0.0) };
    (diag - off, diag + off * (p as f64 - 1.0))
}

impl LineConfig {
    /// Series impedance (ohm/km) and shunt susceptance (S/km) phase matrices.
    pub fn per_km(&self, phases: usize) -> (CMatrix, CMatrix) {
        let scale = 1.0 / self.unit.km();
        match &self.data {
            ConfigData::Phase { z, b } => (
                CMatrix::from_fn(phases, phases, |i, j| z[i][j] * scale),
                CMatrix::from_fn(phases, phases, |i, j| Complex64::new(0.0, b[i][j] * 1e-6 * scale)),
            ),
            ConfigData::Sequence { z1, z0, b1, b0 } => (
                sequence_to_phase(phases, *z1, *z0) * Complex64::from(scale),
                sequence_to_phase(phases, Complex64::new(0.0, *b1), Complex64::new(0.0, *b0))
                    * Complex64::from(1e-6 * scale),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: NodeRole,
    /// Nominal line-to-line voltage in kV.
    pub v_kv: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub length_km: f64,
    pub config: String,
    pub rated_a: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub s_mva: f64,
    pub v1_kv: f64,
    pub v2_kv: f64,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Off-nominal tap; values above 1 raise the secondary voltage.
    pub tap: f64,
    pub rated_a: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlackImpedance {
    ShortCircuit { s_sc_mva: f64, r_over_x: f64 },
    /// Same impedance on every phase, no coupling.
    Explicit(Complex64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlackSpec {
    pub node: NodeId,
    /// Line-to-line source voltage in kV.
    pub v_kv: f64,
    pub impedance: SlackImpedance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResourceSpec {
    pub node: NodeId,
    pub kind: ResourceKind,
    /// Reference phase-to-ground voltage in kV.
    pub v0_kv: f64,
    pub p0_kw: Vec<f64>,
    pub q0_kvar: Vec<f64>,
    pub zip_p: [f64; 3],
    pub zip_q: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridDescription {
    pub phases: usize,
    pub nodes: Vec<NodeSpec>,
    pub configs: Vec<LineConfig>,
    pub lines: Vec<LineSpec>,
    pub transformers: Vec<TransformerSpec>,
    pub slacks: Vec<SlackSpec>,
    pub resources: Vec<ResourceSpec>,
}

/// Everything needed to run the solvers on a described grid.
#[derive(Clone, Debug)]
pub struct GridBundle {
    pub grid: GridModel,
    pub slacks: Vec<SlackModel>,
    pub resources: Vec<ResourceModel>,
    /// Rated current per branch (grid branch order), if given.
    pub rated_currents: Vec<Option<f64>>,
}

fn role_name(role: NodeRole) -> &'static str {
    match role {
        NodeRole::Slack => "slack",
        NodeRole::ZeroInjection => "zero",
        NodeRole::Resource => "resource",
    }
}

fn kind_name(kind: ResourceKind) -> &'static str {
    match kind {
        ResourceKind::Load => "load",
        ResourceKind::Compensator => "compensator",
    }
}

fn fmt_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}j", z.re, sign, z.im.abs())
}

fn fmt_rated(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl GridDescription {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[grid]\nphases = {}\n", self.phases);
        let _ = writeln!(s, "[nodes]\n# id role v_nom_kV");
        for n in &self.nodes {
            let _ = writeln!(s, "{} {} {}", n.id, role_name(n.role), n.v_kv);
        }
        for c in &self.configs {
            let _ = writeln!(s, "\n[config {}]\nunit = {}", c.name, c.unit.name());
            match &c.data {
                ConfigData::Phase { z, b } => {
                    let _ = writeln!(s, "z_ohm");
                    for row in z {
                        let _ = writeln!(s, "{}", row.iter().map(|v| fmt_complex(*v)).collect::<Vec<_>>().join(" "));
                    }
                    let _ = writeln!(s, "b_uS");
                    for row in b {
                        let _ = writeln!(s, "{}", row.iter().map(f64::to_string).collect::<Vec<_>>().join(" "));
                    }
                }
                ConfigData::Sequence { z1, z0, b1, b0 } => {
                    let _ = writeln!(
                        s,
                        "z1_ohm = {}\nz0_ohm = {}\nb1_uS = {}\nb0_uS = {}",
                        fmt_complex(*z1),
                        fmt_complex(*z0),
                        b1,
                        b0
                    );
                }
            }
        }
        let _ = writeln!(s, "\n[lines]\n# from to length_km config rated_A");
        for l in &self.lines {
            let _ = writeln!(s, "{} {} {} {} {}", l.from, l.to, l.length_km, l.config, fmt_rated(l.rated_a));
        }
        let _ = writeln!(s, "\n[transformers]\n# from to S_MVA v1_kV v2_kV r_pu x_pu tap rated_A");
        for t in &self.transformers {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {}",
                t.from,
                t.to,
                t.s_mva,
                t.v1_kv,
                t.v2_kv,
                t.r_pu,
                t.x_pu,
                t.tap,
                fmt_rated(t.rated_a)
            );
        }
        for sl in &self.slacks {
            let _ = writeln!(s, "\n[slack {}]\nv_kV = {}", sl.node, sl.v_kv);
            match sl.impedance {
                SlackImpedance::ShortCircuit { s_sc_mva, r_over_x } => {
                    let _ = writeln!(s, "s_sc_MVA = {s_sc_mva}\nr_over_x = {r_over_x}");
                }
                SlackImpedance::Explicit(z) => {
                    let _ = writeln!(s, "z_ohm = {}", fmt_complex(z));
                }
            }
        }
        let _ = writeln!(s, "\n[resources]\n# node kind v0_kV p0_kW... q0_kvar... zipP zipQ");
        for r in &self.resources {
            let nums: Vec<String> = r
                .p0_kw
                .iter()
                .chain(&r.q0_kvar)
                .chain(&r.zip_p)
                .chain(&r.zip_q)
                .map(f64::to_string)
                .collect();
            let _ = writeln!(s, "{} {} {} {}", r.node, kind_name(r.kind), r.v0_kv, nums.join(" "));
        }
        s
    }

    pub fn config(&self, name: &str) -> Option<&LineConfig> {
        self.configs.iter().find(|c| c.name == name)
    }

    /// Builds and validates the grid and node models.
    pub fn to_models(&self) -> Result<GridBundle> {
        let p = self.phases;
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|n| Node { id: n.id, role: n.role, v_nominal: n.v_kv * 1e3 / 3f64.sqrt() })
            .collect();
        let mut branches = Vec::new();
        let mut shunts = Vec::new();
        let mut rated = Vec::new();
        for l in &self.lines {
            let cfg = self
                .config(&l.config)
                .ok_or_else(|| Error::MissingData(format!("line configuration '{}'", l.config)))?;
            let (z, b) = cfg.per_km(p);
            branches.push(Branch::line(l.from, l.to, z * Complex64::from(l.length_km)));
            let half = b * Complex64::from(l.length_km / 2.0);
            shunts.push(Shunt { node: l.from, y: half.clone() });
            shunts.push(Shunt { node: l.to, y: half });
            rated.push(l.rated_a);
        }
        for t in &self.transformers {
            let z_base = (t.v1_kv * 1e3).powi(2) / (t.s_mva * 1e6);
            let z = CMatrix::identity(p, p) * (Complex64::new(t.r_pu, t.x_pu) * z_base);
            branches.push(Branch { from: t.from, to: t.to, z, ratio: (t.v1_kv / t.v2_kv) / t.tap });
            rated.push(t.rated_a);
        }
        let grid = GridModel::new(p, nodes, branches, shunts)?;
        let violations = validate_parameters(&grid, DEFAULT_TOLERANCE);
        if !violations.is_empty() {
            return Err(Error::Validation(violations.iter().map(ToString::to_string).collect()));
        }

        let slacks = self
            .slacks
            .iter()
            .map(|s| {
                let v_ll = s.v_kv * 1e3;
                Ok(match s.impedance {
                    SlackImpedance::ShortCircuit { s_sc_mva, r_over_x } => {
                        SlackModel::from_short_circuit(s.node, p, v_ll, s_sc_mva * 1e6, r_over_x)
                    }
                    SlackImpedance::Explicit(z) => SlackModel {
                        node: s.node,
                        v_te: positive_sequence(p, v_ll / 3f64.sqrt()),
                        z_te: CMatrix::identity(p, p) * z,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let resources = self
            .resources
            .iter()
            .map(|r| {
                let zip = ZipCoefficients {
                    active: ZipTriple::normalized(r.zip_p[0], r.zip_p[1], r.zip_p[2], ZIP_ROUNDING)?,
                    reactive: ZipTriple::normalized(r.zip_q[0], r.zip_q[1], r.zip_q[2], ZIP_ROUNDING)?,
                };
                let phases = (0..p)
                    .map(|q| ResourcePhase { p0: r.p0_kw[q] * 1e3, q0: r.q0_kvar[q] * 1e3, zip, lambda: 1.0 })
                    .collect();
                ResourceModel::new(r.node, r.kind, r.v0_kv * 1e3, phases)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridBundle { grid, slacks, resources, rated_currents: rated })
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let content = line.split('#').next().unwrap_or("");
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in content.char_indices() {
        match (ch.is_whitespace() || ch == '=', start) {
            (true, Some(s)) => {
                tokens.push(Token { text: &content[s..i], column: s + 1 });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token { text: &content[s..], column: s + 1 });
    }
    tokens
}

fn parse_complex_str(s: &str) -> Option<Complex64> {
    let Some(body) = s.strip_suffix('j') else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    match split {
        Some(i) => Some(Complex64::new(body[..i].parse().ok()?, body[i..].parse().ok()?)),
        None => Some(Complex64::new(0.0, if body.is_empty() { 1.0 } else { body.parse().ok()? })),
    }
}

struct Parser {
    line: usize,
}

impl Parser {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, column, message: message.into() }
    }

    fn f64(&self, t: &Token) -> Result<f64> {
        let v: f64 = t.text.parse().map_err(|_| self.err(t.column, format!("expected a number, found '{}'", t.text)))?;
        if !v.is_finite() {
            return Err(self.err(t.column, "number must be finite"));
        }
        Ok(v)
    }

    fn complex(&self, t: &Token) -> Result<Complex64> {
        parse_complex_str(t.text)
            .filter(|z| z.re.is_finite() && z.im.is_finite())
            .ok_or_else(|| self.err(t.column, format!("expected a complex number, found '{}'", t.text)))
    }

    fn id(&self, t: &Token) -> Result<NodeId> {
        t.text.parse().map_err(|_| self.err(t.column, format!("expected a node id, found '{}'", t.text)))
    }

    fn rated(&self, t: &Token) -> Result<Option<f64>> {
        if t.text == "-" {
            Ok(None)
        } else {
            self.f64(t).map(Some)
        }
    }

    fn count(&self, tokens: &[Token], n: usize, what: &str) -> Result<()> {
        if tokens.len() != n {
            let column = tokens.get(n).or(tokens.last()).map_or(1, |t| t.column);
            return Err(self.err(column, format!("{what} needs {n} fields, found {}", tokens.len())));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum MatrixTarget {
    None,
    Z,
    B,
}

enum Section {
    None,
    Grid,
    Nodes,
    Config { index: usize, target: MatrixTarget, seq: [Option<f64>; 2], seq_z: [Option<Complex64>; 2] },
    Lines,
    Transformers,
    Slack { index: usize, s_sc: Option<f64>, r_over_x: Option<f64> },
    Resources,
}

pub fn parse_grid_text(text: &str) -> Result<GridDescription> {
    let mut desc = GridDescription {
        phases: 0,
        nodes: Vec::new(),
        configs: Vec::new(),
        lines: Vec::new(),
        transformers: Vec::new(),
        slacks: Vec::new(),
        resources: Vec::new(),
    };
    let mut section = Section::None;
    let mut p = Parser { line: 0 };
    // raw rows collected per config until the section closes
    let mut z_rows: Vec<Vec<Complex64>> = Vec::new();
    let mut b_rows: Vec<Vec<f64>> = Vec::new();
    let mut config_refs: Vec<(usize, usize, String)> = Vec::new();
    let mut header_line = HashMap::new();

    for (n, raw) in text.lines().enumerate() {
        p.line = n + 1;
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            continue;
        }
        let first = &tokens[0];
        if first.text.starts_with('[') {
            close_section(&mut desc, &mut section, &mut z_rows, &mut b_rows, &header_line)?;
            let joined = raw.split('#').next().unwrap_or("").trim();
            let inner = joined
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| p.err(first.column, "malformed section header"))?;
            let mut parts = inner.split_whitespace();
            let name = parts.next().unwrap_or("");
            let arg = parts.next();
            section = match (name, arg) {
                ("grid", None) => Section::Grid,
                ("nodes", None) => Section::Nodes,
                ("lines", None) => Section::Lines,
                ("transformers", None) => Section::Transformers,
                ("resources", None) => Section::Resources,
                ("config", Some(cfg)) => {
                    if desc.config(cfg).is_some() {
                        return Err(p.err(first.column, format!("configuration '{cfg}' defined twice")));
                    }
                    desc.configs.push(LineConfig {
                        name: cfg.to_string(),
                        unit: LengthUnit::Km,
                        data: ConfigData::Phase { z: Vec::new(), b: Vec::new() },
                    });
                    header_line.insert(desc.configs.len() - 1, p.line);
                    Section::Config { index: desc.configs.len() - 1, target: MatrixTarget::None, seq: [None; 2], seq_z: [None; 2] }
                }
                ("slack", Some(id)) => {
                    let node = id.parse().map_err(|_| p.err(first.column, format!("bad slack node '{id}'")))?;
                    desc.slacks.push(SlackSpec {
                        node,
                        v_kv: f64::NAN,
                        impedance: SlackImpedance::Explicit(Complex64::new(f64::NAN, 0.0)),
                    });
                    Section::Slack { index: desc.slacks.len() - 1, s_sc: None, r_over_x: None }
                }
                _ => return Err(p.err(first.column, format!("unknown section '{inner}'"))),
            };
            continue;
        }

        match &mut section {
            Section::None => return Err(p.err(first.column, "data outside of any section")),
            Section::Grid => {
                p.count(&tokens, 2, "grid setting")?;
                if first.text != "phases" {
                    return Err(p.err(first.column, format!("unknown grid setting '{}'", first.text)));
                }
                desc.phases = tokens[1]
                    .text
                    .parse()
                    .ok()
                    .filter(|&v: &usize| v > 0)
                    .ok_or_else(|| p.err(tokens[1].column, "phases must be a positive integer"))?;
            }
            Section::Nodes => {
                p.count(&tokens, 3, "node")?;
                let role = match tokens[1].text {
                    "slack" => NodeRole::Slack,
                    "zero" => NodeRole::ZeroInjection,
                    "resource" => NodeRole::Resource,
                    other => return Err(p.err(tokens[1].column, format!("unknown node role '{other}'"))),
                };
                desc.nodes.push(NodeSpec { id: p.id(first)?, role, v_kv: p.f64(&tokens[2])? });
            }
            Section::Config { index, target, seq, seq_z } => {
                let cfg = &mut desc.configs[*index];
                match first.text {
                    "unit" => {
                        p.count(&tokens, 2, "unit")?;
                        cfg.unit = match tokens[1].text {
                            "km" => LengthUnit::Km,
                            "mile" => LengthUnit::Mile,
                            other => return Err(p.err(tokens[1].column, format!("unknown length unit '{other}'"))),
                        };
                    }
                    "z_ohm" => {
                        p.count(&tokens, 1, "matrix header")?;
                        *target = MatrixTarget::Z;
                    }
                    "b_uS" => {
                        p.count(&tokens, 1, "matrix header")?;
                        *target = MatrixTarget::B;
                    }
                    "z1_ohm" | "z0_ohm" => {
                        p.count(&tokens, 2, first.text)?;
                        seq_z[usize::from(first.text == "z0_ohm")] = Some(p.complex(&tokens[1])?);
                    }
                    "b1_uS" | "b0_uS" => {
                        p.count(&tokens, 2, first.text)?;
                        seq[usize::from(first.text == "b0_uS")] = Some(p.f64(&tokens[1])?);
                    }
                    _ => match target {
                        MatrixTarget::Z => z_rows.push(tokens.iter().map(|t| p.complex(t)).collect::<Result<_>>()?),
                        MatrixTarget::B => b_rows.push(tokens.iter().map(|t| p.f64(t)).collect::<Result<_>>()?),
                        MatrixTarget::None => {
                            return Err(p.err(first.column, format!("unexpected '{}' in configuration", first.text)))
                        }
                    },
                }
                if let ([Some(z1), Some(z0)], [Some(b1), Some(b0)]) = (*seq_z, *seq) {
                    cfg.data = ConfigData::Sequence { z1, z0, b1, b0 };
                }
            }
            Section::Lines => {
                p.count(&tokens, 5, "line")?;
                config_refs.push((p.line, tokens[3].column, tokens[3].text.to_string()));
                desc.lines.push(LineSpec {
                    from: p.id(first)?,
                    to: p.id(&tokens[1])?,
                    length_km: p.f64(&tokens[2])?,
                    config: tokens[3].text.to_string(),
                    rated_a: p.rated(&tokens[4])?,
                });
            }
            Section::Transformers => {
                p.count(&tokens, 9, "transformer")?;
                desc.transformers.push(TransformerSpec {
                    from: p.id(first)?,
                    to: p.id(&tokens[1])?,
                    s_mva: p.f64(&tokens[2])?,
                    v1_kv: p.f64(&tokens[3])?,
                    v2_kv: p.f64(&tokens[4])?,
                    r_pu: p.f64(&tokens[5])?,
                    x_pu: p.f64(&tokens[6])?,
                    tap: p.f64(&tokens[7])?,
                    rated_a: p.rated(&tokens[8])?,
                });
            }
            Section::Slack { index, s_sc, r_over_x } => {
                p.count(&tokens, 2, first.text)?;
                let spec = &mut desc.slacks[*index];
                match first.text {
                    "v_kV" => spec.v_kv = p.f64(&tokens[1])?,
                    "s_sc_MVA" => *s_sc = Some(p.f64(&tokens[1])?),
                    "r_over_x" => *r_over_x = Some(p.f64(&tokens[1])?),
                    "z_ohm" => spec.impedance = SlackImpedance::Explicit(p.complex(&tokens[1])?),
                    other => return Err(p.err(first.column, format!("unknown slack setting '{other}'"))),
                }
                if let (Some(s_sc_mva), Some(r_over_x)) = (*s_sc, *r_over_x) {
                    spec.impedance = SlackImpedance::ShortCircuit { s_sc_mva, r_over_x };
                }
            }
            Section::Resources => {
                let ph = desc.phases;
                if ph == 0 {
                    return Err(p.err(first.column, "[grid] phases must precede the resources"));
                }
                p.count(&tokens, 3 + 2 * ph + 6, "resource")?;
                let kind = match tokens[1].text {
                    "load" => ResourceKind::Load,
                    "compensator" => ResourceKind::Compensator,
                    other => return Err(p.err(tokens[1].column, format!("unknown resource kind '{other}'"))),
                };
                let nums = tokens[3..].iter().map(|t| p.f64(t)).collect::<Result<Vec<_>>>()?;
                desc.resources.push(ResourceSpec {
                    node: p.id(first)?,
                    kind,
                    v0_kv: p.f64(&tokens[2])?,
                    p0_kw: nums[..ph].to_vec(),
                    q0_kvar: nums[ph..2 * ph].to_vec(),
                    zip_p: [nums[2 * ph], nums[2 * ph + 1], nums[2 * ph + 2]],
                    zip_q: [nums[2 * ph + 3], nums[2 * ph + 4], nums[2 * ph + 5]],
                });
            }
        }
    }
    close_section(&mut desc, &mut section, &mut z_rows, &mut b_rows, &header_line)?;

    if desc.phases == 0 {
        return Err(Error::Parse { line: 1, column: 1, message: "missing [grid] phases".into() });
    }
    for (line, column, name) in config_refs {
        if desc.config(&name).is_none() {
            return Err(Error::Parse { line, column, message: format!("undefined line configuration '{name}'") });
        }
    }
    for s in &desc.slacks {
        if !s.v_kv.is_finite() || matches!(s.impedance, SlackImpedance::Explicit(z) if z.re.is_nan()) {
            return Err(Error::Parse {
                line: 0,
                column: 0,
                message: format!("slack {} needs v_kV and either z_ohm or s_sc_MVA with r_over_x", s.node),
            });
        }
    }
    Ok(desc)
}

fn close_section(
    desc: &mut GridDescription,
    section: &mut Section,
    z_rows: &mut Vec<Vec<Complex64>>,
    b_rows: &mut Vec<Vec<f64>>,
    header_line: &HashMap<usize, usize>,
) -> Result<()> {
    if let Section::Config { index, .. } = section {
        let cfg = &mut desc.configs[*index];
        let line = header_line[index];
        let err = |message: String| Error::Parse { line, column: 1, message };
        let p = desc.phases;
        match &cfg.data {
            ConfigData::Sequence { .. } => {
                if !z_rows.is_empty() || !b_rows.is_empty() {
                    return Err(err(format!("configuration '{}' mixes sequence and phase data", cfg.name)));
                }
            }
            ConfigData::Phase { .. } => {
                let square = |rows: usize, lens: Vec<usize>| rows == p && lens.iter().all(|&l| l == p);
                if !square(z_rows.len(), z_rows.iter().map(Vec::len).collect())
                    || !square(b_rows.len(), b_rows.iter().map(Vec::len).collect())
                {
                    return Err(err(format!(
                        "configuration '{}' needs {p}x{p} z_ohm and b_uS matrices or sequence values",
                        cfg.name
                    )));
                }
                cfg.data = ConfigData::Phase { z: std::mem::take(z_rows), b: std::mem::take(b_rows) };
            }
        }
    }
    z_rows.clear();
    b_rows.clear();
    *section = Section::None;
    Ok(())
}

pub fn parse_grid(path: &Path) -> Result<GridDescription> {
    parse_grid_text(&std::fs::read_to_string(path)?)
}
