//! Flat sectioned key-value job configuration.
//!
//! The format is line-oriented: `[section]` headers, `key = value` pairs,
//! `#` comments. Repeated keys accumulate (target lists). Exact rationals
//! are written `p/q`, symbols `sym:name`. A `JobSpec` serializes to a
//! canonical text that parses back to an equal value.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use lds_core::lattice::{Coupling, LatticeSpec, MultiIndex, PotentialCoefficients};
use lds_core::symmetry::CountLevel;

#[derive(Clone, Debug, PartialEq)]
pub struct JobSpec {
    pub command: String,
    pub format: OutputFormat,
    pub tol: f64,
    pub seed: u64,
    pub threads: usize,
    pub lattice: Option<LatticeSection>,
    pub targets: Vec<Vec<u32>>,
    pub flow: Option<FlowSection>,
    pub propagator: Option<PropagatorSection>,
    pub oracle: Option<OracleSection>,
    pub count: Option<CountSection>,
}

impl Default for JobSpec {
    fn default() -> Self {
        JobSpec {
            command: "verify".into(),
            format: OutputFormat::Json,
            tol: 1e-10,
            seed: 7,
            threads: 1,
            lattice: None,
            targets: Vec::new(),
            flow: None,
            propagator: None,
            oracle: None,
            count: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputFormat::Json => write!(f, "json"),
            OutputFormat::Csv => write!(f, "csv"),
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown format `{other}` (json|csv)")),
        }
    }
}

/// A coupling in the config: exact rational or named symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CouplingValue {
    Rational(BigRational),
    Symbol(String),
}

impl CouplingValue {
    pub fn zero() -> Self {
        CouplingValue::Rational(BigRational::zero())
    }

    pub fn to_coupling(&self) -> Coupling {
        match self {
            CouplingValue::Rational(q) => Coupling::Rational(q.clone()),
            CouplingValue::Symbol(name) => Coupling::sym(name),
        }
    }
}

impl fmt::Display for CouplingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingValue::Rational(q) => write!(f, "{}", format_rational(q)),
            CouplingValue::Symbol(name) => write!(f, "sym:{name}"),
        }
    }
}

pub fn format_rational(q: &BigRational) -> String {
    if q.denom() == &BigInt::from(1) {
        format!("{}", q.numer())
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let num: BigInt = num
        .parse()
        .map_err(|_| format!("bad rational numerator `{num}`"))?;
    let den: BigInt = den
        .parse()
        .map_err(|_| format!("bad rational denominator `{den}`"))?;
    if den.is_zero() {
        return Err("rational with zero denominator".into());
    }
    Ok(BigRational::new(num, den))
}

impl FromStr for CouplingValue {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(name) = s.strip_prefix("sym:") {
            if name.is_empty() {
                return Err("empty symbol name".into());
            }
            return Ok(CouplingValue::Symbol(name.to_owned()));
        }
        Ok(CouplingValue::Rational(parse_rational(s)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSection {
    pub dimension: usize,
    pub extent: u32,
    pub a: CouplingValue,
    pub k: CouplingValue,
    pub g: CouplingValue,
    pub lambda: CouplingValue,
    pub w: CouplingValue,
    /// Replace the shared bond coupling by one symbol per bond.
    pub per_bond: bool,
}

impl LatticeSection {
    pub fn to_spec(&self) -> Result<LatticeSpec, String> {
        let pot = PotentialCoefficients::new(
            self.a.to_coupling(),
            self.k.to_coupling(),
            self.g.to_coupling(),
            self.lambda.to_coupling(),
        )
        .map_err(|e| e.to_string())?;
        let spec = if self.per_bond {
            LatticeSpec::per_bond_symbolic(self.dimension, self.extent, pot)
        } else {
            LatticeSpec::uniform(self.dimension, self.extent, pot, self.w.to_coupling())
        };
        spec.map_err(|e| e.to_string())
    }

    pub fn index(&self, spec: &LatticeSpec, dense: &[u32]) -> Result<MultiIndex, String> {
        if dense.len() != spec.site_count() {
            return Err(format!(
                "target has {} entries but the lattice has {} sites",
                dense.len(),
                spec.site_count()
            ));
        }
        Ok(MultiIndex::from_pairs(
            spec.sites()
                .iter()
                .zip(dense)
                .filter(|(_, &o)| o > 0)
                .map(|(s, &o)| (s.clone(), o)),
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSection {
    pub parameter: FlowKind,
    pub target: Vec<BigRational>,
    pub start: BigRational,
    pub path: PathKind,
    pub basis: BasisKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    W,
    K,
    Lambda,
    PerBond,
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKind::W => write!(f, "w"),
            FlowKind::K => write!(f, "k"),
            FlowKind::Lambda => write!(f, "lambda"),
            FlowKind::PerBond => write!(f, "per-bond"),
        }
    }
}

impl FromStr for FlowKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "w" => Ok(FlowKind::W),
            "k" => Ok(FlowKind::K),
            "lambda" => Ok(FlowKind::Lambda),
            "per-bond" => Ok(FlowKind::PerBond),
            other => Err(format!("unknown flow parameter `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    Diagonal,
    Sequential,
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathKind::Diagonal => write!(f, "diagonal"),
            PathKind::Sequential => write!(f, "sequential"),
        }
    }
}

impl FromStr for PathKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "diagonal" => Ok(PathKind::Diagonal),
            "sequential" => Ok(PathKind::Sequential),
            other => Err(format!("unknown flow path `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    Full,
    Orbit,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::Full => write!(f, "full"),
            BasisKind::Orbit => write!(f, "orbit"),
        }
    }
}

impl FromStr for BasisKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(BasisKind::Full),
            "orbit" => Ok(BasisKind::Orbit),
            other => Err(format!("unknown basis kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagatorSection {
    pub space: SpaceKind,
    pub m: f64,
    pub period: Option<f64>,
    pub spacing: Option<f64>,
    pub sites: Option<u32>,
    pub times: Vec<f64>,
    pub points: Vec<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    Line,
    Circle,
    Lattice,
    Circular,
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceKind::Line => write!(f, "line"),
            SpaceKind::Circle => write!(f, "circle"),
            SpaceKind::Lattice => write!(f, "lattice"),
            SpaceKind::Circular => write!(f, "circular"),
        }
    }
}

impl FromStr for SpaceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "line" => Ok(SpaceKind::Line),
            "circle" => Ok(SpaceKind::Circle),
            "lattice" => Ok(SpaceKind::Lattice),
            "circular" => Ok(SpaceKind::Circular),
            other => Err(format!("unknown propagator space `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSection {
    pub method: MethodKind,
    pub nodes: usize,
    pub samples: u64,
    pub phi_max: Option<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            method: MethodKind::Quadrature,
            nodes: 48,
            samples: 100_000,
            phi_max: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodKind {
    Quadrature,
    MonteCarlo,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodKind::Quadrature => write!(f, "quadrature"),
            MethodKind::MonteCarlo => write!(f, "monte-carlo"),
        }
    }
}

impl FromStr for MethodKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quadrature" => Ok(MethodKind::Quadrature),
            "monte-carlo" => Ok(MethodKind::MonteCarlo),
            other => Err(format!("unknown oracle method `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountSection {
    pub extents: Vec<u32>,
    pub dimension: usize,
    pub m_anh: u32,
    pub levels: Vec<CountLevel>,
}

fn level_name(level: CountLevel) -> &'static str {
    match level {
        CountLevel::None => "none",
        CountLevel::Parity => "parity",
        CountLevel::Full => "full",
    }
}

fn parse_level(s: &str) -> Result<CountLevel, String> {
    match s {
        "none" => Ok(CountLevel::None),
        "parity" => Ok(CountLevel::Parity),
        "full" => Ok(CountLevel::Full),
        other => Err(format!("unknown count level `{other}`")),
    }
}

impl JobSpec {
    /// Canonical config text; parsing it back gives an equal `JobSpec`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        out.push_str("[job]\n");
        out.push_str(&format!("command = {}\n", self.command));
        out.push_str(&format!("format = {}\n", self.format));
        out.push_str(&format!("tol = {:e}\n", self.tol));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("threads = {}\n", self.threads));
        if let Some(lat) = &self.lattice {
            out.push_str("\n[lattice]\n");
            out.push_str(&format!("dimension = {}\n", lat.dimension));
            out.push_str(&format!("extent = {}\n", lat.extent));
            out.push_str(&format!("a = {}\n", lat.a));
            out.push_str(&format!("k = {}\n", lat.k));
            out.push_str(&format!("g = {}\n", lat.g));
            out.push_str(&format!("lambda = {}\n", lat.lambda));
            out.push_str(&format!("w = {}\n", lat.w));
            out.push_str(&format!("per-bond = {}\n", lat.per_bond));
        }
        if !self.targets.is_empty() {
            out.push_str("\n[targets]\n");
            for nu in &self.targets {
                let joined: Vec<String> = nu.iter().map(|o| o.to_string()).collect();
                out.push_str(&format!("nu = {}\n", joined.join(",")));
            }
        }
        if let Some(flow) = &self.flow {
            out.push_str("\n[flow]\n");
            out.push_str(&format!("parameter = {}\n", flow.parameter));
            let joined: Vec<String> = flow.target.iter().map(format_rational).collect();
            out.push_str(&format!("target = {}\n", joined.join(",")));
            out.push_str(&format!("start = {}\n", format_rational(&flow.start)));
            out.push_str(&format!("path = {}\n", flow.path));
            out.push_str(&format!("basis = {}\n", flow.basis));
        }
        if let Some(prop) = &self.propagator {
            out.push_str("\n[propagator]\n");
            out.push_str(&format!("space = {}\n", prop.space));
            out.push_str(&format!("m = {:e}\n", prop.m));
            if let Some(period) = prop.period {
                out.push_str(&format!("period = {period:e}\n"));
            }
            if let Some(spacing) = prop.spacing {
                out.push_str(&format!("spacing = {spacing:e}\n"));
            }
            if let Some(sites) = prop.sites {
                out.push_str(&format!("sites = {sites}\n"));
            }
            if !prop.times.is_empty() {
                let joined: Vec<String> = prop.times.iter().map(|t| format!("{t:e}")).collect();
                out.push_str(&format!("times = {}\n", joined.join(",")));
            }
            if !prop.points.is_empty() {
                let joined: Vec<String> = prop.points.iter().map(|n| n.to_string()).collect();
                out.push_str(&format!("points = {}\n", joined.join(",")));
            }
        }
        if let Some(oracle) = &self.oracle {
            out.push_str("\n[oracle]\n");
            out.push_str(&format!("method = {}\n", oracle.method));
            out.push_str(&format!("nodes = {}\n", oracle.nodes));
            out.push_str(&format!("samples = {}\n", oracle.samples));
            if let Some(phi_max) = oracle.phi_max {
                out.push_str(&format!("phi-max = {phi_max:e}\n"));
            }
        }
        if let Some(count) = &self.count {
            out.push_str("\n[count]\n");
            let joined: Vec<String> = count.extents.iter().map(|n| n.to_string()).collect();
            out.push_str(&format!("extents = {}\n", joined.join(",")));
            out.push_str(&format!("dimension = {}\n", count.dimension));
            out.push_str(&format!("m-anh = {}\n", count.m_anh));
            let joined: Vec<String> = count.levels.iter().map(|l| level_name(*l).into()).collect();
            out.push_str(&format!("levels = {}\n", joined.join(",")));
        }
        out
    }

    pub fn parse(text: &str) -> Result<JobSpec, String> {
        let mut sections: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        let mut current = String::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = name.trim().to_owned();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", line_no + 1))?;
            if current.is_empty() {
                return Err(format!("line {}: key outside any [section]", line_no + 1));
            }
            sections
                .get_mut(&current)
                .unwrap()
                .push((key.trim().to_owned(), value.trim().to_owned()));
        }

        let mut job = JobSpec::default();
        if let Some(pairs) = sections.get("job") {
            for (key, value) in pairs {
                match key.as_str() {
                    "command" => job.command = value.clone(),
                    "format" => job.format = value.parse()?,
                    "tol" => job.tol = parse_f64(value)?,
                    "seed" => job.seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?,
                    "threads" => {
                        job.threads = value.parse().map_err(|_| format!("bad threads `{value}`"))?
                    }
                    other => return Err(format!("unknown [job] key `{other}`")),
                }
            }
        }
        if let Some(pairs) = sections.get("lattice") {
            let mut lat = LatticeSection {
                dimension: 1,
                extent: 1,
                a: CouplingValue::zero(),
                k: CouplingValue::zero(),
                g: CouplingValue::zero(),
                lambda: CouplingValue::zero(),
                w: CouplingValue::zero(),
                per_bond: false,
            };
            for (key, value) in pairs {
                match key.as_str() {
                    "dimension" => {
                        lat.dimension =
                            value.parse().map_err(|_| format!("bad dimension `{value}`"))?
                    }
                    "extent" => {
                        lat.extent = value.parse().map_err(|_| format!("bad extent `{value}`"))?
                    }
                    "a" => lat.a = value.parse()?,
                    "k" => lat.k = value.parse()?,
                    "g" => lat.g = value.parse()?,
                    "lambda" => lat.lambda = value.parse()?,
                    "w" => lat.w = value.parse()?,
                    "per-bond" => {
                        lat.per_bond =
                            value.parse().map_err(|_| format!("bad per-bond `{value}`"))?
                    }
                    other => return Err(format!("unknown [lattice] key `{other}`")),
                }
            }
            job.lattice = Some(lat);
        }
        if let Some(pairs) = sections.get("targets") {
            for (key, value) in pairs {
                if key != "nu" {
                    return Err(format!("unknown [targets] key `{key}`"));
                }
                let dense: Result<Vec<u32>, _> =
                    value.split(',').map(|p| p.trim().parse::<u32>()).collect();
                job.targets
                    .push(dense.map_err(|_| format!("bad target `{value}`"))?);
            }
        }
        if let Some(pairs) = sections.get("flow") {
            let mut flow = FlowSection {
                parameter: FlowKind::W,
                target: Vec::new(),
                start: BigRational::zero(),
                path: PathKind::Diagonal,
                basis: BasisKind::Full,
            };
            for (key, value) in pairs {
                match key.as_str() {
                    "parameter" => flow.parameter = value.parse()?,
                    "target" => {
                        flow.target = value
                            .split(',')
                            .map(|p| parse_rational(p.trim()))
                            .collect::<Result<_, _>>()?
                    }
                    "start" => flow.start = parse_rational(value)?,
                    "path" => flow.path = value.parse()?,
                    "basis" => flow.basis = value.parse()?,
                    other => return Err(format!("unknown [flow] key `{other}`")),
                }
            }
            job.flow = Some(flow);
        }
        if let Some(pairs) = sections.get("propagator") {
            let mut prop = PropagatorSection {
                space: SpaceKind::Line,
                m: 1.0,
                period: None,
                spacing: None,
                sites: None,
                times: Vec::new(),
                points: Vec::new(),
            };
            for (key, value) in pairs {
                match key.as_str() {
                    "space" => prop.space = value.parse()?,
                    "m" => prop.m = parse_f64(value)?,
                    "period" => prop.period = Some(parse_f64(value)?),
                    "spacing" => prop.spacing = Some(parse_f64(value)?),
                    "sites" => {
                        prop.sites =
                            Some(value.parse().map_err(|_| format!("bad sites `{value}`"))?)
                    }
                    "times" => {
                        prop.times = value
                            .split(',')
                            .map(|p| parse_f64(p.trim()))
                            .collect::<Result<_, _>>()?
                    }
                    "points" => {
                        prop.points = value
                            .split(',')
                            .map(|p| p.trim().parse::<i64>())
                            .collect::<Result<_, _>>()
                            .map_err(|_| format!("bad points `{value}`"))?
                    }
                    other => return Err(format!("unknown [propagator] key `{other}`")),
                }
            }
            job.propagator = Some(prop);
        }
        if let Some(pairs) = sections.get("oracle") {
            let mut oracle = OracleSection::default();
            for (key, value) in pairs {
                match key.as_str() {
                    "method" => oracle.method = value.parse()?,
                    "nodes" => {
                        oracle.nodes = value.parse().map_err(|_| format!("bad nodes `{value}`"))?
                    }
                    "samples" => {
                        oracle.samples =
                            value.parse().map_err(|_| format!("bad samples `{value}`"))?
                    }
                    "phi-max" => oracle.phi_max = Some(parse_f64(value)?),
                    other => return Err(format!("unknown [oracle] key `{other}`")),
                }
            }
            job.oracle = Some(oracle);
        }
        if let Some(pairs) = sections.get("count") {
            let mut count = CountSection {
                extents: Vec::new(),
                dimension: 1,
                m_anh: 4,
                levels: vec![CountLevel::Parity],
            };
            for (key, value) in pairs {
                match key.as_str() {
                    "extents" => {
                        count.extents = value
                            .split(',')
                            .map(|p| p.trim().parse::<u32>())
                            .collect::<Result<_, _>>()
                            .map_err(|_| format!("bad extents `{value}`"))?
                    }
                    "dimension" => {
                        count.dimension =
                            value.parse().map_err(|_| format!("bad dimension `{value}`"))?
                    }
                    "m-anh" => {
                        count.m_anh = value.parse().map_err(|_| format!("bad m-anh `{value}`"))?
                    }
                    "levels" => {
                        count.levels = value
                            .split(',')
                            .map(|p| parse_level(p.trim()))
                            .collect::<Result<_, _>>()?
                    }
                    other => return Err(format!("unknown [count] key `{other}`")),
                }
            }
            job.count = Some(count);
        }
        Ok(job)
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("bad number `{s}`"))
}
