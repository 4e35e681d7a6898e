//! Problem-instance data model: buses, branches, controllable reactive
//! sources, objective weights; the native sectioned case format and IEEE
//! common-data-format import.

use crate::scalar::{c, Real};
use crate::{Error, Result};
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

/// 1-based bus identifier as used in case files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BusId(pub usize);

impl std::fmt::Display for BusId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone)]
pub struct Bus<T> {
    pub id: BusId,
    pub kind: BusKind,
    /// Voltage magnitude, p.u. Setpoint for slack/PV, initial guess for PQ.
    pub v_init: T,
    /// Voltage angle in radians (files carry degrees, converted on parse).
    pub delta_init: T,
    pub p_gen_fixed: T,
    pub q_gen_fixed: T,
    pub p_load: T,
    pub q_load: T,
    /// Reference magnitude for the voltage-deviation objective term.
    pub v_ref: T,
}

#[derive(Debug, Clone)]
pub struct Branch<T> {
    pub from: BusId,
    pub to: BusId,
    pub r: T,
    pub x: T,
    /// Total line-charging susceptance of the pi model; half per terminal.
    pub b_charging: T,
}

/// A controllable reactive injector at a PQ bus.
#[derive(Debug, Clone)]
pub struct ReactiveSource<T> {
    pub bus: BusId,
    pub q_min: T,
    pub q_max: T,
    /// Real-power cost coefficients, converted to reactive cost by the
    /// triangle method at evaluation time.
    pub a_p: T,
    pub b_p: T,
    pub c_p: T,
    pub v_ref: T,
}

#[derive(Debug, Clone, Copy)]
pub struct Weights<T> {
    pub w_loss: T,
    pub w_dev: T,
    pub w_cost: T,
}

impl<T: Real> Default for Weights<T> {
    /// Loss and deviation weighted 1, reactive cost 0.0005.
    fn default() -> Self {
        Self {
            w_loss: T::one(),
            w_dev: T::one(),
            w_cost: c(0.0005),
        }
    }
}

/// Immutable problem instance. Safe to share across concurrent runs.
#[derive(Debug, Clone)]
pub struct Network<T> {
    pub name: String,
    pub buses: Vec<Bus<T>>,
    pub branches: Vec<Branch<T>>,
    pub sources: Vec<ReactiveSource<T>>,
    pub weights: Weights<T>,
}

impl<T: Real> Network<T> {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of a bus id in `buses`, if present.
    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus(&self, id: BusId) -> Result<&Bus<T>> {
        self.bus_index(id)
            .map(|i| &self.buses[i])
            .ok_or(Error::UnknownBus(id.0))
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// Replace the source list (and optionally the weights), e.g. to attach
    /// controllable sources to a CDF import that carries none.
    pub fn with_sources(
        mut self,
        sources: Vec<ReactiveSource<T>>,
        weights: Option<Weights<T>>,
    ) -> Result<Self> {
        self.sources = sources;
        if let Some(w) = weights {
            self.weights = w;
        }
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::Semantic(violations.join("; ")))
        }
    }
}

/// Check every structural invariant; returns one message per violation.
pub fn validate<T: Real>(net: &Network<T>) -> Vec<String> {
    let mut v = Vec::new();
    let mut seen = HashSet::new();
    for b in &net.buses {
        if !seen.insert(b.id) {
            v.push(format!("duplicate bus {}", b.id));
        }
        if b.v_init <= T::zero() {
            v.push(format!("non-positive initial voltage at bus {}", b.id));
        }
    }
    let n_slack = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .count();
    if n_slack == 0 {
        v.push("missing slack bus".into());
    } else if n_slack > 1 {
        v.push("multiple slack buses".into());
    }
    if let Some(s) = net.buses.iter().find(|b| b.kind == BusKind::Slack) {
        if s.delta_init != T::zero() {
            v.push(format!("slack bus {} has nonzero angle", s.id));
        }
    }
    for br in &net.branches {
        for end in [br.from, br.to] {
            if net.bus_index(end).is_none() {
                v.push(format!("dangling branch endpoint {}", end));
            }
        }
        if br.from == br.to {
            v.push(format!("self-loop branch at bus {}", br.from));
        }
        if br.x == T::zero() {
            v.push(format!("zero reactance on branch {}-{}", br.from, br.to));
        }
        if br.r < T::zero() {
            v.push(format!("negative resistance on branch {}-{}", br.from, br.to));
        }
        if br.b_charging < T::zero() {
            v.push(format!("negative charging on branch {}-{}", br.from, br.to));
        }
    }
    let mut src_buses = HashSet::new();
    for s in &net.sources {
        match net.bus(s.bus) {
            Ok(b) => {
                if b.kind != BusKind::Pq {
                    v.push(format!("source at non-PQ bus {}", s.bus));
                }
            }
            Err(_) => v.push(format!("source at unknown bus {}", s.bus)),
        }
        if !src_buses.insert(s.bus) {
            v.push(format!("multiple sources at bus {}", s.bus));
        }
        if s.q_min >= s.q_max {
            v.push(format!("empty control interval at bus {}", s.bus));
        }
    }
    if net.weights.w_loss == T::zero()
        && net.weights.w_dev == T::zero()
        && net.weights.w_cost == T::zero()
    {
        v.push("all objective weights are zero".into());
    }
    if !net.buses.is_empty() && !is_connected(net) {
        v.push("network graph is not connected".into());
    }
    v
}

fn is_connected<T: Real>(net: &Network<T>) -> bool {
    let n = net.buses.len();
    let idx: HashMap<BusId, usize> = net.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let mut adj = vec![Vec::new(); n];
    for br in &net.branches {
        if let (Some(&a), Some(&b)) = (idx.get(&br.from), idx.get(&br.to)) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

// ---------------------------------------------------------------------------
// Native case format
// ---------------------------------------------------------------------------

#[derive(PartialEq, Clone, Copy)]
enum Section {
    None,
    Meta,
    Bus,
    Branch,
    Source,
    Weights,
}

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: Real>(tok: &str, line: usize) -> Result<T> {
    let v: f64 = tok
        .parse()
        .map_err(|_| syntax(line, format!("bad number `{tok}`")))?;
    Ok(c(v))
}

/// Parse the native sectioned case format and validate the result.
///
/// Angles in the file are degrees unless `[meta] angle_unit rad` says
/// otherwise; internally everything is radians.
pub fn parse_case<T: Real>(text: &str) -> Result<Network<T>> {
    let mut net = Network {
        name: String::new(),
        buses: Vec::new(),
        branches: Vec::new(),
        sources: Vec::new(),
        weights: Weights::default(),
    };
    let mut angle_deg = true;
    let mut section = Section::None;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            section = match name.strip_suffix(']') {
                Some("meta") => Section::Meta,
                Some("bus") => Section::Bus,
                Some("branch") => Section::Branch,
                Some("source") => Section::Source,
                Some("weights") => Section::Weights,
                _ => return Err(syntax(line_no, format!("unknown section `{body}`"))),
            };
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        match section {
            Section::None => return Err(syntax(line_no, "data before any section header")),
            Section::Meta => match toks[0] {
                "name" => net.name = toks.get(1).unwrap_or(&"").to_string(),
                "angle_unit" => match toks.get(1) {
                    Some(&"deg") => angle_deg = true,
                    Some(&"rad") => angle_deg = false,
                    _ => return Err(syntax(line_no, "angle_unit must be deg or rad")),
                },
                other => return Err(syntax(line_no, format!("unknown meta key `{other}`"))),
            },
            Section::Bus => {
                if toks.len() != 9 {
                    return Err(syntax(line_no, "bus row needs 9 fields"));
                }
                let id: usize = toks[0]
                    .parse()
                    .map_err(|_| syntax(line_no, "bad bus id"))?;
                let kind = match toks[1].to_ascii_lowercase().as_str() {
                    "slack" => BusKind::Slack,
                    "pv" => BusKind::Pv,
                    "pq" => BusKind::Pq,
                    k => return Err(syntax(line_no, format!("unknown bus kind `{k}`"))),
                };
                let mut delta: T = parse_num(toks[3], line_no)?;
                if angle_deg {
                    delta = delta * c(std::f64::consts::PI / 180.0);
                }
                net.buses.push(Bus {
                    id: BusId(id),
                    kind,
                    v_init: parse_num(toks[2], line_no)?,
                    delta_init: delta,
                    p_gen_fixed: parse_num(toks[4], line_no)?,
                    q_gen_fixed: parse_num(toks[5], line_no)?,
                    p_load: parse_num(toks[6], line_no)?,
                    q_load: parse_num(toks[7], line_no)?,
                    v_ref: parse_num(toks[8], line_no)?,
                });
            }
            Section::Branch => {
                if toks.len() != 5 {
                    return Err(syntax(line_no, "branch row needs 5 fields"));
                }
                net.branches.push(Branch {
                    from: BusId(toks[0].parse().map_err(|_| syntax(line_no, "bad bus id"))?),
                    to: BusId(toks[1].parse().map_err(|_| syntax(line_no, "bad bus id"))?),
                    r: parse_num(toks[2], line_no)?,
                    x: parse_num(toks[3], line_no)?,
                    b_charging: parse_num(toks[4], line_no)?,
                });
            }
            Section::Source => {
                if toks.len() != 7 {
                    return Err(syntax(line_no, "source row needs 7 fields"));
                }
                net.sources.push(ReactiveSource {
                    bus: BusId(toks[0].parse().map_err(|_| syntax(line_no, "bad bus id"))?),
                    q_min: parse_num(toks[1], line_no)?,
                    q_max: parse_num(toks[2], line_no)?,
                    a_p: parse_num(toks[3], line_no)?,
                    b_p: parse_num(toks[4], line_no)?,
                    c_p: parse_num(toks[5], line_no)?,
                    v_ref: parse_num(toks[6], line_no)?,
                });
            }
            Section::Weights => {
                if toks.len() != 3 {
                    return Err(syntax(line_no, "weights row needs 3 fields"));
                }
                net.weights = Weights {
                    w_loss: parse_num(toks[0], line_no)?,
                    w_dev: parse_num(toks[1], line_no)?,
                    w_cost: parse_num(toks[2], line_no)?,
                };
            }
        }
    }
    if net.buses.is_empty() {
        return Err(Error::Semantic("case has no buses".into()));
    }
    let violations = validate(&net);
    if violations.is_empty() {
        Ok(net)
    } else {
        Err(Error::Semantic(violations.join("; ")))
    }
}

/// Parse only `[source]` and `[weights]` sections, e.g. a source overlay
/// for a CDF import.
pub fn parse_sources_overlay<T: Real>(
    text: &str,
) -> Result<(Vec<ReactiveSource<T>>, Option<Weights<T>>)> {
    let mut sources = Vec::new();
    let mut weights = None;
    let mut section = Section::None;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        match body {
            "[source]" => {
                section = Section::Source;
                continue;
            }
            "[weights]" => {
                section = Section::Weights;
                continue;
            }
            _ if body.starts_with('[') => {
                return Err(syntax(line_no, format!("unexpected section `{body}`")))
            }
            _ => {}
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        match section {
            Section::Source => {
                if toks.len() != 7 {
                    return Err(syntax(line_no, "source row needs 7 fields"));
                }
                sources.push(ReactiveSource {
                    bus: BusId(toks[0].parse().map_err(|_| syntax(line_no, "bad bus id"))?),
                    q_min: parse_num(toks[1], line_no)?,
                    q_max: parse_num(toks[2], line_no)?,
                    a_p: parse_num(toks[3], line_no)?,
                    b_p: parse_num(toks[4], line_no)?,
                    c_p: parse_num(toks[5], line_no)?,
                    v_ref: parse_num(toks[6], line_no)?,
                });
            }
            Section::Weights => {
                if toks.len() != 3 {
                    return Err(syntax(line_no, "weights row needs 3 fields"));
                }
                weights = Some(Weights {
                    w_loss: parse_num(toks[0], line_no)?,
                    w_dev: parse_num(toks[1], line_no)?,
                    w_cost: parse_num(toks[2], line_no)?,
                });
            }
            _ => return Err(syntax(line_no, "data before any section header")),
        }
    }
    Ok((sources, weights))
}

/// Serialize back to the native format (angles written in degrees).
pub fn to_case_string<T: Real>(net: &Network<T>) -> String {
    use crate::scalar::f;
    let mut s = String::new();
    let _ = writeln!(s, "[meta]");
    let _ = writeln!(s, "name {}", net.name);
    let _ = writeln!(s, "angle_unit deg");
    let _ = writeln!(s, "[bus]");
    let _ = writeln!(s, "# id kind V delta Pg Qg Pl Ql Vref");
    for b in &net.buses {
        let kind = match b.kind {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
        };
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            b.id,
            kind,
            f(b.v_init),
            f(b.delta_init).to_degrees(),
            f(b.p_gen_fixed),
            f(b.q_gen_fixed),
            f(b.p_load),
            f(b.q_load),
            f(b.v_ref),
        );
    }
    let _ = writeln!(s, "[branch]");
    let _ = writeln!(s, "# from to r x b_charging");
    for br in &net.branches {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            br.from,
            br.to,
            f(br.r),
            f(br.x),
            f(br.b_charging)
        );
    }
    if !net.sources.is_empty() {
        let _ = writeln!(s, "[source]");
        let _ = writeln!(s, "# bus qmin qmax a b c vref");
        for src in &net.sources {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {}",
                src.bus,
                f(src.q_min),
                f(src.q_max),
                f(src.a_p),
                f(src.b_p),
                f(src.c_p),
                f(src.v_ref)
            );
        }
    }
    let _ = writeln!(s, "[weights]");
    let _ = writeln!(
        s,
        "{} {} {}",
        f(net.weights.w_loss),
        f(net.weights.w_dev),
        f(net.weights.w_cost)
    );
    s
}

// ---------------------------------------------------------------------------
// IEEE common data format
// ---------------------------------------------------------------------------

/// Fixed-column field, 1-based inclusive columns as the format defines them.
fn cols(line: &str, lo: usize, hi: usize) -> &str {
    let bytes = line.as_bytes();
    let lo = (lo - 1).min(bytes.len());
    let hi = hi.min(bytes.len());
    std::str::from_utf8(&bytes[lo..hi]).unwrap_or("").trim()
}

fn cdf_num(line: &str, lo: usize, hi: usize, record: usize, what: &str) -> Result<f64> {
    let tok = cols(line, lo, hi);
    if tok.is_empty() {
        return Ok(0.0);
    }
    tok.parse().map_err(|_| Error::Cdf {
        record,
        msg: format!("unparseable {what} field `{tok}`"),
    })
}

/// Import an IEEE common-data-format archive file.
///
/// Bus types map 3 -> slack, 2 -> PV, 0/1 -> PQ; MW/MVAR columns are
/// normalized to p.u. on the file's MVA base. The import carries no
/// controllable sources; attach them with [`Network::with_sources`].
/// Sections other than bus and branch data are skipped.
pub fn parse_ieee_cdf<T: Real>(text: &str) -> Result<Network<T>> {
    let mut lines = text.lines().enumerate();
    let (_, title) = lines.next().ok_or(Error::Cdf {
        record: 0,
        msg: "missing title card".into(),
    })?;
    if title.trim().is_empty() {
        return Err(Error::Cdf {
            record: 0,
            msg: "missing title card".into(),
        });
    }
    let base_mva: f64 = {
        let v = cols(title, 32, 37);
        v.parse().unwrap_or(100.0)
    };
    if base_mva <= 0.0 {
        return Err(Error::Cdf {
            record: 0,
            msg: format!("non-positive MVA base {base_mva}"),
        });
    }

    let mut net = Network {
        name: cols(title, 46, 100).to_string(),
        buses: Vec::new(),
        branches: Vec::new(),
        sources: Vec::new(),
        weights: Weights::<T>::default(),
    };

    #[derive(PartialEq)]
    enum Sec {
        Idle,
        Bus,
        Branch,
        SkipOther,
    }
    let mut sec = Sec::Idle;
    for (ln, line) in lines {
        let record = ln + 1;
        let upper = line.to_ascii_uppercase();
        if upper.starts_with("END OF DATA") {
            break;
        }
        if sec == Sec::Idle {
            if upper.contains("DATA FOLLOWS") {
                sec = if upper.starts_with("BUS") {
                    Sec::Bus
                } else if upper.starts_with("BRANCH") {
                    Sec::Branch
                } else {
                    // loss zones, interchange, tie lines: out of model
                    Sec::SkipOther
                };
            } else if !line.trim().is_empty() && !line.trim_start().starts_with("-999") {
                return Err(Error::Cdf {
                    record,
                    msg: format!("malformed section header `{}`", line.trim()),
                });
            }
            continue;
        }
        if line.trim_start().starts_with("-999") || line.trim_start().starts_with("-99") {
            sec = Sec::Idle;
            continue;
        }
        match sec {
            Sec::Bus => {
                let id: usize = cols(line, 1, 4).parse().map_err(|_| Error::Cdf {
                    record,
                    msg: format!("unparseable bus number `{}`", cols(line, 1, 4)),
                })?;
                let btype: u8 = cols(line, 25, 26).parse().unwrap_or(0);
                let kind = match btype {
                    3 => BusKind::Slack,
                    2 => BusKind::Pv,
                    _ => BusKind::Pq,
                };
                let v = cdf_num(line, 28, 33, record, "voltage")?;
                let ang = cdf_num(line, 34, 40, record, "angle")?;
                let pl = cdf_num(line, 41, 49, record, "load MW")? / base_mva;
                let ql = cdf_num(line, 50, 59, record, "load MVAR")? / base_mva;
                let pg = cdf_num(line, 60, 67, record, "gen MW")? / base_mva;
                let qg = cdf_num(line, 68, 75, record, "gen MVAR")? / base_mva;
                let v = if v > 0.0 { v } else { 1.0 };
                net.buses.push(Bus {
                    id: BusId(id),
                    kind,
                    v_init: c(v),
                    delta_init: if kind == BusKind::Slack {
                        T::zero()
                    } else {
                        c(ang.to_radians())
                    },
                    p_gen_fixed: c(pg),
                    q_gen_fixed: c(qg),
                    p_load: c(pl),
                    q_load: c(ql),
                    v_ref: T::one(),
                });
            }
            Sec::Branch => {
                let from: usize = cols(line, 1, 4).parse().map_err(|_| Error::Cdf {
                    record,
                    msg: format!("unparseable tap bus `{}`", cols(line, 1, 4)),
                })?;
                let to: usize = cols(line, 6, 9).parse().map_err(|_| Error::Cdf {
                    record,
                    msg: format!("unparseable z bus `{}`", cols(line, 6, 9)),
                })?;
                let r = cdf_num(line, 20, 29, record, "resistance")?;
                let x = cdf_num(line, 30, 40, record, "reactance")?;
                let b = cdf_num(line, 41, 50, record, "charging")?;
                net.branches.push(Branch {
                    from: BusId(from),
                    to: BusId(to),
                    r: c(r),
                    x: c(x),
                    b_charging: c(b),
                });
            }
            _ => {}
        }
    }
    if net.buses.is_empty() {
        return Err(Error::Cdf {
            record: 0,
            msg: "no bus records".into(),
        });
    }
    Ok(net)
}
