//! Ancestral selection graph: backward simulation of the potential
//! ancestors of a sample, genealogy under a type assignment, relevant
//! lines, path classification, and two Monte Carlo estimators of `h_k`.
//!
//! Lines are the population members `1..=N`. Backward time is `beta`; an
//! arrow `src -> dst` is a reproduction event in which `src` is the parent
//! and `dst` the replaced individual.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{BirthDeathRates, Pmf};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Selective { src: usize, dst: usize },
    Neutral { src: usize, dst: usize },
    Mut0 { line: usize },
    Mut1 { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsgEvent {
    pub time: f64,
    pub kind: EventKind,
}

/// One backward run. `active[0]` is the sample and `active[e + 1]` the set
/// of potential ancestors right after event `e`; events that do not touch
/// the current set are not recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsgRealisation {
    pub params: ModelParams,
    pub sample: Vec<usize>,
    pub horizon: f64,
    pub events: Vec<AsgEvent>,
    pub active: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GenealogyResult {
    pub ancestor_line: usize,
    pub ancestor_type: u8,
}

/// Potential-ancestor set with O(1) membership and uniform draws from both
/// the set and its complement.
struct ActiveSet {
    inside: Vec<usize>,
    outside: Vec<usize>,
    // position of a line in whichever list holds it
    pos: Vec<usize>,
    member: Vec<bool>,
}

impl ActiveSet {
    fn new(n: usize, sample: &[usize]) -> Self {
        let mut member = vec![false; n + 1];
        for &i in sample {
            member[i] = true;
        }
        let mut set = ActiveSet {
            inside: Vec::new(),
            outside: Vec::new(),
            pos: vec![0; n + 1],
            member,
        };
        for line in 1..=n {
            if set.member[line] {
                set.pos[line] = set.inside.len();
                set.inside.push(line);
            } else {
                set.pos[line] = set.outside.len();
                set.outside.push(line);
            }
        }
        set
    }

    fn len(&self) -> usize {
        self.inside.len()
    }

    fn contains(&self, line: usize) -> bool {
        self.member[line]
    }

    fn flip(&mut self, line: usize) {
        let (from, to) = if self.member[line] {
            (&mut self.inside, &mut self.outside)
        } else {
            (&mut self.outside, &mut self.inside)
        };
        let p = self.pos[line];
        from.swap_remove(p);
        if p < from.len() {
            self.pos[from[p]] = p;
        }
        self.pos[line] = to.len();
        to.push(line);
        self.member[line] = !self.member[line];
    }

    fn sorted(&self) -> Vec<usize> {
        let mut v = self.inside.clone();
        v.sort_unstable();
        v
    }

    /// Applies one event, which must touch the set.
    fn apply(&mut self, kind: EventKind) {
        match kind {
            EventKind::Selective { src, .. } => {
                if !self.contains(src) {
                    self.flip(src);
                }
            }
            EventKind::Neutral { src, dst } => {
                self.flip(dst);
                if !self.contains(src) {
                    self.flip(src);
                }
            }
            EventKind::Mut0 { .. } | EventKind::Mut1 { .. } => {}
        }
    }
}

fn check_sample(n: usize, sample: &[usize]) -> Result<Vec<usize>> {
    let mut s = sample.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.is_empty() || s.len() != sample.len() || s[0] == 0 || *s.last().unwrap() > n {
        return Err(Error::InvalidArgument(format!(
            "sample must be a nonempty set of distinct lines in 1..={n}"
        )));
    }
    Ok(s)
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    Ok(())
}

fn simulate_events(
    params: &ModelParams,
    sample: &[usize],
    horizon: f64,
    rng: &mut Stream,
    ignore_relocation: bool,
    keep_active: bool,
) -> (Vec<AsgEvent>, Vec<Vec<usize>>, ActiveSet) {
    let n = params.n();
    let nf = n as f64;
    let (s, u, nu0) = (params.s(), params.u(), params.nu0());
    let mut set = ActiveSet::new(n, sample);
    let mut events = Vec::new();
    let mut active = Vec::new();
    if keep_active {
        active.push(set.sorted());
    }
    let mut t = 0.0;
    loop {
        let k = set.len() as f64;
        let out = nf - k;
        // collision, branching, coalescence, relocation, mut0, mut1
        let rates = [
            s / nf * k * (k - 1.0),
            s / nf * k * out,
            k * (k - 1.0) / nf,
            if ignore_relocation { 0.0 } else { k * out / nf },
            k * u * nu0,
            k * u * (1.0 - nu0),
        ];
        let total: f64 = rates.iter().sum();
        if total == 0.0 {
            break;
        }
        t += rng::exponential(rng, total);
        if t >= horizon {
            break;
        }
        let which = rng::categorical(rng, &rates, total);
        let dst = set.inside[rng.random_range(0..set.len())];
        let other_inside = |rng: &mut Stream, set: &ActiveSet| loop {
            let i = set.inside[rng.random_range(0..set.len())];
            if i != dst {
                break i;
            }
        };
        let kind = match which {
            0 => EventKind::Selective {
                src: other_inside(rng, &set),
                dst,
            },
            1 => EventKind::Selective {
                src: set.outside[rng.random_range(0..set.outside.len())],
                dst,
            },
            2 => EventKind::Neutral {
                src: other_inside(rng, &set),
                dst,
            },
            3 => EventKind::Neutral {
                src: set.outside[rng.random_range(0..set.outside.len())],
                dst,
            },
            4 => EventKind::Mut0 { line: dst },
            _ => EventKind::Mut1 { line: dst },
        };
        set.apply(kind);
        events.push(AsgEvent { time: t, kind });
        if keep_active {
            active.push(set.sorted());
        }
    }
    (events, active, set)
}

/// Runs the potential-ancestor process of `sample` up to `horizon`.
/// Relocations do not change the common-ancestor type law and are skipped
/// when `ignore_relocation` is set.
pub fn simulate_asg(
    params: &ModelParams,
    sample: &[usize],
    horizon: f64,
    seed: u64,
    ignore_relocation: bool,
) -> Result<AsgRealisation> {
    check_horizon(horizon)?;
    let sample = check_sample(params.n(), sample)?;
    let mut rng = rng::stream(seed, 0);
    let (events, active, _) =
        simulate_events(params, &sample, horizon, &mut rng, ignore_relocation, true);
    Ok(AsgRealisation {
        params: *params,
        sample,
        horizon,
        events,
        active,
    })
}

impl AsgRealisation {
    /// Builds a realisation from an explicit event list, replaying the
    /// set updates. Times must be positive, strictly increasing and below
    /// the horizon, and every event must touch the current set.
    pub fn from_events(
        params: &ModelParams,
        sample: &[usize],
        horizon: f64,
        events: Vec<AsgEvent>,
    ) -> Result<Self> {
        check_horizon(horizon)?;
        let n = params.n();
        let sample = check_sample(n, sample)?;
        let mut set = ActiveSet::new(n, &sample);
        let mut active = vec![set.sorted()];
        let mut last = 0.0;
        for (index, ev) in events.iter().enumerate() {
            if !(ev.time > last) {
                return Err(Error::CoincidentEvents { index });
            }
            if ev.time >= horizon {
                return Err(Error::InvalidArgument(format!(
                    "event {index} is past the horizon"
                )));
            }
            last = ev.time;
            let bad = |msg: &str| Err(Error::InvalidArgument(format!("event {index}: {msg}")));
            match ev.kind {
                EventKind::Selective { src, dst } | EventKind::Neutral { src, dst } => {
                    if src == dst || src == 0 || dst == 0 || src > n || dst > n {
                        return bad("arrow lines must be distinct members of 1..=N");
                    }
                    if !set.contains(dst) {
                        return bad("arrow does not point into the active set");
                    }
                }
                EventKind::Mut0 { line } | EventKind::Mut1 { line } => {
                    if line == 0 || line > n || !set.contains(line) {
                        return bad("mutation on an inactive line");
                    }
                }
            }
            set.apply(ev.kind);
            active.push(set.sorted());
        }
        Ok(AsgRealisation {
            params: *params,
            sample,
            horizon,
            events,
            active,
        })
    }

    /// Potential ancestors at the horizon.
    pub fn final_active(&self) -> &[usize] {
        self.active.last().expect("active sets are never empty")
    }

    /// Time of the first return to a single line, if any.
    pub fn bottleneck(&self) -> Option<f64> {
        if self.sample.len() == 1 {
            return Some(0.0);
        }
        self.active
            .iter()
            .skip(1)
            .zip(&self.events)
            .find(|(a, _)| a.len() == 1)
            .map(|(_, e)| e.time)
    }

    /// Ancestor at the horizon of each sample line, given the types of all
    /// `N` population members at the horizon (`types[line - 1]`).
    pub fn ancestors(&self, types: &[u8]) -> Vec<GenealogyResult> {
        let n = self.params.n();
        assert_eq!(types.len(), n, "one type per population member");
        let mut ty = vec![1u8; n + 1];
        let mut anc = vec![0usize; n + 1];
        for &line in self.final_active() {
            ty[line] = types[line - 1];
            anc[line] = line;
        }
        // forward in time: latest backward event first
        for ev in self.events.iter().rev() {
            match ev.kind {
                EventKind::Selective { src, dst } => {
                    if ty[src] == 0 {
                        ty[dst] = 0;
                        anc[dst] = anc[src];
                    }
                }
                EventKind::Neutral { src, dst } => {
                    ty[dst] = ty[src];
                    anc[dst] = anc[src];
                }
                EventKind::Mut0 { line } => ty[line] = 0,
                EventKind::Mut1 { line } => ty[line] = 1,
            }
        }
        self.sample
            .iter()
            .map(|&m| GenealogyResult {
                ancestor_line: anc[m],
                ancestor_type: types[anc[m] - 1],
            })
            .collect()
    }

    /// Event log, one event per line: `beta kind src dst` for arrows and
    /// `beta mut0 line` / `beta mut1 line` for mutations. Arrow kinds are
    /// `branch`, `coll`, `coal` and `reloc`.
    pub fn to_event_log(&self) -> String {
        let mut out = String::new();
        for (e, ev) in self.events.iter().enumerate() {
            let before = &self.active[e];
            let inside = |l: usize| before.binary_search(&l).is_ok();
            match ev.kind {
                EventKind::Selective { src, dst } => {
                    let k = if inside(src) { "coll" } else { "branch" };
                    writeln!(out, "{} {k} {src} {dst}", ev.time).unwrap();
                }
                EventKind::Neutral { src, dst } => {
                    let k = if inside(src) { "coal" } else { "reloc" };
                    writeln!(out, "{} {k} {src} {dst}", ev.time).unwrap();
                }
                EventKind::Mut0 { line } => writeln!(out, "{} mut0 {line}", ev.time).unwrap(),
                EventKind::Mut1 { line } => writeln!(out, "{} mut1 {line}", ev.time).unwrap(),
            }
        }
        out
    }
}

/// Genealogy of the first sample line.
pub fn resolve_genealogy(real: &AsgRealisation, types: &[u8]) -> GenealogyResult {
    real.ancestors(types)[0]
}

/// Largest horizon set enumerated by [`relevant_lines`].
pub const MAX_ENUMERATED_LINES: usize = 20;

/// Lines that are the ancestor of some sample member for at least one
/// assignment of types to the potential ancestors at the horizon. Found by
/// trying all `2^K` assignments.
pub fn relevant_lines(real: &AsgRealisation) -> Result<Vec<usize>> {
    let fin = real.final_active();
    let k = fin.len();
    if k > MAX_ENUMERATED_LINES {
        return Err(Error::TooManyLines {
            lines: k,
            limit: MAX_ENUMERATED_LINES,
        });
    }
    let mut types = vec![1u8; real.params.n()];
    let mut found = HashSet::new();
    for mask in 0u32..(1u32 << k) {
        for (b, &line) in fin.iter().enumerate() {
            types[line - 1] = ((mask >> b) & 1) as u8;
        }
        for g in real.ancestors(&types) {
            found.insert(g.ancestor_line);
        }
    }
    let mut v: Vec<usize> = found.into_iter().collect();
    v.sort_unstable();
    Ok(v)
}

/// Birth-death rates of the number of potential ancestors on `1..=N`.
pub fn line_count_rates(params: &ModelParams) -> BirthDeathRates {
    let n = params.n();
    let nf = n as f64;
    let s = params.s();
    let lam = (1..=n).map(|k| (k * (n - k)) as f64 * s / nf).collect();
    let mu = (1..=n).map(|k| (k * (k - 1)) as f64 / nf).collect();
    BirthDeathRates { offset: 1, lam, mu }
}

/// Stationary law of the number of potential ancestors.
pub fn stationary_line_count(params: &ModelParams) -> Result<Pmf> {
    if params.n() == 1 {
        return Ok(Pmf::point_mass(1, 1, 1));
    }
    if params.s() == 0.0 {
        return Err(Error::SelectionRequired);
    }
    line_count_rates(params).stationary()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathClass {
    Neutral,
    AlmostNeutral,
    Fictitious,
    TrulySelective,
}

/// One path from a sample line at `beta = 0` to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub start_line: usize,
    pub final_line: usize,
    pub class: PathClass,
    pub relevant: bool,
    pub immune: bool,
    /// Indices of the selective arrows the path follows to their source.
    pub used_arrows: Vec<usize>,
}

/// Counts of paths by class, computed without listing them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub total: u128,
    pub neutral: u128,
    pub almost_neutral: u128,
    pub fictitious: u128,
    pub truly_selective: u128,
    pub relevant: u128,
    pub immune: u128,
    pub relevant_lines: Vec<usize>,
}

/// Default cap on listed paths.
pub const DEFAULT_PATH_CAP: u128 = 1_000_000;

/// For each selective arrow, whether the type arriving along its source is
/// 0 whatever the types at the horizon are. All other entries are false.
fn source_forced_zero(real: &AsgRealisation) -> Vec<bool> {
    let mut forced = vec![false; real.params.n() + 1];
    let mut out = vec![false; real.events.len()];
    for (e, ev) in real.events.iter().enumerate().rev() {
        match ev.kind {
            EventKind::Selective { src, dst } => {
                out[e] = forced[src];
                forced[dst] |= forced[src];
            }
            EventKind::Neutral { src, dst } => forced[dst] = forced[src],
            EventKind::Mut0 { line } => forced[line] = true,
            EventKind::Mut1 { line } => forced[line] = false,
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Neutral,
    OpenNone,
    Open0,
    Open1,
}

/// Path counts by dynamic programming over `(line, phase, fictitious, hit)`.
///
/// A path that is not fictitious is hit by an almost neutral path exactly
/// when, at a selective arrow it does not follow, the type arriving along
/// the arrow's source is forced to 0; its own history serves as the
/// prefix of the hitting path.
pub fn summarize_paths(real: &AsgRealisation) -> PathSummary {
    let n = real.params.n();
    let forced = source_forced_zero(real);
    let idx = |line: usize, ph: Phase, fict: bool, hit: bool| {
        ((line * 4 + ph as usize) * 2 + fict as usize) * 2 + hit as usize
    };
    let size = (n + 1) * 16;
    let mut cur = vec![0u128; size];
    for &m in &real.sample {
        cur[idx(m, Phase::Neutral, false, false)] += 1;
    }
    let phases = [Phase::Neutral, Phase::OpenNone, Phase::Open0, Phase::Open1];
    for (e, ev) in real.events.iter().enumerate() {
        let on = match ev.kind {
            EventKind::Selective { dst, .. } | EventKind::Neutral { dst, .. } => dst,
            EventKind::Mut0 { line } | EventKind::Mut1 { line } => line,
        };
        let mut moved = Vec::new();
        for &ph in &phases {
            for fict in [false, true] {
                for hit in [false, true] {
                    let i = idx(on, ph, fict, hit);
                    let c = cur[i];
                    if c == 0 {
                        continue;
                    }
                    cur[i] = 0;
                    match ev.kind {
                        EventKind::Selective { src, dst } => {
                            moved.push((idx(dst, ph, fict, hit || forced[e]), c));
                            moved.push((idx(src, Phase::OpenNone, fict, hit), c));
                        }
                        EventKind::Neutral { src, .. } => moved.push((idx(src, ph, fict, hit), c)),
                        EventKind::Mut0 { line } => {
                            let ph = if ph == Phase::OpenNone {
                                Phase::Open0
                            } else {
                                ph
                            };
                            moved.push((idx(line, ph, fict, hit), c));
                        }
                        EventKind::Mut1 { line } => {
                            let (ph, fict) = if ph == Phase::OpenNone {
                                (Phase::Open1, true)
                            } else {
                                (ph, fict)
                            };
                            moved.push((idx(line, ph, fict, hit), c));
                        }
                    }
                }
            }
        }
        for (i, c) in moved {
            cur[i] = cur[i].saturating_add(c);
        }
    }

    let mut sum = PathSummary {
        total: 0,
        neutral: 0,
        almost_neutral: 0,
        fictitious: 0,
        truly_selective: 0,
        relevant: 0,
        immune: 0,
        relevant_lines: Vec::new(),
    };
    for line in 1..=n {
        let mut line_relevant = false;
        for &ph in &phases {
            for fict in [false, true] {
                for hit in [false, true] {
                    let c = cur[idx(line, ph, fict, hit)];
                    if c == 0 {
                        continue;
                    }
                    sum.total = sum.total.saturating_add(c);
                    let class = classify_phase(ph, fict);
                    let slot = match class {
                        PathClass::Neutral => &mut sum.neutral,
                        PathClass::AlmostNeutral => &mut sum.almost_neutral,
                        PathClass::Fictitious => &mut sum.fictitious,
                        PathClass::TrulySelective => &mut sum.truly_selective,
                    };
                    *slot = slot.saturating_add(c);
                    if !fict && !hit {
                        line_relevant = true;
                        sum.relevant = sum.relevant.saturating_add(c);
                        if matches!(class, PathClass::Neutral | PathClass::AlmostNeutral) {
                            sum.immune = sum.immune.saturating_add(c);
                        }
                    }
                }
            }
        }
        if line_relevant {
            sum.relevant_lines.push(line);
        }
    }
    sum
}

fn classify_phase(ph: Phase, fict: bool) -> PathClass {
    if fict {
        return PathClass::Fictitious;
    }
    match ph {
        Phase::Neutral => PathClass::Neutral,
        Phase::Open0 => PathClass::AlmostNeutral,
        Phase::OpenNone => PathClass::TrulySelective,
        Phase::Open1 => PathClass::Fictitious,
    }
}

#[derive(Clone, Copy)]
enum Mark {
    Used(usize),
    Continued(usize),
    Mutation(u8),
}

/// Lists every path with its class, relevance and immunity, straight from
/// the definitions: the first mutation after each followed selective arrow
/// decides the class; a path is irrelevant if it is fictitious or if an
/// almost neutral path follows a selective arrow that the path continues
/// past; immune paths are the relevant neutral and almost neutral ones.
///
/// Fails with `PathExplosion` when there are more than `cap` paths.
pub fn classify_paths(real: &AsgRealisation, cap: u128) -> Result<Vec<PathRecord>> {
    let count = summarize_paths(real).total;
    if count > cap {
        return Err(Error::PathExplosion { count, cap });
    }
    // first pass: arrows followed by almost neutral paths
    let mut hit_points = HashSet::new();
    for &m in &real.sample {
        let mut marks = Vec::new();
        walk_paths(real, 0, m, &mut marks, &mut |_, marks| {
            if classify_marks(marks) == PathClass::AlmostNeutral {
                for mk in marks {
                    if let Mark::Used(e) = mk {
                        hit_points.insert(*e);
                    }
                }
            }
        });
    }
    let mut out = Vec::new();
    for &m in &real.sample {
        let mut marks = Vec::new();
        walk_paths(real, 0, m, &mut marks, &mut |end, marks| {
            let class = classify_marks(marks);
            let hit = marks
                .iter()
                .any(|mk| matches!(mk, Mark::Continued(e) if hit_points.contains(e)));
            let relevant = class != PathClass::Fictitious && !hit;
            out.push(PathRecord {
                start_line: m,
                final_line: end,
                class,
                relevant,
                immune: relevant && matches!(class, PathClass::Neutral | PathClass::AlmostNeutral),
                used_arrows: marks
                    .iter()
                    .filter_map(|mk| match mk {
                        Mark::Used(e) => Some(*e),
                        _ => None,
                    })
                    .collect(),
            });
        });
    }
    Ok(out)
}

fn walk_paths(
    real: &AsgRealisation,
    from: usize,
    mut line: usize,
    marks: &mut Vec<Mark>,
    leaf: &mut dyn FnMut(usize, &[Mark]),
) {
    let depth = marks.len();
    for e in from..real.events.len() {
        match real.events[e].kind {
            EventKind::Selective { src, dst } if dst == line => {
                marks.push(Mark::Continued(e));
                walk_paths(real, e + 1, line, marks, leaf);
                marks.pop();
                marks.push(Mark::Used(e));
                line = src;
            }
            EventKind::Neutral { src, dst } if dst == line => line = src,
            EventKind::Mut0 { line: l } if l == line => marks.push(Mark::Mutation(0)),
            EventKind::Mut1 { line: l } if l == line => marks.push(Mark::Mutation(1)),
            _ => {}
        }
    }
    leaf(line, marks);
    marks.truncate(depth);
}

fn classify_marks(marks: &[Mark]) -> PathClass {
    let used: Vec<usize> = marks
        .iter()
        .enumerate()
        .filter(|(_, m)| matches!(m, Mark::Used(_)))
        .map(|(i, _)| i)
        .collect();
    if used.is_empty() {
        return PathClass::Neutral;
    }
    let mut last_has_mutation = false;
    for (w, &start) in used.iter().enumerate() {
        let end = used.get(w + 1).copied().unwrap_or(marks.len());
        let first = marks[start + 1..end].iter().find_map(|m| match m {
            Mark::Mutation(t) => Some(*t),
            _ => None,
        });
        if first == Some(1) {
            return PathClass::Fictitious;
        }
        last_has_mutation = first.is_some();
    }
    if last_has_mutation {
        PathClass::AlmostNeutral
    } else {
        PathClass::TrulySelective
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicas: u64,
}

impl Estimate {
    pub(crate) fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            estimate: mean,
            std_error: (var / n).sqrt(),
            replicas: xs.len() as u64,
        }
    }
}

/// Event cap per replica of the forward estimator.
pub const FORWARD_EVENT_CAP: u64 = 10_000_000;

fn check_mc(params: &ModelParams, k: usize, replicas: u64) -> Result<()> {
    if k > params.n() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds N = {}",
            params.n()
        )));
    }
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    Ok(())
}

fn random_types(n: usize, k: usize, rng: &mut Stream) -> Vec<u8> {
    let mut types = vec![1u8; n];
    types[..k].iter_mut().for_each(|t| *t = 0);
    types.shuffle(rng);
    types
}

/// Forward estimate of `h_k`: run the Moran model from `k` type-0
/// individuals placed uniformly at random, tracking which initial
/// individual every current one descends from, until one initial
/// individual's descendants fill the population; score its initial type.
pub fn estimate_h_forward(
    params: &ModelParams,
    k: usize,
    replicas: u64,
    seed: u64,
) -> Result<Estimate> {
    check_mc(params, k, replicas)?;
    let xs: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| forward_replica(params, k, seed, r))
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&xs))
}

fn forward_replica(params: &ModelParams, k: usize, seed: u64, replica: u64) -> Result<f64> {
    let n = params.n();
    let mut rng = rng::stream(seed, replica);
    let initial = random_types(n, k, &mut rng);
    if n == 1 {
        return Ok(if initial[0] == 0 { 1.0 } else { 0.0 });
    }
    let mut ty = initial.clone();
    let mut founder: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut founders_left = n;
    let mut zeros = k;
    let nf = n as f64;
    let (s, u, nu0) = (params.s(), params.u(), params.nu0());
    let mut events = 0u64;
    while founders_left > 1 {
        events += 1;
        if events > FORWARD_EVENT_CAP {
            return Err(Error::ReplicaTimeout {
                replica,
                cap: FORWARD_EVENT_CAP,
            });
        }
        // neutral reproduction, selective reproduction, mutation
        let rates = [nf - 1.0, zeros as f64 * (nf - 1.0) * s / nf, nf * u];
        let total: f64 = rates.iter().sum();
        // waiting times do not affect the absorbed state
        let which = rng::categorical(&mut rng, &rates, total);
        if which == 2 {
            let i = rng.random_range(0..n);
            let t = if rng.random::<f64>() < nu0 { 0 } else { 1 };
            if ty[i] != t {
                if t == 0 {
                    zeros += 1;
                } else {
                    zeros -= 1;
                }
                ty[i] = t;
            }
            continue;
        }
        let parent = if which == 0 {
            rng.random_range(0..n)
        } else {
            // uniform among type-0 individuals
            let mut r = rng.random_range(0..zeros);
            let mut p = 0;
            loop {
                if ty[p] == 0 {
                    if r == 0 {
                        break p;
                    }
                    r -= 1;
                }
                p += 1;
            }
        };
        let child = loop {
            let c = rng.random_range(0..n);
            if c != parent {
                break c;
            }
        };
        if ty[child] == 0 {
            zeros -= 1;
        }
        if ty[parent] == 0 {
            zeros += 1;
        }
        ty[child] = ty[parent];
        let (old, new) = (founder[child], founder[parent]);
        if old != new {
            size[old] -= 1;
            if size[old] == 0 {
                founders_left -= 1;
            }
            size[new] += 1;
            founder[child] = new;
        }
    }
    let ca = founder[0];
    Ok(if initial[ca] == 0 { 1.0 } else { 0.0 })
}

/// Horizon used by [`estimate_h_asg`] when none is given.
pub fn default_horizon(params: &ModelParams) -> f64 {
    if params.u() > 0.0 {
        10.0 / params.u().min(1.0)
    } else if params.s() > 0.0 {
        10.0 / params.s().min(1.0)
    } else {
        10.0
    }
}

/// Backward estimate of `h_k`: run the potential ancestors of one line to
/// `horizon`, place `k` zeros uniformly among the population at the
/// horizon and score the type of the resolved ancestor.
pub fn estimate_h_asg(
    params: &ModelParams,
    k: usize,
    horizon: f64,
    replicas: u64,
    seed: u64,
) -> Result<Estimate> {
    check_mc(params, k, replicas)?;
    check_horizon(horizon)?;
    let xs: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r);
            let real = lean_realisation(params, horizon, &mut rng);
            let types = random_types(params.n(), k, &mut rng);
            f64::from(resolve_genealogy(&real, &types).ancestor_type == 0)
        })
        .collect();
    Ok(Estimate::from_samples(&xs))
}

/// Run from line 1 without relocations that keeps only the final active
/// set, enough for genealogies and relevant lines.
fn lean_realisation(params: &ModelParams, horizon: f64, rng: &mut Stream) -> AsgRealisation {
    let (events, _, set) = simulate_events(params, &[1], horizon, rng, true, false);
    AsgRealisation {
        params: *params,
        sample: vec![1],
        horizon,
        events,
        active: vec![set.sorted()],
    }
}

/// Empirical tails `P(R > n)`, `n = 0..N-1`, of the number of relevant
/// lines at `horizon`, counted by [`summarize_paths`], over independent runs from line 1; replica `r` uses
/// stream `r` of `seed`.
pub fn relevant_line_tails(
    params: &ModelParams,
    horizon: f64,
    replicas: u64,
    seed: u64,
) -> Result<Vec<Estimate>> {
    check_horizon(horizon)?;
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    let counts: Vec<usize> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r);
            summarize_paths(&lean_realisation(params, horizon, &mut rng))
                .relevant_lines
                .len()
        })
        .collect();
    Ok((0..params.n())
        .map(|n| {
            let xs: Vec<f64> = counts.iter().map(|&c| f64::from(c > n)).collect();
            Estimate::from_samples(&xs)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::conditioned_binomial;

    fn base(n: usize) -> ModelParams {
        ModelParams::new(n, 1.0, 1.0, 0.5).unwrap()
    }

    fn ev(time: f64, kind: EventKind) -> AsgEvent {
        AsgEvent { time, kind }
    }

    #[test]
    fn neutral_singleton_stays_single() {
        let p = ModelParams::new(6, 0.0, 0.0, 0.5).unwrap();
        let r = simulate_asg(&p, &[1], 50.0, 3, true).unwrap();
        assert!(r.events.is_empty());
        assert!(r.active.iter().all(|a| a.len() == 1));
        let r = simulate_asg(&p, &[1], 50.0, 3, false).unwrap();
        assert!(r.active.iter().all(|a| a.len() == 1));
        assert!(!r.events.is_empty());
    }

    #[test]
    fn active_set_rules_hold() {
        let r = simulate_asg(&base(6), &[1, 2, 3, 4, 5, 6], 20.0, 11, false).unwrap();
        for (e, ev) in r.events.iter().enumerate() {
            let (before, after) = (&r.active[e], &r.active[e + 1]);
            let has = |a: &Vec<usize>, l: usize| a.binary_search(&l).is_ok();
            match ev.kind {
                EventKind::Selective { src, dst } => {
                    assert!(has(before, dst));
                    let grow = usize::from(!has(before, src));
                    assert_eq!(after.len(), before.len() + grow);
                }
                EventKind::Neutral { src, dst } => {
                    assert!(has(before, dst) && !has(after, dst) && has(after, src));
                    let shrink = usize::from(has(before, src));
                    assert_eq!(after.len() + shrink, before.len());
                }
                EventKind::Mut0 { line } | EventKind::Mut1 { line } => {
                    assert!(has(before, line));
                    assert_eq!(before, after);
                }
            }
            assert!(!after.is_empty() && after.len() <= 6);
        }
        let log = r.to_event_log();
        assert_eq!(log.lines().count(), r.events.len());
    }

    #[test]
    fn bottleneck_reached() {
        for seed in 0..50 {
            let r = simulate_asg(&base(5), &[1, 2, 3, 4, 5], 200.0, seed, true).unwrap();
            assert!(r.bottleneck().is_some(), "seed {seed}");
        }
    }

    #[test]
    fn from_events_rejects_ties_and_bad_arrows() {
        let p = base(4);
        let evs = vec![
            ev(1.0, EventKind::Selective { src: 2, dst: 1 }),
            ev(1.0, EventKind::Mut0 { line: 1 }),
        ];
        assert_eq!(
            AsgRealisation::from_events(&p, &[1], 5.0, evs),
            Err(Error::CoincidentEvents { index: 1 })
        );
        let evs = vec![ev(1.0, EventKind::Selective { src: 2, dst: 3 })];
        assert!(AsgRealisation::from_events(&p, &[1], 5.0, evs).is_err());
    }

    #[test]
    fn genealogy_examples() {
        let p = base(4);
        let r = AsgRealisation::from_events(
            &p,
            &[1],
            3.0,
            vec![ev(1.0, EventKind::Selective { src: 2, dst: 1 })],
        )
        .unwrap();
        let g = resolve_genealogy(&r, &[1, 0, 1, 1]);
        assert_eq!(
            g,
            GenealogyResult {
                ancestor_line: 2,
                ancestor_type: 0
            }
        );
        let g = resolve_genealogy(&r, &[0, 1, 1, 1]);
        assert_eq!(g.ancestor_line, 1);
        // a type-0 mutation on the incoming branch forces it
        let r = AsgRealisation::from_events(
            &p,
            &[1],
            3.0,
            vec![
                ev(1.0, EventKind::Selective { src: 2, dst: 1 }),
                ev(2.0, EventKind::Mut0 { line: 2 }),
            ],
        )
        .unwrap();
        assert_eq!(resolve_genealogy(&r, &[0, 1, 1, 1]).ancestor_line, 2);
        assert_eq!(relevant_lines(&r).unwrap(), vec![2]);
    }

    #[test]
    fn uniform_types_decide_ancestor_type() {
        for seed in 0..30 {
            let r = simulate_asg(&base(5), &[1], 30.0, seed, true).unwrap();
            if !r
                .events
                .iter()
                .any(|e| matches!(e.kind, EventKind::Mut0 { .. }))
            {
                assert_eq!(resolve_genealogy(&r, &[1; 5]).ancestor_type, 1);
            }
            assert_eq!(resolve_genealogy(&r, &[0; 5]).ancestor_type, 0);
            let immune = resolve_genealogy(&r, &[1; 5]).ancestor_line;
            assert!(relevant_lines(&r).unwrap().contains(&immune));
        }
    }

    #[test]
    fn no_selection_means_one_relevant_line() {
        let p = ModelParams::new(5, 0.0, 1.0, 0.5).unwrap();
        let r = simulate_asg(&p, &[1], 30.0, 4, true).unwrap();
        assert_eq!(relevant_lines(&r).unwrap().len(), 1);
        let paths = classify_paths(&r, DEFAULT_PATH_CAP).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].class, PathClass::Neutral);
        assert!(paths[0].relevant && paths[0].immune);
    }

    #[test]
    fn fictitious_path_example() {
        let p = base(4);
        let r = AsgRealisation::from_events(
            &p,
            &[1],
            3.0,
            vec![
                ev(1.0, EventKind::Selective { src: 2, dst: 1 }),
                ev(2.0, EventKind::Mut1 { line: 2 }),
            ],
        )
        .unwrap();
        let paths = classify_paths(&r, DEFAULT_PATH_CAP).unwrap();
        let used: Vec<_> = paths.iter().filter(|p| p.final_line == 2).collect();
        assert_eq!(used.len(), 1);
        assert_eq!(used[0].class, PathClass::Fictitious);
        assert!(!used[0].relevant);
        assert_eq!(relevant_lines(&r).unwrap(), vec![1]);
    }

    #[test]
    fn path_cap_is_enforced() {
        let r = simulate_asg(&base(5), &[1], 30.0, 8, true).unwrap();
        let total = summarize_paths(&r).total;
        if total > 1 {
            assert!(matches!(
                classify_paths(&r, total - 1),
                Err(Error::PathExplosion { .. })
            ));
        }
    }

    #[test]
    fn line_count_examples() {
        let r = line_count_rates(&ModelParams::new(4, 2.0, 0.0, 0.5).unwrap());
        assert_eq!(r.up(2), 2.0);
        assert_eq!(r.down(2), 0.5);
        assert_eq!(r.down(1), 0.0);
        assert_eq!(r.up(4), 0.0);
        let two = stationary_line_count(&ModelParams::new(2, 1.0, 0.0, 0.5).unwrap()).unwrap();
        assert!((two.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        let three = stationary_line_count(&ModelParams::new(3, 1.0, 0.0, 0.5).unwrap()).unwrap();
        for (w, e) in three.weights.iter().zip([3.0 / 7.0, 3.0 / 7.0, 1.0 / 7.0]) {
            assert!((w - e).abs() < 1e-15);
        }
        let one = stationary_line_count(&ModelParams::new(1, 1.0, 0.0, 0.5).unwrap()).unwrap();
        assert_eq!(one.weights, vec![1.0]);
        let neutral = ModelParams::new(3, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(
            stationary_line_count(&neutral),
            Err(Error::SelectionRequired)
        );
    }

    #[test]
    fn line_count_law_is_conditioned_binomial() {
        for &(n, s) in &[(2usize, 1.0f64), (7, 0.4), (30, 2.0), (200, 1.0)] {
            let p = ModelParams::new(n, s, 0.3, 0.5).unwrap();
            let a = stationary_line_count(&p).unwrap();
            let b = conditioned_binomial(n, s / (1.0 + s));
            let diff = a
                .weights
                .iter()
                .zip(&b.weights)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "{n} {s} {diff}");
        }
    }

    #[test]
    fn mc_boundaries_are_exact() {
        let p = base(4);
        let f0 = estimate_h_forward(&p, 0, 200, 1).unwrap();
        assert_eq!((f0.estimate, f0.std_error), (0.0, 0.0));
        let f4 = estimate_h_forward(&p, 4, 200, 1).unwrap();
        assert_eq!(f4.estimate, 1.0);
        let a0 = estimate_h_asg(&p, 0, 10.0, 200, 1).unwrap();
        assert_eq!(a0.estimate, 0.0);
    }

    #[test]
    fn mc_is_deterministic() {
        let p = base(4);
        assert_eq!(
            estimate_h_forward(&p, 2, 500, 9).unwrap(),
            estimate_h_forward(&p, 2, 500, 9).unwrap()
        );
        assert_eq!(
            estimate_h_asg(&p, 2, 10.0, 500, 9).unwrap(),
            estimate_h_asg(&p, 2, 10.0, 500, 9).unwrap()
        );
    }
}
