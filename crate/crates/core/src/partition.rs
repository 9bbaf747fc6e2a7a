//! Adaptive dyadic partition of `[0, 1]^d` with per-cube reward estimates.
//!
//! The partition starts as the single level-0 cube. Every context arrival is
//! counted against the active cube containing it; once a level-`l` cube has
//! seen `A·2^(p·l)` arrivals it is deactivated and its `2^d` level-`l+1`
//! children become active with fresh statistics. Deactivated cubes are kept
//! in the arena: forecasts located in a cube before it split still deliver
//! their reward updates to that cube.
//!
//! Cubes are half-open boxes `Π [c_i·2^-l, (c_i+1)·2^-l)`, except that the
//! coordinate value `1.0` belongs to the last cube along its axis.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{ContextVector, ForecastAction, PopularityStatus};

const NO_CHILD: u32 = u32::MAX;

/// The actions available to one learner: every status, plus `Wait` unless
/// the learner serves the horizon age.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSet {
    statuses: usize,
    wait: bool,
}

impl ActionSet {
    pub fn new(statuses: usize, wait: bool) -> Self {
        ActionSet { statuses, wait }
    }

    pub fn statuses(&self) -> usize {
        self.statuses
    }

    pub fn has_wait(&self) -> bool {
        self.wait
    }

    pub fn len(&self) -> usize {
        self.statuses + usize::from(self.wait)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Action at canonical position `i`.
    pub fn action(&self, i: usize) -> ForecastAction {
        if i < self.statuses {
            ForecastAction::Predict(PopularityStatus(i))
        } else {
            ForecastAction::Wait
        }
    }

    pub fn index(&self, a: ForecastAction) -> Option<usize> {
        match a {
            ForecastAction::Predict(s) if s.0 < self.statuses => Some(s.0),
            ForecastAction::Wait if self.wait => Some(self.statuses),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ForecastAction> + '_ {
        (0..self.len()).map(|i| self.action(i))
    }
}

/// Handle to a cube record inside a [`PartitionState`]. Handles stay valid
/// after the cube splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeId(u32);

impl CubeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[cfg(test)]
    pub(crate) fn from_test(i: u32) -> Self {
        CubeId(i)
    }
}

/// A dyadic cube: level `l` and integer coordinates in `0..2^l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hypercube {
    pub level: u32,
    pub coords: Vec<u32>,
}

impl Hypercube {
    pub fn root(dim: usize) -> Self {
        Hypercube {
            level: 0,
            coords: vec![0; dim],
        }
    }

    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// The cube of the given level containing `x` (closure rule at 1.0).
    pub fn containing(x: &[f64], level: u32) -> Self {
        Hypercube {
            level,
            coords: x.iter().map(|&v| cell_index(v, level)).collect(),
        }
    }

    /// Geometric containment test, written against interval bounds rather
    /// than cell indices.
    pub fn contains(&self, x: &[f64]) -> bool {
        let side = self.side();
        x.len() == self.coords.len()
            && self.coords.iter().zip(x).all(|(&c, &v)| {
                let lo = c as f64 * side;
                let hi = (c as f64 + 1.0) * side;
                lo <= v && (v < hi || (v == 1.0 && hi == 1.0))
            })
    }

    pub fn center(&self) -> Vec<f64> {
        let side = self.side();
        self.coords
            .iter()
            .map(|&c| (c as f64 + 0.5) * side)
            .collect()
    }

    pub fn parent(&self) -> Option<Hypercube> {
        (self.level > 0).then(|| Hypercube {
            level: self.level - 1,
            coords: self.coords.iter().map(|c| c >> 1).collect(),
        })
    }

    /// Children in canonical order: bit `i` of the child index selects the
    /// upper half along axis `i`.
    pub fn children(&self) -> Vec<Hypercube> {
        let d = self.coords.len();
        (0..1usize << d)
            .map(|j| Hypercube {
                level: self.level + 1,
                coords: self
                    .coords
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| 2 * c + ((j >> i) & 1) as u32)
                    .collect(),
            })
            .collect()
    }
}

fn cell_index(v: f64, level: u32) -> u32 {
    let cells = 1u64 << level;
    // Scaling by a power of two is exact.
    let idx = (v * cells as f64).floor() as u64;
    idx.min(cells - 1) as u32
}

/// Running statistics of one action inside one cube.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActionStat {
    pub count: u64,
    pub mean: f64,
}

/// Snapshot of a cube's counters.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeStats {
    pub arrivals: u64,
    pub actions: Vec<ActionStat>,
}

/// Split parameters of the partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRule {
    /// `A`, the arrival scale.
    pub scale: f64,
    /// `p`, the per-level exponent.
    pub exponent: f64,
}

impl SplitRule {
    pub fn new(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!(
                "split scale A must be > 0, got {scale}"
            )));
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::Config(format!(
                "split exponent p must be > 0, got {exponent}"
            )));
        }
        Ok(SplitRule { scale, exponent })
    }

    /// Arrival count `A·2^(p·l)` at which a level-`l` cube splits.
    pub fn threshold(&self, level: u32) -> f64 {
        self.scale * (self.exponent * level as f64).exp2()
    }
}

/// Exponent `p = (3α + sqrt(9α² + 8αd)) / 2` that balances the regret terms
/// under uniformly spread arrivals.
pub fn worst_case_exponent(alpha: f64, dim: usize) -> f64 {
    let d = dim as f64;
    (3.0 * alpha + (9.0 * alpha * alpha + 8.0 * alpha * d).sqrt()) / 2.0
}

/// Exponent `p = 3α` for arrivals concentrated in a single small cube.
pub fn best_case_exponent(alpha: f64) -> f64 {
    3.0 * alpha
}

/// Regret growth exponent guaranteed with [`worst_case_exponent`].
pub fn worst_case_regret_exponent(alpha: f64, dim: usize) -> f64 {
    let d = dim as f64;
    let root = (9.0 * alpha * alpha + 8.0 * alpha * d).sqrt() / 2.0;
    (d + alpha / 2.0 + root) / (d + 1.5 * alpha + root)
}

/// Dyadic partition state for one context space.
#[derive(Debug, Clone)]
pub struct PartitionState {
    dim: usize,
    rule: SplitRule,
    actions: ActionSet,
    levels: Vec<u32>,
    coords: Vec<u32>,
    arrivals: Vec<u64>,
    first_child: Vec<u32>,
    stats: Vec<ActionStat>,
    thresholds: Vec<f64>,
    instances: u64,
    active: usize,
    max_active_level: u32,
}

impl PartitionState {
    pub fn new(dim: usize, rule: SplitRule, actions: ActionSet) -> Result<Self> {
        if dim == 0 || dim > 16 {
            return Err(Error::Config(format!(
                "context dimension must be in 1..=16, got {dim}"
            )));
        }
        if actions.is_empty() {
            return Err(Error::Config("empty action set".into()));
        }
        let mut state = PartitionState {
            dim,
            rule,
            actions,
            levels: Vec::new(),
            coords: Vec::new(),
            arrivals: Vec::new(),
            first_child: Vec::new(),
            stats: Vec::new(),
            thresholds: Vec::new(),
            instances: 0,
            active: 0,
            max_active_level: 0,
        };
        state.push_cube(0, &vec![0; dim]);
        state.active = 1;
        Ok(state)
    }

    fn push_cube(&mut self, level: u32, coords: &[u32]) -> CubeId {
        let id = CubeId(self.levels.len() as u32);
        self.levels.push(level);
        self.coords.extend_from_slice(coords);
        self.arrivals.push(0);
        self.first_child.push(NO_CHILD);
        self.stats.extend(std::iter::repeat_n(
            ActionStat::default(),
            self.actions.len(),
        ));
        id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rule(&self) -> SplitRule {
        self.rule
    }

    pub fn actions(&self) -> ActionSet {
        self.actions
    }

    /// Total arrivals registered so far (the instance counter `k`).
    pub fn instances(&self) -> u64 {
        self.instances
    }

    /// Number of cube records, active or retired.
    pub fn num_cubes(&self) -> usize {
        self.levels.len()
    }

    pub fn num_active(&self) -> usize {
        self.active
    }

    pub fn max_active_level(&self) -> u32 {
        self.max_active_level
    }

    pub fn is_active(&self, id: CubeId) -> bool {
        self.first_child[id.index()] == NO_CHILD
    }

    pub fn cube(&self, id: CubeId) -> Hypercube {
        let i = id.index();
        Hypercube {
            level: self.levels[i],
            coords: self.coords[i * self.dim..(i + 1) * self.dim].to_vec(),
        }
    }

    pub fn level(&self, id: CubeId) -> u32 {
        self.levels[id.index()]
    }

    pub fn arrivals(&self, id: CubeId) -> u64 {
        self.arrivals[id.index()]
    }

    pub fn stats(&self, id: CubeId) -> CubeStats {
        CubeStats {
            arrivals: self.arrivals[id.index()],
            actions: self.action_stats(id).to_vec(),
        }
    }

    pub fn action_stats(&self, id: CubeId) -> &[ActionStat] {
        let n = self.actions.len();
        &self.stats[id.index() * n..(id.index() + 1) * n]
    }

    pub fn threshold(&mut self, level: u32) -> f64 {
        while self.thresholds.len() <= level as usize {
            let l = self.thresholds.len() as u32;
            self.thresholds.push(self.rule.threshold(l));
        }
        self.thresholds[level as usize]
    }

    /// Ids of the currently active cubes, in arena order.
    pub fn active_cubes(&self) -> impl Iterator<Item = CubeId> + '_ {
        (0..self.levels.len() as u32)
            .map(CubeId)
            .filter(|&id| self.is_active(id))
    }

    /// The active cube containing `x`.
    pub fn locate(&self, x: &ContextVector) -> Result<CubeId> {
        self.locate_coords(x.coords())
    }

    pub fn locate_coords(&self, x: &[f64]) -> Result<CubeId> {
        if x.len() != self.dim {
            return Err(Error::Contract(format!(
                "context has dimension {}, partition expects {}",
                x.len(),
                self.dim
            )));
        }
        let mut id = 0usize;
        let mut level = 0u32;
        while self.first_child[id] != NO_CHILD {
            level += 1;
            let child = x.iter().enumerate().fold(0usize, |acc, (i, &v)| {
                acc | (((cell_index(v, level) & 1) as usize) << i)
            });
            id = self.first_child[id] as usize + child;
        }
        Ok(CubeId(id as u32))
    }

    /// Counts one arrival in an active cube, splitting it when the count
    /// reaches the level threshold. Returns whether a split happened.
    pub fn register_arrival(&mut self, id: CubeId) -> Result<bool> {
        let i = id.index();
        if i >= self.levels.len() || !self.is_active(id) {
            return Err(Error::StaleHandle(id.0));
        }
        self.instances += 1;
        self.arrivals[i] += 1;
        let level = self.levels[i];
        if (self.arrivals[i] as f64) < self.threshold(level) {
            return Ok(false);
        }
        let parent = self.cube(id);
        let first = self.levels.len() as u32;
        for child in parent.children() {
            self.push_cube(child.level, &child.coords);
        }
        self.first_child[i] = first;
        self.active += (1 << self.dim) - 1;
        self.max_active_level = self.max_active_level.max(level + 1);
        Ok(true)
    }

    /// Folds `reward` into the running mean of `action` in cube `id`.
    pub fn update_estimate(
        &mut self,
        id: CubeId,
        action: ForecastAction,
        reward: f64,
    ) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::Numeric(format!("reward {reward} outside [0, 1]")));
        }
        let a = self
            .actions
            .index(action)
            .ok_or_else(|| Error::Contract(format!("action {action} not available")))?;
        if id.index() >= self.levels.len() {
            return Err(Error::StaleHandle(id.0));
        }
        let stat = &mut self.stats[id.index() * self.actions.len() + a];
        stat.count += 1;
        stat.mean += (reward - stat.mean) / stat.count as f64;
        Ok(())
    }

    /// Action with the highest estimate; ties go to the earliest action in
    /// canonical order.
    pub fn best_action(&self, id: CubeId) -> ForecastAction {
        let stats = self.action_stats(id);
        let mut best = 0;
        for (i, s) in stats.iter().enumerate().skip(1) {
            if s.mean > stats[best].mean {
                best = i;
            }
        }
        self.actions.action(best)
    }

    /// Writes every cube record (active and retired) as CSV.
    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "level".to_string(),
            "active".to_string(),
            "coords".to_string(),
            "arrivals".to_string(),
        ];
        for a in self.actions.iter() {
            header.push(format!("m_{a}"));
            header.push(format!("mean_{a}"));
        }
        w.write_record(&header).map_err(csv_io)?;
        for i in 0..self.levels.len() {
            let id = CubeId(i as u32);
            let cube = self.cube(id);
            let mut rec = vec![
                cube.level.to_string(),
                u8::from(self.is_active(id)).to_string(),
                join_coords(&cube.coords),
                self.arrivals[i].to_string(),
            ];
            for s in self.action_stats(id) {
                rec.push(s.count.to_string());
                rec.push(s.mean.to_string());
            }
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush().map_err(|e| Error::io("<snapshot>", e))?;
        Ok(())
    }

    /// Rebuilds a partition from [`write_snapshot`](Self::write_snapshot) output.
    pub fn read_snapshot<R: Read>(
        input: R,
        source: &str,
        dim: usize,
        rule: SplitRule,
        actions: ActionSet,
    ) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let expected_cols = 4 + 2 * actions.len();
        let mut records: HashMap<Hypercube, (bool, u64, Vec<ActionStat>)> = HashMap::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row as u64 + 2;
            let rec = rec.map_err(|e| Error::parse(source, line, e.to_string()))?;
            if rec.len() != expected_cols {
                return Err(Error::parse(
                    source,
                    line,
                    format!("expected {expected_cols} columns, found {}", rec.len()),
                ));
            }
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<u64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::parse(source, line, format!("bad integer {:?}", field(i))))
            };
            let level = num(0)? as u32;
            let active = match field(1) {
                "1" => true,
                "0" => false,
                other => return Err(Error::parse(source, line, format!("bad flag {other:?}"))),
            };
            let coords = field(2)
                .split(':')
                .map(|c| c.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::parse(source, line, "bad coordinates"))?;
            if coords.len() != dim
                || level > 31
                || coords.iter().any(|&c| c >= (1u32 << level).max(1))
            {
                return Err(Error::parse(
                    source,
                    line,
                    "coordinates do not match level/dimension",
                ));
            }
            let arrivals = num(3)?;
            let mut stats = Vec::with_capacity(actions.len());
            for a in 0..actions.len() {
                let count = num(4 + 2 * a)?;
                let mean: f64 = field(5 + 2 * a)
                    .parse()
                    .map_err(|_| Error::parse(source, line, "bad mean"))?;
                if !(0.0..=1.0).contains(&mean) {
                    return Err(Error::parse(source, line, "mean outside [0, 1]"));
                }
                stats.push(ActionStat { count, mean });
            }
            if records
                .insert(Hypercube { level, coords }, (active, arrivals, stats))
                .is_some()
            {
                return Err(Error::parse(source, line, "duplicate cube"));
            }
        }

        let mut state = PartitionState::new(dim, rule, actions)?;
        let mut instances = 0u64;
        let mut next = 0usize;
        let mut used = 0usize;
        while next < state.levels.len() {
            let id = CubeId(next as u32);
            let cube = state.cube(id);
            let (active, arrivals, stats) = records
                .get(&cube)
                .ok_or_else(|| Error::parse(source, 0, format!("missing cube {:?}", cube)))?;
            used += 1;
            instances += arrivals;
            state.arrivals[next] = *arrivals;
            let n = actions.len();
            state.stats[next * n..(next + 1) * n].copy_from_slice(stats);
            if !active {
                let first = state.levels.len() as u32;
                for child in cube.children() {
                    state.push_cube(child.level, &child.coords);
                }
                state.first_child[next] = first;
                state.active += (1 << dim) - 1;
                state.max_active_level = state.max_active_level.max(cube.level + 1);
            }
            next += 1;
        }
        if used != records.len() {
            return Err(Error::parse(
                source,
                0,
                "snapshot holds cubes outside the tree",
            ));
        }
        state.instances = instances;
        Ok(state)
    }
}

fn join_coords(c: &[u32]) -> String {
    c.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(":")
}

fn csv_io(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e))
}
