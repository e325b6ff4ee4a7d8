//! Hypercubes over the fact table and the four navigation operations.
//!
//! Members are hierarchical paths so a cube can be coarsened without going
//! back to the store: time members are `2004`, `2004-12`, `2004-12-26`;
//! geography members are `11` (province) and `11/1171` (regency); magnitude
//! members are band labels. Rolling up truncates the path.
//!
//! A cube remembers the member restrictions that produced it (its scope),
//! which is what lets `drill_down` rebuild exactly the facts behind it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{FactRow, Warehouse, WarehouseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Time,
    Geography,
    Magnitude,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Time, Dimension::Geography, Dimension::Magnitude];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Time => "time",
            Dimension::Geography => "geography",
            Dimension::Magnitude => "magnitude",
        }
    }

    /// Levels ordered coarse to fine.
    pub fn levels(self) -> &'static [Level] {
        match self {
            Dimension::Time => &[Level::Year, Level::Month, Level::Day],
            Dimension::Geography => &[Level::Province, Level::Regency],
            Dimension::Magnitude => &[Level::Band],
        }
    }

    pub fn coarsest(self) -> Level {
        self.levels()[0]
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = WarehouseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name() == s.trim())
            .ok_or_else(|| WarehouseError::UnknownDimension(s.trim().to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Year,
    Month,
    Day,
    Province,
    Regency,
    Band,
}

impl Level {
    pub const ALL: [Level; 6] = [
        Level::Year,
        Level::Month,
        Level::Day,
        Level::Province,
        Level::Regency,
        Level::Band,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Level::Year => "year",
            Level::Month => "month",
            Level::Day => "day",
            Level::Province => "province",
            Level::Regency => "regency",
            Level::Band => "band",
        }
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Level::Year | Level::Month | Level::Day => Dimension::Time,
            Level::Province | Level::Regency => Dimension::Geography,
            Level::Band => Dimension::Magnitude,
        }
    }

    fn position(self) -> usize {
        self.dimension()
            .levels()
            .iter()
            .position(|l| *l == self)
            .expect("level belongs to its dimension")
    }

    pub fn coarser(self) -> Option<Level> {
        let i = self.position();
        (i > 0).then(|| self.dimension().levels()[i - 1])
    }

    pub fn finer(self) -> Option<Level> {
        self.dimension().levels().get(self.position() + 1).copied()
    }

    /// Syntactic check that `member` can be a coordinate at this level.
    pub fn check_member(self, member: &str) -> Result<(), WarehouseError> {
        let ok = match self {
            Level::Year => member.len() == 4 && member.bytes().all(|b| b.is_ascii_digit()),
            Level::Month => {
                member.len() == 7
                    && NaiveDate::parse_from_str(&format!("{member}-01"), "%Y-%m-%d").is_ok()
            }
            Level::Day => {
                member.len() == 10 && NaiveDate::parse_from_str(member, "%Y-%m-%d").is_ok()
            }
            Level::Province => !member.is_empty() && !member.contains('/'),
            Level::Regency => member
                .split_once('/')
                .is_some_and(|(p, r)| !p.is_empty() && !r.is_empty() && !r.contains('/')),
            Level::Band => !member.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(WarehouseError::UnknownMember(format!(
                "{}={member}",
                self.name()
            )))
        }
    }

    /// The member one level up that contains `member`.
    fn parent_member(self, member: &str) -> String {
        match self {
            Level::Month => member[..4].to_owned(),
            Level::Day => member[..7].to_owned(),
            Level::Regency => member.split_once('/').map_or(member, |(p, _)| p).to_owned(),
            Level::Year | Level::Province | Level::Band => member.to_owned(),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Level {
    type Err = WarehouseError;

    /// Accepts a level name, or a dimension name meaning its coarsest level.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(level) = Level::ALL.into_iter().find(|l| l.name() == s) {
            return Ok(level);
        }
        s.parse::<Dimension>().map(Dimension::coarsest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Axis {
    pub dimension: Dimension,
    pub level: Level,
}

impl Axis {
    pub fn new(level: Level) -> Self {
        Axis {
            dimension: level.dimension(),
            level,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dimension, self.level)
    }
}

impl FromStr for Axis {
    type Err = WarehouseError;

    /// `dimension:level`, a bare level name, or a bare dimension name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().split_once(':') {
            Some((d, l)) => {
                let dimension: Dimension = d.parse()?;
                let level = dimension
                    .levels()
                    .iter()
                    .copied()
                    .find(|lv| lv.name() == l.trim())
                    .ok_or_else(|| {
                        WarehouseError::UnknownLevel(format!("{dimension}:{}", l.trim()))
                    })?;
                Ok(Axis::new(level))
            }
            None => s.parse::<Level>().map(Axis::new),
        }
    }
}

/// A restriction to a set of members at one level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberFilter {
    pub level: Level,
    pub members: BTreeSet<String>,
}

impl MemberFilter {
    pub fn new<I, S>(level: Level, members: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MemberFilter {
            level,
            members: members.into_iter().map(Into::into).collect(),
        }
    }

    fn check(&self) -> Result<(), WarehouseError> {
        self.members
            .iter()
            .try_for_each(|m| self.level.check_member(m))
    }
}

impl FromStr for MemberFilter {
    type Err = WarehouseError;

    /// `level=m1|m2`; a dimension name stands for its coarsest level.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lhs, rhs) = s.split_once('=').ok_or_else(|| {
            WarehouseError::InvalidQuery(format!("filter `{s}` is not LEVEL=MEMBER"))
        })?;
        let level = lhs.parse::<Axis>()?.level;
        let filter = MemberFilter::new(level, rhs.split('|').map(str::trim));
        filter.check()?;
        Ok(filter)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measures {
    pub deaths: u64,
    pub injured: u64,
    pub buildings_destroyed: u64,
    pub event_count: u64,
}

impl Measures {
    pub fn of(fact: &FactRow) -> Self {
        Measures {
            deaths: fact.deaths,
            injured: fact.injured,
            buildings_destroyed: fact.buildings_destroyed,
            event_count: fact.event_count,
        }
    }
}

impl AddAssign for Measures {
    fn add_assign(&mut self, rhs: Self) {
        self.deaths += rhs.deaths;
        self.injured += rhs.injured;
        self.buildings_destroyed += rhs.buildings_destroyed;
        self.event_count += rhs.event_count;
    }
}

/// Sparse aggregate of the fact table: cells with no facts are absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hypercube {
    pub axes: Vec<Axis>,
    pub cells: BTreeMap<Vec<String>, Measures>,
    /// Restrictions applied so far (build filter, slices, dices).
    pub scope: Vec<MemberFilter>,
}

/// Two cubes are equal when they have the same axes and the same cells;
/// how they were reached does not matter.
impl PartialEq for Hypercube {
    fn eq(&self, other: &Self) -> bool {
        self.axes == other.axes && self.cells == other.cells
    }
}

impl Hypercube {
    pub fn totals(&self) -> Measures {
        let mut t = Measures::default();
        for m in self.cells.values() {
            t += *m;
        }
        t
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn axis_index(&self, dimension: Dimension) -> Result<usize, WarehouseError> {
        self.axes
            .iter()
            .position(|a| a.dimension == dimension)
            .ok_or_else(|| WarehouseError::DimensionNotInCube(dimension.name().to_owned()))
    }

    pub fn cell(&self, coords: &[&str]) -> Option<&Measures> {
        let key: Vec<String> = coords.iter().map(|c| (*c).to_owned()).collect();
        self.cells.get(&key)
    }

    pub fn header(&self) -> Vec<String> {
        self.axes
            .iter()
            .map(ToString::to_string)
            .chain(MEASURE_COLUMNS.iter().map(|c| (*c).to_owned()))
            .collect()
    }

    /// Fixed-width text table, rows in lexicographic coordinate order.
    pub fn to_table(&self) -> String {
        let header = self.header();
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|(coords, m)| {
                coords
                    .iter()
                    .cloned()
                    .chain(
                        [m.deaths, m.injured, m.buildings_destroyed, m.event_count]
                            .iter()
                            .map(u64::to_string),
                    )
                    .collect()
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let axes = self.axes.len();
        let render = |cells: &[String]| {
            let mut line = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                let pad = w - cell.chars().count();
                if i < axes {
                    line.push_str(cell);
                    line.extend(std::iter::repeat_n(' ', pad));
                } else {
                    line.extend(std::iter::repeat_n(' ', pad));
                    line.push_str(cell);
                }
            }
            line.trim_end().to_owned()
        };
        let mut out = render(&header);
        out.push('\n');
        for row in &rows {
            out.push_str(&render(row));
            out.push('\n');
        }
        out
    }

    /// One JSON object per cell, same order as `to_table`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for v in self.to_json_rows() {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn to_json_rows(&self) -> Vec<Value> {
        self.cells
            .iter()
            .map(|(coords, m)| {
                let coords: Map<String, Value> = self
                    .axes
                    .iter()
                    .zip(coords)
                    .map(|(a, c)| (a.to_string(), Value::from(c.clone())))
                    .collect();
                json!({
                    "coords": coords,
                    "deaths": m.deaths,
                    "injured": m.injured,
                    "buildings_destroyed": m.buildings_destroyed,
                    "event_count": m.event_count,
                })
            })
            .collect()
    }
}

pub const MEASURE_COLUMNS: [&str; 4] = ["deaths", "injured", "buildings_destroyed", "event_count"];

impl Warehouse {
    /// A fact's coordinate at `level`.
    pub fn member_of(&self, fact: &FactRow, level: Level) -> String {
        let province = || {
            self.regencies
                .get(&fact.regency_code)
                .map(|r| r.province_code.as_str())
                .unwrap_or("")
        };
        match level {
            Level::Year => fact.date.format("%Y").to_string(),
            Level::Month => fact.date.format("%Y-%m").to_string(),
            Level::Day => fact.date.format("%Y-%m-%d").to_string(),
            Level::Province => province().to_owned(),
            Level::Regency => format!("{}/{}", province(), fact.regency_code),
            Level::Band => fact.magnitude_band.clone(),
        }
    }

    fn in_scope(&self, fact: &FactRow, scope: &[MemberFilter]) -> bool {
        scope
            .iter()
            .all(|f| f.members.contains(&self.member_of(fact, f.level)))
    }
}

fn check_axes(axes: &[Axis]) -> Result<(), WarehouseError> {
    let mut seen = BTreeSet::new();
    for a in axes {
        if a.level.dimension() != a.dimension {
            return Err(WarehouseError::UnknownLevel(a.to_string()));
        }
        if !seen.insert(a.dimension) {
            return Err(WarehouseError::DuplicateDimension(
                a.dimension.name().to_owned(),
            ));
        }
    }
    Ok(())
}

/// Aggregates every fact that passes `filter` onto the given axes.
pub fn build_cube(
    store: &Warehouse,
    axes: &[Axis],
    filter: &[MemberFilter],
) -> Result<Hypercube, WarehouseError> {
    check_axes(axes)?;
    for f in filter {
        f.check()?;
    }
    let mut cells: BTreeMap<Vec<String>, Measures> = BTreeMap::new();
    for fact in store.facts().filter(|f| store.in_scope(f, filter)) {
        let coords = axes
            .iter()
            .map(|a| store.member_of(fact, a.level))
            .collect();
        *cells.entry(coords).or_default() += Measures::of(fact);
    }
    Ok(Hypercube {
        axes: axes.to_vec(),
        cells,
        scope: filter.to_vec(),
    })
}

/// Re-aggregates one dimension at its next coarser level.
pub fn roll_up(cube: &Hypercube, dimension: Dimension) -> Result<Hypercube, WarehouseError> {
    let idx = cube.axis_index(dimension)?;
    let level = cube.axes[idx].level;
    let coarser = level
        .coarser()
        .ok_or_else(|| WarehouseError::AlreadyCoarsest(format!("{dimension}:{level}")))?;
    let mut cells: BTreeMap<Vec<String>, Measures> = BTreeMap::new();
    for (coords, m) in &cube.cells {
        let mut key = coords.clone();
        key[idx] = level.parent_member(&coords[idx]);
        *cells.entry(key).or_default() += *m;
    }
    let mut axes = cube.axes.clone();
    axes[idx] = Axis::new(coarser);
    Ok(Hypercube {
        axes,
        cells,
        scope: cube.scope.clone(),
    })
}

/// Rebuilds the cube from the store with one dimension a level finer,
/// keeping every restriction the cube carries.
pub fn drill_down(
    cube: &Hypercube,
    dimension: Dimension,
    store: &Warehouse,
) -> Result<Hypercube, WarehouseError> {
    let idx = cube.axis_index(dimension)?;
    let level = cube.axes[idx].level;
    let finer = level
        .finer()
        .ok_or_else(|| WarehouseError::AlreadyFinest(format!("{dimension}:{level}")))?;
    let mut axes = cube.axes.clone();
    axes[idx] = Axis::new(finer);
    build_cube(store, &axes, &cube.scope)
}

/// Fixes one dimension to a member and drops it from the axes.
pub fn slice(
    cube: &Hypercube,
    dimension: Dimension,
    member: &str,
) -> Result<Hypercube, WarehouseError> {
    let idx = cube.axis_index(dimension)?;
    let level = cube.axes[idx].level;
    level.check_member(member)?;
    let cells = cube
        .cells
        .iter()
        .filter(|(coords, _)| coords[idx] == member)
        .map(|(coords, m)| {
            let mut key = coords.clone();
            key.remove(idx);
            (key, *m)
        })
        .collect();
    let mut axes = cube.axes.clone();
    axes.remove(idx);
    let mut scope = cube.scope.clone();
    scope.push(MemberFilter::new(level, [member]));
    Ok(Hypercube { axes, cells, scope })
}

/// Restricts the cube to the cross-product of the given member sets.
pub fn dice(
    cube: &Hypercube,
    predicates: &[(Dimension, BTreeSet<String>)],
) -> Result<Hypercube, WarehouseError> {
    let mut checks = Vec::with_capacity(predicates.len());
    let mut scope = cube.scope.clone();
    for (dimension, members) in predicates {
        let idx = cube.axis_index(*dimension)?;
        let level = cube.axes[idx].level;
        for m in members {
            level.check_member(m)?;
        }
        checks.push((idx, members));
        scope.push(MemberFilter {
            level,
            members: members.clone(),
        });
    }
    let cells = cube
        .cells
        .iter()
        .filter(|(coords, _)| checks.iter().all(|(i, set)| set.contains(&coords[*i])))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    Ok(Hypercube {
        axes: cube.axes.clone(),
        cells,
        scope,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubeOp {
    RollUp(Dimension),
    DrillDown(Dimension),
    Slice(Dimension, String),
    Dice(Vec<(Dimension, BTreeSet<String>)>),
}

impl FromStr for CubeOp {
    type Err = WarehouseError;

    /// `rollup:DIM`, `drilldown:DIM`, `slice:DIM=MEMBER`,
    /// `dice:DIM=M1|M2;DIM=M3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WarehouseError::InvalidQuery(format!("cannot parse operation `{s}`"));
        let (op, arg) = s.trim().split_once(':').ok_or_else(bad)?;
        let member_arg = |arg: &str| -> Result<(Dimension, String), WarehouseError> {
            let (d, m) = arg.split_once('=').ok_or_else(bad)?;
            Ok((d.parse()?, m.trim().to_owned()))
        };
        match op.trim().replace(['_', '-'], "").as_str() {
            "rollup" => Ok(CubeOp::RollUp(arg.parse()?)),
            "drilldown" => Ok(CubeOp::DrillDown(arg.parse()?)),
            "slice" => {
                let (d, m) = member_arg(arg)?;
                Ok(CubeOp::Slice(d, m))
            }
            "dice" => arg
                .split(';')
                .map(|p| {
                    let (d, m) = member_arg(p)?;
                    Ok((d, m.split('|').map(|x| x.trim().to_owned()).collect()))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(CubeOp::Dice),
            _ => Err(bad()),
        }
    }
}

pub fn apply_op(
    cube: &Hypercube,
    op: &CubeOp,
    store: &Warehouse,
) -> Result<Hypercube, WarehouseError> {
    match op {
        CubeOp::RollUp(d) => roll_up(cube, *d),
        CubeOp::DrillDown(d) => drill_down(cube, *d, store),
        CubeOp::Slice(d, m) => slice(cube, *d, m),
        CubeOp::Dice(p) => dice(cube, p),
    }
}

/// A complete OLAP request: initial axes and filters, then an operation chain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OlapQuery {
    pub group_by: Vec<Axis>,
    pub filters: Vec<MemberFilter>,
    pub ops: Vec<CubeOp>,
}

impl OlapQuery {
    /// Parses the textual form used by the CLI and the HTTP query string:
    /// a comma-separated axis list, `LEVEL=M1|M2` filters (repeated levels
    /// merge), and operation strings.
    pub fn parse<S: AsRef<str>>(
        group_by: &str,
        filters: &[S],
        ops: &[S],
    ) -> Result<Self, WarehouseError> {
        let group_by = group_by
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Axis>, _>>()?;
        let mut merged: BTreeMap<Level, BTreeSet<String>> = BTreeMap::new();
        for f in filters {
            let f: MemberFilter = f.as_ref().parse()?;
            merged.entry(f.level).or_default().extend(f.members);
        }
        let ops = ops
            .iter()
            .map(|o| o.as_ref().parse())
            .collect::<Result<Vec<CubeOp>, _>>()?;
        Ok(OlapQuery {
            group_by,
            filters: merged
                .into_iter()
                .map(|(level, members)| MemberFilter { level, members })
                .collect(),
            ops,
        })
    }

    pub fn run(&self, store: &Warehouse) -> Result<Hypercube, WarehouseError> {
        let mut cube = build_cube(store, &self.group_by, &self.filters)?;
        for op in &self.ops {
            cube = apply_op(&cube, op, store)?;
        }
        Ok(cube)
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::model::parse_timestamp;
    use crate::seed;

    fn seeded() -> Warehouse {
        let reference = seed::reference();
        let at = parse_timestamp("2024-01-01T00:00:00Z").unwrap();
        let mut table = SourceTable::new("catalog");
        for rec in dimension_records(&reference) {
            table.push(at, rec);
        }
        for q in seed::catalog() {
            for f in facts_from_historical(&q, &reference).unwrap() {
                table.push(at, SourceRecord::Fact(f));
            }
        }
        let mut wh = Warehouse::new();
        wh.load_facts(&extract_deferred(&table, &wh.watermark("catalog")))
            .unwrap();
        wh
    }

    fn axes(names: &[&str]) -> Vec<Axis> {
        names.iter().map(|n| n.parse().unwrap()).collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| (*s).to_owned()).collect()
    }

    #[test]
    fn province_cells_match_group_by() {
        let wh = seeded();
        let cube = build_cube(&wh, &axes(&["province"]), &[]).unwrap();
        let mut oracle: BTreeMap<String, u64> = BTreeMap::new();
        for f in wh.facts() {
            let p = wh.regency(&f.regency_code).unwrap().province_code.clone();
            *oracle.entry(p).or_default() += f.deaths;
        }
        let got: BTreeMap<String, u64> = cube
            .cells
            .iter()
            .map(|(k, m)| (k[0].clone(), m.deaths))
            .collect();
        assert_eq!(got, oracle);
        assert_eq!(cube.len(), 5);
    }

    #[test]
    fn empty_store_gives_empty_cube() {
        let cube = build_cube(&Warehouse::new(), &axes(&["province", "year"]), &[]).unwrap();
        assert!(cube.is_empty());
        assert_eq!(
            cube.to_table(),
            "geography:province  time:year  deaths  injured  buildings_destroyed  event_count\n"
        );
    }

    #[test]
    fn year_band_cell_holds_aceh() {
        let cube = build_cube(&seeded(), &axes(&["year", "band"]), &[]).unwrap();
        assert_eq!(cube.cell(&["2004", "8.0+"]).unwrap().deaths, 170_000);
    }

    #[test]
    fn axis_errors() {
        let wh = seeded();
        assert!(matches!(
            "place".parse::<Axis>(),
            Err(WarehouseError::UnknownDimension(_))
        ));
        assert!(matches!(
            "time:regency".parse::<Axis>(),
            Err(WarehouseError::UnknownLevel(_))
        ));
        assert!(matches!(
            build_cube(&wh, &axes(&["year", "month"]), &[]),
            Err(WarehouseError::DuplicateDimension(_))
        ));
    }

    #[test]
    fn roll_up_regency_to_province() {
        let wh = seeded();
        let fine = build_cube(&wh, &axes(&["regency"]), &[]).unwrap();
        let rolled = roll_up(&fine, Dimension::Geography).unwrap();
        let mut oracle: BTreeMap<Vec<String>, Measures> = BTreeMap::new();
        for (k, m) in &fine.cells {
            let p = k[0].split('/').next().unwrap().to_owned();
            *oracle.entry(vec![p]).or_default() += *m;
        }
        assert_eq!(rolled.cells, oracle);
        assert_eq!(rolled, build_cube(&wh, &axes(&["province"]), &[]).unwrap());
        assert!(matches!(
            roll_up(&rolled, Dimension::Geography),
            Err(WarehouseError::AlreadyCoarsest(_))
        ));
    }

    #[test]
    fn roll_up_one_cell_cube() {
        let wh = seeded();
        let one = build_cube(
            &wh,
            &axes(&["month"]),
            &[MemberFilter::new(Level::Year, ["2004"])],
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        let rolled = roll_up(&one, Dimension::Time).unwrap();
        assert_eq!(rolled.len(), 1);
        assert_eq!(rolled.totals(), one.totals());
    }

    #[test]
    fn drill_down_then_roll_up_is_identity() {
        let wh = seeded();
        let years = build_cube(&wh, &axes(&["year", "province"]), &[]).unwrap();
        let months = drill_down(&years, Dimension::Time, &wh).unwrap();
        assert_eq!(roll_up(&months, Dimension::Time).unwrap(), years);
        let y2004: u64 = months
            .cells
            .iter()
            .filter(|(k, _)| k[0].starts_with("2004"))
            .map(|(_, m)| m.deaths)
            .sum();
        assert_eq!(y2004, 170_000);
        let days = drill_down(&months, Dimension::Time, &wh).unwrap();
        assert!(matches!(
            drill_down(&days, Dimension::Time, &wh),
            Err(WarehouseError::AlreadyFinest(_))
        ));
    }

    #[test]
    fn drill_down_respects_slices() {
        let wh = seeded();
        let cube = build_cube(&wh, &axes(&["province", "band"]), &[]).unwrap();
        let sliced = slice(&cube, Dimension::Magnitude, "8.0+").unwrap();
        let drilled = drill_down(&sliced, Dimension::Geography, &wh).unwrap();
        assert_eq!(drilled.totals(), sliced.totals());
        assert_eq!(roll_up(&drilled, Dimension::Geography).unwrap(), sliced);
    }

    #[test]
    fn slice_cases() {
        let wh = seeded();
        let cube = build_cube(&wh, &axes(&["province", "year"]), &[]).unwrap();
        let aceh = slice(&cube, Dimension::Geography, "11").unwrap();
        assert_eq!(aceh.axes, axes(&["year"]));
        assert_eq!(aceh.totals().deaths, 170_000);
        assert!(slice(&cube, Dimension::Geography, "77").unwrap().is_empty());
        assert!(matches!(
            slice(&cube, Dimension::Time, "20x4"),
            Err(WarehouseError::UnknownMember(_))
        ));
        assert!(matches!(
            slice(&cube, Dimension::Magnitude, "8.0+"),
            Err(WarehouseError::DimensionNotInCube(_))
        ));
    }

    #[test]
    fn dice_high_band_early_years() {
        let wh = seeded();
        let cube = build_cube(&wh, &axes(&["year", "band", "regency"]), &[]).unwrap();
        let diced = dice(
            &cube,
            &[
                (Dimension::Magnitude, set(&["8.0+"])),
                (Dimension::Time, set(&["2004", "2005"])),
            ],
        )
        .unwrap();
        let regencies: Vec<&str> = diced.cells.keys().map(|k| k[2].as_str()).collect();
        assert_eq!(regencies, vec!["11/1171", "12/1204"]);
    }

    #[test]
    fn dice_identity_and_annihilator() {
        let wh = seeded();
        let cube = build_cube(&wh, &axes(&["year", "band"]), &[]).unwrap();
        let all_years: BTreeSet<String> = cube.cells.keys().map(|k| k[0].clone()).collect();
        let all_bands: BTreeSet<String> = cube.cells.keys().map(|k| k[1].clone()).collect();
        let same = dice(
            &cube,
            &[
                (Dimension::Time, all_years),
                (Dimension::Magnitude, all_bands),
            ],
        )
        .unwrap();
        assert_eq!(same, cube);
        assert!(dice(&cube, &[(Dimension::Time, BTreeSet::new())])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn query_parsing() {
        let q = OlapQuery::parse(
            "province,time:year",
            &["band=8.0+", "band=7.0\u{2013}7.9", "year=2004|2005"],
            &["rollup:time", "slice:geography=11"],
        );
        let q = q.unwrap();
        assert_eq!(q.group_by, axes(&["province", "year"]));
        assert_eq!(q.filters.len(), 2);
        assert_eq!(q.filters[1].members.len(), 2);
        assert!(matches!(
            "explode:time".parse::<CubeOp>(),
            Err(WarehouseError::InvalidQuery(_))
        ));
        assert_eq!(
            "dice:magnitude=8.0+;time=2004|2005"
                .parse::<CubeOp>()
                .unwrap(),
            CubeOp::Dice(vec![
                (Dimension::Magnitude, set(&["8.0+"])),
                (Dimension::Time, set(&["2004", "2005"])),
            ])
        );
    }

    #[test]
    fn query_roll_up_of_coarsest_fails() {
        let q = OlapQuery::parse("province", &[] as &[&str], &["rollup:geography"]).unwrap();
        assert!(matches!(
            q.run(&seeded()),
            Err(WarehouseError::AlreadyCoarsest(_))
        ));
    }

    #[test]
    fn table_is_deterministic_and_sorted() {
        let wh = seeded();
        let cube = build_cube(&wh, &axes(&["province"]), &[]).unwrap();
        let text = cube.to_table();
        assert_eq!(text, cube.to_table());
        let first_col: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.split_whitespace().next().unwrap())
            .collect();
        let mut sorted = first_col.clone();
        sorted.sort();
        assert_eq!(first_col, sorted);
        assert_eq!(cube.to_json_lines().lines().count(), 5);
    }
}
