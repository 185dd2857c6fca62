//! Graphs, virtual-node augmentation, grid graphs, and the windowed
//! dataset arithmetic for the sea-surface-temperature benchmark layout.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::numkit::Rng;

/// Undirected simple graph. Edges are stored sorted as `(u, v)` with
/// `u < v`. When a virtual node is present it has index `graph_nodes()`
/// and is adjacent to every graph node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    virtual_node: Option<usize>,
}

impl Graph {
    /// Graph without a virtual node. Rejects self-loops, out-of-range
    /// endpoints and duplicate edges (in either orientation).
    pub fn new(nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut normalized = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(usage(format!("self-loop on node {a}")));
            }
            if a >= nodes || b >= nodes {
                return Err(usage(format!("edge ({a}, {b}) out of range for {nodes} nodes")));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| w[0] == w[1]) {
            return Err(usage(format!("duplicate edge {:?}", w[0])));
        }
        Ok(Self {
            nodes,
            edges: normalized,
            virtual_node: None,
        })
    }

    /// `n` isolated nodes.
    pub fn empty(n: usize) -> Self {
        Self {
            nodes: n,
            edges: Vec::new(),
            virtual_node: None,
        }
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("path edges are valid")
    }

    /// Number of graph nodes, excluding the virtual node.
    pub fn graph_nodes(&self) -> usize {
        self.nodes
    }

    /// Total node count including the virtual node if present.
    pub fn node_count(&self) -> usize {
        self.nodes + usize::from(self.virtual_node.is_some())
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len() + self.virtual_node.map_or(0, |_| self.nodes)
    }

    /// Graph-node edges only (virtual-node edges are implicit).
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Every edge, virtual-node edges included.
    pub fn all_edges(&self) -> Vec<(usize, usize)> {
        let mut out = self.edges.clone();
        if let Some(vn) = self.virtual_node {
            out.extend((0..self.nodes).map(|i| (i, vn)));
        }
        out
    }

    pub fn virtual_node(&self) -> Option<usize> {
        self.virtual_node
    }

    pub fn has_virtual_node(&self) -> bool {
        self.virtual_node.is_some()
    }

    /// Graph-node neighbourhoods, virtual node excluded.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Degrees of graph nodes, virtual-node edge excluded.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GraphDocument::from(self))?)
    }
}

#[derive(Serialize)]
struct GraphDocument {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    virtual_node: bool,
    virtual_node_index: Option<usize>,
}

impl From<&Graph> for GraphDocument {
    fn from(g: &Graph) -> Self {
        Self {
            nodes: g.node_count(),
            edges: g.all_edges(),
            virtual_node: g.has_virtual_node(),
            virtual_node_index: g.virtual_node,
        }
    }
}

/// Adds one virtual node connected to every graph node.
pub fn add_virtual_node(g: &Graph) -> Result<Graph> {
    if g.has_virtual_node() {
        return Err(usage("graph already has a virtual node"));
    }
    Ok(Graph {
        nodes: g.nodes,
        edges: g.edges.clone(),
        virtual_node: Some(g.nodes),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Neighborhood {
    Four,
    Eight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub neighborhood: Neighborhood,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, neighborhood: Neighborhood) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(usage("grid rows and cols must be >= 1"));
        }
        Ok(Self {
            rows,
            cols,
            neighborhood,
        })
    }

    /// The 30 × 30 king-move grid used per ocean region.
    pub fn sst_region() -> Self {
        Self {
            rows: 30,
            cols: 30,
            neighborhood: Neighborhood::Eight,
        }
    }

    pub fn node_index(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }
}

/// Grid graph with nodes in row-major order.
pub fn grid_graph(spec: &GridSpec) -> Graph {
    let offsets: &[(isize, isize)] = match spec.neighborhood {
        Neighborhood::Four => &[(0, 1), (1, 0)],
        Neighborhood::Eight => &[(0, 1), (1, -1), (1, 0), (1, 1)],
    };
    let mut edges = Vec::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            for &(dr, dc) in offsets {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= spec.rows as isize || nc >= spec.cols as isize {
                    continue;
                }
                edges.push((spec.node_index(r, c), spec.node_index(nr as usize, nc as usize)));
            }
        }
    }
    Graph::new(spec.rows * spec.cols, edges).expect("grid edges are unique")
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

/// Inclusive number of days from 1 January of `start_year` to
/// 31 December of `end_year` (Gregorian).
pub fn calendar_days(start_year: i32, end_year: i32) -> Result<u64> {
    if end_year < start_year {
        return Err(usage(format!(
            "reversed year range {start_year}..{end_year}"
        )));
    }
    Ok((start_year..=end_year)
        .map(|y| if is_leap_year(y) { 366 } else { 365 })
        .sum())
}

/// History and prediction lengths in days.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub history: usize,
    pub prediction: usize,
}

impl WindowSpec {
    pub fn new(history: usize, prediction: usize) -> Result<Self> {
        if history == 0 || prediction == 0 {
            return Err(usage("window lengths must be >= 1 day"));
        }
        Ok(Self {
            history,
            prediction,
        })
    }

    pub fn span(&self) -> usize {
        self.history + self.prediction
    }
}

/// Number of examples in a split of `length` days over `regions` regions:
/// `(length − w_h − w_p) × regions`.
///
/// This is one fewer window per region than a plain sliding window would
/// give; it is the convention that reproduces the published example
/// counts exactly.
pub fn window_count(length: u64, spec: &WindowSpec, regions: u64) -> Result<u64> {
    let span = spec.span() as u64;
    if length <= span {
        return Err(usage(format!(
            "{length} days is too short for a {}+{} day window",
            spec.history, spec.prediction
        )));
    }
    Ok((length - span) * regions)
}

/// One training example: per-node history and per-node target.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// Day index of the first history day.
    pub start: usize,
    pub input: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

/// Cuts per-node series (all of equal length) into chronological windows,
/// following the [`window_count`] convention.
pub fn make_windows(series: &[Vec<f64>], spec: &WindowSpec) -> Result<Vec<Window>> {
    let length = series_length(series)?;
    windows_in_range(series, spec, 0..length)
}

/// Windows whose history and target both lie inside `days`.
pub fn windows_in_range(
    series: &[Vec<f64>],
    spec: &WindowSpec,
    days: std::ops::Range<usize>,
) -> Result<Vec<Window>> {
    let length = series_length(series)?;
    if days.end > length {
        return Err(usage("day range exceeds series length"));
    }
    let count = window_count(days.len() as u64, spec, 1)? as usize;
    Ok((0..count)
        .map(|k| {
            let start = days.start + k;
            let mid = start + spec.history;
            let end = mid + spec.prediction;
            Window {
                start,
                input: series.iter().map(|s| s[start..mid].to_vec()).collect(),
                target: series.iter().map(|s| s[mid..end].to_vec()).collect(),
            }
        })
        .collect())
}

/// Splits a series beginning on 1 January of `first_year` into year-range
/// splits (inclusive year pairs) and windows each split independently, so
/// no example straddles a split boundary.
pub fn split_by_years(
    series: &[Vec<f64>],
    first_year: i32,
    splits: &[(i32, i32)],
    spec: &WindowSpec,
) -> Result<Vec<Vec<Window>>> {
    splits
        .iter()
        .map(|&(a, b)| {
            if a < first_year {
                return Err(usage(format!("split year {a} precedes series start {first_year}")));
            }
            let offset = if a == first_year {
                0
            } else {
                calendar_days(first_year, a - 1)? as usize
            };
            let len = calendar_days(a, b)? as usize;
            windows_in_range(series, spec, offset..offset + len)
        })
        .collect()
}

fn series_length(series: &[Vec<f64>]) -> Result<usize> {
    let length = series.first().map_or(0, Vec::len);
    if series.iter().any(|s| s.len() != length) {
        return Err(usage("all node series must have the same length"));
    }
    Ok(length)
}

/// A longitude/latitude box, degrees east / north.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub index: usize,
    pub lon: (f64, f64),
    pub lat: (f64, f64),
}

/// The 11 Pacific regions, each a 30 × 30 cell box at 0.5° resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionCatalog {
    regions: Vec<Region>,
}

impl RegionCatalog {
    pub fn pacific() -> Self {
        const LONS: [(f64, f64); 6] = [
            (180.125, 194.875),
            (195.125, 209.875),
            (210.125, 224.875),
            (225.125, 239.875),
            (240.125, 254.875),
            (255.125, 269.875),
        ];
        let south = (-14.875, -0.125);
        let north = (0.125, 14.875);
        let regions = LONS
            .iter()
            .map(|&lon| (lon, south))
            .chain(LONS[..5].iter().map(|&lon| (lon, north)))
            .enumerate()
            .map(|(i, (lon, lat))| Region {
                index: i + 1,
                lon,
                lat,
            })
            .collect();
        Self { regions }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Parameters of the synthetic spatio-temporal field: three travelling
/// sinusoids plus bounded uniform noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub amplitudes: [f64; 3],
    /// Spatial wave numbers `(k_row, k_col)` per component, radians per cell.
    pub wave: [(f64, f64); 3],
    /// Angular frequency per component, radians per day.
    pub omega: [f64; 3],
    pub phase: [f64; 3],
    /// Half-width of the uniform noise.
    pub noise: f64,
}

impl FieldParams {
    /// Random wave numbers and phases; amplitudes and noise as given.
    pub fn random(amplitudes: [f64; 3], noise: f64, rng: &mut Rng) -> Self {
        let tau = std::f64::consts::TAU;
        let mut wave = [(0.0, 0.0); 3];
        let mut omega = [0.0; 3];
        let mut phase = [0.0; 3];
        for k in 0..3 {
            wave[k] = (rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4));
            // periods between a week and a year
            omega[k] = tau / rng.uniform(7.0, 365.0);
            phase[k] = rng.uniform(0.0, tau);
        }
        Self {
            amplitudes,
            wave,
            omega,
            phase,
            noise,
        }
    }

    /// Noise-free value at grid cell `(r, c)` on `day`.
    pub fn clean_value(&self, r: usize, c: usize, day: usize) -> f64 {
        (0..3)
            .map(|k| {
                self.amplitudes[k]
                    * (self.wave[k].0 * r as f64
                        + self.wave[k].1 * c as f64
                        + self.omega[k] * day as f64
                        + self.phase[k])
                        .sin()
            })
            .sum()
    }

    /// Upper bound on `|value|`: amplitude sum plus noise half-width.
    pub fn bound(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.abs()).sum::<f64>() + self.noise.abs()
    }
}

/// Per-node daily series (`[node][day]`) of the synthetic field.
pub fn synthetic_field(
    grid: &GridSpec,
    days: usize,
    params: &FieldParams,
    rng: &mut Rng,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.rows * grid.cols);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            out.push(
                (0..days)
                    .map(|t| {
                        let noise = if params.noise > 0.0 {
                            rng.uniform(-params.noise, params.noise)
                        } else {
                            0.0
                        };
                        params.clean_value(r, c, t) + noise
                    })
                    .collect(),
            );
        }
    }
    out
}

#[derive(Debug, Deserialize, Serialize)]
struct SeriesRecord {
    node_id: usize,
    day_index: usize,
    value: f64,
}

/// Reads `node_id,day_index,value` rows (with header) into per-node series.
/// Every node in `0..=max_node` must have every day in `0..=max_day`
/// exactly once.
pub fn read_series_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let (mut max_node, mut max_day) = (0, 0);
    for rec in rdr.deserialize() {
        let rec: SeriesRecord = rec?;
        if !rec.value.is_finite() {
            return Err(usage(format!(
                "non-finite value for node {} day {}",
                rec.node_id, rec.day_index
            )));
        }
        if cells.insert((rec.node_id, rec.day_index), rec.value).is_some() {
            return Err(usage(format!(
                "duplicate row for node {} day {}",
                rec.node_id, rec.day_index
            )));
        }
        max_node = max_node.max(rec.node_id);
        max_day = max_day.max(rec.day_index);
    }
    if cells.is_empty() {
        return Err(usage("series CSV has no rows"));
    }
    let expected = (max_node + 1) * (max_day + 1);
    if cells.len() != expected {
        return Err(usage(format!(
            "series CSV is incomplete: {} rows, expected {expected}",
            cells.len()
        )));
    }
    let mut series = vec![vec![0.0; max_day + 1]; max_node + 1];
    for ((n, d), v) in cells {
        series[n][d] = v;
    }
    Ok(series)
}

pub fn write_series_csv<W: Write>(series: &[Vec<f64>], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (node_id, s) in series.iter().enumerate() {
        for (day_index, &value) in s.iter().enumerate() {
            wtr.serialize(SeriesRecord {
                node_id,
                day_index,
                value,
            })?;
        }
    }
    wtr.flush().map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sst_grid_has_900_nodes_and_3422_edges() {
        let g = grid_graph(&GridSpec::sst_region());
        assert_eq!(g.graph_nodes(), 900);
        // (4 corners·3 + 112 border·5 + 784 interior·8) / 2
        assert_eq!(g.edge_count(), (4 * 3 + 112 * 5 + 784 * 8) / 2);
        assert_eq!(g.edge_count(), 3422);
    }

    #[test]
    fn grid_degree_classes() {
        let spec = GridSpec::sst_region();
        let deg = grid_graph(&spec).degrees();
        for r in 0..30 {
            for c in 0..30 {
                let border_r = r == 0 || r == 29;
                let border_c = c == 0 || c == 29;
                let want = match (border_r, border_c) {
                    (true, true) => 3,
                    (true, false) | (false, true) => 5,
                    _ => 8,
                };
                assert_eq!(deg[spec.node_index(r, c)], want, "cell ({r},{c})");
            }
        }
    }

    #[test]
    fn grid_small_cases() {
        let one = grid_graph(&GridSpec::new(1, 1, Neighborhood::Eight).unwrap());
        assert_eq!((one.graph_nodes(), one.edge_count()), (1, 0));
        let four = grid_graph(&GridSpec::new(3, 3, Neighborhood::Four).unwrap());
        assert_eq!(four.edge_count(), 12);
        assert!(GridSpec::new(0, 3, Neighborhood::Four).is_err());
    }

    #[test]
    fn virtual_node_augmentation() {
        let p = add_virtual_node(&Graph::path(3)).unwrap();
        assert_eq!((p.node_count(), p.edge_count()), (4, 5));
        assert_eq!(p.virtual_node(), Some(3));
        assert!(add_virtual_node(&p).is_err());

        let star = add_virtual_node(&Graph::empty(6)).unwrap();
        assert_eq!(star.edge_count(), 6);
        assert!(star.all_edges().iter().all(|&(_, b)| b == 6));

        let grid = add_virtual_node(&grid_graph(&GridSpec::sst_region())).unwrap();
        assert_eq!((grid.node_count(), grid.edge_count()), (901, 3422 + 900));
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
    }

    #[test]
    fn calendar_examples() {
        assert_eq!(calendar_days(1982, 2018).unwrap(), 37 * 365 + 9);
        assert_eq!(calendar_days(1982, 2018).unwrap(), 13_514);
        assert_eq!(calendar_days(2019, 2019).unwrap(), 365);
        assert_eq!(calendar_days(2020, 2021).unwrap(), 731);
        assert!(calendar_days(2021, 2020).is_err());
        assert!(is_leap_year(2000) && !is_leap_year(1900));
    }

    #[test]
    fn window_count_examples() {
        let w = |h, p| WindowSpec::new(h, p).unwrap();
        assert_eq!(window_count(13_514, &w(42, 28), 11).unwrap(), 147_884);
        assert_eq!(window_count(365, &w(42, 14), 11).unwrap(), 3_399);
        assert_eq!(window_count(731, &w(42, 7), 11).unwrap(), 7_502);
        assert!(window_count(70, &w(42, 28), 1).is_err());
    }

    #[test]
    fn make_windows_examples() {
        let spec = WindowSpec::new(42, 28).unwrap();
        let series = vec![(1..=100).map(f64::from).collect::<Vec<_>>()];
        let wins = make_windows(&series, &spec).unwrap();
        assert_eq!(wins.len(), 30);
        let first = &wins[0];
        assert_eq!(first.input[0], (1..=42).map(f64::from).collect::<Vec<_>>());
        assert_eq!(first.target[0], (43..=70).map(f64::from).collect::<Vec<_>>());
        assert!(wins.windows(2).all(|w| w[0].start + 1 == w[1].start));

        let short = vec![vec![0.0; 71]];
        assert_eq!(make_windows(&short, &spec).unwrap().len(), 1);
        assert!(make_windows(&[vec![0.0; 70]], &spec).is_err());
    }

    #[test]
    fn year_splits_do_not_overlap() {
        let days = calendar_days(2017, 2021).unwrap() as usize;
        let series = vec![(0..days).map(|d| d as f64).collect::<Vec<_>>()];
        let spec = WindowSpec::new(42, 7).unwrap();
        let splits = split_by_years(&series, 2017, &[(2017, 2018), (2019, 2019), (2020, 2021)], &spec)
            .unwrap();
        assert_eq!(splits[1].len(), 365 - 49);
        assert_eq!(splits[2].len(), 731 - 49);
        let train_end = calendar_days(2017, 2018).unwrap() as usize;
        let val_end = train_end + 365;
        for w in &splits[0] {
            assert!(w.start + 49 <= train_end);
        }
        for w in &splits[1] {
            assert!(w.start >= train_end && w.start + 49 <= val_end);
        }
        for w in &splits[2] {
            assert!(w.start >= val_end);
        }
    }

    #[test]
    fn region_catalog_has_eleven_boxes() {
        let cat = RegionCatalog::pacific();
        assert_eq!(cat.len(), 11);
        for r in cat.regions() {
            // 30 cells of 0.5 degrees, cell-centre to cell-centre span 14.75
            assert!((r.lon.1 - r.lon.0 - 14.75).abs() < 1e-12);
            assert!((r.lat.1 - r.lat.0 - 14.75).abs() < 1e-12);
        }
        assert_eq!(cat.regions()[10].lon, (240.125, 254.875));
        assert_eq!(cat.regions()[10].lat, (0.125, 14.875));
    }

    #[test]
    fn synthetic_field_properties() {
        let grid = GridSpec::new(4, 5, Neighborhood::Eight).unwrap();
        let params = FieldParams::random([1.0, 0.5, 0.25], 0.1, &mut Rng::new(3));
        let a = synthetic_field(&grid, 50, &params, &mut Rng::new(7));
        let b = synthetic_field(&grid, 50, &params, &mut Rng::new(7));
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| v.abs() <= params.bound()));

        let clean = FieldParams { noise: 0.0, ..params };
        let c = synthetic_field(&grid, 50, &clean, &mut Rng::new(7));
        for r in 0..4 {
            for col in 0..5 {
                for t in 0..50 {
                    assert_eq!(c[grid.node_index(r, col)][t], clean.clean_value(r, col, t));
                }
            }
        }
    }

    #[test]
    fn series_csv_round_trip_and_errors() {
        let series = vec![vec![1.5, 2.0, -3.25], vec![0.0, 0.125, 9.0]];
        let mut buf = Vec::new();
        write_series_csv(&series, &mut buf).unwrap();
        assert_eq!(read_series_csv(buf.as_slice()).unwrap(), series);

        let missing = "node_id,day_index,value\n0,0,1.0\n0,1,2.0\n1,0,3.0\n";
        assert!(read_series_csv(missing.as_bytes()).is_err());
        let dup = "node_id,day_index,value\n0,0,1.0\n0,0,2.0\n";
        assert!(read_series_csv(dup.as_bytes()).is_err());
        assert!(read_series_csv("node_id,day_index,value\nx,0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn graph_json_has_vn_flag() {
        let g = add_virtual_node(&Graph::path(2)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert_eq!(v["nodes"], 3);
        assert_eq!(v["virtual_node"], true);
        assert_eq!(v["edges"].as_array().unwrap().len(), 3);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn window_count_matches_enumeration(len in 2usize..400, h in 1usize..60, p in 1usize..40) {
            let spec = WindowSpec::new(h, p).unwrap();
            let series = vec![vec![0.0; len]];
            match window_count(len as u64, &spec, 1) {
                Ok(n) => prop_assert_eq!(make_windows(&series, &spec).unwrap().len() as u64, n),
                Err(_) => prop_assert!(make_windows(&series, &spec).is_err()),
            }
        }
    }
}
