//! Traffic-aware navigation with private location updates.
//!
//! A trip follows its planned route over a static segment-time table. Cells
//! whose density reaches a threshold add a fixed delay. When the travel time
//! since the last checkpoint exceeds the prediction by more than `θ`, the
//! client uploads a perturbed location, fetches the density estimate of the
//! current window and reroutes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::LocationDomain;
use crate::error::{invalid, Error, Result};
use crate::geo::{quadkey_from_tile, EncodedLocation};
use crate::model::{user_rng, PerturbationModel};

pub const DEFAULT_THETA: f64 = 40.0;
pub const DEFAULT_CONGESTION_USERS: f64 = 50.0;
pub const DEFAULT_CONGESTION_DELAY: f64 = 3.0;
pub const DEFAULT_EPOCH_SECONDS: f64 = 300.0;

/// Static segment times plus the congestion rule.
#[derive(Debug, Clone)]
pub struct TravelModel {
    adj: Vec<Vec<(usize, f64)>>,
    pub congestion_users: f64,
    pub congestion_delay: f64,
}

#[derive(PartialEq)]
struct Node(f64, usize);

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TravelModel {
    /// Segments are undirected; repeated segments keep the last time.
    pub fn new(d: usize, segments: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
        for &(a, b, s) in segments {
            if a >= d || b >= d {
                return Err(Error::NotInDomain);
            }
            if !(s >= 0.0) || !s.is_finite() {
                return Err(invalid(format!("segment time {s} must be finite and non-negative")));
            }
            for (u, v) in [(a, b), (b, a)] {
                match adj[u].iter_mut().find(|e| e.0 == v) {
                    Some(e) => e.1 = s,
                    None => adj[u].push((v, s)),
                }
            }
        }
        for list in &mut adj {
            list.sort_by_key(|e| e.0);
        }
        Ok(Self { adj, congestion_users: DEFAULT_CONGESTION_USERS, congestion_delay: DEFAULT_CONGESTION_DELAY })
    }

    pub fn size(&self) -> usize {
        self.adj.len()
    }

    pub fn segment_time(&self, a: usize, b: usize) -> Option<f64> {
        self.adj.get(a)?.iter().find(|e| e.0 == b).map(|e| e.1)
    }

    /// Delay for entering `cell` under `density` (users per cell).
    pub fn delay(&self, cell: usize, density: Option<&[f64]>) -> f64 {
        match density {
            Some(d) if d[cell] >= self.congestion_users => self.congestion_delay,
            _ => 0.0,
        }
    }

    /// Predicted time along `route`: segment times plus delays of every entered cell.
    pub fn route_time(&self, route: &[usize], density: Option<&[f64]>) -> Result<f64> {
        let mut t = 0.0;
        for w in route.windows(2) {
            let s = self.segment_time(w[0], w[1]).ok_or_else(|| invalid(format!("no segment {} -> {}", w[0], w[1])))?;
            t += s + self.delay(w[1], density);
        }
        Ok(t)
    }

    /// Fastest route under `density`; ties resolve towards lower cell indices.
    pub fn shortest_route(&self, from: usize, to: usize, density: Option<&[f64]>) -> Option<Vec<usize>> {
        let n = self.size();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[from] = 0.0;
        heap.push(Node(0.0, from));
        while let Some(Node(du, u)) = heap.pop() {
            if du > dist[u] {
                continue;
            }
            if u == to {
                break;
            }
            for &(v, s) in &self.adj[u] {
                let nd = du + s + self.delay(v, density);
                if nd < dist[v] || (nd == dist[v] && u < prev[v]) {
                    dist[v] = nd;
                    prev[v] = u;
                    heap.push(Node(nd, v));
                }
            }
        }
        if !dist[to].is_finite() {
            return None;
        }
        let mut route = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[cur];
            route.push(cur);
        }
        route.reverse();
        Some(route)
    }
}

/// Strict threshold test on the delay since the last checkpoint.
pub fn should_update(actual: f64, predicted: f64, theta: f64) -> bool {
    actual - predicted > theta
}

/// Per-trip update state.
#[derive(Debug, Clone)]
pub struct NavSession {
    pub theta: f64,
    pub epsilon_per_update: f64,
    pub lambda: u32,
    pub route: Vec<usize>,
}

impl NavSession {
    pub fn new(theta: f64, epsilon_per_update: f64) -> Self {
        Self { theta, epsilon_per_update, lambda: 0, route: Vec::new() }
    }

    /// Total privacy budget spent so far.
    pub fn spent(&self) -> f64 {
        self.lambda as f64 * self.epsilon_per_update
    }
}

/// Where density estimates come from and where updates go.
pub trait DensityFeed {
    /// Users per cell in window `epoch`.
    fn density(&mut self, epoch: u64) -> Result<Vec<f64>>;

    /// Receives one perturbed location update.
    fn upload(&mut self, epoch: u64, index: usize) -> Result<()>;
}

/// Ground-truth users per cell and window.
#[derive(Debug, Clone, Default)]
pub struct DensityTruth {
    d: usize,
    epochs: BTreeMap<u64, Vec<f64>>,
}

impl DensityTruth {
    pub fn get(&self, epoch: u64) -> Option<&[f64]> {
        self.epochs.get(&epoch).map(|v| v.as_slice())
    }

    pub fn epochs(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.epochs.iter().map(|(&e, v)| (e, v.as_slice()))
    }

    pub fn size(&self) -> usize {
        self.d
    }
}

/// Noiseless feed serving the true density; uploads are discarded.
#[derive(Debug, Clone)]
pub struct PerfectFeed(pub DensityTruth);

impl DensityFeed for PerfectFeed {
    fn density(&mut self, epoch: u64) -> Result<Vec<f64>> {
        Ok(self.0.get(epoch).map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; self.0.d]))
    }

    fn upload(&mut self, _epoch: u64, _index: usize) -> Result<()> {
        Ok(())
    }
}

/// One user's recorded positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub user: String,
    pub waypoints: Vec<(usize, f64)>,
}

/// A declared city: thresholds, segment table and fleet trajectories.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub theta: f64,
    pub epsilon_per_update: f64,
    pub epoch_seconds: f64,
    pub congestion_users: f64,
    pub congestion_delay: f64,
    pub segments: Vec<(usize, usize, f64)>,
    pub trajectories: Vec<TrajectoryRecord>,
    /// Waypoints that were not domain cells and got snapped.
    pub snapped: usize,
}

impl Scenario {
    pub fn travel_model(&self, d: usize) -> Result<TravelModel> {
        let mut t = TravelModel::new(d, &self.segments)?;
        t.congestion_users = self.congestion_users;
        t.congestion_delay = self.congestion_delay;
        Ok(t)
    }

    pub fn epoch_of(&self, t: f64) -> u64 {
        (t / self.epoch_seconds).floor().max(0.0) as u64
    }

    /// Each user's position in a window is its first waypoint inside it.
    pub fn window_positions(&self) -> Vec<(u64, usize, usize)> {
        let mut out = Vec::new();
        for (u, tr) in self.trajectories.iter().enumerate() {
            let mut last = None;
            for &(cell, t) in &tr.waypoints {
                let e = self.epoch_of(t);
                if last != Some(e) {
                    out.push((e, u, cell));
                    last = Some(e);
                }
            }
        }
        out
    }

    pub fn density_truth(&self, d: usize) -> DensityTruth {
        let mut epochs: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for (e, _, cell) in self.window_positions() {
            epochs.entry(e).or_insert_with(|| vec![0.0; d])[cell] += 1.0;
        }
        DensityTruth { d, epochs }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Scenario file: `key=value` header lines, `hex_a,hex_b,seconds` segments and
/// `user,seq,hex,timestamp` trajectory points. `#` starts a comment line.
pub fn parse_scenario(text: &str, domain: &LocationDomain) -> Result<Scenario> {
    let mut sc = Scenario {
        theta: DEFAULT_THETA,
        epsilon_per_update: 1.0,
        epoch_seconds: DEFAULT_EPOCH_SECONDS,
        congestion_users: DEFAULT_CONGESTION_USERS,
        congestion_delay: DEFAULT_CONGESTION_DELAY,
        segments: Vec::new(),
        trajectories: Vec::new(),
        snapped: 0,
    };
    let mut points: BTreeMap<String, Vec<(u64, usize, f64)>> = BTreeMap::new();
    let mut order = Vec::new();
    let bits = domain.bit_len();
    let cell = |hex: &str, line: usize, snapped: &mut usize| -> Result<usize> {
        let loc = EncodedLocation::from_hex(hex.trim(), bits).map_err(|e| parse_err(line, e.to_string()))?;
        let (i, exact) = domain.snap(&loc)?;
        if !exact {
            *snapped += 1;
        }
        Ok(i)
    };
    let num = |s: &str, line: usize| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| parse_err(line, format!("bad number `{s}`")))
    };
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            let v = num(v, ln)?;
            match k.trim() {
                "theta" => sc.theta = v,
                "epsilon_per_update" => sc.epsilon_per_update = v,
                "epoch_seconds" => sc.epoch_seconds = v,
                "congestion_users" => sc.congestion_users = v,
                "congestion_delay" => sc.congestion_delay = v,
                other => return Err(parse_err(ln, format!("unknown header key `{other}`"))),
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        match f.len() {
            3 => {
                let a = cell(f[0], ln, &mut sc.snapped)?;
                let b = cell(f[1], ln, &mut sc.snapped)?;
                sc.segments.push((a, b, num(f[2], ln)?));
            }
            4 => {
                let seq: u64 = f[1].trim().parse().map_err(|_| parse_err(ln, format!("bad sequence `{}`", f[1])))?;
                let c = cell(f[2], ln, &mut sc.snapped)?;
                let user = f[0].trim().to_string();
                if !points.contains_key(&user) {
                    order.push(user.clone());
                }
                points.entry(user).or_default().push((seq, c, num(f[3], ln)?));
            }
            n => return Err(parse_err(ln, format!("expected 3 or 4 fields, found {n}"))),
        }
    }
    if !(sc.epoch_seconds > 0.0) || !(sc.theta >= 0.0) || !(sc.epsilon_per_update > 0.0) {
        return Err(invalid("scenario header values out of range"));
    }
    for user in order {
        let mut pts = points.remove(&user).unwrap_or_default();
        pts.sort_by_key(|p| p.0);
        if pts.windows(2).any(|w| w[1].2 <= w[0].2) {
            return Err(invalid(format!("timestamps of user {user} are not strictly increasing")));
        }
        sc.trajectories.push(TrajectoryRecord { user, waypoints: pts.into_iter().map(|(_, c, t)| (c, t)).collect() });
    }
    Ok(sc)
}

pub fn format_scenario(sc: &Scenario, domain: &LocationDomain) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "theta={}", sc.theta);
    let _ = writeln!(s, "epsilon_per_update={}", sc.epsilon_per_update);
    let _ = writeln!(s, "epoch_seconds={}", sc.epoch_seconds);
    let _ = writeln!(s, "congestion_users={}", sc.congestion_users);
    let _ = writeln!(s, "congestion_delay={}", sc.congestion_delay);
    for &(a, b, t) in &sc.segments {
        let _ = writeln!(s, "{},{},{}", domain.location(a).to_hex(), domain.location(b).to_hex(), t);
    }
    for tr in &sc.trajectories {
        for (k, &(c, t)) in tr.waypoints.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", tr.user, k, domain.location(c).to_hex(), t);
        }
    }
    s
}

/// Result of one navigated trip.
#[derive(Debug, Clone, PartialEq)]
pub struct NavOutcome {
    pub lambda: u32,
    pub spent: f64,
    /// Cells actually traversed, origin to destination.
    pub route: Vec<usize>,
    pub trip_time: f64,
}

/// Origin, destination, start time and planned route of a trajectory.
pub fn planned_route(travel: &TravelModel, tr: &TrajectoryRecord) -> Result<Vec<usize>> {
    let mut route: Vec<usize> = vec![tr.waypoints.first().ok_or_else(|| invalid("empty trajectory"))?.0];
    for &(c, _) in &tr.waypoints[1..] {
        let last = *route.last().unwrap();
        if c == last {
            continue;
        }
        if travel.segment_time(last, c).is_some() {
            route.push(c);
        } else {
            let fill = travel
                .shortest_route(last, c, None)
                .ok_or_else(|| invalid(format!("user {}: no segment path {last} -> {c}", tr.user)))?;
            route.extend_from_slice(&fill[1..]);
        }
    }
    Ok(route)
}

/// Drives one trip. Actual times use the true density of the window being
/// travelled; predictions use the last density fetched from `feed`.
#[allow(clippy::too_many_arguments)]
pub fn run_session<M: PerturbationModel + ?Sized, R: Rng + ?Sized>(
    session: &mut NavSession,
    trajectory: &TrajectoryRecord,
    travel: &TravelModel,
    truth: &DensityTruth,
    epoch_seconds: f64,
    model: &M,
    feed: &mut dyn DensityFeed,
    rng: &mut R,
) -> Result<NavOutcome> {
    let epoch_of = |t: f64| (t / epoch_seconds).floor().max(0.0) as u64;
    session.route = planned_route(travel, trajectory)?;
    let dest = *session.route.last().unwrap();
    let start = trajectory.waypoints[0].1;
    let mut t = start;
    let mut k = 0usize;
    let (mut actual, mut predicted) = (0.0, 0.0);
    let mut known: Option<Vec<f64>> = None;
    while k + 1 < session.route.len() {
        let (cur, next) = (session.route[k], session.route[k + 1]);
        let seg = travel.segment_time(cur, next).ok_or_else(|| invalid(format!("no segment {cur} -> {next}")))?;
        let step = seg + travel.delay(next, truth.get(epoch_of(t)));
        predicted += seg + travel.delay(next, known.as_deref());
        actual += step;
        t += step;
        k += 1;
        if next != dest && should_update(actual, predicted, session.theta) {
            session.lambda += 1;
            let e = epoch_of(t);
            feed.upload(e, model.sample(next, rng))?;
            let dens = feed.density(e)?;
            let rest = travel.shortest_route(next, dest, Some(&dens)).expect("current route reaches the destination");
            session.route.truncate(k);
            session.route.extend(rest);
            known = Some(dens);
            actual = 0.0;
            predicted = 0.0;
        }
    }
    Ok(NavOutcome {
        lambda: session.lambda,
        spent: session.spent(),
        route: session.route.clone(),
        trip_time: t - start,
    })
}

/// Edit distance between routes over cell symbols, divided by the true route length.
pub fn route_deviation(true_route: &[usize], rec_route: &[usize]) -> Result<f64> {
    if true_route.is_empty() || rec_route.is_empty() {
        return Err(invalid("routes must be non-empty"));
    }
    let mut prev: Vec<usize> = (0..=rec_route.len()).collect();
    for (i, a) in true_route.iter().enumerate() {
        let mut cur = vec![i + 1; rec_route.len() + 1];
        for (j, b) in rec_route.iter().enumerate() {
            cur[j + 1] = (prev[j] + (a != b) as usize).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    Ok(prev[rec_route.len()] as f64 / true_route.len() as f64)
}

pub fn trip_time_deviation(true_time: f64, rec_time: f64) -> Result<f64> {
    if !(true_time >= 0.0 && rec_time >= 0.0) {
        return Err(invalid("trip times must be non-negative"));
    }
    Ok((true_time - rec_time).abs())
}

/// Aggregate over a fleet of navigated trips.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetReport {
    pub outcomes: Vec<NavOutcome>,
    pub mean_lambda: f64,
    pub total_spent: f64,
}

/// Runs the first `sessions` trajectories of the scenario in order.
pub fn run_fleet<M: PerturbationModel + ?Sized>(
    scenario: &Scenario,
    travel: &TravelModel,
    model: &M,
    feed: &mut dyn DensityFeed,
    sessions: usize,
    seed: u64,
) -> Result<FleetReport> {
    let truth = scenario.density_truth(travel.size());
    let mut outcomes = Vec::new();
    for (u, tr) in scenario.trajectories.iter().take(sessions).enumerate() {
        let mut s = NavSession::new(scenario.theta, scenario.epsilon_per_update);
        // the update stream is kept apart from the density-report streams
        let mut rng = user_rng(seed ^ 0x6e61_7669, u as u64);
        outcomes.push(run_session(&mut s, tr, travel, &truth, scenario.epoch_seconds, model, feed, &mut rng)?);
    }
    let n = outcomes.len().max(1) as f64;
    let mean_lambda = outcomes.iter().map(|o| o.lambda as f64).sum::<f64>() / n;
    let total_spent = outcomes.iter().map(|o| o.spent).sum();
    Ok(FleetReport { outcomes, mean_lambda, total_spent })
}

/// Parameters of the synthetic grid city.
#[derive(Debug, Clone)]
pub struct CityGrid {
    /// Cells per side; must be a power of two.
    pub side: u32,
    pub users: usize,
    /// Trips start uniformly within this many seconds.
    pub start_window: f64,
    /// Share of trips starting or ending downtown.
    pub downtown_share: f64,
}

impl Default for CityGrid {
    fn default() -> Self {
        Self { side: 32, users: 30_000, start_window: 1800.0, downtown_share: 0.6 }
    }
}

/// Grid domain with four-neighbour segments and a fleet heading through downtown.
pub fn synthetic_city(
    grid: &CityGrid,
    theta: f64,
    epsilon_per_update: f64,
    seed: u64,
) -> Result<(LocationDomain, Scenario)> {
    if !grid.side.is_power_of_two() || grid.side < 2 {
        return Err(invalid("grid side must be a power of two >= 2"));
    }
    let level = grid.side.trailing_zeros() as u8;
    let side = grid.side as usize;
    let cells: Vec<EncodedLocation> =
        (0..grid.side).flat_map(|y| (0..grid.side).map(move |x| quadkey_from_tile(x, y, level))).collect();
    let domain = LocationDomain::build(cells.clone())?;
    let idx = |x: usize, y: usize| domain.index_of(&cells[y * side + x]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    for y in 0..side {
        for x in 0..side {
            if x + 1 < side {
                segments.push((idx(x, y), idx(x + 1, y), rng.random_range(20.0f64..60.0).round()));
            }
            if y + 1 < side {
                segments.push((idx(x, y), idx(x, y + 1), rng.random_range(20.0f64..60.0).round()));
            }
        }
    }
    let travel = TravelModel::new(domain.size(), &segments)?;
    let (c0, c1) = (side * 3 / 8, side * 5 / 8);
    let mut trajectories = Vec::with_capacity(grid.users);
    for u in 0..grid.users {
        let pick = |down: bool, rng: &mut ChaCha8Rng| {
            if down {
                idx(rng.random_range(c0..c1), rng.random_range(c0..c1))
            } else {
                idx(rng.random_range(0..side), rng.random_range(0..side))
            }
        };
        let down_o = rng.random::<f64>() < grid.downtown_share;
        let o = pick(down_o, &mut rng);
        let mut dst = pick(!down_o, &mut rng);
        while dst == o {
            dst = pick(false, &mut rng);
        }
        let route = travel.shortest_route(o, dst, None).expect("grid is connected");
        let mut t = rng.random_range(0.0..grid.start_window).round();
        let mut waypoints = vec![(route[0], t)];
        for w in route.windows(2) {
            t += travel.segment_time(w[0], w[1]).unwrap();
            waypoints.push((w[1], t));
        }
        trajectories.push(TrajectoryRecord { user: format!("u{u}"), waypoints });
    }
    let sc = Scenario {
        theta,
        epsilon_per_update,
        epoch_seconds: DEFAULT_EPOCH_SECONDS,
        congestion_users: DEFAULT_CONGESTION_USERS,
        congestion_delay: DEFAULT_CONGESTION_DELAY,
        segments,
        trajectories,
        snapped: 0,
    };
    Ok((domain, sc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::GrrScheme;

    #[test]
    fn threshold_is_strict() {
        assert!(!should_update(100.0, 100.0, 40.0));
        assert!(!should_update(140.0, 100.0, 40.0));
        assert!(should_update(141.0, 100.0, 40.0));
    }

    #[test]
    fn levenshtein_examples() {
        let a: Vec<usize> = (0..10).collect();
        assert_eq!(route_deviation(&a, &a).unwrap(), 0.0);
        let b: Vec<usize> = (10..20).collect();
        assert_eq!(route_deviation(&a, &b).unwrap(), 1.0);
        let mut c = a.clone();
        c[4] = 99;
        assert!((route_deviation(&a, &c).unwrap() - 0.1).abs() < 1e-15);
        assert!(route_deviation(&[], &a).is_err());
    }

    #[test]
    fn trip_time_examples() {
        assert_eq!(trip_time_deviation(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(trip_time_deviation(100.0, 130.0).unwrap(), 30.0);
    }

    fn line_city() -> (TravelModel, Scenario) {
        // 0 - 1 - 2 - 3 straight, plus a detour 1 - 4 - 2
        let segs = vec![(0, 1, 10.0), (1, 2, 10.0), (2, 3, 10.0), (1, 4, 12.0), (4, 2, 12.0)];
        let sc = Scenario {
            theta: 2.0,
            epsilon_per_update: 0.5,
            epoch_seconds: 300.0,
            congestion_users: 50.0,
            congestion_delay: 3.0,
            segments: segs.clone(),
            trajectories: vec![TrajectoryRecord {
                user: "a".into(),
                waypoints: vec![(0, 0.0), (1, 10.0), (2, 20.0), (3, 30.0)],
            }],
            snapped: 0,
        };
        (TravelModel::new(5, &segs).unwrap(), sc)
    }

    #[test]
    fn free_flow_has_no_updates() {
        let (travel, sc) = line_city();
        let truth = sc.density_truth(5);
        let mut feed = PerfectFeed(truth.clone());
        let g = GrrScheme::new(5, 1.0).unwrap();
        let mut s = NavSession::new(sc.theta, sc.epsilon_per_update);
        let out = run_session(&mut s, &sc.trajectories[0], &travel, &truth, 300.0, &g, &mut feed, &mut user_rng(1, 0))
            .unwrap();
        assert_eq!(out.lambda, 0);
        assert_eq!(out.route, vec![0, 1, 2, 3]);
        assert_eq!(out.trip_time, 30.0);
    }

    #[test]
    fn one_congested_block_triggers_once() {
        let (mut travel, sc) = line_city();
        travel.congestion_delay = 5.0;
        let mut truth = DensityTruth { d: 5, epochs: BTreeMap::new() };
        truth.epochs.insert(0, vec![0.0, 60.0, 0.0, 60.0, 0.0]);
        let mut feed = PerfectFeed(truth.clone());
        let g = GrrScheme::new(5, 1.0).unwrap();
        let mut s = NavSession::new(2.0, 0.5);
        let out = run_session(&mut s, &sc.trajectories[0], &travel, &truth, 300.0, &g, &mut feed, &mut user_rng(1, 0))
            .unwrap();
        assert_eq!(out.lambda, 1);
        assert_eq!(out.spent, 0.5);
        assert_eq!(out.trip_time, 10.0 + 5.0 + 10.0 + 10.0 + 5.0);
    }

    #[test]
    fn perfect_feed_reroutes_to_optimum() {
        let (mut travel, sc) = line_city();
        travel.congestion_delay = 20.0;
        let mut truth = DensityTruth { d: 5, epochs: BTreeMap::new() };
        truth.epochs.insert(0, vec![0.0, 60.0, 60.0, 0.0, 0.0]);
        let mut feed = PerfectFeed(truth.clone());
        let g = GrrScheme::new(5, 1.0).unwrap();
        let mut s = NavSession::new(2.0, 1.0);
        let out = run_session(&mut s, &sc.trajectories[0], &travel, &truth, 300.0, &g, &mut feed, &mut user_rng(1, 0))
            .unwrap();
        assert_eq!(out.lambda, 1);
        // after the update at cell 1 the rest of the route is the optimum under the true density
        let opt = travel.shortest_route(1, 3, truth.get(0)).unwrap();
        assert_eq!(&out.route[1..], &opt[..]);
    }

    #[test]
    fn scenario_round_trip() {
        let grid = CityGrid { side: 4, users: 20, ..Default::default() };
        let (dom, sc) = synthetic_city(&grid, 30.0, 0.5, 3).unwrap();
        let text = format_scenario(&sc, &dom);
        let back = parse_scenario(&text, &dom).unwrap();
        assert_eq!(back.segments, sc.segments);
        assert_eq!(back.trajectories, sc.trajectories);
        assert_eq!(back.theta, 30.0);
        assert!(parse_scenario("theta=x\n", &dom).is_err());
        assert!(matches!(parse_scenario("00,01\n", &dom), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn synthetic_city_has_congestion() {
        let (dom, sc) = synthetic_city(&CityGrid::default(), 40.0, 1.0, 1).unwrap();
        let truth = sc.density_truth(dom.size());
        let hot = truth.epochs().map(|(_, v)| v.iter().filter(|&&u| u >= 50.0).count()).max().unwrap();
        assert!(hot > 0);
    }
}
