//! Collector: per-epoch report counting, estimation at freeze time and
//! full-table retrieval, in process or over a newline-delimited JSON protocol.
//!
//! Retrieval always returns the whole estimate table, so the server cannot
//! tell which entry a client is interested in.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::{KeyValues, ENV_PREFIX};
use crate::error::{invalid, Error, Result};
use crate::estimation::{DistributionEstimate, Estimator, ReportCounter};
use crate::hadamard::HadamardPlan;
use crate::model::{user_rng, PerturbationModel};
use crate::nav::{DensityFeed, Scenario};

pub const PROTOCOL_VERSION: u32 = 1;

/// Counters and, once frozen, the estimate of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochAggregate {
    pub epoch: u64,
    pub counts: Vec<u64>,
    pub rejected: u64,
    pub frozen: bool,
    pub estimate: Option<DistributionEstimate>,
}

struct EpochState {
    counts: Vec<AtomicU64>,
    rejected: AtomicU64,
    // submissions hold the read side; freezing takes the write side
    gate: RwLock<bool>,
    result: OnceLock<Arc<EpochAggregate>>,
}

impl EpochState {
    fn new(d: usize) -> Self {
        Self {
            counts: (0..d).map(|_| AtomicU64::new(0)).collect(),
            rejected: AtomicU64::new(0),
            gate: RwLock::new(false),
            result: OnceLock::new(),
        }
    }

    fn snapshot(&self) -> (Vec<u64>, u64) {
        (self.counts.iter().map(|c| c.load(Ordering::Acquire)).collect(), self.rejected.load(Ordering::Acquire))
    }
}

/// In-process aggregation shared by all connections.
pub struct Collector {
    d: usize,
    plan: HadamardPlan,
    estimator: Estimator,
    epochs: Mutex<BTreeMap<u64, Arc<EpochState>>>,
}

impl Collector {
    pub fn new<M: PerturbationModel + ?Sized>(model: &M) -> Result<Self> {
        let d = model.domain_size();
        let plan = HadamardPlan::new(d)?;
        let estimator = Estimator::new(&plan, model)?;
        Ok(Self { d, plan, estimator, epochs: Mutex::new(BTreeMap::new()) })
    }

    pub fn domain_size(&self) -> usize {
        self.d
    }

    fn epoch(&self, e: u64, create: bool) -> Option<Arc<EpochState>> {
        let mut map = self.epochs.lock().unwrap();
        if create {
            Some(map.entry(e).or_insert_with(|| Arc::new(EpochState::new(self.d))).clone())
        } else {
            map.get(&e).cloned()
        }
    }

    /// Counts one perturbed report. Out-of-range indices are counted as rejected and refused.
    pub fn submit(&self, epoch: u64, index: u64) -> Result<()> {
        let st = self.epoch(epoch, true).unwrap();
        let frozen = st.gate.read().unwrap();
        if *frozen {
            return Err(Error::AlreadyFrozen(epoch));
        }
        match st.counts.get(index as usize) {
            Some(c) if (index as usize) < self.d => {
                c.fetch_add(1, Ordering::AcqRel);
                Ok(())
            }
            _ => {
                st.rejected.fetch_add(1, Ordering::AcqRel);
                Err(invalid(format!("index {index} outside the domain of {}", self.d)))
            }
        }
    }

    pub fn is_frozen(&self, epoch: u64) -> bool {
        self.epoch(epoch, false).is_some_and(|st| st.result.get().is_some())
    }

    /// Closes an epoch and estimates its distribution. An epoch that never
    /// received a report is created empty.
    pub fn freeze(&self, epoch: u64) -> Result<Arc<EpochAggregate>> {
        let st = self.epoch(epoch, true).unwrap();
        let mut frozen = st.gate.write().unwrap();
        if *frozen {
            return Err(Error::AlreadyFrozen(epoch));
        }
        *frozen = true;
        let (counts, rejected) = st.snapshot();
        let counter = ReportCounter::from_counts(counts.clone(), rejected);
        let estimate = self.estimator.estimate(&counter.observe(&self.plan));
        let agg = Arc::new(EpochAggregate { epoch, counts, rejected, frozen: true, estimate: Some(estimate) });
        let _ = st.result.set(agg.clone());
        Ok(agg)
    }

    /// Full estimate table of a frozen epoch.
    pub fn retrieve(&self, epoch: u64) -> Result<Arc<EpochAggregate>> {
        let st = self.epoch(epoch, false).ok_or(Error::UnknownEpoch(epoch))?;
        st.result.get().cloned().ok_or(Error::NotFrozen(epoch))
    }

    /// Current counters of an open or frozen epoch.
    pub fn aggregate(&self, epoch: u64) -> Result<EpochAggregate> {
        let st = self.epoch(epoch, false).ok_or(Error::UnknownEpoch(epoch))?;
        if let Some(a) = st.result.get() {
            return Ok((**a).clone());
        }
        let (counts, rejected) = st.snapshot();
        Ok(EpochAggregate { epoch, counts, rejected, frozen: false, estimate: None })
    }
}

/// One wire message. Unknown fields are refused, so coordinates cannot ride along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMessage {
    pub v: u32,
    pub t: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
}

impl WireMessage {
    pub fn submit(epoch: u64, index: u64, nonce: impl Into<String>) -> Self {
        Self { v: PROTOCOL_VERSION, t: "submit".into(), e: Some(epoch), i: Some(index), n: Some(nonce.into()) }
    }

    pub fn freeze(epoch: u64) -> Self {
        Self { v: PROTOCOL_VERSION, t: "freeze".into(), e: Some(epoch), i: None, n: None }
    }

    pub fn retrieve(epoch: u64) -> Self {
        Self { v: PROTOCOL_VERSION, t: "retrieve".into(), e: Some(epoch), i: None, n: None }
    }
}

/// Parses and validates one line of the protocol.
pub fn parse_message(line: &str) -> Result<WireMessage> {
    let msg: WireMessage = serde_json::from_str(line)?;
    if msg.v != PROTOCOL_VERSION {
        return Err(invalid(format!("unsupported protocol version {}", msg.v)));
    }
    let need_e = || msg.e.ok_or_else(|| invalid("missing epoch `e`"));
    match msg.t.as_str() {
        "submit" => {
            need_e()?;
            if msg.i.is_none() || msg.n.is_none() {
                return Err(invalid("submit needs `i` and `n`"));
            }
        }
        "freeze" | "retrieve" => {
            need_e()?;
            if msg.i.is_some() || msg.n.is_some() {
                return Err(invalid(format!("{} takes only `e`", msg.t)));
            }
        }
        other => return Err(invalid(format!("unknown message type `{other}`"))),
    }
    Ok(msg)
}

fn status(ok: bool, detail: &str) -> String {
    serde_json::json!({ "ok": ok, "msg": detail }).to_string()
}

/// Retrieval response: a header line, then one `index,frequency` line per location.
pub fn format_retrieval(agg: &EpochAggregate) -> String {
    let est = agg.estimate.as_ref().expect("frozen epochs carry an estimate");
    let mut s = format!(
        "# epoch={},n={},rejected={},low_confidence={},rows={}\n",
        agg.epoch,
        est.n,
        agg.rejected,
        est.low_confidence,
        est.p_hat.len()
    );
    for (i, p) in est.p_hat.iter().enumerate() {
        s.push_str(&format!("{i},{p:e}\n"));
    }
    s
}

fn handle_line(collector: &Collector, line: &str) -> String {
    let reply = match parse_message(line) {
        Err(e) => Err(e),
        Ok(m) => {
            let e = m.e.unwrap();
            match m.t.as_str() {
                "submit" => collector.submit(e, m.i.unwrap()).map(|_| status(true, "accepted")),
                "freeze" => {
                    collector.freeze(e).map(|a| status(true, &format!("frozen n={}", a.counts.iter().sum::<u64>())))
                }
                _ => collector.retrieve(e).map(|a| format_retrieval(&a).trim_end().to_string()),
            }
        }
    };
    reply.unwrap_or_else(|e| status(false, &e.to_string()))
}

fn serve_connection(collector: Arc<Collector>, stream: TcpStream, stop: Arc<AtomicBool>) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let Ok(mut writer) = stream.try_clone() else { return };
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) if buf.ends_with(b"\n") => {
                let line = String::from_utf8_lossy(&buf).trim().to_string();
                buf.clear();
                if line.is_empty() {
                    continue;
                }
                let mut reply = handle_line(&collector, &line);
                reply.push('\n');
                if writer.write_all(reply.as_bytes()).is_err() {
                    break;
                }
            }
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                // idle: leave once shutdown is requested and nothing is pending
                if stop.load(Ordering::Acquire) && buf.is_empty() && reader.buffer().is_empty() {
                    break;
                }
            }
            Err(_) => break,
        }
    }
}

/// A running TCP front end.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
    collector: Arc<Collector>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn collector(&self) -> &Arc<Collector> {
        &self.collector
    }

    /// Stops accepting, lets open connections finish their pending lines, and joins everything.
    /// Calling it again is a no-op.
    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        let workers: Vec<_> = self.workers.lock().unwrap().drain(..).collect();
        for w in workers {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `addr` and serves `collector` on background threads.
pub fn serve(addr: &str, collector: Arc<Collector>) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let workers: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
    let acceptor = {
        let (stop, workers, collector) = (stop.clone(), workers.clone(), collector.clone());
        std::thread::spawn(move || {
            while !stop.load(Ordering::Acquire) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let _ = stream.set_nonblocking(false);
                        let (c, s) = (collector.clone(), stop.clone());
                        workers.lock().unwrap().push(std::thread::spawn(move || serve_connection(c, stream, s)));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
                    Err(e) => {
                        log::error!("accept failed: {e}");
                        std::thread::sleep(Duration::from_millis(5));
                    }
                }
            }
        })
    };
    log::info!("collector listening on {local}");
    Ok(ServerHandle { addr: local, stop, acceptor: Some(acceptor), workers, collector })
}

/// Blocking line-oriented client.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

/// Parsed retrieval response.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub header: String,
    pub frequencies: Vec<f64>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        Ok(Self { reader: BufReader::new(s.try_clone()?), writer: s })
    }

    /// Sends a raw line and returns the first reply line.
    pub fn send_raw(&mut self, line: &str) -> Result<String> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.read_line()
    }

    fn read_line(&mut self) -> Result<String> {
        let mut s = String::new();
        if self.reader.read_line(&mut s)? == 0 {
            return Err(Error::Io(std::io::Error::new(ErrorKind::UnexpectedEof, "connection closed")));
        }
        Ok(s.trim_end().to_string())
    }

    fn expect_ok(reply: String) -> Result<()> {
        let v: serde_json::Value = serde_json::from_str(&reply)?;
        if v["ok"].as_bool() == Some(true) {
            Ok(())
        } else {
            Err(invalid(v["msg"].as_str().unwrap_or("request refused").to_string()))
        }
    }

    pub fn submit(&mut self, epoch: u64, index: u64, nonce: &str) -> Result<()> {
        let line = serde_json::to_string(&WireMessage::submit(epoch, index, nonce))?;
        Self::expect_ok(self.send_raw(&line)?)
    }

    pub fn freeze(&mut self, epoch: u64) -> Result<()> {
        let line = serde_json::to_string(&WireMessage::freeze(epoch))?;
        Self::expect_ok(self.send_raw(&line)?)
    }

    pub fn retrieve(&mut self, epoch: u64) -> Result<Retrieval> {
        let header = self.send_raw(&serde_json::to_string(&WireMessage::retrieve(epoch))?)?;
        if !header.starts_with('#') {
            Self::expect_ok(header)?;
            unreachable!("a successful reply to retrieve starts with a header");
        }
        let rows: usize = header
            .rsplit("rows=")
            .next()
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| invalid(format!("malformed header `{header}`")))?;
        let mut frequencies = Vec::with_capacity(rows);
        for _ in 0..rows {
            let line = self.read_line()?;
            let (_, f) = line.split_once(',').ok_or_else(|| invalid(format!("malformed row `{line}`")))?;
            frequencies.push(f.parse().map_err(|_| invalid(format!("malformed frequency `{f}`")))?);
        }
        Ok(Retrieval { header, frequencies })
    }
}

/// Settings for the `serve` command.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: String,
    pub domain: PathBuf,
    pub table: PathBuf,
    pub epoch_seconds: f64,
}

pub const SERVICE_KEYS: [&str; 4] = ["listen", "domain", "table", "epoch_seconds"];

impl ServiceConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let epoch_seconds = kv.get::<f64>("epoch_seconds")?.unwrap_or(crate::nav::DEFAULT_EPOCH_SECONDS);
        if !(epoch_seconds > 0.0) {
            return Err(invalid("epoch_seconds must be positive"));
        }
        Ok(Self {
            listen: kv.get_str("listen").unwrap_or("127.0.0.1:7878").to_string(),
            domain: kv.require::<String>("domain")?.into(),
            table: kv.require::<String>("table")?.into(),
            epoch_seconds,
        })
    }

    /// Reads a config file and applies `STAIRCASE_*` environment overrides.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        let mut kv = match path {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::default(),
        };
        kv.apply_env(ENV_PREFIX, &SERVICE_KEYS);
        Self::from_kv(&kv)
    }
}

/// Density feed backed by a collector: a fetch freezes the window if needed;
/// updates for an already frozen window go into the next one.
pub struct CollectorFeed {
    pub collector: Arc<Collector>,
}

impl DensityFeed for CollectorFeed {
    fn density(&mut self, epoch: u64) -> Result<Vec<f64>> {
        if !self.collector.is_frozen(epoch) {
            match self.collector.freeze(epoch) {
                Ok(_) | Err(Error::AlreadyFrozen(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let agg = self.collector.retrieve(epoch)?;
        let est = agg.estimate.as_ref().unwrap();
        Ok(est.p_hat.iter().map(|p| p * est.n as f64).collect())
    }

    fn upload(&mut self, epoch: u64, index: usize) -> Result<()> {
        let target = if self.collector.is_frozen(epoch) { epoch + 1 } else { epoch };
        match self.collector.submit(target, index as u64) {
            Err(Error::AlreadyFrozen(_)) => Ok(()),
            other => other,
        }
    }
}

/// Collector pre-loaded with every fleet user's perturbed window position.
pub fn fleet_collector<M: PerturbationModel + ?Sized>(
    scenario: &Scenario,
    model: &M,
    seed: u64,
) -> Result<Arc<Collector>> {
    let collector = Arc::new(Collector::new(model)?);
    let mut rngs: BTreeMap<usize, rand_chacha::ChaCha8Rng> = BTreeMap::new();
    for (e, u, cell) in scenario.window_positions() {
        let rng = rngs.entry(u).or_insert_with(|| user_rng(seed, u as u64));
        collector.submit(e, model.sample(cell, rng) as u64)?;
    }
    Ok(collector)
}
