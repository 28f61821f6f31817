use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use bendaid::haptic::{ConfigError, HapticMode, ModeConfig, ParamKey};
use bendaid::protocol::{encode_command, CommandFrame, Frame, StreamDecoder, TelemetryFrame};
use bendaid::session::{export_csv, PitchMapConfig, Recorder};
use bendaid::sim::GestureProfile;
use parking_lot::RwLock;
use serde::Serialize;
use thiserror::Error;
use tokio::sync::oneshot;

use crate::config::{BridgeConfig, DeviceSpec};
use crate::device::{open_device, Device, DeviceError};
use crate::fanout::{ClientStats, Fanout, TelemetryJson};

pub type RecordingId = u64;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("not connected to a device")]
    NotConnected,
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("recording {0} is already running")]
    AlreadyRecording(RecordingId),
    #[error("no recording is running")]
    NoActiveRecording,
    #[error("unknown recording {0}")]
    UnknownRecording(RecordingId),
    #[error("saving recording: {0}")]
    Save(#[source] std::io::Error),
    #[error("invalid bridge config: {0}")]
    InvalidConfig(String),
    #[error("device owner has stopped")]
    OwnerGone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionState {
    pub connected: bool,
    /// Increments on every successful connect.
    pub session: u64,
    pub device: Option<String>,
    /// Mode carried by the latest telemetry frame; Smooth right after connecting.
    pub mode: HapticMode,
    pub recording: Option<RecordingId>,
    pub last_seq: Option<u64>,
    pub last_pong: Option<u64>,
    /// Why the last connection ended, if it failed.
    pub last_error: Option<String>,
}

impl Default for SessionState {
    fn default() -> Self {
        Self {
            connected: false,
            session: 0,
            device: None,
            mode: HapticMode::Smooth,
            recording: None,
            last_seq: None,
            last_pong: None,
            last_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordingInfo {
    pub id: RecordingId,
    pub rows: usize,
    pub duration_ms: u64,
    pub path: Option<PathBuf>,
}

const LATENESS_BUCKETS: usize = 24;

/// Loop counters shared with the API. Lateness is how far a tick started after its
/// scheduled time and work is how long the tick itself took, both binned by powers of
/// two in microseconds. Lateness mostly measures the OS scheduler; work is ours.
#[derive(Debug, Default)]
pub struct LoopStats {
    ticks: AtomicU64,
    frames_ok: AtomicU64,
    frames_dropped: AtomicU64,
    published: AtomicU64,
    resyncs: AtomicU64,
    max_work_ns: AtomicU64,
    max_lateness_ns: AtomicU64,
    lateness_us_log2: [AtomicU64; LATENESS_BUCKETS],
    work_us_log2: [AtomicU64; LATENESS_BUCKETS],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopStatsSnapshot {
    pub ticks: u64,
    pub frames_ok: u64,
    pub frames_dropped: u64,
    pub published: u64,
    /// Times the realtime loop gave up catching up and restarted its schedule.
    pub resyncs: u64,
    pub max_work_us: f64,
    pub max_lateness_us: f64,
    /// Bucket `i` counts ticks that started `[2^(i-1), 2^i)` µs late; bucket 0 is under 1 µs.
    pub lateness_histogram: Vec<u64>,
    /// Same binning for the time spent inside each tick.
    pub work_histogram: Vec<u64>,
}

fn bin_us(d: Duration) -> usize {
    let us = d.as_micros().min(u64::MAX as u128) as u64;
    ((u64::BITS - us.leading_zeros()) as usize).min(LATENESS_BUCKETS - 1)
}

fn diff(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(a, b)| a - b).collect()
}

fn quantile_us(histogram: &[u64], q: f64) -> f64 {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let target = (q * total as f64).ceil().max(1.0) as u64;
    let mut acc = 0;
    for (i, &n) in histogram.iter().enumerate() {
        acc += n;
        if acc >= target {
            return (1u64 << i) as f64;
        }
    }
    f64::INFINITY
}

impl LoopStatsSnapshot {
    /// Counters accumulated between `earlier` and this snapshot. Maxima are not windowed.
    pub fn since(&self, earlier: &LoopStatsSnapshot) -> LoopStatsSnapshot {
        LoopStatsSnapshot {
            ticks: self.ticks - earlier.ticks,
            frames_ok: self.frames_ok - earlier.frames_ok,
            frames_dropped: self.frames_dropped - earlier.frames_dropped,
            published: self.published - earlier.published,
            resyncs: self.resyncs - earlier.resyncs,
            lateness_histogram: diff(&self.lateness_histogram, &earlier.lateness_histogram),
            work_histogram: diff(&self.work_histogram, &earlier.work_histogram),
            ..self.clone()
        }
    }

    /// Upper bound of the bucket holding quantile `q` of tick lateness, in µs.
    pub fn lateness_quantile_us(&self, q: f64) -> f64 {
        quantile_us(&self.lateness_histogram, q)
    }

    /// Upper bound of the bucket holding quantile `q` of per-tick work time, in µs.
    pub fn work_quantile_us(&self, q: f64) -> f64 {
        quantile_us(&self.work_histogram, q)
    }
}

impl LoopStats {
    fn record_timing(&self, lateness: Duration, work: Duration) {
        self.lateness_us_log2[bin_us(lateness)].fetch_add(1, Ordering::Relaxed);
        self.work_us_log2[bin_us(work)].fetch_add(1, Ordering::Relaxed);
        self.max_lateness_ns
            .fetch_max(lateness.as_nanos() as u64, Ordering::Relaxed);
        self.max_work_ns.fetch_max(work.as_nanos() as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> LoopStatsSnapshot {
        let ld = |a: &AtomicU64| a.load(Ordering::Relaxed);
        LoopStatsSnapshot {
            ticks: ld(&self.ticks),
            frames_ok: ld(&self.frames_ok),
            frames_dropped: ld(&self.frames_dropped),
            published: ld(&self.published),
            resyncs: ld(&self.resyncs),
            max_work_us: ld(&self.max_work_ns) as f64 / 1e3,
            max_lateness_us: ld(&self.max_lateness_ns) as f64 / 1e3,
            lateness_histogram: self.lateness_us_log2.iter().map(ld).collect(),
            work_histogram: self.work_us_log2.iter().map(ld).collect(),
        }
    }
}

type Reply<T> = oneshot::Sender<T>;

enum Request {
    Connect(Option<DeviceSpec>, Reply<Result<SessionState, BridgeError>>),
    Disconnect(Reply<SessionState>),
    SetMode(HapticMode, Reply<Result<(), BridgeError>>),
    Zero(Reply<Result<(), BridgeError>>),
    SetParam(ParamKey, f64, Reply<Result<(), BridgeError>>),
    Ping(u64, Reply<Result<(), BridgeError>>),
    StartRecording(Reply<Result<RecordingId, BridgeError>>),
    StopRecording(Reply<Result<RecordingInfo, BridgeError>>),
    LoadGesture(Box<GestureProfile<f64>>, Reply<Result<(), BridgeError>>),
    State(Reply<SessionState>),
}

pub type DeviceOpener = Box<dyn Fn(&DeviceSpec) -> Result<Box<dyn Device>, DeviceError> + Send>;

type RecordingStore = Arc<RwLock<BTreeMap<RecordingId, Arc<Vec<u8>>>>>;

/// Sole owner of the device. Everything else reaches it through [`BridgeHandle`].
pub struct Owner {
    rx: mpsc::Receiver<Request>,
    opener: DeviceOpener,
    default_device: DeviceSpec,
    device: Option<Box<dyn Device>>,
    decoder: StreamDecoder,
    state: SessionState,
    shadow: ModeConfig<f64>,
    recorder: Option<(RecordingId, Recorder<f64>)>,
    next_recording: RecordingId,
    recordings: RecordingStore,
    record_dir: Option<PathBuf>,
    fanout: Arc<Fanout>,
    downsample: u64,
    frames_since_connect: u64,
    stats: Arc<LoopStats>,
    rx_buf: Vec<u8>,
    frames: Vec<Frame>,
}

pub(crate) fn build(config: &BridgeConfig) -> Result<(Owner, BridgeHandle), BridgeError> {
    config.validate().map_err(BridgeError::InvalidConfig)?;
    let (tx, rx) = mpsc::channel();
    let fanout = Arc::new(Fanout::new(config.client_queue));
    let recordings = RecordingStore::default();
    let stats = Arc::new(LoopStats::default());
    let owner = Owner {
        rx,
        opener: Box::new(open_device),
        default_device: config.device.clone(),
        device: None,
        decoder: StreamDecoder::new(),
        state: SessionState::default(),
        shadow: ModeConfig::for_mode(HapticMode::Smooth),
        recorder: None,
        next_recording: 1,
        recordings: recordings.clone(),
        record_dir: config.record_dir.clone(),
        fanout: fanout.clone(),
        downsample: u64::from(config.telemetry_downsample),
        frames_since_connect: 0,
        stats: stats.clone(),
        rx_buf: Vec::with_capacity(256),
        frames: Vec::with_capacity(4),
    };
    let handle = BridgeHandle {
        tx,
        fanout,
        recordings,
        stats,
        downsample: config.telemetry_downsample,
        tick_rate_hz: config.tick_rate_hz,
    };
    Ok((owner, handle))
}

impl Owner {
    /// Replaces how device descriptors are opened.
    pub fn with_opener(mut self, opener: DeviceOpener) -> Self {
        self.opener = opener;
        self
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    /// One loop iteration: apply queued requests, then poll the device once.
    pub fn tick(&mut self) {
        while let Ok(req) = self.rx.try_recv() {
            self.handle(req);
        }
        self.stats.ticks.fetch_add(1, Ordering::Relaxed);
        let Some(dev) = self.device.as_mut() else {
            return;
        };
        self.rx_buf.clear();
        if let Err(e) = dev.poll(&mut self.rx_buf) {
            self.drop_device(Some(e.to_string()));
            return;
        }
        let mut frames = std::mem::take(&mut self.frames);
        let before = self.decoder.stats();
        self.decoder.decode_into(&self.rx_buf, &mut frames);
        let after = self.decoder.stats();
        self.stats
            .frames_ok
            .fetch_add(after.frames_ok - before.frames_ok, Ordering::Relaxed);
        self.stats
            .frames_dropped
            .fetch_add(after.frames_dropped - before.frames_dropped, Ordering::Relaxed);
        for f in frames.drain(..) {
            match f {
                Frame::Telemetry(t) => self.on_telemetry(&t),
                Frame::Command(CommandFrame::Ping { nonce }) => self.state.last_pong = Some(nonce),
                Frame::Command(_) => {}
            }
        }
        self.frames = frames;
    }

    pub fn run_ticks(&mut self, n: u64) {
        for _ in 0..n {
            self.tick();
        }
    }

    fn on_telemetry(&mut self, t: &TelemetryFrame) {
        self.state.mode = t.mode;
        self.state.last_seq = Some(t.seq);
        if let Some((_, rec)) = self.recorder.as_mut() {
            rec.push(t);
        }
        self.frames_since_connect += 1;
        if self.frames_since_connect % self.downsample == 0 {
            self.fanout.publish(TelemetryJson::from(t));
            self.stats.published.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn drop_device(&mut self, error: Option<String>) {
        self.device = None;
        self.state.connected = false;
        self.state.device = None;
        self.state.last_error = error;
    }

    fn send(&mut self, cmd: CommandFrame) -> Result<(), BridgeError> {
        let dev = self.device.as_mut().ok_or(BridgeError::NotConnected)?;
        if let Err(e) = dev.write(&encode_command(&cmd)) {
            let msg = e.to_string();
            self.drop_device(Some(msg));
            return Err(e.into());
        }
        Ok(())
    }

    fn connect(&mut self, spec: Option<DeviceSpec>) -> Result<SessionState, BridgeError> {
        if self.device.is_some() {
            return Ok(self.state.clone());
        }
        let spec = spec.unwrap_or_else(|| self.default_device.clone());
        let dev = (self.opener)(&spec)?;
        self.state = SessionState {
            connected: true,
            session: self.state.session + 1,
            device: Some(dev.descriptor()),
            mode: HapticMode::Smooth,
            recording: self.state.recording,
            ..SessionState::default()
        };
        self.device = Some(dev);
        self.decoder = StreamDecoder::new();
        self.frames_since_connect = 0;
        self.shadow = ModeConfig::for_mode(HapticMode::Smooth);
        self.send(CommandFrame::Mode(HapticMode::Smooth))?;
        Ok(self.state.clone())
    }

    fn stop_recording(&mut self) -> Result<RecordingInfo, BridgeError> {
        let (id, rec) = self.recorder.take().ok_or(BridgeError::NoActiveRecording)?;
        self.state.recording = None;
        let contour = rec.finish();
        let csv = Arc::new(export_csv(&contour));
        self.recordings.write().insert(id, csv.clone());
        let path = match &self.record_dir {
            Some(dir) => {
                let p = dir.join(format!("{id}.csv"));
                std::fs::create_dir_all(dir)
                    .and_then(|_| std::fs::write(&p, csv.as_slice()))
                    .map_err(BridgeError::Save)?;
                Some(p)
            }
            None => None,
        };
        Ok(RecordingInfo {
            id,
            rows: contour.len(),
            duration_ms: contour.duration_ms(),
            path,
        })
    }

    fn handle(&mut self, req: Request) {
        // A dropped reply receiver only means the caller went away.
        match req {
            Request::Connect(spec, r) => {
                let _ = r.send(self.connect(spec));
            }
            Request::Disconnect(r) => {
                if self.device.is_some() {
                    self.drop_device(None);
                }
                let _ = r.send(self.state.clone());
            }
            Request::SetMode(m, r) => {
                let res = self.send(CommandFrame::Mode(m));
                if res.is_ok() {
                    self.shadow = self.shadow.with_mode(m);
                }
                let _ = r.send(res);
            }
            Request::Zero(r) => {
                let _ = r.send(self.send(CommandFrame::Zero));
            }
            Request::SetParam(key, value, r) => {
                let res = if self.device.is_none() {
                    Err(BridgeError::NotConnected)
                } else {
                    let mut next = self.shadow;
                    match next.set(key, value) {
                        Ok(()) => self.send(CommandFrame::Param { key, value }).map(|()| {
                            self.shadow = next;
                        }),
                        Err(e) => Err(e.into()),
                    }
                };
                let _ = r.send(res);
            }
            Request::Ping(nonce, r) => {
                let _ = r.send(self.send(CommandFrame::Ping { nonce }));
            }
            Request::StartRecording(r) => {
                let res = match (&self.recorder, &self.device) {
                    (_, None) => Err(BridgeError::NotConnected),
                    (Some((id, _)), _) => Err(BridgeError::AlreadyRecording(*id)),
                    (None, Some(_)) => {
                        let id = self.next_recording;
                        self.next_recording += 1;
                        let rec = Recorder::new(PitchMapConfig::default())
                            .expect("default pitch map is valid");
                        self.recorder = Some((id, rec));
                        self.state.recording = Some(id);
                        Ok(id)
                    }
                };
                let _ = r.send(res);
            }
            Request::StopRecording(r) => {
                let _ = r.send(self.stop_recording());
            }
            Request::LoadGesture(g, r) => {
                let res = match self.device.as_mut() {
                    None => Err(BridgeError::NotConnected),
                    Some(d) => d.load_gesture(*g).map_err(Into::into),
                };
                let _ = r.send(res);
            }
            Request::State(r) => {
                let _ = r.send(self.state.clone());
            }
        }
    }
}

/// Cloneable front door to the owner, used by HTTP handlers and tests.
#[derive(Clone)]
pub struct BridgeHandle {
    tx: mpsc::Sender<Request>,
    fanout: Arc<Fanout>,
    recordings: RecordingStore,
    stats: Arc<LoopStats>,
    downsample: u32,
    tick_rate_hz: u32,
}

impl BridgeHandle {
    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Request) -> Result<T, BridgeError> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).map_err(|_| BridgeError::OwnerGone)?;
        rx.await.map_err(|_| BridgeError::OwnerGone)
    }

    pub async fn connect(&self, device: Option<DeviceSpec>) -> Result<SessionState, BridgeError> {
        self.call(|r| Request::Connect(device, r)).await?
    }

    pub async fn disconnect(&self) -> Result<SessionState, BridgeError> {
        self.call(Request::Disconnect).await
    }

    pub async fn set_mode(&self, mode: HapticMode) -> Result<(), BridgeError> {
        self.call(|r| Request::SetMode(mode, r)).await?
    }

    pub async fn zero(&self) -> Result<(), BridgeError> {
        self.call(Request::Zero).await?
    }

    pub async fn set_param(&self, key: ParamKey, value: f64) -> Result<(), BridgeError> {
        self.call(|r| Request::SetParam(key, value, r)).await?
    }

    pub async fn ping(&self, nonce: u64) -> Result<(), BridgeError> {
        self.call(|r| Request::Ping(nonce, r)).await?
    }

    pub async fn start_recording(&self) -> Result<RecordingId, BridgeError> {
        self.call(Request::StartRecording).await?
    }

    pub async fn stop_recording(&self) -> Result<RecordingInfo, BridgeError> {
        self.call(Request::StopRecording).await?
    }

    pub async fn load_gesture(&self, g: GestureProfile<f64>) -> Result<(), BridgeError> {
        self.call(|r| Request::LoadGesture(Box::new(g), r)).await?
    }

    pub async fn state(&self) -> Result<SessionState, BridgeError> {
        self.call(Request::State).await
    }

    pub fn recording_csv(&self, id: RecordingId) -> Result<Arc<Vec<u8>>, BridgeError> {
        self.recordings
            .read()
            .get(&id)
            .cloned()
            .ok_or(BridgeError::UnknownRecording(id))
    }

    pub fn recording_ids(&self) -> Vec<RecordingId> {
        self.recordings.read().keys().copied().collect()
    }

    pub fn fanout(&self) -> &Arc<Fanout> {
        &self.fanout
    }

    pub fn client_stats(&self) -> Vec<ClientStats> {
        self.fanout.stats()
    }

    pub fn loop_stats(&self) -> LoopStatsSnapshot {
        self.stats.snapshot()
    }

    pub fn downsample(&self) -> u32 {
        self.downsample
    }

    pub fn tick_rate_hz(&self) -> u32 {
        self.tick_rate_hz
    }
}

/// Drives an [`Owner`] on its own thread at a fixed tick rate.
pub struct RealtimeLoop {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Owner>>,
}

/// Past this many periods behind schedule the loop stops trying to catch up.
const MAX_BACKLOG_TICKS: u32 = 50;

impl RealtimeLoop {
    pub fn spawn(mut owner: Owner, tick_rate_hz: u32) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let period = Duration::from_secs_f64(1.0 / f64::from(tick_rate_hz.max(1)));
        let thread = std::thread::Builder::new()
            .name("knob-owner".into())
            .spawn(move || {
                let stats = owner.stats.clone();
                let mut deadline = Instant::now();
                while !flag.load(Ordering::Relaxed) {
                    let now = Instant::now();
                    if now < deadline {
                        std::thread::sleep(deadline - now);
                    }
                    let start = Instant::now();
                    owner.tick();
                    stats.record_timing(start.saturating_duration_since(deadline), start.elapsed());
                    deadline += period;
                    if Instant::now() > deadline + period * MAX_BACKLOG_TICKS {
                        stats.resyncs.fetch_add(1, Ordering::Relaxed);
                        deadline = Instant::now();
                    }
                }
                owner
            })
            .expect("spawn owner thread");
        Self {
            stop,
            thread: Some(thread),
        }
    }

    /// Stops the loop and hands the owner back.
    pub fn stop(mut self) -> Owner {
        self.stop.store(true, Ordering::Relaxed);
        self.thread
            .take()
            .expect("thread present until stopped")
            .join()
            .expect("owner thread panicked")
    }
}

impl Drop for RealtimeLoop {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
