//! Driving metrics, Welch's t-test and closed-loop runs with synthetic drivers.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dae::ModelParams;
use crate::drivers::{NoiseConfig, UnskilledConfig, UnskilledDriver};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::service::{AssistSession, LatencyStats, SessionConfig};
use crate::sim::{ContactEvent, CrashKind, PhysicalControl, VehicleState, TICK_SECONDS};

/// One 100 ms step of a drive; controls physical, state as observed when the
/// command was issued.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: u64,
    pub raw: PhysicalControl,
    pub assisted: Option<PhysicalControl>,
    pub applied: PhysicalControl,
    pub state: VehicleState,
    /// Centerline offset, meters, positive left.
    pub lateral: f64,
    /// LiDAR clearance estimate of the same offset.
    pub lateral_lidar: Option<f64>,
    pub events: Vec<ContactEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveLog {
    pub terrain_seed: u64,
    pub assist: bool,
    pub records: Vec<LogRecord>,
    /// Distance driven, meters.
    pub odometer: f64,
    /// Tick at which the finish was reached.
    pub finish_tick: Option<u64>,
}

impl DriveLog {
    pub fn new(terrain_seed: u64, assist: bool) -> Self {
        Self {
            terrain_seed,
            assist,
            records: Vec::new(),
            odometer: 0.0,
            finish_tick: None,
        }
    }
}

fn sample_sd(xs: impl ExactSizeIterator<Item = f64> + Clone, what: &str) -> Result<f64> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("{what} needs at least 2 samples, got {n}")));
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    let ss: f64 = xs.map(|x| (x - mean).powi(2)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation of the centerline offset, meters.
pub fn sdlp(log: &DriveLog) -> Result<f64> {
    sample_sd(log.records.iter().map(|r| r.lateral), "SDLP")
}

/// SDLP from the LiDAR offset estimate; records without one are skipped.
pub fn sdlp_lidar(log: &DriveLog) -> Result<f64> {
    let xs: Vec<f64> = log.records.iter().filter_map(|r| r.lateral_lidar).collect();
    sample_sd(xs.into_iter(), "SDLP (LiDAR)")
}

/// Sample standard deviation of the speed, m/s.
pub fn speed_maintenance(log: &DriveLog) -> Result<f64> {
    sample_sd(log.records.iter().map(|r| r.state.speed), "speed maintenance")
}

/// Task completion time, seconds.
pub fn tct(log: &DriveLog) -> Result<f64> {
    let first = log
        .records
        .first()
        .ok_or_else(|| Error::DegenerateSample("empty log".into()))?;
    match log.finish_tick {
        Some(end) => Ok((end - first.tick) as f64 * TICK_SECONDS),
        None => Err(Error::DidNotFinish {
            ticks: log.records.len() as u64,
        }),
    }
}

/// Sign changes of a series; zero samples take the previous sign.
pub fn sign_changes(xs: impl IntoIterator<Item = f64>) -> usize {
    let mut sign = 0i8;
    let mut changes = 0;
    for x in xs {
        let s = if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            sign
        };
        if s != 0 && sign != 0 && s != sign {
            changes += 1;
        }
        if s != 0 {
            sign = s;
        }
    }
    changes
}

/// Steering direction changes per meter driven.
pub fn zero_crossings(log: &DriveLog) -> Result<f64> {
    if !(log.odometer > 0.0) {
        return Err(Error::DegenerateSample("no distance driven".into()));
    }
    Ok(sign_changes(log.records.iter().map(|r| r.applied.steer)) as f64 / log.odometer)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashCount {
    pub frontal: usize,
    pub side: usize,
}

impl CrashCount {
    pub fn total(&self) -> usize {
        self.frontal + self.side
    }
}

pub fn count_crashes(log: &DriveLog) -> CrashCount {
    let mut c = CrashCount::default();
    for e in log.records.iter().flat_map(|r| &r.events) {
        match e.classification {
            CrashKind::Frontal => c.frontal += 1,
            CrashKind::Side => c.side += 1,
        }
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// m
    pub sdlp: f64,
    pub sdlp_lidar: Option<f64>,
    /// m/s
    pub sm: f64,
    /// s; `None` for a run that did not finish.
    pub tct: Option<f64>,
    /// 1/m
    pub zero: f64,
    pub crashes: CrashCount,
}

impl MetricsReport {
    pub fn from_log(log: &DriveLog) -> Result<Self> {
        let r = Self {
            sdlp: sdlp(log)?,
            sdlp_lidar: sdlp_lidar(log).ok(),
            sm: speed_maintenance(log)?,
            tct: tct(log).ok(),
            zero: zero_crossings(log)?,
            crashes: count_crashes(log),
        };
        debug_assert!(r.sdlp >= 0.0 && r.sm >= 0.0 && r.zero >= 0.0);
        Ok(r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Welch's unequal-variance t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "Welch test needs two samples of size ≥ 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample("non-finite sample value".into()));
    }
    let (sa, sb) = (sample_sd(a.iter().copied(), "a")?, sample_sd(b.iter().copied(), "b")?);
    welch_from_moments((mean(a), sa, a.len()), (mean(b), sb, b.len()))
}

/// Welch's test from `(mean, sample SD, n)` of each group.
pub fn welch_from_moments(a: (f64, f64, usize), b: (f64, f64, usize)) -> Result<WelchResult> {
    let (ma, sa, na) = a;
    let (mb, sb, nb) = b;
    if na < 2 || nb < 2 {
        return Err(Error::DegenerateSample("group size below 2".into()));
    }
    let va = sa * sa / na as f64;
    let vb = sb * sb / nb as f64;
    let se2 = va + vb;
    if !(se2 > 0.0) {
        if ma == mb {
            return Ok(WelchResult { t: 0.0, df: f64::NAN, p: 1.0 });
        }
        return Err(Error::DegenerateSample("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1) as f64 + vb * vb / (nb - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::DegenerateSample(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult { t, df, p })
}

/// Which synthetic driver operates the vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    Skilled,
    White,
    Correlated,
}

impl DriverKind {
    /// Driver settings used by evaluation runs.
    pub fn config(self) -> UnskilledConfig {
        let noise = match self {
            Self::Skilled => NoiseConfig::white(0.0, 0.0),
            Self::White => NoiseConfig::white(0.3, 0.6),
            Self::Correlated => UnskilledConfig::default().noise,
        };
        UnskilledConfig {
            noise,
            ..UnskilledConfig::default()
        }
    }
}

impl std::str::FromStr for DriverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skilled" => Ok(Self::Skilled),
            "white" => Ok(Self::White),
            "correlated" => Ok(Self::Correlated),
            _ => Err(Error::InvalidArgument(format!(
                "unknown driver {s:?} (skilled, white, correlated)"
            ))),
        }
    }
}

/// Drives one terrain with a synthetic driver through the assistance path.
pub fn closed_loop_run<T: Scalar>(
    params: Option<Arc<ModelParams<T>>>,
    terrain_seed: u64,
    driver: &UnskilledConfig,
    assist: bool,
    driver_seed: u64,
) -> Result<DriveLog> {
    let (log, _) = closed_loop_session(params, SessionConfig::new(terrain_seed, assist), driver, driver_seed)?;
    Ok(log)
}

/// Like [`closed_loop_run`] with full session control; also returns latency.
pub fn closed_loop_session<T: Scalar>(
    params: Option<Arc<ModelParams<T>>>,
    cfg: SessionConfig,
    driver: &UnskilledConfig,
    driver_seed: u64,
) -> Result<(DriveLog, LatencyStats)> {
    let mut log = DriveLog::new(cfg.terrain_seed, cfg.assist);
    let mut session = AssistSession::new(cfg, params)?;
    let mut drv = UnskilledDriver::new(driver.clone(), driver_seed);
    let track = session.world().track().clone();
    let vehicle = session.world().vehicle().clone();
    while !session.is_over() {
        let raw = drv.control(session.world().state(), &track, &vehicle);
        let r = session.step(raw)?;
        session.record_latency(&r.timings);
        if r.outcome.finished && log.finish_tick.is_none() {
            log.finish_tick = Some(r.tick + 1);
        }
        log.odometer = r.odometer;
        log.records.push(LogRecord {
            tick: r.tick,
            raw: r.raw,
            assisted: r.assisted,
            applied: r.applied,
            state: r.observed,
            lateral: r.lateral,
            lateral_lidar: r.lateral_lidar,
            events: r.events,
        });
    }
    Ok((log, session.latency().clone()))
}

/// Per-seed metrics for both conditions of a paired experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRun {
    pub seed: u64,
    pub unassisted: MetricsReport,
    pub assisted: MetricsReport,
}

/// Runs every seed with assistance off and on. The driver's noise stream is
/// seeded from the terrain seed so both conditions face the same driver.
pub fn paired_experiment<T: Scalar>(
    params: Arc<ModelParams<T>>,
    seeds: &[u64],
    driver: &UnskilledConfig,
) -> Result<Vec<PairedRun>> {
    let run = |seed: u64| -> Result<PairedRun> {
        let off = closed_loop_run(None::<Arc<ModelParams<T>>>, seed, driver, false, seed)?;
        let on = closed_loop_run(Some(params.clone()), seed, driver, true, seed)?;
        Ok(PairedRun {
            seed,
            unassisted: MetricsReport::from_log(&off)?,
            assisted: MetricsReport::from_log(&on)?,
        })
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len().max(1));
    if workers <= 1 {
        return seeds.iter().map(|&s| run(s)).collect();
    }
    let chunk = seeds.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(seeds.len());
        for h in handles {
            out.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(out)
    })
}

/// Condition means and Welch comparisons of a paired experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub unit: String,
    pub unassisted_mean: f64,
    pub assisted_mean: f64,
    /// `None` when the test is undefined (e.g. zero variance in both groups).
    pub welch: Option<WelchResult>,
}

pub fn compare(runs: &[PairedRun]) -> Vec<Comparison> {
    type Pick = fn(&MetricsReport) -> Option<f64>;
    let metrics: [(&str, &str, Pick); 6] = [
        ("SDLP", "m", |m| Some(m.sdlp)),
        ("SDLP_lidar", "m", |m| m.sdlp_lidar),
        ("SM", "m/s", |m| Some(m.sm)),
        ("TCT", "s", |m| m.tct),
        ("ZERO", "1/m", |m| Some(m.zero)),
        ("Crash", "count", |m| Some(m.crashes.total() as f64)),
    ];
    metrics
        .iter()
        .map(|&(name, unit, pick)| {
            let a: Vec<f64> = runs.iter().filter_map(|r| pick(&r.unassisted)).collect();
            let b: Vec<f64> = runs.iter().filter_map(|r| pick(&r.assisted)).collect();
            Comparison {
                metric: name.into(),
                unit: unit.into(),
                unassisted_mean: if a.is_empty() { f64::NAN } else { mean(&a) },
                assisted_mean: if b.is_empty() { f64::NAN } else { mean(&b) },
                welch: welch_t_test(&a, &b).ok(),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// Comma-separated per-run table followed by a commented summary.
pub fn render_report(runs: &[PairedRun]) -> String {
    let mut s = String::from(
        "seed,condition,sdlp_m,sdlp_lidar_m,sm_mps,tct_s,zero_per_m,crash_frontal,crash_side,crash_total\n",
    );
    for r in runs {
        for (cond, m) in [("unassisted", &r.unassisted), ("assisted", &r.assisted)] {
            writeln!(
                s,
                "{},{cond},{},{},{},{},{},{},{},{}",
                r.seed,
                m.sdlp,
                opt(m.sdlp_lidar),
                m.sm,
                opt(m.tct),
                m.zero,
                m.crashes.frontal,
                m.crashes.side,
                m.crashes.total()
            )
            .unwrap();
        }
    }
    s.push('\n');
    s.push_str(&render_summary(runs));
    s
}

pub fn render_summary(runs: &[PairedRun]) -> String {
    let mut s = String::new();
    let dnf = |f: fn(&PairedRun) -> &MetricsReport| runs.iter().filter(|r| f(r).tct.is_none()).count();
    writeln!(
        s,
        "# {} paired runs; did not finish: unassisted {}, assisted {}",
        runs.len(),
        dnf(|r| &r.unassisted),
        dnf(|r| &r.assisted)
    )
    .unwrap();
    writeln!(s, "# {:<11} {:>12} {:>12} {:>9} {:>7} {:>10}", "metric", "unassisted", "assisted", "t", "df", "p").unwrap();
    for c in compare(runs) {
        let (t, df, p) = c.welch.map_or((f64::NAN, f64::NAN, f64::NAN), |w| (w.t, w.df, w.p));
        writeln!(
            s,
            "# {:<11} {:>12.4} {:>12.4} {:>9.3} {:>7.1} {:>10.3e}  [{}]",
            c.metric, c.unassisted_mean, c.assisted_mean, t, df, p, c.unit
        )
        .unwrap();
    }
    s
}
