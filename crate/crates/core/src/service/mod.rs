//! Real-time assistance: rolling input window, model inference, 80/20
//! blending and per-tick interpolation, independent of any transport.
//!
//! Per tick the pipeline observes the current vehicle state and a LiDAR scan,
//! builds the newest model input row from the driver's raw control, and — once
//! `k − 1` earlier rows exist — blends the model's reconstruction with the raw
//! control. History rows carry the control that was actually applied. The
//! world then interpolates from the previously applied control to the new one
//! over the 100 ms tick.

pub mod latency;
pub mod protocol;

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2};

pub use latency::{LatencyStats, StageTimings, Summary};

use crate::dae::{forward_window, Dims, ModelParams};
use crate::error::{Error, Result};
use crate::preprocess::{denormalize_ci, downsample_channels, normalize_ci, ControlVector, RawFrame};
use crate::scalar::Scalar;
use crate::sim::{
    generate_terrain_with, ContactEvent, LidarScan, PhysicalControl, TerrainParams, TerrainSpec, TickOutcome,
    Track, VehicleSpec, VehicleState, World, WorldConfig, FULL_CHANNELS,
};

/// Weight of the model output in the blend.
pub const ASSIST_WEIGHT: f64 = 0.8;
pub const RAW_WEIGHT: f64 = 0.2;
pub const TICK_MS: f64 = 100.0;

/// `0.8 · assisted + 0.2 · raw`, entrywise.
pub fn blend(assisted: ControlVector, raw: ControlVector) -> ControlVector {
    let mix = |a: f64, r: f64| {
        if a == r {
            a
        } else {
            (ASSIST_WEIGHT * a + RAW_WEIGHT * r).clamp(0.0, 1.0)
        }
    };
    ControlVector::new(mix(assisted.steer, raw.steer), mix(assisted.pedal, raw.pedal))
}

/// `(1 − alpha) · prev + alpha · next`.
pub fn interpolate(prev: ControlVector, next: ControlVector, alpha: f64) -> ControlVector {
    let a = alpha.clamp(0.0, 1.0);
    let lerp = |p: f64, n: f64| if a == 1.0 { n } else { (1.0 - a) * p + a * n };
    ControlVector::new(lerp(prev.steer, next.steer), lerp(prev.pedal, next.pedal))
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Result of one pipeline pass, controls normalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOutput {
    pub raw: ControlVector,
    /// Model reconstruction; `None` while warming up or with assist off.
    pub assisted: Option<ControlVector>,
    pub applied: ControlVector,
}

/// Rolling window plus model. Without parameters it is a passthrough.
#[derive(Clone, Debug)]
pub struct AssistPipeline<T> {
    params: Option<Arc<ModelParams<T>>>,
    k: usize,
    history: VecDeque<Array1<f64>>,
}

impl<T: Scalar> AssistPipeline<T> {
    pub fn new(params: Option<Arc<ModelParams<T>>>) -> Self {
        let k = params.as_ref().map_or(Dims::FULL.window, |p| p.dims.window);
        Self {
            params,
            k,
            history: VecDeque::with_capacity(k),
        }
    }

    pub fn window_len(&self) -> usize {
        self.k
    }

    pub fn is_assisting(&self) -> bool {
        self.params.is_some()
    }

    /// Rows currently held (at most `k − 1`).
    pub fn history(&self) -> impl Iterator<Item = &Array1<f64>> {
        self.history.iter()
    }

    /// Processes one tick; fills `preprocess`, `inference` and `blend` in `t`.
    pub fn process(
        &mut self,
        raw: PhysicalControl,
        state: &VehicleState,
        scan16: &LidarScan,
        t: &mut StageTimings,
    ) -> Result<PipelineOutput> {
        let start = Instant::now();
        let raw = raw.clamped();
        let frame = RawFrame::capture(raw, state, scan16);
        let mut row = frame.to_input();
        let raw_n = normalize_ci(raw.steer, raw.pedal);
        t.preprocess += ms(start);

        let mut assisted = None;
        if let Some(params) = &self.params {
            if self.history.len() + 1 == self.k {
                let start = Instant::now();
                let mut w = Array2::<T>::zeros((self.k, row.len()));
                for (mut dst, src) in w.rows_mut().into_iter().zip(self.history.iter().chain([&row])) {
                    dst.assign(&src.mapv(T::of));
                }
                let rec = forward_window(w.view(), params)?;
                assisted = Some(ControlVector::new(rec.c_hat[0].as_f64(), rec.c_hat[1].as_f64()));
                t.inference += ms(start);
            }
        }

        let start = Instant::now();
        let applied = match assisted {
            Some(a) => blend(a, raw_n),
            None => raw_n,
        };
        row[0] = applied.steer;
        row[1] = applied.pedal;
        if self.k > 1 {
            if self.history.len() + 1 == self.k {
                self.history.pop_front();
            }
            self.history.push_back(row);
        }
        t.blend += ms(start);
        Ok(PipelineOutput {
            raw: raw_n,
            assisted,
            applied,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub terrain_seed: u64,
    pub assist: bool,
    pub terrain: TerrainParams,
    pub vehicle: VehicleSpec,
    pub world: WorldConfig,
    /// Session ends after this many ticks even if the finish is not reached.
    pub max_ticks: u64,
}

impl SessionConfig {
    pub fn new(terrain_seed: u64, assist: bool) -> Self {
        Self {
            terrain_seed,
            assist,
            terrain: TerrainParams::default(),
            vehicle: VehicleSpec::default(),
            world: WorldConfig::default(),
            max_ticks: 6000,
        }
    }
}

/// Everything that happened in one session tick.
#[derive(Clone, Debug)]
pub struct TickReport {
    pub tick: u64,
    /// State observed when the input arrived.
    pub observed: VehicleState,
    /// State after the tick.
    pub state: VehicleState,
    pub raw: PhysicalControl,
    pub assisted: Option<PhysicalControl>,
    pub applied: PhysicalControl,
    /// Centerline offset of the observed state.
    pub lateral: f64,
    /// LiDAR-estimated offset of the observed state.
    pub lateral_lidar: Option<f64>,
    pub events: Vec<ContactEvent>,
    pub outcome: TickOutcome,
    pub timings: StageTimings,
    pub odometer: f64,
}

/// A world plus an assistance pipeline, advanced one driver input at a time.
#[derive(Clone, Debug)]
pub struct AssistSession<T> {
    cfg: SessionConfig,
    world: World,
    pipeline: AssistPipeline<T>,
    latency: LatencyStats,
}

impl<T: Scalar> AssistSession<T> {
    /// Fails if assistance is requested without parameters, or the
    /// parameters do not fit the model input.
    pub fn new(cfg: SessionConfig, params: Option<Arc<ModelParams<T>>>) -> Result<Self> {
        if cfg.assist {
            let p = params
                .as_ref()
                .ok_or_else(|| Error::Checkpoint("assistance requested but no model is loaded".into()))?;
            if p.dims.input != crate::preprocess::INPUT_LEN {
                return Err(Error::Checkpoint(format!(
                    "model input width {} does not match {}",
                    p.dims.input,
                    crate::preprocess::INPUT_LEN
                )));
            }
            p.validate()?;
        }
        let spec = generate_terrain_with(cfg.terrain_seed, &cfg.terrain, &cfg.vehicle)?;
        let world = World::new(Arc::new(Track::new(spec)), cfg.vehicle.clone(), cfg.world.clone());
        let pipeline = AssistPipeline::new(if cfg.assist { params } else { None });
        Ok(Self {
            cfg,
            world,
            pipeline,
            latency: LatencyStats::new(TICK_MS),
        })
    }

    pub fn terrain(&self) -> &TerrainSpec {
        self.world.track().spec()
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn latency(&self) -> &LatencyStats {
        &self.latency
    }

    /// Records timings measured outside the session (transport stages).
    pub fn record_latency(&mut self, t: &StageTimings) {
        self.latency.record(t);
    }

    /// Next tick index.
    pub fn tick(&self) -> u64 {
        self.world.tick()
    }

    pub fn is_over(&self) -> bool {
        self.world.finished() || self.world.tick() >= self.cfg.max_ticks
    }

    /// Runs one tick with the driver's raw control. `end_to_end` in the
    /// returned timings covers everything done here; transport stages are
    /// left for the caller.
    pub fn step(&mut self, raw: PhysicalControl) -> Result<TickReport> {
        let start = Instant::now();
        let mut t = StageTimings::default();
        let observed = self.world.state().clone();

        let cast = Instant::now();
        let scan64 = self.world.scan(FULL_CHANNELS)?;
        let scan16 = downsample_channels(&scan64)?;
        t.preprocess += ms(cast);

        let out = self.pipeline.process(raw, &observed, &scan16, &mut t)?;
        // Passthrough ticks apply the raw command bit for bit.
        let applied = match out.assisted {
            Some(_) => denormalize_ci(out.applied),
            None => raw.clamped(),
        };
        let track = self.world.track().clone();
        let lateral = track.project(observed.position, Some(observed.station)).lateral;
        let lateral_lidar = crate::sim::offset::lidar_offset(&scan16);

        let outcome = self.world.advance(applied);
        t.end_to_end = ms(start);
        Ok(TickReport {
            tick: outcome.tick,
            observed,
            state: self.world.state().clone(),
            raw: raw.clamped(),
            assisted: out.assisted.map(denormalize_ci),
            applied,
            lateral,
            lateral_lidar,
            events: outcome.event.clone().into_iter().collect(),
            outcome,
            timings: t,
            odometer: self.world.odometer(),
        })
    }
}
