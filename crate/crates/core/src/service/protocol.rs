//! WebSocket wire format: one JSON object per text frame, tagged by `type`.

use serde::{Deserialize, Serialize};

use super::{StageTimings, TickReport};
use crate::error::{Error, Result};
use crate::sim::{ContactEvent, PhysicalControl, TerrainSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    /// The client sends one input per tick; the server answers each.
    Human,
    /// The server drives with a simulated unskilled driver on a 100 ms timer.
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Init {
        terrain_seed: u64,
        assist: bool,
        mode: DriveMode,
    },
    Input {
        tick: u64,
        steer: f64,
        pedal: f64,
    },
    Error {
        msg: String,
    },
}

/// Per-stage milliseconds for one tick.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyMs {
    pub receive: f64,
    pub preprocess: f64,
    pub inference: f64,
    pub blend: f64,
    pub send: f64,
    pub end_to_end: f64,
}

impl From<&StageTimings> for LatencyMs {
    fn from(t: &StageTimings) -> Self {
        Self {
            receive: t.receive,
            preprocess: t.preprocess,
            inference: t.inference,
            blend: t.blend,
            send: t.send,
            end_to_end: t.end_to_end,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tick: u64,
    /// `[x, y, yaw]`.
    pub pose: [f64; 3],
    pub speed: f64,
    pub raw_ci: [f64; 2],
    /// Model output; equals `raw_ci` while `assist_active` is false.
    pub assisted_ci: [f64; 2],
    pub applied_ci: [f64; 2],
    pub contacts: Vec<ContactEvent>,
    pub latency_ms: LatencyMs,
    pub assist_active: bool,
    pub finished: bool,
}

impl StateMessage {
    pub fn from_report(r: &TickReport, finished: bool) -> Self {
        let pair = |c: PhysicalControl| [c.steer, c.pedal];
        Self {
            tick: r.tick,
            pose: [r.state.position.x, r.state.position.y, r.state.yaw],
            speed: r.state.speed,
            raw_ci: pair(r.raw),
            assisted_ci: pair(r.assisted.unwrap_or(r.raw)),
            applied_ci: pair(r.applied),
            contacts: r.events.clone(),
            latency_ms: LatencyMs::from(&r.timings),
            assist_active: r.assisted.is_some(),
            finished,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Terrain(TerrainSpec),
    State(StateMessage),
    Error { msg: String },
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self> {
        let msg: Self = serde_json::from_str(text).map_err(|e| Error::Protocol(format!("malformed message: {e}")))?;
        if let Self::Input { steer, pedal, .. } = &msg {
            if !steer.is_finite() || !pedal.is_finite() {
                return Err(Error::Protocol("input control must be finite".into()));
            }
        }
        Ok(msg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages serialize")
    }
}

impl ServerMessage {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Protocol(format!("malformed message: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn error(msg: impl Into<String>) -> Self {
        Self::Error { msg: msg.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn parses_client_shapes() {
        let init = ClientMessage::parse(r#"{"type":"init","terrain_seed":7,"assist":true,"mode":"human"}"#).unwrap();
        assert_eq!(
            init,
            ClientMessage::Init {
                terrain_seed: 7,
                assist: true,
                mode: DriveMode::Human
            }
        );
        let input = ClientMessage::parse(r#"{"type":"input","tick":3,"steer":-0.25,"pedal":1}"#).unwrap();
        assert_eq!(input, ClientMessage::Input { tick: 3, steer: -0.25, pedal: 1.0 });
        let err = ClientMessage::parse(r#"{"type":"error","msg":"bye"}"#).unwrap();
        assert_eq!(err, ClientMessage::Error { msg: "bye".into() });
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "not json",
            r#"{"type":"input","tick":3,"steer":"left","pedal":0}"#,
            r#"{"type":"launch"}"#,
            r#"{"type":"init","terrain_seed":-1,"assist":true,"mode":"human"}"#,
            r#"{"type":"init","terrain_seed":1,"assist":true,"mode":"robot"}"#,
            r#"{"steer":0,"pedal":0}"#,
        ] {
            assert!(matches!(ClientMessage::parse(bad), Err(Error::Protocol(_))), "{bad}");
        }
    }

    #[test]
    fn terrain_is_flattened() {
        let spec = TerrainSpec::straight(200.0, 10.0);
        let v: Value = serde_json::from_str(&ServerMessage::Terrain(spec.clone()).to_json()).unwrap();
        assert_eq!(v["type"], "terrain");
        assert!(v["centerline"].is_array());
        assert!(v["half_width"].is_array());
        assert_eq!(ServerMessage::parse(&v.to_string()).unwrap(), ServerMessage::Terrain(spec));
    }

    #[test]
    fn state_fields() {
        let msg = ServerMessage::State(StateMessage {
            tick: 12,
            pose: [1.0, 2.0, 0.5],
            speed: 3.0,
            raw_ci: [0.1, 0.2],
            assisted_ci: [0.3, 0.4],
            applied_ci: [0.26, 0.36],
            contacts: vec![],
            latency_ms: LatencyMs::default(),
            assist_active: true,
            finished: false,
        });
        let v: Value = serde_json::from_str(&msg.to_json()).unwrap();
        assert_eq!(v["type"], "state");
        for key in ["tick", "pose", "speed", "raw_ci", "assisted_ci", "applied_ci", "contacts", "latency_ms"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["pose"].as_array().unwrap().len(), 3);
        assert!(v["latency_ms"]["inference"].is_number());
        assert_eq!(ServerMessage::parse(&v.to_string()).unwrap(), msg);
    }
}
