//! JSON control messages from clients and their acknowledgements.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use skewstream_core::geometry::{shear_from_view_angle, view_angle_from_shear};
use skewstream_core::pipeline::{ParamMailbox, SourceCommand, UpdateMode};
use skewstream_core::source::SourceCapabilities;
use skewstream_core::SheetGeometry;

/// Exposure limits accepted over the wire, ms.
pub const EXPOSURE_RANGE_MS: (f64, f64) = (0.01, 1000.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    SetViewAngle { deg: f64 },
    SetMode { mode: UpdateMode },
    SetExposure { ms: f64 },
    SetChannels { ids: Vec<u16> },
    MoveStage { dx_um: f64, dy_um: f64 },
    SetShear { px: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub request_id: u64,
    #[serde(flatten)]
    pub command: Command,
}

/// Value actually applied, after clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Applied {
    View { view_angle_deg: f64, shear_px: f64 },
    Mode { mode: UpdateMode },
    Exposure { exposure_ms: f64 },
    Channels { channel_ids: Vec<u16> },
    Stage { dx_um: f64, dy_um: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Ack {
        request_id: u64,
        applied: Applied,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        notice: Option<String>,
    },
    Nack {
        request_id: Option<u64>,
        reason: String,
    },
}

impl Reply {
    pub fn request_id(&self) -> Option<u64> {
        match self {
            Reply::Ack { request_id, .. } => Some(*request_id),
            Reply::Nack { request_id, .. } => *request_id,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("replies always serialize")
    }
}

/// What a session may touch: the shared parameter mailbox plus enough
/// context to validate requests.
#[derive(Clone)]
pub struct ControlContext {
    pub mailbox: Arc<ParamMailbox>,
    pub geometry: SheetGeometry,
    pub capabilities: SourceCapabilities,
    pub channel_ids: Vec<u16>,
}

fn nack(request_id: Option<u64>, reason: impl Into<String>) -> Reply {
    Reply::Nack { request_id, reason: reason.into() }
}

impl ControlContext {
    /// Parses and applies one raw message. Always returns exactly one reply.
    pub fn handle_text(&self, text: &str) -> Reply {
        match serde_json::from_str::<ControlMessage>(text) {
            Ok(msg) => self.handle(&msg),
            Err(e) => {
                // Echo the id when the envelope is intact but the body is not.
                let id = serde_json::from_str::<serde_json::Value>(text)
                    .ok()
                    .and_then(|v| v.get("request_id").and_then(|id| id.as_u64()));
                nack(id, format!("malformed message: {e}"))
            }
        }
    }

    pub fn handle(&self, msg: &ControlMessage) -> Reply {
        let id = msg.request_id;
        let ack = |applied, notice| Reply::Ack { request_id: id, applied, notice };
        match &msg.command {
            Command::SetViewAngle { deg } => {
                if !deg.is_finite() {
                    return nack(Some(id), "view angle must be finite");
                }
                let s_max = self.geometry.max_shear_px();
                let shear = match shear_from_view_angle(*deg, &self.geometry) {
                    Ok(s) if s <= s_max => s,
                    _ if *deg < 0.0 => 0.0,
                    _ => s_max,
                };
                let (shear, notice) = self.apply_shear(shear);
                let applied_deg = view_angle_from_shear(shear, &self.geometry);
                let notice = notice.or_else(|| {
                    ((applied_deg - deg).abs() > 1e-6).then(|| format!("view angle {deg} clamped to {applied_deg:.4}"))
                });
                ack(Applied::View { view_angle_deg: applied_deg, shear_px: shear }, notice)
            }
            Command::SetShear { px } => {
                if !px.is_finite() {
                    return nack(Some(id), "shear must be finite");
                }
                let (shear, notice) = self.apply_shear(*px);
                ack(
                    Applied::View { view_angle_deg: view_angle_from_shear(shear, &self.geometry), shear_px: shear },
                    notice,
                )
            }
            Command::SetMode { mode } => {
                self.mailbox.update(|p| p.mode = *mode);
                ack(Applied::Mode { mode: *mode }, None)
            }
            Command::SetExposure { ms } => {
                if !self.capabilities.exposure {
                    return nack(Some(id), "unsupported: source exposure is fixed");
                }
                if !ms.is_finite() {
                    return nack(Some(id), "exposure must be finite");
                }
                let (lo, hi) = EXPOSURE_RANGE_MS;
                let applied = ms.clamp(lo, hi);
                self.mailbox.push_source_command(SourceCommand::SetExposure { ms: applied });
                let notice = (applied != *ms).then(|| format!("exposure {ms} ms clamped to {applied} ms"));
                ack(Applied::Exposure { exposure_ms: applied }, notice)
            }
            Command::SetChannels { ids } => {
                let known: Vec<u16> = ids.iter().copied().filter(|c| self.channel_ids.contains(c)).collect();
                if known.is_empty() {
                    return nack(Some(id), format!("no known channel in {ids:?}; available {:?}", self.channel_ids));
                }
                let notice = (known.len() != ids.len()).then(|| format!("unknown channels dropped from {ids:?}"));
                self.mailbox.update(|p| p.channels = Some(known.clone()));
                ack(Applied::Channels { channel_ids: known }, notice)
            }
            Command::MoveStage { dx_um, dy_um } => {
                if !self.capabilities.stage {
                    return nack(Some(id), "unsupported: source has no stage");
                }
                if !(dx_um.is_finite() && dy_um.is_finite()) {
                    return nack(Some(id), "stage move must be finite");
                }
                self.mailbox
                    .push_source_command(SourceCommand::MoveStage { dx_um: *dx_um, dy_um: *dy_um });
                ack(Applied::Stage { dx_um: *dx_um, dy_um: *dy_um }, None)
            }
        }
    }

    fn apply_shear(&self, requested: f64) -> (f64, Option<String>) {
        let s_max = self.geometry.max_shear_px();
        let shear = requested.clamp(0.0, s_max);
        self.mailbox.update(|p| p.shear_px = shear);
        let notice = (shear != requested).then(|| format!("shear {requested} px clamped to [0, {s_max}]"));
        (shear, notice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use skewstream_core::pipeline::ViewParams;

    fn context(capabilities: SourceCapabilities) -> ControlContext {
        let geometry = SheetGeometry::new(30.0, 0.4, 0.115, 50, 64, 32).unwrap();
        ControlContext {
            mailbox: Arc::new(ParamMailbox::new(ViewParams::native(&geometry))),
            geometry,
            capabilities,
            channel_ids: vec![0, 1],
        }
    }

    fn full() -> SourceCapabilities {
        SourceCapabilities { stage: true, exposure: true }
    }

    #[test]
    fn native_angle_maps_to_native_shear() {
        let ctx = context(full());
        ctx.mailbox.update(|p| p.shear_px = 0.0);
        let reply = ctx.handle_text(r#"{"request_id": 4, "type": "set_view_angle", "deg": 60}"#);
        let s0 = 0.4 * 30f64.to_radians().cos() / 0.115;
        match reply {
            Reply::Ack { request_id: 4, applied: Applied::View { shear_px, view_angle_deg }, notice: None } => {
                assert!((shear_px - s0).abs() < 1e-9);
                assert!((view_angle_deg - 60.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!((ctx.mailbox.current().0.shear_px - s0).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_angles_clamp_with_notice() {
        let ctx = context(full());
        let s_max = ctx.geometry.max_shear_px();
        for (deg, want) in [(-5.0, 0.0), (149.0, s_max), (170.0, s_max)] {
            let msg = ControlMessage { request_id: 1, command: Command::SetViewAngle { deg } };
            match ctx.handle(&msg) {
                Reply::Ack { applied: Applied::View { shear_px, .. }, notice: Some(_), .. } => {
                    assert!((shear_px - want).abs() < 1e-9, "{deg}: {shear_px}")
                }
                other => panic!("{deg}: unexpected {other:?}"),
            }
        }
        let msg = ControlMessage { request_id: 2, command: Command::SetShear { px: 1e9 } };
        assert!(matches!(ctx.handle(&msg), Reply::Ack { notice: Some(_), .. }));
        assert_eq!(ctx.mailbox.current().0.shear_px, s_max);
    }

    #[test]
    fn stage_moves_need_a_stage() {
        let ctx = context(SourceCapabilities::default());
        let reply = ctx.handle_text(r#"{"request_id": 9, "type": "move_stage", "dx_um": 1.0, "dy_um": 0.0}"#);
        match reply {
            Reply::Nack { request_id: Some(9), reason } => assert!(reason.starts_with("unsupported")),
            other => panic!("unexpected {other:?}"),
        }
        let ctx = context(full());
        ctx.handle_text(r#"{"request_id": 10, "type": "move_stage", "dx_um": 1.0, "dy_um": 2.0}"#);
        assert_eq!(
            ctx.mailbox.drain_source_commands(),
            vec![SourceCommand::MoveStage { dx_um: 1.0, dy_um: 2.0 }]
        );
    }

    #[test]
    fn malformed_messages_are_nacked_with_the_id_when_present() {
        let ctx = context(full());
        assert!(matches!(
            ctx.handle_text(r#"{"request_id": 3, "type": "set_zoom", "x": 2}"#),
            Reply::Nack { request_id: Some(3), .. }
        ));
        assert!(matches!(ctx.handle_text("not json"), Reply::Nack { request_id: None, .. }));
        assert!(matches!(
            ctx.handle_text(r#"{"request_id": 5, "type": "set_exposure"}"#),
            Reply::Nack { request_id: Some(5), .. }
        ));
    }

    #[test]
    fn mode_channels_and_exposure_reach_the_mailbox() {
        let ctx = context(full());
        ctx.handle_text(r#"{"request_id": 1, "type": "set_mode", "mode": "rolling"}"#);
        assert_eq!(ctx.mailbox.current().0.mode, UpdateMode::Rolling);
        let r = ctx.handle_text(r#"{"request_id": 2, "type": "set_channels", "ids": [1, 7]}"#);
        assert!(matches!(r, Reply::Ack { notice: Some(_), .. }));
        assert_eq!(ctx.mailbox.current().0.channels, Some(vec![1]));
        assert!(matches!(
            ctx.handle_text(r#"{"request_id": 3, "type": "set_channels", "ids": [7]}"#),
            Reply::Nack { .. }
        ));
        let r = ctx.handle_text(r#"{"request_id": 4, "type": "set_exposure", "ms": 5000}"#);
        assert!(matches!(r, Reply::Ack { applied: Applied::Exposure { exposure_ms }, .. } if exposure_ms == 1000.0));
        assert_eq!(ctx.mailbox.drain_source_commands(), vec![SourceCommand::SetExposure { ms: 1000.0 }]);
    }

    #[test]
    fn replies_serialize_with_a_type_tag() {
        let r = Reply::Ack { request_id: 1, applied: Applied::Mode { mode: UpdateMode::Global }, notice: None };
        assert_eq!(r.to_json(), r#"{"type":"ack","request_id":1,"applied":{"mode":"global"}}"#);
        let back: Reply = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
