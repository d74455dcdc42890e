use semnav::config::RunConfig;
use semnav::protocol::{encode, parse_client, ClientMessage, ErrorCode, ServerMessage};
use semnav_core::geosem::Pose;
use semnav_core::world::Action;

fn frame() -> ServerMessage {
    let p = RunConfig::default().prepare().unwrap();
    let sim = p.simulator().unwrap();
    let mut run = sim.start(p.start, 0).unwrap();
    let ego = sim.observe(&mut run);
    ServerMessage::frame(3, &p.target, &ego, 1.5, 2.25, 1)
}

#[test]
fn server_messages_round_trip() {
    let msgs = [
        frame(),
        ServerMessage::Result {
            session_id: 3,
            success: true,
            elapsed_s: 3.099,
            wall_clock_s: 12.5,
            steps: 2,
            final_pose: Pose { x: 3, y: 3, heading_deg: 0 },
        },
        ServerMessage::error(ErrorCode::Busy, "previous action still in progress"),
        ServerMessage::error(ErrorCode::Malformed, ""),
        ServerMessage::error(ErrorCode::UnknownSession, "no live session"),
    ];
    for m in msgs {
        let text = encode(&m);
        let back: ServerMessage = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m, "{text}");
    }
}

#[test]
fn client_messages_round_trip() {
    let mut msgs = vec![
        ClientMessage::Start { plan: "office_fig3".into(), target: None, seed: None },
        ClientMessage::Start { plan: "webots_replica".into(), target: Some("tv".into()), seed: Some(4) },
        ClientMessage::Quit,
    ];
    msgs.extend(Action::ALL.map(|value| ClientMessage::Action { value }));
    for m in msgs {
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(parse_client(&text).unwrap(), m, "{text}");
    }
}

#[test]
fn wire_shapes() {
    assert_eq!(
        parse_client(r#"{"type":"start","plan":"office_fig3","target":"cup"}"#).unwrap(),
        ClientMessage::Start { plan: "office_fig3".into(), target: Some("cup".into()), seed: None }
    );
    assert_eq!(
        parse_client(r#"{"type":"action","value":"RotateLeft"}"#).unwrap(),
        ClientMessage::Action { value: Action::RotateLeft }
    );
    assert_eq!(parse_client(r#"{"type":"quit"}"#).unwrap(), ClientMessage::Quit);
    for bad in [r#"{"type":"action","value":"Jump"}"#, r#"{"type":"fly"}"#, "[]", ""] {
        assert!(parse_client(bad).is_err(), "{bad}");
    }

    let v: serde_json::Value = serde_json::from_str(&encode(&frame())).unwrap();
    assert_eq!(v["type"], "frame");
    assert_eq!(v["pose_hidden"], true);
    assert!(v["areas"].is_array() && v["detections"].is_array());
    assert!(v.get("pose").is_none() && v.get("map").is_none());
    let v: serde_json::Value = serde_json::from_str(&encode(&ServerMessage::error(ErrorCode::UnknownSession, "x"))).unwrap();
    assert_eq!(v["type"], "error");
    assert_eq!(v["code"], "unknown_session");
}
