use std::path::Path;
use std::sync::Arc;

use ebrt_client::{Client, ClientError, SurfaceOptions};
use ebrt_core::geometry::io::MeshFormat;
use ebrt_core::linac::{builtin_catalog, Detail, PartialState};
use ebrt_service::{spawn, AppState, RunningService, ServiceConfig};
use reqwest::StatusCode;

async fn start() -> (RunningService, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        scenario_dir: dir.path().to_path_buf(),
        ..ServiceConfig::default()
    };
    let catalog = Arc::new(builtin_catalog(Detail::default()));
    let svc = spawn(AppState::with_catalog(config, catalog), "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    (svc, dir)
}

#[tokio::test]
async fn trailing_slash_in_base_is_ignored() {
    let (svc, _dir) = start().await;
    let c = Client::new(format!("{}/", svc.url()));
    assert_eq!(c.base_url(), svc.url());
    c.health().await.unwrap();
    svc.stop().await.unwrap();
}

#[tokio::test]
async fn api_errors_carry_status_and_body() {
    let (svc, _dir) = start().await;
    let c = Client::new(svc.url());
    let s = c.create_session("varian-trilogy").await.unwrap();
    c.attach(&s.id, "head-frame").await.unwrap();
    match c.attach(&s.id, "head-frame").await.unwrap_err() {
        ClientError::Api { status, body } => {
            assert_eq!(status, StatusCode::CONFLICT);
            assert_eq!(body.error, "conflict");
            assert!(body.message.contains("head-frame"), "{}", body.message);
            assert_eq!(body.revision, Some(1));
        }
        other => panic!("{other}"),
    }
    let e = c.session("missing").await.unwrap_err();
    assert_eq!(e.status(), Some(StatusCode::NOT_FOUND));
    assert!(e.to_string().starts_with("404"), "{e}");
    svc.stop().await.unwrap();
}

#[tokio::test]
async fn unreachable_server_is_a_transport_error() {
    let (svc, _dir) = start().await;
    let url = svc.url();
    svc.stop().await.unwrap();
    let e = Client::new(url).health().await.unwrap_err();
    assert!(matches!(e, ClientError::Http(_)), "{e}");
    assert_eq!(e.status(), None);
}

#[tokio::test]
async fn missing_stack_directory_is_an_io_error() {
    let (svc, _dir) = start().await;
    let c = Client::new(svc.url());
    let s = c.create_session("novalis").await.unwrap();
    let e = c
        .upload_stack(&s.id, Path::new("/nonexistent/stack"), &SurfaceOptions::default())
        .await
        .unwrap_err();
    assert!(matches!(e, ClientError::Io { .. }), "{e}");
    let e = c
        .reconstruct_stack(Path::new("/nonexistent/stack"), &SurfaceOptions::default(), MeshFormat::Stl)
        .await
        .unwrap_err();
    assert!(matches!(e, ClientError::Io { .. }), "{e}");
    svc.stop().await.unwrap();
}

#[tokio::test]
async fn ad_hoc_probe_coordinates_survive_the_query_string() {
    let (svc, _dir) = start().await;
    let c = Client::new(svc.url());
    let s = c.create_session("novalis").await.unwrap();
    let a = [-0.1, 1e-7, 123.456789012345];
    let b = [1.0 / 3.0, -2.5e3, 7.0];
    let r = c.measure(&s.id, Some((a, b))).await.unwrap();
    let got = &r.readings[0];
    assert_eq!([got.a_mm.x, got.a_mm.y, got.a_mm.z], a);
    assert_eq!([got.b_mm.x, got.b_mm.y, got.b_mm.z], b);
    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    assert!((got.distance_mm - d).abs() <= 1e-12 * d);
    svc.stop().await.unwrap();
}

#[tokio::test]
async fn state_values_round_trip_exactly() {
    let (svc, _dir) = start().await;
    let c = Client::new(svc.url());
    let s = c.create_session("varian-trilogy").await.unwrap();
    let p = PartialState {
        gantry_deg: Some(45.188182048693676),
        collimator_deg: Some(-0.1),
        couch_lateral_mm: Some(1.0 / 3.0),
        couch_longitudinal_mm: Some(-92.39746688693855),
        couch_vertical_mm: Some(1e-9),
        couch_rotation_deg: Some(12.345678901234567),
        field_size_mm: Some([100.0, 57.3]),
    };
    let r = c.put_state(&s.id, &p).await.unwrap();
    assert_eq!(PartialState::from(r.state), p);
    assert_eq!(PartialState::from(c.session(&s.id).await.unwrap().state), p);
    svc.stop().await.unwrap();
}
