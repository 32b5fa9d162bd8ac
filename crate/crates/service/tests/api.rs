mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::{classifier_package, external_package, python_available, start, ADMIN};
use lwdock_core::market::Market;
use lwdock_core::specification::{SemanticFilter, StatKind, TaskType};
use lwdock_core::storage::schema::StatDocument;
use lwdock_core::Status;
use lwdock_service::{ClientError, ListFilter, SearchRequest};

fn api_status(err: ClientError) -> (u16, String) {
    match err {
        ClientError::Api { status, code, .. } => (status, code),
        other => panic!("expected an API error, got {other}"),
    }
}

#[test]
fn submit_verify_fetch_and_search() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let client = server.client();

    let centers = [[0.0, 0.0, 0.0], [8.0, 0.0, 0.0], [0.0, 8.0, 0.0]];
    let mut submitted = Vec::new();
    for (i, c) in centers.iter().enumerate() {
        let (pkg, _) = classifier_package(&format!("dev{i}"), c, i as u64);
        let bytes = pkg.pack().unwrap();
        let s = client.submit(bytes.clone()).unwrap();
        assert_eq!(s.status, Status::Waiting);
        submitted.push((s.id, pkg, bytes));
    }
    for (id, _, bytes) in &submitted {
        let d = client.wait_terminal(id, Duration::from_secs(30)).unwrap();
        assert_eq!(d.record.status, Status::Verified, "{:?}", d.record.failures);
        assert_eq!(d.specs[0].kind, StatKind::RkmeTable);
        assert_eq!((d.specs[0].n, d.specs[0].dim), (10, 3));
        assert_eq!(&client.package(id).unwrap(), bytes);
    }

    for (id, pkg, _) in &submitted {
        let req = SearchRequest {
            stat: Some(StatDocument::from_spec(&pkg.stat_specs[0])),
            ..Default::default()
        };
        let res = client.search(&req).unwrap();
        assert_eq!(&res.single[0].id, id);
        assert!((res.single[0].score - 1.0).abs() < 1e-9);
        assert_eq!(res.multiple.ids[0], *id);
    }

    let semantic_only = SearchRequest {
        semantic: Some(SemanticFilter {
            task_type: Some(TaskType::Classification),
            ..Default::default()
        }),
        ..Default::default()
    };
    let res = client.search(&semantic_only).unwrap();
    assert_eq!(res.single.len(), 3);
    assert!(res
        .single
        .iter()
        .all(|h| h.score == 1.0 && h.mmd2.is_none()));

    let all = client.list(&ListFilter::default()).unwrap();
    assert_eq!(
        all.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
        submitted.iter().map(|s| s.0.clone()).collect::<Vec<_>>()
    );
    let verified = ListFilter {
        status: Some("VERIFIED".into()),
        task_type: Some("classification".into()),
        ..Default::default()
    };
    assert_eq!(client.list(&verified).unwrap().len(), 3);
    let none = ListFilter {
        task_type: Some("regression".into()),
        ..Default::default()
    };
    assert!(client.list(&none).unwrap().is_empty());
    let blank = ListFilter {
        status: Some(String::new()),
        scenario: Some("retail".into()),
        ..Default::default()
    };
    assert_eq!(client.list(&blank).unwrap().len(), 3);
    let bad = ListFilter {
        status: Some("DONE".into()),
        ..Default::default()
    };
    assert_eq!(api_status(client.list(&bad).unwrap_err()).0, 400);

    let h = client.health().unwrap();
    assert_eq!((h.queue_depth, h.verified_count), (0, 3));
}

#[test]
fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let client = server.client();

    assert_eq!(
        api_status(client.submit(b"not a zip".to_vec()).unwrap_err()),
        (400, "PackageFormatError".into())
    );
    assert_eq!(api_status(client.get("nope").unwrap_err()).0, 404);
    assert_eq!(api_status(client.package("nope").unwrap_err()).0, 404);
    let empty = SearchRequest::default();
    assert_eq!(
        api_status(client.search(&empty).unwrap_err()),
        (400, "ParameterError".into())
    );

    let (pkg, _) = classifier_package("a", &[0.0, 0.0], 1);
    let id = client.submit(pkg.pack().unwrap()).unwrap().id;
    client.wait_terminal(&id, Duration::from_secs(30)).unwrap();
    assert_eq!(api_status(client.delete(&id).unwrap_err()).0, 401);
    assert_eq!(
        api_status(
            server
                .client()
                .with_admin_token("wrong")
                .delete(&id)
                .unwrap_err()
        )
        .0,
        401
    );
    let admin = server.client().with_admin_token(ADMIN);
    admin.delete(&id).unwrap();
    assert_eq!(api_status(client.get(&id).unwrap_err()).0, 404);
    assert_eq!(api_status(admin.delete(&id).unwrap_err()).0, 404);
}

#[test]
fn raw_search_body_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let http = reqwest::blocking::Client::new();
    let url = format!("{}/api/search", server.url());
    let resp = http
        .post(&url)
        .header("content-type", "application/json")
        .body("{\"stat\": 3}")
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let resp = http
        .post(&url)
        .header("content-type", "application/json")
        .body("{\"extra\": 1}")
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 400);
}

#[test]
fn waiting_package_is_not_downloadable_and_submission_is_fast() {
    if !python_available() {
        eprintln!("python3 not found; skipped");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let client = server.client();

    let slow = external_package("slow", "slow", &["3"]).pack().unwrap();
    let t = Instant::now();
    let slow_id = client.submit(slow).unwrap().id;
    assert!(t.elapsed() < Duration::from_secs(1), "{:?}", t.elapsed());

    // the worker is now busy with the slow check
    let (pkg, _) = classifier_package("queued", &[0.0, 0.0], 2);
    let t = Instant::now();
    let queued = client.submit(pkg.pack().unwrap()).unwrap().id;
    assert!(t.elapsed() < Duration::from_secs(1), "{:?}", t.elapsed());
    assert_eq!(client.get(&queued).unwrap().record.status, Status::Waiting);
    assert_eq!(
        api_status(client.package(&queued).unwrap_err()),
        (409, "StateError".into())
    );
    assert!(client.health().unwrap().queue_depth >= 1);

    assert_eq!(
        client
            .wait_terminal(&slow_id, Duration::from_secs(30))
            .unwrap()
            .record
            .status,
        Status::Verified
    );
    assert_eq!(
        client
            .wait_terminal(&queued, Duration::from_secs(30))
            .unwrap()
            .record
            .status,
        Status::Verified
    );
    client.package(&queued).unwrap();
}

#[test]
fn crashing_model_is_rejected_and_the_worker_continues() {
    if !python_available() {
        eprintln!("python3 not found; skipped");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let client = server.client();
    let bad = client
        .submit(external_package("crash", "crash", &[]).pack().unwrap())
        .unwrap()
        .id;
    let (pkg, _) = classifier_package("after", &[1.0, 1.0], 3);
    let good = client.submit(pkg.pack().unwrap()).unwrap().id;
    let d = client.wait_terminal(&bad, Duration::from_secs(30)).unwrap();
    assert_eq!(d.record.status, Status::Rejected);
    assert_eq!(d.record.failures, vec!["MODEL_LOAD"]);
    assert_eq!(
        client
            .wait_terminal(&good, Duration::from_secs(30))
            .unwrap()
            .record
            .status,
        Status::Verified
    );
}

#[test]
fn verification_follows_submission_order() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let client = server.client();
    let ids: Vec<String> = (0..10)
        .map(|i| {
            client
                .submit(
                    classifier_package(&format!("s{i}"), &[i as f64, 0.0], i)
                        .0
                        .pack()
                        .unwrap(),
                )
                .unwrap()
                .id
        })
        .collect();
    let mut decided: Vec<(i64, String)> = ids
        .iter()
        .map(|id| {
            let r = client
                .wait_terminal(id, Duration::from_secs(30))
                .unwrap()
                .record;
            (
                r.decided_seq
                    .expect("terminal records carry a verdict order"),
                r.id,
            )
        })
        .collect();
    decided.sort();
    assert_eq!(
        decided.into_iter().map(|(_, id)| id).collect::<Vec<_>>(),
        ids
    );
}

#[test]
fn queue_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = {
        let market = Market::open(dir.path()).unwrap();
        (0..3)
            .map(|i| {
                market
                    .insert(&classifier_package(&format!("p{i}"), &[0.0, 0.0], i).0)
                    .unwrap()
                    .id
            })
            .collect()
    };
    let server = start(dir.path());
    let client = server.client();
    for id in &ids {
        assert_eq!(
            client
                .wait_terminal(id, Duration::from_secs(30))
                .unwrap()
                .record
                .status,
            Status::Verified
        );
    }
}

#[test]
fn concurrent_submissions_get_distinct_ids() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let url = server.url();
    let packages: Vec<Vec<u8>> = (0..16)
        .map(|i| {
            classifier_package(&format!("c{i}"), &[i as f64, 0.0], i)
                .0
                .pack()
                .unwrap()
        })
        .collect();
    let handles: Vec<_> = packages
        .into_iter()
        .map(|bytes| {
            let url = url.clone();
            std::thread::spawn(move || lwdock_service::Client::new(url).submit(bytes).unwrap().id)
        })
        .collect();
    let ids: Vec<String> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), 16);
    let client = server.client();
    for id in &ids {
        let status = client
            .wait_terminal(id, Duration::from_secs(60))
            .unwrap()
            .record
            .status;
        assert_eq!(status, Status::Verified);
    }
}
