//! The checked-in OpenAPI document matches the generator, every documented
//! route is served, and live responses fit their documented schemas.
//!
//! Regenerate with `COMPLIPAY_WRITE_DOCS=1 cargo test -p complipay-server --test openapi`.

use std::path::PathBuf;

use complipay_core::authz::{sign_authorization, Keypair, PaymentAuthorization};
use complipay_core::compliance::{PolicyConfig, PolicyWrapper, SanctionsList};
use complipay_core::gateway::{GatewayConfig, PaymentService, PaymentSubmission};
use complipay_core::ledger::Ledger;
use complipay_core::{AccountId, Balance, Nonce, TxId};
use complipay_server::openapi::{document, ENDPOINTS};
use complipay_server::{serve, AppState, Clock};
use serde_json::{json, Value};

const T0: u64 = 1_700_000_000;

fn docs_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/openapi.json")
}

#[test]
fn checked_in_document_is_current() {
    let generated = serde_json::to_string_pretty(&document()).unwrap() + "\n";
    if std::env::var_os("COMPLIPAY_WRITE_DOCS").is_some() {
        std::fs::write(docs_path(), &generated).unwrap();
    }
    let on_disk = std::fs::read_to_string(docs_path()).unwrap_or_default();
    assert!(on_disk == generated, "docs/openapi.json is stale; rerun with COMPLIPAY_WRITE_DOCS=1");
}

#[test]
fn every_reference_resolves() {
    let doc = document();
    fn walk(v: &Value, doc: &Value) {
        match v {
            Value::Object(m) => {
                if let Some(Value::String(r)) = m.get("$ref") {
                    let name = r.strip_prefix("#/components/schemas/").unwrap();
                    assert!(doc["components"]["schemas"].get(name).is_some(), "dangling {r}");
                }
                m.values().for_each(|x| walk(x, doc));
            }
            Value::Array(a) => a.iter().for_each(|x| walk(x, doc)),
            _ => {}
        }
    }
    walk(&doc, &doc);
}

fn key(name: &str) -> Keypair {
    Keypair::demo(2, &AccountId::from(name))
}

async fn start() -> (String, reqwest::Client) {
    let mut ledger = Ledger::new();
    for (name, bal) in [("buyer", 50_000u128), ("seller", 0), ("compliance", 0)] {
        ledger.create_account(name.into(), key(name).public_key(), Balance(bal)).unwrap();
    }
    let wrapper = PolicyWrapper::new(ledger, PolicyConfig::default(), SanctionsList::default()).unwrap();
    let mut svc = PaymentService::new(wrapper, GatewayConfig::default());
    svc.list_item("big", "seller".into(), Balance(15_000));
    let state = AppState::new(svc, Clock::manual(T0));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, state, std::future::pending()));
    (base, reqwest::Client::new())
}

fn submission(tx: &str, amount: u128, n: u8) -> PaymentSubmission {
    let authorization = PaymentAuthorization {
        payer: "buyer".into(),
        payee: "seller".into(),
        amount: Balance(amount),
        valid_after: T0 - 1,
        valid_before: T0 + 300,
        nonce: Nonce([n; 32]),
    };
    let signature = sign_authorization(&key("buyer"), &authorization).unwrap();
    PaymentSubmission { tx_id: TxId::from(tx), authorization, signature }
}

/// Structural check: types, required keys, closed objects, enums.
fn conforms(value: &Value, schema: &Value, doc: &Value, at: &str) -> Result<(), String> {
    if let Some(r) = schema["$ref"].as_str() {
        let name = r.rsplit('/').next().unwrap();
        return conforms(value, &doc["components"]["schemas"][name], doc, at);
    }
    if let Some(allowed) = schema["enum"].as_array() {
        if !allowed.contains(value) {
            return Err(format!("{at}: {value} not in enum"));
        }
    }
    match schema["type"].as_str() {
        Some("object") => {
            let obj = value.as_object().ok_or(format!("{at}: not an object"))?;
            for k in schema["required"].as_array().into_iter().flatten() {
                if !obj.contains_key(k.as_str().unwrap()) {
                    return Err(format!("{at}: missing {k}"));
                }
            }
            if let Some(props) = schema["properties"].as_object() {
                for (k, v) in obj {
                    match props.get(k) {
                        Some(s) => conforms(v, s, doc, &format!("{at}.{k}"))?,
                        None if schema["additionalProperties"] == false => return Err(format!("{at}: extra key {k}")),
                        None => {}
                    }
                }
            }
            Ok(())
        }
        Some("array") => {
            let items = value.as_array().ok_or(format!("{at}: not an array"))?;
            for (i, v) in items.iter().enumerate() {
                conforms(v, &schema["items"], doc, &format!("{at}[{i}]"))?;
            }
            Ok(())
        }
        Some("string") if !value.is_string() => Err(format!("{at}: not a string")),
        Some("integer") if !value.is_u64() => Err(format!("{at}: not an integer")),
        _ => Ok(()),
    }
}

fn documented(method: &str, template: &str, status: u16) -> Value {
    let e = ENDPOINTS
        .iter()
        .find(|e| e.method == method && e.path == template)
        .unwrap_or_else(|| panic!("{method} {template} undocumented"));
    let (_, _, schema) = e
        .responses
        .iter()
        .find(|(s, _, _)| *s == status)
        .unwrap_or_else(|| panic!("{method} {template} has no documented {status}"));
    json!({ "$ref": format!("#/components/schemas/{}", schema.unwrap()) })
}

#[tokio::test]
async fn live_responses_fit_documented_schemas() {
    let (base, client) = start().await;
    let doc = document();
    let mut checked = 0;
    macro_rules! call {
        ($method:literal, $template:literal, $path:expr, $body:expr) => {{
            let url = format!("{base}{}", $path);
            let req = match $method {
                "get" => client.get(url),
                _ => client.post(url).json(&$body),
            };
            let resp = req.send().await.unwrap();
            let status = resp.status().as_u16();
            let body: Value = resp.json().await.unwrap();
            let schema = documented($method, $template, status);
            conforms(&body, &schema, &doc, "$").unwrap_or_else(|e| panic!("{} {}: {e}\n{body}", $method, $path));
            checked += 1;
            body
        }};
    }

    let req = call!("get", "/resource/{item}", "/resource/big", ());
    call!("get", "/resource/{item}", "/resource/none", ());
    let tx = req["tx_id"].as_str().unwrap().to_owned();
    let pending = call!("post", "/pay", "/pay", submission(&tx, 15_000, 1));
    call!("post", "/pay", "/pay", json!({ "tx_id": tx }));
    call!("post", "/pay", "/pay", submission(&tx, 10, 1));
    let pid = pending["proposal"]["proposal_id"].as_str().unwrap().to_owned();
    call!("get", "/proposals/{id}", format!("/proposals/{pid}"), ());
    call!("get", "/proposals/{id}", "/proposals/nope", ());
    let accept = json!({ "tranche1": submission(&tx, 10_000, 2), "tranche2": submission(&tx, 5_000, 3) });
    let accepted = call!("post", "/proposals/{id}/accept", format!("/proposals/{pid}/accept"), accept);
    call!("post", "/proposals/{id}/accept", format!("/proposals/{pid}/accept"), accept);
    call!("get", "/evidence/requests", "/evidence/requests", ());
    let ev = json!({ "subject": "buyer", "declared_source": "salary", "covering_amount": "15000" });
    call!("post", "/evidence", "/evidence", ev);
    call!("post", "/evidence", "/evidence", json!({ "subject": "buyer" }));
    call!("get", "/attestations/{tx_id}", format!("/attestations/{tx}"), ());
    call!("get", "/attestations/{tx_id}", "/attestations/none", ());
    call!("get", "/accounts/{id}/balance", "/accounts/seller/balance", ());
    call!("get", "/accounts/{id}/balance", "/accounts/none/balance", ());
    let lock = accepted["tranche2"]["lock"]["lock_id"].as_str().unwrap().to_owned();
    let l = call!("get", "/escrow/{lock_id}", format!("/escrow/{lock}"), ());
    assert_eq!(l["state"], "RELEASED");
    call!("get", "/escrow/{lock_id}", "/escrow/none", ());
    call!("get", "/transcript", "/transcript", ());
    call!("get", "/snapshot", "/snapshot", ());

    let routes: std::collections::BTreeSet<_> = ENDPOINTS.iter().map(|e| (e.method, e.path)).collect();
    assert_eq!(routes.len(), ENDPOINTS.len());
    assert!(checked >= 2 * ENDPOINTS.len() - 3, "only {checked} calls checked");

    let resp = client.get(format!("{base}/not/documented")).send().await.unwrap();
    assert_eq!(resp.status().as_u16(), 404);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["code"], "UnknownEndpoint");
}
