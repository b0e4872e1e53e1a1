#![allow(dead_code)]

use std::sync::Arc;

use intent_grasp::agents::AgentNoiseParams;
use intent_grasp::world::Scene;
use intent_grasp_harness::{http, ServiceConfig, Store};
use serde_json::{json, Value};

pub fn object(id: &str, category: &str, color: &str, affordance: &str, b: [f64; 4]) -> Value {
    json!({
        "id": id,
        "category": category,
        "attributes": {"color": color, "size": "medium"},
        "affordances": [affordance],
        "box": b,
        "height_m": 0.08,
    })
}

pub fn scene(id: &str, objects: Vec<Value>, target: &str) -> Scene {
    serde_json::from_value(json!({
        "id": id,
        "width": 640,
        "height": 480,
        "objects": objects,
        "target_id": target,
        "table_z": 0.0,
        "clutter_mode": false,
    }))
    .unwrap()
}

/// Coke can and water bottle (the target), plus a pen.
pub fn two_drinks() -> Scene {
    scene(
        "two-drinks",
        vec![
            object("o0", "coke can", "red", "drinkable", [50.0, 50.0, 120.0, 130.0]),
            object("o1", "water bottle", "blue", "drinkable", [300.0, 200.0, 380.0, 300.0]),
            object("o2", "pen", "black", "writing", [500.0, 100.0, 560.0, 170.0]),
        ],
        "o1",
    )
}

/// White and pink (target) candles plus a flashlight.
pub fn candles() -> Scene {
    scene(
        "candles",
        vec![
            object("o0", "candle", "white", "lighting", [60.0, 60.0, 140.0, 150.0]),
            object("o1", "candle", "pink", "lighting", [250.0, 260.0, 330.0, 350.0]),
            object("o2", "flashlight", "black", "lighting", [450.0, 80.0, 560.0, 160.0]),
        ],
        "o1",
    )
}

pub fn noiseless() -> ServiceConfig {
    ServiceConfig { agent: AgentNoiseParams::noiseless(), ..Default::default() }
}

pub struct Server {
    pub base: String,
    pub store: Arc<Store>,
    pub client: reqwest::Client,
}

impl Server {
    pub async fn start(config: ServiceConfig) -> Server {
        let store = Arc::new(Store::open(config).unwrap());
        let (addr, serve) = http::bind(store.clone(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
        tokio::spawn(serve);
        Server { base: format!("http://{addr}"), store, client: reqwest::Client::new() }
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get_bytes(&self, path: &str) -> (u16, Vec<u8>) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status().as_u16(), r.bytes().await.unwrap().to_vec())
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post_raw(&self, path: &str, body: &'static str) -> (u16, Value) {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn delete(&self, path: &str) -> (u16, Value) {
        let r = self.client.delete(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }
}

/// Asserts an `{code, message}` error body with the expected HTTP status.
pub fn assert_error(resp: &(u16, Value), status: u16, code: &str) {
    assert_eq!(resp.0, status, "{}", resp.1);
    assert_eq!(resp.1["code"], code, "{}", resp.1);
    assert!(resp.1["message"].as_str().is_some_and(|m| !m.is_empty()), "{}", resp.1);
}
