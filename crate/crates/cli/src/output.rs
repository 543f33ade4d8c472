//! One result per line: `key=value` pairs, or a JSON object.

use serde_json::{Map, Value};

pub enum Field {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl Field {
    fn text(&self) -> String {
        match self {
            Field::Num(v) => v.to_string(),
            Field::Int(v) => v.to_string(),
            Field::Text(s) => s.clone(),
            Field::Bool(b) => b.to_string(),
        }
    }

    /// Non-finite numbers become strings so the line stays valid JSON.
    fn json(&self) -> Value {
        match self {
            Field::Num(v) if v.is_finite() => Value::from(*v),
            Field::Num(v) => Value::from(v.to_string()),
            Field::Int(v) => Value::from(*v),
            Field::Text(s) => Value::from(s.as_str()),
            Field::Bool(b) => Value::from(*b),
        }
    }
}

#[derive(Default)]
pub struct Line(Vec<(&'static str, Field)>);

impl Line {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &'static str, value: Field) -> Self {
        self.0.push((key, value));
        self
    }

    pub fn render(&self, json: bool) -> String {
        if json {
            let map: Map<String, Value> = self.0.iter().map(|(k, v)| (k.to_string(), v.json())).collect();
            Value::Object(map).to_string()
        } else {
            self.0.iter().map(|(k, v)| format!("{k}={}", v.text())).collect::<Vec<_>>().join(" ")
        }
    }

    pub fn print(&self, json: bool) {
        println!("{}", self.render(json));
    }
}
