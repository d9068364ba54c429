//! JSON and CSV emission with run provenance.
//!
//! JSON never contains `NaN`: non-finite numbers are written as the strings
//! `"nan"`, `"inf"` and `"-inf"`. Floats use the shortest representation
//! that round-trips exactly.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::ser::{self, Serialize};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Text form of a float for CSV cells and JSON strings.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

fn float_value(v: f64) -> Value {
    match Number::from_f64(v) {
        Some(n) => Value::Number(n),
        None => Value::String(format_f64(v)),
    }
}

/// Converts any serializable value to a JSON tree with non-finite floats
/// replaced by strings.
pub fn to_value<T: Serialize + ?Sized>(value: &T) -> Result<Value> {
    value.serialize(ValueSerializer).map_err(|e| Error::Format(e.0))
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Writes a header and rows of floats (RFC 4180 quoting).
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_csv_to(&mut w, header, rows)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(w: &mut csv::Writer<W>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch { expected: header.len(), found: row.len() });
        }
        w.write_record(row.iter().map(|v| format_f64(*v)))?;
    }
    Ok(())
}

/// Lowercase hex SHA-256 of the canonical JSON form of a configuration.
pub fn config_hash<T: Serialize + ?Sized>(config: &T) -> Result<String> {
    let canonical = serde_json::to_string(&to_value(config)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(hex::encode(digest))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    /// Taken from `SOURCE_DATE_EPOCH` when set, so reruns stay identical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub config: Value,
}

impl Provenance {
    pub fn new<T: Serialize + ?Sized>(command: &str, config: &T) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config_hash: config_hash(config)?,
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok(),
            config: to_value(config)?,
        })
    }
}

/// Report body plus provenance, serialized as one JSON object.
pub fn with_provenance<T: Serialize + ?Sized>(provenance: &Provenance, body: &T) -> Result<Value> {
    let mut m = Map::new();
    m.insert("provenance".into(), to_value(provenance)?);
    m.insert("result".into(), to_value(body)?);
    Ok(Value::Object(m))
}

#[derive(Debug)]
pub struct SerError(String);

impl std::fmt::Display for SerError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SerError {}

impl ser::Error for SerError {
    fn custom<T: std::fmt::Display>(msg: T) -> Self {
        SerError(msg.to_string())
    }
}

struct ValueSerializer;

type R = std::result::Result<Value, SerError>;

impl ser::Serializer for ValueSerializer {
    type Ok = Value;
    type Error = SerError;
    type SerializeSeq = SeqBuilder;
    type SerializeTuple = SeqBuilder;
    type SerializeTupleStruct = SeqBuilder;
    type SerializeTupleVariant = VariantSeq;
    type SerializeMap = MapBuilder;
    type SerializeStruct = MapBuilder;
    type SerializeStructVariant = VariantMap;

    fn serialize_bool(self, v: bool) -> R {
        Ok(Value::Bool(v))
    }
    fn serialize_i8(self, v: i8) -> R {
        Ok(Value::from(v))
    }
    fn serialize_i16(self, v: i16) -> R {
        Ok(Value::from(v))
    }
    fn serialize_i32(self, v: i32) -> R {
        Ok(Value::from(v))
    }
    fn serialize_i64(self, v: i64) -> R {
        Ok(Value::from(v))
    }
    fn serialize_u8(self, v: u8) -> R {
        Ok(Value::from(v))
    }
    fn serialize_u16(self, v: u16) -> R {
        Ok(Value::from(v))
    }
    fn serialize_u32(self, v: u32) -> R {
        Ok(Value::from(v))
    }
    fn serialize_u64(self, v: u64) -> R {
        Ok(Value::from(v))
    }
    fn serialize_f32(self, v: f32) -> R {
        Ok(float_value(v as f64))
    }
    fn serialize_f64(self, v: f64) -> R {
        Ok(float_value(v))
    }
    fn serialize_char(self, v: char) -> R {
        Ok(Value::String(v.to_string()))
    }
    fn serialize_str(self, v: &str) -> R {
        Ok(Value::String(v.into()))
    }
    fn serialize_bytes(self, v: &[u8]) -> R {
        Ok(Value::Array(v.iter().map(|b| Value::from(*b)).collect()))
    }
    fn serialize_none(self) -> R {
        Ok(Value::Null)
    }
    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> R {
        value.serialize(self)
    }
    fn serialize_unit(self) -> R {
        Ok(Value::Null)
    }
    fn serialize_unit_struct(self, _: &'static str) -> R {
        Ok(Value::Null)
    }
    fn serialize_unit_variant(self, _: &'static str, _: u32, variant: &'static str) -> R {
        Ok(Value::String(variant.into()))
    }
    fn serialize_newtype_struct<T: Serialize + ?Sized>(self, _: &'static str, value: &T) -> R {
        value.serialize(self)
    }
    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        value: &T,
    ) -> R {
        let mut m = Map::new();
        m.insert(variant.into(), value.serialize(ValueSerializer)?);
        Ok(Value::Object(m))
    }
    fn serialize_seq(self, len: Option<usize>) -> std::result::Result<SeqBuilder, SerError> {
        Ok(SeqBuilder(Vec::with_capacity(len.unwrap_or(0))))
    }
    fn serialize_tuple(self, len: usize) -> std::result::Result<SeqBuilder, SerError> {
        self.serialize_seq(Some(len))
    }
    fn serialize_tuple_struct(self, _: &'static str, len: usize) -> std::result::Result<SeqBuilder, SerError> {
        self.serialize_seq(Some(len))
    }
    fn serialize_tuple_variant(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        _: usize,
    ) -> std::result::Result<VariantSeq, SerError> {
        Ok(VariantSeq(variant, Vec::new()))
    }
    fn serialize_map(self, _: Option<usize>) -> std::result::Result<MapBuilder, SerError> {
        Ok(MapBuilder(Map::new(), None))
    }
    fn serialize_struct(self, _: &'static str, _: usize) -> std::result::Result<MapBuilder, SerError> {
        Ok(MapBuilder(Map::new(), None))
    }
    fn serialize_struct_variant(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        _: usize,
    ) -> std::result::Result<VariantMap, SerError> {
        Ok(VariantMap(variant, Map::new()))
    }
}

struct SeqBuilder(Vec<Value>);

impl ser::SerializeSeq for SeqBuilder {
    type Ok = Value;
    type Error = SerError;
    fn serialize_element<T: Serialize + ?Sized>(&mut self, v: &T) -> std::result::Result<(), SerError> {
        self.0.push(v.serialize(ValueSerializer)?);
        Ok(())
    }
    fn end(self) -> R {
        Ok(Value::Array(self.0))
    }
}

impl ser::SerializeTuple for SeqBuilder {
    type Ok = Value;
    type Error = SerError;
    fn serialize_element<T: Serialize + ?Sized>(&mut self, v: &T) -> std::result::Result<(), SerError> {
        ser::SerializeSeq::serialize_element(self, v)
    }
    fn end(self) -> R {
        ser::SerializeSeq::end(self)
    }
}

impl ser::SerializeTupleStruct for SeqBuilder {
    type Ok = Value;
    type Error = SerError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, v: &T) -> std::result::Result<(), SerError> {
        ser::SerializeSeq::serialize_element(self, v)
    }
    fn end(self) -> R {
        ser::SerializeSeq::end(self)
    }
}

struct VariantSeq(&'static str, Vec<Value>);

impl ser::SerializeTupleVariant for VariantSeq {
    type Ok = Value;
    type Error = SerError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, v: &T) -> std::result::Result<(), SerError> {
        self.1.push(v.serialize(ValueSerializer)?);
        Ok(())
    }
    fn end(self) -> R {
        let mut m = Map::new();
        m.insert(self.0.into(), Value::Array(self.1));
        Ok(Value::Object(m))
    }
}

struct MapBuilder(Map<String, Value>, Option<String>);

impl ser::SerializeMap for MapBuilder {
    type Ok = Value;
    type Error = SerError;
    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> std::result::Result<(), SerError> {
        let k = match key.serialize(ValueSerializer)? {
            Value::String(s) => s,
            other => other.to_string(),
        };
        self.1 = Some(k);
        Ok(())
    }
    fn serialize_value<T: Serialize + ?Sized>(&mut self, v: &T) -> std::result::Result<(), SerError> {
        let k = self.1.take().ok_or_else(|| SerError("value without key".into()))?;
        self.0.insert(k, v.serialize(ValueSerializer)?);
        Ok(())
    }
    fn end(self) -> R {
        Ok(Value::Object(self.0))
    }
}

impl ser::SerializeStruct for MapBuilder {
    type Ok = Value;
    type Error = SerError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, key: &'static str, v: &T) -> std::result::Result<(), SerError> {
        self.0.insert(key.into(), v.serialize(ValueSerializer)?);
        Ok(())
    }
    fn end(self) -> R {
        Ok(Value::Object(self.0))
    }
}

struct VariantMap(&'static str, Map<String, Value>);

impl ser::SerializeStructVariant for VariantMap {
    type Ok = Value;
    type Error = SerError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, key: &'static str, v: &T) -> std::result::Result<(), SerError> {
        self.1.insert(key.into(), v.serialize(ValueSerializer)?);
        Ok(())
    }
    fn end(self) -> R {
        let mut m = Map::new();
        m.insert(self.0.into(), Value::Object(self.1));
        Ok(Value::Object(m))
    }
}

/// Flat `key = value` configuration; keys are the CLI flag names.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(Error::Format(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Serialize)]
    struct Sample {
        a: f64,
        b: Vec<f64>,
        c: Option<f64>,
        d: (f64, f64),
    }

    #[test]
    fn non_finite_floats_become_strings() {
        let s = Sample { a: f64::NAN, b: vec![1.5, f64::INFINITY, f64::NEG_INFINITY], c: None, d: (0.1, 2.0) };
        let j = to_json_string(&s).unwrap();
        assert!(j.contains("\"nan\"") && j.contains("\"inf\"") && j.contains("\"-inf\""));
        assert!(!j.contains("NaN"));
        let back: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(back["d"][0].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1f64, 1.0 / 3.0, 4.613506109379340, 1e-300, 6.02e23] {
            let j = to_json_string(&v).unwrap();
            assert_eq!(j.trim().parse::<f64>().unwrap(), v);
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&(1, 2.5, "x")).unwrap();
        assert_eq!(a, config_hash(&(1, 2.5, "x")).unwrap());
        assert_ne!(a, config_hash(&(1, 2.5, "y")).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn config_parsing() {
        let m = parse_config("# c\nN = 3\n--grid=48\n\n").unwrap();
        assert_eq!(m["N"], "3");
        assert_eq!(m["grid"], "48");
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn csv_quotes_and_formats() {
        let mut w = csv::Writer::from_writer(Vec::new());
        write_csv_to(&mut w, &["a,b", "c"], &[vec![1.0, f64::NAN]]).unwrap();
        let s = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(s, "\"a,b\",c\n1.0,nan\n");
    }
}
