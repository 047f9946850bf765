#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_atomnum");

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Runs the binary with `ATOMNUM_OUT` cleared unless `env` sets it.
pub fn atomnum(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("ATOMNUM_OUT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn atomnum")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs a command expected to succeed and returns its run directory.
pub fn run_ok(args: &[&str], out: &Path) -> PathBuf {
    let mut all: Vec<&str> = args.to_vec();
    let out_s = out.to_str().unwrap();
    all.extend(["--out", out_s]);
    let o = atomnum(&all, &[]);
    assert!(o.status.success(), "atomnum {args:?} failed: {}", stderr(&o));
    run_dir(&o)
}

pub fn run_dir(o: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout.lines().find_map(|l| l.strip_prefix("wrote ")).expect("`wrote <dir>` line");
    PathBuf::from(line.trim())
}

pub fn read_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

/// Columns by header name.
pub fn read_csv(path: &Path) -> BTreeMap<String, Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let headers: Vec<String> = r.headers().unwrap().iter().map(str::to_owned).collect();
    let mut cols: BTreeMap<String, Vec<f64>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
    for rec in r.records() {
        let rec = rec.unwrap();
        for (h, v) in headers.iter().zip(rec.iter()) {
            cols.get_mut(h).unwrap().push(v.parse().unwrap_or(f64::NAN));
        }
    }
    cols
}

/// All regular files below `dir`, relative paths, sorted.
pub fn files(dir: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, dir: &Path, acc: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, acc);
            } else {
                acc.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut acc = Vec::new();
    walk(dir, dir, &mut acc);
    acc.sort();
    acc
}

pub fn schema(name: &str) -> Value {
    read_json(&workspace_root().join("schemas").join(format!("{name}.schema.json")))
}

/// Checks the subset of JSON Schema used in `schemas/`: type, properties,
/// required, additionalProperties = false, items, minItems, enum, pattern,
/// minimum. Returns every violation.
pub fn validate(value: &Value, schema: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    check(value, schema, "$", &mut errs);
    errs
}

fn type_ok(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

fn check(v: &Value, s: &Value, at: &str, errs: &mut Vec<String>) {
    if let Some(t) = s.get("type") {
        let ok = match t {
            Value::String(t) => type_ok(v, t),
            Value::Array(ts) => ts.iter().any(|t| type_ok(v, t.as_str().unwrap())),
            _ => true,
        };
        if !ok {
            errs.push(format!("{at}: expected type {t}, got {v}"));
            return;
        }
    }
    if let Some(options) = s.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            errs.push(format!("{at}: {v} not in {options:?}"));
        }
    }
    if let (Some(p), Some(text)) = (s.get("pattern").and_then(Value::as_str), v.as_str()) {
        if !regex::Regex::new(p).unwrap().is_match(text) {
            errs.push(format!("{at}: {text:?} does not match {p}"));
        }
    }
    if let (Some(min), Some(x)) = (s.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            errs.push(format!("{at}: {x} < {min}"));
        }
    }
    if let Some(obj) = v.as_object() {
        let props = s.get("properties").and_then(Value::as_object);
        for req in s.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = req.as_str().unwrap();
            if !obj.contains_key(key) {
                errs.push(format!("{at}: missing required `{key}`"));
            }
        }
        for (k, child) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => check(child, sub, &format!("{at}.{k}"), errs),
                None if s.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    errs.push(format!("{at}: unexpected key `{k}`"))
                }
                None => {}
            }
        }
    }
    if let Some(arr) = v.as_array() {
        if let Some(min) = s.get("minItems").and_then(Value::as_u64) {
            if (arr.len() as u64) < min {
                errs.push(format!("{at}: {} items, need {min}", arr.len()));
            }
        }
        if let Some(items) = s.get("items") {
            for (i, child) in arr.iter().enumerate() {
                check(child, items, &format!("{at}[{i}]"), errs);
            }
        }
    }
}

pub fn assert_valid(path: &Path, schema_name: &str) {
    let errs = validate(&read_json(path), &schema(schema_name));
    assert!(errs.is_empty(), "{} against {schema_name}:\n{}", path.display(), errs.join("\n"));
}
