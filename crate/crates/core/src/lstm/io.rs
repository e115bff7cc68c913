//! Versioned plain-text model format. Every float is stored as the hex of
//! its IEEE-754 bits, so a round trip is bit-exact.
//!
//! ```text
//! malaria-forecast-model 1
//! label <key> <value...>
//! variant univariate
//! lookback 12
//! features 1
//! hidden 32
//! scaler input_min|input_max|target_min|target_max <n> <hex>...
//! tensor <name> <rows> <cols> <hex>...
//! loss_history <n> <hex>...
//! end
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::math::MinMaxScaler;
use crate::window::{Variant, WindowSpec};

use super::{LstmParams, TrainedModel};

pub const MODEL_MAGIC: &str = "malaria-forecast-model";
pub const MODEL_VERSION: u32 = 1;

fn hex_line(out: &mut String, head: &str, values: &[f64]) {
    out.push_str(head);
    for v in values {
        let _ = write!(out, " {:016x}", v.to_bits());
    }
    out.push('\n');
}

pub fn write_model(m: &TrainedModel) -> String {
    let mut s = format!("{MODEL_MAGIC} {MODEL_VERSION}\n");
    for (k, v) in &m.labels {
        let _ = writeln!(s, "label {k} {v}");
    }
    let _ = writeln!(s, "variant {}", m.spec.variant);
    let _ = writeln!(s, "lookback {}", m.spec.lookback);
    let _ = writeln!(s, "features {}", m.params.features());
    let _ = writeln!(s, "hidden {}", m.params.hidden());
    for (name, v) in [
        ("input_min", m.input_scaler.min()),
        ("input_max", m.input_scaler.max()),
        ("target_min", m.target_scaler.min()),
        ("target_max", m.target_scaler.max()),
    ] {
        hex_line(&mut s, &format!("scaler {name} {}", v.len()), v);
    }
    let shapes = m.params.tensor_shapes();
    for ((name, t), (r, c)) in LstmParams::tensor_names()
        .iter()
        .zip(m.params.tensors())
        .zip(shapes)
    {
        hex_line(&mut s, &format!("tensor {name} {r} {c}"), t);
    }
    hex_line(
        &mut s,
        &format!("loss_history {}", m.loss_history.len()),
        &m.loss_history,
    );
    s.push_str("end\n");
    s
}

fn fmt_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| fmt_err(line, format!("expected {what}")))
}

fn parse_hex(toks: &[&str], n: usize, line: usize) -> Result<Vec<f64>> {
    if toks.len() != n {
        return Err(fmt_err(
            line,
            format!("expected {n} values, found {}", toks.len()),
        ));
    }
    toks.iter()
        .map(|t| {
            u64::from_str_radix(t, 16)
                .map(f64::from_bits)
                .map_err(|_| fmt_err(line, format!("'{t}' is not a hex float")))
        })
        .collect()
}

pub fn read_model(text: &str) -> Result<TrainedModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty model file".into()))?;
    match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        [magic, v] if *magic == MODEL_MAGIC => {
            if v.parse::<u32>().ok() != Some(MODEL_VERSION) {
                return Err(Error::Format(format!("unsupported model version '{v}'")));
            }
        }
        _ => return Err(Error::Format("not a model file".into())),
    }

    let mut labels = BTreeMap::new();
    let mut variant = None;
    let mut lookback = None;
    let mut features = None;
    let mut hidden = None;
    let mut scalers: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut tensors: BTreeMap<String, ((usize, usize), Vec<f64>)> = BTreeMap::new();
    let mut history = None;
    let mut ended = false;
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "label" => {
                let mut parts = line.splitn(3, ' ');
                parts.next();
                let k = parts
                    .next()
                    .ok_or_else(|| fmt_err(no, "label without key"))?;
                labels.insert(k.to_string(), parts.next().unwrap_or("").to_string());
            }
            "variant" => {
                variant = Some(
                    toks.get(1)
                        .ok_or_else(|| fmt_err(no, "variant without value"))?
                        .parse::<Variant>()?,
                )
            }
            "lookback" => lookback = Some(parse_usize(toks.get(1).copied(), no, "lookback")?),
            "features" => features = Some(parse_usize(toks.get(1).copied(), no, "features")?),
            "hidden" => hidden = Some(parse_usize(toks.get(1).copied(), no, "hidden")?),
            "scaler" => {
                let name = toks
                    .get(1)
                    .ok_or_else(|| fmt_err(no, "scaler without name"))?;
                let n = parse_usize(toks.get(2).copied(), no, "scaler width")?;
                scalers.insert(name.to_string(), parse_hex(&toks[3..], n, no)?);
            }
            "tensor" => {
                let name = toks
                    .get(1)
                    .ok_or_else(|| fmt_err(no, "tensor without name"))?;
                let r = parse_usize(toks.get(2).copied(), no, "rows")?;
                let c = parse_usize(toks.get(3).copied(), no, "cols")?;
                let v = parse_hex(toks.get(4..).unwrap_or(&[]), r * c, no)?;
                tensors.insert(name.to_string(), ((r, c), v));
            }
            "loss_history" => {
                let n = parse_usize(toks.get(1).copied(), no, "history length")?;
                history = Some(parse_hex(&toks[2..], n, no)?);
            }
            "end" => {
                ended = true;
                break;
            }
            other => return Err(fmt_err(no, format!("unknown record '{other}'"))),
        }
    }
    if !ended {
        return Err(Error::Format("truncated model file (no 'end')".into()));
    }
    let missing = |what: &str| Error::Format(format!("missing '{what}'"));
    let variant = variant.ok_or_else(|| missing("variant"))?;
    let lookback = lookback.ok_or_else(|| missing("lookback"))?;
    let features = features.ok_or_else(|| missing("features"))?;
    let hidden = hidden.ok_or_else(|| missing("hidden"))?;
    if features != variant.width() {
        return Err(Error::Format(format!(
            "{variant} model declares {features} features"
        )));
    }
    let mut take_scaler = |k: &str| scalers.remove(k).ok_or_else(|| missing(k));
    let input_scaler =
        MinMaxScaler::from_bounds(take_scaler("input_min")?, take_scaler("input_max")?)?;
    let target_scaler =
        MinMaxScaler::from_bounds(take_scaler("target_min")?, take_scaler("target_max")?)?;
    if input_scaler.width() != features || target_scaler.width() != 1 {
        return Err(Error::Format("scaler widths do not match the model".into()));
    }

    let mut params = LstmParams::zeros(features, hidden);
    let shapes = params.tensor_shapes();
    for ((name, dst), shape) in LstmParams::tensor_names()
        .into_iter()
        .zip(params.tensors_mut())
        .zip(shapes)
    {
        let (got_shape, values) = tensors.remove(&name).ok_or_else(|| missing(&name))?;
        if got_shape != shape {
            return Err(Error::Format(format!(
                "tensor {name} is {}x{}, expected {}x{}",
                got_shape.0, got_shape.1, shape.0, shape.1
            )));
        }
        dst.copy_from_slice(&values);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Format(format!("unexpected tensor '{extra}'")));
    }
    Ok(TrainedModel {
        params,
        spec: WindowSpec::new(lookback, variant),
        input_scaler,
        target_scaler,
        loss_history: history.ok_or_else(|| missing("loss_history"))?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use proptest::prelude::*;

    fn model(seed: u64, variant: Variant, hidden: usize) -> TrainedModel {
        let mut rng = Rng::new(seed);
        let w = variant.width();
        let lo: Vec<f64> = (0..w).map(|_| rng.uniform(-10.0, 0.0).unwrap()).collect();
        let hi: Vec<f64> = lo
            .iter()
            .map(|v| v + rng.uniform(0.0, 1e6).unwrap())
            .collect();
        let mut labels = BTreeMap::new();
        labels.insert("region".into(), "Country level".into());
        TrainedModel {
            params: LstmParams::init(w, hidden, &mut rng).unwrap(),
            spec: WindowSpec::new(12, variant),
            input_scaler: MinMaxScaler::from_bounds(lo, hi).unwrap(),
            target_scaler: MinMaxScaler::from_bounds(vec![3.0], vec![3e5]).unwrap(),
            loss_history: (0..7).map(|_| rng.next_f64()).collect(),
            labels,
        }
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(seed in any::<u64>(), multi in any::<bool>(), hidden in 1usize..9) {
            let v = if multi { Variant::Multivariate } else { Variant::Univariate };
            let m = model(seed, v, hidden);
            let text = write_model(&m);
            let back = read_model(&text).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(write_model(&back), text);
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let text = write_model(&model(1, Variant::Univariate, 3));
        assert!(read_model("").is_err());
        assert!(read_model("something else 1\nend\n").is_err());
        assert!(
            read_model(&text.replace("malaria-forecast-model 1", "malaria-forecast-model 9"))
                .is_err()
        );
        assert!(read_model(text.trim_end_matches("end\n")).is_err());
        let dropped: String = text
            .lines()
            .filter(|l| !l.starts_with("tensor u_forget"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(read_model(&dropped), Err(Error::Format(_))));
    }
}
