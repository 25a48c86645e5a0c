//! Model file format: a self-describing, line-oriented text format.
//!
//! ```text
//! forgenet-model 1
//! name mlp-blobs
//! input_shape 2
//! classes 3
//! seed 42
//! layers 3
//! layer dense 16 2
//! weight <16*2 floats, row-major>
//! bias <16 floats>
//! layer relu
//! layer forge inference 4 0.0078125
//! end
//! ```
//!
//! Floats are printed with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every value bit-exactly. Parse errors carry
//! the byte offset of the offending line.

use super::{ForgeMode, ForgeState, Layer, Model, ModelMeta};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "forgenet-model";

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    model_from_str(&text)
}

pub fn model_to_string(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "name {}", model.meta.name);
    let _ = writeln!(out, "input_shape {}", join_usizes(&model.meta.input_shape));
    let _ = writeln!(out, "classes {}", model.meta.classes);
    let _ = writeln!(out, "seed {}", model.meta.seed);
    let _ = writeln!(out, "layers {}", model.layers.len());
    for layer in &model.layers {
        match layer {
            Layer::Dense { weight, bias } => {
                let (o, i) = weight.dims2().expect("dense weight is rank 2");
                let _ = writeln!(out, "layer dense {o} {i}");
                let _ = writeln!(out, "weight {}", join_floats(weight.data()));
                let _ = writeln!(out, "bias {}", join_floats(bias.data()));
            }
            Layer::Conv2d {
                kernel,
                bias,
                stride,
                padding,
            } => {
                let s = kernel.shape();
                let _ = writeln!(
                    out,
                    "layer conv2d {} {} {} {} {stride} {padding}",
                    s[0], s[1], s[2], s[3]
                );
                let _ = writeln!(out, "kernel {}", join_floats(kernel.data()));
                let _ = writeln!(out, "bias {}", join_floats(bias.data()));
            }
            Layer::Relu => {
                let _ = writeln!(out, "layer relu");
            }
            Layer::Silu => {
                let _ = writeln!(out, "layer silu");
            }
            Layer::Gelu => {
                let _ = writeln!(out, "layer gelu");
            }
            Layer::Flatten => {
                let _ = writeln!(out, "layer flatten");
            }
            Layer::Forge(state) => {
                let mode = match state.mode() {
                    ForgeMode::Tracking => "tracking",
                    ForgeMode::Inference => "inference",
                };
                let _ = writeln!(
                    out,
                    "layer forge {mode} {} {}",
                    state.tracked_max(),
                    state.c_ratio()
                );
            }
        }
    }
    out.push_str("end\n");
    out
}

pub fn model_from_str(text: &str) -> Result<Model> {
    let mut lines = LineCursor::new(text);

    let (off, header) = lines.expect("format header")?;
    let mut it = header.split_whitespace();
    if it.next() != Some(MAGIC) {
        return Err(perr(off, format!("expected `{MAGIC} <version>` header")));
    }
    let version: u32 = it
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| perr(off, "missing or invalid version integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }

    let name = lines.keyed("name")?.to_string();
    let input_shape = {
        let (off, rest) = lines.keyed_at("input_shape")?;
        parse_usizes(rest, off)?
    };
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(Error::Contract(format!(
            "input shape must have positive extents, got {input_shape:?}"
        )));
    }
    let classes: usize = {
        let (off, rest) = lines.keyed_at("classes")?;
        rest.trim()
            .parse()
            .map_err(|_| perr(off, "invalid class count".into()))?
    };
    let seed: u64 = {
        let (off, rest) = lines.keyed_at("seed")?;
        rest.trim()
            .parse()
            .map_err(|_| perr(off, "invalid seed".into()))?
    };
    let layer_count: usize = {
        let (off, rest) = lines.keyed_at("layers")?;
        rest.trim()
            .parse()
            .map_err(|_| perr(off, "invalid layer count".into()))?
    };

    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let (off, line) = lines.expect("layer declaration")?;
        let mut tok = line.split_whitespace();
        if tok.next() != Some("layer") {
            return Err(perr(off, format!("expected `layer ...`, got `{line}`")));
        }
        let tag = tok
            .next()
            .ok_or_else(|| perr(off, "missing layer tag".into()))?;
        match tag {
            "dense" => {
                let o = parse_tok(tok.next(), off, "dense rows")?;
                let i = parse_tok(tok.next(), off, "dense cols")?;
                let weight = lines.float_array("weight", o * i)?;
                let bias = lines.float_array("bias", o)?;
                layers.push(Layer::dense(
                    Tensor::matrix(o, i, weight),
                    Tensor::vector(bias),
                )?);
            }
            "conv2d" => {
                let oc = parse_tok(tok.next(), off, "out channels")?;
                let ic = parse_tok(tok.next(), off, "in channels")?;
                let kh = parse_tok(tok.next(), off, "kernel height")?;
                let kw = parse_tok(tok.next(), off, "kernel width")?;
                let stride = parse_tok(tok.next(), off, "stride")?;
                let padding = parse_tok(tok.next(), off, "padding")?;
                let kernel = lines.float_array("kernel", oc * ic * kh * kw)?;
                let bias = lines.float_array("bias", oc)?;
                layers.push(Layer::conv2d(
                    Tensor::new(vec![oc, ic, kh, kw], kernel),
                    Tensor::vector(bias),
                    stride,
                    padding,
                )?);
            }
            "relu" => layers.push(Layer::Relu),
            "silu" => layers.push(Layer::Silu),
            "gelu" => layers.push(Layer::Gelu),
            "flatten" => layers.push(Layer::Flatten),
            "forge" => {
                let mode = match tok.next() {
                    Some("tracking") => ForgeMode::Tracking,
                    Some("inference") => ForgeMode::Inference,
                    other => {
                        return Err(perr(
                            off,
                            format!("invalid forge mode `{}`", other.unwrap_or("")),
                        ))
                    }
                };
                let b: f64 = parse_float_tok(tok.next(), off, "tracked max")?;
                let c_ratio: f64 = parse_float_tok(tok.next(), off, "c_ratio")?;
                layers.push(Layer::Forge(ForgeState::with_parts(b, c_ratio, mode)?));
            }
            other => return Err(Error::UnknownLayer(other.to_string())),
        }
    }

    let (off, terminator) = lines.expect("end marker")?;
    if terminator.trim() != "end" {
        return Err(perr(off, format!("expected `end`, got `{terminator}`")));
    }
    if let Some((off, extra)) = lines.next_nonempty() {
        return Err(perr(off, format!("trailing content `{extra}` after end")));
    }

    Ok(Model::new(
        layers,
        ModelMeta {
            name,
            input_shape,
            classes,
            seed,
        },
    ))
}

struct LineCursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    fn new(text: &'a str) -> Self {
        LineCursor { text, pos: 0 }
    }

    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, advance) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos = start + advance;
        Some((start, line.trim_end_matches('\r')))
    }

    /// Next non-blank line, or a truncation error naming what was expected.
    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        loop {
            match self.next_line() {
                Some((_, line)) if line.trim().is_empty() => continue,
                Some(found) => return Ok(found),
                None => {
                    return Err(perr(
                        self.text.len(),
                        format!("file truncated: expected {what}"),
                    ))
                }
            }
        }
    }

    fn next_nonempty(&mut self) -> Option<(usize, &'a str)> {
        loop {
            match self.next_line() {
                Some((_, line)) if line.trim().is_empty() => continue,
                other => return other,
            }
        }
    }

    /// Line of the form `<key> <rest>`; returns the rest.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        self.keyed_at(key).map(|(_, rest)| rest)
    }

    fn keyed_at(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (off, line) = self.expect(&format!("`{key} ...`"))?;
        match line.strip_prefix(key) {
            Some(rest) if rest.is_empty() || rest.starts_with(' ') => {
                Ok((off, rest.trim_start()))
            }
            _ => Err(perr(off, format!("expected `{key} ...`, got `{line}`"))),
        }
    }

    fn float_array(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let (off, rest) = self.keyed_at(key)?;
        let mut values = Vec::with_capacity(expected);
        for tok in rest.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| perr(off, format!("invalid float `{tok}` in {key}")))?;
            if !v.is_finite() {
                return Err(perr(off, format!("non-finite value in {key}")));
            }
            values.push(v);
        }
        if values.len() != expected {
            return Err(perr(
                off,
                format!("{key} expects {expected} values, got {}", values.len()),
            ));
        }
        Ok(values)
    }
}

fn perr(offset: usize, message: String) -> Error {
    Error::Parse { offset, message }
}

fn parse_tok(tok: Option<&str>, off: usize, what: &str) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(off, format!("missing or invalid {what}")))
}

fn parse_float_tok(tok: Option<&str>, off: usize, what: &str) -> Result<f64> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(off, format!("missing or invalid {what}")))
}

fn join_floats(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn join_usizes(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_usizes(rest: &str, off: usize) -> Result<Vec<usize>> {
    rest.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| perr(off, format!("invalid extent `{t}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::presets;
    use crate::net::InsertPolicy;

    fn sample_model() -> Model {
        let mut m = presets::mlp("roundtrip", &[3, 5, 2], presets::Activation::Silu, 17)
            .unwrap()
            .insert_forge(&InsertPolicy::All)
            .unwrap();
        m.set_c_ratio(0.0078125).unwrap();
        if let Layer::Forge(state) = &mut m.layers[0] {
            *state = ForgeState::with_parts(4.0, 0.0078125, ForgeMode::Inference).unwrap();
        }
        m
    }

    #[test]
    fn round_trip_reproduces_forward_bit_exactly() {
        let model = sample_model();
        let text = model_to_string(&model);
        let reloaded = model_from_str(&text).unwrap();
        assert_eq!(model, reloaded);
        let x = Tensor::matrix(2, 3, vec![0.1, -0.9, 0.5, 0.33, 0.0, -1.25]);
        assert_eq!(
            model.forward(&x).unwrap().data(),
            reloaded.forward(&x).unwrap().data()
        );
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let text = model_to_string(&sample_model());
        let cut = &text[..text.len() / 2];
        match model_from_str(cut) {
            Err(Error::Parse { .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_layer_tag_is_reported() {
        let text = "forgenet-model 1\nname t\ninput_shape 2\nclasses 2\nseed 0\nlayers 1\nlayer attention\nend\n";
        match model_from_str(text) {
            Err(Error::UnknownLayer(tag)) => assert_eq!(tag, "attention"),
            other => panic!("expected unknown layer error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_versioned_error() {
        let text = "forgenet-model 9\nname t\n";
        match model_from_str(text) {
            Err(Error::Version { found, supported }) => {
                assert_eq!(found, 9);
                assert_eq!(supported, FORMAT_VERSION);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_byte_offset() {
        let good = model_to_string(&sample_model());
        let bad = good.replace("classes 2", "classes two");
        match model_from_str(&bad) {
            Err(Error::Parse { offset, .. }) => {
                assert_eq!(&bad[offset..offset + 7], "classes");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn save_and_load_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fnm");
        let model = sample_model();
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }
}
