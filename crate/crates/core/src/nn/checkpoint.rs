//! Model checkpoints: a text header describing the graph and parameter
//! manifest, followed by little-endian `f64` payloads for every parameter
//! and batch-norm buffer, in header order.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::graph::{GraphBuilder, ModelGraph};
use super::layer::{LayerSpec, Padding};
use crate::{Error, Result};

const MAGIC: &str = "cspnet-checkpoint v1";
const HEADER_END: &str = "end";

fn spec_line(spec: &LayerSpec) -> String {
    match spec {
        LayerSpec::Conv2d { out_maps, kernel, groups, padding, bias, fold_maps } => format!(
            "conv2d {out_maps} {} {} {groups} {} {} {}",
            kernel.0,
            kernel.1,
            match padding {
                Padding::SameWidth => "same",
                Padding::Valid => "valid",
            },
            u8::from(*bias),
            u8::from(*fold_maps)
        ),
        LayerSpec::AvgPool { window, stride } => format!("avgpool {} {} {} {}", window.0, window.1, stride.0, stride.1),
        LayerSpec::MaxPool { window, stride } => format!("maxpool {} {} {} {}", window.0, window.1, stride.0, stride.1),
        LayerSpec::Dropout { p } => format!("dropout {p}"),
        LayerSpec::Dense { units } => format!("dense {units}"),
        other => other.kind().name().to_string(),
    }
}

fn parse_spec(fields: &[&str]) -> std::result::Result<LayerSpec, String> {
    let num = |i: usize| -> std::result::Result<usize, String> {
        fields.get(i).ok_or("missing field")?.parse::<usize>().map_err(|e| e.to_string())
    };
    let flag = |i: usize| -> std::result::Result<bool, String> {
        match fields.get(i).copied() {
            Some("0") => Ok(false),
            Some("1") => Ok(true),
            other => Err(format!("bad flag {other:?}")),
        }
    };
    let kind = *fields.first().ok_or("empty layer description")?;
    Ok(match kind {
        "conv2d" => LayerSpec::Conv2d {
            out_maps: num(1)?,
            kernel: (num(2)?, num(3)?),
            groups: num(4)?,
            padding: match fields.get(5).copied() {
                Some("same") => Padding::SameWidth,
                Some("valid") => Padding::Valid,
                other => return Err(format!("bad padding {other:?}")),
            },
            bias: flag(6)?,
            fold_maps: flag(7)?,
        },
        "avgpool" => LayerSpec::AvgPool { window: (num(1)?, num(2)?), stride: (num(3)?, num(4)?) },
        "maxpool" => LayerSpec::MaxPool { window: (num(1)?, num(2)?), stride: (num(3)?, num(4)?) },
        "dropout" => LayerSpec::Dropout {
            p: fields.get(1).ok_or("missing p")?.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?,
        },
        "dense" => LayerSpec::Dense { units: num(1)? },
        "batchnorm" => LayerSpec::BatchNorm,
        "elu" => LayerSpec::Elu,
        "square" => LayerSpec::Square,
        "safelog" => LayerSpec::SafeLog,
        "flatten" => LayerSpec::Flatten,
        other => return Err(format!("unknown layer kind {other:?}")),
    })
}

/// Writes `model` to `path`.
pub fn save_checkpoint(model: &ModelGraph, path: &Path) -> Result<()> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    let [c, h, w] = model.input_shape;
    header.push_str(&format!("input {c} {h} {w}\n"));
    for layer in &model.layers {
        header.push_str(&format!("layer {} {}\n", layer.name, spec_line(&layer.spec)));
    }
    let mut payload: Vec<f64> = Vec::with_capacity(model.n_weights());
    for p in &model.params {
        let dims: Vec<String> = p.shape.iter().map(usize::to_string).collect();
        header.push_str(&format!(
            "param {} {} {} {}\n",
            p.name,
            u8::from(p.trainable),
            u8::from(p.decay_exempt),
            dims.join(" ")
        ));
        payload.extend(&p.value);
    }
    for layer in &model.layers {
        if let Some(r) = &layer.running {
            header.push_str(&format!("buffer {}.running_mean {}\n", layer.name, r.mean.len()));
            header.push_str(&format!("buffer {}.running_var {}\n", layer.name, r.var.len()));
            payload.extend(&r.mean);
            payload.extend(&r.var);
        }
    }
    header.push_str(HEADER_END);
    header.push('\n');
    let mut bytes = header.into_bytes();
    bytes.reserve(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()
    };
    write().map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ModelGraph> {
    let bytes = fs::read(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })?;
    let format = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let corrupt = |msg: String| Error::Corruption { path: path.to_path_buf(), msg };

    let marker = format!("\n{HEADER_END}\n");
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker.as_bytes())
        .ok_or_else(|| format("header terminator not found".into()))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|e| format(e.to_string()))?;
    let payload = &bytes[split + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(format("not a checkpoint file".into()));
    }
    let input: Vec<usize> = lines
        .next()
        .and_then(|l| l.strip_prefix("input "))
        .map(|l| l.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>())
        .ok_or_else(|| format("missing input line".into()))?
        .map_err(|e| format(format!("bad input line: {e}")))?;
    if input.len() != 3 {
        return Err(format("input line needs three dimensions".into()));
    }
    let mut builder = GraphBuilder::new([input[0], input[1], input[2]], 0);
    let mut manifest = Vec::new();
    let mut buffers = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            Some("layer") if fields.len() >= 3 => {
                let spec = parse_spec(&fields[2..]).map_err(|e| format(format!("layer {:?}: {e}", fields[1])))?;
                builder.push(fields[1], spec).map_err(|e| format(e.to_string()))?;
            }
            Some("param") if fields.len() >= 4 => manifest.push(fields),
            Some("buffer") if fields.len() == 3 => buffers.push(fields),
            _ => return Err(format(format!("unrecognized header line {line:?}"))),
        }
    }
    let mut model = builder.build();

    if manifest.len() != model.params.len() {
        return Err(format(format!(
            "header lists {} parameters, graph defines {}",
            manifest.len(),
            model.params.len()
        )));
    }
    let mut cursor = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let expected_len: usize = model.n_weights()
        + model.layers.iter().filter_map(|l| l.running.as_ref()).map(|r| r.mean.len() + r.var.len()).sum::<usize>();
    if payload.len() != expected_len * 8 {
        return Err(corrupt(format!("payload has {} bytes, expected {}", payload.len(), expected_len * 8)));
    }
    for (p, fields) in model.params.iter_mut().zip(&manifest) {
        let dims: Vec<usize> = fields[4..].iter().filter_map(|d| d.parse().ok()).collect();
        if fields[1] != p.name || dims != p.shape {
            return Err(format(format!(
                "parameter {:?} does not match the graph ({:?} {:?})",
                fields[1], p.name, p.shape
            )));
        }
        p.trainable = fields[2] == "1";
        p.decay_exempt = fields[3] == "1";
        for v in &mut p.value {
            *v = cursor.next().expect("length checked");
        }
    }
    let mut buf_iter = buffers.iter();
    for layer in &mut model.layers {
        if let Some(r) = &mut layer.running {
            for (suffix, target) in [("running_mean", &mut r.mean), ("running_var", &mut r.var)] {
                let fields = buf_iter.next().ok_or_else(|| format("missing buffer entry".into()))?;
                if fields[1] != format!("{}.{suffix}", layer.name) {
                    return Err(format(format!("unexpected buffer {:?}", fields[1])));
                }
                for v in target.iter_mut() {
                    *v = cursor.next().expect("length checked");
                }
            }
        }
    }
    if buf_iter.next().is_some() {
        return Err(format("extra buffer entries".into()));
    }
    if model.params.iter().flat_map(|p| &p.value).any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite parameter value".into()));
    }
    Ok(model)
}
