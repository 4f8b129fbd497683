//! Embedding dumps for external plotting.
//!
//! Rows are `label,e1,...,eM`, one per sample in dataset order, followed by
//! one `PROTO_<class>,e1,...,eM` row per class for each strategy, strategies
//! in the order given and classes ascending within each strategy. Class
//! prototypes are built from all of the class's samples.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use protonet::{compute_all_prototypes, Dataset64, Embedder64, PrototypeStrategy64};

use crate::error::{CliError, Result};

fn push_row(out: &mut String, label: &str, values: impl Iterator<Item = f64>) {
    out.push_str(label);
    for v in values {
        write!(out, ",{v}").expect("writing to a String");
    }
    out.push('\n');
}

pub fn render_embeddings(
    dataset: &Dataset64,
    embedder: &Embedder64,
    strategies: &[PrototypeStrategy64],
) -> Result<String> {
    let emb = embedder.embed(dataset.features().view())?;
    let mut out = String::new();
    for (row, label) in emb.outer_iter().zip(dataset.labels()) {
        push_row(&mut out, &label.to_string(), row.iter().copied());
    }
    for strategy in strategies {
        let protos = compute_all_prototypes(emb.view(), dataset.labels(), strategy)?;
        for (class, row) in protos.class_ids.iter().zip(protos.vectors.outer_iter()) {
            push_row(&mut out, &format!("PROTO_{class}"), row.iter().copied());
        }
    }
    Ok(out)
}

/// Writes the dump and returns the number of rows.
pub fn export_embeddings(
    dataset: &Dataset64,
    embedder: &Embedder64,
    strategies: &[PrototypeStrategy64],
    path: &Path,
) -> Result<usize> {
    let text = render_embeddings(dataset, embedder, strategies)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
    Ok(text.lines().count())
}
