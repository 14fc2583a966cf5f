//! Reading and writing the plain-text TU graph dataset layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Dataset, Graph};
use crate::error::{GrdlError, Result};
use crate::tensor::Tensor;

struct Lines {
    path: PathBuf,
    lines: Vec<(usize, String)>,
}

fn read_lines(dir: &Path, name: &str, suffix: &str, required: bool) -> Result<Option<Lines>> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    if !path.exists() {
        return if required {
            Err(GrdlError::MissingFile(path))
        } else {
            Ok(None)
        };
    }
    let text = fs::read_to_string(&path)?;
    let lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect();
    Ok(Some(Lines { path, lines }))
}

impl Lines {
    fn err(&self, line: usize, detail: impl Into<String>) -> GrdlError {
        GrdlError::Parse {
            file: self.path.clone(),
            line,
            detail: detail.into(),
        }
    }

    fn fields<T: std::str::FromStr>(&self, line: usize, text: &str) -> Result<Vec<T>> {
        text.split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<T>()
                    .map_err(|_| self.err(line, format!("cannot parse {f:?}")))
            })
            .collect()
    }

    fn integers(&self) -> Result<Vec<i64>> {
        self.lines
            .iter()
            .map(|(n, l)| {
                let v = self.fields::<i64>(*n, l)?;
                match v.as_slice() {
                    [x] => Ok(*x),
                    _ => Err(self.err(*n, "expected one integer")),
                }
            })
            .collect()
    }
}

/// Sorted distinct values and the index of each input value among them.
fn remap(values: &[i64]) -> (Vec<i64>, Vec<usize>) {
    let mut distinct: Vec<i64> = values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let index: BTreeMap<i64, usize> = distinct.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mapped = values.iter().map(|v| index[v]).collect();
    (distinct, mapped)
}

/// Loads `{name}_*.txt` from `dir`.
///
/// Node features are the one-hot node label (if present) followed by the
/// node attributes (if present); with neither, every node gets the constant
/// feature 1. Graph labels are remapped to contiguous class indices.
pub fn parse_tudataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    let edges_file = read_lines(dir, name, "A", true)?.expect("required");
    let indicator_file = read_lines(dir, name, "graph_indicator", true)?.expect("required");
    let labels_file = read_lines(dir, name, "graph_labels", true)?.expect("required");
    let node_labels_file = read_lines(dir, name, "node_labels", false)?;
    let attrs_file = read_lines(dir, name, "node_attributes", false)?;

    let graph_labels = labels_file.integers()?;
    let num_graphs = graph_labels.len();
    let indicator = indicator_file.integers()?;
    let num_nodes = indicator.len();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    let mut local = vec![0usize; num_nodes];
    for (node, (&gid, &(line, _))) in indicator.iter().zip(&indicator_file.lines).enumerate() {
        if gid < 1 || gid as usize > num_graphs {
            return Err(GrdlError::CorruptDataset(format!(
                "{}:{line}: node {} references graph {gid}, but only {num_graphs} graphs are labelled",
                indicator_file.path.display(),
                node + 1
            )));
        }
        let g = gid as usize - 1;
        local[node] = members[g].len();
        members[g].push(node);
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, text) in &edges_file.lines {
        let pair = edges_file.fields::<i64>(*line, text)?;
        let [u, v] = pair.as_slice() else {
            return Err(edges_file.err(*line, "expected two node ids"));
        };
        let check = |x: i64| -> Result<usize> {
            if x < 1 || x as usize > num_nodes {
                Err(GrdlError::CorruptDataset(format!(
                    "{}:{line}: node {x} is not in the graph indicator",
                    edges_file.path.display()
                )))
            } else {
                Ok(x as usize - 1)
            }
        };
        let (u, v) = (check(*u)?, check(*v)?);
        let (gu, gv) = (indicator[u] as usize - 1, indicator[v] as usize - 1);
        if gu != gv {
            return Err(GrdlError::CorruptDataset(format!(
                "{}:{line}: edge joins graphs {} and {}",
                edges_file.path.display(),
                gu + 1,
                gv + 1
            )));
        }
        edges[gu].push((local[u], local[v]));
    }

    let node_labels = match &node_labels_file {
        Some(f) => {
            let raw = f.integers()?;
            if raw.len() != num_nodes {
                return Err(GrdlError::CorruptDataset(format!(
                    "{} node labels for {num_nodes} nodes",
                    raw.len()
                )));
            }
            Some(remap(&raw))
        }
        None => None,
    };
    let attributes: Option<Vec<Vec<f64>>> = match &attrs_file {
        Some(f) => {
            let rows: Vec<Vec<f64>> = f
                .lines
                .iter()
                .map(|(n, l)| f.fields::<f64>(*n, l))
                .collect::<Result<_>>()?;
            if rows.len() != num_nodes {
                return Err(GrdlError::CorruptDataset(format!(
                    "{} attribute rows for {num_nodes} nodes",
                    rows.len()
                )));
            }
            if rows.iter().any(|r| r.len() != rows[0].len()) {
                return Err(GrdlError::CorruptDataset("ragged node attributes".into()));
            }
            Some(rows)
        }
        None => None,
    };

    let one_hot = node_labels.as_ref().map(|(v, _)| v.len()).unwrap_or(0);
    let attribute_dim = attributes.as_ref().map(|a| a[0].len()).unwrap_or(0);
    let dim = if one_hot + attribute_dim == 0 {
        1
    } else {
        one_hot + attribute_dim
    };

    let (class_values, classes) = remap(&graph_labels);
    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, nodes) in members.iter().enumerate() {
        if nodes.is_empty() {
            return Err(GrdlError::CorruptDataset(format!("graph {} has no nodes", g + 1)));
        }
        let mut x = if one_hot + attribute_dim == 0 {
            Tensor::ones(nodes.len(), 1)
        } else {
            Tensor::zeros(nodes.len(), dim)
        };
        for (i, &node) in nodes.iter().enumerate() {
            if let Some((_, idx)) = &node_labels {
                x.set(i, idx[node], 1.0);
            }
            if let Some(a) = &attributes {
                x.row_mut(i)[one_hot..].copy_from_slice(&a[node]);
            }
        }
        let mut graph = Graph::new(nodes.len(), edges[g].iter().copied(), x, classes[g])?;
        if let Some((_, idx)) = &node_labels {
            graph = graph.with_node_labels(nodes.iter().map(|&n| idx[n]).collect());
        }
        graphs.push(graph);
    }

    Ok(Dataset {
        name: name.to_string(),
        graphs,
        num_classes: class_values.len(),
        class_values,
        node_label_values: node_labels.map(|(v, _)| v),
        attribute_dim,
    })
}

/// Writes `dataset` to `dir` as `{name}_*.txt`, listing every undirected edge
/// in both directions.
pub fn write_tudataset(dataset: &Dataset, dir: impl AsRef<Path>, name: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let open = |suffix: &str| -> Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(
            dir.join(format!("{name}_{suffix}.txt")),
        )?))
    };
    let mut a = open("A")?;
    let mut ind = open("graph_indicator")?;
    let mut gl = open("graph_labels")?;
    let mut nl = match &dataset.node_label_values {
        Some(_) => Some(open("node_labels")?),
        None => None,
    };
    let mut na = if dataset.attribute_dim > 0 {
        Some(open("node_attributes")?)
    } else {
        None
    };
    let one_hot = dataset.node_label_values.as_ref().map_or(0, Vec::len);

    let mut offset = 0;
    for (g, graph) in dataset.graphs.iter().enumerate() {
        writeln!(gl, "{}", dataset.class_values[graph.label()])?;
        for &(u, v) in graph.edges() {
            writeln!(a, "{}, {}", u + offset + 1, v + offset + 1)?;
            writeln!(a, "{}, {}", v + offset + 1, u + offset + 1)?;
        }
        for i in 0..graph.num_nodes() {
            writeln!(ind, "{}", g + 1)?;
            if let (Some(w), Some(values)) = (nl.as_mut(), &dataset.node_label_values) {
                let idx = match graph.node_labels() {
                    Some(l) => l[i],
                    None => graph.features().row(i)[..one_hot]
                        .iter()
                        .position(|&x| x == 1.0)
                        .ok_or_else(|| {
                            GrdlError::CorruptDataset(format!("graph {g} node {i} has no label"))
                        })?,
                };
                writeln!(w, "{}", values[idx])?;
            }
            if let Some(w) = na.as_mut() {
                let row: Vec<String> = graph.features().row(i)[one_hot..]
                    .iter()
                    .map(|v| v.to_string())
                    .collect();
                writeln!(w, "{}", row.join(", "))?;
            }
        }
        offset += graph.num_nodes();
    }
    for w in [Some(&mut a), Some(&mut ind), Some(&mut gl), nl.as_mut(), na.as_mut()]
        .into_iter()
        .flatten()
    {
        w.flush()?;
    }
    Ok(())
}
