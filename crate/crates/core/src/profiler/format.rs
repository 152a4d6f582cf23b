//! Plain-text profile files.
//!
//! ```text
//! full_n  10000
//! sink    7
//! #node   id  name  kind  estimator  w  t  size  impl  n  d  s  bytes_per_record  k  image
//! node    1   docs  DataSource  0  1  2.4e-4  120000  -  10000  1  1  12  -  -
//! edge    1   2
//! ```
//!
//! Fields are tab-separated; `-` marks an absent value, and `image` is
//! written `side x channels`. Edges are listed in slot order per consumer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{NodeProfile, PipelineProfile};
use crate::costmodel::ImplId;
use crate::dag::{DatasetStats, NodeId};
use crate::error::{Error, Result};

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl PipelineProfile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "full_n\t{}", self.full_n).unwrap();
        writeln!(out, "sink\t{}", self.sink.0).unwrap();
        writeln!(out, "#node\tid\tname\tkind\testimator\tw\tt\tsize\timpl\tn\td\ts\tbytes_per_record\tk\timage").unwrap();
        for p in self.nodes.values() {
            let stats = match &p.stats {
                Some(s) => format!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    s.n,
                    s.d,
                    s.s,
                    s.bytes_per_record,
                    opt(s.k),
                    opt(s.image.map(|(side, ch)| format!("{side}x{ch}")))
                ),
                None => ["-"; 6].join("\t"),
            };
            writeln!(
                out,
                "node\t{}\t{}\t{}\t{}\t{}\t{:e}\t{}\t{}\t{stats}",
                p.id.0,
                p.name,
                p.kind,
                u8::from(p.estimator),
                p.weight,
                p.t,
                p.size,
                opt(p.implementation.map(ImplId::name)),
            )
            .unwrap();
        }
        for (from, to) in &self.edges {
            writeln!(out, "edge\t{}\t{}", from.0, to.0).unwrap();
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut full_n = None;
        let mut sink = None;
        let mut nodes = BTreeMap::new();
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |msg: String| Error::parse(origin, lineno, msg);
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let num = |s: &str, what: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(format!("bad {what} {s:?}")))
            };
            let int = |s: &str, what: &str| {
                s.parse::<u64>()
                    .map_err(|_| err(format!("bad {what} {s:?}")))
            };
            match f[0] {
                "full_n" if f.len() == 2 => full_n = Some(int(f[1], "record count")?),
                "sink" if f.len() == 2 => sink = Some(NodeId(int(f[1], "node id")?)),
                "edge" if f.len() == 3 => {
                    edges.push((NodeId(int(f[1], "node id")?), NodeId(int(f[2], "node id")?)))
                }
                "node" if f.len() == 15 => {
                    let id = NodeId(int(f[1], "node id")?);
                    let implementation = match f[8] {
                        "-" => None,
                        s => Some(
                            ImplId::parse(s)
                                .ok_or_else(|| err(format!("unknown implementation {s:?}")))?,
                        ),
                    };
                    let stats = if f[9] == "-" {
                        None
                    } else {
                        let image = match f[14] {
                            "-" => None,
                            s => {
                                let (a, b) = s
                                    .split_once('x')
                                    .ok_or_else(|| err(format!("bad image shape {s:?}")))?;
                                Some((int(a, "side")? as usize, int(b, "channels")? as usize))
                            }
                        };
                        Some(DatasetStats {
                            n: int(f[9], "n")?,
                            d: int(f[10], "d")? as usize,
                            s: num(f[11], "s")?,
                            bytes_per_record: num(f[12], "bytes per record")?,
                            k: if f[13] == "-" {
                                None
                            } else {
                                Some(int(f[13], "k")? as usize)
                            },
                            image,
                        })
                    };
                    let weight = int(f[5], "weight")? as u32;
                    let node = NodeProfile {
                        id,
                        name: f[2].to_string(),
                        kind: f[3].to_string(),
                        estimator: f[4] == "1",
                        weight,
                        t: num(f[6], "time")?,
                        size: num(f[7], "size")?,
                        implementation,
                        stats,
                        samples: Vec::new(),
                    };
                    if nodes.insert(id, node).is_some() {
                        return Err(err(format!("node {id} listed twice")));
                    }
                }
                other => {
                    return Err(err(format!(
                        "unexpected record {other:?} with {} fields",
                        f.len()
                    )))
                }
            }
        }
        let missing = |what: &str| Error::parse(origin, 0, format!("missing {what} line"));
        let profile = PipelineProfile {
            full_n: full_n.ok_or_else(|| missing("full_n"))?,
            nodes,
            edges,
            sink: sink.ok_or_else(|| missing("sink"))?,
        };
        profile.to_model()?;
        Ok(profile)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PipelineProfile {
        let mk = |id: u64, estimator: bool, stats: Option<DatasetStats>| NodeProfile {
            id: NodeId(id),
            name: format!("n{id}"),
            kind: "ElementMap".into(),
            estimator,
            weight: if estimator { 20 } else { 1 },
            t: 0.125 * id as f64,
            size: 1000.0 * id as f64,
            implementation: estimator.then_some(ImplId::Lbfgs),
            stats,
            samples: Vec::new(),
        };
        let mut nodes = BTreeMap::new();
        nodes.insert(
            NodeId(1),
            mk(1, false, Some(DatasetStats::images(10, 8, 3))),
        );
        nodes.insert(
            NodeId(2),
            mk(
                2,
                false,
                Some(DatasetStats {
                    k: Some(3),
                    ..DatasetStats::sparse(10, 40, 2.5)
                }),
            ),
        );
        nodes.insert(NodeId(3), mk(3, true, None));
        PipelineProfile {
            full_n: 10,
            nodes,
            edges: vec![(NodeId(1), NodeId(2)), (NodeId(2), NodeId(3))],
            sink: NodeId(3),
        }
    }

    #[test]
    fn text_round_trip() {
        let p = sample();
        let q = PipelineProfile::parse(&p.to_text(), "p.tsv").unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "full_n\t10\nsink\t1\nnode\t1\tx\n";
        let e = PipelineProfile::parse(text, "p.tsv")
            .unwrap_err()
            .to_string();
        assert!(e.starts_with("p.tsv:3:"), "{e}");
    }
}
