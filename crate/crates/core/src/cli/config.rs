//! Problem configuration files.
//!
//! Vertices and modes are 1-based in the file and 0-based once parsed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;
use thiserror::Error;

use crate::digraph::{Digraph, GraphError, SubgraphPartition};
use crate::signal::{SignalClassSpec, SwitchingSignal};
use crate::spectral::{CMatrix, SpectralTolerances};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{path}: {reason}")]
pub struct SchemaError {
    pub path: String,
    pub reason: String,
}

impl SchemaError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    graph: RawGraph,
    n: Option<usize>,
    systems: Option<Vec<Vec<f64>>>,
    partition: Option<RawPartition>,
    signal: Option<RawSignal>,
    class: Option<RawClass>,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    certify: RawCertify,
    #[serde(default)]
    overrides: Vec<RawOverride>,
    x0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    k: usize,
    edges: Vec<[usize; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    stable: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignal {
    modes: Vec<usize>,
    durations: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    variant: String,
    #[serde(default)]
    params: RawParams,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    tau: Option<f64>,
    eta: Option<f64>,
    taus: Option<Vec<f64>>,
    etas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    imaginary_axis: Option<f64>,
    defective_condition: Option<f64>,
    defective_margin: Option<f64>,
    eigenvalue_cluster: Option<f64>,
    commute: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertify {
    zeta: Option<f64>,
    #[serde(default)]
    loops: Vec<RawLoop>,
    horizon: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoop {
    vertices: Vec<usize>,
    time: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    vertex: usize,
    eigenvectors: Vec<f64>,
    eigenvectors_imag: Option<Vec<f64>>,
    rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOverride {
    pub vertex: usize,
    pub eigenvectors: CMatrix,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub zeta: f64,
    /// Closed walks with promised times, 0-based.
    pub loops: Vec<(Vec<usize>, f64)>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub graph: Digraph,
    pub systems: Option<Vec<DMatrix<f64>>>,
    /// Stable vertices as given in the file, checked later against the
    /// eigenvalues.
    pub partition: Option<SubgraphPartition>,
    pub signal: Option<SwitchingSignal>,
    pub class: Option<SignalClassSpec>,
    pub tolerances: SpectralTolerances,
    pub seed: u64,
    pub certify: CertifyOptions,
    pub overrides: Vec<EigenOverride>,
    pub x0: Option<Vec<f64>>,
}

pub const DEFAULT_ZETA: f64 = 0.99;

pub fn parse_config(text: &str) -> Result<ProblemConfig, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        SchemaError::new(if path == "." { String::new() } else { path }, e.inner().to_string())
    })?;
    build(raw)
}

fn positive(path: &str, x: f64) -> Result<f64, SchemaError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(SchemaError::new(path, format!("must be positive and finite, got {x}")))
    }
}

fn vertex(path: String, v: usize, k: usize) -> Result<usize, SchemaError> {
    if (1..=k).contains(&v) {
        Ok(v - 1)
    } else {
        Err(SchemaError::new(path, format!("vertex {v} outside 1..={k}")))
    }
}

fn build(raw: RawConfig) -> Result<ProblemConfig, SchemaError> {
    let k = raw.graph.k;
    if k == 0 {
        return Err(SchemaError::new("graph.k", "must be at least 1"));
    }
    let mut edges = Vec::with_capacity(raw.graph.edges.len());
    for (i, [a, b]) in raw.graph.edges.iter().copied().enumerate() {
        let path = format!("graph.edges[{i}]");
        edges.push((vertex(path.clone(), a, k)?, vertex(path, b, k)?));
    }
    let graph = Digraph::from_edges(k, edges.iter().copied()).map_err(|e| match e {
        GraphError::DuplicateEdge { from, to } => {
            let i = edges.iter().rposition(|&x| x == (from, to)).unwrap_or(0);
            SchemaError::new(format!("graph.edges[{i}]"), "duplicate edge")
        }
        other => SchemaError::new("graph", other.to_string()),
    })?;

    let systems = match raw.systems {
        None => None,
        Some(rows) => Some(parse_systems(rows, raw.n, k)?),
    };
    let n = systems.as_ref().map(|s| s[0].nrows()).or(raw.n);

    let partition = match raw.partition {
        None => None,
        Some(p) => {
            let mut mask = vec![false; k];
            for (i, &v) in p.stable.iter().enumerate() {
                mask[vertex(format!("partition.stable[{i}]"), v, k)?] = true;
            }
            Some(SubgraphPartition::from_mask(mask))
        }
    };

    let signal = match raw.signal {
        None => None,
        Some(s) => {
            if s.modes.is_empty() {
                return Err(SchemaError::new("signal.modes", "must not be empty"));
            }
            if s.modes.len() != s.durations.len() {
                return Err(SchemaError::new(
                    "signal.durations",
                    format!("{} durations for {} modes", s.durations.len(), s.modes.len()),
                ));
            }
            let mut modes = Vec::with_capacity(s.modes.len());
            for (i, &m) in s.modes.iter().enumerate() {
                modes.push(vertex(format!("signal.modes[{i}]"), m, k)?);
            }
            for (i, &d) in s.durations.iter().enumerate() {
                positive(&format!("signal.durations[{i}]"), d)?;
            }
            Some(SwitchingSignal::new(modes, s.durations).map_err(|e| SchemaError::new("signal", e.to_string()))?)
        }
    };

    let class = raw.class.map(parse_class).transpose()?;

    let defaults = SpectralTolerances::default();
    let t = raw.tolerances;
    let tol = |name: &str, x: Option<f64>, default: f64| -> Result<f64, SchemaError> {
        match x {
            None => Ok(default),
            Some(v) => positive(&format!("tolerances.{name}"), v),
        }
    };
    let tolerances = SpectralTolerances {
        imaginary_axis: tol("imaginary_axis", t.imaginary_axis, defaults.imaginary_axis)?,
        defective_condition: tol(
            "defective_condition",
            t.defective_condition,
            defaults.defective_condition,
        )?,
        defective_margin: tol("defective_margin", t.defective_margin, defaults.defective_margin)?,
        eigenvalue_cluster: tol("eigenvalue_cluster", t.eigenvalue_cluster, defaults.eigenvalue_cluster)?,
        commute: tol("commute", t.commute, defaults.commute)?,
    };

    let zeta = raw.certify.zeta.unwrap_or(DEFAULT_ZETA);
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(SchemaError::new(
            "certify.zeta",
            format!("must lie in (0, 1), got {zeta}"),
        ));
    }
    let mut loops = Vec::new();
    for (i, l) in raw.certify.loops.into_iter().enumerate() {
        if l.vertices.is_empty() {
            return Err(SchemaError::new(
                format!("certify.loops[{i}].vertices"),
                "must not be empty",
            ));
        }
        let vs = l
            .vertices
            .iter()
            .enumerate()
            .map(|(j, &v)| vertex(format!("certify.loops[{i}].vertices[{j}]"), v, k))
            .collect::<Result<Vec<_>, _>>()?;
        loops.push((vs, positive(&format!("certify.loops[{i}].time"), l.time)?));
    }
    if raw.certify.horizon == Some(0) {
        return Err(SchemaError::new("certify.horizon", "must be at least 1"));
    }

    let mut overrides = Vec::new();
    for (i, o) in raw.overrides.into_iter().enumerate() {
        let base = format!("overrides[{i}]");
        let v = vertex(format!("{base}.vertex"), o.vertex, k)?;
        let Some(n) = n else {
            return Err(SchemaError::new(base, "overrides need subsystem matrices"));
        };
        if o.eigenvectors.len() != n * n {
            return Err(SchemaError::new(
                format!("{base}.eigenvectors"),
                format!("expected {} entries, got {}", n * n, o.eigenvectors.len()),
            ));
        }
        let imag = o.eigenvectors_imag.unwrap_or_else(|| vec![0.0; n * n]);
        if imag.len() != n * n {
            return Err(SchemaError::new(
                format!("{base}.eigenvectors_imag"),
                format!("expected {} entries, got {}", n * n, imag.len()),
            ));
        }
        let eigenvectors = CMatrix::from_fn(n, n, |r, c| Complex64::new(o.eigenvectors[r * n + c], imag[r * n + c]));
        let rate = o.rate.map(|r| positive(&format!("{base}.rate"), r)).transpose()?;
        overrides.push(EigenOverride {
            vertex: v,
            eigenvectors,
            rate,
        });
    }

    let x0 = match raw.x0 {
        None => None,
        Some(x) => {
            if let Some(n) = n {
                if x.len() != n {
                    return Err(SchemaError::new("x0", format!("expected {n} entries, got {}", x.len())));
                }
            }
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(SchemaError::new(format!("x0[{i}]"), "must be finite"));
            }
            Some(x)
        }
    };

    Ok(ProblemConfig {
        graph,
        systems,
        partition,
        signal,
        class,
        tolerances,
        seed: raw.seed,
        certify: CertifyOptions {
            zeta,
            loops,
            horizon: raw.certify.horizon,
        },
        overrides,
        x0,
    })
}

fn parse_systems(rows: Vec<Vec<f64>>, n: Option<usize>, k: usize) -> Result<Vec<DMatrix<f64>>, SchemaError> {
    if rows.len() != k {
        return Err(SchemaError::new(
            "systems",
            format!("expected {k} matrices, got {}", rows.len()),
        ));
    }
    let n = match n {
        Some(n) => n,
        None => {
            let len = rows[0].len();
            let root = (len as f64).sqrt().round() as usize;
            if root * root != len {
                return Err(SchemaError::new(
                    "systems[0]",
                    format!("{len} entries is not a square matrix"),
                ));
            }
            root
        }
    };
    if n == 0 {
        return Err(SchemaError::new("n", "must be at least 1"));
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != n * n {
                return Err(SchemaError::new(
                    format!("systems[{i}]"),
                    format!("expected {} entries for a {n}x{n} matrix, got {}", n * n, r.len()),
                ));
            }
            if let Some(j) = r.iter().position(|x| !x.is_finite()) {
                return Err(SchemaError::new(format!("systems[{i}][{j}]"), "must be finite"));
            }
            Ok(DMatrix::from_row_slice(n, n, &r))
        })
        .collect()
}

fn parse_class(c: RawClass) -> Result<SignalClassSpec, SchemaError> {
    let p = c.params;
    let need = |name: &str, x: Option<f64>| -> Result<f64, SchemaError> {
        let x = x.ok_or_else(|| SchemaError::new(format!("class.params.{name}"), "missing"))?;
        positive(&format!("class.params.{name}"), x)
    };
    let need_list = |name: &str, x: Option<Vec<f64>>| -> Result<Vec<f64>, SchemaError> {
        let x = x.ok_or_else(|| SchemaError::new(format!("class.params.{name}"), "missing"))?;
        for (i, &v) in x.iter().enumerate() {
            positive(&format!("class.params.{name}[{i}]"), v)?;
        }
        Ok(x)
    };
    match c.variant.as_str() {
        "dwell" => Ok(SignalClassSpec::Dwell {
            tau: need("tau", p.tau)?,
        }),
        "simple-loop-dwell" => Ok(SignalClassSpec::SimpleLoopDwell {
            taus: need_list("taus", p.taus)?,
        }),
        "dwell-flee" => Ok(SignalClassSpec::DwellFlee {
            tau: need("tau", p.tau)?,
            eta: need("eta", p.eta)?,
        }),
        "loopwise-dwell-flee" => Ok(SignalClassSpec::LoopwiseDwellFlee {
            taus: need_list("taus", p.taus)?,
            etas: need_list("etas", p.etas)?,
        }),
        other => Err(SchemaError::new(
            "class.variant",
            format!("unknown variant `{other}`; expected dwell, simple-loop-dwell, dwell-flee or loopwise-dwell-flee"),
        )),
    }
}
