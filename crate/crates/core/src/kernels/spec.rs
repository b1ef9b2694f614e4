//! JSON kernel specification documents.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GraphKernel, ProductKernel, TimeKernel};
use crate::error::{Error, Result};
use crate::graph::{Graph, Gso};
use crate::quadrature::TimeDomain;

/// `{"graph": {...}, "time": {...}, "domain": [lo, hi]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub graph: GraphKernelSpec,
    pub time: TimeKernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 2]>,
    /// GSO used when the graph is loaded on behalf of this spec.
    #[serde(default)]
    pub gso: Gso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GraphKernelSpec {
    Quadratic { b: f64 },
    Spectral { r: Vec<f64> },
    Identity,
    /// Coefficients in powers of `L − λ_N I`.
    Polynomial { coeffs: Vec<f64> },
    /// `g(L)²` with linear `g`, `g(λ_1) = 1`, `g(λ_N) = end`.
    SqrtLinear { end: f64 },
    /// `(L + αI)^{-β}`.
    Sobolev { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaList {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TimeKernelSpec {
    Gaussian {
        gamma: f64,
    },
    Laplacian {
        gamma: f64,
    },
    /// A scalar `gamma` with `B` repeats it `B` times.
    Bandlimited {
        gamma: GammaList,
        #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
        b: Option<usize>,
    },
    Gtrss {
        #[serde(rename = "T")]
        steps: usize,
        delta0: f64,
    },
}

impl GraphKernelSpec {
    pub fn build(&self, graph: Arc<Graph>) -> Result<GraphKernel> {
        match self {
            GraphKernelSpec::Quadratic { b } => GraphKernel::quadratic(graph, *b),
            GraphKernelSpec::Spectral { r } => GraphKernel::spectral(graph, r),
            GraphKernelSpec::Identity => GraphKernel::identity(graph),
            GraphKernelSpec::Polynomial { coeffs } => GraphKernel::polynomial(graph, coeffs),
            GraphKernelSpec::SqrtLinear { end } => GraphKernel::sqrt_linear(graph, *end),
            GraphKernelSpec::Sobolev { alpha, beta } => {
                GraphKernel::sobolev_inverse(graph, *alpha, *beta)
            }
        }
    }
}

impl TimeKernelSpec {
    pub fn build(&self, domain: Option<[f64; 2]>) -> Result<TimeKernel> {
        let domain = match domain {
            Some([lo, hi]) => TimeDomain::new(lo, hi)?,
            None => TimeDomain::unit(),
        };
        match self {
            TimeKernelSpec::Gaussian { gamma } => TimeKernel::gaussian(*gamma, domain),
            TimeKernelSpec::Laplacian { gamma } => TimeKernel::laplacian(*gamma, domain),
            TimeKernelSpec::Bandlimited { gamma, b } => {
                let gammas = match (gamma, b) {
                    (GammaList::List(list), None) => list.clone(),
                    (GammaList::List(list), Some(b)) if list.len() == *b => list.clone(),
                    (GammaList::List(list), Some(b)) => {
                        return Err(Error::DimensionMismatch(format!(
                            "bandlimited kernel lists {} gammas but B = {b}",
                            list.len()
                        )))
                    }
                    (GammaList::Scalar(g), Some(b)) => vec![*g; *b],
                    (GammaList::Scalar(g), None) => vec![*g],
                };
                TimeKernel::bandlimited(gammas, domain)
            }
            TimeKernelSpec::Gtrss { steps, delta0 } => TimeKernel::gtrss(*steps, *delta0),
        }
    }
}

impl KernelSpec {
    pub fn build(&self, graph: Arc<Graph>) -> Result<ProductKernel> {
        let graph_kernel = self.graph.build(graph)?;
        let time = self.time.build(self.domain)?;
        Ok(ProductKernel::new(graph_kernel, time))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_shape() {
        let spec = KernelSpec::from_json(
            r#"{"graph": {"type": "quadratic", "b": 0.3},
                "time": {"type": "gaussian", "gamma": 0.1},
                "domain": [0, 2]}"#,
        )
        .unwrap();
        assert_eq!(spec.graph, GraphKernelSpec::Quadratic { b: 0.3 });
        assert_eq!(spec.domain, Some([0.0, 2.0]));

        let gtrss = KernelSpec::from_json(
            r#"{"graph": {"type": "spectral", "r": [1, 0.5]},
                "time": {"type": "gtrss", "T": 6, "delta0": 1e-5}}"#,
        )
        .unwrap();
        assert_eq!(gtrss.time, TimeKernelSpec::Gtrss { steps: 6, delta0: 1e-5 });

        let band = KernelSpec::from_json(
            r#"{"graph": {"type": "identity"}, "time": {"type": "bandlimited", "gamma": 2, "B": 3}}"#,
        )
        .unwrap();
        match band.time.build(None).unwrap() {
            TimeKernel::Bandlimited { gammas, .. } => assert_eq!(gammas, vec![2.0; 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn build_roundtrips_spec() {
        let graph = Arc::new(Graph::path(3).unwrap());
        let spec = KernelSpec {
            graph: GraphKernelSpec::SqrtLinear { end: 0.4 },
            time: TimeKernelSpec::Laplacian { gamma: 0.2 },
            domain: Some([0.0, 3.0]),
            gso: Gso::Combinatorial,
        };
        let kernel = spec.build(graph).unwrap();
        assert_eq!(kernel.spec(), spec);
    }
}
