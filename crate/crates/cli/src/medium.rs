//! Named analytic medium presets and tabulated sound speeds.

use std::sync::{Arc, LazyLock};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use wavescope_core::field::{self, Covector, OneForm, SmoothField, SpacetimePoint};
use wavescope_core::gauge::{apply_gauge, GaugeFunction, GaugeOptions};
use wavescope_core::lorentz::ProductMetric;
use wavescope_core::wave::MediumParams;

use crate::config::{ConfigResult, Node};

/// Names accepted by `medium.preset`.
pub const PRESETS: [&str; 4] = ["minkowski", "gaussian-lens", "sinusoidal-rho", "constant-b"];

#[derive(Debug, Clone, PartialEq)]
pub enum MediumKind {
    /// `c ≡ 1`, `b = 0`, `h = 0`.
    Minkowski,
    /// `c = 1 − a·exp(−|x − x₀|²/(2w²))`.
    GaussianLens { amplitude: f64, width: f64, centre: [f64; 3] },
    /// Minkowski gauged by `ϱ = 1 + a·Π sin(πx_k)`.
    SinusoidalRho { amplitude: f64 },
    /// `c ≡ 1` with a constant one-form `b`.
    ConstantB { b: [f64; 4] },
    /// Sound speed from samples, cubic Hermite in between (one space dimension).
    Tabulated { x: Vec<f64>, c: Vec<f64> },
}

/// A resolved medium section: kind, nonlinear coefficients and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumSpec {
    pub kind: MediumKind,
    /// `β₂, β₃, …` (constants).
    pub betas: Vec<f64>,
    pub dim: usize,
}

impl MediumSpec {
    pub fn parse(node: &Node<'_>, dim: usize) -> ConfigResult<Self> {
        node.expect_keys(&[], &["preset", "params", "tabulated", "betas"])?;
        let betas = node.get("betas").map_or(Ok(Vec::new()), |n| n.f64_vec())?;
        let kind = match (node.get("preset"), node.get("tabulated")) {
            (Some(_), Some(t)) => return Err(t.error("give either preset or tabulated, not both")),
            (None, None) => return Err(node.error("missing required field: preset or tabulated")),
            (Some(p), None) => parse_preset(&p, node.get("params"), dim)?,
            (None, Some(t)) => {
                if node.get("params").is_some() {
                    return Err(node.req("params")?.error("params apply to presets only"));
                }
                parse_tabulated(&t, dim)?
            }
        };
        Ok(Self { kind, betas, dim })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MediumKind::Minkowski => "minkowski",
            MediumKind::GaussianLens { .. } => "gaussian-lens",
            MediumKind::SinusoidalRho { .. } => "sinusoidal-rho",
            MediumKind::ConstantB { .. } => "constant-b",
            MediumKind::Tabulated { .. } => "tabulated",
        }
    }

    /// Fully resolved parameters, defaults included.
    pub fn params(&self) -> Value {
        match &self.kind {
            MediumKind::Minkowski => json!({}),
            MediumKind::GaussianLens { amplitude, width, centre } => {
                json!({"amplitude": amplitude, "width": width, "centre": &centre[..self.dim]})
            }
            MediumKind::SinusoidalRho { amplitude } => json!({ "amplitude": amplitude }),
            MediumKind::ConstantB { b } => json!({ "b": b }),
            MediumKind::Tabulated { x, c } => json!({"x": x, "c": c}),
        }
    }

    /// Self-describing record: name, parameters, `β`s, dimension and hash.
    pub fn descriptor(&self) -> Value {
        let mut v = json!({
            "name": self.name(),
            "params": self.params(),
            "betas": self.betas,
            "dim": self.dim,
        });
        let hash = hex::encode(Sha256::digest(v.to_string().as_bytes()));
        v["hash"] = Value::String(hash);
        v
    }

    pub fn hash(&self) -> String {
        self.descriptor()["hash"].as_str().unwrap_or_default().to_owned()
    }

    pub fn build(&self) -> wavescope_core::Result<MediumParams> {
        let dim = self.dim;
        let base = |metric: ProductMetric| MediumParams::new(metric).with_constant_betas(&self.betas);
        match &self.kind {
            MediumKind::Minkowski => Ok(base(ProductMetric::minkowski(dim))),
            MediumKind::GaussianLens { amplitude, width, centre } => {
                Ok(base(ProductMetric::new(gaussian_lens(*amplitude, *width, *centre, dim), dim)?))
            }
            MediumKind::SinusoidalRho { amplitude } => {
                let gauge = GaugeFunction::sine_bump(*amplitude, dim)?;
                apply_gauge(&base(ProductMetric::minkowski(dim)), &gauge, GaugeOptions::default())
            }
            MediumKind::ConstantB { b } => Ok(base(ProductMetric::minkowski(dim)).with_one_form(OneForm::constant(*b))),
            MediumKind::Tabulated { x, c } => Ok(base(ProductMetric::new(tabulated(x.clone(), c.clone()), 1)?)),
        }
    }
}

fn parse_preset(preset: &Node<'_>, params: Option<Node<'_>>, dim: usize) -> ConfigResult<MediumKind> {
    let name = preset.choice(&PRESETS)?;
    static EMPTY: LazyLock<Value> = LazyLock::new(|| json!({}));
    let params_node = params.clone().unwrap_or_else(|| Node::root(&EMPTY));
    let keys: &[&str] = match name {
        "gaussian-lens" => &["amplitude", "width", "centre"],
        "sinusoidal-rho" => &["amplitude"],
        "constant-b" => &["b"],
        _ => &[],
    };
    if params.is_some() {
        params_node.expect_keys(&[], keys)?;
    }
    Ok(match name {
        "minkowski" => MediumKind::Minkowski,
        "gaussian-lens" => {
            let amplitude = params_node.opt_f64("amplitude", 0.2)?;
            if amplitude >= 1.0 {
                return Err(params_node.req("amplitude")?.error("amplitude must be below 1 to keep c positive"));
            }
            let width = params_node.opt_positive("width", 0.15)?;
            let centre = match params_node.get("centre") {
                None => [0.5; 3],
                Some(n) => {
                    let v = n.f64_vec()?;
                    if v.len() != dim {
                        return Err(n.error(format!("expected {dim} coordinates, got {}", v.len())));
                    }
                    std::array::from_fn(|k| v.get(k).copied().unwrap_or(0.5))
                }
            };
            MediumKind::GaussianLens { amplitude, width, centre }
        }
        "sinusoidal-rho" => {
            let amplitude = params_node.opt_f64("amplitude", 0.1)?;
            if amplitude <= -1.0 {
                return Err(params_node.req("amplitude")?.error("amplitude must exceed -1 so that rho stays positive"));
            }
            MediumKind::SinusoidalRho { amplitude }
        }
        "constant-b" => MediumKind::ConstantB {
            b: params_node.get("b").map_or(Ok([0.2, 0.0, 0.0, 0.0]), |n| n.f64_array::<4>())?,
        },
        _ => unreachable!("choice() admits only known presets"),
    })
}

fn parse_tabulated(node: &Node<'_>, dim: usize) -> ConfigResult<MediumKind> {
    if dim != 1 {
        return Err(node.error("tabulated media are one-dimensional; use a preset here"));
    }
    node.expect_keys(&["x", "c"], &[])?;
    let (xn, cn) = (node.req("x")?, node.req("c")?);
    let (x, c) = (xn.f64_vec()?, cn.f64_vec()?);
    if x.len() < 2 || x.len() != c.len() {
        return Err(cn.error(format!("need matching x and c with at least 2 samples, got {} and {}", x.len(), c.len())));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(xn.error("x must be strictly increasing"));
    }
    if x[0] > 0.0 || x[x.len() - 1] < 1.0 {
        return Err(xn.error("samples must cover [0, 1]"));
    }
    if let Some(i) = c.iter().position(|v| !(*v > 0.0)) {
        return Err(cn.items()?[i].error("sound speed must be positive"));
    }
    Ok(MediumKind::Tabulated { x, c })
}

fn gaussian_lens(amplitude: f64, width: f64, centre: [f64; 3], dim: usize) -> field::Field {
    let w2 = width * width;
    let offset = move |p: &SpacetimePoint| -> [f64; 3] { std::array::from_fn(|k| if k < dim { p.x[k] - centre[k] } else { 0.0 }) };
    let bump = move |d: &[f64; 3]| amplitude * (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * w2)).exp();
    let value = move |p: &SpacetimePoint| 1.0 - bump(&offset(p));
    let differential = move |p: &SpacetimePoint| {
        let d = offset(p);
        let e = bump(&d);
        Covector::new([0.0, e * d[0] / w2, e * d[1] / w2, e * d[2] / w2])
    };
    let hessian = move |p: &SpacetimePoint| {
        let d = offset(p);
        let e = bump(&d);
        let mut h = nalgebra::Matrix4::zeros();
        for j in 0..dim {
            for k in 0..dim {
                let delta = if j == k { 1.0 / w2 } else { 0.0 };
                h[(j + 1, k + 1)] = e * (delta - d[j] * d[k] / (w2 * w2));
            }
        }
        h
    };
    Arc::new(SmoothField::new(value, differential).with_hessian(hessian))
}

/// Cubic Hermite interpolant with centred-difference slopes, linear outside the samples.
fn tabulated(x: Vec<f64>, c: Vec<f64>) -> field::Field {
    let n = x.len();
    let slopes: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (c[b] - c[a]) / (x[b] - x[a])
        })
        .collect();
    let eval = move |s: f64| -> (f64, f64) {
        if s <= x[0] {
            return (c[0] + slopes[0] * (s - x[0]), slopes[0]);
        }
        if s >= x[n - 1] {
            return (c[n - 1] + slopes[n - 1] * (s - x[n - 1]), slopes[n - 1]);
        }
        let i = x.partition_point(|&v| v <= s) - 1;
        let h = x[i + 1] - x[i];
        let u = (s - x[i]) / h;
        let (h00, h10, h01, h11) = (
            2.0 * u.powi(3) - 3.0 * u * u + 1.0,
            u.powi(3) - 2.0 * u * u + u,
            -2.0 * u.powi(3) + 3.0 * u * u,
            u.powi(3) - u * u,
        );
        let (d00, d10, d01, d11) = (6.0 * u * u - 6.0 * u, 3.0 * u * u - 4.0 * u + 1.0, -6.0 * u * u + 6.0 * u, 3.0 * u * u - 2.0 * u);
        let v = h00 * c[i] + h10 * h * slopes[i] + h01 * c[i + 1] + h11 * h * slopes[i + 1];
        let dv = (d00 * c[i] + d01 * c[i + 1]) / h + d10 * slopes[i] + d11 * slopes[i + 1];
        (v, dv)
    };
    let eval = Arc::new(eval);
    let e2 = Arc::clone(&eval);
    Arc::new(SmoothField::new(
        move |p: &SpacetimePoint| eval(p.x[0]).0,
        move |p: &SpacetimePoint| Covector::new([0.0, e2(p.x[0]).1, 0.0, 0.0]),
    ))
}
