//! Convolution kernels and their continuous lift descriptions.

use std::fmt;
use std::sync::Arc;

use super::quadrature::{integrate, integrate_sqrt_singular};
use crate::error::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelKind {
    /// `K(t) = √t`.
    Sqrt,
    /// `K(t) = 1/(t + ε)`, the Laplace transform of `e^{-εx}`.
    Laplace { eps: f64 },
    /// `K(t) = e^{-λt}`.
    Exponential { lambda: f64 },
    Custom {
        name: String,
        eval: RealFn,
        integral: Option<RealFn>,
        singular_at_zero: bool,
    },
}

impl fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Sqrt => write!(f, "Sqrt"),
            KernelKind::Laplace { eps } => write!(f, "Laplace {{ eps: {eps} }}"),
            KernelKind::Exponential { lambda } => write!(f, "Exponential {{ lambda: {lambda} }}"),
            KernelKind::Custom { name, singular_at_zero, .. } => {
                write!(f, "Custom {{ name: {name:?}, singular_at_zero: {singular_at_zero} }}")
            }
        }
    }
}

/// A convolution kernel `K` on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    horizon: f64,
}

impl Kernel {
    pub fn sqrt(horizon: f64) -> Self {
        Self { kind: KernelKind::Sqrt, horizon }
    }

    pub fn laplace(eps: f64, horizon: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Invalid(format!("laplace kernel needs eps > 0, got {eps}")));
        }
        Ok(Self { kind: KernelKind::Laplace { eps }, horizon })
    }

    pub fn exponential(lambda: f64, horizon: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!("exp kernel needs lambda > 0, got {lambda}")));
        }
        Ok(Self { kind: KernelKind::Exponential { lambda }, horizon })
    }

    pub fn custom(
        name: impl Into<String>,
        eval: RealFn,
        integral: Option<RealFn>,
        singular_at_zero: bool,
        horizon: f64,
    ) -> Self {
        Self {
            kind: KernelKind::Custom { name: name.into(), eval, integral, singular_at_zero },
            horizon,
        }
    }

    /// Parses a catalog name: `sqrt`, `laplace(eps=0.5)`, `exp(lambda=2)`.
    pub fn from_name(spec: &str, horizon: f64) -> Result<Self> {
        let spec: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
        let (head, args) = match spec.find('(') {
            Some(open) => {
                if !spec.ends_with(')') {
                    return Err(Error::Invalid(format!("unbalanced kernel spec `{spec}`")));
                }
                (&spec[..open], &spec[open + 1..spec.len() - 1])
            }
            None => (spec.as_str(), ""),
        };
        let param = |key: &str| -> Result<f64> {
            for part in args.split(',').filter(|p| !p.is_empty()) {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::Invalid(format!("bad kernel argument `{part}`")))?;
                if k == key {
                    return v
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad number `{v}` for {key}")));
                }
            }
            Err(Error::Invalid(format!("kernel `{head}` needs `{key}=...`")))
        };
        match head {
            "sqrt" => Ok(Self::sqrt(horizon)),
            "laplace" => Self::laplace(param("eps")?, horizon),
            "exp" => Self::exponential(param("lambda")?, horizon),
            other => Err(Error::Invalid(format!("unknown kernel `{other}`"))),
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            KernelKind::Sqrt => "sqrt".into(),
            KernelKind::Laplace { eps } => format!("laplace(eps={eps})"),
            KernelKind::Exponential { lambda } => format!("exp(lambda={lambda})"),
            KernelKind::Custom { name, .. } => name.clone(),
        }
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn singular_at_zero(&self) -> bool {
        matches!(self.kind, KernelKind::Custom { singular_at_zero: true, .. })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::Domain { t, horizon: self.horizon });
        }
        if t == 0.0 && self.singular_at_zero() {
            return Err(Error::Singularity);
        }
        Ok(self.value(t))
    }

    /// Unchecked evaluation.
    pub(crate) fn value(&self, t: f64) -> f64 {
        match &self.kind {
            KernelKind::Sqrt => t.sqrt(),
            KernelKind::Laplace { eps } => 1.0 / (t + eps),
            KernelKind::Exponential { lambda } => (-lambda * t).exp(),
            KernelKind::Custom { eval, .. } => eval(t),
        }
    }

    /// `∫₀ᵗ K(s) ds` when known in closed form.
    pub fn integral(&self, t: f64) -> Option<f64> {
        match &self.kind {
            KernelKind::Sqrt => Some(2.0 / 3.0 * t.powf(1.5)),
            KernelKind::Laplace { eps } => Some(((t + eps) / eps).ln()),
            KernelKind::Exponential { lambda } => Some(-(-lambda * t).exp_m1() / lambda),
            KernelKind::Custom { integral, .. } => integral.as_ref().map(|f| f(t)),
        }
    }

    /// Density `m` with `K(t) = ∫₀^∞ e^{-xt} m(x) dx`, when the kernel has one.
    pub fn laplace_density(&self, x: f64) -> Option<f64> {
        match &self.kind {
            KernelKind::Laplace { eps } => Some((-eps * x).exp()),
            _ => None,
        }
    }

    /// `∫₀ᵀ K(s)² ds` by adaptive quadrature.
    pub fn l2_norm_squared(&self) -> f64 {
        integrate_sqrt_singular(|s| self.value(s).powi(2), 0.0, self.horizon, 1e-12)
    }
}

/// How the adjoint semigroup acts in a continuous lift.
#[derive(Clone)]
pub enum Generator {
    /// `(S_t* f)(s) = f(s - t)`.
    LeftTranslation,
    /// `(S_t* f)(x) = e^{-tx} f(x)` on `[0, ∞)`.
    Multiplication,
    /// Opaque lift: the pairing `t ↦ ⟨g, S_t* ν⟩` is supplied directly.
    Custom(RealFn),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    Shift,
    Laplace,
    Custom,
}

/// A continuous decomposition `K(t) = ⟨g, S_t* ν⟩`.
#[derive(Clone)]
pub struct LiftSpec {
    pub kind: LiftKind,
    pub g_density: RealFn,
    pub nu_density: RealFn,
    pub generator: Generator,
    pub horizon: f64,
}

impl fmt::Debug for LiftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiftSpec")
            .field("kind", &self.kind)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl LiftSpec {
    /// Catalog lift for a kernel.
    ///
    /// `sqrt`: `g = 1/(2√x)` on `(0, T]`, `ν = 1_{[-T, 0]}`, left translation
    /// (valid for `t ≤ T`). `laplace(ε)`: `g = ν = e^{-εx/2}` with the
    /// multiplication semigroup. `exp(λ)`: one-dimensional, `g = ν = 1`.
    pub fn for_kernel(kernel: &Kernel) -> Result<Self> {
        let horizon = kernel.horizon();
        match *kernel.kind() {
            KernelKind::Sqrt => Ok(Self {
                kind: LiftKind::Shift,
                g_density: Arc::new(move |x| {
                    if x > 0.0 && x <= horizon {
                        0.5 / x.sqrt()
                    } else {
                        0.0
                    }
                }),
                nu_density: Arc::new(move |x| if (-horizon..=0.0).contains(&x) { 1.0 } else { 0.0 }),
                generator: Generator::LeftTranslation,
                horizon,
            }),
            KernelKind::Laplace { eps } => {
                let half = Arc::new(move |x: f64| if x >= 0.0 { (-0.5 * eps * x).exp() } else { 0.0 });
                Ok(Self {
                    kind: LiftKind::Laplace,
                    g_density: half.clone(),
                    nu_density: half,
                    generator: Generator::Multiplication,
                    horizon,
                })
            }
            KernelKind::Exponential { lambda } => Ok(Self {
                kind: LiftKind::Custom,
                g_density: Arc::new(|_| 1.0),
                nu_density: Arc::new(|_| 1.0),
                generator: Generator::Custom(Arc::new(move |t| (-lambda * t).exp())),
                horizon,
            }),
            KernelKind::Custom { .. } => Err(Error::Invalid(
                "no continuous lift is known for custom kernels".into(),
            )),
        }
    }

    /// `⟨g, S_t* ν⟩` by quadrature.
    pub fn pairing(&self, t: f64) -> f64 {
        match &self.generator {
            Generator::LeftTranslation => {
                // ν(x - t) is supported on [t - T, t]; g on (0, T].
                let lo = (t - self.horizon).max(0.0);
                let hi = t.min(self.horizon);
                let g = &self.g_density;
                let nu = &self.nu_density;
                integrate_sqrt_singular(|x| g(x) * nu(x - t), lo, hi, 1e-13)
            }
            Generator::Multiplication => {
                let g = &self.g_density;
                let nu = &self.nu_density;
                // Split at 1 so the exponential tail is resolved by the adaptive rule.
                let f = |x: f64| g(x) * nu(x) * (-t * x).exp();
                let head = integrate(f, 0.0, 1.0, 1e-13);
                let tail = integrate(|s: f64| f(1.0 / s) / (s * s), 1e-12, 1.0, 1e-13);
                head + tail
            }
            Generator::Custom(pairing) => pairing(t),
        }
    }

    /// Maximum relative reconstruction error against the kernel on `probes`.
    pub fn verify(&self, kernel: &Kernel, probes: &[f64]) -> f64 {
        probes
            .iter()
            .filter(|&&t| !(t == 0.0 && kernel.singular_at_zero()))
            .map(|&t| {
                let exact = kernel.value(t);
                (self.pairing(t) - exact).abs() / exact.abs().max(1e-300)
            })
            .filter(|e| e.is_finite())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_values() {
        let k = Kernel::sqrt(1.0);
        assert_eq!(k.eval(0.25).unwrap(), 0.5);
        assert_eq!(k.eval(0.0).unwrap(), 0.0);
        let l = Kernel::laplace(0.5, 1.0).unwrap();
        assert_eq!(l.eval(0.0).unwrap(), 2.0);
    }

    #[test]
    fn domain_and_singularity_errors() {
        let k = Kernel::sqrt(1.0);
        assert!(matches!(k.eval(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(k.eval(1.5), Err(Error::Domain { .. })));
        let s = Kernel::custom("t^-0.3", Arc::new(|t: f64| t.powf(-0.3)), None, true, 1.0);
        assert!(matches!(s.eval(0.0), Err(Error::Singularity)));
        assert!(s.eval(0.5).is_ok());
    }

    #[test]
    fn parses_catalog_names() {
        assert_eq!(Kernel::from_name("sqrt", 1.0).unwrap().name(), "sqrt");
        let l = Kernel::from_name("laplace(eps=0.5)", 1.0).unwrap();
        assert_eq!(l.eval(0.5).unwrap(), 1.0);
        let e = Kernel::from_name("exp( lambda = 2 )", 1.0).unwrap();
        assert!((e.eval(1.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert!(Kernel::from_name("laplace", 1.0).is_err());
        assert!(Kernel::from_name("cauchy(a=1)", 1.0).is_err());
        assert!(Kernel::from_name("laplace(eps=-1)", 1.0).is_err());
    }

    #[test]
    fn square_integrable() {
        // ∫₀¹ t dt = 1/2
        assert!((Kernel::sqrt(1.0).l2_norm_squared() - 0.5).abs() < 1e-10);
        // ∫₀¹ (t+ε)^-2 dt = 1/ε - 1/(1+ε)
        let l = Kernel::laplace(0.5, 1.0).unwrap();
        assert!((l.l2_norm_squared() - (2.0 - 1.0 / 1.5)).abs() < 1e-10);
    }

    #[test]
    fn catalog_lifts_reconstruct_kernels() {
        let probes: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for kernel in [
            Kernel::sqrt(1.0),
            Kernel::laplace(0.5, 1.0).unwrap(),
            Kernel::exponential(2.0, 1.0).unwrap(),
        ] {
            let spec = LiftSpec::for_kernel(&kernel).unwrap();
            let err = spec.verify(&kernel, &probes[1..]);
            assert!(err < 1e-6, "{}: {err}", kernel.name());
        }
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        for kernel in [Kernel::sqrt(1.0), Kernel::laplace(0.5, 1.0).unwrap()] {
            let q = integrate_sqrt_singular(|s| kernel.value(s), 0.0, 0.7, 1e-13);
            assert!((kernel.integral(0.7).unwrap() - q).abs() < 1e-10);
        }
    }
}
