//! High-order embedding maps.
//!
//! A model embeds an input `x` (length `H`, last component 1) into `h`
//! dimensions through `F` factorized interaction units `u_f = (C_f · x)^O`.
//!
//! * [`Variant::Hope`]: `y_s = Σ_f P[f][s] · u_f`
//! * [`Variant::Shope`]: `y_s = Σ_k P[s][k] · σ(Σ_f w[f][k] · u_f + b_k)`
//!
//! All parameters live in a single flat buffer laid out as `C | P | w | b`
//! (row-major each), which is also the layout of every parameter gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HopeError, Result};
use crate::matrix::{dot, Matrix};
use crate::par;

/// Sigmoid inputs are clamped to this magnitude.
pub const SIGMOID_CLAMP: f64 = 30.0;

/// Largest number of interaction terms the explicit oracle will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hope,
    Shope,
}

impl std::str::FromStr for Variant {
    type Err = HopeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "hope" => Ok(Variant::Hope),
            "shope" => Ok(Variant::Shope),
            other => Err(HopeError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Model dimensions. `num_units` is ignored (and stored as 0) for HOPE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub variant: Variant,
    pub order: u32,
    pub input_dim: usize,
    pub embed_dim: usize,
    pub num_factors: usize,
    pub num_units: usize,
}

impl Shape {
    pub fn hope(order: u32, input_dim: usize, embed_dim: usize, num_factors: usize) -> Self {
        Shape {
            variant: Variant::Hope,
            order,
            input_dim,
            embed_dim,
            num_factors,
            num_units: 0,
        }
    }

    pub fn shope(
        order: u32,
        input_dim: usize,
        embed_dim: usize,
        num_factors: usize,
        num_units: usize,
    ) -> Self {
        Shape {
            variant: Variant::Shope,
            order,
            input_dim,
            embed_dim,
            num_factors,
            num_units,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.order > 0
            && self.input_dim > 0
            && self.embed_dim > 0
            && self.num_factors > 0
            && (self.variant == Variant::Hope || self.num_units > 0);
        if positive {
            Ok(())
        } else {
            Err(HopeError::Config(format!(
                "model dimensions must be positive: {self:?}"
            )))
        }
    }

    pub fn layout(&self) -> Layout {
        let c = self.num_factors * self.input_dim;
        let (p, w, b) = match self.variant {
            Variant::Hope => (self.num_factors * self.embed_dim, 0, 0),
            Variant::Shope => (
                self.embed_dim * self.num_units,
                self.num_factors * self.num_units,
                self.num_units,
            ),
        };
        Layout {
            c: 0..c,
            p: c..c + p,
            w: c + p..c + p + w,
            b: c + p + w..c + p + w + b,
        }
    }
}

/// Offsets of each parameter block in the flat buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub c: std::ops::Range<usize>,
    pub p: std::ops::Range<usize>,
    pub w: std::ops::Range<usize>,
    pub b: std::ops::Range<usize>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.b.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A learnable high-order embedding function.
#[derive(Clone, Debug, PartialEq)]
pub struct HighOrderModel {
    shape: Shape,
    layout: Layout,
    params: Vec<f64>,
}

/// Gradient of `upstreamᵀ · f(x)` with respect to the parameters and to `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct MapGradient {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Forward intermediates kept for the backward pass.
struct Forward {
    // C_f · x
    proj: Vec<f64>,
    // (C_f · x)^O
    units: Vec<f64>,
    // sigmoid activations (S-HOPE only)
    act: Vec<f64>,
    y: Vec<f64>,
}

#[inline]
pub(crate) fn int_pow(v: f64, order: u32) -> f64 {
    let mut acc = v;
    for _ in 1..order {
        acc *= v;
    }
    acc
}

/// d/dv of v^order.
#[inline]
fn pow_derivative(v: f64, order: u32) -> f64 {
    if order == 1 {
        1.0
    } else {
        order as f64 * int_pow(v, order - 1)
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    let t = t.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-t).exp())
}

impl HighOrderModel {
    /// Creates a model with Glorot-uniform `C`, `P`, `w` and zero biases.
    pub fn init(shape: Shape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let layout = shape.layout();
        let mut params = vec![0.0; layout.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut params[range] {
                *v = rng.gen_range(-r..r);
            }
        };
        let (f, hd, h, m) = (
            shape.num_factors,
            shape.input_dim,
            shape.embed_dim,
            shape.num_units,
        );
        fill(layout.c.clone(), hd, f);
        match shape.variant {
            Variant::Hope => fill(layout.p.clone(), f, h),
            Variant::Shope => {
                fill(layout.p.clone(), m, h);
                fill(layout.w.clone(), f, m);
            }
        }
        Ok(HighOrderModel {
            shape,
            layout,
            params,
        })
    }

    pub fn from_params(shape: Shape, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        let layout = shape.layout();
        if params.len() != layout.len() {
            return Err(HopeError::DimensionMismatch {
                context: "parameter buffer",
                expected: layout.len(),
                actual: params.len(),
            });
        }
        Ok(HighOrderModel {
            shape,
            layout,
            params,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn variant(&self) -> Variant {
        self.shape.variant
    }

    pub fn input_dim(&self) -> usize {
        self.shape.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.shape.embed_dim
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.params.copy_from_slice(params);
    }

    /// Factor matrix `C`, `F × H`.
    pub fn c(&self) -> &[f64] {
        &self.params[self.layout.c.clone()]
    }

    /// Projection `P`: `F × h` for HOPE, `h × m` for S-HOPE.
    pub fn p(&self) -> &[f64] {
        &self.params[self.layout.p.clone()]
    }

    /// Unit weights `w`, `F × m` (empty for HOPE).
    pub fn w(&self) -> &[f64] {
        &self.params[self.layout.w.clone()]
    }

    /// Unit biases `b`, length `m` (empty for HOPE).
    pub fn b(&self) -> &[f64] {
        &self.params[self.layout.b.clone()]
    }

    pub fn c_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.layout.c.clone()]
    }

    pub fn p_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.layout.p.clone()]
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.layout.w.clone()]
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.layout.b.clone()]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.input_dim {
            return Err(HopeError::DimensionMismatch {
                context: "model input",
                expected: self.shape.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let s = &self.shape;
        let c = self.c();
        let proj: Vec<f64> = (0..s.num_factors)
            .map(|f| dot(&c[f * s.input_dim..(f + 1) * s.input_dim], x))
            .collect();
        let units: Vec<f64> = proj.iter().map(|&v| int_pow(v, s.order)).collect();
        let h = s.embed_dim;
        let mut y = vec![0.0; h];
        let mut act = Vec::new();
        match s.variant {
            Variant::Hope => {
                let p = self.p();
                for (f, &u) in units.iter().enumerate() {
                    for (ys, &pv) in y.iter_mut().zip(&p[f * h..(f + 1) * h]) {
                        *ys += pv * u;
                    }
                }
            }
            Variant::Shope => {
                let m = s.num_units;
                let (p, w, b) = (self.p(), self.w(), self.b());
                let mut pre = b.to_vec();
                for (f, &u) in units.iter().enumerate() {
                    for (z, &wv) in pre.iter_mut().zip(&w[f * m..(f + 1) * m]) {
                        *z += wv * u;
                    }
                }
                act = pre.into_iter().map(sigmoid).collect();
                for (sidx, ys) in y.iter_mut().enumerate() {
                    *ys = dot(&p[sidx * m..(sidx + 1) * m], &act);
                }
            }
        }
        Forward {
            proj,
            units,
            act,
            y,
        }
    }

    /// Embeds one input with the HOPE map.
    pub fn map_hope(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.shape.variant != Variant::Hope {
            return Err(HopeError::VariantMismatch("map_hope needs a HOPE model"));
        }
        self.check_input(x)?;
        Ok(self.forward(x).y)
    }

    /// Embeds one input with the S-HOPE map.
    pub fn map_shope(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.shape.variant != Variant::Shope {
            return Err(HopeError::VariantMismatch("map_shope needs an S-HOPE model"));
        }
        self.check_input(x)?;
        Ok(self.forward(x).y)
    }

    /// Embeds one input with whichever map the model's variant defines.
    pub fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x).y)
    }

    /// Embeds every row of `x`; row `i` of the result equals `map(x.row(i))`.
    pub fn map_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.shape.input_dim {
            return Err(HopeError::DimensionMismatch {
                context: "batch input width",
                expected: self.shape.input_dim,
                actual: x.cols(),
            });
        }
        let h = self.shape.embed_dim;
        let mut out = Matrix::zeros(x.rows(), h);
        par::for_each_row_mut(out.as_mut_slice(), h, |i, row| {
            row.copy_from_slice(&self.forward(x.row(i)).y);
        });
        Ok(out)
    }

    /// Reverse-mode gradient of `upstream · f(x)`.
    pub fn grad_map(&self, x: &[f64], upstream: &[f64]) -> Result<MapGradient> {
        self.check_input(x)?;
        if upstream.len() != self.shape.embed_dim {
            return Err(HopeError::DimensionMismatch {
                context: "upstream gradient",
                expected: self.shape.embed_dim,
                actual: upstream.len(),
            });
        }
        let mut params = vec![0.0; self.num_params()];
        let mut input = vec![0.0; x.len()];
        self.accumulate_grad(x, upstream, &mut params, Some(&mut input));
        Ok(MapGradient { params, input })
    }

    /// Adds the gradient of `upstream · f(x)` into `grad` (flat layout) and,
    /// when given, into `input_grad`. Shapes are assumed checked.
    pub(crate) fn accumulate_grad(
        &self,
        x: &[f64],
        upstream: &[f64],
        grad: &mut [f64],
        input_grad: Option<&mut [f64]>,
    ) {
        let s = &self.shape;
        let (nf, hd, h) = (s.num_factors, s.input_dim, s.embed_dim);
        let fw = self.forward(x);
        let lay = &self.layout;

        // d loss / d u_f
        let mut d_units = vec![0.0; nf];
        match s.variant {
            Variant::Hope => {
                let p = self.p();
                let gp = &mut grad[lay.p.clone()];
                for f in 0..nf {
                    let row = f * h..(f + 1) * h;
                    for ((g, &pv), &up) in gp[row.clone()].iter_mut().zip(&p[row]).zip(upstream) {
                        *g += fw.units[f] * up;
                        d_units[f] += pv * up;
                    }
                }
            }
            Variant::Shope => {
                let m = s.num_units;
                let p = self.p();
                let w = self.w();
                let mut d_pre = vec![0.0; m];
                {
                    let gp = &mut grad[lay.p.clone()];
                    for (sidx, &up) in upstream.iter().enumerate() {
                        let row = sidx * m..(sidx + 1) * m;
                        for (g, &a) in gp[row.clone()].iter_mut().zip(&fw.act) {
                            *g += a * up;
                        }
                        for (d, &pv) in d_pre.iter_mut().zip(&p[row]) {
                            *d += pv * up;
                        }
                    }
                }
                for (d, &a) in d_pre.iter_mut().zip(&fw.act) {
                    *d *= a * (1.0 - a);
                }
                for (g, &d) in grad[lay.b.clone()].iter_mut().zip(&d_pre) {
                    *g += d;
                }
                let gw = &mut grad[lay.w.clone()];
                for f in 0..nf {
                    let row = f * m..(f + 1) * m;
                    let u = fw.units[f];
                    let mut acc = 0.0;
                    for ((g, &wv), &d) in gw[row.clone()].iter_mut().zip(&w[row]).zip(&d_pre) {
                        *g += u * d;
                        acc += wv * d;
                    }
                    d_units[f] = acc;
                }
            }
        }

        // d loss / d (C_f · x)
        let order = s.order;
        let d_proj: Vec<f64> = d_units
            .iter()
            .zip(&fw.proj)
            .map(|(&du, &v)| du * pow_derivative(v, order))
            .collect();

        let gc = &mut grad[lay.c.clone()];
        for (f, &dp) in d_proj.iter().enumerate() {
            if dp == 0.0 {
                continue;
            }
            for (g, &xv) in gc[f * hd..(f + 1) * hd].iter_mut().zip(x) {
                *g += dp * xv;
            }
        }
        if let Some(gx) = input_grad {
            let c = self.c();
            for (f, &dp) in d_proj.iter().enumerate() {
                if dp == 0.0 {
                    continue;
                }
                for (g, &cv) in gx.iter_mut().zip(&c[f * hd..(f + 1) * hd]) {
                    *g += dp * cv;
                }
            }
        }
    }

    /// Brute-force embedding through the explicit `(O+1)`-way interaction
    /// tensor. Test and verification path only: cost is `H^O · F · h`.
    pub fn map_explicit_oracle(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.shape.variant != Variant::Hope {
            return Err(HopeError::VariantMismatch(
                "explicit enumeration is defined for HOPE models only",
            ));
        }
        self.check_input(x)?;
        let s = &self.shape;
        let (hd, order, h) = (s.input_dim, s.order as usize, s.embed_dim);
        let required = (hd as u128).checked_pow(order as u32).unwrap_or(u128::MAX);
        if required > ENUMERATION_LIMIT {
            return Err(HopeError::EnumerationBudget {
                required,
                limit: ENUMERATION_LIMIT,
            });
        }
        let terms = required as usize;
        let c = self.c();
        let p = self.p();

        // Explicit interaction features x_{i1} ... x_{iO}, and the matching
        // rows of U built from the tied factorization of T. Everything is
        // carried in double-double so the expansion's cancellation does not
        // leave the oracle less accurate than the map it checks.
        let mut features = Vec::with_capacity(terms);
        let mut u = vec![Dd::ZERO; terms * h];
        let mut idx = vec![0usize; order];
        for t in 0..terms {
            features.push(idx.iter().fold(Dd::ONE, |acc, &i| acc.mul_f64(x[i])));
            for f in 0..s.num_factors {
                let coef = idx.iter().fold(Dd::ONE, |acc, &i| acc.mul_f64(c[f * hd + i]));
                for sidx in 0..h {
                    u[t * h + sidx] = u[t * h + sidx].add(coef.mul_f64(p[f * h + sidx]));
                }
            }
            // odometer increment over {0..H}^O
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if *slot < hd {
                    break;
                }
                *slot = 0;
            }
        }
        let mut y = vec![Dd::ZERO; h];
        for (t, phi) in features.iter().enumerate() {
            for sidx in 0..h {
                y[sidx] = y[sidx].add(u[t * h + sidx].mul(*phi));
            }
        }
        Ok(y.into_iter().map(|v| v.hi + v.lo).collect())
    }
}

/// Unevaluated sum `hi + lo` with about 106 bits of significand.
#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn renorm(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let r = Dd::renorm(s.hi, s.lo + t.hi);
        Dd::renorm(r.hi, r.lo + t.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_f64(self, b: f64) -> Dd {
        self.mul(Dd { hi: b, lo: 0.0 })
    }
}
