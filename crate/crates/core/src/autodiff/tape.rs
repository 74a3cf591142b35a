use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{contract, Result};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Something that can build scalar expressions.
///
/// `node` is the only primitive: a new scalar with a given value and the
/// local partial derivative with respect to each parent. All arithmetic
/// helpers are expressed through it.
pub trait Recorder {
    type Scalar: Copy + std::fmt::Debug;

    fn constant(&mut self, value: f64) -> Self::Scalar;

    fn value(&self, s: Self::Scalar) -> f64;

    fn node<I>(&mut self, value: f64, parents: I) -> Self::Scalar
    where
        I: IntoIterator<Item = (Self::Scalar, f64)>;

    fn add(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar {
        let v = self.value(a) + self.value(b);
        self.node(v, [(a, 1.0), (b, 1.0)])
    }

    fn sub(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar {
        let v = self.value(a) - self.value(b);
        self.node(v, [(a, 1.0), (b, -1.0)])
    }

    fn mul(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar {
        let (va, vb) = (self.value(a), self.value(b));
        self.node(va * vb, [(a, vb), (b, va)])
    }

    fn scale(&mut self, a: Self::Scalar, c: f64) -> Self::Scalar {
        let v = self.value(a) * c;
        self.node(v, [(a, c)])
    }

    fn offset(&mut self, a: Self::Scalar, c: f64) -> Self::Scalar {
        let v = self.value(a) + c;
        self.node(v, [(a, 1.0)])
    }

    fn square(&mut self, a: Self::Scalar) -> Self::Scalar {
        let va = self.value(a);
        self.node(va * va, [(a, 2.0 * va)])
    }

    /// Euclidean norm of a small vector; the derivative at the origin is taken as zero.
    fn norm(&mut self, xs: &[Self::Scalar]) -> Self::Scalar {
        let vals: Vec<f64> = xs.iter().map(|&x| self.value(x)).collect();
        let n = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        let parents: Vec<(Self::Scalar, f64)> = xs
            .iter()
            .zip(&vals)
            .map(|(&x, &v)| (x, if n > 0.0 { v / n } else { 0.0 }))
            .collect();
        self.node(n, parents)
    }

    /// Sum of squares, accumulated left to right.
    fn sum_squares(&mut self, xs: &[Self::Scalar]) -> Self::Scalar {
        let vals: Vec<f64> = xs.iter().map(|&x| self.value(x)).collect();
        let total = vals.iter().fold(0.0, |acc, v| acc + v * v);
        let parents: Vec<(Self::Scalar, f64)> =
            xs.iter().zip(&vals).map(|(&x, &v)| (x, 2.0 * v)).collect();
        self.node(total, parents)
    }

    /// `sum_k ws[k] * xs[k] (+ bias)`, differentiable in both weights and inputs.
    fn affine(&mut self, ws: &[Self::Scalar], xs: &[Self::Scalar], bias: Option<Self::Scalar>) -> Self::Scalar {
        let wv: Vec<f64> = ws.iter().map(|&w| self.value(w)).collect();
        let xv: Vec<f64> = xs.iter().map(|&x| self.value(x)).collect();
        let mut value = wv.iter().zip(&xv).fold(0.0, |acc, (w, x)| acc + w * x);
        if let Some(b) = bias {
            value += self.value(b);
        }
        let parents: Vec<(Self::Scalar, f64)> = ws
            .iter()
            .zip(xs)
            .zip(wv.iter().zip(&xv))
            .flat_map(|((&w, &x), (&wv, &xv))| [(w, xv), (x, wv)])
            .chain(bias.map(|b| (b, 1.0)))
            .collect();
        self.node(value, parents)
    }

    fn sum(&mut self, xs: &[Self::Scalar]) -> Self::Scalar {
        let total = xs.iter().fold(0.0, |acc, &x| acc + self.value(x));
        self.node(total, xs.iter().map(|&x| (x, 1.0)))
    }
}

/// Derivative-free evaluation: scalars are plain `f64` values.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Recorder for Plain {
    type Scalar = f64;

    #[inline]
    fn constant(&mut self, value: f64) -> f64 {
        value
    }

    #[inline]
    fn value(&self, s: f64) -> f64 {
        s
    }

    #[inline]
    fn node<I>(&mut self, value: f64, _parents: I) -> f64
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        value
    }

    #[inline]
    fn affine(&mut self, ws: &[f64], xs: &[f64], bias: Option<f64>) -> f64 {
        let dot = ws.iter().zip(xs).fold(0.0, |acc, (w, x)| acc + w * x);
        dot + bias.unwrap_or(0.0)
    }
}

/// Handle to a scalar recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: u32,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index as usize
    }
}

/// Wengert list of scalar nodes with their local partials.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// children and a single backwards pass over the node list is a valid
/// reverse sweep. Parent lists are stored flat (CSR layout).
#[derive(Debug)]
pub struct Tape {
    id: u32,
    values: Vec<f64>,
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0, 0)
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        let mut offsets = Vec::with_capacity(nodes + 1);
        offsets.push(0);
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            values: Vec::with_capacity(nodes),
            offsets,
            parents: Vec::with_capacity(edges),
            partials: Vec::with_capacity(edges),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Empties the tape, keeping its buffers. Handles issued before the
    /// reset are no longer valid on it.
    pub fn reset(&mut self) {
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
        self.values.clear();
        self.offsets.truncate(1);
        self.parents.clear();
        self.partials.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of stored (parent, partial) edges.
    pub fn edge_count(&self) -> usize {
        self.parents.len()
    }

    /// Independent variable.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value)
    }

    pub fn leaves(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    pub fn contains(&self, v: Var) -> bool {
        v.tape == self.id && v.index() < self.values.len()
    }

    fn push(&mut self, value: f64) -> Var {
        let index = self.values.len() as u32;
        self.values.push(value);
        self.offsets.push(self.parents.len() as u32);
        Var {
            tape: self.id,
            index,
        }
    }

    /// Adjoint of every node up to and including `output`.
    pub fn adjoints(&self, output: Var) -> Result<Vec<f64>> {
        if !self.contains(output) {
            return Err(contract("gradient requested for a node that is not on this tape"));
        }
        let end = output.index();
        let mut adj = vec![0.0; end + 1];
        adj[end] = 1.0;
        for i in (0..=end).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = (self.offsets[i] as usize, self.offsets[i + 1] as usize);
            for k in lo..hi {
                adj[self.parents[k] as usize] += a * self.partials[k];
            }
        }
        Ok(adj)
    }

    /// Reverse-mode gradient of `output` with respect to `wrt`.
    ///
    /// Variables that `output` does not depend on get a zero entry.
    pub fn gradient(&self, output: Var, wrt: &[Var]) -> Result<Vec<f64>> {
        if let Some(bad) = wrt.iter().find(|v| !self.contains(**v)) {
            return Err(contract(format!(
                "gradient variable {} is not on this tape",
                bad.index()
            )));
        }
        let adj = self.adjoints(output)?;
        Ok(wrt
            .iter()
            .map(|v| adj.get(v.index()).copied().unwrap_or(0.0))
            .collect())
    }
}

impl Recorder for Tape {
    type Scalar = Var;

    fn constant(&mut self, value: f64) -> Var {
        self.push(value)
    }

    #[inline]
    fn value(&self, s: Var) -> f64 {
        debug_assert_eq!(s.tape, self.id, "scalar from a different tape");
        self.values[s.index()]
    }

    fn node<I>(&mut self, value: f64, parents: I) -> Var
    where
        I: IntoIterator<Item = (Var, f64)>,
    {
        for (p, d) in parents {
            debug_assert_eq!(p.tape, self.id, "parent from a different tape");
            if d != 0.0 {
                self.parents.push(p.index);
                self.partials.push(d);
            }
        }
        self.push(value)
    }

    fn affine(&mut self, ws: &[Var], xs: &[Var], bias: Option<Var>) -> Var {
        debug_assert_eq!(ws.len(), xs.len());
        let mut value = 0.0;
        for (w, x) in ws.iter().zip(xs) {
            let (wv, xv) = (self.values[w.index()], self.values[x.index()]);
            value += wv * xv;
            if xv != 0.0 {
                self.parents.push(w.index);
                self.partials.push(xv);
            }
            if wv != 0.0 {
                self.parents.push(x.index);
                self.partials.push(wv);
            }
        }
        if let Some(b) = bias {
            value += self.values[b.index()];
            self.parents.push(b.index);
            self.partials.push(1.0);
        }
        self.push(value)
    }
}
