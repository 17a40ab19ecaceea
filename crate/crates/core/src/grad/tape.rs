use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{
    acosh_deriv_f64, asin_deriv_f64, log_sum_exp_f64, sigmoid_f64, sinhc_sqrt_deriv_f64,
    sinhc_sqrt_f64, Real,
};
use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddConst,
    MulConst,
    DivConst,
    Sqrt,
    Exp,
    Ln,
    Sinh,
    Cosh,
    Acosh,
    Asin,
    Acos,
    Abs,
    Recip,
    Silu,
    Relu,
    ClampMin,
    ClampMax,
    SinhcSqrt,
    Sum,
    Dot,
    LogSumExp,
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::AddConst => "add_const",
            Op::MulConst => "mul_const",
            Op::DivConst => "div_const",
            Op::Sqrt => "sqrt",
            Op::Exp => "exp",
            Op::Ln => "ln",
            Op::Sinh => "sinh",
            Op::Cosh => "cosh",
            Op::Acosh => "acosh",
            Op::Asin => "asin",
            Op::Acos => "acos",
            Op::Abs => "abs",
            Op::Recip => "recip",
            Op::Silu => "silu",
            Op::Relu => "relu",
            Op::ClampMin => "clamp_min",
            Op::ClampMax => "clamp_max",
            Op::SinhcSqrt => "sinhc_sqrt",
            Op::Sum => "sum",
            Op::Dot => "dot",
            Op::LogSumExp => "log_sum_exp",
        }
    }
}

/// One recorded operation. For n-ary ops `a` is an offset into the shared
/// argument list and `b` the argument count.
#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    a: u32,
    b: u32,
    aux: f64,
}

#[derive(Debug)]
struct Block {
    name: String,
    shape: Vec<usize>,
    start: u32,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    values: Vec<f64>,
    args: Vec<u32>,
    blocks: Vec<Block>,
}

/// Append-only record of scalar operations for reverse-mode differentiation.
///
/// Nodes only reference earlier nodes, so the graph is acyclic by
/// construction. A tape is single-threaded; build one per step.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} = {})", self.idx, self.value())
    }
}

/// Parameters of a [`ParamSet`] bound to leaves of a tape.
pub struct Bound<'t> {
    vars: BTreeMap<String, Vec<Var<'t>>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Option<&[Var<'t>]> {
        self.vars.get(name).map(Vec::as_slice)
    }

    pub fn expect(&self, name: &str) -> Result<&[Var<'t>]> {
        self.get(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter `{name}`")))
    }
}

/// Result of a backward pass: gradients per bound parameter block, plus the
/// raw adjoint of every node for ad-hoc leaves.
#[derive(Clone, Debug)]
pub struct GradientMap {
    params: ParamSet,
    adjoints: Vec<f64>,
}

impl GradientMap {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    /// Gradient with respect to any leaf (or intermediate) variable.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adjoints.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(*v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            inner: RefCell::new(Inner {
                nodes: Vec::with_capacity(n),
                values: Vec::with_capacity(n),
                args: Vec::with_capacity(n),
                blocks: Vec::new(),
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A new leaf.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(Op::Leaf, 0, 0, 0.0, value)
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Bind every tensor of `params` to fresh leaves; the backward pass
    /// reports gradients under the same names and shapes.
    pub fn bind(&self, params: &ParamSet) -> Bound<'_> {
        let mut vars = BTreeMap::new();
        for (name, t) in params.iter() {
            let start = self.len() as u32;
            let vs = self.vars(&t.data);
            self.inner.borrow_mut().blocks.push(Block {
                name: name.clone(),
                shape: t.shape.clone(),
                start,
            });
            vars.insert(name.clone(), vs);
        }
        Bound { vars }
    }

    fn push(&self, op: Op, a: u32, b: u32, aux: f64, value: f64) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len() as u32;
        inner.nodes.push(Node { op, a, b, aux });
        inner.values.push(value);
        Var { tape: self, idx }
    }

    fn push_nary(&self, op: Op, args: impl Iterator<Item = u32>, value: f64) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let start = inner.args.len() as u32;
        inner.args.extend(args);
        let count = inner.args.len() as u32 - start;
        let idx = inner.nodes.len() as u32;
        inner.nodes.push(Node {
            op,
            a: start,
            b: count,
            aux: 0.0,
        });
        inner.values.push(value);
        Var { tape: self, idx }
    }

    fn value_of(&self, idx: u32) -> f64 {
        self.inner.borrow().values[idx as usize]
    }

    /// Reverse pass from a single scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<GradientMap> {
        assert!(
            std::ptr::eq(output.tape, self),
            "output variable belongs to a different tape"
        );
        let inner = self.inner.borrow();
        let out = output.idx as usize;

        if let Some(i) = inner.values[..=out].iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteNode {
                node: i,
                op: inner.nodes[i].op.name(),
            });
        }

        let n = inner.nodes.len();
        let mut adj = vec![0.0f64; n];
        adj[out] = 1.0;
        let vals = &inner.values;
        let args = &inner.args;

        for i in (0..=out).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = inner.nodes[i];
            if !g.is_finite() {
                return Err(Error::NonFiniteNode {
                    node: i,
                    op: node.op.name(),
                });
            }
            let a = node.a as usize;
            let b = node.b as usize;
            let y = vals[i];
            match node.op {
                Op::Leaf => {}
                Op::Add => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Sub => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                Op::Mul => {
                    let (va, vb) = (vals[a], vals[b]);
                    adj[a] += g * vb;
                    adj[b] += g * va;
                }
                Op::Div => {
                    let vb = vals[b];
                    adj[a] += g / vb;
                    adj[b] -= g * y / vb;
                }
                Op::Neg => adj[a] -= g,
                Op::AddConst => adj[a] += g,
                Op::MulConst => adj[a] += g * node.aux,
                Op::DivConst => adj[a] += g / node.aux,
                Op::Sqrt => {
                    if y > 0.0 {
                        adj[a] += g * 0.5 / y;
                    }
                }
                Op::Exp => adj[a] += g * y,
                Op::Ln => adj[a] += g / vals[a],
                Op::Sinh => adj[a] += g * vals[a].cosh(),
                Op::Cosh => adj[a] += g * vals[a].sinh(),
                Op::Acosh => adj[a] += g * acosh_deriv_f64(vals[a]),
                Op::Asin => adj[a] += g * asin_deriv_f64(vals[a]),
                Op::Acos => adj[a] -= g * asin_deriv_f64(vals[a]),
                Op::Abs => {
                    let x = vals[a];
                    if x > 0.0 {
                        adj[a] += g;
                    } else if x < 0.0 {
                        adj[a] -= g;
                    }
                }
                Op::Recip => adj[a] -= g * y * y,
                Op::Silu => {
                    let x = vals[a];
                    let s = sigmoid_f64(x);
                    adj[a] += g * (s + x * s * (1.0 - s));
                }
                Op::Relu => {
                    if vals[a] > 0.0 {
                        adj[a] += g;
                    }
                }
                Op::ClampMin => {
                    if vals[a] > node.aux {
                        adj[a] += g;
                    }
                }
                Op::ClampMax => {
                    if vals[a] < node.aux {
                        adj[a] += g;
                    }
                }
                Op::SinhcSqrt => adj[a] += g * sinhc_sqrt_deriv_f64(vals[a]),
                Op::Sum => {
                    for &j in &args[a..a + b] {
                        adj[j as usize] += g;
                    }
                }
                Op::Dot => {
                    let (xs, ys) = args[a..a + b].split_at(b / 2);
                    for (&x, &z) in xs.iter().zip(ys) {
                        let (vx, vz) = (vals[x as usize], vals[z as usize]);
                        adj[x as usize] += g * vz;
                        adj[z as usize] += g * vx;
                    }
                }
                Op::LogSumExp => {
                    for &j in &args[a..a + b] {
                        adj[j as usize] += g * (vals[j as usize] - y).exp();
                    }
                }
            }
        }

        let mut params = ParamSet::new();
        for block in &inner.blocks {
            let start = block.start as usize;
            let count: usize = block.shape.iter().product();
            params.insert(
                block.name.clone(),
                Tensor {
                    shape: block.shape.clone(),
                    data: adj[start..start + count].to_vec(),
                },
            );
        }
        Ok(GradientMap {
            params,
            adjoints: adj,
        })
    }

    /// Backward over an output given as a list; anything but exactly one
    /// value is rejected.
    pub fn backward_outputs(&self, outputs: &[Var<'_>]) -> Result<GradientMap> {
        match outputs {
            [single] => self.backward(*single),
            _ => Err(Error::NonScalarOutput(outputs.len())),
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn index(&self) -> usize {
        self.idx as usize
    }

    fn unary(self, op: Op, aux: f64, value: f64) -> Self {
        self.tape.push(op, self.idx, 0, aux, value)
    }

    fn binary(self, op: Op, other: Var<'t>, value: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape));
        self.tape.push(op, self.idx, other.idx, 0.0, value)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        let v = self.value() + rhs.value();
        self.binary(Op::Add, rhs, v)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        let v = self.value() - rhs.value();
        self.binary(Op::Sub, rhs, v)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        let v = self.value() * rhs.value();
        self.binary(Op::Mul, rhs, v)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let v = self.value() / rhs.value();
        self.binary(Op::Div, rhs, v)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        let v = -self.value();
        self.unary(Op::Neg, 0.0, v)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, k: f64) -> Self {
        let v = self.value() + k;
        self.unary(Op::AddConst, k, v)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, k: f64) -> Self {
        // x - k and x + (-k) round identically.
        self + (-k)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, k: f64) -> Self {
        let v = self.value() * k;
        self.unary(Op::MulConst, k, v)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, k: f64) -> Self {
        let v = self.value() / k;
        self.unary(Op::DivConst, k, v)
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        self.tape.value_of(self.idx)
    }
    fn sqrt(self) -> Self {
        self.unary(Op::Sqrt, 0.0, self.value().sqrt())
    }
    fn exp(self) -> Self {
        self.unary(Op::Exp, 0.0, self.value().exp())
    }
    fn ln(self) -> Self {
        self.unary(Op::Ln, 0.0, self.value().ln())
    }
    fn sinh(self) -> Self {
        self.unary(Op::Sinh, 0.0, self.value().sinh())
    }
    fn cosh(self) -> Self {
        self.unary(Op::Cosh, 0.0, self.value().cosh())
    }
    fn acosh(self) -> Self {
        self.unary(Op::Acosh, 0.0, self.value().acosh())
    }
    fn asin(self) -> Self {
        self.unary(Op::Asin, 0.0, self.value().asin())
    }
    fn acos(self) -> Self {
        self.unary(Op::Acos, 0.0, self.value().acos())
    }
    fn abs(self) -> Self {
        self.unary(Op::Abs, 0.0, self.value().abs())
    }
    fn recip(self) -> Self {
        self.unary(Op::Recip, 0.0, self.value().recip())
    }
    fn silu(self) -> Self {
        let x = self.value();
        self.unary(Op::Silu, 0.0, x * sigmoid_f64(x))
    }
    fn relu(self) -> Self {
        self.unary(Op::Relu, 0.0, self.value().max(0.0))
    }
    fn clamp_min(self, lo: f64) -> Self {
        self.unary(Op::ClampMin, lo, self.value().max(lo))
    }
    fn clamp_max(self, hi: f64) -> Self {
        self.unary(Op::ClampMax, hi, self.value().min(hi))
    }
    fn sinhc_sqrt(self) -> Self {
        self.unary(Op::SinhcSqrt, 0.0, sinhc_sqrt_f64(self.value()))
    }

    fn sum(xs: &[Self]) -> Self {
        let tape = xs[0].tape;
        let v: f64 = {
            let inner = tape.inner.borrow();
            xs.iter().map(|x| inner.values[x.idx as usize]).sum()
        };
        tape.push_nary(Op::Sum, xs.iter().map(|x| x.idx), v)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        assert_eq!(a.len(), b.len(), "dot of unequal lengths");
        let tape = a[0].tape;
        let v: f64 = {
            let inner = tape.inner.borrow();
            a.iter()
                .zip(b)
                .map(|(x, y)| inner.values[x.idx as usize] * inner.values[y.idx as usize])
                .sum()
        };
        tape.push_nary(
            Op::Dot,
            a.iter().map(|x| x.idx).chain(b.iter().map(|x| x.idx)),
            v,
        )
    }

    fn log_sum_exp(xs: &[Self]) -> Self {
        let tape = xs[0].tape;
        let v = {
            let inner = tape.inner.borrow();
            let vals: Vec<f64> = xs.iter().map(|x| inner.values[x.idx as usize]).collect();
            log_sum_exp_f64(&vals)
        };
        tape.push_nary(Op::LogSumExp, xs.iter().map(|x| x.idx), v)
    }
}
