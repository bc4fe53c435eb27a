//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use rlcabp::bp::crc_graph_pass;
use rlcabp::polar::PolarCode;

/// `u · G^{⊗n}` by building the dense generator matrix and multiplying.
pub fn dense_encode(u: &[u8]) -> Vec<u8> {
    let n_len = u.len();
    let mut g = vec![vec![1u8]];
    while g.len() < n_len {
        let m = g.len();
        let mut next = vec![vec![0u8; 2 * m]; 2 * m];
        for r in 0..m {
            for c in 0..m {
                // [[G, 0], [G, G]]
                next[r][c] = g[r][c];
                next[m + r][c] = g[r][c];
                next[m + r][m + c] = g[r][c];
            }
        }
        g = next;
    }
    (0..n_len)
        .map(|c| (0..n_len).fold(0u8, |acc, r| acc ^ (u[r] & g[r][c])))
        .collect()
}

pub fn sgn(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Scaled min-sum written from its definition.
pub fn f(x: f64, y: f64, alpha: f64) -> f64 {
    alpha * sgn(x) * sgn(y) * x.abs().min(y.abs())
}

pub fn sat(x: f64, limit: f64) -> f64 {
    x.max(-limit).min(limit)
}

/// Message arrays indexed `[stage][bit]`, with the stages ordered from the
/// information side. Layer `t` couples `i` and `i + 2^couple[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredGraph {
    pub couple: Vec<usize>,
    pub r: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
}

impl LayeredGraph {
    pub fn new(couple: Vec<usize>) -> Self {
        let n = couple.len();
        let len = 1 << n;
        Self {
            couple,
            r: vec![vec![0.0; len]; n + 1],
            l: vec![vec![0.0; len]; n + 1],
        }
    }

    /// The unpermuted graph.
    pub fn natural(n: usize) -> Self {
        Self::new((0..n).collect())
    }

    pub fn load(&mut self, channel: &[f64], frozen: &[bool], limit: f64) {
        let n = self.couple.len();
        for row in self.r.iter_mut().chain(self.l.iter_mut()) {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        for i in 0..channel.len() {
            self.l[n][i] = sat(channel[i], limit);
            if frozen[i] {
                self.r[0][i] = limit;
            }
        }
    }

    /// Pairs `(i, j)` of layer `t`, listed by scanning every index whose
    /// coupled bit is clear.
    fn pairs(&self, t: usize) -> Vec<(usize, usize)> {
        let bit = 1 << self.couple[t];
        (0..self.r[0].len()).filter(|i| i & bit == 0).map(|i| (i, i | bit)).collect()
    }

    /// Right-to-left sweep, then left-to-right.
    pub fn iterate(&mut self, alpha: f64, limit: f64) {
        let n = self.couple.len();
        for t in (0..n).rev() {
            for (i, j) in self.pairs(t) {
                let (li, lj) = (self.l[t + 1][i], self.l[t + 1][j]);
                let (ri, rj) = (self.r[t][i], self.r[t][j]);
                self.l[t][i] = sat(f(li, lj + rj, alpha), limit);
                self.l[t][j] = sat(f(li, ri, alpha) + lj, limit);
            }
        }
        for t in 0..n {
            for (i, j) in self.pairs(t) {
                let (li, lj) = (self.l[t + 1][i], self.l[t + 1][j]);
                let (ri, rj) = (self.r[t][i], self.r[t][j]);
                self.r[t + 1][i] = sat(f(ri, lj + rj, alpha), limit);
                self.r[t + 1][j] = sat(f(ri, li, alpha) + rj, limit);
            }
        }
    }

    pub fn decide(&self) -> Vec<u8> {
        self.r[0].iter().zip(&self.l[0]).map(|(r, l)| u8::from(r + l < 0.0)).collect()
    }
}

/// Reference CRC-aided BP on a layered graph. Returns
/// `(u_hat, crc_ok, iterations_used)`.
#[allow(clippy::too_many_arguments)]
pub fn layered_cabp(
    graph: &mut LayeredGraph,
    code: &PolarCode,
    llr: &[f64],
    i_max: usize,
    i_min: usize,
    alpha: f64,
    limit: f64,
) -> (Vec<u8>, bool, usize) {
    graph.load(llr, code.frozen_mask(), limit);
    let check = |g: &LayeredGraph| {
        let u = g.decide();
        code.crc_verify(&code.info_bits(&u)).unwrap()
    };
    for it in 1..=i_max {
        graph.iterate(alpha, limit);
        if it < i_min {
            continue;
        }
        let ext = crc_graph_pass(&graph.l[0], code, alpha, limit).unwrap();
        for &i in code.info_set() {
            graph.r[0][i] = ext[i];
        }
        if check(graph) {
            return (graph.decide(), true, it);
        }
    }
    let ok = check(graph);
    (graph.decide(), ok, i_max)
}
