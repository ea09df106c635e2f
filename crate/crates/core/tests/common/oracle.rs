//! Independent reference solver for penalized least squares
//! `(1/n)||Y - XB||_F^2 + rho * sum_b w_b ||(D B)_b||_F`.
//!
//! Works on the dual: `B(W) = G^{-1}(C - D'W/2)` with `G = X'X/n`,
//! `C = X'Y/n`, and `W` constrained blockwise to balls of radius `rho w_b`.
//! Accelerated projected gradient ascent; needs `G` invertible (`p <= n`).

#![allow(dead_code)]

use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

/// Rows of `D` forming one penalty block, with its weight.
#[derive(Clone, Debug)]
pub struct Block {
    pub rows: Vec<usize>,
    pub weight: f64,
}

pub fn row_blocks(k: usize) -> Vec<Block> {
    (0..k).map(|i| Block { rows: vec![i], weight: 1.0 }).collect()
}

pub fn group_blocks(groups: &[Vec<usize>]) -> Vec<Block> {
    groups
        .iter()
        .map(|g| Block {
            rows: g.clone(),
            weight: (g.len() as f64).sqrt(),
        })
        .collect()
}

fn block_norm(m: &Mat, rows: &[usize]) -> f64 {
    rows.iter().map(|&i| m.row(i).norm_squared()).sum::<f64>().sqrt()
}

pub fn penalty(d: &Mat, blocks: &[Block], b: &Mat) -> f64 {
    let db = d * b;
    blocks.iter().map(|blk| blk.weight * block_norm(&db, &blk.rows)).sum()
}

pub fn objective(x: &Mat, y: &Mat, d: &Mat, blocks: &[Block], rho: f64, b: &Mat) -> f64 {
    (y - x * b).norm_squared() / x.nrows() as f64 + rho * penalty(d, blocks, b)
}

pub struct OracleSolution {
    pub coef: Mat,
    pub primal: f64,
    pub dual: f64,
}

pub fn solve(x: &Mat, y: &Mat, d: &Mat, blocks: &[Block], rho: f64, iters: usize) -> OracleSolution {
    let n = x.nrows() as f64;
    let g = x.transpose() * x / n;
    let g_inv = g.clone().try_inverse().expect("oracle needs X'X invertible");
    let c = x.transpose() * y / n;
    let base = &g_inv * &c;
    let coef_of = |w: &Mat| &base - &g_inv * (d.transpose() * w) * 0.5;

    let h = d * &g_inv * d.transpose() * 0.5;
    let lip = h.symmetric_eigenvalues().max().max(1e-300);
    let step = 1.0 / lip;

    let project = |w: &mut Mat| {
        for blk in blocks {
            let radius = rho * blk.weight;
            let norm = block_norm(w, &blk.rows);
            if norm > radius {
                let s = if norm > 0.0 { radius / norm } else { 0.0 };
                for &i in &blk.rows {
                    let mut row = w.row_mut(i);
                    row *= s;
                }
            }
        }
    };

    let (k, q) = (d.nrows(), y.ncols());
    let mut w = Mat::zeros(k, q);
    let mut v = w.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = d * coef_of(&v);
        let mut next = &v + grad * step;
        project(&mut next);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        v = &next + (&next - &w) * ((t - 1.0) / t_next);
        w = next;
        t = t_next;
    }
    let coef = coef_of(&w);
    let primal = objective(x, y, d, blocks, rho, &coef);
    let dual = (y - x * &coef).norm_squared() / n + (w.transpose() * (d * &coef)).trace();
    OracleSolution { coef, primal, dual }
}
