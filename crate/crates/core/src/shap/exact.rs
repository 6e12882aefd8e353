//! Exact Shapley values and Shapley interaction values by enumerating every
//! coalition.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest player count the enumeration accepts.
pub const MAX_EXACT_PLAYERS: usize = 20;

/// A cooperative game over players `0..n_players()`. Coalitions are bit
/// masks: bit `i` set means player `i` is in the coalition.
pub trait CoalitionGame: Sync {
    fn n_players(&self) -> usize;
    fn value(&self, coalition: u32) -> f64;
}

/// A game given by an explicit closure, for tests and small examples.
pub struct FnGame<F: Fn(u32) -> f64 + Sync> {
    pub players: usize,
    pub v: F,
}

impl<F: Fn(u32) -> f64 + Sync> CoalitionGame for FnGame<F> {
    fn n_players(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: u32) -> f64 {
        (self.v)(coalition)
    }
}

fn guard(n: usize) -> Result<()> {
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyPlayers {
            players: n,
            limit: MAX_EXACT_PLAYERS,
        });
    }
    Ok(())
}

/// `ln(k!)` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// All `2^n` coalition values, evaluated in parallel.
pub fn value_table(game: &dyn CoalitionGame) -> Result<Vec<f64>> {
    let n = game.n_players();
    guard(n)?;
    Ok((0..1u32 << n).into_par_iter().map(|s| game.value(s)).collect())
}

/// Shapley values of every player from a precomputed value table.
pub fn shapley_from_table(n: usize, table: &[f64]) -> Vec<f64> {
    let lf = log_factorials(n);
    // weight |S|!(n-|S|-1)!/n! indexed by |S|
    let weights: Vec<f64> = (0..n)
        .map(|s| (lf[s] + lf[n - s - 1] - lf[n]).exp())
        .collect();
    (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            let mut phi = 0.0;
            for s in 0..1u32 << n {
                if s & bit == 0 {
                    phi += weights[s.count_ones() as usize] * (table[(s | bit) as usize] - table[s as usize]);
                }
            }
            phi
        })
        .collect()
}

pub fn exact_shapley(game: &dyn CoalitionGame, player: usize) -> Result<f64> {
    let n = game.n_players();
    if player >= n {
        return Err(Error::InvalidArgument(format!("player {player} out of range 0..{n}")));
    }
    Ok(exact_shapley_all(game)?[player])
}

pub fn exact_shapley_all(game: &dyn CoalitionGame) -> Result<Vec<f64>> {
    let table = value_table(game)?;
    Ok(shapley_from_table(game.n_players(), &table))
}

/// Shapley interaction values: off-diagonal entries are half the Shapley
/// interaction index, the diagonal holds `φ_i - Σ_{j≠i} Φ_ij`.
pub fn exact_interactions(game: &dyn CoalitionGame) -> Result<Vec<Vec<f64>>> {
    let n = game.n_players();
    let table = value_table(game)?;
    let phi = shapley_from_table(n, &table);
    let mut out = vec![vec![0.0; n]; n];
    if n < 2 {
        for i in 0..n {
            out[i][i] = phi[i];
        }
        return Ok(out);
    }
    let lf = log_factorials(n);
    // |S|!(n-|S|-2)!/(2(n-1)!) indexed by |S|
    let weights: Vec<f64> = (0..n - 1)
        .map(|s| (lf[s] + lf[n - s - 2] - lf[n - 1]).exp() / 2.0)
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            let (bi, bj) = (1u32 << i, 1u32 << j);
            let mut v = 0.0;
            for s in 0..1u32 << n {
                if s & (bi | bj) == 0 {
                    let delta = table[(s | bi | bj) as usize] - table[(s | bi) as usize]
                        - table[(s | bj) as usize]
                        + table[s as usize];
                    v += weights[s.count_ones() as usize] * delta;
                }
            }
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| out[i][j]).sum();
        out[i][i] = phi[i] - off;
    }
    Ok(out)
}
