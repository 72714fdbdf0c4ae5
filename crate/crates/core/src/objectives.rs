//! Benchmark objectives.
//!
//! Objectives are minimized, except the reward objectives used by the
//! fitness-proportional path, which are non-negative and maximized; each
//! objective carries its [`Direction`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // float methods come from std when it is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::rng;

/// Largest dimension for which table objectives are stored explicitly.
pub const MAX_TABLE_DIM: usize = 16;

/// Anything that maps a search point to a fitness value.
pub trait Fitness {
    fn value(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Fitness for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveId {
    /// `d - sum x_i`
    OneMax,
    /// `sum 2^(i-1) (1 - x_i)`
    BinVal,
    /// `d -` number of leading ones
    LeadingOnes,
    /// seeded i.i.d. uniform value per point of `{0,1}^d`
    RandomTable,
    /// `||x||^2`
    Sphere,
    /// `sum 10^(6 (i-1)/(d-1)) x_i^2`
    Ellipsoid,
    /// reward `sum x_i`, maximized
    OneMaxReward,
    /// seeded non-negative reward table, maximized
    RandomReward,
}

impl ObjectiveId {
    pub const ALL: [ObjectiveId; 8] = [
        ObjectiveId::OneMax,
        ObjectiveId::BinVal,
        ObjectiveId::LeadingOnes,
        ObjectiveId::RandomTable,
        ObjectiveId::Sphere,
        ObjectiveId::Ellipsoid,
        ObjectiveId::OneMaxReward,
        ObjectiveId::RandomReward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveId::OneMax => "onemax",
            ObjectiveId::BinVal => "binval",
            ObjectiveId::LeadingOnes => "leadingones",
            ObjectiveId::RandomTable => "random-table",
            ObjectiveId::Sphere => "sphere",
            ObjectiveId::Ellipsoid => "ellipsoid",
            ObjectiveId::OneMaxReward => "onemax-reward",
            ObjectiveId::RandomReward => "random-reward",
        }
    }

    pub fn space(self) -> Space {
        match self {
            ObjectiveId::Sphere | ObjectiveId::Ellipsoid => Space::Continuous,
            _ => Space::Binary,
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            ObjectiveId::OneMaxReward | ObjectiveId::RandomReward => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectiveId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::config("objective", format!("unknown objective `{s}`")))
    }
}

/// A concrete objective instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    id: ObjectiveId,
    dim: usize,
    table: Option<Vec<f64>>,
}

impl Objective {
    /// Builds objective `id` on dimension `dim`; `seed` only affects the
    /// table objectives.
    pub fn new(id: ObjectiveId, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dim", "dimension must be at least 1"));
        }
        let table = match id {
            ObjectiveId::RandomTable | ObjectiveId::RandomReward => {
                if dim > MAX_TABLE_DIM {
                    return Err(Error::Capacity {
                        dim,
                        max: MAX_TABLE_DIM,
                    });
                }
                let mut rng = rng::stream(seed, 0x0074_6162_6c65);
                Some((0..1usize << dim).map(|_| rng.random::<f64>()).collect())
            }
            _ => None,
        };
        Ok(Self { id, dim, table })
    }

    /// A maximized reward table with explicit values, indexed like
    /// [`crate::oracle::FiniteDist`] support points.
    pub fn reward_table(values: Vec<f64>) -> Result<Self> {
        let dim = table_dim(values.len())?;
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("reward values must be finite and non-negative"));
        }
        Ok(Self {
            id: ObjectiveId::RandomReward,
            dim,
            table: Some(values),
        })
    }

    pub fn id(&self) -> ObjectiveId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn direction(&self) -> Direction {
        self.id.direction()
    }

    pub fn space(&self) -> Space {
        self.id.space()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        if self.space() == Space::Binary && !x.iter().all(|&v| v == 0.0 || v == 1.0) {
            return Err(Error::invalid(format!("{} expects 0/1 points", self.id)));
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim as f64;
        match self.id {
            ObjectiveId::OneMax => d - x.iter().sum::<f64>(),
            ObjectiveId::OneMaxReward => x.iter().sum(),
            ObjectiveId::BinVal => x
                .iter()
                .enumerate()
                .map(|(i, xi)| Float::powi(2.0, i as i32) * (1.0 - xi))
                .sum(),
            ObjectiveId::LeadingOnes => d - x.iter().take_while(|&&v| v == 1.0).count() as f64,
            ObjectiveId::Sphere => x.iter().map(|v| v * v).sum(),
            ObjectiveId::Ellipsoid => x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let scale = if self.dim == 1 {
                        1.0
                    } else {
                        Float::powf(10.0, 6.0 * i as f64 / (d - 1.0))
                    };
                    scale * v * v
                })
                .sum(),
            ObjectiveId::RandomTable | ObjectiveId::RandomReward => {
                let table = self.table.as_ref().expect("table objectives store their table");
                table[point_index(x)]
            }
        }
    }

    /// Value in minimization convention (`-f` for maximized objectives).
    pub fn minimization_value(&self, x: &[f64]) -> f64 {
        match self.direction() {
            Direction::Minimize => self.eval_unchecked(x),
            Direction::Maximize => -self.eval_unchecked(x),
        }
    }

    /// Known optimum value and optimizer.
    pub fn optimum(&self) -> Option<(f64, Vec<f64>)> {
        match self.id {
            ObjectiveId::OneMax | ObjectiveId::BinVal | ObjectiveId::LeadingOnes => {
                Some((0.0, alloc::vec![1.0; self.dim]))
            }
            ObjectiveId::OneMaxReward => Some((self.dim as f64, alloc::vec![1.0; self.dim])),
            ObjectiveId::Sphere | ObjectiveId::Ellipsoid => {
                Some((0.0, alloc::vec![0.0; self.dim]))
            }
            ObjectiveId::RandomTable | ObjectiveId::RandomReward => None,
        }
    }

    pub fn describe(&self) -> String {
        format!("{}(d={})", self.id, self.dim)
    }
}

impl Fitness for Objective {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval_unchecked(x)
    }
}

/// Lexicographic index of a 0/1 point, `x_1` most significant.
pub fn point_index(x: &[f64]) -> usize {
    x.iter().fold(0usize, |acc, &v| (acc << 1) | usize::from(v == 1.0))
}

fn table_dim(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::invalid(format!("table length {len} is not 2^d with d >= 1")));
    }
    let dim = len.trailing_zeros() as usize;
    if dim > MAX_TABLE_DIM {
        return Err(Error::Capacity {
            dim,
            max: MAX_TABLE_DIM,
        });
    }
    Ok(dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn examples() {
        let onemax = Objective::new(ObjectiveId::OneMax, 4, 0).unwrap();
        assert_eq!(onemax.evaluate(&[1.0; 4]).unwrap(), 0.0);
        let binval = Objective::new(ObjectiveId::BinVal, 3, 0).unwrap();
        assert_eq!(binval.evaluate(&[0.0, 1.0, 0.0]).unwrap(), 5.0);
        let sphere = Objective::new(ObjectiveId::Sphere, 2, 0).unwrap();
        assert_eq!(sphere.evaluate(&[3.0, 4.0]).unwrap(), 25.0);
        let lo = Objective::new(ObjectiveId::LeadingOnes, 4, 0).unwrap();
        assert_eq!(lo.evaluate(&[1.0, 1.0, 0.0, 1.0]).unwrap(), 2.0);
        let ell = Objective::new(ObjectiveId::Ellipsoid, 3, 0).unwrap();
        assert_eq!(ell.evaluate(&[1.0, 1.0, 1.0]).unwrap(), 1.0 + 1e3 + 1e6);
    }

    #[test]
    fn registry_optima_evaluate_to_declared_value() {
        for id in ObjectiveId::ALL {
            for dim in [1, 3, 8] {
                let obj = Objective::new(id, dim, 5).unwrap();
                if let Some((value, x)) = obj.optimum() {
                    assert_eq!(obj.evaluate(&x).unwrap(), value, "{}", obj.describe());
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let obj = Objective::new(ObjectiveId::OneMax, 3, 0).unwrap();
        assert!(matches!(obj.evaluate(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(obj.evaluate(&[0.5, 1.0, 1.0]).is_err());
    }

    #[test]
    fn random_tables_reproduce_from_seed() {
        let a = Objective::new(ObjectiveId::RandomTable, 5, 9).unwrap();
        let b = Objective::new(ObjectiveId::RandomTable, 5, 9).unwrap();
        let c = Objective::new(ObjectiveId::RandomTable, 5, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(Objective::new(ObjectiveId::RandomTable, 17, 0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for id in ObjectiveId::ALL {
            assert_eq!(id.name().parse::<ObjectiveId>().unwrap(), id);
        }
        assert!("rosenbrock".parse::<ObjectiveId>().is_err());
    }

    #[test]
    fn point_index_is_lexicographic() {
        assert_eq!(point_index(&[0.0, 0.0]), 0);
        assert_eq!(point_index(&[0.0, 1.0]), 1);
        assert_eq!(point_index(&[1.0, 0.0]), 2);
        assert_eq!(point_index(&[1.0, 1.0]), 3);
    }

    #[test]
    fn reward_tables() {
        let r = Objective::reward_table(vec![1.0, 2.0]).unwrap();
        assert_eq!(r.dim(), 1);
        assert_eq!(r.direction(), Direction::Maximize);
        assert_eq!(r.minimization_value(&[1.0]), -2.0);
        assert!(Objective::reward_table(vec![1.0, -2.0]).is_err());
        assert!(Objective::reward_table(vec![1.0, 2.0, 3.0]).is_err());
    }
}
