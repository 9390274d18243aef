use rand::Rng;

use crate::error::{GrfError, Result};

/// Rectangular grid of ±1 spins, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinLattice {
    height: usize,
    width: usize,
    spins: Vec<i8>,
}

impl SpinLattice {
    pub fn new(height: usize, width: usize, spins: Vec<i8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(GrfError::invalid("lattice dimensions must be at least 1"));
        }
        if spins.len() != height * width {
            return Err(GrfError::invalid(format!(
                "expected {} spins for a {height}x{width} lattice, got {}",
                height * width,
                spins.len()
            )));
        }
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(GrfError::invalid(format!("spin value {bad} is not -1 or +1")));
        }
        Ok(Self {
            height,
            width,
            spins,
        })
    }

    pub fn filled(height: usize, width: usize, value: i8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Independent uniform spins.
    pub fn random<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Self {
        assert!(height > 0 && width > 0, "lattice dimensions must be at least 1");
        let spins = (0..height * width)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        Self {
            height,
            width,
            spins,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.spins[row * self.width + col]
    }

    pub fn flip(&mut self, site: usize) {
        self.spins[site] = -self.spins[site];
    }

    pub(crate) fn spins_mut(&mut self) -> &mut [i8] {
        &mut self.spins
    }

    pub(crate) fn set(&mut self, site: usize, value: i8) {
        self.spins[site] = value;
    }

    /// Sum of the (up to four) nearest-neighbour spins, free boundary.
    #[inline]
    pub fn neighbor_sum(&self, site: usize) -> i32 {
        let w = self.width;
        let row = site / w;
        let col = site % w;
        let mut sum = 0i32;
        if col > 0 {
            sum += self.spins[site - 1] as i32;
        }
        if col + 1 < w {
            sum += self.spins[site + 1] as i32;
        }
        if row > 0 {
            sum += self.spins[site - w] as i32;
        }
        if row + 1 < self.height {
            sum += self.spins[site + w] as i32;
        }
        sum
    }

    /// Number of nearest-neighbour bonds on an `height x width` grid with free boundary.
    pub fn bond_count(height: usize, width: usize) -> usize {
        height * (width - 1) + width * (height - 1)
    }
}

/// Edge-agreement statistic: sum of `y_i * y_j` over horizontal and vertical bonds.
pub fn ising_suffstat(lattice: &SpinLattice) -> f64 {
    let (h, w) = (lattice.height, lattice.width);
    let s = &lattice.spins;
    let mut total = 0i64;
    for r in 0..h {
        for c in 0..w {
            let v = s[r * w + c] as i64;
            if c + 1 < w {
                total += v * s[r * w + c + 1] as i64;
            }
            if r + 1 < h {
                total += v * s[(r + 1) * w + c] as i64;
            }
        }
    }
    total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_spins() {
        assert!(SpinLattice::new(1, 2, vec![1, 0]).is_err());
        assert!(SpinLattice::new(0, 2, vec![]).is_err());
        assert!(SpinLattice::new(2, 2, vec![1, 1, 1]).is_err());
    }

    #[test]
    fn small_lattice_statistics() {
        let all_up = SpinLattice::filled(2, 2, 1).unwrap();
        assert_eq!(ising_suffstat(&all_up), 4.0);

        let checker = SpinLattice::new(2, 2, vec![1, -1, -1, 1]).unwrap();
        assert_eq!(ising_suffstat(&checker), -4.0);

        let mut centre = SpinLattice::filled(3, 3, 1).unwrap();
        centre.flip(4);
        assert_eq!(ising_suffstat(&centre), 4.0);
    }

    #[test]
    fn bond_counts() {
        assert_eq!(SpinLattice::bond_count(2, 2), 4);
        assert_eq!(SpinLattice::bond_count(3, 3), 12);
        assert_eq!(SpinLattice::bond_count(1, 5), 4);
    }
}
