//! Binary checkpoint format for converged states.
//!
//! Little-endian layout: magic `RSTR`, version `u32`, grid points per axis
//! `u32`, box length `f64`, orbital count `u32`, mass `f64`, coupling `f64`,
//! occupations `f64 x N`, pair angles `f64 x K` (`K = 0` for Hartree-Fock
//! states, otherwise `N / 2`), then `N` orbitals as interleaved `(re, im)`
//! pairs of physical wavefunction values in x-fastest order.
//!
//! Version 1 has no field recording `K`; a file whose length leaves exactly
//! `N/2` extra values after the occupations is read as a pairing state.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::states::{OrbitalSet, PairingState};
use crate::C64;

pub const MAGIC: &[u8; 4] = b"RSTR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub grid: SpectralGrid,
    pub mass: f64,
    pub kappa: f64,
    pub occupations: Vec<f64>,
    pub pair_angles: Vec<f64>,
    /// Grid coefficients (unit l2 sum per orbital).
    pub orbitals: Vec<Vec<C64>>,
}

impl Checkpoint {
    pub fn from_orbitals(state: &OrbitalSet, mass: f64, kappa: f64) -> Self {
        Self {
            grid: state.grid().clone(),
            mass,
            kappa,
            occupations: state.occupations().to_vec(),
            pair_angles: Vec::new(),
            orbitals: state.orbitals().to_vec(),
        }
    }

    pub fn from_pairing(state: &PairingState, mass: f64, kappa: f64) -> Self {
        let mut c = Self::from_orbitals(state.base(), mass, kappa);
        c.pair_angles = state.pair_angles().to_vec();
        c
    }

    pub fn orbital_set(&self) -> Result<OrbitalSet> {
        if self.pair_angles.is_empty() {
            OrbitalSet::with_occupations(
                self.grid.clone(),
                self.orbitals.clone(),
                self.occupations.clone(),
            )
        } else {
            OrbitalSet::build(self.grid.clone(), self.orbitals.clone(), self.occupations.clone())
        }
    }

    pub fn pairing_state(&self) -> Result<PairingState> {
        PairingState::new(self.orbital_set()?, self.pair_angles.clone())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = Vec::with_capacity(
            40 + 8 * (self.occupations.len() + self.pair_angles.len())
                + 16 * self.orbitals.len() * self.grid.len(),
        );
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.grid.n() as u32).to_le_bytes());
        buf.extend_from_slice(&self.grid.box_length().to_le_bytes());
        buf.extend_from_slice(&(self.orbitals.len() as u32).to_le_bytes());
        buf.extend_from_slice(&self.mass.to_le_bytes());
        buf.extend_from_slice(&self.kappa.to_le_bytes());
        for v in self.occupations.iter().chain(&self.pair_angles) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let scale = 1.0 / self.grid.cell_volume().sqrt();
        for u in &self.orbitals {
            for v in u {
                buf.extend_from_slice(&(v.re * scale).to_le_bytes());
                buf.extend_from_slice(&(v.im * scale).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = cur.u32()? as usize;
        let box_length = cur.f64()?;
        let count = cur.u32()? as usize;
        let mass = cur.f64()?;
        let kappa = cur.f64()?;
        let grid = SpectralGrid::new(n, box_length)?;
        let orbital_bytes = count
            .checked_mul(grid.len())
            .and_then(|v| v.checked_mul(16))
            .ok_or_else(|| Error::Format("orbital block too large".into()))?;
        let header = cur.pos + 8 * count;
        let rest = bytes
            .len()
            .checked_sub(header + orbital_bytes)
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        let pairs = match rest {
            0 => 0,
            r if count % 2 == 0 && r == 8 * (count / 2) => count / 2,
            _ => return Err(Error::Format("unexpected payload length".into())),
        };
        let occupations = (0..count).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let pair_angles = (0..pairs).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let scale = grid.cell_volume().sqrt();
        let mut orbitals = Vec::with_capacity(count);
        for _ in 0..count {
            let mut u = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                let re = cur.f64()?;
                let im = cur.f64()?;
                u.push(C64::new(re * scale, im * scale));
            }
            orbitals.push(u);
        }
        Ok(Self { grid, mass, kappa, occupations, pair_angles, orbitals })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        Self::read_from(&mut f)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos + k;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{random_pairing_state, random_smooth_frame};

    #[test]
    fn roundtrip_hf_and_pairing() {
        let g = SpectralGrid::new(8, 3.0).unwrap();
        let s = random_smooth_frame(&g, 3, 1).unwrap();
        let c = Checkpoint::from_orbitals(&s, 1.0, 0.5);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RSTR");
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.grid, c.grid);
        assert_eq!(back.kappa, 0.5);
        assert!(back.pair_angles.is_empty());
        for (a, b) in back.orbitals.iter().zip(&c.orbitals) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).norm() < 1e-15);
            }
        }
        let p = random_pairing_state(&g, 1, 2).unwrap();
        let c = Checkpoint::from_pairing(&p, 0.0, 1.0);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.pair_angles, p.pair_angles());
        assert!(back.pairing_state().is_ok());
    }

    #[test]
    fn rejects_unknown_version_and_truncation() {
        let g = SpectralGrid::new(8, 1.0).unwrap();
        let s = random_smooth_frame(&g, 1, 1).unwrap();
        let mut buf = Vec::new();
        Checkpoint::from_orbitals(&s, 0.0, 1.0).write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(Checkpoint::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        buf.truncate(buf.len() - 3);
        assert!(Checkpoint::read_from(&mut buf.as_slice()).is_err());
        assert!(Checkpoint::read_from(&mut &b"XXXX"[..]).is_err());
    }
}
