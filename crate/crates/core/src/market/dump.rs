//! Columnar little-endian binary dump of a scenario set for replay tests.
//!
//! Layout: magic `CFBV`, `u32` version, `u64` n_paths, `u64` n_times,
//! `u32` driver count followed by length-prefixed UTF-8 driver names, then the
//! grid times, one `n_paths * n_times` block of `f64` per driver (path-major),
//! and finally the investor and counterparty default times (`+inf` when none).

use std::io::{self, Read, Write};

use super::ScenarioSet;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"CFBV";
pub const VERSION: u32 = 1;

/// Decoded dump, always in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioDump {
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub drivers: Vec<(String, Vec<f64>)>,
    pub tau_investor: Vec<f64>,
    pub tau_counterparty: Vec<f64>,
}

impl ScenarioDump {
    pub fn driver(&self, name: &str) -> Option<&[f64]> {
        self.drivers.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

pub fn write_dump<S: Scalar, W: Write>(scenario: &ScenarioSet<S>, mut w: W) -> io::Result<()> {
    let n_paths = scenario.n_paths();
    let times = scenario.grid().times();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(n_paths as u64).to_le_bytes())?;
    w.write_all(&(times.len() as u64).to_le_bytes())?;
    let drivers: Vec<_> = scenario.drivers().collect();
    w.write_all(&(drivers.len() as u32).to_le_bytes())?;
    for (d, _) in &drivers {
        let name = d.name().as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
    }
    let put = |w: &mut W, x: S| w.write_all(&x.to_f64_lossy().to_le_bytes());
    for t in times {
        put(&mut w, *t)?;
    }
    for (_, paths) in &drivers {
        for p in 0..n_paths {
            for x in paths.row(p) {
                put(&mut w, *x)?;
            }
        }
    }
    for p in 0..n_paths {
        put(&mut w, scenario.tau_investor(p))?;
    }
    for p in 0..n_paths {
        put(&mut w, scenario.tau_counterparty(p))?;
    }
    w.flush()
}

pub fn read_dump<R: Read>(mut r: R) -> io::Result<ScenarioDump> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a scenario dump (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(&format!("unsupported dump version {version}")));
    }
    let n_paths = read_u64(&mut r)? as usize;
    let n_times = read_u64(&mut r)? as usize;
    let n_drivers = read_u32(&mut r)? as usize;
    let mut names = Vec::with_capacity(n_drivers);
    for _ in 0..n_drivers {
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        names.push(String::from_utf8(buf).map_err(|_| bad("driver name is not UTF-8"))?);
    }
    let times = read_f64s(&mut r, n_times)?;
    let mut drivers = Vec::with_capacity(n_drivers);
    for name in names {
        drivers.push((name, read_f64s(&mut r, n_paths * n_times)?));
    }
    let tau_investor = read_f64s(&mut r, n_paths)?;
    let tau_counterparty = read_f64s(&mut r, n_paths)?;
    Ok(ScenarioDump {
        n_paths,
        times,
        drivers,
        tau_investor,
        tau_counterparty,
    })
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SimulationGrid;
    use crate::market::{simulate_scenarios, Driver, DriverConfig, ProcessSpec, VasicekParams};

    #[test]
    fn round_trip() {
        let grid = SimulationGrid::dense(1.0, 4).unwrap();
        let cfg = DriverConfig::default()
            .with(
                Driver::ShortRate,
                ProcessSpec::Vasicek(VasicekParams {
                    mean_reversion: 0.3,
                    long_run: 0.03,
                    volatility: 0.01,
                    initial: 0.02,
                }),
            )
            .with(Driver::IntensityCounterparty, ProcessSpec::flat(0.5));
        let s = simulate_scenarios(&cfg, &grid, 7, 2).unwrap();
        let mut bytes = Vec::new();
        write_dump(&s, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"CFBV");
        let d = read_dump(bytes.as_slice()).unwrap();
        assert_eq!(d.n_paths, 7);
        assert_eq!(d.times, grid.times());
        let r = d.driver("short_rate").unwrap();
        assert_eq!(&r[5 * 3..5 * 4], s.short_rate(3));
        assert_eq!(d.driver("intensity_counterparty").unwrap()[6], 0.5);
        for p in 0..7 {
            assert_eq!(d.tau_counterparty[p].to_bits(), s.tau_counterparty(p).to_bits());
        }
        assert!(read_dump(&b"XXXX"[..]).is_err());
    }
}
