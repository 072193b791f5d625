//! Plain CSV writers for the dynamics experiments. Numbers use Rust's
//! shortest round-trip formatting, so identical runs give identical bytes.

use std::io::Write;

use crate::error::Result;

use super::{Cloud, DecayCertificate, DivergenceTrace, MultilayerReport, Orbit};

fn header<W: Write>(w: &mut W, prefix: &[&str], coord: &str, dim: usize) -> Result<()> {
    let mut cols: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    cols.extend((0..dim).map(|i| format!("{coord}{i}")));
    writeln!(w, "{}", cols.join(","))?;
    Ok(())
}

fn row<W: Write>(w: &mut W, prefix: &[String], values: &[f64]) -> Result<()> {
    let mut cols: Vec<String> = prefix.to_vec();
    cols.extend(values.iter().map(|v| v.to_string()));
    writeln!(w, "{}", cols.join(","))?;
    Ok(())
}

/// `t,u0,u1,…`
pub fn write_orbit<W: Write>(mut w: W, o: &Orbit) -> Result<()> {
    header(&mut w, &["t"], "u", o.u0.len())?;
    for (t, u) in o.times.iter().zip(&o.states) {
        row(&mut w, &[t.to_string()], u)?;
    }
    Ok(())
}

/// `x0,x1,…` (hidden-state projection) or, with `full`, `u0,u1,…`.
pub fn write_cloud<W: Write>(mut w: W, c: &Cloud, full: bool) -> Result<()> {
    if full {
        header(&mut w, &[], "u", c.points.first().map_or(0, |p| p.len()))?;
        for p in &c.points {
            row(&mut w, &[], p)?;
        }
    } else {
        header(&mut w, &[], "x", c.projected.first().map_or(0, Vec::len))?;
        for p in &c.projected {
            row(&mut w, &[], p)?;
        }
    }
    Ok(())
}

/// `trial,t,distance`
pub fn write_divergence<W: Write>(mut w: W, traces: &[DivergenceTrace]) -> Result<()> {
    writeln!(w, "trial,t,distance")?;
    for (k, tr) in traces.iter().enumerate() {
        for (t, d) in tr.distances.iter().enumerate() {
            writeln!(w, "{k},{t},{d}")?;
        }
    }
    Ok(())
}

/// `t,layer,unit,value` for the slowest units of every layer.
pub fn write_decay<W: Write>(mut w: W, r: &MultilayerReport) -> Result<()> {
    writeln!(w, "t,layer,unit,value")?;
    for (t, hs) in r.values.iter().enumerate() {
        for l in &r.layers {
            for &(unit, _) in &l.slowest {
                writeln!(w, "{t},{},{unit},{}", l.layer, hs[l.layer][unit])?;
            }
        }
    }
    Ok(())
}

/// `i,T,k,Theta,H,bound,observed,satisfied`
pub fn write_certificates<'a, W: Write>(
    mut w: W,
    certs: impl IntoIterator<Item = &'a DecayCertificate>,
) -> Result<()> {
    writeln!(w, "i,T,k,Theta,H,bound,observed,satisfied")?;
    for c in certs {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            c.component, c.t_start, c.k, c.theta, c.eta, c.bound, c.observed, c.satisfied
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{iterate, InducedMap};

    #[test]
    fn orbit_csv_layout() {
        let o = iterate(&InducedMap::henon(), &[0.0, 0.0], 2, 0, 1).unwrap();
        let mut buf = Vec::new();
        write_orbit(&mut buf, &o).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "t,u0,u1\n0,0,0\n1,1,0\n2,-0.3999999999999999,0.3\n");
    }

    #[test]
    fn divergence_csv_layout() {
        let tr = vec![DivergenceTrace {
            distances: vec![0.5, 0.25],
            perturbation_scale: 1.0,
        }];
        let mut buf = Vec::new();
        write_divergence(&mut buf, &tr).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "trial,t,distance\n0,0,0.5\n0,1,0.25\n");
    }
}
