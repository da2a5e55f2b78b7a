//! Versioned parameter files.
//!
//! Layout: a text header of newline-terminated lines
//!
//! ```text
//! cenra-ckpt v1
//! meta <key> <value>          (zero or more)
//! net <name> <input> <hidden,..|-> <output> <activation> <param_count>   (one or more)
//! end
//! ```
//!
//! followed by every network's parameters in declaration and layout order,
//! each stored as a little-endian IEEE-754 64-bit float.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::approximator::net::{Activation, NetSpec, Network, ParamVector};
use crate::error::{Error, Result};
use crate::float::Float;

pub const MAGIC: &str = "cenra-ckpt v1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedNet {
    pub name: String,
    pub spec: NetSpec,
    pub values: Vec<f64>,
}

/// In-memory image of a checkpoint file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub nets: Vec<NamedNet>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with_net<T: Float>(mut self, name: &str, net: &Network<T>) -> Self {
        self.nets.push(NamedNet {
            name: name.to_string(),
            spec: net.spec.clone(),
            values: net.params.values().iter().map(|v| v.as_f64()).collect(),
        });
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn net<T: Float>(&self, name: &str) -> Result<Network<T>> {
        let n = self
            .nets
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("no network named {name:?}")))?;
        let params = ParamVector::from_values(&n.spec, n.values.iter().map(|&v| T::of(v)).collect())?;
        Ok(Network { spec: n.spec.clone(), params })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') || k.is_empty() {
                return Err(Error::Checkpoint(format!("unencodable meta entry {k:?}")));
            }
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for n in &self.nets {
            if n.name.contains(char::is_whitespace) || n.name.is_empty() {
                return Err(Error::Checkpoint(format!("unencodable network name {:?}", n.name)));
            }
            let hidden = if n.spec.hidden.is_empty() {
                "-".to_string()
            } else {
                n.spec.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",")
            };
            header.push_str(&format!(
                "net {} {} {} {} {} {}\n",
                n.name,
                n.spec.input_dim,
                hidden,
                n.spec.output_dim,
                n.spec.activation.name(),
                n.values.len()
            ));
        }
        header.push_str("end\n");
        w.write_all(header.as_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.nets.iter().map(|n| n.values.len()).sum::<usize>());
        for n in &self.nets {
            for v in &n.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let next_line = |r: &mut BufReader<R>, line: &mut String| -> Result<()> {
            line.clear();
            if r.read_line(line)? == 0 {
                return Err(Error::Checkpoint("unexpected end of header".into()));
            }
            Ok(())
        };
        next_line(&mut r, &mut line)?;
        if line.trim_end() != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic line {:?}", line.trim_end())));
        }
        let mut ck = Checkpoint::new();
        loop {
            next_line(&mut r, &mut line)?;
            let l = line.trim_end_matches('\n');
            if l == "end" {
                break;
            }
            if let Some(rest) = l.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = l.strip_prefix("net ") {
                ck.nets.push(parse_net_line(rest)?);
            } else {
                return Err(Error::Checkpoint(format!("unrecognized header line {l:?}")));
            }
        }
        for n in ck.nets.iter_mut() {
            let mut bytes = vec![0u8; 8 * n.values.len()];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::Checkpoint(format!("truncated parameters for {:?}", n.name)))?;
            n.values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn parse_net_line(rest: &str) -> Result<NamedNet> {
    let bad = || Error::Checkpoint(format!("malformed net line {rest:?}"));
    let f: Vec<&str> = rest.split(' ').collect();
    if f.len() != 6 {
        return Err(bad());
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let hidden = if f[2] == "-" {
        Vec::new()
    } else {
        f[2].split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    let activation = Activation::parse(f[4]).ok_or_else(bad)?;
    let spec = NetSpec { input_dim: num(f[1])?, hidden, output_dim: num(f[3])?, activation };
    spec.validate().map_err(|_| bad())?;
    let count = num(f[5])?;
    if count != spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "net {:?} declares {count} parameters, shape needs {}",
            f[0],
            spec.param_count()
        )));
    }
    Ok(NamedNet { name: f[0].to_string(), spec, values: vec![0.0; count] })
}
