//! Text checkpoints. Floats are written in shortest round-trip form so a
//! save/load cycle reproduces every bit.
//!
//! ```text
//! cmarl-nn-checkpoint 1
//! net psi 11 32 32 1
//! <one value per line>
//! net phi ...
//! net psi_bar ...
//! ```

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{AgentParams, MlpParams};

const MAGIC: &str = "cmarl-nn-checkpoint";
const VERSION: u32 = 1;
const NETS: [&str; 3] = ["psi", "phi", "psi_bar"];

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_checkpoint<W: Write>(params: &AgentParams, mut w: W) -> Result<(), CheckpointError> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    for (name, net) in NETS.iter().zip([&params.psi, &params.phi, &params.psi_bar]) {
        let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
        writeln!(w, "net {name} {}", sizes.join(" "))?;
        for v in &net.data {
            writeln!(w, "{v:?}")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<AgentParams, CheckpointError> {
    let mut lines = r.lines().enumerate().map(|(i, l)| l.map(|l| (i + 1, l)));
    let mut next = |what: &str| -> Result<(usize, String), CheckpointError> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| CheckpointError::Format { line: 0, msg: format!("truncated before {what}") })
    };
    let (line, header) = next("header")?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or(CheckpointError::Format { line, msg: "not a checkpoint".into() })?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut nets = Vec::with_capacity(3);
    for name in NETS {
        let (line, head) = next(name)?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some("net") || parts.next() != Some(name) {
            return Err(CheckpointError::Format { line, msg: format!("expected `net {name}`") });
        }
        let sizes: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| CheckpointError::Format { line, msg: format!("bad size `{p}`") }))
            .collect::<Result<_, _>>()?;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(CheckpointError::Format { line, msg: "invalid layer sizes".into() });
        }
        let mut net = MlpParams::zeros(&sizes);
        for v in net.data.iter_mut() {
            let (line, text) = next(name)?;
            *v = text
                .trim()
                .parse()
                .map_err(|_| CheckpointError::Format { line, msg: format!("bad value `{text}`") })?;
        }
        nets.push(net);
    }
    let psi_bar = nets.pop().unwrap();
    let phi = nets.pop().unwrap();
    let psi = nets.pop().unwrap();
    if !psi.same_shape(&psi_bar) {
        return Err(CheckpointError::Format { line: 0, msg: "psi and psi_bar differ in shape".into() });
    }
    Ok(AgentParams { psi, phi, psi_bar })
}
