//! Plain-text wavefunction dumps for restarting long runs.
//!
//! ```text
//! qinfluence-checkpoint v1
//! dim <D>
//! step <k>
//! t <t>
//! <re> <im>        (D lines, basis order of HilbertSpaceSpec)
//! ```
//!
//! Numbers use Rust's shortest round-trip `{:e}` formatting, so a
//! save/load cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{JointWaveFunction, PropagatorError};
use crate::scalar::{cplx, Real};

pub const CHECKPOINT_MAGIC: &str = "qinfluence-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub step: usize,
    pub t: T,
    pub psi: JointWaveFunction<T>,
}

fn bad(msg: impl Into<String>) -> PropagatorError {
    PropagatorError::Checkpoint(msg.into())
}

impl<T: Real> Checkpoint<T> {
    pub fn write<W: Write>(&self, w: W) -> Result<(), PropagatorError> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "dim {}", self.psi.dimension())?;
        writeln!(w, "step {}", self.step)?;
        writeln!(w, "t {:e}", self.t.as_f64())?;
        for z in self.psi.amplitudes() {
            writeln!(w, "{:e} {:e}", z.re.as_f64(), z.im.as_f64())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self, PropagatorError> {
        let mut lines = BufReader::new(r).lines();
        let mut next = |what: &str| -> Result<String, PropagatorError> {
            lines.next().ok_or_else(|| bad(format!("missing {what}")))?.map_err(Into::into)
        };
        let magic = next("header")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(bad(format!("unrecognised header {magic:?}")));
        }
        let field = |line: String, key: &str| -> Result<String, PropagatorError> {
            line.strip_prefix(key)
                .and_then(|s| s.strip_prefix(' '))
                .map(|s| s.trim().to_owned())
                .ok_or_else(|| bad(format!("expected '{key} ...', found {line:?}")))
        };
        let dim: usize = field(next("dim")?, "dim")?.parse().map_err(|_| bad("bad dim"))?;
        let step: usize = field(next("step")?, "step")?.parse().map_err(|_| bad("bad step"))?;
        let t: f64 = field(next("t")?, "t")?.parse().map_err(|_| bad("bad t"))?;
        let mut amps = Vec::with_capacity(dim);
        for i in 0..dim {
            let line = next("amplitude")?;
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(re)), Some(Ok(im)), None) => amps.push(cplx(T::lit(re), T::lit(im))),
                _ => return Err(bad(format!("bad amplitude line {i}: {line:?}"))),
            }
        }
        if lines.any(|l| l.map(|s| !s.trim().is_empty()).unwrap_or(true)) {
            return Err(bad("trailing data"));
        }
        Ok(Self {
            step,
            t: T::lit(t),
            psi: JointWaveFunction::new(amps, T::lit(1e-6))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PropagatorError> {
        // Write to a sibling and rename so an interrupted save never
        // clobbers the previous checkpoint.
        let tmp = path.with_extension("tmp");
        self.write(File::create(&tmp)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PropagatorError> {
        Self::read(File::open(path)?)
    }
}
