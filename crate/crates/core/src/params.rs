//! Named parameter storage and the checkpoint file format.
//!
//! Checkpoint layout: a UTF-8 header
//!
//! ```text
//! sgg-checkpoint 1 <count>
//! <name> <rows> <cols>      (count lines)
//! ```
//!
//! immediately followed by the values of every listed tensor as little-endian
//! `f64`, row-major, in header order.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SggError};
use crate::tensor::Tensor2;

const MAGIC: &str = "sgg-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor2,
    pub grad: Tensor2,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2) -> Result<ParamId> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(SggError::Config(format!(
                "invalid parameter name `{name}`"
            )));
        }
        if self.index.contains_key(&name) {
            return Err(SggError::Consistency(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor2::zeros(value.rows(), value.cols());
        self.index.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad });
        Ok(id)
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.add_bounded(name, rows, cols, bound, rng)
    }

    pub fn add_bounded(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<ParamId> {
        let t = Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound));
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn entries(&self) -> Vec<(String, Tensor2)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Overwrites stored values from checkpoint entries. Every stored
    /// parameter must be present with a matching shape; entries whose name
    /// starts with `skip_prefix` are ignored.
    pub fn load_entries(&mut self, entries: &[(String, Tensor2)], skip_prefix: &str) -> Result<()> {
        let mut seen = vec![false; self.params.len()];
        for (name, t) in entries {
            if !skip_prefix.is_empty() && name.starts_with(skip_prefix) {
                continue;
            }
            let Some(id) = self.id(name) else {
                return Err(SggError::Compatibility {
                    name: name.clone(),
                    detail: "is not part of the configured model".into(),
                });
            };
            let p = &mut self.params[id.0];
            if p.value.shape() != t.shape() {
                return Err(SggError::Compatibility {
                    name: name.clone(),
                    detail: format!(
                        "has shape {}x{} in the checkpoint but {}x{} in the model",
                        t.rows(),
                        t.cols(),
                        p.value.rows(),
                        p.value.cols()
                    ),
                });
            }
            p.value = t.clone();
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(SggError::Compatibility {
                name: self.params[missing].name.clone(),
                detail: "is missing from the checkpoint".into(),
            });
        }
        Ok(())
    }
}

pub fn write_checkpoint(path: &Path, entries: &[(String, Tensor2)]) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint_to(&mut buf, entries)?;
    std::fs::write(path, buf).map_err(|e| SggError::io(path, e))
}

pub fn write_checkpoint_to(w: &mut impl Write, entries: &[(String, Tensor2)]) -> Result<()> {
    let io = |e| SggError::io("<checkpoint>", e);
    writeln!(w, "{MAGIC} {VERSION} {}", entries.len()).map_err(io)?;
    for (name, t) in entries {
        writeln!(w, "{name} {} {}", t.rows(), t.cols()).map_err(io)?;
    }
    for (_, t) in entries {
        for v in t.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor2)>> {
    let file = std::fs::File::open(path).map_err(|e| SggError::io(path, e))?;
    read_checkpoint_from(BufReader::new(file), &path.display().to_string())
}

pub fn read_checkpoint_from(mut r: impl BufRead, origin: &str) -> Result<Vec<(String, Tensor2)>> {
    let parse_err = |line: usize, message: String| SggError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut line = String::new();
    r.read_line(&mut line)
        .map_err(|e| SggError::io(origin, e))?;
    let head: Vec<&str> = line.split_whitespace().collect();
    if head.len() != 3 || head[0] != MAGIC {
        return Err(parse_err(1, "missing checkpoint header".into()));
    }
    if head[1] != VERSION.to_string() {
        return Err(parse_err(1, format!("unsupported version {}", head[1])));
    }
    let count: usize = head[2]
        .parse()
        .map_err(|_| parse_err(1, format!("bad parameter count `{}`", head[2])))?;

    let mut shapes = Vec::with_capacity(count);
    for i in 0..count {
        line.clear();
        r.read_line(&mut line)
            .map_err(|e| SggError::io(origin, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let lineno = i + 2;
        if fields.len() != 3 {
            return Err(parse_err(lineno, "expected `<name> <rows> <cols>`".into()));
        }
        let rows: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad row count `{}`", fields[1])))?;
        let cols: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad column count `{}`", fields[2])))?;
        shapes.push((fields[0].to_string(), rows, cols));
    }

    let mut out = Vec::with_capacity(count);
    let mut bytes = [0u8; 8];
    for (name, rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut bytes).map_err(|_| SggError::Parse {
                path: origin.to_string(),
                line: count + 2,
                message: format!("payload truncated inside `{name}`"),
            })?;
            data.push(f64::from_le_bytes(bytes));
        }
        out.push((name, Tensor2::new(rows, cols, data)?));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)
        .map_err(|e| SggError::io(origin, e))?;
    if !rest.is_empty() {
        return Err(parse_err(count + 2, format!("{} trailing bytes", rest.len())));
    }
    Ok(out)
}
