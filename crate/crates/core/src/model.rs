//! Learned DSK models and their text serialization.
//!
//! A model file is a sequence of `key value…` lines:
//!
//! ```text
//! dsk-model v1
//! theta <f64>
//! mode power|coef
//! criterion ka:<reg_lambda>|cs|rm|tm
//! c <f64>|none
//! objective <f64>
//! iterations <n>
//! fingerprint <sha-256 hex of the training set>
//! dim <d>
//! alpha <d f64>
//! alpha0 <d f64>
//! svm none | svm <pairs> <num_classes> <C>
//! ```
//!
//! followed, when an SVM is stored, by one block per class pair:
//! `pair <a> <b> <m>`, `indices <m>`, `targets <m ±1>`, `eta <m f64>`,
//! `bias <f64>`, `dual <f64>`. Floats use `{:.16e}` and round-trip exactly.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::classify::{OvoSvmModel, PairSvm};
use crate::criteria::CriterionId;
use crate::dsk::{AdjustmentMode, AdjustmentParams};
use crate::error::{Error, Result};
use crate::gram::DskKernel;

pub const MODEL_MAGIC: &str = "dsk-model v1";

#[derive(Debug, Clone, PartialEq)]
pub struct DskModel {
    pub theta: f64,
    pub params: AdjustmentParams,
    pub criterion: CriterionId,
    pub c: Option<f64>,
    /// Criterion value at the returned parameters.
    pub objective: f64,
    pub iterations: usize,
    pub fingerprint: String,
    pub svm: Option<OvoSvmModel>,
}

impl DskModel {
    pub fn kernel(&self) -> Result<DskKernel> {
        DskKernel::new(self.theta, self.params.clone())
    }

    /// Same `θ` and `C` with `α = 1`: the plain Stein kernel.
    pub fn baseline(&self) -> Self {
        Self {
            params: AdjustmentParams::identity(self.params.dim(), self.params.mode()),
            iterations: 0,
            svm: None,
            ..self.clone()
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let f = |v: f64| format!("{v:.16e}");
        let vec = |v: &DVector<f64>| v.iter().map(|&x| f(x)).collect::<Vec<_>>().join(" ");
        writeln!(out, "{MODEL_MAGIC}")?;
        writeln!(out, "theta {}", f(self.theta))?;
        writeln!(out, "mode {}", self.params.mode())?;
        writeln!(out, "criterion {}", self.criterion)?;
        match self.c {
            Some(c) => writeln!(out, "c {}", f(c))?,
            None => writeln!(out, "c none")?,
        }
        writeln!(out, "objective {}", f(self.objective))?;
        writeln!(out, "iterations {}", self.iterations)?;
        writeln!(out, "fingerprint {}", self.fingerprint)?;
        writeln!(out, "dim {}", self.params.dim())?;
        writeln!(out, "alpha {}", vec(self.params.alpha()))?;
        writeln!(out, "alpha0 {}", vec(self.params.alpha0()))?;
        match &self.svm {
            None => writeln!(out, "svm none")?,
            Some(svm) => {
                writeln!(out, "svm {} {} {}", svm.pairs.len(), svm.num_classes, f(svm.c))?;
                for p in &svm.pairs {
                    let m = p.indices.len();
                    writeln!(out, "pair {} {} {m}", p.classes.0, p.classes.1)?;
                    let idx: Vec<String> = p.indices.iter().map(|i| i.to_string()).collect();
                    writeln!(out, "indices {}", idx.join(" "))?;
                    let t: Vec<&str> = p.targets.iter().map(|&t| if t > 0.0 { "1" } else { "-1" }).collect();
                    writeln!(out, "targets {}", t.join(" "))?;
                    writeln!(out, "eta {}", vec(&p.eta))?;
                    writeln!(out, "bias {}", f(p.bias))?;
                    writeln!(out, "dual {}", f(p.objective))?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("model text is ASCII")
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = Lines::new(input);
        let (no, magic) = lines.next_line()?;
        if magic.trim() != MODEL_MAGIC {
            return Err(Error::Parse {
                line: no,
                message: format!("expected '{MODEL_MAGIC}'"),
            });
        }
        let theta = lines.scalar("theta")?;
        let mode: AdjustmentMode = lines.field("mode")?.1.parse()?;
        let criterion: CriterionId = lines.field("criterion")?.1.parse()?;
        let (no, c_text) = lines.field("c")?;
        let c = match c_text.as_str() {
            "none" => None,
            other => Some(parse_f64(other, no)?),
        };
        let objective = lines.scalar("objective")?;
        let iterations = lines.integer("iterations")?;
        let fingerprint = lines.field("fingerprint")?.1;
        let dim = lines.integer("dim")?;
        let alpha = lines.floats("alpha", dim)?;
        let alpha0 = lines.floats("alpha0", dim)?;
        let params = AdjustmentParams::with_prior(mode, DVector::from_vec(alpha), DVector::from_vec(alpha0))?;

        let (no, svm_text) = lines.field("svm")?;
        let svm = if svm_text == "none" {
            None
        } else {
            let parts: Vec<&str> = svm_text.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: no,
                    message: "expected 'svm <pairs> <num_classes> <C>'".into(),
                });
            }
            let count = parse_usize(parts[0], no)?;
            let num_classes = parse_usize(parts[1], no)?;
            let c = parse_f64(parts[2], no)?;
            let mut pairs = Vec::with_capacity(count);
            for _ in 0..count {
                let (no, head) = lines.field("pair")?;
                let h: Vec<usize> = head
                    .split_whitespace()
                    .map(|t| parse_usize(t, no))
                    .collect::<Result<_>>()?;
                if h.len() != 3 {
                    return Err(Error::Parse {
                        line: no,
                        message: "expected 'pair <a> <b> <m>'".into(),
                    });
                }
                let m = h[2];
                let (no, idx) = lines.field("indices")?;
                let indices: Vec<usize> = idx
                    .split_whitespace()
                    .map(|t| parse_usize(t, no))
                    .collect::<Result<_>>()?;
                check_len(indices.len(), m, no)?;
                let targets = lines.floats("targets", m)?;
                let eta = lines.floats("eta", m)?;
                let bias = lines.scalar("bias")?;
                let objective = lines.scalar("dual")?;
                pairs.push(PairSvm {
                    classes: (h[0], h[1]),
                    indices,
                    targets,
                    eta: DVector::from_vec(eta),
                    bias,
                    objective,
                });
            }
            Some(OvoSvmModel { c, num_classes, pairs })
        };
        if let Some((no, extra)) = lines.remaining()? {
            return Err(Error::Parse {
                line: no,
                message: format!("trailing content '{extra}'"),
            });
        }
        Ok(Self {
            theta,
            params,
            criterion,
            c,
            objective,
            iterations,
            fingerprint,
            svm,
        })
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad float '{s}'"),
    })
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad integer '{s}'"),
    })
}

fn check_len(found: usize, expected: usize, line: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Parse {
            line,
            message: format!("expected {expected} values, got {found}"),
        });
    }
    Ok(())
}

struct Lines<R> {
    inner: std::iter::Enumerate<std::io::Lines<R>>,
}

impl<R: BufRead> Lines<R> {
    fn new(input: R) -> Self {
        Self {
            inner: input.lines().enumerate(),
        }
    }

    fn next_line(&mut self) -> Result<(usize, String)> {
        loop {
            match self.inner.next() {
                Some((_, Ok(l))) if l.trim().is_empty() => continue,
                Some((i, Ok(l))) => return Ok((i + 1, l)),
                Some((_, Err(e))) => return Err(e.into()),
                None => {
                    return Err(Error::Parse {
                        line: 0,
                        message: "unexpected end of model file".into(),
                    })
                }
            }
        }
    }

    fn remaining(&mut self) -> Result<Option<(usize, String)>> {
        for (i, l) in self.inner.by_ref() {
            let l = l?;
            if !l.trim().is_empty() {
                return Ok(Some((i + 1, l)));
            }
        }
        Ok(None)
    }

    /// The text after `key` on the next line.
    fn field(&mut self, key: &str) -> Result<(usize, String)> {
        let (no, line) = self.next_line()?;
        let line = line.trim();
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(Error::Parse {
                line: no,
                message: format!("expected '{key}', found '{k}'"),
            });
        }
        Ok((no, rest.trim().to_string()))
    }

    fn scalar(&mut self, key: &str) -> Result<f64> {
        let (no, v) = self.field(key)?;
        parse_f64(&v, no)
    }

    fn integer(&mut self, key: &str) -> Result<usize> {
        let (no, v) = self.field(key)?;
        parse_usize(&v, no)
    }

    fn floats(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let (no, v) = self.field(key)?;
        let out: Vec<f64> = v.split_whitespace().map(|t| parse_f64(t, no)).collect::<Result<_>>()?;
        check_len(out.len(), expected, no)?;
        Ok(out)
    }
}
