use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Sparse row as (variable, coefficient).
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min c.x` subject to linear rows and `0 <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub names: Vec<String>,
    pub objective: Vec<f64>,
    /// Constant added to the objective value.
    pub offset: f64,
    /// Upper bound per variable; `f64::INFINITY` for none.
    pub upper: Vec<f64>,
    pub rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn add_var(&mut self, name: impl Into<String>, cost: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.objective.push(cost);
        self.upper.push(upper);
        self.names.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        self.rows.push(Constraint {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Objective value of `x`, offset included.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Largest violation of any row or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(-v).max(v - self.upper[j]);
        }
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = match r.sense {
                Sense::Le => lhs - r.rhs,
                Sense::Ge => r.rhs - lhs,
                Sense::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    /// Plain-text dump in the common LP file layout.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let term = |s: &mut String, first: bool, a: f64, j: usize| {
            let sign = if a < 0.0 {
                " -"
            } else if first {
                ""
            } else {
                " +"
            };
            let _ = write!(s, "{sign} {:e} {}", a.abs(), self.names[j]);
        };
        s.push_str("Minimize\n obj:");
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                term(&mut s, first, c, j);
                first = false;
            }
        }
        if self.offset != 0.0 || first {
            let _ = write!(s, " + {:e}", self.offset);
        }
        s.push_str("\nSubject To\n");
        for r in &self.rows {
            let _ = write!(s, " {}:", r.name);
            for (i, &(j, a)) in r.coeffs.iter().enumerate() {
                term(&mut s, i == 0, a, j);
            }
            let _ = writeln!(s, " {} {:e}", r.sense.symbol(), r.rhs);
        }
        s.push_str("Bounds\n");
        for (j, &u) in self.upper.iter().enumerate() {
            if u.is_finite() {
                let _ = writeln!(s, " 0 <= {} <= {:e}", self.names[j], u);
            } else {
                let _ = writeln!(s, " {} >= 0", self.names[j]);
            }
        }
        s.push_str("End\n");
        s
    }
}

impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
