use std::io::{self, Write};

use super::{Model, Sense, Var, VarKind};

/// Column name usable in LP files: sanitized label plus the index.
fn column_name(model: &Model, v: Var) -> String {
    let mut label: String = model
        .var(v)
        .name
        .chars()
        .take(200)
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if label.is_empty() || label.starts_with(|c: char| c.is_ascii_digit()) {
        label.insert(0, 'v');
    }
    format!("{label}_{}", v.index())
}

fn write_terms<W: Write>(out: &mut W, model: &Model, terms: &[(Var, f64)]) -> io::Result<()> {
    if terms.is_empty() {
        // an all-zero row still needs a term
        return match model.vars().first() {
            Some(_) => write!(out, " 0 {}", column_name(model, Var(0))),
            None => Ok(()),
        };
    }
    for (i, &(v, c)) in terms.iter().enumerate() {
        if i > 0 && i % 8 == 0 {
            writeln!(out)?;
        }
        let name = column_name(model, v);
        match (c < 0.0, i) {
            (true, _) => write!(out, " - {:?} {name}", -c)?,
            (false, 0) => write!(out, " {c:?} {name}")?,
            (false, _) => write!(out, " + {c:?} {name}")?,
        }
    }
    Ok(())
}

fn bound(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

/// Writes `model` in the CPLEX LP text format.
pub fn write_lp<W: Write>(model: &Model, out: &mut W) -> io::Result<()> {
    writeln!(out, "\\ {}", model.name())?;
    writeln!(out, "Minimize")?;
    write!(out, " obj:")?;
    write_terms(out, model, model.objective())?;
    let constant = model.objective_constant();
    if constant != 0.0 {
        let sign = if constant < 0.0 { "-" } else { "+" };
        write!(out, " {sign} {:?}", constant.abs())?;
    }
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for (i, c) in model.constraints().iter().enumerate() {
        write!(out, " c{i}:")?;
        write_terms(out, model, &c.terms)?;
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        writeln!(out, " {op} {:?}", c.rhs)?;
    }
    writeln!(out, "Bounds")?;
    for (i, def) in model.vars().iter().enumerate() {
        let name = column_name(model, Var(i));
        if def.lb == f64::NEG_INFINITY && def.ub == f64::INFINITY {
            writeln!(out, " {name} free")?;
        } else {
            writeln!(out, " {} <= {name} <= {}", bound(def.lb), bound(def.ub))?;
        }
    }
    let binaries: Vec<usize> = (0..model.num_vars())
        .filter(|&i| model.vars()[i].kind == VarKind::Binary)
        .collect();
    if !binaries.is_empty() {
        writeln!(out, "Binaries")?;
        for i in binaries {
            writeln!(out, " {}", column_name(model, Var(i)))?;
        }
    }
    writeln!(out, "End")
}
