//! The benchmark workload: a small arithmetic routine computed in three
//! parts, with the inputs incremented between parts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Input triple for one calculation task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalcInput {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CalcInput {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }
}

/// Result of one calculation: the three parts and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalcOutput {
    pub part0: f64,
    pub part1: f64,
    pub part2: f64,
    #[serde(rename = "final")]
    pub final_result: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalcError {
    #[error("division by zero in {term}")]
    DivisionByZero { term: &'static str },
}

/// Runs the calculation:
///
/// ```text
/// part0 = a + b + c
/// a,b,c += 1
/// part1 = a*a / (b*b + c*c)
/// a,b,c += 1
/// part2 = 1/a + 2/b + 3/c
/// final = part0 + part1 + part2
/// ```
///
/// Zero denominators are rejected with the offending term named instead of
/// letting IEEE infinities through.
pub fn execute_calculation(input: &CalcInput) -> Result<CalcOutput, CalcError> {
    let CalcInput {
        mut a,
        mut b,
        mut c,
    } = *input;
    let part0 = a + b + c;
    a += 1.0;
    b += 1.0;
    c += 1.0;
    let denom = b * b + c * c;
    if denom == 0.0 {
        return Err(CalcError::DivisionByZero {
            term: "part1 denominator (b+1)^2 + (c+1)^2",
        });
    }
    let part1 = a * a / denom;
    a += 1.0;
    b += 1.0;
    c += 1.0;
    if a == 0.0 {
        return Err(CalcError::DivisionByZero {
            term: "part2 term 1/(a+2)",
        });
    }
    if b == 0.0 {
        return Err(CalcError::DivisionByZero {
            term: "part2 term 2/(b+2)",
        });
    }
    if c == 0.0 {
        return Err(CalcError::DivisionByZero {
            term: "part2 term 3/(c+2)",
        });
    }
    let part2 = 1.0 / a + 2.0 / b + 3.0 / c;
    let final_result = part0 + part1 + part2;
    Ok(CalcOutput {
        part0,
        part1,
        part2,
        final_result,
    })
}
