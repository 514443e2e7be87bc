mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, relative_error, Coordinates, GradCheckReport, ParamCheck, RELATIVE_ERROR_FLOOR};
pub use tape::{forward, value_and_grad, GradMap, Tape, Var};
