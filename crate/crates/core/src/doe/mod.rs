//! Design of experiments: regular two-level fractions for screening and
//! discrepancy-optimized Latin hypercubes for metamodel fitting.

mod factorial;
mod lhs;

pub use factorial::{
    alias_structure, checked_factorial_design, factor_letter, factorial_design,
    fractional_factorial_with_runs, generate_fractional_factorial, AliasStructure,
    FactorialDesign, FactorialDesignSpec, Resolution,
};
pub use lhs::{
    optimize_lhs, optimize_lhs_traced, random_lhs, wrap_around_discrepancy, LhsOptimization,
};
