pub use crate::problems::{gaussian_matrix, matrix_with_condition as with_condition};
