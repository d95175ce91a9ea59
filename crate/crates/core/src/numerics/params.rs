/// Declares a parameter group: a struct of named tensors plus a matching
/// struct of graph handles produced by `bind`.
macro_rules! param_group {
    ($(#[$meta:meta])* $name:ident => $bound:ident { $($field:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $(pub $field: $crate::numerics::Tensor,)+
        }

        #[derive(Debug, Clone, Copy)]
        pub struct $bound {
            $(pub $field: $crate::numerics::Var,)+
        }

        impl $name {
            pub fn bind(&self, g: &mut $crate::numerics::Graph, trainable: bool) -> $bound {
                $bound {
                    $($field: if trainable {
                        g.param(self.$field.clone())
                    } else {
                        g.constant(self.$field.clone())
                    },)+
                }
            }

            pub fn named(&self) -> Vec<(&'static str, &$crate::numerics::Tensor)> {
                vec![$((stringify!($field), &self.$field),)+]
            }

            pub fn named_mut(&mut self) -> Vec<(&'static str, &mut $crate::numerics::Tensor)> {
                vec![$((stringify!($field), &mut self.$field),)+]
            }
        }

        impl $bound {
            pub fn vars(&self) -> Vec<$crate::numerics::Var> {
                vec![$(self.$field,)+]
            }
        }
    };
}
pub(crate) use param_group;

use super::{SeededRng, Tensor};

/// Gaussian init with standard deviation `1/sqrt(fan_in)`.
pub(crate) fn init_matrix(rng: &mut SeededRng, fan_in: usize, fan_out: usize) -> Tensor {
    let s = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_rows(fan_in, fan_out, rng.normals(fan_in * fan_out).into_iter().map(|v| v * s).collect())
}
