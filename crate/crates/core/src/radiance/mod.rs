//! Radiance networks: Fourier features, the two-branch MLP used by experts and
//! the teacher, and its exact reverse-mode gradients.

mod encoding;
mod mlp;

pub use encoding::{encoded_dim, fourier_encode, fourier_encode_backward, EncodingConfig};
pub use mlp::{expert_param_count, ExpertMlp, Heads, NetConfig, RadianceNet, Tape, TeacherMlp};

/// Gradient buffer shaped like a network's flat parameter vector.
/// Buffers from different workers merge by summation.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGradients<T> {
    pub values: alloc::vec::Vec<T>,
}

impl<T: num_traits::Float> ParameterGradients<T> {
    pub fn zeros(len: usize) -> Self {
        ParameterGradients {
            values: alloc::vec![T::zero(); len],
        }
    }

    pub fn for_net(net: &RadianceNet<T>) -> Self {
        Self::zeros(net.param_count())
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.values.len(), other.values.len(), "gradient shapes differ");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + *b;
        }
    }
}
