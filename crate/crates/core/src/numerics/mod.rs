//! Tensors, differentiable kernels, the 2-D FFT, and the reverse-mode tape.

pub mod fft;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod tensor;

pub use fft::{fft2d, fftshift, ifft2d, ifftshift, ComplexSpectrum};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
pub use ops::{bicubic_resample, conv2d, Activation, Conv2dSpec, Scale};
pub use tensor::{is_checked, set_checked};
