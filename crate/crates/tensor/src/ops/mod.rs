pub mod conv;
pub mod elementwise;
pub mod fft;
pub mod matmul;
pub mod norm;
pub mod pool;
pub mod reduce;
pub mod shape;
pub mod softmax;
pub mod window;
