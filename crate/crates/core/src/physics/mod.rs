pub mod fbp;
pub mod geometry;
pub mod image;
pub mod noise;
pub mod phantom;
pub mod projector;

pub use fbp::{fbp, fbp_tensor, FbpOperator};
pub use geometry::{make_geometry, GeometryConfig, ScanGeometry};
pub use image::{Image, Sinogram};
pub use noise::{add_noise, NoiseModel};
pub use phantom::{make_phantom, shepp_logan, PhantomKind};
pub use projector::{adjoint_project, back_project, forward_project, forward_project_full};
