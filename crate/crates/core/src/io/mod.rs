pub mod checkpoint;
pub mod files;
pub mod png;

pub use checkpoint::{file_checksum, Checkpoint, NamedTensor};
pub use files::{read_ivct, read_sampling, write_ivct, write_sampling, IvctFile, Payload};
pub use png::{load_dataset, load_image, save_gray, save_panel, save_profile_plot};
