//! Dense NCHW tensors with reverse-mode automatic differentiation, covering
//! the operations the segmentation network needs.

pub mod conv;
pub mod layout;
mod linalg;
pub mod longconv;
pub mod norm;
mod params;
pub mod pointwise;
mod session;
mod tape;
mod tensor;

pub use longconv::Collapse;
pub use params::{read_container, ParamEntry, ParamKind, ParamStore, RawEntry, FORMAT_VERSION, MAGIC};
pub use pointwise::Activation;
pub use session::{Mode, ParamGrads, Session};
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::{Shape, Tensor};
