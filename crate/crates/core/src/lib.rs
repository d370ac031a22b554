pub mod debug;
pub mod minilang;
pub mod runtime;
mod session;

pub use session::Session;
