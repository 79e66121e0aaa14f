//! Complex-valued Jahn–Teller and pseudo-Jahn–Teller models for electronic
//! resonances of X₃ molecules: surfaces, degeneracies, couplings,
//! geometric phases and parameter fits.

pub mod analytic;
pub mod berry;
pub mod coords;
pub mod diabatic;
pub mod eigen;
pub mod error;
pub mod fitting;
mod frame;
pub mod io;
pub mod nac;
pub mod params;
pub mod topology;
pub mod tracking;

pub use error::{Error, Result};

// the guide's code listings run as doctests
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/degeneracies.md")]
    mod degeneracies {}
    #[doc = include_str!("../../../book/src/phases.md")]
    mod phases {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}

/// Sizes the global worker pool. Only effective before the first parallel call.
pub fn init_thread_pool(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Domain(e.to_string()))
}
