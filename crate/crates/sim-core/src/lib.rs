//! Structured-illumination-microscopy (SIM) reconstruction.
//!
//! The library covers the full path from raw 9-frame SIM stacks to a
//! super-resolved image on a 2x upsampled grid:
//!
//! - [`image`]: square real/complex grids, centered 2-D FFTs, radial profiles.
//! - [`io`]: TIFF/PNG readers and writers with JSON sidecar metadata.
//! - [`otf`]: synthetic diffraction-limited OTF, PSF conversions, bead-based
//!   OTF estimation, shifted OTF power spectra.
//! - [`simulate`]: sinusoidal-illumination forward model with Gaussian noise.
//! - [`preprocess`]: stack normalization and morphological background removal.
//! - [`estimate`]: blind estimation of pattern frequency, phases, modulation
//!   depth, object power-law spectrum, and noise powers; includes the
//!   relative-phase and frequency estimators that work when the pattern
//!   frequency lies beyond the OTF support.
//! - [`reconstruct`]: band separation, per-band Wiener filtering, subpixel
//!   band relocation, phase matching, generalized-Wiener merging, and the two
//!   end-to-end pipelines.
//! - [`psfmetrics`]: effective-PSF least-squares solver and FWHM-based
//!   resolution reports.

// Ensure the BLAS backend is linked for the dense solves in `psfmetrics`.
extern crate blas_src;
extern crate openblas_src;

pub mod error;
pub mod estimate;
pub mod image;
pub mod io;
pub mod optim;
pub mod otf;
pub mod preprocess;
pub mod psfmetrics;
pub mod reconstruct;
pub mod simulate;

pub use error::{Result, SimError};
