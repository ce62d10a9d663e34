//! Exact correlation-space simulation of measurement-based quantum computation
//! on one-dimensional matrix-product resource states.
//!
//! A physical error on a measured qudit becomes a family of operators on the
//! correlation space. [`ensemble`] enumerates all measurement histories and
//! classifies the resulting map per byproduct sector; [`trajectory`] looks at
//! single branches; [`oracle`] checks both against a dense simulation of the
//! physical chain. The guide in `book/` walks through the concepts.
//!
//! ```
//! use corrspace::channels::paper_error_aklt;
//! use corrspace::ensemble::{run_aklt_rotation, Protocol, Verdict};
//! use corrspace::resource::{builtin, Builtin};
//!
//! let aklt = builtin(Builtin::Aklt);
//! let first = Protocol::AkltRotation { theta: 0.5, r: 3 }.basis(1, &[]).unwrap();
//! let err = paper_error_aklt(&first).unwrap();
//! let report = run_aklt_rotation(&aklt, 0.5, 3, Some(&err)).unwrap();
//! assert_eq!(report.verdict, Verdict::NonTpSector);
//! ```

pub mod channels;
pub mod cli;
pub mod combinat;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod oracle;
pub mod resource;
pub mod trajectory;

pub use channels::{ErrorSpec, KrausSet};
pub use ensemble::{Angles, InducedMapReport, Protocol, Verdict};
pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use measurement::MeasurementBasis;
pub use resource::{builtin, Builtin, MpsResource};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/resources.md")]
    mod resources {}
    #[doc = include_str!("../../../book/src/measurement.md")]
    mod measurement {}
    #[doc = include_str!("../../../book/src/induced-maps.md")]
    mod induced_maps {}
    #[doc = include_str!("../../../book/src/counting.md")]
    mod counting {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
