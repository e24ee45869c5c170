//! Truncated Fourier–Taylor series in `(φ, q; x, p, y)`.

mod grid;
mod series;
mod space;
mod split;

pub use grid::{project_phi, PhiGrid};
pub use series::{FTSeries, Radii, Term, C64, PRUNE_FLOOR};
pub use space::{Grading, SeriesSpace, Var};
pub use split::{taylor_split, DBlocks, SeriesMatrix, TaylorSplit};

pub(crate) use space::ball;
