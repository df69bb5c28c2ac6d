//! Spin-boson dynamics, dynamical-map reconstruction and singular-value
//! analysis of the reduced spin evolution.
//!
//! Everything numerical is generic over [`scalar::Real`]; the aliases below
//! fix the scalar to `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod dynmap;
pub mod ode;
pub mod propagator;
pub mod quad;
pub mod scalar;
pub mod spectral;
pub mod tcl2;

pub type DensityMatrix = bloch::DensityMatrix<f64>;
pub type BlochVector = bloch::BlochVector<f64>;
pub type Observable = bloch::Observable<f64>;
pub type DiscretizedBath = spectral::DiscretizedBath<f64>;
pub type OhmicDensity = spectral::OhmicDensity<f64>;
pub type GappedDensity = spectral::GappedDensity<f64>;
pub type SparseHamiltonian = propagator::SparseHamiltonian<f64>;
pub type JointWaveFunction = propagator::JointWaveFunction<f64>;
pub type KrylovSettings = propagator::KrylovSettings<f64>;
pub type Trajectory = propagator::Trajectory<f64>;
pub type TrajectorySet = propagator::TrajectorySet<f64>;
pub type TimeGrid = propagator::TimeGrid<f64>;
pub type MapTensor = dynmap::MapTensor<f64>;
pub type AffineBlochMap = dynmap::AffineBlochMap<f64>;
pub type SvdSeries = dynmap::SvdSeries<f64>;
pub type BoundReport = dynmap::BoundReport<f64>;
pub type AsymptoticReport = dynmap::AsymptoticReport<f64>;
pub type Tcl2Rates = tcl2::Tcl2Rates<f64>;
pub type Tcl2Model = tcl2::Tcl2Model<f64>;
