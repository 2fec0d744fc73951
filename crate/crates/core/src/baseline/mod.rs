//! DBSCAN clustering, global nearest neighbour association and a linear
//! Kalman filter per target.

pub mod assoc;
pub mod dbscan;
pub mod kalman;
pub mod tracker;

pub use assoc::{chi2_2dof_quantile, gnn_associate, greedy_associate, solve_gated, Assignment};
pub use dbscan::{dbscan, Clustering, DbscanParams};
pub use kalman::{kf_predict, kf_update, KfModel, KfState};
pub use tracker::{cluster_centroid, run_baseline, window_measurements, BaselineParams};

pub use crate::metrics::TrackRecord;
