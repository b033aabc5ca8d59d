//! Faithfulness and path-quality metrics.

mod perturb;
mod profile;

pub use perturb::{
    completeness_residual, default_grid, delete_salient, deletion_curve, diffid,
    insertion_curve, perturb_deletion, perturb_insertion, salience_order, trapezoid,
    BaselineMode, CurveKind, DiffIdResult, Game, PerturbationCurve, RankingMode,
};
pub use profile::{
    aggregate_profiles, confidence_profile, distance_profile, mean_std, reconstruction_profile,
    write_series_csv, DeviationProfile, ProfileAggregate, ProfileKind, SeriesRow,
};
