//! Accuracy assessment, class areas and class separability.

mod accuracy;
mod separability;

pub use accuracy::{
    class_areas, confusion_matrix, overall_accuracy, producers_accuracy, users_accuracy, AccuracyReport,
    ClassAccuracy, ConfusionMatrix, NotAvailable,
};
pub use separability::{
    bhattacharyya, class_band_statistics, default_subsets, jm_distance, separability_report, BhattacharyyaForm,
    ClassDistribution, FeatureSubset, SeparabilityEntry, SeparabilityReport,
};
