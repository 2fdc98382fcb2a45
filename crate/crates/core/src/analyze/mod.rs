//! Per-prefix prediction trajectories, impact ranking, confusion
//! partitioning and clustering of mispredicted sessions.

mod cluster;
mod export;
mod impacts;
mod partition;
mod series;

pub use cluster::{
    adjusted_rand_index, cluster_embeddings, cluster_mispredicted, kmeans, silhouette_score, IntentCluster,
    KMeansConfig, KMeansFit,
};
pub use export::{
    read_clusters, read_impacts, read_series, write_clusters, write_impacts, write_series, ANALYSIS_FORMAT_VERSION,
};
pub use impacts::{rank_impacts, top_impact, Direction, ImpactEvent, ThresholdPolicy};
pub use partition::{confusion_partition, partition_predictions, ConfusionPartition, Outcome};
pub use series::{
    analyze_dataset, analyze_sequence, distance_series, metric_by_name, prefix_predictions, AbsoluteDifference,
    AnalyzedSession, DistanceMetric, DistanceSeries, PredictionSeries, SeriesConvention, SquaredDifference,
};
