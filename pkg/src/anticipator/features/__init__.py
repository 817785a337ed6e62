"""Anomaly-indicating feature extraction and selection."""

from .extract import (
    CATEGORIES,
    CatalogEntry,
    FeatureConfig,
    FeatureVector,
    cross_series_features,
    distribution_features,
    extract_all,
    feature_catalog,
    feature_matrix,
    frequency_features,
    point_features,
    temporal_features,
    trend_features,
    write_catalog,
)
from .select import load_mask, save_mask, select_features

__all__ = [
    "CATEGORIES", "CatalogEntry", "FeatureConfig", "FeatureVector", "cross_series_features",
    "distribution_features", "extract_all", "feature_catalog", "feature_matrix",
    "frequency_features", "load_mask", "point_features", "save_mask", "select_features",
    "temporal_features", "trend_features", "write_catalog",
]
