"""Bi-level graph structure learning for next-POI recommendation."""

from ._core import (
    BigslError,
    Dataset,
    Model,
    acc_at_k,
    attentive_fuse,
    config_keys,
    edge_list_text,
    hsl_loss,
    kmeans,
    load_dataset,
    matrix_file_text,
    mrr,
    orthogonality_loss,
    pairwise_adjacency,
    parse_matrix_file,
    preprocess,
    profile,
    rank_of,
    shared_loss,
    shared_representation,
    sparsify_normalize,
    spatial_features,
    structure_embed,
    temporal_features,
    train,
    write_synthetic,
)

__all__ = [name for name in dir() if not name.startswith("_")]
