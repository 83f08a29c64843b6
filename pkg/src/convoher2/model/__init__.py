from convoher2.model.checkpoint import (
    CheckpointMeta,
    export_flat_weights,
    load_checkpoint,
    load_flat_export,
    read_checkpoint_meta,
    save_checkpoint,
    save_flat_export,
)
from convoher2.model.features import FeatureStore, build_feature_store
from convoher2.model.network import (
    ModelHandle,
    ModelMetadata,
    compose,
    extract_features,
    forward,
    forward_features,
)
from convoher2.model.params import LayerCount, ParamCount, count_params
from convoher2.model.specs import (
    INCEPTION_V3,
    STUB,
    BackboneSpec,
    HeadSpec,
    HeadVariant,
    LayerKind,
    LayerSpec,
    build_head,
)

__all__ = [
    "BackboneSpec",
    "CheckpointMeta",
    "FeatureStore",
    "HeadSpec",
    "HeadVariant",
    "INCEPTION_V3",
    "LayerCount",
    "LayerKind",
    "LayerSpec",
    "ModelHandle",
    "ModelMetadata",
    "ParamCount",
    "STUB",
    "build_feature_store",
    "build_head",
    "compose",
    "count_params",
    "export_flat_weights",
    "extract_features",
    "forward",
    "forward_features",
    "load_checkpoint",
    "load_flat_export",
    "read_checkpoint_meta",
    "save_checkpoint",
    "save_flat_export",
]
