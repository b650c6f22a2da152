"""Synthetic segmentation scenes with controllable discriminative features,
probing-set derivation, and the shape-bias index.
"""
from .errors import (ConfigError, GenerationError, MetricError, OracleError,
                     PartitionError, PlacementError, ProbeError, ShapeProbeError,
                     StorageError, ValidationError)
from .generate import (FeatureConfig, SceneInstance, StructureLayout,
                       generate_dataset, generate_scene, generate_size_sweep,
                       regenerate_from_manifest)
from .geometry import (DisplacementField, Polygon, aligned_iou, elastic_deform,
                       fit_polygon_to_box, polygon_is_simple, rasterize,
                       sample_polygon)
from .metrics import (LayerSpec, ProbeScores, SbiReport, Stage, evaluate_run,
                      evaluate_set, iou, performance_drop, receptive_field, sbi,
                      sbi_closed_form, unet140_spec, unet210_spec)
from .oracles import (AnyForegroundOracle, ShapeTemplateOracle,
                      TextureLookupOracle, make_oracle)
from .probes import (brightness_grid, elastic_series, make_aff, make_brightness,
                     make_elastic, make_rm, make_shuf)
from .textures import (PoolPartition, Texture, TexturePool, fill_region,
                       load_pool, partition_pool, pool_from_origin,
                       procedural_pool)

__version__ = "0.1.0"

__all__ = [
    "AnyForegroundOracle", "ConfigError", "DisplacementField", "FeatureConfig",
    "GenerationError", "LayerSpec", "MetricError", "OracleError",
    "PartitionError", "PlacementError", "Polygon", "PoolPartition",
    "ProbeError", "ProbeScores", "SbiReport", "SceneInstance",
    "ShapeProbeError", "ShapeTemplateOracle", "Stage", "StorageError",
    "StructureLayout", "Texture", "TextureLookupOracle", "TexturePool",
    "ValidationError", "aligned_iou", "brightness_grid", "elastic_deform",
    "elastic_series", "evaluate_run", "evaluate_set", "fill_region",
    "fit_polygon_to_box", "generate_dataset", "generate_scene",
    "generate_size_sweep", "iou", "load_pool", "make_aff", "make_brightness",
    "make_elastic", "make_oracle", "make_rm", "make_shuf", "partition_pool",
    "performance_drop", "polygon_is_simple", "pool_from_origin",
    "procedural_pool", "rasterize", "receptive_field",
    "regenerate_from_manifest", "sample_polygon", "sbi", "sbi_closed_form",
    "unet140_spec", "unet210_spec",
]
