"""LiDAR unsupervised domain adaptation toolkit.

Data-based adaptation (pose correction, virtual scan generation, intensity
mapping), model-based adaptation (multi-scale unbalanced optimal transport
with instance-aware sampling, first-layer statistics recalibration), and
panoptic evaluation metrics, exposed as a library and a pipeline CLI.
"""

from .calibration import ChannelStats, NormLayer, NormLayerStack, merge_stats, recalibrate_first, recalibrate_progressive, stream_stats
from .errors import LidarUdaError
from .ground import PlaneModel, PoseCorrection, RansacConfig, apply_correction, compute_correction, fit_ground_plane
from .intensity import ResidualIntensityMap, apply_residual_map, estimate_residual_map
from .metrics import LabelRemap, mean_iou, panoptic_quality, remap_labels
from .sampling import SampleSet, SamplingConfig, curriculum_sample, downsample_labels, gather_features, sample_instance_aware, sample_random
from .sensor import PanopticLabels, PointCloudScan, RangeImage, RigidTransform, SensorModel, back_project, elevation_table_uniform, project
from .tensorio import export_tensor, import_tensor
from .transport import CostMatrix, FeatureBatch, TransportPlan, UotConfig, adaptation_loss, cost_matrix, loss_gradient, mask_stuff_thing, solve_multiscale, solve_unbalanced
from .virtual import AggregatedMap, TriangleMesh, aggregate_map, mesh_dynamic_instance, regress_intensity, render_virtual_scan, sample_mesh

__version__ = "0.1.0"

__all__ = [
    "AggregatedMap", "ChannelStats", "CostMatrix", "FeatureBatch",
    "LabelRemap", "LidarUdaError", "NormLayer", "NormLayerStack",
    "PanopticLabels", "PlaneModel", "PointCloudScan", "PoseCorrection",
    "RangeImage", "RansacConfig", "ResidualIntensityMap", "RigidTransform",
    "SampleSet", "SamplingConfig", "SensorModel", "TransportPlan",
    "TriangleMesh", "UotConfig", "adaptation_loss", "aggregate_map",
    "apply_correction", "apply_residual_map", "back_project",
    "compute_correction", "cost_matrix", "curriculum_sample",
    "downsample_labels", "elevation_table_uniform", "estimate_residual_map",
    "export_tensor", "fit_ground_plane", "gather_features", "import_tensor",
    "loss_gradient", "mask_stuff_thing", "mean_iou", "merge_stats",
    "mesh_dynamic_instance", "panoptic_quality", "project",
    "recalibrate_first", "recalibrate_progressive", "regress_intensity",
    "remap_labels", "render_virtual_scan", "sample_instance_aware",
    "sample_mesh", "sample_random", "solve_multiscale", "solve_unbalanced",
    "stream_stats",
]
