"""Compressed topological maps from Lidar scans via segment-wise Tucker3 models."""

__version__ = "0.1.0"

from .errors import FormatError, ValidationError
from .localizer import LocalizationResult, localize, localize_batch, signature
from .map_builder import TensorMap, build_map, load_map, memory_report, partition, save_map
from .range_image import GridSpec, ScanMatrix, cartesian_to_polar, matricize_scan, stack_scans
from .scan_io import PointCloud, Pose6DOF, read_dataset, read_scan_bin, read_scan_csv
from .tucker import TuckerModel, fit_full_hosvd, fit_segment, reconstruct, relative_error

__all__ = [
    "FormatError", "ValidationError",
    "LocalizationResult", "localize", "localize_batch", "signature",
    "TensorMap", "build_map", "load_map", "memory_report", "partition", "save_map",
    "GridSpec", "ScanMatrix", "cartesian_to_polar", "matricize_scan", "stack_scans",
    "PointCloud", "Pose6DOF", "read_dataset", "read_scan_bin", "read_scan_csv",
    "TuckerModel", "fit_full_hosvd", "fit_segment", "reconstruct", "relative_error",
]
