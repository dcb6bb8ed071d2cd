"""LiDAR-only odometry and SLAM with rotation/translation decoupled registration."""

import os as _os

# Cap BLAS pools before numpy loads so ROLO_THREADS also bounds linear algebra.
_threads = _os.environ.get("ROLO_THREADS", "").strip()
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from rolo.back_end import BackEnd, RoloSLAM, detect_loop, optimize_graph, scan_to_submap  # noqa: E402
from rolo.exceptions import RoloError  # noqa: E402
from rolo.front_end import RoloOdometry, process_scan, register_pair  # noqa: E402
from rolo.geometry import RigidTransform  # noqa: E402
from rolo.scan import FeatureExtractor, Scan, deskew, extract_features  # noqa: E402
from rolo.voxel_grid import VoxelMap, build_voxel_map, match  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "BackEnd", "FeatureExtractor", "RigidTransform", "RoloError", "RoloOdometry", "RoloSLAM", "Scan",
    "VoxelMap", "build_voxel_map", "deskew", "detect_loop", "extract_features", "match",
    "optimize_graph", "process_scan", "register_pair", "scan_to_submap",
]
