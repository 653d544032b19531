"""Learned-affinity 3D multi-object tracking with camera/LiDAR late fusion,
on seeded synthetic scenes."""

from .affinity import (
    BackwardAffinity,
    ForwardAffinity,
    GtAffinityPair,
    backward_matching,
    build_gt_affinity,
    forward_matching,
    log_affinity_loss,
)
from .association import LifecycleThresholds, Track, associate, propagate_fn, step
from .geometry import Box2D, Box3D, CameraModel, CameraRig, iou_2d, project_box3d, select_best_camera
from .metrics import EvalConfig, MetricsReport, amota_amotp, evaluate_scenario
from .network import FeatureBundle, NetConfig, ResidualNet
from .refine import RefineParams, default_params, match_2d_3d, refine
from .simgen import ScenarioConfig, generate, make_training_set, preset, to_training_pairs
from .tracker import HeuristicAffinity, LearnedAffinity, Tracker, TrackerOptions, run_scenario
from .training import NumericalError, TrainConfig, train

__version__ = "0.1.0"
