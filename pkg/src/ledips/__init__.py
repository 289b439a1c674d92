"""Overhead-camera positioning of LED-marked model vehicles."""

from .assembly import AssembledVehicle, AssemblyOutcome, assemble, brute_force_assemble, build_neighbor_map
from .blobs import Blob, Frame, PointFrame, detect_blobs
from .geometry import CameraCalibration, Pose, VehicleGeometry, image_to_world, world_to_image
from .identification import IdState, IdTable, build_id_table, classify, update_id_state
from .pipeline import Engine, EngineConfig, PoseSample, StepLatencies
from .pose import estimate_pose, estimate_poses

__version__ = "0.1.0"

__all__ = [
    "AssembledVehicle", "AssemblyOutcome", "Blob", "CameraCalibration", "Engine", "EngineConfig",
    "Frame", "IdState", "IdTable", "PointFrame", "Pose", "PoseSample", "StepLatencies",
    "VehicleGeometry", "assemble", "brute_force_assemble", "build_id_table", "build_neighbor_map",
    "classify", "detect_blobs", "estimate_pose", "estimate_poses", "image_to_world",
    "update_id_state", "world_to_image",
]
