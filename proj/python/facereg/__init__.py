"""CT-to-depth-camera face surface registration."""

import json

from ._facereg import (
    InputError,
    IcpParams,
    PipelineError,
    RegistrationResult,
    RigidTransform,
    coarse_icp_params,
    coarse_register,
    default_phantom_spec_json,
    depth_to_cloud,
    detect_keypoints,
    estimate_normals,
    estimate_rigid,
    evaluate_rmse,
    fine_icp_params,
    fine_register,
    generate_phantom,
    icp,
    marching_cubes,
    nearest,
    perturbation_grid,
    rotation_error,
    set_thread_count,
    thread_count,
)
from ._facereg import run_comparison_json as _run_comparison_json


def run_comparison(spec=None, methods="ours,iss,harris,sift", trials=3, perturbation=None):
    """Benchmark keypoint methods on the phantom.

    `spec` is a dict or JSON string (None for the built-in phantom). Returns the
    report as a dict; unset RMSE values of errored rows are None.
    """
    if isinstance(spec, dict):
        spec = json.dumps(spec)
    if isinstance(methods, (list, tuple)):
        methods = ",".join(methods)
    text = _run_comparison_json(spec, methods, trials, perturbation or RigidTransform())
    return json.loads(text)


__all__ = [name for name in dir() if not name.startswith("_")]
