"""Per-scene compact radiance fields: a searchable field cell, an analytic
cost model, and a constrained generative architecture search, with a
deterministic numpy training stack underneath."""

from .nn import (LinearLayer, Mlp, MlpGrads, OptimizerState, gradient_check,
                 mlp_backward, mlp_forward, optimizer_step)
from .field import (ArchitectureDescriptor, CellConfig, FieldOutput,
                    PositionalEncoding, RadianceField, baseline_descriptor,
                    build_field, build_pair, encode, field_backward,
                    field_gradient_check, field_query)
from .render import (Camera, CompositeResult, Ray, RenderSettings, composite,
                     composite_backward, generate_rays, importance_samples,
                     render_image, render_rays, stratified_samples)
from .metrics import MetricReport, psnr, ssim
from .cost import (BenchSettings, CostReport, EfficiencyRatio, FlopConvention,
                   Workload, benchmark_fps, cost_report, count_params,
                   efficiency_ratio, er_flops, er_params, estimate_flops)
from .data import (AnalyticSphereField, ProceduralSceneSpec, SceneDataset,
                   Sphere, default_scene_spec, generate_procedural,
                   load_blender, load_descriptor, save_blender,
                   save_descriptor)
from .train import (TrainResult, TrainSettings, TrainingDiverged,
                    downsample_dataset, evaluate, train_pair)
from .search import (BoundaryResult, Budget, Candidate, ConstraintSet,
                     GeneratorState, ProxyConfig, SearchResult, SearchSpace,
                     TargetLadder, check_constraints, compute_targets,
                     run_search, scaled_iterations, search_scene,
                     train_boundary, universal_metric)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
