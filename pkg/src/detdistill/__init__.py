"""Dataset distillation for object detection via constrained copy-paste
synthesis with observer screening."""

from .annotations import (Category, DistilledDataset, DistilledImage,
                          DistilledObject, ObjectAnnotation, SourceDataset,
                          SourceImage, emit_dataset, parse_dataset,
                          parse_distilled)
from .boxes import BBox, from_center, iou, to_center
from .engine import (Canvas, CanvasStats, EngineConfig, Occupant, RunResult,
                     SynthesisError, distill, diversity, f_add, f_remove,
                     information_density, objective, synthesize_canvas)
from .errors import (ConfigError, DataError, DistillError, ObserverError,
                     ObserverProtocolError, ObserverTransportError, StateError)
from .observer import (Detection, HeuristicBackend, HeuristicParams,
                       ObserverRequest, ObserverScore, RequestObject,
                       match_detections, parse_observer_spec, run_selftest,
                       score_canvas)
from .placement import (ObjectCandidate, Placement, PlacementConfig,
                        build_candidates, resize_to_fit, sa_dce_extension,
                        try_place)
from .planner import SegmentPlan, build_plan, compute_ipd
from .simulation import SimConfig, compare_forms, overlap_bound_exact, overlap_grid

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
