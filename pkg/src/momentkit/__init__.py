"""Moment retrieval and highlight detection toolkit."""

__version__ = "0.1.0"

from .data import (ClipGrid, DatasetSample, MomentSpan, PredictionRecord,
                   SaliencyAnnotation, clip_grid, parse_annotations,
                   parse_predictions, write_annotations, write_predictions)
from .errors import MomentKitError
from .features import (FeatureExtractorSpec, FeaturePair, build_extractor,
                       load_features, registered_extractor_names, save_features)
from .losses import compute_loss, neg_pair_saliency_loss
from .matching import match_spans
from .metrics import (MetricConfig, MetricReport, average_precision_single_query,
                      compute_report, hd_map, hit_at_1, map_suite, recall1_at,
                      temporal_iou, tvsum_domain_report)
from .model import (ModelConfig, MomentHighlightModel, SaliencyScores,
                    SpanPrediction, span_cxw_to_interval)
from .predictor import (PredictorSession, PredictResult, new_predictor,
                        temporal_nms)
from .synthetic import SyntheticSpec, synthesize_dataset, write_synthetic_dataset
from .train_config import TrainConfig, load_config
from .training import RunLog, evaluate_run, train_run
