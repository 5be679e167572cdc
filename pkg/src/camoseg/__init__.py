"""Camouflaged object detection toolkit.

Boundary-guided segmentation network with multi-scale aggregation and
gated cross-level propagation, plus the matching loss suite, saliency-style
evaluation metrics, and a train/predict/eval/ablate CLI.
"""

from .backbone import (BackboneSpec, FeaturePyramid, TinyEncoder, Res2Net50Shaped,
                       backbone_forward, build_backbone, load_pretrained)
from .bgm import BoundaryBundle, BoundaryGuidance, edge_loss
from .blocks import ConvBlock, upsample_to
from .cfpm import CrossLevelFusion, GatedPropagation, GatePair, PropagatedFeature
from .config import (ConfigError, DataPaths, ModelConfig, RunConfig, TrainConfig,
                     config_hash, load_config, save_config)
from .data import (DatasetManifest, Sample, SampleLoadError, DatasetLayoutError,
                   augment, extract_edge_gt, hflip, load_image, load_sample,
                   scan_dataset)
from .losses import (LossBreakdown, detection_loss, hard_pixel_weight, total_loss,
                     weighted_bce, weighted_iou)
from .metrics import (ECurve, EvalPair, FCurve, MetricConfig, MetricReport,
                      dice_iou, e_measure, evaluate_dataset, f_measure, mae,
                      pr_curve, s_measure)
from .mfam import MultiScaleAggregation
from .network import (AblationConfig, CamoNet, SideOutputs, VARIANTS,
                      count_parameters, load_checkpoint, model_from_checkpoint,
                      predict_image, save_checkpoint, save_prediction_png)
from .training import (ConfigMismatchError, TrainingDiverged, TrainResult, train,
                       validate_mae)

__version__ = "0.1.0"
