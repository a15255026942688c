"""Online video-instance association: matching costs, contrastive tracking losses,
bi-directional-softmax association, a scenario simulator and track-AP evaluation."""

from .assignment import (Assignment, MatchCostWeights, Prediction, Target, brute_force_assignment,
                         focal_cls_cost, hungarian_solve, match_predictions_to_gt, pairwise_match_cost)
from .embedding import assignment_probabilities, bidirectional_softmax
from .evaluation import EvalReport, GroundTruthTrack, average_precision, id_switch_count, match_tracks, track_map
from .geometry import BBox, FrameSize, Mask, giou, iou, l1_box_distance, mask_iou, rle_roundtrip, track_st_iou
from .losses import FocalParams, TrackTrainingPair, contrastive_focal_loss, contrastive_focal_loss_grad, focal_loss
from .simgen import Scenario, ScenarioConfig, generate_scenario
from .tracker import AssocConfig, Detection, Track, associate_frame, matching_factor_matrix, track_video

__version__ = "0.1.0"
