"""Reference detection math: Yolact/Yolo losses and evaluation metrics."""

from .gradcheck import GradCheckResult, grad_check, numerical_gradient
from .metrics import (AP_THRESHOLDS, BoundingBox, ConfusionCounts, ImageDetections,
                      ImageGroundTruth, accuracy, average_precision, iou, iou_matrix,
                      match_detections, mean_average_precision)
from .yolact import (MatchMatrix, YolactLossTerms, YolactOutput, YolactTargets, YolactWeights,
                     assemble_masks, combine_yolact_loss, decode_boxes, encode_boxes,
                     mask_bce_loss, mask_bce_loss_grad, smooth_l1, yolact_box_loss,
                     yolact_box_loss_grad, yolact_cls_loss, yolact_cls_loss_grad, yolact_loss)
from .yolo import (YoloGrid, YoloWeights, yolo_box_loss, yolo_box_loss_grad, yolo_cls_loss,
                   yolo_cls_loss_grad, yolo_loss, yolo_obj_loss, yolo_obj_loss_grad)
