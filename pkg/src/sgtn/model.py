"""Full network: encoder, shape guidance, centre proposals, RoI heads, and inference."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import heads as H
from .encoder import DESK, EncoderConfig, LSwinEncoder
from .imaging import box_iou_xywh, clip_box, resize_bilinear
from .numerics import ops
from .numerics.losses import BCE_CLAMP, LossValue
from .numerics.nn import Module, seeded_rng
from .numerics.tensor import Tensor, no_grad
from .records import InstanceRecord
from .sgm import ARFEM, ShapeGuidanceModule, derive_shape_targets, downsample_image, sgm_loss

__all__ = ["ModelConfig", "SGTN", "prepare_image", "cross_entropy"]


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=lambda: DESK)
    num_classes: int = 3
    sgm_enabled: bool = True
    detail_channels: int = 32
    sgm_width: int = 32
    center_width: int = 32
    mask_width: int = 32
    box_fc: int = 256
    k_max: int = 100
    score_thresh: float = 0.05
    train_proposals: int = 16
    jitter_per_gt: int = 2


def prepare_image(image: np.ndarray) -> np.ndarray:
    """uint8 ``(H, W, 3)`` -> zero-centred float in ``[-0.5, 0.5]``."""
    return np.asarray(image, dtype=np.float32) / 255.0 - 0.5


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of ``(n, k)`` logits against integer labels."""
    probs = ops.softmax_lastdim(logits)
    picked = probs[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)]
    return -ops.log(ops.clip(picked, BCE_CLAMP, 1.0)).mean()


class SGTN(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig(), seed: int = 0):
        rng = seeded_rng(seed)
        self.cfg = cfg
        self.encoder = LSwinEncoder(rng, cfg.encoder)
        c4 = self.encoder.out_channels
        if cfg.sgm_enabled:
            self.arfem = ARFEM(rng, c_out=cfg.detail_channels)
            self.sgm = ShapeGuidanceModule(rng, c4, cfg.detail_channels, cfg.sgm_width)
            c_roi = cfg.sgm_width
        else:
            c_roi = c4
        self.center = H.CenterHead(rng, c4, cfg.num_classes, cfg.center_width)
        self.box_head = H.BoxHead(rng, c_roi, cfg.num_classes, width=cfg.box_fc)
        self.mask_head = H.MaskHead(rng, c_roi, cfg.num_classes, cfg.mask_width)
        self.name_parameters()
        self._jitter_rng = seeded_rng(seed + 1)

    # -- shared trunk ---------------------------------------------------
    def trunk(self, images):
        """Encoder + optional shape guidance. Returns ``(feat4, roi_map, sgm_output)``."""
        feat4, _ = self.encoder(images)
        if not self.cfg.sgm_enabled:
            return feat4, feat4, None
        detail = self.arfem(downsample_image(images).astype(images.dtype))
        out = self.sgm(feat4, detail)
        return feat4, out.guided_feature, out

    # -- training -----------------------------------------------------------
    def sample_rois(self, proposals: H.ProposalSet, instances, hw):
        """Training RoIs: GT boxes, jittered GT boxes, and current proposals; IoU>=0.5 is foreground."""
        hh, ww = hw
        gt = np.asarray([inst.bbox for inst in instances], dtype=np.float64).reshape(-1, 4)
        rois = [gt]
        for _ in range(self.cfg.jitter_per_gt):
            if not len(gt):
                break
            shift = self._jitter_rng.uniform(-0.15, 0.15, size=(len(gt), 2)) * gt[:, 2:]
            scale = np.exp(self._jitter_rng.uniform(-0.2, 0.2, size=(len(gt), 2)))
            wh = gt[:, 2:] * scale
            ctr = gt[:, :2] + gt[:, 2:] / 2 + shift
            rois.append(np.concatenate([ctr - wh / 2, wh], axis=1))
        if proposals.n:
            rois.append(proposals.boxes[: self.cfg.train_proposals])
        rois = np.concatenate(rois)
        clipped = [clip_box(b, ww, hh) for b in rois]
        rois = np.asarray([b for b in clipped if b is not None and b[2] >= 1 and b[3] >= 1]).reshape(-1, 4)
        labels = np.zeros(len(rois), dtype=np.int64)
        match = np.full(len(rois), -1)
        if len(gt) and len(rois):
            iou = box_iou_xywh(rois, gt)
            best = iou.argmax(axis=1)
            fg = iou[np.arange(len(rois)), best] >= 0.5
            match[fg] = best[fg]
            labels[fg] = [instances[j].category for j in best[fg]]
        return rois, labels, match

    def losses(self, images, batch_instances, shape_targets=None, center_targets=None) -> LossValue:
        """Total training loss for a batch of prepared images ``(b, H, W, 3)``."""
        b, hh, ww, _ = images.shape
        feat4, roi_map, sg = self.trunk(images)
        fh, fw = feat4.shape[1:3]
        raw = self.center(feat4)
        if center_targets is None:
            center_targets = [H.cbgm_targets(inst, fh, fw, self.cfg.num_classes) for inst in batch_instances]
        parts = {"cbgm": H.cbgm_loss(raw, center_targets)}
        if sg is not None:
            if shape_targets is None:
                shape_targets = [derive_shape_targets(inst, hh, ww) for inst in batch_instances]
            parts["sgm"] = sgm_loss(sg, shape_targets)

        heat = 1.0 / (1.0 + np.exp(-raw["heatmap"].data.astype(np.float64)))
        all_rois, all_labels, all_bidx, fg_gt_boxes, fg_gt_masks = [], [], [], [], []
        for i, instances in enumerate(batch_instances):
            props = H.cbgm_decode(heat[i], raw["size"].data[i], raw["offset"].data[i],
                                  k_max=self.cfg.train_proposals, score_thresh=self.cfg.score_thresh,
                                  image_hw=(hh, ww))
            rois, labels, match = self.sample_rois(props, instances, (hh, ww))
            all_rois.append(rois)
            all_labels.append(labels)
            all_bidx.append(np.full(len(rois), i))
            for j in match[labels > 0]:
                fg_gt_boxes.append(instances[j].bbox)
                fg_gt_masks.append(instances[j].mask)
        rois = np.concatenate(all_rois)
        labels = np.concatenate(all_labels)
        bidx = np.concatenate(all_bidx).astype(np.int64)
        if len(rois):
            roi7 = H.roi_align(roi_map, rois, H.BOX_ROI, bidx)
            cls_logits, deltas = self.box_head(roi7)
            cls = cross_entropy(cls_logits, labels)
            box = LossValue(cls, {"cls": cls.item()})
            fg = labels > 0
            if fg.any():
                box = box + H.box_losses(deltas[np.flatnonzero(fg)], rois[fg], np.asarray(fg_gt_boxes))
                roi14 = H.roi_align(roi_map, rois[fg], H.MASK_ROI, bidx[fg])
                probs = self.mask_head(roi14)
                targets = np.stack([H.mask_targets([m], r[None])[0] for m, r in zip(fg_gt_masks, rois[fg])])
                parts["mask"] = H.mask_losses(probs, labels[fg], targets)
            parts["box"] = box
        return LossValue.combine(parts)

    # -- inference ----------------------------------------------------------
    def predict(self, image: np.ndarray) -> list:
        """Instances for one prepared ``(H, W, 3)`` image, highest score first."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                return self._predict(image)
        finally:
            self.train(was_training)

    def _predict(self, image):
        hh, ww = image.shape[:2]
        images = image[None].astype(np.float32)
        feat4, roi_map, sg = self.trunk(images)
        raw = self.center(feat4)
        heat = 1.0 / (1.0 + np.exp(-raw["heatmap"].data[0].astype(np.float64)))
        props = H.cbgm_decode(heat, raw["size"].data[0], raw["offset"].data[0], self.cfg.k_max,
                              self.cfg.score_thresh, image_hw=(hh, ww))
        if not props.n:
            return []
        roi7 = H.roi_align(roi_map, props.boxes, H.BOX_ROI)
        cls_logits, deltas = self.box_head(roi7)
        cls_prob = ops.softmax_lastdim(cls_logits).data.astype(np.float64)
        refined = H.decode_deltas(props.boxes, deltas.data)
        fg_prob = cls_prob[:, 1:]
        classes = fg_prob.argmax(axis=1) + 1
        scores = props.scores * fg_prob[np.arange(props.n), classes - 1]
        boxes = []
        for k, b in enumerate(refined):
            c = clip_box(b, ww, hh)
            boxes.append(c if c is not None and c[2] >= 1 and c[3] >= 1 else props.boxes[k])
        boxes = np.asarray(boxes)
        masks = self.mask_head(H.roi_align(roi_map, boxes, H.MASK_ROI)).data.astype(np.float64)
        fg_full = resize_bilinear(sg.foreground[0], hh, ww) if sg is not None else None
        out = []
        for k in np.lexsort((np.arange(props.n), -scores)):
            tri = H.paste_and_fuse(masks[k, :, :, classes[k] - 1], boxes[k], None, hh, ww, fg_full=fg_full)
            full = tri.full(hh, ww)
            if full.any():
                out.append(InstanceRecord.from_mask(int(classes[k]), full, float(scores[k])))
        return out
