import logging
import math
import os
import time
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

import config as settings
from models.report_models import TRACE_COLUMNS, CaseEvaluation, IterationTrace, LossReport, TrainingSummary
from models.tensor_models import ForwardOutput
from models.train_config import ModuleToggles, TrainConfig
from models.volume_models import DatasetManifest, LabelMap, Volume
from network.csa import cognitive_loss
from network.text_semiseg import TextSemiSegNet
from services.augmentation_service import CognitiveAugmentationService
from services.dataio_service import DataIOService
from utils.errors import ConfigError, NonFiniteLossError, ValidationError
from utils.loss_calculator import LossCalculator
from utils.metric_calculator import MetricCalculator
from utils.performance_monitor import PerformanceMonitor
from utils.seeding import configure_determinism, set_seeds
from utils.validation import InputValidator

logger = logging.getLogger(__name__)

LabeledCase = Tuple[Volume, LabelMap]


class TrainingService:
    """Semi-supervised training, checkpointing, inference and evaluation"""

    def __init__(self, io: DataIOService = None):
        self.io = io or DataIOService()
        self.losses = LossCalculator()
        self.augmentation = CognitiveAugmentationService()
        self.metrics = MetricCalculator()
        self.monitor = PerformanceMonitor()
        self.validator = InputValidator()
        logger.info("Training service initialized")

    # ------------------------------------------------------------------ setup

    def ablation_switches(self, config: TrainConfig) -> ModuleToggles:
        """Active components for a run; baseline forces TMR, CSA and DCA off"""
        if config.baseline:
            return ModuleToggles(tmr=False, csa=False, dca=False, unsup=config.unsup,
                                 text_injection=config.text_injection)
        return ModuleToggles(tmr=config.tmr, csa=config.csa, dca=config.dca, unsup=config.unsup,
                             text_injection=config.text_injection)

    def build_model(self, config: TrainConfig, num_classes: int,
                    toggles: ModuleToggles = None) -> TextSemiSegNet:
        """Seed, then construct; identical seeds give identical initial weights"""
        set_seeds(config.seed)
        model = TextSemiSegNet(
            config.backbone_config(num_classes),
            toggles or self.ablation_switches(config),
            text_dim=config.text_dim,
            attn_dim=config.attn_dim,
            num_context=config.num_context,
        )
        if config.class_embeddings:
            model.prompt_bank.load_class_embeddings(config.class_embeddings)
        return model.to(config.device)

    @staticmethod
    def make_optimizer(model: torch.nn.Module, config: TrainConfig) -> torch.optim.Optimizer:
        params = [p for p in model.parameters() if p.requires_grad]
        return torch.optim.SGD(params, lr=config.lr, momentum=config.momentum,
                               weight_decay=config.weight_decay)

    def load_training_data(self, manifest: DatasetManifest) -> Tuple[List[LabeledCase], List[Volume]]:
        labeled = [self.io.load_pair(manifest, pair) for pair in manifest.labeled]
        unlabeled = [self.io.load_volume(manifest.resolve(path)) for path in manifest.unlabeled]
        logger.info(f"Loaded {len(labeled)} labeled and {len(unlabeled)} unlabeled volumes")
        return labeled, unlabeled

    def sample_batch(self, labeled: Sequence[LabeledCase], unlabeled: Sequence[Volume],
                     config: TrainConfig, rng: np.random.Generator
                     ) -> Tuple[torch.Tensor, torch.Tensor, Optional[torch.Tensor]]:
        """Random patches: labeled_per_batch labeled plus the rest unlabeled.

        Without unlabeled volumes the whole batch is labeled.
        """
        n_labeled = config.labeled_per_batch if unlabeled else config.batch_size
        x_l, y_l = [], []
        for _ in range(n_labeled):
            volume, label_map = labeled[int(rng.integers(0, len(labeled)))]
            patch, label_patch = self.io.sample_patch(volume, label_map, config.patch_size, rng)
            x_l.append(torch.from_numpy(patch.voxels))
            y_l.append(torch.from_numpy(label_patch.labels.astype(np.int64)))

        x_u = None
        if unlabeled:
            patches = []
            for _ in range(config.unlabeled_per_batch):
                volume = unlabeled[int(rng.integers(0, len(unlabeled)))]
                patch, _ = self.io.sample_patch(volume, None, config.patch_size, rng)
                patches.append(torch.from_numpy(patch.voxels))
            x_u = torch.stack(patches).unsqueeze(1).to(config.device)

        return (torch.stack(x_l).unsqueeze(1).to(config.device),
                torch.stack(y_l).to(config.device),
                x_u)

    # --------------------------------------------------------------- training

    def compute_losses(self, model: TextSemiSegNet, x_l: torch.Tensor, y_l: torch.Tensor,
                       x_u: Optional[torch.Tensor], iteration: int, config: TrainConfig
                       ) -> Tuple[torch.Tensor, LossReport, int]:
        """One iteration's objective, without the optimizer step.

        Returns:
            (L_total tensor, LossReport, pseudo-labeling decoder index)
        """
        toggles = model.toggles
        n_l = x_l.shape[0]
        has_unlabeled = x_u is not None and x_u.shape[0] > 0
        x = torch.cat([x_l, x_u]) if has_unlabeled else x_l

        output = self._forward(model, x)
        pred_l, pred_u = output.prediction.split(n_l)
        zero = x.new_zeros(())

        l_sup_1, l_sup_2 = self.losses.sup_losses(pred_l.y_hat_1, pred_l.y_hat_2, y_l)

        l_unsup = zero
        if toggles.unsup and has_unlabeled:
            l_unsup = self.losses.unsup_loss(pred_u.y_hat_1, pred_u.y_hat_2)

        l_cog = zero
        if toggles.csa:
            f_v_p = model.project(output.features.bottleneck)
            l_cog = cognitive_loss(output.text_features, f_v_p,
                                   output.prediction.y_hat_1, output.prediction.y_hat_2)

        # schedule spans the first to the last iteration of the run
        lambda_u = self.losses.warmup(iteration, max(config.iterations - 1, 1), config.beta)

        sup_1, sup_2 = l_sup_1.item(), l_sup_2.item()
        if not (math.isfinite(sup_1) and math.isfinite(sup_2)):
            # decoders cannot be ranked; the caller aborts on the non-finite report
            report = self.losses.total_loss(sup_1, sup_2, l_unsup.item(), l_cog.item(), 0.0, lambda_u)
            return l_sup_1 + l_sup_2 + l_cog + lambda_u * l_unsup, report, 1
        pseudo_labeler = self.augmentation.select_pseudo_labeler(sup_1, sup_2)

        l_mix = zero
        if toggles.dca and has_unlabeled:
            pseudo = self.augmentation.pseudo_label(pred_u, sup_1, sup_2)
            target = 3 - pseudo.source_decoder
            mixed = self.augmentation.build_mixed_batch(x_l, y_l, x_u, pseudo.y_p, target)
            n_mix = mixed.x_mix_l.shape[0]
            mix_output = self._forward(model, torch.cat([mixed.x_mix_l, mixed.x_mix_u]))
            pred_mix_l, pred_mix_u = mix_output.prediction.split(n_mix)
            l_mix = self.losses.mix_loss(pred_mix_l, pred_mix_u, mixed.y_mix_l, mixed.y_mix_u, target)

        total = l_sup_1 + l_sup_2 + l_cog + l_mix + lambda_u * l_unsup
        report = self.losses.total_loss(sup_1, sup_2, l_unsup.item(), l_cog.item(), l_mix.item(), lambda_u)
        return total, report, pseudo_labeler

    def train(self, config: TrainConfig) -> TrainingSummary:
        """Run config.iterations optimizer steps; writes the trace CSV and checkpoints"""
        configure_determinism(config.deterministic)
        if settings.TSS_NUM_THREADS > 0:
            torch.set_num_threads(settings.TSS_NUM_THREADS)

        manifest = self.io.load_manifest(config.manifest)
        toggles = self.ablation_switches(config)
        labeled, unlabeled = self.load_training_data(manifest)
        self._check_data(toggles, labeled, unlabeled)

        model = self.build_model(config, manifest.num_classes, toggles)
        optimizer = self.make_optimizer(model, config)
        rng = np.random.default_rng(config.seed)
        os.makedirs(config.checkpoint_dir, exist_ok=True)
        trace_path = config.resolved_trace_path()

        logger.info(
            f"Starting training: {config.iterations} iterations, toggles={toggles}, "
            f"patch={config.patch_size}, batch={config.batch_size}, seed={config.seed}"
        )
        self.monitor.reset_metrics()
        traces: List[IterationTrace] = []
        best_dice, best_path = -math.inf, None

        for t in range(config.iterations):
            start = time.perf_counter()
            forwards_before = self.monitor.count('forward')
            x_l, y_l, x_u = self.sample_batch(labeled, unlabeled, config, rng)

            model.train()
            optimizer.zero_grad(set_to_none=True)
            total, report, pseudo_labeler = self.compute_losses(model, x_l, y_l, x_u, t, config)
            if not report.is_finite() or not torch.isfinite(total):
                self._write_trace(traces, trace_path)
                self._dump_nonfinite(config, t, x_l, y_l, x_u, report)
            total.backward()
            optimizer.step()

            elapsed = self.monitor.track('iteration', start)
            wall_ms = 0.0 if config.deterministic else round(elapsed * 1000.0, 3)
            traces.append(IterationTrace(
                iteration=t,
                report=report,
                pseudo_labeler=pseudo_labeler,
                wall_ms=wall_ms,
                forward_passes=self.monitor.count('forward') - forwards_before,
            ))

            if t == 0 or (t + 1) % config.log_every == 0:
                logger.info(f"Iteration {t + 1}/{config.iterations} ({elapsed * 1000:.1f} ms): {report.to_dict()}")

            last = t + 1 == config.iterations
            if config.eval_every and (t + 1) % config.eval_every == 0:
                self.save_checkpoint(model, optimizer, config, manifest, t + 1, best_dice,
                                     os.path.join(config.checkpoint_dir, f'iter_{t + 1}.pt'))
            if manifest.val and ((config.eval_every and (t + 1) % config.eval_every == 0) or last):
                cases = self.evaluate_model(model, manifest, config.patch_size, split='val')
                dice = self.metrics.mean_foreground_dice(cases)
                logger.info(f"Validation Dice at iteration {t + 1}: {dice:.4f}")
                if dice > best_dice:
                    best_dice = dice
                    best_path = os.path.join(config.checkpoint_dir, 'best.pt')
                    self.save_checkpoint(model, optimizer, config, manifest, t + 1, best_dice, best_path)

        self._write_trace(traces, trace_path)
        final_path = os.path.join(config.checkpoint_dir, 'final.pt')
        best_val = best_dice if best_path else math.nan
        self.save_checkpoint(model, optimizer, config, manifest, config.iterations, best_val, final_path)

        stats = self.monitor.get_metrics()['stage_stats']
        logger.info(f"Training finished: {stats}")
        return TrainingSummary(
            final_checkpoint=final_path,
            trace_path=trace_path,
            iterations=config.iterations,
            best_checkpoint=best_path,
            best_val_dice=best_val,
            traces=traces,
        )

    # ------------------------------------------------------------ checkpoints

    def save_checkpoint(self, model: TextSemiSegNet, optimizer: torch.optim.Optimizer,
                        config: TrainConfig, manifest: DatasetManifest, iteration: int,
                        best_val_dice: float, path: str) -> None:
        checkpoint = {
            'iteration': iteration,
            'model_state_dict': model.state_dict(),
            'optimizer_state_dict': optimizer.state_dict(),
            'config': config.model_dump(),
            'num_classes': manifest.num_classes,
            'class_names': list(manifest.class_names),
            'best_val_dice': float(best_val_dice),
        }
        torch.save(checkpoint, path)
        logger.info(f"Checkpoint saved: {path}")

    def load_checkpoint(self, path: str, device: str = None) -> Tuple[TextSemiSegNet, TrainConfig, dict]:
        """Rebuild the model stored in a checkpoint archive"""
        if not os.path.isfile(path):
            raise ValidationError(f"Checkpoint not found: {path}")
        device = device or settings.TSS_DEVICE
        checkpoint = torch.load(path, map_location=device, weights_only=True)
        config = TrainConfig.from_mapping({**checkpoint['config'], 'device': device, 'class_embeddings': None},
                                          source=path)
        model = TextSemiSegNet(
            config.backbone_config(checkpoint['num_classes']),
            self.ablation_switches(config),
            text_dim=config.text_dim,
            attn_dim=config.attn_dim,
            num_context=config.num_context,
        )
        model.load_state_dict(checkpoint['model_state_dict'])
        model.to(device).eval()
        logger.info(f"Checkpoint loaded: {path} (iteration {checkpoint['iteration']})")
        return model, config, checkpoint

    # -------------------------------------------------------------- inference

    @torch.no_grad()
    def infer_volume(self, model: TextSemiSegNet, volume: Volume, patch_size: Sequence[int]) -> torch.Tensor:
        """Sliding-window K x H x W x D probabilities, averaged over both decoders.

        Stride is half the patch; overlapping windows are averaged and volumes smaller
        than the patch are zero padded.
        """
        model.eval()
        patch_size = self.validator.validate_dims(patch_size, 'patch size')
        device = next(model.parameters()).device
        dtype = next(model.parameters()).dtype

        voxels = torch.from_numpy(volume.voxels).to(device=device, dtype=dtype)
        shape = tuple(voxels.shape)
        padded_shape = tuple(max(n, p) for n, p in zip(shape, patch_size))
        if padded_shape != shape:
            padded = voxels.new_zeros(padded_shape)
            padded[:shape[0], :shape[1], :shape[2]] = voxels
            voxels = padded

        num_classes = model.config.num_classes
        probs = voxels.new_zeros((num_classes,) + padded_shape)
        counts = voxels.new_zeros(padded_shape)
        for corner in self._window_corners(padded_shape, patch_size):
            window = tuple(slice(c, c + p) for c, p in zip(corner, patch_size))
            x = voxels[window].unsqueeze(0).unsqueeze(0)
            prediction = self._forward(model, x).prediction
            probs[(slice(None),) + window] += 0.5 * (prediction.y_hat_1[0] + prediction.y_hat_2[0])
            counts[window] += 1.0

        probs = probs / counts.unsqueeze(0)
        return probs[:, :shape[0], :shape[1], :shape[2]]

    def infer(self, checkpoint_path: str, volume_path: str, out_path: str) -> LabelMap:
        """Binarized prediction for one volume, written with the volume's spacing"""
        model, config, _ = self.load_checkpoint(checkpoint_path)
        volume = self.io.load_volume(volume_path)
        probs = self.infer_volume(model, volume, config.patch_size)
        labels = self.augmentation.binarize(probs).cpu().numpy().astype(np.uint8)
        label_map = LabelMap(labels, model.config.num_classes)
        self.io.save_label_map(label_map, out_path, volume.spacing)
        logger.info(f"Prediction for {volume_path} written to {out_path}")
        return label_map

    # ------------------------------------------------------------- evaluation

    def evaluate_with_predictor(self, predictor: Callable[[Volume], torch.Tensor],
                                manifest: DatasetManifest, split: str = 'test') -> List[CaseEvaluation]:
        """Score any volume -> K x H x W x D probability function on a manifest split"""
        pairs = getattr(manifest, split)
        if not pairs:
            raise ValidationError(f"Manifest has no '{split}' cases")
        start = time.perf_counter()
        cases = []
        for vol_rel, lbl_rel in pairs:
            volume, label_map = self.io.load_pair(manifest, (vol_rel, lbl_rel))
            probs = predictor(volume)
            cases.append(self.metrics.evaluate_case(
                probs, label_map.labels, volume.spacing, case_id=vol_rel, class_names=manifest.class_names
            ))
        self.monitor.track('evaluation', start)
        return cases

    def evaluate_model(self, model: TextSemiSegNet, manifest: DatasetManifest,
                       patch_size: Sequence[int], split: str = 'test') -> List[CaseEvaluation]:
        return self.evaluate_with_predictor(
            lambda volume: self.infer_volume(model, volume, patch_size), manifest, split
        )

    def evaluate(self, checkpoint_path: str, manifest_path: str = None,
                 out_csv: str = None, split: str = 'test') -> pd.DataFrame:
        """Per-case plus mean/std metrics of a checkpoint on a manifest split"""
        model, config, _ = self.load_checkpoint(checkpoint_path)
        manifest = self.io.load_manifest(manifest_path or config.manifest)
        cases = self.evaluate_model(model, manifest, config.patch_size, split)
        frame = self.metrics.write_csv(cases, out_csv) if out_csv else self.metrics.to_frame(cases)
        logger.info(
            f"Evaluated {len(cases)} {split} cases: mean foreground Dice "
            f"{self.metrics.mean_foreground_dice(cases):.4f}"
        )
        return frame

    # ---------------------------------------------------------------- helpers

    def _forward(self, model: TextSemiSegNet, x: torch.Tensor) -> ForwardOutput:
        start = time.perf_counter()
        output = model(x)
        self.monitor.track('forward', start)
        return output

    @staticmethod
    def _window_corners(shape: Sequence[int], patch_size: Sequence[int]):
        axes = []
        for n, p in zip(shape, patch_size):
            stride = max(p // 2, 1)
            starts = list(range(0, n - p + 1, stride))
            if starts[-1] != n - p:
                starts.append(n - p)
            axes.append(starts)
        for i in axes[0]:
            for j in axes[1]:
                for k in axes[2]:
                    yield i, j, k

    @staticmethod
    def _check_data(toggles: ModuleToggles, labeled: Sequence[LabeledCase],
                    unlabeled: Sequence[Volume]) -> None:
        if not labeled:
            raise ConfigError("Manifest has no labeled cases")
        if not unlabeled and (toggles.dca or toggles.unsup):
            raise ConfigError("dca and unsup need unlabeled volumes; set dca=off and unsup=off")

    @staticmethod
    def _write_trace(traces: Sequence[IterationTrace], path: str) -> None:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        frame = pd.DataFrame([trace.to_row() for trace in traces], columns=TRACE_COLUMNS)
        frame.to_csv(path, index=False)
        logger.info(f"Trace with {len(frame)} rows written to {path}")

    @staticmethod
    def _dump_nonfinite(config: TrainConfig, iteration: int, x_l: torch.Tensor, y_l: torch.Tensor,
                        x_u: Optional[torch.Tensor], report: LossReport) -> None:
        path = os.path.join(config.checkpoint_dir, f'nonfinite_batch_{iteration}.pt')
        torch.save({
            'iteration': iteration,
            'x_l': x_l.detach().cpu(),
            'y_l': y_l.detach().cpu(),
            'x_u': None if x_u is None else x_u.detach().cpu(),
            'report': report.to_dict(),
        }, path)
        logger.error(f"Non-finite loss at iteration {iteration}: {report.to_dict()}; batch dumped to {path}")
        raise NonFiniteLossError(f"Non-finite loss at iteration {iteration}; offending batch saved to {path}")
