"""
DRACO - Training Loop.

AdamW, per-step cosine-annealed learning rate, global-norm gradient
clipping, periodic validation (mean trans / rot error) and best-by-
validation checkpointing. Everything is seeded from ``schedule.seed``.

Run directory:
    <out>/metrics.jsonl   step and validation records, no timestamps
    <out>/run.log         human log with wall-clock timestamps
    <out>/config.json     resolved config + hash
    <out>/best/           best-by-validation checkpoint
    <out>/final/          weights after the last step
    <out>/last.pt         resumable state, written every epoch
    <out>/abort.json      diagnostics of a non-finite-loss abort

Usage:
    cfg = load_config('train', Path('train.yaml'))
    result = train(cfg, emitter=emitter)
    print(result.best)
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

from ..config import (
    KTMode,
    Modality,
    ModelConfig,
    TrainConfig,
    TrainSchedule,
    canonical_json,
    file_sha256,
    to_plain,
    tree_sha256,
    write_resolved_config,
)
from ..errors import ConfigError, DataError
from ..evaluation.metrics import pose_errors
from ..events import EventEmitter
from ..network import (
    DracoNet,
    ExpertOutput,
    checkpoint_hash,
    count_parameters,
    freeze,
    load_checkpoint,
    save_checkpoint,
    teacher_forward,
)
from ..synth import read_dataset, read_plains, split_by_finger
from ..synth.dataset import MANIFEST
from .data import SampleDataset, SynthesisDataset, make_loader
from .losses import LossBreakdown, NonFiniteLoss, compute_losses

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
RUN_LOG = "run.log"
STATE_FILE = "last.pt"
ABORT_FILE = "abort.json"


class ResumeMismatch(ConfigError):
    """Saved training state was produced by a different config."""
    pass


def cosine_lr(step: int, total_steps: int, lr_start: float, lr_end: float) -> float:
    """lr_start at step 0, lr_end at step total_steps - 1."""
    if total_steps <= 1:
        return lr_start
    progress = min(max(step, 0), total_steps - 1) / (total_steps - 1)
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + math.cos(math.pi * progress))


def resume_hash(cfg: TrainConfig) -> str:
    """Config hash with the resume switch itself left out."""
    plain = to_plain(cfg)
    plain.pop('resume', None)
    return hashlib.sha256(canonical_json(plain).encode('utf-8')).hexdigest()


# =========================================================================
# Model and data construction
# =========================================================================

def build_model(config: ModelConfig, seed: int) -> DracoNet:
    """Seeded construction so two runs start from the same weights."""
    torch.manual_seed(seed)
    return DracoNet(config)


def load_teacher(path: str, student: ModelConfig) -> DracoNet:
    teacher, _ = load_checkpoint(Path(path), expected_codec=student.codec)
    if teacher.modality != Modality.PLAIN:
        raise ConfigError(f"teacher checkpoint {path} is a {teacher.modality.value} model")
    if teacher.config.teacher_size != student.teacher_size:
        raise ConfigError(
            f"teacher input size {teacher.config.teacher_size} != model.teacher_size "
            f"{student.teacher_size}"
        )
    if teacher.feature_dim != student.teacher_dim:
        raise ConfigError(
            f"teacher feature width {teacher.feature_dim} != model.teacher_dim {student.teacher_dim}"
        )
    return freeze(teacher)


def needs_plain_view(cfg: TrainConfig) -> bool:
    return cfg.model.modality == Modality.PLAIN or cfg.loss.kt_mode != KTMode.OFF


def build_datasets(cfg: TrainConfig) -> Tuple[Dataset, Optional[Dataset], Dict[str, Any]]:
    """
    Finger-disjoint (train, val) datasets plus input provenance.

    A written dataset is split by finger; a plain-fingerprint directory
    gives an on-the-fly SynthesisDataset for training and a fixed
    synthesized validation set from the held-out fingers.
    """
    need_plain = needs_plain_view(cfg)
    sched = cfg.schedule
    data = cfg.data

    if data.dataset:
        root = Path(data.dataset)
        samples = read_dataset(root, load_plain=need_plain)
        if not samples:
            raise DataError(f"dataset {root} has no samples")
        train_samples, val_samples = split_by_finger(samples, sched.val_fraction, sched.seed)
        provenance = {'dataset': str(root), 'manifest_sha256': file_sha256(root / MANIFEST)}
        val_set = SampleDataset(val_samples, need_plain) if val_samples else None
        return SampleDataset(train_samples, need_plain), val_set, provenance

    root = Path(data.plains)
    plains = read_plains(root)
    train_plains, val_plains = split_by_finger(plains, sched.val_fraction, sched.seed)
    common = dict(
        rot_range=sched.rot_range,
        trans_range=sched.trans_range,
        patch_size=cfg.model.patch_size,
        cap_grid=cfg.model.cap_grid,
        fg_threshold=data.fg_threshold,
        max_retries=data.max_retries,
        teacher_size=cfg.model.teacher_size if need_plain else None,
    )
    train_set = SynthesisDataset(
        train_plains, samples_per_epoch=data.samples_per_epoch, seed=sched.seed, **common
    )
    val_set = None
    if val_plains:
        n_val = max(len(val_plains), int(round(data.samples_per_epoch * sched.val_fraction)))
        val_set = SynthesisDataset(val_plains, samples_per_epoch=n_val, seed=sched.seed + 1, **common)
    provenance = {'plains': str(root), 'plains_sha256': tree_sha256(root)}
    return train_set, val_set, provenance


def forward_batch(model: DracoNet, batch: Dict[str, Any], device: str = "cpu") -> ExpertOutput:
    """Route the batch tensors the model's modality consumes."""
    modality = model.modality
    if modality == Modality.PLAIN:
        return model(batch['plain'].to(device))
    if modality == Modality.FP:
        return model(batch['patch'].to(device))
    if modality == Modality.CAP:
        return model(cap=batch['cap'].to(device))
    return model(batch['patch'].to(device), batch['cap'].to(device))


# =========================================================================
# Trainer
# =========================================================================

@dataclass
class TrainResult:
    out_dir: Path
    best_dir: Path
    final_dir: Path
    steps: int
    epochs: int
    best: Optional[Dict[str, float]] = None
    last_losses: Dict[str, float] = field(default_factory=dict)
    config_hash: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'out_dir': str(self.out_dir),
            'best_dir': str(self.best_dir),
            'final_dir': str(self.final_dir),
            'steps': self.steps,
            'epochs': self.epochs,
            'best': self.best,
            'last_losses': self.last_losses,
            'config_hash': self.config_hash,
        }


class Trainer:
    """
    One optimization run over a model.

    The trainer owns the model for the duration of ``run()``; metric
    records go to ``metrics.jsonl`` in order, one writer.
    """

    def __init__(
        self,
        cfg: TrainConfig,
        model: DracoNet,
        train_set: Dataset,
        val_set: Optional[Dataset] = None,
        teacher: Optional[DracoNet] = None,
        emitter: Optional[EventEmitter] = None,
        command: str = "train",
        provenance: Optional[Dict[str, Any]] = None,
    ):
        self.cfg = cfg
        self.schedule: TrainSchedule = cfg.schedule
        self.device = cfg.device
        self.model = model.to(self.device)
        self.teacher = teacher.to(self.device) if teacher is not None else None
        self.train_set = train_set
        # no held-out fingers: validate on the training data
        self.val_set = val_set if val_set is not None and len(val_set) > 0 else train_set
        self.emitter = emitter or EventEmitter()
        self.command = command
        self.provenance = dict(provenance or {})
        self.out_dir = Path(cfg.out)
        self.config_hash = resume_hash(cfg)

        if cfg.loss.kt_mode != KTMode.OFF and self.teacher is None:
            raise ConfigError(f"kt_mode '{cfg.loss.kt_mode.value}' needs a teacher model")

        self.optimizer = torch.optim.AdamW(
            [p for p in self.model.parameters() if p.requires_grad],
            lr=self.schedule.lr_start,
            weight_decay=self.schedule.weight_decay,
        )
        self.step = 0
        self.start_epoch = 0
        self.best: Optional[Dict[str, float]] = None
        self._metrics = None
        self._run_log: Optional[logging.Logger] = None
        self._log_handler: Optional[logging.Handler] = None

    # -------------------------------------------------------------------------
    # Schedule
    # -------------------------------------------------------------------------

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.train_set) / self.schedule.batch_size) if len(self.train_set) else 0

    @property
    def total_steps(self) -> int:
        total = self.schedule.epochs * self.steps_per_epoch
        if self.schedule.max_steps is not None:
            total = min(total, self.schedule.max_steps)
        return total

    def lr_at(self, step: int) -> float:
        return cosine_lr(step, self.total_steps, self.schedule.lr_start, self.schedule.lr_end)

    # -------------------------------------------------------------------------
    # Steps
    # -------------------------------------------------------------------------

    def losses_for(self, batch: Dict[str, Any]) -> LossBreakdown:
        out = forward_batch(self.model, batch, self.device)
        targets = self.model.codec.targets(
            batch['pose'].to(self.device), self.cfg.loss.sigma_pos, self.cfg.loss.sigma_trig
        )
        t_feat = t_dists = None
        if self.teacher is not None and self.cfg.loss.kt_mode != KTMode.OFF:
            t_feat, t_dists = teacher_forward(self.teacher, batch['plain'].to(self.device))
        return compute_losses(out, targets, self.cfg.loss, t_feat, t_dists)

    def train_step(self, batch: Dict[str, Any]) -> LossBreakdown:
        lr = self.lr_at(self.step)
        for group in self.optimizer.param_groups:
            group['lr'] = lr

        self.model.train()
        losses = self.losses_for(batch)
        if not losses.is_finite():
            self._abort(losses, batch)

        self.optimizer.zero_grad(set_to_none=True)
        losses.total.backward()
        if self.schedule.grad_clip and self.schedule.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.schedule.grad_clip)
        self.optimizer.step()
        return losses

    def _abort(self, losses: LossBreakdown, batch: Dict[str, Any]) -> None:
        diagnostics = {
            'step': self.step,
            'lr': self.lr_at(self.step),
            'losses': {k: (v if math.isfinite(v) else str(v)) for k, v in losses.to_dict().items()},
            'sample_ids': list(batch.get('id', [])),
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / ABORT_FILE).write_text(
            json.dumps(diagnostics, indent=2, sort_keys=True) + "\n", encoding='utf-8'
        )
        reason = f"non-finite loss at step {self.step}"
        self._log(logging.ERROR, f"{reason}: {diagnostics['losses']}")
        self.emitter.run_aborted(self.command, reason, **diagnostics)
        raise NonFiniteLoss(f"{reason} (diagnostics in {self.out_dir / ABORT_FILE})")

    def evaluate(self, dataset: Optional[Dataset] = None) -> Dict[str, float]:
        """Mean translation / rotation error of the final distributions."""
        dataset = dataset if dataset is not None else self.val_set
        self.model.eval()
        trans, rot = [], []
        loader = make_loader(dataset, self.schedule.batch_size, shuffle=False, seed=0)
        with torch.no_grad():
            for batch in loader:
                out = forward_batch(self.model, batch, self.device)
                pred = self.model.codec.decode(out.final, self.cfg.loss.decode_mode)
                t, r = pose_errors(pred.cpu().double().numpy(), batch['pose'].double().numpy())
                trans.append(t)
                rot.append(r)
        trans_all, rot_all = np.concatenate(trans), np.concatenate(rot)
        return {'trans_err': float(trans_all.mean()), 'rot_err': float(rot_all.mean())}

    # -------------------------------------------------------------------------
    # Files
    # -------------------------------------------------------------------------

    def _open_logs(self, append: bool) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        mode = 'a' if append else 'w'
        self._metrics = open(self.out_dir / METRICS_FILE, mode, encoding='utf-8')

        self._run_log = logging.getLogger(f"draco.run.{id(self)}")
        self._run_log.setLevel(logging.INFO)
        self._run_log.propagate = False
        self._log_handler = logging.FileHandler(self.out_dir / RUN_LOG, mode=mode, encoding='utf-8')
        self._log_handler.setFormatter(
            logging.Formatter('%(asctime)s [%(levelname)s] %(message)s')
        )
        self._run_log.addHandler(self._log_handler)

    def _close_logs(self) -> None:
        if getattr(self, '_metrics', None) is not None:
            self._metrics.close()
            self._metrics = None
        if self._run_log is not None and self._log_handler is not None:
            self._run_log.removeHandler(self._log_handler)
            self._log_handler.close()
        self._run_log = None
        self._log_handler = None

    def _log(self, level: int, message: str) -> None:
        logger.log(level, message)
        if self._run_log is not None:
            self._run_log.log(level, message)

    def _record(self, record: Dict[str, Any]) -> None:
        self._metrics.write(json.dumps(record, sort_keys=True) + "\n")
        self._metrics.flush()

    def _checkpoint_provenance(self, epoch: int) -> Dict[str, Any]:
        return {
            **self.provenance,
            'command': self.command,
            'seed': self.schedule.seed,
            'epoch': epoch,
            'step': self.step,
            'epochs': self.schedule.epochs,
            'config_hash': self.config_hash,
        }

    def save_state(self, epoch: int) -> None:
        state = {
            'model': self.model.state_dict(),
            'optimizer': self.optimizer.state_dict(),
            'step': self.step,
            'epoch': epoch,
            'config_hash': self.config_hash,
            'best': self.best or {},
        }
        torch.save(state, self.out_dir / STATE_FILE)

    def try_resume(self) -> bool:
        path = self.out_dir / STATE_FILE
        if not path.exists():
            logger.warning(f"resume requested but {path} does not exist; starting fresh")
            return False
        state = torch.load(path, map_location=self.device, weights_only=True)
        if state['config_hash'] != self.config_hash:
            raise ResumeMismatch(
                f"{path} was written by config {state['config_hash'][:12]}, "
                f"current config is {self.config_hash[:12]}"
            )
        self.model.load_state_dict(state['model'])
        self.optimizer.load_state_dict(state['optimizer'])
        self.step = int(state['step'])
        self.start_epoch = int(state['epoch']) + 1
        self.best = dict(state['best']) or None
        logger.debug(f"resumed at step {self.step}, epoch {self.start_epoch}")
        return True

    # -------------------------------------------------------------------------
    # Run
    # -------------------------------------------------------------------------

    def run(self) -> TrainResult:
        resumed = self.cfg.resume and self.try_resume()
        self._open_logs(append=resumed)
        write_resolved_config(self.cfg, 'train', self.out_dir / "config.json")

        sched = self.schedule
        best_dir = self.out_dir / "best"
        final_dir = self.out_dir / "final"
        last_losses: Dict[str, float] = {}
        epoch = self.start_epoch - 1

        self.emitter.run_started(
            self.command,
            total_steps=self.total_steps,
            epochs=sched.epochs,
            parameters=count_parameters(self.model),
            out_dir=str(self.out_dir),
        )
        self._log(logging.INFO, f"{self.command}: {self.total_steps} steps, "
                                f"{len(self.train_set)} samples per epoch, config {self.config_hash[:12]}")
        try:
            for epoch in range(self.start_epoch, sched.epochs):
                if self.step >= self.total_steps:
                    break
                self.emitter.epoch_started(epoch, sched.epochs)
                self.train_set.set_epoch(epoch)
                loader = make_loader(self.train_set, sched.batch_size, shuffle=True,
                                     seed=sched.seed, epoch=epoch)
                for batch in loader:
                    if self.step >= self.total_steps:
                        break
                    lr = self.lr_at(self.step)
                    losses = self.train_step(batch)
                    last_losses = losses.to_dict()
                    if self.step % sched.log_every == 0 or self.step == self.total_steps - 1:
                        self._record({'kind': 'step', 'step': self.step, 'epoch': epoch,
                                      'lr': lr, **last_losses})
                    self.emitter.step_complete(self.step, epoch, lr, last_losses)
                    self.step += 1

                last_epoch = epoch == sched.epochs - 1 or self.step >= self.total_steps
                if (epoch + 1) % sched.val_every == 0 or last_epoch:
                    self._validate(epoch, best_dir)
                self.save_state(epoch)
        except BaseException:
            self._close_logs()
            raise

        save_checkpoint(self.model, final_dir, self._checkpoint_provenance(epoch))
        self.emitter.checkpoint_saved(str(final_dir), self.step, "final")
        if self.best is None:
            # nothing validated (zero epochs): the final weights are the best known
            save_checkpoint(self.model, best_dir, self._checkpoint_provenance(epoch))
            self.emitter.checkpoint_saved(str(best_dir), self.step, "best")

        result = TrainResult(
            out_dir=self.out_dir,
            best_dir=best_dir,
            final_dir=final_dir,
            steps=self.step,
            epochs=sched.epochs,
            best=self.best,
            last_losses=last_losses,
            config_hash=self.config_hash,
        )
        self._log(logging.INFO, f"{self.command} complete after {self.step} steps, best {self.best}")
        self._close_logs()
        self.emitter.run_complete(self.command, **result.to_dict())
        return result

    def _validate(self, epoch: int, best_dir: Path) -> None:
        metrics = self.evaluate()
        score = metrics['trans_err'] + metrics['rot_err']
        is_best = self.best is None or score < self.best['trans_err'] + self.best['rot_err']
        self._record({'kind': 'val', 'step': self.step, 'epoch': epoch, **metrics})
        self._log(logging.INFO, f"epoch {epoch + 1}: trans {metrics['trans_err']:.3f} px, "
                                f"rot {metrics['rot_err']:.3f} deg{' (best)' if is_best else ''}")
        self.emitter.validation_complete(
            self.step, epoch, metrics['trans_err'], metrics['rot_err'], is_best
        )
        if is_best:
            self.best = {**metrics, 'epoch': epoch, 'step': self.step}
            save_checkpoint(self.model, best_dir, self._checkpoint_provenance(epoch))
            self.emitter.checkpoint_saved(str(best_dir), self.step, "best")


# =========================================================================
# Entry points
# =========================================================================

def _run(cfg: TrainConfig, command: str, model: DracoNet, emitter: Optional[EventEmitter],
         provenance: Optional[Dict[str, Any]] = None) -> TrainResult:
    train_set, val_set, data_provenance = build_datasets(cfg)
    teacher = None
    if cfg.loss.kt_mode != KTMode.OFF:
        teacher = load_teacher(cfg.teacher_checkpoint, cfg.model)
        data_provenance['teacher_sha256'] = checkpoint_hash(Path(cfg.teacher_checkpoint))
    trainer = Trainer(
        cfg, model, train_set, val_set,
        teacher=teacher,
        emitter=emitter,
        command=command,
        provenance={**data_provenance, **(provenance or {})},
    )
    return trainer.run()


def train(cfg: TrainConfig, emitter: Optional[EventEmitter] = None) -> TrainResult:
    """Train a student (or single-modal) model from scratch."""
    cfg.validate()
    model = build_model(cfg.model, cfg.schedule.seed)
    return _run(cfg, "train", model, emitter)


def finetune(cfg: TrainConfig, emitter: Optional[EventEmitter] = None) -> TrainResult:
    """Continue from ``init_checkpoint`` with every weight trainable."""
    cfg.validate()
    if not cfg.init_checkpoint:
        raise ConfigError("finetune needs init_checkpoint")
    parent = Path(cfg.init_checkpoint)
    torch.manual_seed(cfg.schedule.seed)
    model, meta = load_checkpoint(parent, expected_codec=cfg.model.codec)
    if to_plain(model.config) != to_plain(cfg.model):
        logger.debug("model section replaced by the checkpoint layout")
        cfg.model = model.config
    for p in model.parameters():
        p.requires_grad_(True)
    provenance = {
        'parent_checkpoint': str(parent),
        'parent_sha256': checkpoint_hash(parent),
        'parent_config_hash': meta.get('provenance', {}).get('config_hash'),
    }
    return _run(cfg, "finetune", model, emitter, provenance)


def train_teacher(cfg: TrainConfig, emitter: Optional[EventEmitter] = None) -> TrainResult:
    """Full-fingerprint pretraining on plain views; only the P expert and final set."""
    cfg.model.modality = Modality.PLAIN
    cfg.loss.kt_mode = KTMode.OFF
    cfg.validate()
    model = build_model(cfg.model, cfg.schedule.seed)
    return _run(cfg, "teacher", model, emitter)
